import numpy as np
import pytest

from langevin_lab.exceptions import Diverged
from langevin_lab.objective import ObjectiveSpec, flat, squared_norm
from langevin_lab.sde_sim import (BLOCK_SIZE, InitialLaw, LangevinSampler, SimConfig,
                                  euler_maruyama_step, exact_gradient_oracle,
                                  gaussian_noise_oracle, langevin_oracle, minibatch_oracle,
                                  simulate_ensemble, simulate_sgd)


class TestStep:
    def test_gradient_descent_step(self):
        out = euler_maruyama_step(squared_norm(1), np.array([1.0]), 0.1, 0.0, np.array([0.7]))
        np.testing.assert_allclose(out, [0.8], rtol=1e-15)

    def test_pure_diffusion(self):
        out = euler_maruyama_step(flat(2), np.zeros(2), 1.0, 0.5, np.array([1.0, 0.0]))
        np.testing.assert_array_equal(out, [1.0, 0.0])

    def test_frozen_update(self):
        out = euler_maruyama_step(squared_norm(1), np.array([1.0]), 0.01, 0.1, np.array([0.3]))
        np.testing.assert_allclose(out, [0.9934164078649987], rtol=1e-15)

    def test_non_finite_raises(self):
        with pytest.raises(Diverged):
            euler_maruyama_step(squared_norm(1), np.array([np.inf]), 0.1, 0.0, np.zeros(1))


class TestEnsemble:
    def test_gradient_flow(self):
        cfg = SimConfig(0.0, 1e-3, 1.0, n_paths=1)
        snaps = simulate_ensemble(squared_norm(1), InitialLaw.point([1.0]), cfg)
        assert abs(snaps[-1].positions[0, 0] - np.exp(-2.0)) < 1e-3
        # matches the explicit recursion exactly
        assert snaps[-1].positions[0, 0] == pytest.approx((1 - 2e-3) ** 1000, rel=1e-13)

    def test_sigma_zero_matches_deterministic_loop_exactly(self):
        obj = squared_norm(2, scale=0.7)
        cfg = SimConfig(0.0, 0.01, 0.5, n_paths=3)
        snaps = simulate_ensemble(obj, InitialLaw.empirical([[1, 2], [0, -1], [3, 3]]), cfg)
        w = np.array([[1.0, 2], [0, -1], [3, 3]])
        for _ in range(50):
            w = w - 0.01 * obj.gradient(w)
        np.testing.assert_array_equal(snaps[-1].positions, w)

    def test_brownian_variance(self):
        cfg = SimConfig(1.0, 0.05, 1.0, n_paths=100_000, seed=11)
        x = simulate_ensemble(flat(1), InitialLaw.point([0.0]), cfg)[-1].positions[:, 0]
        n = x.size
        var = x.var(ddof=1)
        # stderr of the sample variance of a Gaussian is var*sqrt(2/(n-1))
        assert abs(var - 2.0) <= 3 * 2.0 * np.sqrt(2 / (n - 1))

    def test_single_step(self, rng):
        obj = squared_norm(2)
        cfg = SimConfig(0.3, 0.1, 0.1, n_paths=5, seed=4)
        start = rng.standard_normal((5, 2))
        snaps = simulate_ensemble(obj, InitialLaw.empirical(start), cfg)
        from langevin_lab.sde_sim import block_rng
        z = block_rng(4, 0).standard_normal((5, 2))
        np.testing.assert_allclose(snaps[-1].positions,
                                   euler_maruyama_step(obj, start, 0.1, 0.3, z), rtol=1e-15)

    def test_deterministic_across_threads(self):
        obj = squared_norm(2)
        cfg = SimConfig(0.5, 0.01, 0.2, n_paths=2 * BLOCK_SIZE + 17, seed=9,
                        record_times=(0.0, 0.1, 0.2))
        init = InitialLaw.gaussian([0.0, 1.0], 0.5)
        a = simulate_ensemble(obj, init, cfg, n_jobs=1)
        b = simulate_ensemble(obj, init, cfg, n_jobs=3)
        c = simulate_ensemble(obj, init, cfg, n_jobs=1)
        for x, y, z in zip(a, b, c):
            np.testing.assert_array_equal(x.positions, y.positions)
            np.testing.assert_array_equal(x.positions, z.positions)
            np.testing.assert_array_equal(x.sup_norm_so_far, y.sup_norm_so_far)

    def test_record_times_snap(self):
        cfg = SimConfig(0.1, 0.03, 0.3, record_times=(0.0, 0.1, 0.3))
        snaps = simulate_ensemble(squared_norm(1), InitialLaw.point([1.0]), cfg)
        assert [s.step for s in snaps] == [0, 3, 10]
        assert snaps[1].t == pytest.approx(0.09)

    def test_sup_norm_against_stored_paths(self):
        obj = squared_norm(2, scale=0.5)
        dt, n_steps, n = 0.01, 60, 7
        cfg = SimConfig(0.8, dt, dt * n_steps, n_paths=n, seed=21,
                        record_times=tuple(dt * np.arange(n_steps + 1)))
        snaps = simulate_ensemble(obj, InitialLaw.point([0.3, -0.2]), cfg)
        norms = np.stack([np.linalg.norm(s.positions, axis=1) for s in snaps])
        np.testing.assert_allclose(snaps[-1].sup_norm_so_far, norms.max(axis=0), rtol=1e-15)
        assert len(snaps) == n_steps + 1

    def test_ou_weak_order(self):
        a, sigma, w0, t = 1.5, 0.4, 1.0, 0.5
        obj = squared_norm(1, scale=a)
        dt, n = 1e-3, 100_000
        cfg = SimConfig(sigma, dt, t, n_paths=n, seed=5)
        x = simulate_ensemble(obj, InitialLaw.point([w0]), cfg)[-1].positions[:, 0]
        mean = w0 * np.exp(-2 * a * t)
        var = sigma / (2 * a) * (1 - np.exp(-4 * a * t))
        assert abs(x.mean() - mean) <= 3 * np.sqrt(var / n) + 5 * dt
        assert abs(x.var(ddof=1) - var) <= 3 * var * np.sqrt(2 / (n - 1)) + 5 * dt

    def test_divergence_reports_path_and_partial_snapshots(self):
        obj = squared_norm(1)
        cfg = SimConfig(0.0, 1.5, 150.0, n_paths=2, record_times=(0.0, 150.0))
        with pytest.raises(Diverged) as info:
            simulate_ensemble(obj, InitialLaw.empirical([[0.0], [1.0]]), cfg)
        err = info.value
        assert err.path_index == 1
        assert err.snapshots[0].t == 0.0 and not err.snapshots[0].diverged
        assert err.snapshots[-1].diverged

    def test_initial_laws(self, rng):
        from langevin_lab.sde_sim import block_rng
        r = block_rng(0, 0)
        box = InitialLaw.uniform_box([-1, 2], [1, 3]).sample(r, 1000)
        assert np.all((box >= [-1, 2]) & (box <= [1, 3]))
        dens = InitialLaw.custom_density([0.0, 1.0, 2.0], [0, 1, 0], 0.5).sample(r, 500)
        assert np.all(np.abs(dens - 1.0) <= 0.25)
        with pytest.raises(ValueError):
            InitialLaw.gaussian([0.0], 0.0)


class TestSGD:
    def test_gradient_descent_iterates(self):
        it = simulate_sgd(exact_gradient_oracle(squared_norm(1)), [1.0], 0.25, 5)
        np.testing.assert_allclose(np.ravel(it), 0.5 ** np.arange(6), rtol=1e-15)

    def test_langevin_oracle_matches_ensemble(self):
        obj = squared_norm(3, scale=0.8)
        eta, k = 0.01, 200
        it = simulate_sgd(langevin_oracle(obj, eta, 1.0), [1.0, -0.5, 0.2], eta, k, seed=17)
        cfg = SimConfig(1.0, eta, eta * k, n_paths=1, seed=17,
                        record_times=tuple(eta * np.arange(k + 1)))
        snaps = simulate_ensemble(obj, InitialLaw.point([1.0, -0.5, 0.2]), cfg)
        traj = np.stack([s.positions[0] for s in snaps])
        np.testing.assert_allclose(np.stack(it), traj, rtol=0, atol=1e-12)

    def test_full_minibatch_is_gradient_descent(self, rng):
        X = rng.standard_normal((4, 2))
        y = rng.standard_normal(4)

        def per_sample(w, idx):
            r = X[idx] @ w - y[idx]
            return 2 * X[idx].T @ r / len(idx)

        mb = simulate_sgd(minibatch_oracle(per_sample, 4, 4), np.zeros(2), 0.05, 30, seed=3)
        gd = simulate_sgd(lambda w, k, r: per_sample(w, np.arange(4)), np.zeros(2), 0.05, 30)
        np.testing.assert_array_equal(np.stack(mb), np.stack(gd))

    def test_noise_oracle_variance(self):
        obj = flat(4)
        oracle = gaussian_noise_oracle(obj, 2.0)
        from langevin_lab.sde_sim import block_rng
        r = block_rng(0, 0)
        xi = np.stack([oracle(np.zeros(4), k, r) for k in range(20_000)])
        sq = np.sum(xi ** 2, axis=1)
        assert abs(sq.mean() - 2.0) <= 3 * sq.std() / np.sqrt(sq.size)

    def test_divergence(self):
        with pytest.raises(Diverged):
            simulate_sgd(exact_gradient_oracle(squared_norm(1)), [1.0], 5.0, 100)


class TestSampler:
    def test_fit_transform(self):
        s = LangevinSampler(squared_norm(2), sigma=0.0, dt=0.01, t_final=0.5)
        out = s.fit_transform(np.ones((3, 2)))
        np.testing.assert_allclose(out, (1 - 0.02) ** 50 * np.ones((3, 2)), rtol=1e-13)
        np.testing.assert_allclose(s.transform(np.ones((1, 2))), out[:1])
        assert s.get_params()["sigma"] == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            LangevinSampler(squared_norm(2)).fit(np.ones((3, 3)))


def test_bad_objective_strict_mode():
    neg = ObjectiveSpec(1, lambda w: -np.sum(w * w, -1), lambda w: -2 * w,
                        lambda w: np.full(np.shape(w)[:-1], -2.0), 0.0)
    with pytest.raises(AssertionError):
        neg.value(np.array([1.0]))
