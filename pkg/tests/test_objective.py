import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from langevin_lab.exceptions import NoAdmissibleSamples, NoProjection, ZeroMatrix
from langevin_lab.objective import (ObjectiveSpec, PLCertificate, QuadraticLoss,
                                    distance_to_minimizers, estimate_pl_constant, flat,
                                    quadratic_pl_constants, quartic_well, squared_norm,
                                    verify_assumption1)
from langevin_lab.regions import Ball, Box


def _fd_gradient(f, w, h):
    g = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def _fd_hessian_trace(f, w, h):
    tr = 0.0
    f0 = f(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        tr += (f(w + e) - 2 * f0 + f(w - e)) / h ** 2
    return tr


SHIPPED = [
    squared_norm(3, scale=0.7),
    QuadraticLoss(np.array([[1.0, 2.0, 0.5, 0.0], [0.0, 1.0, -1.0, 3.0]]), w_star=[1, 0, -1, 2]),
    flat(2),
    quartic_well(2, scale=0.3),
]


@pytest.mark.parametrize("obj", SHIPPED, ids=lambda o: o.name)
def test_gradient_matches_finite_differences(obj):
    rng = np.random.default_rng(0)
    for _ in range(100):
        w = rng.uniform(-2, 2, obj.dim)
        h = 1e-5 * (1 + np.linalg.norm(w))
        g = obj.gradient(w)
        fd = _fd_gradient(obj.value, w, h)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(g))


@pytest.mark.parametrize("obj", SHIPPED, ids=lambda o: o.name)
def test_laplacian_matches_hessian_trace(obj):
    rng = np.random.default_rng(1)
    for _ in range(100):
        w = rng.uniform(-2, 2, obj.dim)
        lap = obj.laplacian(w)
        fd = _fd_hessian_trace(obj.value, w, 1e-3)
        assert abs(lap - fd) <= 1e-4 * (1 + abs(lap))


def test_quadratic_loss_invariants():
    A = np.array([[1.0, 0.0, 2.0], [0.0, 3.0, 0.0]])
    q = QuadraticLoss(A, w_star=[1.0, -1.0, 0.5])
    w = np.array([0.3, 0.2, -0.4])
    r = A @ (w - q.w_star)
    assert q.value(w) == pytest.approx(r @ r)
    assert q.laplacian(w) == pytest.approx(2 * np.sum(A ** 2))
    # minimizer set is w_star + Ker(A)
    kernel = np.array([-2.0, 0.0, 1.0])
    assert q.value(q.w_star + 5 * kernel) == pytest.approx(0.0, abs=1e-20)
    assert q.growth_class == "quadratic_growth_unbounded_min"
    assert QuadraticLoss(np.eye(2)).growth_class == "quadratic_growth_compact_min"


def test_strict_mode_flags_values_below_minimum(monkeypatch):
    monkeypatch.setenv("LANGEVIN_LAB_STRICT", "1")
    bad = ObjectiveSpec(1, lambda w: np.sum(w, -1), lambda w: np.ones_like(w),
                        lambda w: np.zeros(np.shape(w)[:-1]), min_value=0.0)
    with pytest.raises(AssertionError):
        bad.value(np.array([-1.0]))


class TestQuadraticPLConstants:
    def test_identity_block(self):
        A = np.hstack([np.eye(2), np.zeros((2, 3))])
        c = quadratic_pl_constants(A)
        assert (c.ell1, c.ell2, c.ell3) == pytest.approx((4.0, 0.0, 4.0))
        assert c.scope == "global"

    def test_scalar(self):
        c = quadratic_pl_constants(np.array([[3.0]]))
        assert (c.ell1, c.ell3) == pytest.approx((36.0, 18.0))

    def test_rectangular(self):
        A = np.array([[1.0, 0, 0], [0, 2.0, 0]])
        s = np.linalg.svd(A, compute_uv=False)
        c = quadratic_pl_constants(A)
        assert c.ell1 == pytest.approx(4 * s.min() ** 2) == pytest.approx(4.0)
        assert c.ell3 == pytest.approx(2 * np.sum(s ** 2)) == pytest.approx(10.0)

    def test_rank_deficient_uses_smallest_positive(self):
        A = np.array([[1.0, 1.0], [2.0, 2.0]])  # rank one, singular value sqrt(10)
        assert quadratic_pl_constants(A).ell1 == pytest.approx(40.0)

    def test_zero_matrix(self):
        with pytest.raises(ZeroMatrix):
            quadratic_pl_constants(np.zeros((2, 3)))


def test_certificate_validation():
    with pytest.raises(ValueError):
        PLCertificate(ell1=0.0)
    with pytest.raises(ValueError):
        PLCertificate(ell1=1.0, scope="local", radius=0.0)
    c = PLCertificate(ell1=2.0, ell2=1.0, ell3=1.0)
    assert c.admissible(1.9) and not c.admissible(2.0)


class TestVerifyAssumption1:
    def test_quadratic_identity_block_no_violations(self):
        A = np.hstack([np.eye(2), np.zeros((2, 3))])
        rep = verify_assumption1(QuadraticLoss(A), quadratic_pl_constants(A),
                                 Box.cube(5.0, 5), 10_000, seed=3)
        assert rep.total_violations == 0
        assert rep.h_constant is not None and rep.h_constant > 0

    def test_squared_norm_exact_constants(self):
        obj = squared_norm(1)
        cert = PLCertificate(ell1=4.0, ell2=0.0, ell3=2.0, h_bound=lambda s: 2 * np.sqrt(s) + 1e-12)
        rep = verify_assumption1(obj, cert, Box.cube(3.0, 1), 2000, seed=0)
        assert rep.total_violations == 0

    def test_too_large_pl_constant_violates_everywhere(self):
        obj = squared_norm(1)
        rep = verify_assumption1(obj, PLCertificate(ell1=8.0, ell3=2.0), Box.cube(3.0, 1), 500, 0)
        # 4 w^2 >= 8 w^2 fails at every sampled w != 0
        assert rep.pl.violations == 500
        assert rep.pl.worst_margin > 0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 7), st.integers(0, 2 ** 31 - 1),
           st.floats(0.1, 20.0))
    def test_property_random_quadratics(self, n, extra, seed, half_width):
        d = n + extra
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, d))
        if np.linalg.svd(A, compute_uv=False).min() < 1e-3:
            return
        q = QuadraticLoss(A, w_star=rng.standard_normal(d))
        rep = verify_assumption1(q, quadratic_pl_constants(A), Box.cube(half_width, d), 300, seed)
        assert rep.pl.violations == 0 and rep.laplacian.violations == 0


class TestDistance:
    def test_identity_block(self):
        q = QuadraticLoss(np.hstack([np.eye(2), np.zeros((2, 3))]))
        assert distance_to_minimizers(q, [3, 4, 7, 7, 7]) == pytest.approx(5.0)

    def test_points_on_minimizer_set(self, rng):
        q = QuadraticLoss(rng.standard_normal((2, 4)), w_star=rng.standard_normal(4))
        on = q.minimizer_projection(rng.standard_normal((10, 4)))
        np.testing.assert_allclose(distance_to_minimizers(q, on), 0.0, atol=1e-12)
        for obj in (squared_norm(2), flat(2)):
            assert distance_to_minimizers(obj, obj.minimizer_projection(np.ones(2))) == 0.0

    def test_diagonal_line(self):
        q = QuadraticLoss(np.array([[1.0, 1.0]]) / np.sqrt(2))
        # closest point of the line v1 + v2 = 0 to (1, 0) is (1/2, -1/2)
        expected = np.linalg.norm(np.array([1.0, 0.0]) - np.array([0.5, -0.5]))
        assert distance_to_minimizers(q, [1.0, 0.0]) == pytest.approx(expected)
        assert expected == pytest.approx(1 / np.sqrt(2))

    def test_no_projection(self):
        obj = ObjectiveSpec(1, lambda w: np.sum(w * w, -1), lambda w: 2 * w,
                            lambda w: np.full(np.shape(w)[:-1], 2.0), 0.0)
        with pytest.raises(NoProjection):
            distance_to_minimizers(obj, [1.0])

    def test_quadratic_growth(self, rng):
        for _ in range(20):
            n, d = 2, 5
            A = rng.standard_normal((n, d))
            q = QuadraticLoss(A, w_star=rng.standard_normal(d))
            w = rng.uniform(-4, 4, (200, d))
            lhs = q.gap(w)
            rhs = q.sigma_min_pos ** 2 * distance_to_minimizers(q, w) ** 2
            assert np.all(lhs >= rhs - 1e-10 * (1 + lhs))
        # one distinct singular value: equality
        q = QuadraticLoss(np.hstack([2 * np.eye(2), np.zeros((2, 2))]))
        w = rng.uniform(-3, 3, (50, 4))
        np.testing.assert_allclose(q.gap(w), 4 * distance_to_minimizers(q, w) ** 2, rtol=1e-12)


class TestEstimatePL:
    def test_squared_norm_ratio_is_constant(self):
        est = estimate_pl_constant(squared_norm(1), Box.cube(2.0, 1), 1000, seed=0)
        assert abs(est - 4.0) <= 1e-9

    def test_diag_quadratic_between_extremes(self):
        q = QuadraticLoss(np.diag([1.0, 2.0]))
        # oracle: the ratio 4|A^T A w|^2 / |A w|^2 minimized on a fine polar grid
        th = np.linspace(0, 2 * np.pi, 20001)
        w = np.stack([np.cos(th), np.sin(th)], 1)
        ratio = 4 * np.sum((w * [1, 4]) ** 2, 1) / np.sum((w * [1, 2]) ** 2, 1)
        oracle = ratio.min()
        assert oracle == pytest.approx(4.0)
        coarse = estimate_pl_constant(q, Ball([0, 0], 1.0), 200, seed=1)
        fine = estimate_pl_constant(q, Ball([0, 0], 1.0), 20000, seed=1)
        assert 4.0 <= fine <= coarse <= 16.0
        assert fine - oracle < 0.01

    def test_no_admissible_samples(self):
        with pytest.raises(NoAdmissibleSamples):
            estimate_pl_constant(flat(1), Box.cube(1.0, 1), 50, gap_floor=1e-8)
