"""Euler-Maruyama ensembles for ``dw = -grad L(w) dt + sqrt(2 sigma) dB`` and SGD recursions.

Randomness: paths are split into fixed blocks of :data:`BLOCK_SIZE`; block
``b`` draws from a Philox stream keyed by ``SeedSequence(seed, spawn_key=(b,))``.
Each block consumes one ``(block_paths, d)`` normal draw per step, so results
do not depend on how many worker threads process the blocks.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import Diverged

BLOCK_SIZE = 8192
DIVERGENCE_THRESHOLD = 1e12


def block_rng(seed, block):
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    sigma: float
    dt: float
    t_final: float
    n_paths: int = 1
    seed: int = 0
    record_times: tuple = ()

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not self.dt > 0 or not self.t_final > 0:
            raise ValueError("dt and t_final must be positive")
        if self.dt > self.t_final * (1 + 1e-12):
            raise ValueError("dt must not exceed t_final")
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")
        rt = tuple(float(t) for t in self.record_times) or (0.0, float(self.t_final))
        if any(b < a for a, b in zip(rt, rt[1:])):
            raise ValueError("record_times must be sorted")
        if rt[0] < 0 or rt[-1] > self.t_final * (1 + 1e-12):
            raise ValueError("record_times must lie in [0, t_final]")
        object.__setattr__(self, "record_times", rt)

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    def record_steps(self):
        """Step indices of the record times, snapped to the nearest step boundary."""
        steps = [min(int(round(t / self.dt)), self.n_steps) for t in self.record_times]
        return sorted(set(steps))


@dataclass(frozen=True)
class InitialLaw:
    """Initial distribution of the particles.

    kinds: ``point`` (``w0``), ``gaussian`` (``mean``, diagonal ``var``),
    ``uniform_box`` (``lo``, ``hi``), ``custom_density`` (grid ``nodes`` with
    cell ``weights`` and cell ``widths``), ``empirical`` (given ``positions``,
    which must match ``n_paths``).
    """

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def point(cls, w0):
        return cls("point", {"w0": np.atleast_1d(np.asarray(w0, dtype=float))})

    @classmethod
    def gaussian(cls, mean, var):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        var = np.broadcast_to(np.asarray(var, dtype=float), mean.shape).copy()
        if np.any(var <= 0):
            raise ValueError("gaussian variances must be positive")
        return cls("gaussian", {"mean": mean, "var": var})

    @classmethod
    def uniform_box(cls, lo, hi):
        return cls("uniform_box", {"lo": np.atleast_1d(np.asarray(lo, float)),
                                   "hi": np.atleast_1d(np.asarray(hi, float))})

    @classmethod
    def custom_density(cls, nodes, weights, widths):
        """Sample a node with probability ``weights``, then uniformly in its cell."""
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        w = np.asarray(weights, dtype=float).ravel()
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("density weights must be nonnegative with positive sum")
        widths = np.broadcast_to(np.asarray(widths, dtype=float), nodes.shape).copy()
        return cls("custom_density", {"nodes": nodes, "p": w / w.sum(), "widths": widths})

    @classmethod
    def empirical(cls, positions):
        return cls("empirical", {"positions": np.atleast_2d(np.asarray(positions, dtype=float))})

    @property
    def dim(self):
        p = self.params
        key = {"point": "w0", "gaussian": "mean", "uniform_box": "lo"}.get(self.kind)
        if key:
            return p[key].size
        if self.kind == "custom_density":
            return p["nodes"].shape[1]
        return p["positions"].shape[1]

    def sample(self, rng, n, offset=0):
        """Draw ``n`` initial positions; ``offset`` locates the block in an empirical law."""
        p = self.params
        if self.kind == "point":
            return np.tile(p["w0"], (n, 1))
        if self.kind == "gaussian":
            return p["mean"] + np.sqrt(p["var"]) * rng.standard_normal((n, p["mean"].size))
        if self.kind == "uniform_box":
            return rng.uniform(p["lo"], p["hi"], size=(n, p["lo"].size))
        if self.kind == "custom_density":
            idx = rng.choice(p["nodes"].shape[0], size=n, p=p["p"])
            jitter = rng.uniform(-0.5, 0.5, size=(n, p["nodes"].shape[1]))
            return p["nodes"][idx] + jitter * p["widths"][idx]
        if self.kind == "empirical":
            return p["positions"][offset:offset + n].copy()
        raise ValueError(f"unknown initial law {self.kind!r}")


@dataclass(frozen=True)
class EnsembleSnapshot:
    t: float
    positions: np.ndarray
    sup_norm_so_far: np.ndarray
    diverged: bool = False
    step: int = 0

    @property
    def n_paths(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]


def euler_maruyama_step(obj, w, dt, sigma, gauss):
    """``w - dt grad L(w) + sqrt(2 sigma dt) gauss``; works on single points or batches."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    w = np.asarray(w, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        out = w - dt * obj.gradient(w) + np.sqrt(2.0 * sigma * dt) * np.asarray(gauss, dtype=float)
    if not np.all(np.isfinite(out)):
        bad = np.flatnonzero(~np.all(np.isfinite(np.atleast_2d(out)), axis=1))
        raise Diverged(int(bad[0]), dt)
    return out


def _run_block(obj, init, cfg, block, start, n):
    rng = block_rng(cfg.seed, block)
    w = init.sample(rng, n, offset=start)
    if w.shape != (n, obj.dim):
        raise ValueError(f"initial law has dimension {w.shape[1]}, objective has {obj.dim}")
    record = cfg.record_steps()
    noise_scale = np.sqrt(2.0 * cfg.sigma * cfg.dt)
    sup = np.linalg.norm(w, axis=1)
    out = {}
    if 0 in record:
        out[0] = (w.copy(), sup.copy())
    limit = DIVERGENCE_THRESHOLD ** 2
    for k in range(1, cfg.n_steps + 1):
        drift = obj.gradient(w)
        if cfg.sigma > 0:
            w = w - cfg.dt * drift + noise_scale * rng.standard_normal(w.shape)
        else:
            w = w - cfg.dt * drift
        sq = np.einsum("ij,ij->i", w, w)
        if not np.all(sq <= limit):
            bad = int(np.flatnonzero(~(sq <= limit))[0])
            return out, (k, start + bad)
        np.maximum(sup, np.sqrt(sq), out=sup)
        if k in record:
            out[k] = (w.copy(), sup.copy())
    return out, None


def simulate_ensemble(obj, init, cfg, n_jobs=1):
    """Advance ``cfg.n_paths`` particles and return snapshots at the record times.

    Record times are snapped to step boundaries; the snapshot carries the
    realized time. Output is bit-identical for any ``n_jobs``.
    """
    if init.dim != obj.dim:
        raise ValueError(f"initial law has dimension {init.dim}, objective has {obj.dim}")
    if init.kind == "empirical" and init.params["positions"].shape[0] != cfg.n_paths:
        raise ValueError("empirical initial law must provide exactly n_paths positions")
    starts = list(range(0, cfg.n_paths, BLOCK_SIZE))
    jobs = [(b, s, min(BLOCK_SIZE, cfg.n_paths - s)) for b, s in enumerate(starts)]
    if n_jobs == 1 or len(jobs) == 1:
        results = [_run_block(obj, init, cfg, *j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(lambda j: _run_block(obj, init, cfg, *j), jobs))

    failures = [r[1] for r in results if r[1] is not None]
    first_bad = min(failures) if failures else None
    snapshots = []
    for k in cfg.record_steps():
        if first_bad is not None and k >= first_bad[0]:
            break
        pos = np.concatenate([r[0][k][0] for r in results], axis=0)
        sup = np.concatenate([r[0][k][1] for r in results], axis=0)
        snapshots.append(EnsembleSnapshot(k * cfg.dt, pos, sup, step=k))
    if first_bad is not None:
        step, path = first_bad
        t = step * cfg.dt
        dim = obj.dim
        snapshots.append(EnsembleSnapshot(t, np.full((cfg.n_paths, dim), np.nan),
                                          np.full(cfg.n_paths, np.nan), diverged=True, step=step))
        raise Diverged(path, t, snapshots)
    return snapshots


# ----------------------------------------------------------------------------
# discrete SGD


def simulate_sgd(grad_oracle, w0, eta, k_max, seed=0):
    """Iterates of ``w_{k+1} = w_k - eta * grad_oracle(w_k, k, rng)``.

    ``rng`` is the stream of block 0 for ``seed``, so a Langevin oracle
    reproduces the single-path ensemble with ``dt = eta``.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    rng = block_rng(seed, 0)
    w = np.array(w0, dtype=float)
    iterates = [w.copy()]
    for k in range(k_max):
        w = w - eta * grad_oracle(w, k, rng)
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > DIVERGENCE_THRESHOLD:
            raise Diverged(0, k + 1, [])
        iterates.append(w.copy())
    return iterates


def exact_gradient_oracle(obj):
    return lambda w, k, rng: obj.gradient(w)


def gaussian_noise_oracle(obj, variance):
    """Gradient plus isotropic Gaussian noise with ``E|xi|^2 = variance``."""
    scale = np.sqrt(variance / obj.dim)
    return lambda w, k, rng: obj.gradient(w) + scale * rng.standard_normal(np.shape(w))


def langevin_oracle(obj, eta, sigma=1.0):
    """Noise ``-sqrt(2 sigma / eta) z`` turns the SGD step into an Euler-Maruyama step."""
    c = np.sqrt(2.0 * sigma / eta)
    return lambda w, k, rng: obj.gradient(w) - c * rng.standard_normal((1,) + np.shape(w))[0]


def minibatch_oracle(per_sample_grad, n_samples, batch_size):
    """Average of ``per_sample_grad(w, idx)`` over indices drawn with replacement.

    With ``batch_size == n_samples`` the full index range is used in order, so
    the step equals full-batch gradient descent.
    """
    if not 1 <= batch_size <= n_samples:
        raise ValueError("batch size must lie in [1, N]")
    full = np.arange(n_samples)

    def oracle(w, k, rng):
        idx = full if batch_size == n_samples else rng.integers(0, n_samples, size=batch_size)
        return per_sample_grad(w, idx)

    return oracle


# ----------------------------------------------------------------------------
# estimator interface


class LangevinSampler(BaseEstimator):
    """Estimator-style wrapper around :func:`simulate_ensemble`.

    ``fit(X)`` runs the dynamics from the rows of ``X`` and stores the
    snapshots in ``snapshots_``; ``transform(X)`` returns the positions at
    ``t_final`` started from ``X``.
    """

    def __init__(self, objective=None, sigma=1.0, dt=1e-3, t_final=1.0, record_times=None,
                 seed=0, n_jobs=1):
        self.objective = objective
        self.sigma = sigma
        self.dt = dt
        self.t_final = t_final
        self.record_times = record_times
        self.seed = seed
        self.n_jobs = n_jobs

    def _config(self, n):
        rt = tuple(self.record_times) if self.record_times is not None else ()
        return SimConfig(self.sigma, self.dt, self.t_final, n, self.seed, rt)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.objective is None or X.shape[1] != self.objective.dim:
            raise ValueError("X must have objective.dim columns")
        self.n_features_in_ = X.shape[1]
        self.snapshots_ = simulate_ensemble(self.objective, InitialLaw.empirical(X),
                                            self._config(X.shape[0]), n_jobs=self.n_jobs)
        return self

    def transform(self, X):
        check_is_fitted(self, "snapshots_")
        X = check_array(X, dtype=np.float64)
        cfg = SimConfig(self.sigma, self.dt, self.t_final, X.shape[0], self.seed, (self.t_final,))
        return simulate_ensemble(self.objective, InitialLaw.empirical(X), cfg,
                                 n_jobs=self.n_jobs)[-1].positions

    def fit_transform(self, X, y=None):
        return self.fit(X).snapshots_[-1].positions
