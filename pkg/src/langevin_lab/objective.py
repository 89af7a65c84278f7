"""Objective functions, their minimizer geometry and assumption checks.

Every callable held by an :class:`ObjectiveSpec` is vectorized over leading
axes: ``value`` maps ``(..., d) -> (...)``, ``gradient`` maps
``(..., d) -> (..., d)`` and ``laplacian`` maps ``(..., d) -> (...)``.
"""

import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import NoAdmissibleSamples, NoProjection, ZeroMatrix

RANK_CUTOFF = 1e-12
ASSUMPTION_SLACK = 1e-9

GROWTH_CLASSES = ("quadratic_growth_compact_min", "quadratic_growth_unbounded_min", "unknown")


def _strict():
    return os.environ.get("LANGEVIN_LAB_STRICT", "") not in ("", "0")


@dataclass(frozen=True)
class ObjectiveSpec:
    """An objective with derivatives and known minimum value.

    Set the environment variable ``LANGEVIN_LAB_STRICT=1`` to assert
    ``value(w) >= min_value`` on every evaluation.
    """

    dim: int
    value_fn: Callable
    gradient_fn: Callable
    laplacian_fn: Callable
    min_value: float
    minimizer_projection: Optional[Callable] = None
    growth_class: str = "unknown"
    name: str = "objective"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be a positive integer")
        if self.growth_class not in GROWTH_CLASSES:
            raise ValueError(f"unknown growth class {self.growth_class!r}")

    def value(self, w):
        v = self.value_fn(np.asarray(w, dtype=float))
        if _strict():
            v_arr = np.asarray(v)
            floor = self.min_value - 1e-9 * (1.0 + np.abs(v_arr))
            assert np.all(v_arr >= floor), f"{self.name}: value below min_value"
        return v

    def gradient(self, w):
        return self.gradient_fn(np.asarray(w, dtype=float))

    def laplacian(self, w):
        return self.laplacian_fn(np.asarray(w, dtype=float))

    def gap(self, w):
        return self.value(w) - self.min_value


@dataclass(frozen=True)
class PLCertificate:
    """Constants of the global (or local) PL-type assumptions.

    ``ell1`` is the PL constant in ``L - L* <= |grad L|^2 / ell1``;
    ``ell2, ell3`` bound the Laplacian by ``ell2 (L - L*) + ell3``;
    ``h_bound`` bounds the gradient norm by a function of the gap.
    """

    ell1: float
    ell2: float = 0.0
    ell3: float = 0.0
    h_bound: Optional[Callable] = None
    scope: str = "global"
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if not self.ell1 > 0:
            raise ValueError("ell1 must be positive")
        if self.ell2 < 0 or self.ell3 < 0:
            raise ValueError("ell2 and ell3 must be nonnegative")
        if self.scope not in ("global", "local"):
            raise ValueError("scope must be 'global' or 'local'")
        if self.scope == "local" and not (self.radius is not None and self.radius > 0):
            raise ValueError("local certificates need a positive radius")

    def admissible(self, sigma):
        return self.ell1 > sigma * self.ell2

    def decay_rate(self, sigma):
        return self.ell1 - sigma * self.ell2


# ----------------------------------------------------------------------------
# concrete objectives


class QuadraticLoss(ObjectiveSpec):
    """``L(w) = |A (w - w_star)|^2`` with minimizer set ``w_star + Ker(A)``."""

    def __init__(self, A, w_star=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n, d = A.shape
        w_star = np.zeros(d) if w_star is None else np.asarray(w_star, dtype=float).reshape(d)
        _, s, vt = np.linalg.svd(A, full_matrices=False)
        rank = int(np.sum(s > RANK_CUTOFF))
        row_basis = vt[:rank]
        gram = A.T @ A
        lap = 2.0 * float(np.sum(A * A))

        def value(w):
            r = (w - w_star) @ A.T
            return np.sum(r * r, axis=-1)

        def gradient(w):
            return 2.0 * ((w - w_star) @ A.T) @ A

        def laplacian(w):
            return np.full(np.shape(w)[:-1], lap)

        def projection(w):
            x = w - w_star
            return w - (x @ row_basis.T) @ row_basis

        growth = "quadratic_growth_compact_min" if rank == d else "quadratic_growth_unbounded_min"
        super().__init__(
            dim=d,
            value_fn=value,
            gradient_fn=gradient,
            laplacian_fn=laplacian,
            min_value=0.0,
            minimizer_projection=projection,
            growth_class=growth,
            name="quadratic",
            params={"A": A.tolist(), "w_star": w_star.tolist()},
        )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "w_star", w_star)
        object.__setattr__(self, "singular_values", s)
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "gram", gram)

    @property
    def sigma_min_pos(self):
        return float(self.singular_values[self.rank - 1]) if self.rank else 0.0

    @property
    def sigma_max(self):
        return float(self.singular_values[0])

    @property
    def frob_sq(self):
        return float(np.sum(self.singular_values ** 2))


def squared_norm(dim=1, scale=1.0, center=None):
    """``L(w) = scale * |w - center|^2``; the Langevin drift is ``-2 scale (w - center)``."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float).reshape(dim)
    a = float(scale)
    if a <= 0:
        raise ValueError("scale must be positive")
    return ObjectiveSpec(
        dim=dim,
        value_fn=lambda w: a * np.sum((w - c) ** 2, axis=-1),
        gradient_fn=lambda w: 2.0 * a * (w - c),
        laplacian_fn=lambda w: np.full(np.shape(w)[:-1], 2.0 * a * dim),
        min_value=0.0,
        minimizer_projection=lambda w: np.broadcast_to(c, np.shape(w)).copy(),
        growth_class="quadratic_growth_compact_min",
        name="squared_norm",
        params={"dim": dim, "scale": a, "center": c.tolist()},
    )


def flat(dim=1):
    """``L == 0``: every point is a minimizer and the Gibbs weight is not integrable."""
    return ObjectiveSpec(
        dim=dim,
        value_fn=lambda w: np.zeros(np.shape(w)[:-1]),
        gradient_fn=lambda w: np.zeros(np.shape(w)),
        laplacian_fn=lambda w: np.zeros(np.shape(w)[:-1]),
        min_value=0.0,
        minimizer_projection=lambda w: np.array(w, dtype=float, copy=True),
        growth_class="unknown",
        name="flat",
        params={"dim": dim},
    )


def quartic_well(dim=1, scale=1.0):
    """``L(w) = scale * |w|^4``: degenerate minimum, no global PL constant."""
    a = float(scale)

    def value(w):
        return a * np.sum(w * w, axis=-1) ** 2

    def gradient(w):
        return 4.0 * a * np.sum(w * w, axis=-1)[..., None] * w

    def laplacian(w):
        return 4.0 * a * (dim + 2) * np.sum(w * w, axis=-1)

    return ObjectiveSpec(
        dim=dim,
        value_fn=value,
        gradient_fn=gradient,
        laplacian_fn=laplacian,
        min_value=0.0,
        minimizer_projection=lambda w: np.zeros(np.shape(w)),
        growth_class="unknown",
        name="quartic_well",
        params={"dim": dim, "scale": a},
    )


# ----------------------------------------------------------------------------
# operations


def quadratic_pl_constants(A):
    """PL certificate for ``|A (w - w*)|^2``.

    Returns ``ell1 = 4 s_min^2`` (smallest positive singular value),
    ``ell2 = 0`` and ``ell3 = 2 |A|_F^2``.
    """
    s = np.linalg.svd(np.atleast_2d(np.asarray(A, dtype=float)), compute_uv=False)
    pos = s[s > RANK_CUTOFF]
    if pos.size == 0:
        raise ZeroMatrix("all singular values are below the rank cutoff")
    return PLCertificate(ell1=4.0 * pos[-1] ** 2, ell2=0.0, ell3=2.0 * float(np.sum(s ** 2)))


@dataclass
class ConditionReport:
    violations: int
    worst_margin: float


@dataclass
class AssumptionReport:
    n_samples: int
    pl: ConditionReport
    laplacian: ConditionReport
    gradient_growth: ConditionReport
    h_constant: Optional[float] = None

    @property
    def total_violations(self):
        return self.pl.violations + self.laplacian.violations + self.gradient_growth.violations


def _condition(excess):
    # excess > 0 is a violation; worst margin is the largest excess seen
    bad = excess > 0
    worst = float(np.max(excess)) if excess.size else 0.0
    return ConditionReport(int(np.count_nonzero(bad)), worst)


def _sample_points(region, n_samples, seed, n_shards=8):
    # per-shard streams keep results independent of how the work is split
    seq = np.random.SeedSequence(seed)
    sizes = np.full(n_shards, n_samples // n_shards)
    sizes[: n_samples % n_shards] += 1
    parts = [
        region.sample(np.random.default_rng(child), int(k))
        for child, k in zip(seq.spawn(n_shards), sizes)
        if k > 0
    ]
    return np.concatenate(parts, axis=0)


def verify_assumption1(obj, cert, sample_region, n_samples=10_000, seed=0):
    """Count pointwise violations of the three global assumptions on samples.

    A tolerance of ``1e-9 * (1 + gap)`` absorbs rounding. When the certificate
    carries no ``h_bound``, ``H(s) = C (1 + s)`` is fitted with ``C`` 10% above
    the largest observed ratio, and reported as ``h_constant``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    w = _sample_points(sample_region, n_samples, seed)
    gap = obj.gap(w)
    g = obj.gradient(w)
    gnorm2 = np.sum(g * g, axis=-1)
    lap = obj.laplacian(w)
    tol = ASSUMPTION_SLACK * (1.0 + np.abs(gap))

    pl = _condition(gap - gnorm2 / cert.ell1 - tol)
    lp = _condition(np.abs(lap) - (cert.ell2 * gap + cert.ell3) - tol)

    gnorm = np.sqrt(gnorm2)
    h_const = None
    if cert.h_bound is None:
        h_const = 1.1 * float(np.max(gnorm / (1.0 + gap)))
        hb = h_const * (1.0 + gap)
    else:
        hb = np.array([cert.h_bound(s) for s in gap], dtype=float)
    gg = _condition(gnorm - hb - tol)
    return AssumptionReport(n_samples, pl, lp, gg, h_const)


def distance_to_minimizers(obj, w):
    """Euclidean distance to the minimizer set via the objective's projection."""
    if obj.minimizer_projection is None:
        raise NoProjection(f"{obj.name} has no minimizer projection")
    w = np.asarray(w, dtype=float)
    return np.linalg.norm(w - obj.minimizer_projection(w), axis=-1)


def default_gap_floor(obj):
    return 1e-8 * (1.0 + abs(obj.min_value))


def estimate_pl_constant(obj, sample_region, n_samples=1000, gap_floor=None, seed=0):
    """Sample infimum of ``|grad L|^2 / (L - L*)``.

    This over-estimates the best admissible ``ell1`` on the region; more
    samples can only lower it.
    """
    gap_floor = default_gap_floor(obj) if gap_floor is None else gap_floor
    if gap_floor <= 0:
        raise ValueError("gap_floor must be positive")
    w = _sample_points(sample_region, n_samples, seed)
    gap = obj.gap(w)
    keep = gap >= gap_floor
    if not np.any(keep):
        raise NoAdmissibleSamples("every sample is below gap_floor")
    g = obj.gradient(w[keep])
    return float(np.min(np.sum(g * g, axis=-1) / gap[keep]))


def quadratic_growth_constant(obj):
    """``mu`` with ``L - L* >= mu dist^2``; only available for :class:`QuadraticLoss`."""
    if not isinstance(obj, QuadraticLoss):
        raise NotImplementedError("quadratic growth constant is only derived for QuadraticLoss")
    return obj.sigma_min_pos ** 2
