"""Monte Carlo observables computed from ensemble snapshots."""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyEnsemble, NumericalFailure

BAND = 3.0


@dataclass(frozen=True)
class GapEstimate:
    t: float
    mean: float
    stderr: float
    n_effective: int


@dataclass(frozen=True)
class FractionEstimate:
    value: float
    stderr: float
    n: int


def _mean_stderr(x):
    n = x.size
    mean = math.fsum(x.tolist()) / n
    if n < 2:
        return mean, 0.0
    dev = x - mean
    var = math.fsum((dev * dev).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)


def _fraction(mask):
    n = mask.size
    p = float(np.count_nonzero(mask)) / n
    return FractionEstimate(p, math.sqrt(p * (1.0 - p) / n), n)


def _check(snapshot):
    if snapshot.positions.shape[0] == 0:
        raise EmptyEnsemble("snapshot has no particles")
    if snapshot.diverged:
        raise NumericalFailure(f"snapshot at t={snapshot.t:g} is flagged diverged")


def gaps(snapshot, obj):
    return obj.gap(snapshot.positions)


def mc_expected_gap(snapshot, obj):
    """Sample mean of ``L(w_i) - L*`` with standard error ``std / sqrt(n)``."""
    _check(snapshot)
    mean, se = _mean_stderr(np.asarray(gaps(snapshot, obj), dtype=float))
    return GapEstimate(snapshot.t, mean, se, snapshot.n_paths)


def mass_on_set(snapshot, region, obj=None):
    """Fraction of particles inside ``region`` with binomial standard error."""
    _check(snapshot)
    return _fraction(region.contains(snapshot.positions, obj))


def tail_probability_gap(snapshot, obj, eps):
    """Empirical ``P(L(w) - L* >= eps)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    _check(snapshot)
    return _fraction(np.asarray(gaps(snapshot, obj)) >= eps)


@dataclass(frozen=True)
class ConditionalGap:
    times: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    p_event: float
    p_stderr: float
    n_event: int
    empty: bool


def conditional_gap_on_ball_event(snapshots, obj, R, T):
    """Mean gap restricted to paths with ``sup_{s <= T} |w_s| <= R``.

    The event is read from the last snapshot with ``t <= T``; the conditional
    means are reported at every snapshot up to that one. When no path stays
    in the ball, ``p_event = 0`` and the means are NaN with ``empty=True``.
    """
    upto = [s for s in snapshots if s.t <= T * (1 + 1e-12) + 1e-15]
    if not upto:
        raise ValueError("no snapshot at or before T")
    for s in upto:
        _check(s)
    event = upto[-1].sup_norm_so_far <= R
    prob = _fraction(event)
    times = np.array([s.t for s in upto])
    n_event = int(np.count_nonzero(event))
    if n_event == 0:
        nan = np.full(times.size, np.nan)
        return ConditionalGap(times, nan, nan.copy(), 0.0, 0.0, 0, True)
    means, ses = [], []
    for s in upto:
        m, se = _mean_stderr(np.asarray(gaps(s, obj), dtype=float)[event])
        means.append(m)
        ses.append(se)
    return ConditionalGap(times, np.array(means), np.array(ses), prob.value, prob.stderr,
                          n_event, False)


def markov_tube_radius(plateau, eps, growth_constant):
    """Tube radius holding ``1 - eps`` of the mass when ``E gap <= plateau``.

    Uses ``gap >= mu dist^2`` and Markov: ``P(dist > r) <= plateau / (mu r^2)``.
    """
    if not (eps > 0 and growth_constant > 0):
        raise ValueError("eps and growth_constant must be positive")
    return math.sqrt(plateau / (eps * growth_constant))


OBSERVABLE_COLUMNS = ("t", "gap_mean", "gap_stderr")


def observable_rows(snapshots, obj, sets=None, eps=None, conditional=None):
    """Rows for the observables CSV.

    Column order: ``t, gap_mean, gap_stderr``, then ``mass_<name>`` and
    ``mass_<name>_stderr`` per entry of ``sets`` (in order), then
    ``tail_ge_eps`` and ``tail_ge_eps_stderr`` when ``eps`` is given, then
    ``cond_gap_mean, cond_gap_stderr, p_event`` when ``conditional=(R, T)``.
    """
    sets = dict(sets or {})
    columns = list(OBSERVABLE_COLUMNS)
    for name in sets:
        columns += [f"mass_{name}", f"mass_{name}_stderr"]
    if eps is not None:
        columns += ["tail_ge_eps", "tail_ge_eps_stderr"]
    cond = None
    if conditional is not None:
        columns += ["cond_gap_mean", "cond_gap_stderr", "p_event"]
        cond = conditional_gap_on_ball_event(snapshots, obj, *conditional)
    rows = []
    for i, snap in enumerate(snapshots):
        if snap.diverged:
            break
        g = mc_expected_gap(snap, obj)
        row = [snap.t, g.mean, g.stderr]
        for region in sets.values():
            f = mass_on_set(snap, region, obj)
            row += [f.value, f.stderr]
        if eps is not None:
            f = tail_probability_gap(snap, obj, eps)
            row += [f.value, f.stderr]
        if cond is not None:
            if i < cond.times.size:
                row += [cond.means[i], cond.stderrs[i], cond.p_event]
            else:
                row += [math.nan, math.nan, cond.p_event]
        rows.append(row)
    return columns, rows
