"""Align scalar summaries of several runs into one table."""

import math
from numbers import Real

from ..exceptions import NoOverlap
from ..io import write_csv
from .runner import RunManifest

KEY_COLUMNS = ("sigma", "dt", "n_paths")


def _scalars(summary):
    return {k: float(v) for k, v in summary.items()
            if isinstance(v, Real) and not isinstance(v, bool)}


def compare_runs(manifests, out_path=None):
    """Table with one row per run over the numeric summary keys all runs share.

    Columns are ``run`` followed by the shared keys (``sigma, dt, n_paths``
    first when present). When both ``sigma`` and ``gap_final_mean`` are shared,
    ``gap_final_over_sigma`` is appended, which is constant across a sigma
    sweep when the plateau is linear in sigma.
    """
    ms = [m if isinstance(m, RunManifest) else RunManifest.load(m) for m in manifests]
    if len(ms) < 2:
        raise NoOverlap("need at least two runs to compare")
    scal = [_scalars(m.summary) for m in ms]
    shared = set(scal[0])
    for s in scal[1:]:
        shared &= set(s)
    if not shared:
        raise NoOverlap("the runs share no numeric summary keys")
    keys = [k for k in KEY_COLUMNS if k in shared] + sorted(shared - set(KEY_COLUMNS))
    columns = ["run"] + keys
    ratio = "sigma" in shared and "gap_final_mean" in shared
    if ratio:
        columns.append("gap_final_over_sigma")
    rows = []
    for m, s in zip(ms, scal):
        row = [m.name] + [s[k] for k in keys]
        if ratio:
            row.append(s["gap_final_mean"] / s["sigma"] if s["sigma"] > 0 else math.nan)
        rows.append(row)
    if out_path is not None:
        write_csv(out_path, columns, rows)
    return columns, rows
