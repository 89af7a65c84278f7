"""Generate standalone matplotlib scripts that draw a run's curves as SVG.

Scripts live in ``<run>/plots/`` and read the run's CSVs through paths
relative to their own location, so a run directory can be moved or archived
as a unit. Generating a script does not import matplotlib; running it does.
"""

from pathlib import Path

from ..exceptions import MissingData
from ..io import read_csv

_HEADER = '''"""{title} (generated; run with python)."""
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def load(name):
    with open(HERE / ".." / name, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = {{c: [float(r[i]) for r in rows[1:]] for i, c in enumerate(rows[0])}}
    return cols


data = load({csv!r})
fig, ax = plt.subplots(figsize=(6, 4))
'''

_FOOTER = '''ax.legend()
fig.tight_layout()
fig.savefig(HERE / {svg!r})
'''


def _line(x, y, label, style="-"):
    return f'ax.plot(data[{x!r}], data[{y!r}], {style!r}, label={label!r})\n'


def _columns(run_dir, name):
    path = Path(run_dir) / name
    if not path.exists():
        raise MissingData(f"{name} not found in {run_dir}")
    return read_csv(path)[0]


def _require(cols, needed, name):
    for c in needed:
        if c not in cols:
            raise MissingData(f"column {c!r} missing from {name}")


def _gap_script(cols):
    body = _line("t", "gap_mean", "MC gap", "o-")
    body += ("lo = [m - 3 * s for m, s in zip(data['gap_mean'], data['gap_stderr'])]\n"
             "hi = [m + 3 * s for m, s in zip(data['gap_mean'], data['gap_stderr'])]\n"
             "ax.fill_between(data['t'], lo, hi, alpha=0.2)\n")
    for c, label in [("bound_decay_upper", "upper bound"), ("bound_quadratic_lower", "lower bound"),
                     ("bound_plateau", "plateau"), ("bound_local_conditional", "local bound")]:
        if c in cols:
            body += _line("t", c, label, "--")
    if "cond_gap_mean" in cols:
        body += _line("t", "cond_gap_mean", "conditional MC gap", "s-")
    body += "ax.set_xlabel('t')\nax.set_ylabel('expected gap')\n"
    return body


def _dirichlet_script(cols):
    body = ("pts = [(t, d, b) for t, d, b in zip(data['t'], data['dirichlet_pi'],"
            " data['bound_dirichlet']) if t > 0 and d > 0]\n"
            "t = [p[0] for p in pts]\n"
            "ax.loglog(t, [p[1] for p in pts], 'o-', label='Dirichlet energy')\n"
            "ax.loglog(t, [p[2] for p in pts], '--', label='bound |phi0|^2/(2t)')\n"
            "ax.loglog(t, [pts[0][1] * t[0] / s for s in t], ':', label='slope -1')\n")
    for c, label in [("fk2_norm", "F2"), ("fk3_norm", "F3")]:
        if c in cols:
            body += (f"ax.loglog(t, [v for s, v in zip(data['t'], data[{c!r}]) if s > 0]"
                     f"[-len(t):], '.-', label={label!r})\n")
    body += "ax.set_xlabel('t')\nax.set_ylabel('pi-weighted norm')\n"
    return body


def _sgd_script(cols):
    body = _line("k", "gap_mean", "SGD gap", "o-")
    if "bound_sgd_recursion" in cols:
        body += _line("k", "bound_sgd_recursion", "recursion bound", "--")
    if "ensemble_gap_mean" in cols:
        body += _line("k", "langevin_sgd_gap_mean", "Langevin-noise SGD", ".-")
        body += _line("k", "ensemble_gap_mean", "Euler-Maruyama ensemble", "x-")
    body += "ax.set_yscale('log')\nax.set_xlabel('k')\nax.set_ylabel('expected gap')\n"
    return body


def _probe_script(cols):
    return ("ax.semilogx(data['width'], data['mu_hat'], 'o', label='mu_hat per seed')\n"
            "ax.set_xlabel('hidden width')\nax.set_ylabel('local PL constant')\n")


# file -> [(script name, required columns, body builder)]
_PLOTS = {
    "observables.csv": [("gap_vs_bound", ("t", "gap_mean", "gap_stderr"), _gap_script)],
    "fp_norms.csv": [("dirichlet_loglog", ("t", "dirichlet_pi", "bound_dirichlet"),
                      _dirichlet_script)],
    "sgd.csv": [("sgd_vs_bound", ("k", "gap_mean"), _sgd_script)],
    "probe.csv": [("local_pl_probe", ("width", "mu_hat"), _probe_script)],
}
_BY_KIND = {"langevin": "observables.csv", "fokker_planck": "fp_norms.csv", "sgd": "sgd.csv",
            "nn_probe": "probe.csv"}


def emit_plots(manifest):
    """Write plot scripts for ``manifest`` and add them to its file inventory.

    Returns the list of script paths. Raises :class:`MissingData` when the
    run lacks the CSV or a column a script needs.
    """
    run_dir = Path(manifest.directory)
    csv_name = _BY_KIND.get(manifest.kind)
    if csv_name is None:
        raise MissingData(f"no plots defined for kind {manifest.kind!r}")
    if csv_name not in manifest.files:
        raise MissingData(f"{csv_name} not listed in the manifest")
    cols = _columns(run_dir, csv_name)
    out_dir = run_dir / "plots"
    out_dir.mkdir(exist_ok=True)
    written = []
    for name, needed, builder in _PLOTS[csv_name]:
        _require(cols, needed, csv_name)
        text = (_HEADER.format(title=name.replace("_", " "), csv=csv_name) + builder(cols)
                + _FOOTER.format(svg=f"{name}.svg"))
        path = out_dir / f"{name}.py"
        path.write_text(text)
        written.append(path)
    manifest.refresh_files()
    manifest.save()
    return written
