"""Command line entry point.

Exit codes: 0 success, 2 invalid configuration or input, 3 numerical failure.
The output root for runs is read from ``LANGEVIN_LAB_OUTPUT_ROOT`` (default
``./runs``).
"""

import argparse
import sys

from ..exceptions import (ConfigInvalid, LangevinLabError, MissingData, NoOverlap,
                          NumericalFailure)
from .catalog import catalog_config, catalog_description, catalog_names
from .compare import compare_runs
from .config import load_config
from .plots import emit_plots
from .runner import OUTPUT_ROOT_ENV, RunManifest, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser():
    p = argparse.ArgumentParser(
        prog="langevin-lab",
        description="Run Langevin / Fokker-Planck / SGD experiments from TOML configs.",
        epilog=f"Runs are written under ${OUTPUT_ROOT_ENV} (default ./runs).")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides the output root)")
    r.add_argument("-j", "--jobs", type=int, default=1, help="worker threads for ensembles")

    pl = sub.add_parser("plot", help="write plot scripts for a finished run")
    pl.add_argument("manifest", help="manifest.json or its run directory")

    c = sub.add_parser("compare", help="tabulate summaries of several runs")
    c.add_argument("manifests", nargs="+")
    c.add_argument("-o", "--output", help="also write the table as CSV")

    cat = sub.add_parser("catalog", help="list or run shipped experiments")
    csub = cat.add_subparsers(dest="action", required=True)
    csub.add_parser("list", help="list catalog entries")
    cr = csub.add_parser("run", help="run a catalog entry")
    cr.add_argument("name")
    cr.add_argument("-o", "--output")
    cr.add_argument("-j", "--jobs", type=int, default=1)
    return p


def _report(manifest):
    print(f"{manifest.status}: {manifest.name} -> {manifest.path}")
    for k, v in sorted(manifest.summary.items()):
        if isinstance(v, float):
            print(f"  {k} = {v:.6g}")


def _dispatch(args):
    if args.verb == "run":
        _report(run_experiment(load_config(args.config), args.output, args.jobs))
    elif args.verb == "catalog" and args.action == "list":
        for name in catalog_names():
            print(f"{name:24s} {catalog_description(name)}")
    elif args.verb == "catalog":
        _report(run_experiment(catalog_config(args.name), args.output, args.jobs))
    elif args.verb == "plot":
        for path in emit_plots(RunManifest.load(args.manifest)):
            print(path)
    elif args.verb == "compare":
        cols, rows = compare_runs(args.manifests, args.output)
        print(",".join(cols))
        for row in rows:
            print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigInvalid, MissingData, NoOverlap, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        m = getattr(e, "manifest", None)
        if m is not None:
            print(f"partial outputs in {m.directory}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LangevinLabError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
