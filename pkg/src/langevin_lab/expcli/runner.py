"""Execute a validated experiment and write its outputs plus a manifest.

Outputs go to a scratch directory next to the target and are moved into
place only when the run finishes, so a directory never mixes files from two
runs. Every file except ``manifest.json`` is listed in the manifest with its
SHA-256; nothing in the data files depends on wall-clock time, so re-running
a config reproduces the checksums.
"""

import hashlib
import json
import math
import os
import shutil
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..bounds import (decay_upper_bound, dirichlet_decay_bound, higher_order_bound,
                      local_conditional_bound, plateau, quadratic_lower_bound,
                      sgd_recursion_bound)
from ..estimators import conditional_gap_on_ball_event, markov_tube_radius, observable_rows
from ..exceptions import NumericalFailure, WindowTooShort
from ..fokker_planck import (apply_Fk, build_generator, domain_pi_mass, evolve, Grid,
                             normalized_field, phi_limit_report, weighted_dirichlet,
                             weighted_l2_norm)
from ..io import JsonlSink, snapshot_record, write_csv, write_field, write_positions
from ..regions import Ball, Box, Tube
from ..sde_sim import (InitialLaw, SimConfig, exact_gradient_oracle, gaussian_noise_oracle,
                       langevin_oracle, simulate_ensemble, simulate_sgd)
from .config import build_dataset

OUTPUT_ROOT_ENV = "LANGEVIN_LAB_OUTPUT_ROOT"
MANIFEST_NAME = "manifest.json"


def output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    name: str
    kind: str
    config_hash: str
    code_version: str
    started: str
    finished: str
    status: str
    files: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    directory: str = None

    @property
    def path(self):
        return Path(self.directory) / MANIFEST_NAME

    def refresh_files(self):
        """Re-inventory every file under the run directory."""
        root = Path(self.directory)
        files = {}
        for p in sorted(root.rglob("*")):
            if p.is_file() and p.name != MANIFEST_NAME:
                files[p.relative_to(root).as_posix()] = sha256_file(p)
        self.files = files

    def save(self):
        d = asdict(self)
        d.pop("directory")
        with open(self.path, "w") as fh:
            json.dump(d, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        return self.path

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        with open(path) as fh:
            d = json.load(fh)
        return cls(directory=str(path.parent), **d)

    def read_csv(self, name):
        from ..io import read_csv
        return read_csv(Path(self.directory) / name)


def _json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


# ----------------------------------------------------------------------------
# langevin ensembles


def _initial_law(sec):
    kind = sec["kind"]
    if kind == "point":
        return InitialLaw.point(sec["w0"])
    if kind == "gaussian":
        return InitialLaw.gaussian(sec["mean"], sec["var"])
    return InitialLaw.uniform_box(sec["lo"], sec["hi"])


def _regions(cfg, obj, cert, sigma):
    out = {}
    for s in cfg.section("estimators").get("sets", []):
        typ = s["type"]
        if typ == "ball":
            center = s.get("center", np.zeros(obj.dim))
            out[s["name"]] = Ball(np.asarray(center, float), s["radius"])
        elif typ == "box":
            out[s["name"]] = Box(s["lo"], s["hi"])
        else:
            r = s.get("radius")
            if r is None:
                level = plateau(cert, sigma).limit
                r = markov_tube_radius(level, s["eps"], obj.sigma_min_pos ** 2)
            out[s["name"]] = Tube(obj, r)
    return out


def _run_langevin(cfg, out, n_jobs):
    obj, cert = cfg.objective, cfg.certificate
    sim = cfg.section("sim")
    sigma, dt, t_final = float(sim["sigma"]), float(sim["dt"]), float(sim["t_final"])
    rt = sim.get("record_times")
    rt = list(np.linspace(0.0, t_final, 21)) if rt is None else [float(t) for t in rt]
    if rt[0] > 0:
        rt = [0.0] + rt
    sc = SimConfig(sigma, dt, t_final, int(sim.get("n_paths", 1)), cfg.seed, tuple(rt))
    snaps = simulate_ensemble(obj, _initial_law(cfg.section("init")), sc, n_jobs=n_jobs)

    est = cfg.section("estimators")
    sets = _regions(cfg, obj, cert, sigma)
    cond = est.get("conditional")
    cond_args = (float(cond["R"]), float(cond["T"])) if cond else None
    columns, rows = observable_rows(snaps, obj, sets, est.get("eps"), cond_args)
    times = np.array([r[0] for r in rows])
    gap0 = rows[0][1]

    bnd = cfg.section("bounds")
    extra_cols, extra = [], []
    summary = {"sigma": sigma, "dt": dt, "t_final": t_final, "n_paths": sc.n_paths,
               "dim": obj.dim, "gap0": gap0}
    if bnd.get("decay_upper"):
        c = decay_upper_bound(gap0, cert, sigma)
        extra_cols.append("bound_decay_upper")
        extra.append(c(times))
        summary["plateau_bound"] = c.limit
    if bnd.get("plateau"):
        c = plateau(cert, sigma)
        extra_cols.append("bound_plateau")
        extra.append(c(times))
        summary["plateau_bound"] = c.limit
    if bnd.get("quadratic_lower"):
        c = quadratic_lower_bound(gap0, obj.sigma_max, obj.frob_sq, sigma)
        extra_cols.append("bound_quadratic_lower")
        extra.append(c(times))
        summary["plateau_lower"] = c.limit
    if "local_conditional" in bnd:
        lc = bnd["local_conditional"]
        res = conditional_gap_on_ball_event(snaps, obj, *cond_args)
        summary["p_event"] = res.p_event
        col = np.full(times.size, np.nan)
        if res.p_event > 0:
            c = local_conditional_bound(gap0, lc["ell1p"], lc["ell2p"], sigma, res.p_event)
            col[: res.times.size] = c(res.times)
        extra_cols.append("bound_local_conditional")
        extra.append(col)
    columns = columns + extra_cols
    rows = [list(r) + [float(e[i]) for e in extra] for i, r in enumerate(rows)]
    write_csv(out / "observables.csv", columns, rows)

    with JsonlSink(out / "snapshots.jsonl") as sink:
        for s in snaps:
            sink.write(snapshot_record(s, obj))
    write_positions(out / "positions_final.llab", snaps[-1].positions, snaps[-1].t)

    last = rows[-1]
    summary.update(gap_final_mean=last[1], gap_final_stderr=last[2], t_last=last[0])
    for name in sets:
        summary[f"mass_{name}_final"] = last[columns.index(f"mass_{name}")]
    if cert is not None:
        # exceedance of the decay curve beyond MC error is reported, never fatal
        decay = decay_upper_bound(gap0, cert, sigma)(times)
        mc = np.array([r[1] - 3 * r[2] for r in rows])
        over = times[mc > decay * (1 + 1e-12)]
        summary["decay_exceedances"] = int(over.size)
        summary["decay_flag"] = (None if over.size == 0 else "gap exceeds the decay bound by"
                                 f" more than 3 stderr at t={over.tolist()}")
    return summary


# ----------------------------------------------------------------------------
# Fokker-Planck grid solves


def _phi0_values(sec, gen):
    nodes = gen.grid.nodes
    kind = sec["kind"]
    if kind == "constant":
        return np.ones(gen.size)
    c = np.asarray(sec["center"], float)
    r = np.linalg.norm(nodes - c, axis=1) / float(sec["width"])
    if kind == "bump":
        inside = r < 1
        log_rho = np.full(r.shape, -np.inf)
        log_rho[inside] = -1.0 / (1.0 - r[inside] ** 2)
    else:
        log_rho = -0.5 * r ** 2
    # phi = rho / pi computed in logs; the global shift cancels after normalization
    log_phi = log_rho - gen.log_pi
    finite = np.isfinite(log_phi)
    if not np.any(finite):
        raise NumericalFailure("initial density vanishes on every grid node")
    log_phi = log_phi - np.max(log_phi[finite])
    return np.where(finite, np.exp(log_phi), 0.0)


FP_COLUMNS = ["t", "phi_l2_pi", "dirichlet_pi", "fk2_norm", "fk3_norm", "mass_window",
              "bound_dirichlet", "bound_k2", "bound_k3"]


def _run_fp(cfg, out, n_jobs):
    obj = cfg.objective
    g, pde = cfg.section("grid"), cfg.section("pde")
    grid = Grid(tuple(tuple(b) for b in g["bounds"]), tuple(np.atleast_1d(g["n_cells"])))
    sigma = float(pde["sigma"])
    gen = build_generator(grid, obj, sigma)
    f0 = normalized_field(gen, _phi0_values(pde["phi0"], gen))
    times = [float(t) for t in pde["record_times"]]
    run = [f0] + evolve(f0, gen, float(pde["dt"]), [t for t in times if t > 0],
                        pde.get("scheme", "implicit"))
    n0 = weighted_l2_norm(f0)
    lo, hi = pde.get("window", [-1.0, 1.0])
    wlo, whi = np.full(grid.dim, lo), np.full(grid.dim, hi)
    bd, b2, b3 = dirichlet_decay_bound(n0), higher_order_bound(n0, 2), higher_order_bound(n0, 3)
    rows = []
    for f in run:
        rows.append([f.t, weighted_l2_norm(f), weighted_dirichlet(f), apply_Fk(f, 2)[1],
                     apply_Fk(f, 3)[1], f.mass_on_window(wlo, whi), bd(f.t), b2(f.t), b3(f.t)])
    write_csv(out / "fp_norms.csv", FP_COLUMNS, rows)
    write_field(out / "phi_final.llab", run[-1])

    m = domain_pi_mass(gen)
    summary = {"sigma": sigma, "dt": float(pde["dt"]), "n_nodes": grid.size,
               "pi_domain_mass": m, "phi0_sq_norm": n0, "phi_inf": 1.0 / m,
               "total_mass_drift": abs(run[-1].total_mass() - 1.0),
               "n_capped": gen.n_capped}
    try:
        rep = phi_limit_report(run[1:], m, pde.get("integrability", "integrable"),
                               (lo, hi), obj)
        summary.update(max_rel_deviation=_finite_or_none(rep.max_rel_deviation),
                       window_mass_decreasing=rep.mass_decreasing, limit_notes=rep.notes)
    except WindowTooShort as e:
        summary["limit_notes"] = [str(e)]
    return summary


# ----------------------------------------------------------------------------
# SGD


def _run_sgd(cfg, out, n_jobs):
    obj = cfg.objective
    s = cfg.section("sgd")
    eta, mu, L = cfg.derived["eta"], cfg.derived["mu"], cfg.derived["L_smooth"]
    delta = float(s.get("noise_variance", 0.0))
    k_max, n_seeds = int(s["k_max"]), int(s.get("n_seeds", 1))
    w0 = np.asarray(s["w0"], float)
    ks = np.asarray(s.get("record_k", np.arange(k_max + 1)), dtype=int)
    oracle = gaussian_noise_oracle(obj, delta) if delta > 0 else exact_gradient_oracle(obj)

    def gap_table(grad_oracle):
        g = np.empty((n_seeds, ks.size))
        for i in range(n_seeds):
            it = simulate_sgd(grad_oracle, w0, eta, k_max, seed=cfg.seed + i)
            g[i] = obj.gap(np.stack(it)[ks])
        return g.mean(0), g.std(0, ddof=1) / np.sqrt(n_seeds) if n_seeds > 1 else np.zeros(ks.size)

    mean, se = gap_table(oracle)
    gap0 = float(obj.gap(w0))
    bound = np.array([sgd_recursion_bound(gap0, mu, eta, L, delta, int(k)) for k in ks])
    columns = ["k", "gap_mean", "gap_stderr", "bound_sgd_recursion"]
    cols = [ks.astype(float), mean, se, bound]
    summary = {"eta": eta, "mu": mu, "L_smooth": L, "noise_variance": delta, "n_seeds": n_seeds,
               "k_max": k_max, "loss_min": cfg.derived["loss_min"],
               "gap_final_mean": float(mean[-1]), "gap_final_stderr": float(se[-1]),
               "bound_final": float(bound[-1])}

    if "langevin_sigma" in s:
        sig = float(s["langevin_sigma"])
        lmean, lse = gap_table(langevin_oracle(obj, eta, sig))
        sc = SimConfig(sig, eta, eta * k_max, n_seeds, cfg.seed, tuple(eta * ks))
        snaps = simulate_ensemble(obj, InitialLaw.point(w0), sc, n_jobs=n_jobs)
        eg = np.array([obj.gap(sn.positions) for sn in snaps])
        emean = eg.mean(1)
        ese = eg.std(1, ddof=1) / np.sqrt(n_seeds) if n_seeds > 1 else np.zeros(len(snaps))
        columns += ["langevin_sgd_gap_mean", "langevin_sgd_gap_stderr",
                    "ensemble_gap_mean", "ensemble_gap_stderr"]
        cols += [lmean, lse, emean, ese]
        # one path through both code paths with a shared seed
        it = np.stack(simulate_sgd(langevin_oracle(obj, eta, sig), w0, eta, k_max, cfg.seed))
        sc1 = SimConfig(sig, eta, eta * k_max, 1, cfg.seed, tuple(eta * np.arange(k_max + 1)))
        path = np.stack([sn.positions[0] for sn in simulate_ensemble(obj, InitialLaw.point(w0),
                                                                     sc1)])
        summary["single_path_max_abs_diff"] = float(np.max(np.abs(it - path)))
        summary["langevin_sigma"] = sig
    write_csv(out / "sgd.csv", columns, np.column_stack(cols).tolist())
    return summary


# ----------------------------------------------------------------------------
# local PL probes on networks


def _run_nn(cfg, out, n_jobs):
    from ..nn_local_pl import MLPSpec, probe_local_pl, width_scaling_report

    net, pr = cfg.section("network"), cfg.section("probe")
    data = build_dataset(cfg.section("dataset"))
    act = net.get("activation", "tanh")
    R = float(pr["R"])
    rows = []
    medians = []
    for m in net["hidden_widths"]:
        spec = MLPSpec((data.inputs.shape[1], int(m), data.targets.shape[1]), (act, "linear"))
        mus = []
        for s in pr.get("seeds", [0]):
            w0 = spec.init_params(np.random.default_rng(int(s)))
            p = probe_local_pl(spec, data, w0, R, int(pr.get("n_samples", 256)),
                               float(pr.get("gap_floor", 1e-10)), seed=int(s))
            rows.append([int(m), int(s), p.mu_hat, p.ell1_hat, p.n_admitted, p.violation_count])
            mus.append(p.mu_hat)
        medians.append(float(np.median(mus)))
    write_csv(out / "probe.csv",
              ["width", "seed", "mu_hat", "ell1_hat", "n_admitted", "violation_count"], rows)
    trend = bool(np.all(np.diff(medians) >= 0))
    return {"R": R, "widths": [int(m) for m in net["hidden_widths"]], "median_mu_hat": medians,
            "all_positive": bool(all(r[2] > 0 for r in rows)),
            "trend_nondecreasing": trend,
            "trend_flag": None if trend else "median mu_hat decreased with width on this probe",
            "width_proxy": width_scaling_report(data.inputs.shape[1], 1, R),
            "n_data": data.n}


_RUNNERS = {"langevin": _run_langevin, "fokker_planck": _run_fp, "sgd": _run_sgd,
            "nn_probe": _run_nn}


def resolve_output_dir(cfg, output_dir=None):
    if output_dir is not None:
        return Path(output_dir)
    if cfg.output_dir:
        p = Path(cfg.output_dir)
        return p if p.is_absolute() else output_root() / p
    return output_root() / cfg.name


def run_experiment(cfg, output_dir=None, n_jobs=1):
    """Run ``cfg`` and return its :class:`RunManifest`.

    On a numerical failure the partial outputs, an ``error.json`` and a
    manifest with ``status = "numerical_failure"`` are still written; the
    error is re-raised with the manifest attached as ``err.manifest``.
    """
    target = resolve_output_dir(cfg, output_dir)
    target.parent.mkdir(parents=True, exist_ok=True)
    scratch = target.parent / f".{target.name}.partial-{os.getpid()}"
    if scratch.exists():
        shutil.rmtree(scratch)
    scratch.mkdir()
    started = _now()
    status, error = "ok", None
    try:
        _json(scratch / "config.json", {"config": cfg.raw, "config_hash": cfg.config_hash()})
        summary = _RUNNERS[cfg.kind](cfg, scratch, n_jobs)
    except NumericalFailure as e:
        status, error = "numerical_failure", e
        summary = {}
        _json(scratch / "error.json", {"type": type(e).__name__, "message": str(e)})
        snaps = getattr(e, "snapshots", None)
        if snaps:
            with JsonlSink(scratch / "snapshots.jsonl") as sink:
                for s in snaps:
                    sink.write(snapshot_record(s))
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    _json(scratch / "summary.json", summary)
    if target.exists():
        shutil.rmtree(target)
    scratch.rename(target)
    manifest = RunManifest(cfg.name, cfg.kind, cfg.config_hash(), __version__, started, _now(),
                           status, summary=summary, directory=str(target))
    manifest.refresh_files()
    manifest.save()
    if error is not None:
        error.manifest = manifest
        raise error
    return manifest
