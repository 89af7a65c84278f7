"""Experiment configuration: TOML parsing, defaults and fail-fast validation.

A config has top-level ``name``, ``kind`` and ``seed`` keys plus tables that
depend on ``kind``:

``langevin``       ``[objective]``, ``[sim]``, ``[init]``, optional
                   ``[certificate]``, ``[estimators]``, ``[bounds]``
``fokker_planck``  ``[objective]``, ``[grid]``, ``[pde]``
``sgd``            ``[objective]``, ``[sgd]``
``nn_probe``       ``[network]``, ``[dataset]``, ``[probe]``

Every value is checked before anything runs; the first problem raises
:class:`ConfigInvalid` with the dotted path of the offending key.
"""

import copy
import hashlib
import json
import math
import numbers
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import ConfigInvalid, LangevinLabError
from ..objective import (PLCertificate, QuadraticLoss, flat, quadratic_pl_constants,
                         quartic_well, squared_norm)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("langevin", "fokker_planck", "sgd", "nn_probe")
OBJECTIVE_TYPES = ("squared_norm", "quadratic", "flat", "quartic_well", "linear_network")

_ALLOWED = {
    "": {"name", "kind", "seed", "description", "output_dir", "objective", "certificate", "sim",
         "init", "estimators", "bounds", "grid", "pde", "sgd", "network", "dataset", "probe"},
    "objective": {"type", "dim", "scale", "center", "A", "embed_dim", "w_star", "dataset"},
    "certificate": {"ell1", "ell2", "ell3"},
    "sim": {"sigma", "dt", "t_final", "n_paths", "record_times"},
    "init": {"kind", "w0", "mean", "var", "lo", "hi"},
    "estimators": {"sets", "eps", "conditional"},
    "bounds": {"decay_upper", "quadratic_lower", "plateau", "local_conditional"},
    "grid": {"bounds", "n_cells"},
    "pde": {"sigma", "dt", "record_times", "scheme", "phi0", "window", "integrability",
            "write_fields"},
    "sgd": {"eta", "eta_factor", "noise_variance", "k_max", "n_seeds", "w0", "record_k",
            "langevin_sigma"},
    "network": {"widths", "hidden_widths", "activation"},
    "dataset": {"kind", "n_inputs", "n_outputs", "n_samples", "noise", "seed", "path"},
    "probe": {"R", "n_samples", "gap_floor", "seeds", "radii"},
}


@dataclass
class ExperimentConfig:
    """A validated experiment description.

    ``raw`` is the config as written (after defaults); its canonical JSON is
    what :meth:`config_hash` digests, so the hash ignores key order.
    """

    name: str
    kind: str
    seed: int
    raw: dict
    output_dir: str = None
    source: str = None
    objective: object = field(default=None, repr=False)
    certificate: object = field(default=None, repr=False)
    derived: dict = field(default_factory=dict)

    def config_hash(self):
        return config_hash(self.raw)

    def section(self, key):
        return self.raw.get(key, {})


def canonical_json(d):
    return json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(d):
    d = {k: v for k, v in d.items() if k != "output_dir"}
    return hashlib.sha256(canonical_json(d).encode()).hexdigest()


# ----------------------------------------------------------------------------
# small validators


def _req(sec, key, path):
    if key not in sec:
        raise ConfigInvalid(f"{path}.{key}" if path else key, "required key missing")
    return sec[key]


def _num(v, path, lo=None, hi=None, strict_lo=False, integer=False):
    if isinstance(v, (bool, np.bool_)) or not isinstance(v, numbers.Real):
        raise ConfigInvalid(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigInvalid(path, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigInvalid(path, "must be finite")
    if lo is not None and (v <= lo if strict_lo else v < lo):
        raise ConfigInvalid(path, f"must be {'>' if strict_lo else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigInvalid(path, f"must be <= {hi}, got {v}")
    return int(v) if integer else float(v)


def _vec(v, path, dim=None):
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigInvalid(path, "expected a list of numbers") from None
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ConfigInvalid(path, "expected a flat list of finite numbers")
    if dim is not None and arr.size != dim:
        raise ConfigInvalid(path, f"expected length {dim}, got {arr.size}")
    return arr


def _times(v, path, t_max=None):
    t = _vec(v, path)
    if t.size == 0:
        raise ConfigInvalid(path, "need at least one time")
    if np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ConfigInvalid(path, "times must be nonnegative and strictly increasing")
    if t_max is not None and t[-1] > t_max * (1 + 1e-12):
        raise ConfigInvalid(path, f"times must not exceed {t_max}")
    return t


def _check_keys(d, path):
    allowed = _ALLOWED.get(path)
    if allowed is None or not isinstance(d, dict):
        return
    for k in d:
        if k not in allowed:
            where = f"{path}.{k}" if path else k
            raise ConfigInvalid(where, "unknown key")


# ----------------------------------------------------------------------------
# objects built from sections


def build_dataset(sec, path="dataset"):
    from ..nn_local_pl import Dataset, MLPSpec, random_label_dataset, teacher_dataset

    _check_keys(sec, "dataset")
    kind = sec.get("kind", "teacher")
    if kind == "csv":
        p = _req(sec, "path", path)
        n_in = _num(_req(sec, "n_inputs", path), f"{path}.n_inputs", 1, integer=True)
        if not Path(p).exists():
            raise ConfigInvalid(f"{path}.path", f"file {p} not found")
        return Dataset.from_csv(p, n_in)
    n_in = _num(_req(sec, "n_inputs", path), f"{path}.n_inputs", 1, integer=True)
    n_out = _num(sec.get("n_outputs", 1), f"{path}.n_outputs", 1, integer=True)
    n = _num(_req(sec, "n_samples", path), f"{path}.n_samples", 1, integer=True)
    rng = np.random.default_rng(_num(sec.get("seed", 0), f"{path}.seed", 0, integer=True))
    if kind == "teacher":
        noise = _num(sec.get("noise", 0.0), f"{path}.noise", 0)
        return teacher_dataset(MLPSpec((n_in, n_out), ("linear",)), n, rng, noise)
    if kind == "random":
        return random_label_dataset(n_in, n_out, n, rng)
    raise ConfigInvalid(f"{path}.kind", f"unknown dataset kind {kind!r}")


def build_objective(sec, path="objective"):
    _check_keys(sec, "objective")
    typ = _req(sec, "type", path)
    if typ not in OBJECTIVE_TYPES:
        raise ConfigInvalid(f"{path}.type", f"must be one of {OBJECTIVE_TYPES}")
    if typ == "quadratic":
        try:
            A = np.asarray(_req(sec, "A", path), dtype=float)
        except (TypeError, ValueError):
            raise ConfigInvalid(f"{path}.A", "must be a rectangular numeric matrix") from None
        if A.ndim != 2 or not np.all(np.isfinite(A)):
            raise ConfigInvalid(f"{path}.A", "must be a finite 2D matrix")
        if not np.any(A):
            raise ConfigInvalid(f"{path}.A", "matrix is zero")
        if "embed_dim" in sec:
            # pad with zero columns: the extra coordinates are flat directions
            d = _num(sec["embed_dim"], f"{path}.embed_dim", A.shape[1], integer=True)
            A = np.hstack([A, np.zeros((A.shape[0], d - A.shape[1]))])
        w_star = _vec(sec["w_star"], f"{path}.w_star", A.shape[1]) if "w_star" in sec else None
        return QuadraticLoss(A, w_star)
    if typ == "linear_network":
        from ..nn_local_pl import MLPSpec, linear_network_quadratic

        data = build_dataset(_req(sec, "dataset", path), f"{path}.dataset")
        m0, m1 = data.inputs.shape[1], data.targets.shape[1]
        spec = MLPSpec((m0, m1), ("linear",))
        B = np.kron(np.eye(m1), data.inputs / np.sqrt(m0))
        yv = data.targets.T.ravel()
        w_star = np.linalg.lstsq(B, yv, rcond=None)[0]
        q = QuadraticLoss(B / np.sqrt(data.n), w_star)
        _, loss_min, _, _ = linear_network_quadratic(spec, data)
        return q, loss_min
    dim = _num(_req(sec, "dim", path), f"{path}.dim", 1, integer=True)
    scale = _num(sec.get("scale", 1.0), f"{path}.scale", 0, strict_lo=True)
    if typ == "squared_norm":
        center = _vec(sec["center"], f"{path}.center", dim) if "center" in sec else None
        return squared_norm(dim, scale, center)
    if typ == "flat":
        return flat(dim)
    return quartic_well(dim, scale)


def default_certificate(obj):
    """Constants that hold globally for the shipped objectives, or ``None``."""
    if isinstance(obj, QuadraticLoss):
        return quadratic_pl_constants(obj.A)
    a = obj.params.get("scale")
    if obj.name == "squared_norm":
        # a|w - c|^2: |grad|^2 = 4a gap, Lap = 2 a d
        return PLCertificate(4.0 * a, 0.0, 2.0 * a * obj.dim)
    return None


def _certificate(sec, obj, sigma, path="certificate"):
    _check_keys(sec, "certificate")
    if sec:
        ell1 = _num(_req(sec, "ell1", path), f"{path}.ell1", 0, strict_lo=True)
        ell2 = _num(sec.get("ell2", 0.0), f"{path}.ell2", 0)
        ell3 = _num(sec.get("ell3", 0.0), f"{path}.ell3", 0)
        cert = PLCertificate(ell1, ell2, ell3)
    else:
        cert = default_certificate(obj)
    if cert is not None and not cert.ell1 > sigma * cert.ell2:
        raise ConfigInvalid(
            path, f"admissibility rule ell1 > sigma*ell2 violated "
                  f"(ell1={cert.ell1:g}, sigma*ell2={sigma * cert.ell2:g}); "
                  "the exponential decay bound needs a positive rate")
    return cert


# ----------------------------------------------------------------------------
# per-kind validation


def _validate_langevin(raw, cfg):
    obj = build_objective(_req(raw, "objective", ""))
    if isinstance(obj, tuple):
        obj = obj[0]
    sim = _req(raw, "sim", "")
    _check_keys(sim, "sim")
    sigma = _num(_req(sim, "sigma", "sim"), "sim.sigma", 0)
    dt = _num(_req(sim, "dt", "sim"), "sim.dt", 0, strict_lo=True)
    t_final = _num(_req(sim, "t_final", "sim"), "sim.t_final", 0, strict_lo=True)
    if dt > t_final:
        raise ConfigInvalid("sim.dt", "must not exceed sim.t_final")
    _num(sim.get("n_paths", 1), "sim.n_paths", 1, integer=True)
    if "record_times" in sim:
        _times(sim["record_times"], "sim.record_times", t_final)
    init = _req(raw, "init", "")
    _check_keys(init, "init")
    kind = _req(init, "kind", "init")
    if kind == "point":
        _vec(_req(init, "w0", "init"), "init.w0", obj.dim)
    elif kind == "gaussian":
        _vec(_req(init, "mean", "init"), "init.mean", obj.dim)
        var = np.broadcast_to(np.asarray(_req(init, "var", "init"), float), (obj.dim,))
        if np.any(var <= 0):
            raise ConfigInvalid("init.var", "variances must be positive")
    elif kind == "uniform_box":
        lo = _vec(_req(init, "lo", "init"), "init.lo", obj.dim)
        hi = _vec(_req(init, "hi", "init"), "init.hi", obj.dim)
        if np.any(hi <= lo):
            raise ConfigInvalid("init.hi", "need lo < hi componentwise")
    else:
        raise ConfigInvalid("init.kind", f"unknown initial law {kind!r}")
    cert = _certificate(raw.get("certificate", {}), obj, sigma)
    est = raw.get("estimators", {})
    _check_keys(est, "estimators")
    for i, s in enumerate(est.get("sets", [])):
        p = f"estimators.sets[{i}]"
        if not isinstance(s, dict):
            raise ConfigInvalid(p, "expected a table")
        _req(s, "name", p)
        typ = _req(s, "type", p)
        if typ == "ball":
            _num(_req(s, "radius", p), f"{p}.radius", 0, strict_lo=True)
        elif typ == "box":
            lo = _vec(_req(s, "lo", p), f"{p}.lo", obj.dim)
            hi = _vec(_req(s, "hi", p), f"{p}.hi", obj.dim)
            if np.any(hi <= lo):
                raise ConfigInvalid(f"{p}.hi", "need lo < hi componentwise")
        elif typ == "tube":
            if obj.minimizer_projection is None:
                raise ConfigInvalid(f"{p}.type", "objective has no minimizer projection")
            if "radius" not in s and "eps" not in s:
                raise ConfigInvalid(p, "tube needs radius or eps")
            if "eps" in s:
                _num(s["eps"], f"{p}.eps", 0, strict_lo=True)
                if cert is None or not isinstance(obj, QuadraticLoss):
                    raise ConfigInvalid(f"{p}.eps", "eps tubes need a quadratic objective")
            else:
                _num(s["radius"], f"{p}.radius", 0, strict_lo=True)
        else:
            raise ConfigInvalid(f"{p}.type", f"unknown set type {typ!r}")
    if "eps" in est:
        _num(est["eps"], "estimators.eps", 0, strict_lo=True)
    if "conditional" in est:
        c = est["conditional"]
        _num(_req(c, "R", "estimators.conditional"), "estimators.conditional.R", 0)
        _num(_req(c, "T", "estimators.conditional"), "estimators.conditional.T", 0, t_final)
    bnd = raw.get("bounds", {})
    _check_keys(bnd, "bounds")
    if (bnd.get("decay_upper") or bnd.get("plateau")) and cert is None:
        raise ConfigInvalid("bounds.decay_upper", "needs a [certificate] for this objective")
    if bnd.get("quadratic_lower") and not isinstance(obj, QuadraticLoss):
        raise ConfigInvalid("bounds.quadratic_lower", "only defined for quadratic objectives")
    if "local_conditional" in bnd:
        lc = bnd["local_conditional"]
        p = "bounds.local_conditional"
        _num(_req(lc, "ell1p", p), f"{p}.ell1p", 0, strict_lo=True)
        _num(_req(lc, "ell2p", p), f"{p}.ell2p", 0)
        if "conditional" not in est:
            raise ConfigInvalid(p, "needs estimators.conditional (R, T)")
    cfg.objective = obj
    cfg.certificate = cert


def _validate_fp(raw, cfg):
    obj = build_objective(_req(raw, "objective", ""))
    if isinstance(obj, tuple):
        obj = obj[0]
    if obj.dim not in (1, 2):
        raise ConfigInvalid("objective.dim", "grid solves support dimension 1 or 2")
    grid = _req(raw, "grid", "")
    _check_keys(grid, "grid")
    b = np.asarray(_req(grid, "bounds", "grid"), dtype=float)
    if b.shape != (obj.dim, 2) or np.any(b[:, 1] <= b[:, 0]):
        raise ConfigInvalid("grid.bounds", f"need {obj.dim} pairs [lo, hi] with lo < hi")
    n = np.atleast_1d(_req(grid, "n_cells", "grid"))
    for i, v in enumerate(n):
        _num(v, f"grid.n_cells[{i}]", 16, integer=True)
    pde = _req(raw, "pde", "")
    _check_keys(pde, "pde")
    _num(_req(pde, "sigma", "pde"), "pde.sigma", 0, strict_lo=True)
    _num(_req(pde, "dt", "pde"), "pde.dt", 0, strict_lo=True)
    _times(_req(pde, "record_times", "pde"), "pde.record_times")
    if pde.get("scheme", "implicit") not in ("implicit", "explicit"):
        raise ConfigInvalid("pde.scheme", "must be implicit or explicit")
    phi0 = _req(pde, "phi0", "pde")
    kind = _req(phi0, "kind", "pde.phi0")
    if kind not in ("bump", "gaussian", "constant"):
        raise ConfigInvalid("pde.phi0.kind", "must be bump, gaussian or constant")
    if kind in ("bump", "gaussian"):
        _vec(_req(phi0, "center", "pde.phi0"), "pde.phi0.center", obj.dim)
        _num(_req(phi0, "width", "pde.phi0"), "pde.phi0.width", 0, strict_lo=True)
    if pde.get("integrability", "integrable") not in ("integrable", "non_integrable", "probe"):
        raise ConfigInvalid("pde.integrability", "must be integrable, non_integrable or probe")
    w = _vec(pde.get("window", [-1.0, 1.0]), "pde.window", 2)
    if w[1] <= w[0]:
        raise ConfigInvalid("pde.window", "need lo < hi")
    cfg.objective = obj


def _validate_sgd(raw, cfg):
    obj = build_objective(_req(raw, "objective", ""))
    loss_min = 0.0
    if isinstance(obj, tuple):
        obj, loss_min = obj
    if not isinstance(obj, QuadraticLoss):
        raise ConfigInvalid("objective.type", "sgd runs need a quadratic or linear_network objective")
    s = _req(raw, "sgd", "")
    _check_keys(s, "sgd")
    if ("eta" in s) == ("eta_factor" in s):
        raise ConfigInvalid("sgd", "give exactly one of eta or eta_factor")
    L_smooth = 2.0 * obj.sigma_max ** 2
    if "eta" in s:
        eta = _num(s["eta"], "sgd.eta", 0, strict_lo=True)
    else:
        eta = _num(s["eta_factor"], "sgd.eta_factor", 0, 1.0, strict_lo=True) / L_smooth
    if eta > 1.0 / L_smooth * (1 + 1e-12):
        raise ConfigInvalid("sgd.eta", f"step exceeds 1/L = {1.0 / L_smooth:g}")
    _num(s.get("noise_variance", 0.0), "sgd.noise_variance", 0)
    k_max = _num(_req(s, "k_max", "sgd"), "sgd.k_max", 1, integer=True)
    _num(s.get("n_seeds", 1), "sgd.n_seeds", 1, integer=True)
    _vec(_req(s, "w0", "sgd"), "sgd.w0", obj.dim)
    if "record_k" in s:
        k = _vec(s["record_k"], "sgd.record_k")
        if np.any(k < 0) or np.any(k > k_max) or np.any(k != np.round(k)) or \
                np.any(np.diff(k) <= 0):
            raise ConfigInvalid("sgd.record_k", "need increasing integers in [0, k_max]")
    if "langevin_sigma" in s:
        _num(s["langevin_sigma"], "sgd.langevin_sigma", 0, strict_lo=True)
    cfg.objective = obj
    cfg.derived = {"eta": eta, "loss_min": loss_min, "L_smooth": L_smooth,
                   "mu": 2.0 * obj.sigma_min_pos ** 2}


def _validate_nn(raw, cfg):
    net = _req(raw, "network", "")
    _check_keys(net, "network")
    hw = _req(net, "hidden_widths", "network")
    if not isinstance(hw, list) or not hw:
        raise ConfigInvalid("network.hidden_widths", "expected a non-empty list of widths")
    for i, m in enumerate(hw):
        _num(m, f"network.hidden_widths[{i}]", 1, integer=True)
    if net.get("activation", "tanh") not in ("tanh", "sigmoid", "linear"):
        raise ConfigInvalid("network.activation", "must be tanh, sigmoid or linear")
    build_dataset(_req(raw, "dataset", ""))
    pr = _req(raw, "probe", "")
    _check_keys(pr, "probe")
    _num(_req(pr, "R", "probe"), "probe.R", 0, strict_lo=True)
    _num(pr.get("n_samples", 256), "probe.n_samples", 1, integer=True)
    _num(pr.get("gap_floor", 1e-10), "probe.gap_floor", 0)
    seeds = pr.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigInvalid("probe.seeds", "expected a non-empty list of seeds")


_VALIDATORS = {"langevin": _validate_langevin, "fokker_planck": _validate_fp,
               "sgd": _validate_sgd, "nn_probe": _validate_nn}


def parse_config(raw, source=None):
    """Validate a config dict and return an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigInvalid("", "config must be a table")
    raw = copy.deepcopy(raw)
    _check_keys(raw, "")
    name = _req(raw, "name", "")
    if not isinstance(name, str) or not name or "/" in name:
        raise ConfigInvalid("name", "must be a non-empty string without '/'")
    kind = _req(raw, "kind", "")
    if kind not in KINDS:
        raise ConfigInvalid("kind", f"must be one of {KINDS}")
    seed = _num(raw.get("seed", 0), "seed", 0, integer=True)
    raw["seed"] = seed
    cfg = ExperimentConfig(name, kind, seed, raw, raw.get("output_dir"), source)
    try:
        _VALIDATORS[kind](raw, cfg)
    except ConfigInvalid:
        raise
    except LangevinLabError as e:
        # module preconditions surface as config errors before any run starts
        raise ConfigInvalid(kind, str(e)) from e
    except ValueError as e:
        raise ConfigInvalid(kind, str(e)) from e
    return cfg


def load_config(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(str(path), "file not found") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigInvalid(str(path), f"not valid TOML: {e}") from None
    return parse_config(raw, source=str(path))
