"""Fully connected network with ``1/sqrt(width)`` scaling, square loss and local PL probes.

Layer ``l`` computes ``y_l = act_l(W_l y_{l-1} / sqrt(m_{l-1}))`` with
``W_l`` of shape ``(m_l, m_{l-1})``. Parameters are the row-major
concatenation of ``W_1 .. W_{L+1}``.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import Diverged, NoAdmissibleSamples, ShapeMismatch
from .objective import ObjectiveSpec
from .regions import unit_ball_sample

ACTIVATIONS = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "sigmoid": (lambda z: 0.5 * (1.0 + np.tanh(0.5 * z)), lambda z, a: a * (1.0 - a)),
    "linear": (lambda z: z, lambda z, a: np.ones_like(z)),
}


@dataclass(frozen=True)
class MLPSpec:
    widths: tuple
    activations: tuple = None

    def __post_init__(self):
        widths = tuple(int(m) for m in self.widths)
        if len(widths) < 2 or any(m < 1 for m in widths):
            raise ValueError("need at least input and output widths, all >= 1")
        acts = self.activations
        if acts is None:
            acts = ("tanh",) * (len(widths) - 2) + ("linear",)
        acts = tuple(acts)
        if len(acts) != len(widths) - 1:
            raise ValueError("one activation per layer")
        for a in acts:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "activations", acts)

    @property
    def shapes(self):
        return [(self.widths[l + 1], self.widths[l]) for l in range(len(self.widths) - 1)]

    @property
    def n_params(self):
        return sum(a * b for a, b in self.shapes)

    def unpack(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_params,):
            raise ShapeMismatch(f"expected {self.n_params} parameters, got shape {w.shape}")
        out, i = [], 0
        for r, c in self.shapes:
            out.append(w[i:i + r * c].reshape(r, c))
            i += r * c
        return out

    def init_params(self, rng):
        """i.i.d. standard normal weights."""
        return rng.standard_normal(self.n_params)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.targets, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if x.shape[0] != y.shape[0] or x.shape[0] < 1:
            raise ShapeMismatch("inputs and targets need the same positive number of rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    @property
    def n(self):
        return self.inputs.shape[0]

    def subset(self, idx):
        return Dataset(self.inputs[idx], self.targets[idx])

    @classmethod
    def from_csv(cls, path, n_inputs):
        """Header row, then input columns followed by target columns."""
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :n_inputs], data[:, n_inputs:])

    def to_csv(self, path):
        header = ",".join([f"x{i}" for i in range(self.inputs.shape[1])]
                          + [f"y{i}" for i in range(self.targets.shape[1])])
        np.savetxt(path, np.hstack([self.inputs, self.targets]), delimiter=",",
                   header=header, comments="", fmt="%.17g")


def _check_input(spec, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != spec.widths[0]:
        raise ShapeMismatch(f"input width {x.shape[1]} != {spec.widths[0]}")
    return x, single


def _forward_cache(spec, w, x):
    Ws = spec.unpack(w)
    acts = [x]
    pre = []
    y = x
    for W, name in zip(Ws, spec.activations):
        z = (y @ W.T) / np.sqrt(W.shape[1])
        y = ACTIVATIONS[name][0](z)
        pre.append(z)
        acts.append(y)
    return Ws, pre, acts


def forward(spec, w, x):
    """Network output for one input (1D) or a batch of rows."""
    x, single = _check_input(spec, x)
    out = _forward_cache(spec, w, x)[2][-1]
    return out[0] if single else out


def square_loss_and_grad(spec, w, data):
    """Mean squared error ``(1/N) sum_i |f(w; x_i) - y_i|^2`` and its gradient."""
    x, _ = _check_input(spec, data.inputs)
    if data.targets.shape[1] != spec.widths[-1]:
        raise ShapeMismatch("target width does not match the output layer")
    Ws, pre, acts = _forward_cache(spec, w, x)
    n = x.shape[0]
    resid = acts[-1] - data.targets
    loss = float(np.sum(resid * resid) / n)
    delta = 2.0 * resid / n
    grads = [None] * len(Ws)
    for l in range(len(Ws) - 1, -1, -1):
        name = spec.activations[l]
        delta = delta * ACTIVATIONS[name][1](pre[l], acts[l + 1])
        scale = 1.0 / np.sqrt(Ws[l].shape[1])
        grads[l] = scale * delta.T @ acts[l]
        delta = scale * delta @ Ws[l]
    return loss, np.concatenate([g.ravel() for g in grads])


def network_objective(spec, data):
    """The square loss as an :class:`ObjectiveSpec` with ``L* = 0`` (Laplacian not provided)."""
    def value(w):
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            return square_loss_and_grad(spec, w, data)[0]
        return np.array([square_loss_and_grad(spec, wi, data)[0] for wi in w.reshape(-1, w.shape[-1])]
                        ).reshape(w.shape[:-1])

    def gradient(w):
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            return square_loss_and_grad(spec, w, data)[1]
        flat = w.reshape(-1, w.shape[-1])
        return np.array([square_loss_and_grad(spec, wi, data)[1] for wi in flat]).reshape(w.shape)

    def laplacian(w):
        raise NotImplementedError("network Laplacian is not implemented")

    return ObjectiveSpec(dim=spec.n_params, value_fn=value, gradient_fn=gradient,
                         laplacian_fn=laplacian, min_value=0.0, name="network_square_loss")


def teacher_dataset(spec, n_samples, rng, noise=0.0):
    """Targets from a random teacher network of the same architecture, inputs ~ N(0, I)."""
    x = rng.standard_normal((n_samples, spec.widths[0]))
    teacher = spec.init_params(rng)
    y = forward(spec, teacher, x)
    if noise:
        y = y + noise * rng.standard_normal(y.shape)
    return Dataset(x, y)


def random_label_dataset(n_inputs, n_outputs, n_samples, rng):
    return Dataset(rng.standard_normal((n_samples, n_inputs)),
                   rng.standard_normal((n_samples, n_outputs)))


@dataclass(frozen=True)
class PLProbe:
    mu_hat: float
    violation_count: int
    n_admitted: int

    @property
    def ell1_hat(self):
        """The same constant in the ``L - L* <= |grad L|^2 / ell1`` convention."""
        return 2.0 * self.mu_hat


def _pl_ratios(spec, data, points, gap_floor):
    ratios = []
    for w in points:
        loss, g = square_loss_and_grad(spec, w, data)
        if loss >= gap_floor:
            ratios.append(float(g @ g) / (2.0 * loss))
    return np.array(ratios)


def probe_local_pl(spec, data, w0, R, n_samples=256, gap_floor=1e-10, seed=0, mu_min=0.0):
    """Sample infimum of ``|grad L|^2 / (2 L)`` over uniform samples of ``B_R(w0)``.

    ``violation_count`` counts admitted samples whose ratio is below ``mu_min``.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    w0 = np.asarray(w0, dtype=float)
    rng = np.random.default_rng(seed)
    pts = w0 + R * unit_ball_sample(rng, n_samples, w0.size)
    r = _pl_ratios(spec, data, pts, gap_floor)
    if r.size == 0:
        raise NoAdmissibleSamples("every sample has loss below gap_floor")
    return PLProbe(float(r.min()), int(np.count_nonzero(r < mu_min)), int(r.size))


def probe_local_pl_radii(spec, data, w0, radii, n_samples=256, gap_floor=1e-10, seed=0):
    """Nested probes: one sample of the largest ball, filtered per radius.

    Because the sample sets are nested the estimates are nonincreasing in the radius.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    w0 = np.asarray(w0, dtype=float)
    rng = np.random.default_rng(seed)
    offsets = radii[-1] * unit_ball_sample(rng, n_samples, w0.size)
    dist = np.linalg.norm(offsets, axis=1)
    pts = w0 + offsets
    ratios = np.full(n_samples, np.nan)
    for i, w in enumerate(pts):
        loss, g = square_loss_and_grad(spec, w, data)
        if loss >= gap_floor:
            ratios[i] = float(g @ g) / (2.0 * loss)
    out = []
    for R in radii:
        sel = (dist <= R) & np.isfinite(ratios)
        out.append(float(np.min(ratios[sel])) if np.any(sel) else np.nan)
    return radii, np.array(out)


@dataclass
class SGDResult:
    losses: np.ndarray
    sup_dist: np.ndarray
    w_final: np.ndarray
    stayed_in_ball: np.ndarray = None


def minibatch_sgd(spec, data, w0, eta, batch_size, k_max, seed=0, R=None):
    """Mini-batch SGD with indices drawn uniformly with replacement.

    With ``batch_size == N`` the full dataset is used in order at every step,
    which is plain gradient descent. Records the loss before each step and
    after the last one, and the running ``sup_k |w_k - w0|``.
    """
    n = data.n
    if not 1 <= batch_size <= n:
        raise ValueError("batch size must lie in [1, N]")
    if not eta > 0:
        raise ValueError("eta must be positive")
    rng = np.random.default_rng(seed)
    w0 = np.asarray(w0, dtype=float)
    w = w0.copy()
    losses = np.empty(k_max + 1)
    sup = np.empty(k_max + 1)
    sup[0] = 0.0
    for k in range(k_max):
        losses[k] = square_loss_and_grad(spec, w, data)[0]
        batch = data if batch_size == n else data.subset(rng.integers(0, n, size=batch_size))
        _, g = square_loss_and_grad(spec, w, batch)
        w = w - eta * g
        if not np.all(np.isfinite(w)):
            raise Diverged(0, k + 1)
        sup[k + 1] = max(sup[k], float(np.linalg.norm(w - w0)))
    losses[k_max] = square_loss_and_grad(spec, w, data)[0]
    stayed = None if R is None else sup <= R
    return SGDResult(losses, sup, w, stayed)


def width_scaling_report(d, L, R):
    """Order-of-magnitude width proxy ``d R^(6L+2)`` (constant-free, not a bound)."""
    if not R > 0:
        raise ValueError("R must be positive")
    return float(d) * float(R) ** (6 * L + 2)


def linear_network_quadratic(spec, data):
    """Hessian, minimum loss and PL/smoothness constants of an all-linear network.

    Only valid for a single linear layer, where the loss is quadratic in ``w``.
    Returns ``(H, loss_min, mu, L_smooth)`` with ``mu`` the smallest positive
    Hessian eigenvalue (``1/2 |grad|^2 >= mu (L - L_min)``) and ``L_smooth``
    the largest.
    """
    if len(spec.widths) != 2 or spec.activations != ("linear",):
        raise ValueError("requires a single linear layer")
    m0, m1 = spec.widths
    x = data.inputs / np.sqrt(m0)
    n = data.n
    # f = W x / sqrt(m0); the parameter vector is W row-major
    B = np.kron(np.eye(m1), x)  # (n*m1, m1*m0) acting on vec(W) row-major
    yv = data.targets.T.ravel()
    H = 2.0 * B.T @ B / n
    sol, *_ = np.linalg.lstsq(B, yv, rcond=None)
    r = B @ sol - yv
    loss_min = float(r @ r / n)
    ev = np.linalg.eigvalsh(H)
    pos = ev[ev > 1e-12 * ev[-1]]
    return H, loss_min, float(pos[0]), float(ev[-1])


class ScaledMLPRegressor(BaseEstimator, RegressorMixin):
    """Regressor trained by mini-batch SGD on the scaled network.

    ``hidden`` lists the hidden widths; input and output widths are read from
    the data. Initial weights are i.i.d. standard normal from ``seed``.
    """

    def __init__(self, hidden=(64,), activation="tanh", eta=0.1, batch_size=8, k_max=1000,
                 seed=0):
        self.hidden = hidden
        self.activation = activation
        self.eta = eta
        self.batch_size = batch_size
        self.k_max = k_max
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        y2 = y[:, None] if y.ndim == 1 else y
        self._single_output = y.ndim == 1
        widths = (X.shape[1],) + tuple(self.hidden) + (y2.shape[1],)
        acts = (self.activation,) * len(self.hidden) + ("linear",)
        self.spec_ = MLPSpec(widths, acts)
        self.n_features_in_ = X.shape[1]
        rng = np.random.default_rng(self.seed)
        self.w0_ = self.spec_.init_params(rng)
        data = Dataset(X, y2)
        res = minibatch_sgd(self.spec_, data, self.w0_, self.eta, min(self.batch_size, data.n),
                            self.k_max, seed=self.seed + 1)
        self.coef_ = res.w_final
        self.loss_curve_ = res.losses
        self.sup_dist_ = res.sup_dist
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        out = forward(self.spec_, self.coef_, X)
        return out[:, 0] if self._single_output else out

    def local_pl(self, X, y, R=1.0, n_samples=256, seed=0, at="init"):
        """Probe the local PL constant around the initial (or fitted) weights."""
        check_is_fitted(self, "coef_")
        y2 = np.asarray(y, dtype=float)
        data = Dataset(check_array(X), y2[:, None] if y2.ndim == 1 else y2)
        center = self.w0_ if at == "init" else self.coef_
        return probe_local_pl(self.spec_, data, center, R, n_samples=n_samples, seed=seed)
