"""Closed-form, time-indexed bounds for overlay against observed curves."""

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import InadmissibleSigma, StepTooLarge, ZeroEventProbability

KINDS = ("decay_upper", "plateau", "quadratic_lower", "dirichlet_decay", "higher_order",
         "local_conditional", "sgd_recursion", "local_probability")


@dataclass(frozen=True)
class BoundCurve:
    """A bound ``t -> eval(t)``; vectorized over ``t``.

    ``limit`` is the value as ``t -> inf`` when it is finite.
    """

    kind: str
    params: dict
    fn: Callable = field(repr=False)
    limit: float = float("nan")

    def eval(self, t):
        out = self.fn(np.asarray(t, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    __call__ = eval


def _saturating(start, rate, level):
    """``start e^{-rate t} + level (1 - e^{-rate t})`` using expm1 for small ``rate t``."""
    def f(t):
        decay = np.exp(-rate * t)
        return start * decay - level * np.expm1(-rate * t)
    return f


def decay_upper_bound(gap0, cert, sigma):
    """``gap0 e^{-r t} + sigma ell3 (1 - e^{-r t}) / r`` with ``r = ell1 - sigma ell2``."""
    rate = cert.ell1 - sigma * cert.ell2
    if not rate > 0:
        raise InadmissibleSigma(
            f"need ell1 > sigma*ell2, got ell1={cert.ell1:g}, sigma*ell2={sigma * cert.ell2:g}")
    level = sigma * cert.ell3 / rate
    return BoundCurve("decay_upper",
                      {"gap0": gap0, "ell1": cert.ell1, "ell2": cert.ell2, "ell3": cert.ell3,
                       "sigma": sigma, "rate": rate},
                      _saturating(gap0, rate, level), level)


def plateau(cert, sigma):
    """Constant curve at ``sigma ell3 / (ell1 - sigma ell2)``."""
    rate = cert.ell1 - sigma * cert.ell2
    if not rate > 0:
        raise InadmissibleSigma("need ell1 > sigma*ell2")
    level = sigma * cert.ell3 / rate
    return BoundCurve("plateau", {"sigma": sigma, "ell1": cert.ell1, "ell2": cert.ell2,
                                  "ell3": cert.ell3},
                      lambda t: np.full(np.shape(t), level) if np.ndim(t) else level, level)


def quadratic_lower_bound(gap0, sigma1, frob_sq, sigma):
    """Lower bound for ``|A(w - w*)|^2`` with largest singular value ``sigma1``."""
    if not sigma1 > 0:
        raise ValueError("sigma1 must be positive")
    rate = 4.0 * sigma1 ** 2
    level = 2.0 * sigma * frob_sq / rate
    return BoundCurve("quadratic_lower",
                      {"gap0": gap0, "sigma1": sigma1, "frob_sq": frob_sq, "sigma": sigma},
                      _saturating(gap0, rate, level), level)


def _inverse_power(norm, k):
    def f(t):
        with np.errstate(divide="ignore"):
            return np.where(t > 0, norm * (k / (2.0 * np.where(t > 0, t, 1.0))) ** k, np.inf)
    return f


def dirichlet_decay_bound(phi0_sq_norm):
    """``phi0_sq_norm / (2t)``; infinite at ``t = 0``."""
    if phi0_sq_norm < 0:
        raise ValueError("phi0_sq_norm must be nonnegative")
    return BoundCurve("dirichlet_decay", {"phi0_sq_norm": phi0_sq_norm},
                      _inverse_power(phi0_sq_norm, 1), 0.0)


def higher_order_bound(phi0_sq_norm, k):
    """``(k / 2t)^k phi0_sq_norm``; infinite at ``t = 0``."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    return BoundCurve("higher_order", {"phi0_sq_norm": phi0_sq_norm, "k": int(k)},
                      _inverse_power(phi0_sq_norm, int(k)), 0.0)


def local_conditional_bound(gap0, ell1p, ell2p, sigma, p_event):
    """Bound on the gap conditioned on staying in the ball, divided by the event probability."""
    if not ell1p > 0:
        raise ValueError("ell1p must be positive")
    if not p_event > 0:
        raise ZeroEventProbability("event probability must be positive")
    if p_event > 1:
        raise ValueError("event probability cannot exceed 1")
    level = sigma * ell2p / ell1p
    base = _saturating(gap0, ell1p, level)
    return BoundCurve("local_conditional",
                      {"gap0": gap0, "ell1p": ell1p, "ell2p": ell2p, "sigma": sigma,
                       "p_event": p_event},
                      lambda t: base(t) / p_event, level / p_event)


class ProbabilityBound(NamedTuple):
    value: float
    clamped: bool


def local_probability_bound(sigma, ell1p, ell2p, eps, delta=0.0):
    """Lower bound on ``P(L(w_T) - L* <= eps)``, clamped to ``[0, 1]``."""
    if not eps > 0 or delta < 0:
        raise ValueError("need eps > 0 and delta >= 0")
    raw = 1.0 - (2.0 * sigma * ell2p / (ell1p * eps) + delta)
    val = min(max(raw, 0.0), 1.0)
    return ProbabilityBound(val, val != raw)


def sgd_recursion_bound(gap0, mu, eta, L_smooth, delta_var, k):
    """k-th iterate of ``E_{j+1} = (1 - mu eta) E_j + eta^2 L delta / 2`` from ``E_0 = gap0``."""
    if not 0 < eta:
        raise ValueError("eta must be positive")
    if eta > 1.0 / L_smooth:
        raise StepTooLarge(f"eta={eta:g} exceeds 1/L={1.0 / L_smooth:g}")
    q = mu * eta
    if not 0 < q < 1:
        raise ValueError("need 0 < mu*eta < 1")
    c = eta ** 2 * L_smooth * delta_var / 2.0
    # (1 - q)^k via expm1/log1p keeps the closed form accurate for large k
    decay = np.exp(k * np.log1p(-q))
    return float(decay * gap0 - (c / q) * np.expm1(k * np.log1p(-q)))


def sgd_recursion_curve(gap0, mu, eta, L_smooth, delta_var):
    sgd_recursion_bound(gap0, mu, eta, L_smooth, delta_var, 0)
    q = mu * eta
    c = eta ** 2 * L_smooth * delta_var / 2.0
    return BoundCurve("sgd_recursion",
                      {"gap0": gap0, "mu": mu, "eta": eta, "L": L_smooth, "delta": delta_var},
                      lambda k: np.exp(k * np.log1p(-q)) * gap0 - (c / q) * np.expm1(k * np.log1p(-q)),
                      c / q)
