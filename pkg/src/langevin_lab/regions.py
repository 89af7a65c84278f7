"""Sets used for sampling regions and for mass estimates."""

from dataclasses import dataclass

import numpy as np

from .exceptions import NoProjection


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have the same shape")
        if not np.all(lo < hi):
            raise ValueError("box requires lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, half_width, dim, center=0.0):
        c = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
        return cls(c - half_width, c + half_width)

    @property
    def dim(self):
        return self.lo.size

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def contains(self, points, objective=None):
        points = np.atleast_2d(points)
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self):
        return self.center.size

    def sample(self, rng, n):
        """Uniform samples in the ball (direction times U**(1/d) radius)."""
        return self.center + self.radius * unit_ball_sample(rng, n, self.dim)

    def contains(self, points, objective=None):
        points = np.atleast_2d(points)
        return np.linalg.norm(points - self.center, axis=1) <= self.radius


@dataclass(frozen=True)
class Tube:
    """Points within ``radius`` of the minimizer set of ``objective``."""

    objective: object
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("tube radius must be positive")
        if self.objective.minimizer_projection is None:
            raise NoProjection("tube membership needs a minimizer projection")

    def contains(self, points, objective=None):
        from .objective import distance_to_minimizers

        return distance_to_minimizers(self.objective, np.atleast_2d(points)) <= self.radius


def unit_ball_sample(rng, n, dim):
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.uniform(size=(n, 1)) ** (1.0 / dim)
    return g * r
