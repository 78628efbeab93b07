"""Convex constraint bodies: membership tests and diameters.

Three variants cover everything the samplers need: an l2 ball, an axis-aligned
box, and all of R^d (diameter infinity).  Bodies serialize to the JSON shapes
used by run configs, e.g. {"type": "l2_ball", "center": [...], "radius": r}.
"""

from __future__ import annotations

import math

import numpy as np


def _check_dim(x: np.ndarray, dim: int) -> None:
    if x.shape != (dim,):
        raise ValueError(f"point has shape {x.shape}, body lives in R^{dim}")


class ConvexBody:
    """Common interface: dim, contains(x), diameter(), center()."""

    dim: int

    def contains(self, x) -> bool:
        raise NotImplementedError

    def project(self, x) -> np.ndarray:
        """Euclidean projection onto the body (identity for interior points)."""
        raise NotImplementedError

    def diameter(self) -> float:
        raise NotImplementedError

    def center(self) -> np.ndarray:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_json(obj: dict) -> "ConvexBody":
        kind = obj.get("type")
        if kind == "l2_ball":
            return L2Ball(np.asarray(obj["center"], dtype=float), float(obj["radius"]))
        if kind == "box":
            return Box(np.asarray(obj["lower"], dtype=float), np.asarray(obj["upper"], dtype=float))
        if kind == "all_space":
            return AllSpace(int(obj["dim"]))
        raise ValueError(f"unknown body type {kind!r}")


class L2Ball(ConvexBody):
    def __init__(self, center, radius):
        self._center = np.atleast_1d(np.asarray(center, dtype=float))
        if self._center.ndim != 1:
            raise ValueError("center must be a vector")
        if not (radius > 0 and math.isfinite(radius)):
            raise ValueError(f"radius must be finite and > 0, got {radius}")
        self.radius = float(radius)
        self.dim = self._center.shape[0]

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return bool(np.linalg.norm(x - self._center) <= self.radius * (1 + 1e-12))

    def project(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        off = x - self._center
        r = float(np.linalg.norm(off))
        if r <= self.radius:
            return x.copy()
        return self._center + self.radius * off / r

    def diameter(self):
        return 2.0 * self.radius

    def center(self):
        return self._center.copy()

    def to_json(self):
        return {"type": "l2_ball", "center": self._center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"L2Ball(center={self._center.tolist()}, radius={self.radius})"


class Box(ConvexBody):
    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower/upper must be vectors of equal length")
        if not np.all(self.lower < self.upper):
            raise ValueError("box requires lower < upper coordinatewise")
        self.dim = self.lower.shape[0]

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        eps = 1e-12 * np.maximum(1.0, np.abs(self.upper - self.lower))
        return bool(np.all(x >= self.lower - eps) and np.all(x <= self.upper + eps))

    def project(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return np.clip(x, self.lower, self.upper)

    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def center(self):
        return 0.5 * (self.lower + self.upper)

    def to_json(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


class AllSpace(ConvexBody):
    def __init__(self, dim):
        if not (isinstance(dim, (int, np.integer)) and dim >= 1):
            raise ValueError(f"dim must be an integer >= 1, got {dim}")
        self.dim = int(dim)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return bool(np.all(np.isfinite(x)))

    def project(self, x):
        x = np.asarray(x, dtype=float)
        _check_dim(x, self.dim)
        return x.copy()

    def diameter(self):
        return math.inf

    def center(self):
        return np.zeros(self.dim)

    def to_json(self):
        return {"type": "all_space", "dim": self.dim}

    def __repr__(self):
        return f"AllSpace(dim={self.dim})"
