"""Loss families, datasets, and the planted hard instance.

The family enumeration is closed (linear, abs_linear, quadratic_test) so that
the Lipschitz metadata attached to a family is an actual bound, not a hint:
every builder computes G from the data (and the constraint body where the
gradient depends on position).  Every call that touches a loss value goes
through the family's query counter; the samplers report those counts.
"""

from __future__ import annotations

import csv
import io
import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .geometry import ConvexBody, L2Ball

LOSS_KINDS = ("linear", "abs_linear", "quadratic_test")


class QueryCounter:
    """Thread-safe monotone counter. Workers may keep local counts and merge."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n=1):
        if n < 0:
            raise ValueError("counter only moves forward")
        with self._lock:
            self._count += int(n)

    @property
    def count(self):
        with self._lock:
            return self._count

    def reset(self):
        with self._lock:
            self._count = 0


class LossFamily:
    """One of the supported loss forms f(x; s), with a trusted Lipschitz bound.

    kind:
      linear          f(x; s) = <x, s>
      abs_linear      f(x; s) = |<x, s> - offset|
      quadratic_test  f(x; s) = (strength/2) ||x - s||^2

    ``lipschitz`` bounds the gradient norm of every member f(.; s) over the
    data (and body, for the quadratic) it was built against.
    """

    def __init__(self, kind, lipschitz, offset=1.0, strength=1.0):
        if kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {kind!r}; supported: {LOSS_KINDS}")
        if not (lipschitz >= 0 and math.isfinite(lipschitz)):
            raise ValueError(f"lipschitz bound must be finite and >= 0, got {lipschitz}")
        if kind == "quadratic_test" and not strength > 0:
            raise ValueError("quadratic_test requires strength > 0")
        self.kind = kind
        self.lipschitz = float(lipschitz)
        self.offset = float(offset)
        self.strength = float(strength)
        self.counter = QueryCounter()

    def evaluate(self, x, s):
        """Loss value of the member s at the point x. Counts one query."""
        self.counter.add(1)
        return self._value(np.asarray(x, dtype=float), np.asarray(s, dtype=float))

    def evaluate_batch(self, x, samples):
        """Values of all members in ``samples`` at x. Counts len(samples) queries."""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        self.counter.add(samples.shape[0])
        return self._values(np.asarray(x, dtype=float), samples)

    def _value(self, x, s):
        if self.kind == "linear":
            return float(np.dot(x, s))
        if self.kind == "abs_linear":
            return float(abs(np.dot(x, s) - self.offset))
        return float(0.5 * self.strength * np.dot(x - s, x - s))

    def _values(self, x, samples):
        if self.kind == "linear":
            return samples @ x
        if self.kind == "abs_linear":
            return np.abs(samples @ x - self.offset)
        diff = x[None, :] - samples
        return 0.5 * self.strength * np.einsum("ij,ij->i", diff, diff)

    def __repr__(self):
        return f"LossFamily(kind={self.kind!r}, lipschitz={self.lipschitz})"


def linear_family(data) -> LossFamily:
    """Linear losses over the given samples; G = max_i ||s_i||_2."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    G = float(np.max(np.linalg.norm(data, axis=1))) if data.size else 0.0
    return LossFamily("linear", G)


def abs_linear_family(data, offset=1.0) -> LossFamily:
    """|<x, s> - offset| losses; the gradient norm is ||s|| wherever it exists."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    G = float(np.max(np.linalg.norm(data, axis=1))) if data.size else 0.0
    return LossFamily("abs_linear", G, offset=offset)


def quadratic_test_family(data, body: ConvexBody, strength=1.0) -> LossFamily:
    """(strength/2)||x - s||^2 losses; G = strength * max_i sup_{x in body} ||x - s_i||.

    Needs a bounded body: the quadratic is not Lipschitz on all of R^d.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if not math.isfinite(body.diameter()):
        raise ValueError("quadratic_test needs a bounded body for a Lipschitz bound")
    c = body.center()
    reach = body.diameter() / 2.0
    far = float(np.max(np.linalg.norm(data - c[None, :], axis=1))) if data.size else 0.0
    return LossFamily("quadratic_test", strength * (far + reach), strength=strength)


@dataclass(frozen=True)
class ProblemSpec:
    """Model-level constants of a private optimization instance."""

    n: int
    d: int
    G: float
    D: float

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise ValueError(f"n must be an integer >= 1, got {self.n}")
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise ValueError(f"d must be an integer >= 1, got {self.d}")
        if not (self.G > 0 and math.isfinite(self.G)):
            raise ValueError(f"G must be finite and > 0, got {self.G}")
        if not (self.D > 0 and math.isfinite(self.D)):
            raise ValueError(f"D must be finite and > 0, got {self.D}")


@dataclass
class Dataset:
    """n samples in R^d plus a record of where they came from."""

    samples: np.ndarray
    provenance: dict = field(default_factory=lambda: {"kind": "explicit"})

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.ndim != 2:
            raise ValueError("samples must be an (n, d) array")

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def d(self):
        return self.samples.shape[1]

    def replace_sample(self, i, new_sample) -> "Dataset":
        """Neighboring dataset: sample i swapped for new_sample."""
        out = self.samples.copy()
        out[i] = np.asarray(new_sample, dtype=float)
        prov = dict(self.provenance)
        prov["neighbor_of"] = prov.get("kind", "explicit")
        prov["swapped_index"] = int(i)
        return Dataset(out, prov)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        for row in self.samples:
            w.writerow([format(v, ".17g") for v in row])
        return buf.getvalue()

    @staticmethod
    def from_csv(text, provenance=None) -> "Dataset":
        rows = [[float(v) for v in row] for row in csv.reader(io.StringIO(text)) if row]
        return Dataset(np.asarray(rows, dtype=float), provenance or {"kind": "csv"})

    def to_json(self) -> str:
        return json.dumps({"samples": self.samples.tolist(), "provenance": self.provenance})

    @staticmethod
    def from_json(text) -> "Dataset":
        obj = json.loads(text)
        return Dataset(np.asarray(obj["samples"], dtype=float), obj.get("provenance", {"kind": "json"}))


@dataclass(frozen=True)
class GaussianPopulation:
    """Isotropic Gaussian sample distribution N(mean, sigma^2 I)."""

    mean: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be finite and > 0, got {self.sigma}")


@dataclass(frozen=True)
class HardInstanceParams:
    """Planted mean-direction instance: samples ~ N(delta * v, sigma^2 I), v in {-1,1}^d.

    The scales satisfy d * (sigma^2 + delta^2) = G^2 (so E||s||^2 = G^2) and
    delta = sigma sqrt(d) / (2 sqrt(k)), which places the signal exactly at the
    detection threshold of a budget-k sampler.
    """

    v: np.ndarray
    delta: float
    sigma: float
    k_budget: float
    G: float

    def __post_init__(self):
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))
        if not np.all(np.isin(self.v, (-1.0, 1.0))):
            raise ValueError("v must have entries in {-1, +1}")
        d = self.v.shape[0]
        if abs(d * (self.sigma**2 + self.delta**2) - self.G**2) > 1e-12 * self.G**2:
            raise ValueError("scales violate d (sigma^2 + delta^2) = G^2")
        if abs(self.delta - self.sigma * math.sqrt(d) / (2.0 * math.sqrt(self.k_budget))) > 1e-12 * max(self.delta, 1e-300):
            raise ValueError("scales violate delta = sigma sqrt(d) / (2 sqrt(k))")

    @property
    def d(self):
        return self.v.shape[0]

    def population(self) -> GaussianPopulation:
        return GaussianPopulation(self.delta * self.v, self.sigma)

    def ball_minimizer(self) -> np.ndarray:
        """argmin of the population linear loss <x, delta v> over the unit ball."""
        return -self.v / math.sqrt(self.d)


def hard_instance_params(spec: ProblemSpec, k_budget, rng) -> HardInstanceParams:
    """Draw the planted direction and solve the two scale identities."""
    if not (k_budget > 0 and math.isfinite(k_budget)):
        raise ValueError(f"k_budget must be finite and > 0, got {k_budget}")
    d = spec.d
    sigma = spec.G / math.sqrt(d + d * d / (4.0 * k_budget))
    delta = sigma * math.sqrt(d) / (2.0 * math.sqrt(k_budget))
    v = np.where(rng.random(d) < 0.5, -1.0, 1.0)
    return HardInstanceParams(v, delta, sigma, float(k_budget), spec.G)


def sample_hard_instance(spec: ProblemSpec, k_budget, rng):
    """Instance parameters plus an n-sample dataset drawn from the population."""
    params = hard_instance_params(spec, k_budget, rng)
    samples = params.delta * params.v[None, :] + params.sigma * rng.standard_normal((spec.n, spec.d))
    ds = Dataset(samples, {"kind": "hard_instance", "k_budget": float(k_budget),
                           "sigma": params.sigma, "delta": params.delta, "v": params.v.tolist()})
    return params, ds


def erm_objective(family: LossFamily, data: Dataset, x):
    """Empirical risk (1/n) sum_i f(x; s_i). Counts n queries."""
    vals = family.evaluate_batch(x, data.samples)
    return float(np.mean(vals))


def optimality_gap(family: LossFamily, population: GaussianPopulation, x_hat, body: ConvexBody):
    """Population excess risk of x_hat for linear losses over an l2 ball, in closed form.

    E_s f(x; s) = <x, m> with m the population mean, minimized over the ball
    B(c, R) at value <c, m> - R ||m||, so the gap is exact arithmetic.
    """
    if family.kind != "linear":
        raise ValueError("closed-form gap is only defined for the linear family")
    if not isinstance(body, L2Ball):
        raise ValueError("closed-form gap is only defined over an l2 ball")
    x_hat = np.asarray(x_hat, dtype=float)
    m = population.mean
    best = float(np.dot(body.center(), m)) - body.radius * float(np.linalg.norm(m))
    return float(np.dot(x_hat, m)) - best


def query_count(family: LossFamily) -> int:
    return family.counter.count
