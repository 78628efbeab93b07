"""Independent checks: grid oracles, TV estimates, quadrature identities, tails.

Everything here deliberately avoids the sampler's own code paths: targets are
rebuilt on dense grids with Simpson normalization, the integral identities are
re-derived by adaptive quadrature, and tail bounds are tested against raw
draws.  The acceptance suite leans on this module as its second opinion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .geometry import AllSpace, Box, L2Ball
from .privacy import normal_cdf


@dataclass
class GridDensity:
    """A normalized density tabulated on a regular grid (d = 1 or 2).

    ``density`` holds pointwise values; integrating them with the stored
    Simpson rule gives exactly 1 (that is how they were normalized).
    """

    axes: tuple
    density: np.ndarray
    log_offset: float

    @property
    def dim(self):
        return len(self.axes)

    def _simpson_weights(self, n):
        if n % 2 == 0:
            raise ValueError("Simpson rule needs an odd number of points")
        w = np.ones(n)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w / 3.0

    def mass(self):
        """Integral of the stored density under the grid rule (should be 1)."""
        if self.dim == 1:
            xs = self.axes[0]
            h = xs[1] - xs[0]
            return float(np.sum(self._simpson_weights(xs.size) * self.density) * h)
        xs, ys = self.axes
        hx, hy = xs[1] - xs[0], ys[1] - ys[0]
        wx = self._simpson_weights(xs.size)
        wy = self._simpson_weights(ys.size)
        return float(wx @ self.density @ wy * hx * hy)

    def value_at(self, x):
        """Nearest-node density value (grids are fine enough for spot checks)."""
        if self.dim == 1:
            xs = self.axes[0]
            i = int(np.clip(np.searchsorted(xs, x), 0, xs.size - 1))
            return float(self.density[i])
        xs, ys = self.axes
        x = np.asarray(x, dtype=float)
        i = int(np.clip(np.searchsorted(xs, x[0]), 0, xs.size - 1))
        j = int(np.clip(np.searchsorted(ys, x[1]), 0, ys.size - 1))
        return float(self.density[i, j])

    def cdf_at(self, x):
        if self.dim != 1:
            raise ValueError("cdf_at is one-dimensional")
        xs = self.axes[0]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (self.density[1:] + self.density[:-1])
                                               * np.diff(xs))])
        cum = cum / cum[-1]
        return float(np.interp(x, xs, cum))

    def bin_masses(self, edges):
        if self.dim != 1:
            raise ValueError("bin masses are one-dimensional")
        xs = self.axes[0]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (self.density[1:] + self.density[:-1])
                                               * np.diff(xs))])
        cum = cum / cum[-1]
        vals = np.interp(edges, xs, cum)
        return np.diff(vals)

    def sample(self, n, rng):
        """Inverse-CDF draws (d = 1), for estimator self-tests."""
        if self.dim != 1:
            raise ValueError("grid sampling is one-dimensional")
        xs = self.axes[0]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (self.density[1:] + self.density[:-1])
                                               * np.diff(xs))])
        cum = cum / cum[-1]
        u = rng.random(n)
        return np.interp(u, cum, xs)


def _support_interval(body, axis):
    if isinstance(body, Box):
        return float(body.lower[axis]), float(body.upper[axis])
    if isinstance(body, L2Ball):
        c = body.center()
        return float(c[axis] - body.radius), float(c[axis] + body.radius)
    raise ValueError("grid oracle needs a bounded body (box or l2 ball); "
                     "pass bounds explicitly for an unbounded target")


def grid_target(objective, cells=4000, bounds=None) -> GridDensity:
    """Tabulate the objective's target density on a regular grid (d <= 2).

    ``bounds``: optional ((lo, hi), ...) per axis; required when the body is
    all of R^d.  At least 2000 cells per axis; cell counts are rounded up to
    even so the Simpson rule applies.
    """
    d = objective.dim
    if d > 2:
        raise ValueError("grid oracles cover d <= 2 only")
    cells = max(2000, int(cells))
    if cells % 2 == 1:
        cells += 1
    body = objective.reg.body
    if bounds is None:
        if isinstance(body, AllSpace):
            raise ValueError("unbounded body: supply bounds=((lo, hi), ...)")
        bounds = tuple(_support_interval(body, a) for a in range(d))
    axes = tuple(np.linspace(lo, hi, cells + 1) for lo, hi in bounds)
    if d == 1:
        pts = axes[0][:, None]
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
    logd = -objective.potential_batch(pts)
    if not isinstance(body, AllSpace):
        inside = np.array([body.contains(p) for p in pts]) if d == 2 and isinstance(body, L2Ball) \
            else np.ones(pts.shape[0], dtype=bool)
        logd = np.where(inside, logd, -np.inf)
    logd -= np.max(logd)
    vals = np.exp(logd)
    if d == 1:
        dens = vals
    else:
        dens = vals.reshape(cells + 1, cells + 1)
    out = GridDensity(axes, dens, 0.0)
    z = out.mass()
    if not z > 0:
        raise ValueError("target mass vanished on the grid; check bounds")
    out.density = dens / z
    total = out.mass()
    if abs(total - 1.0) > 1e-9:
        raise AssertionError(f"grid normalization drifted: {total!r}")
    return out


@dataclass
class TVEstimate:
    tv: float
    ci_low: float
    ci_high: float
    bins: int
    draws: int


def tv_estimate(samples, oracle: GridDensity, bins, rng=None, bootstrap=100) -> TVEstimate:
    """Binned half-L1 distance between draws and the grid oracle, with a bootstrap band.

    (ci_low, ci_high) is the 95% percentile band of the multinomial bootstrap.
    Near tv = 0 the resampling noise is re-added on top of the empirical
    deviation, so the band sits above the point estimate rather than around
    it; read it as a conservative upper uncertainty band, not a centered CI.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 10_000:
        raise ValueError("TV estimation needs at least 1e4 draws")
    if oracle.dim != 1:
        raise ValueError("binned TV is one-dimensional")
    xs = oracle.axes[0]
    edges = np.linspace(xs[0], xs[-1], int(bins) + 1)
    pm = oracle.bin_masses(edges)
    counts, _ = np.histogram(samples, bins=edges)
    outside = samples.size - counts.sum()
    emp = counts / samples.size

    def half_l1(e):
        return 0.5 * (np.abs(e - pm).sum() + outside / samples.size)

    tv = half_l1(emp)
    if rng is None:
        rng = np.random.default_rng(0)
    boots = np.empty(int(bootstrap))
    for b in range(int(bootstrap)):
        # resample bin counts directly: multinomial bootstrap of the histogram
        rc = rng.multinomial(samples.size, np.append(emp, outside / samples.size))
        boots[b] = 0.5 * (np.abs(rc[:-1] / samples.size - pm).sum() + rc[-1] / samples.size)
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return TVEstimate(float(tv), float(lo), float(hi), int(bins), int(samples.size))


def wasserstein1(a, b):
    """W1 between two equal-size one-dimensional samples (sorted matching)."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size != b.size:
        raise ValueError("sorted-matching W1 wants equal sample sizes")
    return float(np.mean(np.abs(a - b)))


def wasserstein1_ci(a, b, rng, bootstrap=200):
    """Percentile bootstrap CI for wasserstein1 (resampling both samples)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    vals = np.empty(int(bootstrap))
    for i in range(int(bootstrap)):
        ra = rng.choice(a, a.size, replace=True)
        rb = rng.choice(b, b.size, replace=True)
        vals[i] = wasserstein1(ra, rb)
    lo, hi = np.percentile(vals, [2.5, 97.5])
    return float(lo), float(hi)


@dataclass
class ClaimIntegrals:
    """Both Gaussian-exponential integral identities at one (a, gamma)."""

    a: float
    gamma: float
    lhs_decay: float
    rhs_decay: float
    lhs_growth: float
    rhs_growth: float

    @property
    def max_error(self):
        return max(abs(self.lhs_decay - self.rhs_decay), abs(self.lhs_growth - self.rhs_growth))


def check_claim_integrals(a, gamma) -> ClaimIntegrals:
    """Quadrature vs closed form for I = int_0^inf e^{+-t} Phi(a - t/gamma) dt.

    Closed forms:   int e^{-t} Phi = Phi(a) - e^{g^2/2 - a g} Phi(a - g)
                    int e^{+t} Phi = -Phi(a) + e^{g^2/2 + a g} Phi(a + g)
    The integrands are truncated 40 standard units past where Phi dies.
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    t_max = gamma * (a + 40.0)
    if not t_max > 0:
        raise ValueError("a is so negative the integrand has no support; widen it")

    lhs1, _ = integrate.quad(lambda t: math.exp(-t) * normal_cdf(a - t / gamma),
                             0.0, min(t_max, 700.0), epsabs=1e-12, epsrel=1e-12, limit=500)
    rhs1 = normal_cdf(a) - math.exp(gamma * gamma / 2.0 - a * gamma) * normal_cdf(a - gamma)
    lhs2, _ = integrate.quad(lambda t: math.exp(t) * normal_cdf(a - t / gamma),
                             0.0, t_max, epsabs=1e-12, epsrel=1e-12, limit=500)
    rhs2 = -normal_cdf(a) + math.exp(gamma * gamma / 2.0 + a * gamma) * normal_cdf(a + gamma)
    return ClaimIntegrals(float(a), float(gamma), lhs1, rhs1, lhs2, rhs2)


@dataclass
class TailCheck:
    t: float
    p_hat: float
    bound: float
    slack: float
    passed: bool


def concentration_probe(draws, eta, G, t_grid):
    """Empirical tails of loss values against exp(-t^2 / (2 eta G^2)).

    Lipschitz functions of the base Gaussian draw are (eta G^2)-subgaussian
    around their mean; each t gets the bound plus three binomial standard
    errors of slack.  Returns per-t results; all(t.passed) is the verdict.
    """
    draws = np.asarray(draws, dtype=float).ravel()
    if not (eta > 0 and G > 0):
        raise ValueError("eta and G must be > 0")
    m = draws.size
    centered = draws - draws.mean()
    out = []
    for t in np.asarray(t_grid, dtype=float):
        if t <= 0:
            raise ValueError("tail thresholds must be > 0")
        p_hat = float(np.mean(centered >= t))
        bound = math.exp(-t * t / (2.0 * eta * G * G))
        slack = 3.0 * math.sqrt(bound * (1.0 - bound) / m)
        out.append(TailCheck(float(t), p_hat, bound, slack, p_hat <= bound + slack))
    return out
