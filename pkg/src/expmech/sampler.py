"""Alternating sampler for strongly log-concave targets with non-smooth losses.

The target has the form

    pi(x)  propto  exp( - E_{i ~ I}[ f_i(x) ]  -  (mu/2) ||x||^2 )   on a body K,

with each member f_i only assumed G-Lipschitz.  The outer chain alternates a
Gaussian forward step y = x + sqrt(eta) * zeta with an exact draw from the
conditional pi(x | y) propto exp(-F(x) - ||x - y||^2 / (2 eta)).  That inner
draw is produced by rejection from the completed-square base Gaussian, with the
acceptance ratio estimated by an unbiased exponential-series estimator that
touches only O(1) member values per attempt in expectation.

This module is the readable reference implementation plus the schedule
derivation; `expmech._kernels` holds a compiled twin of the chain loop used for
simulation-heavy runs (identical law, validated against this code).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ConvexBody
from .losses import LossFamily, QueryCounter

MAX_BASE_ATTEMPTS = 1_000_000
MAX_STEP_ATTEMPTS = 1_000_000


class SamplerAbort(RuntimeError):
    """Raised when a rejection loop exceeds its attempt budget; carries diagnostics."""


@dataclass(frozen=True)
class Regularizer:
    """psi(x) = (mu/2) ||x||^2 restricted to a convex body."""

    mu: float
    body: ConvexBody

    def __post_init__(self):
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be finite and >= 0, got {self.mu}")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.mu * float(np.dot(x, x))


@dataclass(frozen=True)
class ScheduleConstants:
    """The Theta(.) pins of the schedule, surfaced so sweeps can rescale them.

    eta = min( 1/mu,  a_log / (G^2 ln(400/delta_inner)),  a_L / (G^2 L) ),
    L   = ceil( c_L ln(1/delta_inner) ),
    T   = ceil( c_T (1/(eta mu)) ln( (d/mu + D^2) / (eta delta_tv) ) ).
    """

    c_T: float = 16.0
    c_L: float = 8.0
    a_log: float = 2.0**-6
    a_L: float = 2.0**-8

    def __post_init__(self):
        for name in ("c_T", "c_L", "a_log", "a_L"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and > 0, got {v}")


# Defaults satisfy every inequality of the convergence analysis with slack.
PROOF_CONSTANTS = ScheduleConstants()
# Desk preset for experiments: same structure, honest but not proof-slack sizes.
DESK_CONSTANTS = ScheduleConstants(c_T=1.0, c_L=1.0, a_log=0.5, a_L=0.5)


@dataclass(frozen=True)
class SamplerSchedule:
    """Derived run parameters for one target. delta_inner = delta_tv / (2 T)."""

    eta: float
    T: int
    delta_inner: float
    L: int
    delta_tv: float
    x0: np.ndarray
    D_init: float
    constants: ScheduleConstants = PROOF_CONSTANTS

    def caps_satisfied(self, G, mu):
        """Re-verify the three eta caps by direct substitution."""
        c = self.constants
        ok = self.eta <= 1.0 / mu * (1 + 1e-12)
        if G > 0:
            ok = ok and self.eta <= c.a_log / (G * G * math.log(400.0 / self.delta_inner)) * (1 + 1e-12)
            ok = ok and self.eta <= c.a_L / (G * G * self.L) * (1 + 1e-12)
        return bool(ok)


def derive_schedule(G, mu, delta_tv, x0, D_init, d=None,
                    constants: ScheduleConstants = PROOF_CONSTANTS) -> SamplerSchedule:
    """Step size, horizon, and inner failure budget for a (G, mu) target.

    The inner budget delta_inner = delta_tv / (2 T) feeds back into the caps
    that determine eta and hence T, so the triple is closed by fixed-point
    iteration from delta_inner = delta_tv / 2 (converges in a few rounds; the
    dependence is logarithmic).  G = 0 short-circuits the loss caps.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if d is None:
        d = x0.shape[0]
    if x0.shape[0] != d:
        raise ValueError("x0 dimension disagrees with d")
    if not (G >= 0 and math.isfinite(G)):
        raise ValueError(f"G must be finite and >= 0, got {G}")
    if not (mu > 0 and math.isfinite(mu)):
        raise ValueError(f"mu must be finite and > 0, got {mu}")
    if not (0 < delta_tv < 0.5):
        raise ValueError(f"delta_tv must lie in (0, 1/2), got {delta_tv}")
    if not (D_init > 0 and math.isfinite(D_init)):
        raise ValueError(f"D_init must be finite and > 0, got {D_init}")

    def caps(delta_inner):
        L = max(1, math.ceil(constants.c_L * math.log(1.0 / delta_inner)))
        eta = 1.0 / mu
        if G > 0:
            eta = min(eta,
                      constants.a_log / (G * G * math.log(400.0 / delta_inner)),
                      constants.a_L / (G * G * L))
        return L, eta

    def horizon(eta):
        arg = (d / mu + D_init * D_init) / (eta * delta_tv)
        return max(1, math.ceil(constants.c_T * (1.0 / (eta * mu)) * max(1.0, math.log(arg))))

    delta_inner = delta_tv / 2.0
    T = None
    for _ in range(10):
        L, eta = caps(delta_inner)
        T_new = horizon(eta)
        if T_new == T:
            break
        T = T_new
        delta_inner = delta_tv / (2.0 * T)
    # close the loop exactly: the stored delta_inner must re-derive the stored T
    for _ in range(10):
        delta_inner = delta_tv / (2.0 * T)
        L, eta = caps(delta_inner)
        T_check = horizon(eta)
        if T_check <= T:
            break
        T = T_check
    else:
        raise RuntimeError("schedule fixed point failed to close")
    return SamplerSchedule(eta=eta, T=T, delta_inner=delta_tv / (2.0 * T), L=L,
                           delta_tv=delta_tv, x0=x0, D_init=float(D_init),
                           constants=constants)


class Objective:
    """A sampling target: scaled loss members plus a quadratic regularizer on a body.

    Members are stored in a normal form the estimator can difference cheaply:
    kind "linear" evaluates scale * (<x, row_j> + offset_j), kind "abs_linear"
    evaluates scale * |<x, row_j> - abs_offset|, kind "none" has no members.
    Offsets cancel inside the estimator (only differences are ever queried) but
    enter the potential, so grid oracles see the exact target.
    """

    def __init__(self, reg: Regularizer, kind="none", rows=None, scale=1.0,
                 abs_offset=0.0, offsets=None, family: LossFamily | None = None,
                 index_law=None):
        if kind not in ("none", "linear", "abs_linear"):
            raise ValueError(f"unknown objective kind {kind!r}")
        self.reg = reg
        self.kind = kind
        self.scale = float(scale)
        self.abs_offset = float(abs_offset)
        self.family = family
        self.index_law = index_law
        if kind == "none":
            self.rows = np.zeros((1, reg.body.dim))
            self.offsets = None
        else:
            self.rows = np.atleast_2d(np.asarray(rows, dtype=float))
            if self.rows.shape[1] != reg.body.dim:
                raise ValueError("member rows disagree with body dimension")
            self.offsets = None if offsets is None else np.asarray(offsets, dtype=float)
        self.counter = family.counter if family is not None else QueryCounter()

    @property
    def dim(self):
        return self.reg.body.dim

    @property
    def member_count(self):
        return 0 if self.kind == "none" else self.rows.shape[0]

    @property
    def member_lipschitz(self):
        """Lipschitz bound of a single scaled member (drives the schedule caps)."""
        if self.kind == "none":
            return 0.0
        return self.scale * float(np.max(np.linalg.norm(self.rows, axis=1)))

    def draw_index(self, rng):
        if self.index_law is not None:
            return int(self.index_law(rng))
        return int(rng.integers(self.member_count))

    def member_difference(self, x, z, j):
        """scale * (f_j(z) - f_j(x)). Counts the two value queries."""
        self.counter.add(2)
        w = self.rows[j]
        if self.kind == "abs_linear":
            return self.scale * (abs(float(np.dot(z, w)) - self.abs_offset)
                                 - abs(float(np.dot(x, w)) - self.abs_offset))
        return self.scale * float(np.dot(np.asarray(z, dtype=float) - np.asarray(x, dtype=float), w))

    def potential(self, x):
        """Exact potential -log pi(x) + const. Oracle path: not query-counted."""
        return float(self.potential_batch(np.asarray(x, dtype=float)[None, :])[0])

    def potential_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = 0.5 * self.reg.mu * np.einsum("ij,ij->i", X, X)
        if self.kind == "linear":
            vals = X @ self.rows.T
            if self.offsets is not None:
                vals = vals + self.offsets[None, :]
            out = out + self.scale * vals.mean(axis=1)
        elif self.kind == "abs_linear":
            out = out + self.scale * np.abs(X @ self.rows.T - self.abs_offset).mean(axis=1)
        return out


def objective_from_family(family: LossFamily, data, body: ConvexBody,
                          added_mu=0.0, scale=1.0) -> Objective:
    """Normal-form objective for exp(-scale * (mean_i f(x; s_i) + added_mu/2 ||x||^2)).

    quadratic_test members are split into the regularizer plus linear residuals:
    (q/2)||x - s||^2 = (q/2)||x||^2 + (<x, -q s> + q ||s||^2 / 2), so all the
    strong convexity lands in psi and the members stay Lipschitz.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if not (scale > 0 and math.isfinite(scale)):
        raise ValueError(f"scale must be finite and > 0, got {scale}")
    if not (added_mu >= 0 and math.isfinite(added_mu)):
        raise ValueError(f"added_mu must be finite and >= 0, got {added_mu}")
    if family.kind == "quadratic_test":
        q = family.strength
        reg = Regularizer(scale * (added_mu + q), body)
        rows = -q * data
        offsets = 0.5 * q * np.einsum("ij,ij->i", data, data)
        return Objective(reg, "linear", rows, scale, offsets=offsets, family=family)
    reg = Regularizer(scale * added_mu, body)
    if family.kind == "linear":
        return Objective(reg, "linear", data, scale, family=family)
    return Objective(reg, "abs_linear", data, scale, abs_offset=family.offset, family=family)


def gaussian_objective(mu, body: ConvexBody) -> Objective:
    """Loss-free target: psi only. The chain's exact-base regression case."""
    return Objective(Regularizer(mu, body), "none")


@dataclass
class EstimatorDraw:
    """One realization of the unbiased estimator of exp(E_i[f_i(z) - f_i(x)])."""

    rho: float
    rho_bar: float
    terms_used: int
    queries_used: int


@dataclass
class StepStats:
    attempts: int = 0
    base_draws: int = 0
    value_queries: int = 0
    terms: int = 0
    rho_below_0: int = 0
    rho_above_2: int = 0
    short_circuited: bool = False


@dataclass
class SamplerReport:
    """Exact integer accounting for a batch of chains; serializes losslessly."""

    chains: int
    outer_steps: int
    value_queries: int
    base_draws: int
    inner_attempts_hist: np.ndarray
    terms_hist: np.ndarray
    rho_below_0: int
    rho_above_2: int
    short_circuited: bool
    seed: int | None = None
    engine: str = "reference"

    @property
    def total_steps(self):
        return self.chains * self.outer_steps

    def queries_per_step(self):
        return self.value_queries / max(1, self.total_steps)

    def to_json_dict(self):
        return {
            "chains": int(self.chains),
            "outer_steps": int(self.outer_steps),
            "value_queries": int(self.value_queries),
            "base_draws": int(self.base_draws),
            "inner_attempts_hist": [int(v) for v in self.inner_attempts_hist],
            "terms_hist": [int(v) for v in self.terms_hist],
            "rho_below_0": int(self.rho_below_0),
            "rho_above_2": int(self.rho_above_2),
            "short_circuited": bool(self.short_circuited),
            "seed": None if self.seed is None else int(self.seed),
            "engine": self.engine,
        }

    @staticmethod
    def from_json_dict(obj):
        return SamplerReport(
            chains=obj["chains"], outer_steps=obj["outer_steps"],
            value_queries=obj["value_queries"], base_draws=obj["base_draws"],
            inner_attempts_hist=np.asarray(obj["inner_attempts_hist"], dtype=np.int64),
            terms_hist=np.asarray(obj["terms_hist"], dtype=np.int64),
            rho_below_0=obj["rho_below_0"], rho_above_2=obj["rho_above_2"],
            short_circuited=obj["short_circuited"], seed=obj.get("seed"),
            engine=obj.get("engine", "reference"))


HIST_LEN = 65  # attempts/terms histograms, last bin is overflow


def base_gaussian_draw(reg: Regularizer, y, eta, rng, max_attempts=MAX_BASE_ATTEMPTS,
                       stats: StepStats | None = None):
    """Draw from exp(-psi(x) - ||x - y||^2/(2 eta)) on the body.

    Completing the square gives N(mean, var I) with mean = y/(1 + eta mu) and
    var = eta/(1 + eta mu), restricted to the body.  When the mean sits inside
    the body this is plain rejection.  When it does not (the outer step often
    lands just outside a boundary-hugging target), proposals instead come from
    the Gaussian recentered at the projection of the mean onto the body, and
    are accepted with probability exp(<x - proj, mean - proj> / var); the
    exponent is <= 0 for every x in the body by the supporting-hyperplane
    inequality at the projection, and the tilt restores the target exactly.
    This keeps the acceptance rate ~ std/dist(mean, body) instead of the
    Gaussian tail mass, which is what makes tiny-step-size schedules viable.
    """
    y = np.asarray(y, dtype=float)
    shrink = 1.0 / (1.0 + eta * reg.mu)
    mean = y * shrink
    var = eta * shrink
    std = math.sqrt(var)
    body = reg.body
    anchor = body.project(mean)
    u = mean - anchor               # zero whenever the mean is inside the body
    tilted = float(np.dot(u, u)) > 0.0
    for attempt in range(1, int(max_attempts) + 1):
        x = anchor + std * rng.standard_normal(y.shape[0])
        if stats is not None:
            stats.base_draws += 1
        if not body.contains(x):
            continue
        if not tilted:
            return x
        e = float(np.dot(x - anchor, u)) / var
        if e >= 0.0 or rng.random() < math.exp(e):
            return x
    raise SamplerAbort(
        f"base draw rejected {max_attempts} proposals; base mean {mean.tolist()}, "
        f"std {std:.3g}, body {body!r}")


def unbiased_exp_estimator(objective: Objective, x, z, rng) -> EstimatorDraw:
    """Algorithm: rho = 1 + sum_alpha prod_{i<=alpha} (f_{j_i}(z) - f_{j_i}(x)).

    Stage alpha multiplies alpha fresh uniformly-drawn member differences; the
    loop then stops with probability alpha/(1+alpha), so stage alpha is reached
    with probability exactly 1/alpha! and E[rho | x, z] = exp(E_i[f_i(z) - f_i(x)]).
    Every factor costs two value queries.  rho is returned raw; the clipped
    rho_bar in [0, 2] is diagnostic only.
    """
    if objective.kind == "none":
        raise ValueError("estimator needs at least one loss member")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    # local fast path: one counter update for the whole draw, difference via a
    # precomputed z - x for the linear kind
    rows = objective.rows
    scale = objective.scale
    absolute = objective.kind == "abs_linear"
    b = objective.abs_offset
    dzx = z - x
    law = objective.index_law
    m = rows.shape[0]
    rho = 1.0
    terms = 0
    queries = 0
    alpha = 0
    while True:
        alpha += 1
        prod = 1.0
        for _ in range(alpha):
            # floor(u * m) matches the compiled kernel's index law bit-for-bit
            j = int(law(rng)) if law is not None else int(rng.random() * m)
            if absolute:
                w = rows[j]
                prod *= scale * (abs(float(np.dot(z, w)) - b)
                                 - abs(float(np.dot(x, w)) - b))
            else:
                prod *= scale * float(np.dot(dzx, rows[j]))
        queries += 2 * alpha
        rho += prod
        terms += 1
        if rng.random() < alpha / (alpha + 1.0):
            break
    objective.counter.add(queries)
    return EstimatorDraw(rho=rho, rho_bar=min(max(rho, 0.0), 2.0),
                         terms_used=terms, queries_used=queries)


def restricted_step(objective: Objective, y, schedule: SamplerSchedule, rng,
                    max_step_attempts=MAX_STEP_ATTEMPTS):
    """One inner draw from pi(x | y) via estimator-based rejection.

    Loss-free targets short-circuit: the base draw already has the right law
    (the accept test would be u <= 1/2 with rho identically one).
    """
    stats = StepStats()
    if objective.kind == "none" or objective.member_lipschitz == 0.0:
        stats.short_circuited = True
        x = base_gaussian_draw(objective.reg, y, schedule.eta, rng, stats=stats)
        stats.attempts = 1
        return x, stats
    while True:
        stats.attempts += 1
        if stats.attempts > max_step_attempts:
            raise SamplerAbort(
                f"restricted step rejected {max_step_attempts} attempts at y={np.asarray(y).tolist()}; "
                f"schedule caps likely violated for this target")
        x = base_gaussian_draw(objective.reg, y, schedule.eta, rng, stats=stats)
        z = base_gaussian_draw(objective.reg, y, schedule.eta, rng, stats=stats)
        est = unbiased_exp_estimator(objective, x, z, rng)
        stats.value_queries += est.queries_used
        stats.terms += est.terms_used
        if est.rho < 0.0:
            stats.rho_below_0 += 1
        elif est.rho > 2.0:
            stats.rho_above_2 += 1
        if rng.random() <= 0.5 * est.rho:
            return x, stats


def alternating_sample(objective: Objective, schedule: SamplerSchedule, rng):
    """Run one chain for T outer steps; return the final state and its report.

    Outer step: y_t = x_{t-1} + sqrt(eta) zeta, then x_t ~ pi(. | y_t).
    """
    d = objective.dim
    x = schedule.x0.astype(float).copy()
    if x.shape[0] != d:
        raise ValueError("schedule start point disagrees with objective dimension")
    sqrt_eta = math.sqrt(schedule.eta)
    attempts_hist = np.zeros(HIST_LEN, dtype=np.int64)
    terms_hist = np.zeros(HIST_LEN, dtype=np.int64)
    queries = base = rb0 = ra2 = 0
    short = True
    for _ in range(schedule.T):
        y = x + sqrt_eta * rng.standard_normal(d)
        x, st = restricted_step(objective, y, schedule, rng)
        attempts_hist[min(st.attempts, HIST_LEN - 1)] += 1
        terms_hist[min(st.terms, HIST_LEN - 1)] += 1
        queries += st.value_queries
        base += st.base_draws
        rb0 += st.rho_below_0
        ra2 += st.rho_above_2
        short = short and st.short_circuited
    report = SamplerReport(chains=1, outer_steps=schedule.T, value_queries=queries,
                           base_draws=base, inner_attempts_hist=attempts_hist,
                           terms_hist=terms_hist, rho_below_0=rb0, rho_above_2=ra2,
                           short_circuited=short)
    return x, report


def sample_chains(objective: Objective, schedule: SamplerSchedule, n_chains, seed,
                  engine="fast", chain_index0=0):
    """n_chains independent runs of alternating_sample, as an (n_chains, d) array.

    Chain c's stream is keyed by (seed, chain_index0 + c), so results do not
    depend on how chains are batched across calls or threads.  engine "fast"
    uses the compiled kernel; "reference" uses this module's loops.
    """
    if engine == "fast":
        from . import _kernels
        samples, report = _kernels.run_chains(objective, schedule, n_chains, seed, chain_index0)
        objective.counter.add(report.value_queries)
        return samples, report
    if engine != "reference":
        raise ValueError(f"unknown engine {engine!r}")
    d = objective.dim
    out = np.empty((n_chains, d))
    agg = None
    for c in range(n_chains):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(chain_index0) + c)))
        out[c], rep = alternating_sample(objective, schedule, rng)
        if agg is None:
            agg = rep
        else:
            agg.value_queries += rep.value_queries
            agg.base_draws += rep.base_draws
            agg.inner_attempts_hist += rep.inner_attempts_hist
            agg.terms_hist += rep.terms_hist
            agg.rho_below_0 += rep.rho_below_0
            agg.rho_above_2 += rep.rho_above_2
            agg.short_circuited = agg.short_circuited and rep.short_circuited
            agg.chains += 1
    agg.seed = int(seed)
    return out, agg
