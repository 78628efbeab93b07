"""DP-ERM / DP-SCO front end: budget -> (k, mu) -> one sampler invocation.

The mechanism draws x with probability proportional to
exp(-k (F_hat(x) + mu ||x||^2 / 2)) over the constraint body. Privacy never
rests on the sampler: the certified shift s = G sqrt(k) / (n sqrt(mu)) is
checked against the exact Gaussian curve when a config is built, and the
sampler only spends its separate total-variation budget delta_tv on top.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Box, ConvexBody, L2Ball
from .losses import Dataset, LossFamily, ProblemSpec, erm_objective
from .privacy import GaussianShift, PrivacyBudget, gaussian_delta
from .sampler import (PROOF_CONSTANTS, Objective, SamplerReport, ScheduleConstants,
                      derive_schedule, objective_from_family, sample_chains)

MODES = ("erm", "sco", "strongly_convex_passthrough")


class CalibrationError(ValueError):
    """Budget cannot be certified with the requested formulas."""


@dataclass(frozen=True)
class MechanismConfig:
    """A certified (k, mu) pair for a problem and budget.

    Construction re-derives the shift s = G sqrt(k) / (n sqrt(mu)) and
    re-checks gaussian_delta(s, eps) <= delta, so holding a config is holding
    the privacy proof. mu is the total strong convexity of the sampled
    potential's convex part: the added regularizer for erm/sco, the family's
    own curvature for strongly_convex_passthrough.
    """

    spec: ProblemSpec
    budget: PrivacyBudget
    mode: str
    k: float
    mu: float

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError(f"k must be finite and > 0, got {self.k}")
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be finite and > 0, got {self.mu}")
        achieved = self.shift_check.delta_at(self.budget.epsilon)
        if achieved > self.budget.delta * (1.0 + 1e-9):
            raise CalibrationError(
                f"shift s={self.shift_check.s:.6g} gives delta(eps)={achieved:.6g} "
                f"> budget delta={self.budget.delta:.6g}; the (k, mu) pair is not "
                "certifiable at this budget")

    @property
    def shift_check(self) -> GaussianShift:
        s = self.spec.G * math.sqrt(self.k) / (self.spec.n * math.sqrt(self.mu))
        return GaussianShift(s)

    def to_json_dict(self):
        return {
            "spec": {"n": self.spec.n, "d": self.spec.d,
                     "G": self.spec.G, "D": self.spec.D},
            "budget": {"epsilon": self.budget.epsilon, "delta": self.budget.delta},
            "mode": self.mode, "k": self.k, "mu": self.mu,
            "shift": self.shift_check.s,
        }

    @staticmethod
    def from_json_dict(obj) -> "MechanismConfig":
        spec = ProblemSpec(**{k: obj["spec"][k] for k in ("n", "d", "G", "D")})
        budget = PrivacyBudget(obj["budget"]["epsilon"], obj["budget"]["delta"])
        return MechanismConfig(spec, budget, obj["mode"], obj["k"], obj["mu"])


@dataclass(frozen=True)
class UtilityCertificate:
    """Excess-risk bounds carried by a calibration.

    erm_bound = d/k + mu D^2/2 (empirical), sco_bound adds the G^2/(mu n)
    generalization term. closed_form_bound is the simplified headline;
    headline_valid records whether the budget sits in the regime
    (eps, delta < 1/10) where the headline provably dominates the exact bound.
    """

    mode: str
    erm_bound: float
    sco_bound: float
    closed_form_bound: float
    headline_valid: bool

    def __post_init__(self):
        for name in ("erm_bound", "sco_bound", "closed_form_bound"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


def _certificate(spec: ProblemSpec, budget: PrivacyBudget, mode, k, mu) -> UtilityCertificate:
    erm_bound = spec.d / k + mu * spec.D ** 2 / 2.0
    sco_bound = spec.G ** 2 / (mu * spec.n) + erm_bound
    log1d = math.log(1.0 / budget.delta)
    in_regime = budget.epsilon < 0.1 and budget.delta < 0.1
    root = math.sqrt(spec.d * log1d)
    if mode == "erm":
        headline = 2.0 * spec.G * spec.D * root / (budget.epsilon * spec.n)
        tight = erm_bound
    elif mode == "sco":
        headline = spec.G * spec.D * (2.0 * root / (budget.epsilon * spec.n)
                                      + 2.0 / math.sqrt(spec.n))
        tight = sco_bound
    else:
        return UtilityCertificate(mode, erm_bound, sco_bound, erm_bound, False)
    if in_regime and not tight <= headline * (1.0 + 1e-9):
        raise AssertionError(
            f"exact bound {tight!r} exceeds headline {headline!r} inside the "
            "regime where the headline should dominate")
    return UtilityCertificate(mode, erm_bound, sco_bound, headline, in_regime)


def _shared_log(budget: PrivacyBudget) -> float:
    # log(3/(4 delta)) is the constant both calibrations put under the square
    # roots; positive for all delta < 3/4, and delta < 1/2 is enforced anyway.
    return math.log(3.0 / (4.0 * budget.delta))


def calibrate_erm(spec: ProblemSpec, budget: PrivacyBudget):
    """(k, mu) for empirical risk minimization.

    mu = G sqrt(d) / (n D r) and k = 2 mu n^2 r^2 / G^2 with
    r = sqrt(log(3/(4 delta)) + eps) - sqrt(log(3/(4 delta))); the induced
    shift is r sqrt(2), strictly inside the certifiable region for every
    delta < 1/2. Returns (MechanismConfig, UtilityCertificate).
    """
    if budget.delta >= 0.5:
        raise CalibrationError(f"calibration needs delta < 1/2, got {budget.delta}")
    if budget.epsilon <= 0:
        raise CalibrationError("calibration needs epsilon > 0")
    L = _shared_log(budget)
    # conjugate form of sqrt(L + eps) - sqrt(L), stable for eps << L
    r = budget.epsilon / (math.sqrt(L + budget.epsilon) + math.sqrt(L))
    mu = spec.G * math.sqrt(spec.d) / (spec.n * spec.D * r)
    k = 2.0 * mu * spec.n ** 2 * r ** 2 / spec.G ** 2
    config = MechanismConfig(spec, budget, "erm", k, mu)
    return config, _certificate(spec, budget, "erm", k, mu)


def calibrate_sco(spec: ProblemSpec, budget: PrivacyBudget):
    """(k, mu) for population risk (stochastic convex optimization).

    mu = (G/D) sqrt(2 (2 L d / (eps^2 n^2) + 1/(2n))) and
    k = (mu / G^2) min(eps^2 n^2 / (2L), 2 n d), L = log(3/(4 delta)).
    The min's first branch caps the shift at eps / sqrt(2L); for extreme
    budgets (large eps with delta near 1/2) this can overshoot the exact
    curve, in which case construction raises rather than under-report delta.
    """
    if budget.delta >= 0.5:
        raise CalibrationError(f"calibration needs delta < 1/2, got {budget.delta}")
    if budget.epsilon <= 0:
        raise CalibrationError("calibration needs epsilon > 0")
    L = _shared_log(budget)
    mu = (spec.G / spec.D) * math.sqrt(
        2.0 * (2.0 * L * spec.d / (budget.epsilon ** 2 * spec.n ** 2)
               + 1.0 / (2.0 * spec.n)))
    k = (mu / spec.G ** 2) * min(budget.epsilon ** 2 * spec.n ** 2 / (2.0 * L),
                                 2.0 * spec.n * spec.d)
    config = MechanismConfig(spec, budget, "sco", k, mu)
    return config, _certificate(spec, budget, "sco", k, mu)


def sco_branch(spec: ProblemSpec, budget: PrivacyBudget) -> str:
    """Which arm of the SCO min is active: "privacy" (eps^2 n^2) or "dimension" (2nd)."""
    L = _shared_log(budget)
    return "privacy" if budget.epsilon ** 2 * spec.n ** 2 / (2.0 * L) <= 2.0 * spec.n * spec.d \
        else "dimension"


@dataclass
class RunReport:
    """Everything one mechanism invocation certifies and measured.

    queries counts the sampler's loss-value queries only; risk evaluations
    done afterward for excess_risk_estimate are bookkept on the family's
    counter but deliberately excluded here, so query-complexity claims are
    about the sampling algorithm itself.
    """

    epsilon: float
    delta: float
    k: float
    mu: float
    eta: float
    T: int
    queries: int
    excess_risk_estimate: float | None
    wall_time_ms: float
    mode: str
    delta_tv: float
    seed: int
    repetitions: int
    engine: str
    sampler: SamplerReport

    def to_json_dict(self):
        return {
            "epsilon": self.epsilon, "delta": self.delta, "k": self.k,
            "mu": self.mu, "eta": self.eta, "T": int(self.T),
            "queries": int(self.queries),
            "excess_risk_estimate": self.excess_risk_estimate,
            "wall_time_ms": self.wall_time_ms, "mode": self.mode,
            "delta_tv": self.delta_tv, "seed": int(self.seed),
            "repetitions": int(self.repetitions), "engine": self.engine,
            "sampler": self.sampler.to_json_dict(),
        }

    CSV_FIELDS = ("epsilon", "delta", "k", "mu", "eta", "T", "queries",
                  "excess_risk_estimate", "wall_time_ms")

    def csv_row(self, include_wall_time=False):
        """Row of CSV_FIELDS values; wall time is swapped for -1 by default so
        artifacts stay byte-identical across reruns."""
        vals = [self.epsilon, self.delta, self.k, self.mu, self.eta, self.T,
                self.queries, self.excess_risk_estimate,
                self.wall_time_ms if include_wall_time else -1.0]
        return vals


def merge_reports(parts):
    """Combine SamplerReports from disjoint chain blocks of one run."""
    parts = list(parts)
    out = replace(parts[0])
    out.inner_attempts_hist = parts[0].inner_attempts_hist.copy()
    out.terms_hist = parts[0].terms_hist.copy()
    for rep in parts[1:]:
        if rep.outer_steps != out.outer_steps or rep.engine != out.engine:
            raise ValueError("cannot merge reports from different schedules or engines")
        out.chains += rep.chains
        out.value_queries += rep.value_queries
        out.base_draws += rep.base_draws
        out.inner_attempts_hist += rep.inner_attempts_hist
        out.terms_hist += rep.terms_hist
        out.rho_below_0 += rep.rho_below_0
        out.rho_above_2 += rep.rho_above_2
        out.short_circuited = out.short_circuited and rep.short_circuited
    return out


def empirical_minimum(family: LossFamily, data: Dataset, body: ConvexBody):
    """min over the body of the empirical risk, where a closed form exists.

    linear: support-function minimum over a ball or box. quadratic_test:
    projection of the sample mean. abs_linear in d=1: the minimum sits at a
    ratio breakpoint or an endpoint of the interval. Returns None otherwise.
    """
    S = data.samples
    if family.kind == "linear":
        w = S.mean(axis=0)
        if isinstance(body, L2Ball):
            c = body.center()
            nw = float(np.linalg.norm(w))
            x_star = c if nw == 0 else c - body.radius * w / nw
            return float(c @ w - body.radius * nw), x_star
        if isinstance(body, Box):
            x_star = np.where(w >= 0, body.lower, body.upper)
            return float(x_star @ w), x_star
        return None
    if family.kind == "quadratic_test":
        m = S.mean(axis=0)
        if isinstance(body, L2Ball):
            c = body.center()
            off = m - c
            r = float(np.linalg.norm(off))
            x_star = m if r <= body.radius else c + body.radius * off / r
        elif isinstance(body, Box):
            x_star = np.clip(m, body.lower, body.upper)
        else:
            return None
        return erm_objective(family, data, x_star), x_star
    if family.kind == "abs_linear" and data.d == 1:
        if isinstance(body, Box):
            lo, hi = float(body.lower[0]), float(body.upper[0])
        elif isinstance(body, L2Ball):
            c = float(body.center()[0])
            lo, hi = c - body.radius, c + body.radius
        else:
            return None
        w = S[:, 0]
        cand = [lo, hi] + [float(np.clip(family.offset / wi, lo, hi))
                           for wi in w if wi != 0]
        vals = [(erm_objective(family, data, np.array([x])), x) for x in cand]
        best = min(vals, key=lambda t: t[0])
        return best[0], np.array([best[1]])
    return None


def build_objective(config: MechanismConfig, family: LossFamily, data: Dataset,
                    body: ConvexBody) -> Objective:
    """The sampler-facing potential k (F_hat + mu ||x||^2 / 2) for this config."""
    if config.mode == "strongly_convex_passthrough":
        if family.kind != "quadratic_test":
            raise ValueError("passthrough mode expects the quadratic family, "
                             f"got {family.kind!r}")
        if abs(family.strength - config.mu) > 1e-12 * max(1.0, config.mu):
            raise ValueError("passthrough config.mu must equal the family's own "
                             f"curvature: {config.mu} vs {family.strength}")
        return objective_from_family(family, data.samples, body, added_mu=0.0,
                                     scale=config.k)
    return objective_from_family(family, data.samples, body, added_mu=config.mu,
                                 scale=config.k)


def run_mechanism(config: MechanismConfig, family: LossFamily, data: Dataset,
                  body: ConvexBody, delta_tv=None, seed=0, repetitions=1,
                  engine="fast", constants: ScheduleConstants = PROOF_CONSTANTS,
                  threads=1, compute_excess=True):
    """Draw from the mechanism. Returns (x, RunReport); x is a (d,) vector for
    repetitions=1, else a (repetitions, d) array of independent draws.

    delta_tv defaults to min(delta/3, 1e-4); the reported guarantee is
    (epsilon, delta + delta_tv) in the strict reading, with delta_tv chosen
    small enough that the configured delta already absorbs it by convention.
    The schedule is derived from the dataset's realized member Lipschitz
    constant; the privacy certificate is about the declared class (rows with
    norm at most G), which data drawn from an unbounded population can exceed.
    """
    if data.n != config.spec.n:
        raise ValueError(f"dataset has n={data.n}, config expects {config.spec.n}")
    if data.d != config.spec.d:
        raise ValueError(f"dataset has d={data.d}, config expects {config.spec.d}")
    if not math.isfinite(body.diameter()):
        raise ValueError("run_mechanism needs a bounded body (finite diameter)")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if delta_tv is None:
        delta_tv = min(config.budget.delta / 3.0, 1e-4)
    objective = build_objective(config, family, data, body)
    schedule = derive_schedule(objective.member_lipschitz, objective.reg.mu,
                               delta_tv, x0=body.center(), D_init=body.diameter(),
                               d=config.spec.d, constants=constants)
    t0 = time.perf_counter()
    threads = max(1, int(threads))
    if threads == 1 or repetitions == 1:
        samples, srep = sample_chains(objective, schedule, repetitions, seed, engine)
    else:
        block = (repetitions + threads - 1) // threads
        starts = list(range(0, repetitions, block))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [pool.submit(sample_chains, objective, schedule,
                                min(block, repetitions - s), seed, engine, s)
                    for s in starts]
            parts = [f.result() for f in futs]
        samples = np.concatenate([p[0] for p in parts], axis=0)
        srep = merge_reports(p[1] for p in parts)
        srep.seed = int(seed)
    wall_ms = (time.perf_counter() - t0) * 1e3

    excess = None
    if compute_excess:
        known = empirical_minimum(family, data, body)
        if known is not None:
            fmin = known[0]
            risks = [erm_objective(family, data, samples[i])
                     for i in range(samples.shape[0])]
            excess = float(np.mean(risks) - fmin)

    report = RunReport(
        epsilon=config.budget.epsilon, delta=config.budget.delta,
        k=config.k, mu=config.mu, eta=schedule.eta, T=schedule.T,
        queries=srep.value_queries, excess_risk_estimate=excess,
        wall_time_ms=wall_ms, mode=config.mode, delta_tv=float(delta_tv),
        seed=int(seed), repetitions=int(repetitions), engine=engine,
        sampler=srep)
    x = samples[0] if repetitions == 1 else samples
    return x, report
