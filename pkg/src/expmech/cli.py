"""Experiment runner: JSON config in, CSV/JSON artifacts out, CI-style exit codes.

    python -m expmech.cli --config cfg.json [--seed N] [--threads N] [--out DIR]

Exit codes: 0 all embedded assertions passed, 1 an assertion or run failed,
2 the config did not validate. Numeric CSV output uses 17 significant digits
and never includes wall-clock times, so artifacts are byte-identical across
reruns with the same seed and --threads 1 (content is thread-count-invariant
either way; ordering is fixed by repetition index).

Config schema (keys beyond these are rejected):
  common        experiment (required), seed (int, default 0),
                output_path (dir, default "."), threads (int, default 1)
  privacy_table epsilons: [reals], deltas: [reals], tighten: bool
  tv_check      body: geometry JSON, loss: {kind, data, offset?}, mu, k,
                delta_tv, draws, bins, constants: "desk"|"proof",
                noise_floor (default 0.02)
  query_scaling n_grid: [ints], d_grid: [ints], epsilon, delta,
                mode: "erm"|"sco", G, D, repetitions, constants,
                slope_range: [lo, hi], max_queries_per_step
  erm           n, d, G, D, epsilon, delta, repetitions, constants, delta_tv?
  sco           n, d, G, D, epsilon, delta, repetitions, constants, delta_tv?
  hard_instance_gap  n, d, G, D, k_budget
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .geometry import ConvexBody, L2Ball
from .losses import (Dataset, ProblemSpec, abs_linear_family, erm_objective,
                     hard_instance_params, linear_family, optimality_gap,
                     sample_hard_instance)
from .mechanism import (MechanismConfig, calibrate_erm, calibrate_sco,
                        empirical_minimum, run_mechanism, sco_branch)
from .privacy import PrivacyBudget, calibrate_shift, gaussian_delta
from .sampler import (DESK_CONSTANTS, PROOF_CONSTANTS, derive_schedule,
                      objective_from_family, sample_chains)
from .verify import grid_target, tv_estimate

EXPERIMENTS = ("erm", "sco", "tv_check", "query_scaling", "hard_instance_gap",
               "privacy_table")


class ConfigError(ValueError):
    """The config file does not satisfy the documented schema."""


def fmt(x) -> str:
    """Canonical cell format: ints and labels verbatim, floats at 17 significant digits."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


class Assertions:
    """Collects named pass/fail checks; drives the exit code."""

    def __init__(self):
        self.results = []

    def check(self, name, passed, detail=""):
        self.results.append({"name": name, "passed": bool(passed),
                             "detail": str(detail)})
        return bool(passed)

    @property
    def all_passed(self):
        return all(r["passed"] for r in self.results)

    def as_json(self):
        return self.results


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _validate_keys(cfg, allowed, experiment):
    common = {"experiment", "seed", "output_path", "threads"}
    extra = set(cfg) - common - set(allowed)
    _require(not extra, f"unknown keys for {experiment}: {sorted(extra)}")


def _constants(cfg):
    name = cfg.get("constants", "desk")
    _require(name in ("desk", "proof"), f"constants must be desk|proof, got {name!r}")
    return DESK_CONSTANTS if name == "desk" else PROOF_CONSTANTS


def _positive_int(cfg, key, default=None):
    v = cfg.get(key, default)
    _require(v is not None, f"missing required key {key!r}")
    _require(isinstance(v, int) and not isinstance(v, bool) and v >= 1,
             f"{key} must be an integer >= 1, got {v!r}")
    return v


def _positive_real(cfg, key, default=None):
    v = cfg.get(key, default)
    _require(v is not None, f"missing required key {key!r}")
    _require(isinstance(v, (int, float)) and not isinstance(v, bool)
             and math.isfinite(v) and v > 0,
             f"{key} must be a finite positive number, got {v!r}")
    return float(v)


def _spec_budget(cfg):
    spec = ProblemSpec(_positive_int(cfg, "n"), _positive_int(cfg, "d"),
                       _positive_real(cfg, "G"), _positive_real(cfg, "D"))
    budget = PrivacyBudget(_positive_real(cfg, "epsilon"),
                           _positive_real(cfg, "delta"))
    return spec, budget


def _unit_rows(n, d, G, rng):
    """n rows of exact norm G: the dataset realizes its declared sensitivity."""
    raw = rng.standard_normal((n, d))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return G * raw / norms


def run_privacy_table(cfg, out_dir, seed, threads, checks: Assertions):
    _validate_keys(cfg, {"epsilons", "deltas", "tighten"}, "privacy_table")
    eps_grid = cfg.get("epsilons")
    del_grid = cfg.get("deltas")
    _require(isinstance(eps_grid, list) and eps_grid, "epsilons must be a nonempty list")
    _require(isinstance(del_grid, list) and del_grid, "deltas must be a nonempty list")
    tighten = cfg.get("tighten", False)
    _require(isinstance(tighten, bool), "tighten must be a bool")
    rows = []
    for eps in eps_grid:
        for dlt in del_grid:
            shift = calibrate_shift(PrivacyBudget(float(eps), float(dlt)), tighten=tighten)
            achieved = gaussian_delta(shift.s, float(eps))
            rows.append((eps, dlt, shift.s, achieved))
            checks.check(f"delta_at_s<=delta(eps={eps},delta={dlt})",
                         achieved <= float(dlt) * (1 + 1e-12),
                         f"achieved={achieved!r}")
    # s must grow with eps at fixed delta
    for dlt in del_grid:
        by_eps = sorted((r[0], r[2]) for r in rows if r[1] == dlt)
        checks.check(f"s_monotone_in_eps(delta={dlt})",
                     all(a[1] <= b[1] for a, b in zip(by_eps, by_eps[1:])))
    write_csv(os.path.join(out_dir, "privacy_table.csv"),
              ("epsilon", "delta", "s", "delta_at_s"), rows)
    return {"rows": len(rows), "tighten": tighten}


def run_tv_check(cfg, out_dir, seed, threads, checks: Assertions):
    _validate_keys(cfg, {"body", "loss", "mu", "k", "delta_tv", "draws", "bins",
                         "constants", "noise_floor"}, "tv_check")
    _require(isinstance(cfg.get("body"), dict), "body must be a geometry JSON object")
    body = ConvexBody.from_json(cfg["body"])
    _require(body.dim == 1, "tv_check is one-dimensional")
    loss = cfg.get("loss")
    _require(isinstance(loss, dict) and "kind" in loss and "data" in loss,
             "loss must be {kind, data, offset?}")
    data = np.asarray(loss["data"], dtype=float)
    _require(data.ndim == 2 and data.shape[1] == 1, "loss data must be an (n, 1) array")
    if loss["kind"] == "linear":
        family = linear_family(data)
    elif loss["kind"] == "abs_linear":
        family = abs_linear_family(data, float(loss.get("offset", 1.0)))
    else:
        raise ConfigError(f"tv_check loss kind must be linear|abs_linear, got {loss['kind']!r}")
    mu = _positive_real(cfg, "mu")
    k = _positive_real(cfg, "k")
    delta_tv = _positive_real(cfg, "delta_tv")
    draws = _positive_int(cfg, "draws")
    bins = _positive_int(cfg, "bins")
    noise_floor = float(cfg.get("noise_floor", 0.02))
    objective = objective_from_family(family, data, body, added_mu=mu, scale=k)
    schedule = derive_schedule(objective.member_lipschitz, objective.reg.mu, delta_tv,
                               x0=body.center(), D_init=body.diameter(), d=1,
                               constants=_constants(cfg))
    samples, report = sample_chains(objective, schedule, draws, seed, engine="fast")
    oracle = grid_target(objective)
    est = tv_estimate(samples[:, 0], oracle, bins, rng=np.random.default_rng(seed))
    edges = np.linspace(oracle.axes[0][0], oracle.axes[0][-1], bins + 1)
    oracle_mass = oracle.bin_masses(edges)
    emp, _ = np.histogram(samples[:, 0], bins=edges)
    rows = [(edges[i], edges[i + 1], emp[i] / draws, oracle_mass[i])
            for i in range(bins)]
    write_csv(os.path.join(out_dir, "tv_check.csv"),
              ("bin_lo", "bin_hi", "empirical", "oracle"), rows)
    threshold = delta_tv + noise_floor
    checks.check("tv_within_budget", est.tv <= threshold,
                 f"tv={est.tv!r} threshold={threshold!r} ci=({est.ci_low!r},{est.ci_high!r})")
    return {"tv": est.tv, "ci": [est.ci_low, est.ci_high], "threshold": threshold,
            "eta": schedule.eta, "T": schedule.T,
            "queries_per_step": report.queries_per_step()}


def _query_formula(mode, n, d, budget):
    """Pinned-constant query-count shape used for ratio assertions."""
    log_term = math.log(budget.epsilon * n * d / budget.delta)
    privacy_arm = budget.epsilon ** 2 * n ** 2 / math.log(1.0 / budget.delta)
    if mode == "sco":
        return min(privacy_arm, 2.0 * n * d) * log_term ** 2
    return privacy_arm * log_term ** 2


def run_query_scaling(cfg, out_dir, seed, threads, checks: Assertions):
    _validate_keys(cfg, {"n_grid", "d_grid", "epsilon", "delta", "mode", "G", "D",
                         "repetitions", "constants", "slope_range",
                         "max_queries_per_step", "delta_tv"}, "query_scaling")
    n_grid = cfg.get("n_grid")
    d_grid = cfg.get("d_grid")
    _require(isinstance(n_grid, list) and n_grid, "n_grid must be a nonempty list")
    _require(isinstance(d_grid, list) and d_grid, "d_grid must be a nonempty list")
    mode = cfg.get("mode", "erm")
    _require(mode in ("erm", "sco"), f"mode must be erm|sco, got {mode!r}")
    G = _positive_real(cfg, "G", 1.0)
    D = _positive_real(cfg, "D", 2.0)
    budget = PrivacyBudget(_positive_real(cfg, "epsilon"), _positive_real(cfg, "delta"))
    reps = _positive_int(cfg, "repetitions", 1)
    slope_range = cfg.get("slope_range", [1.65, 2.35])
    _require(isinstance(slope_range, list) and len(slope_range) == 2,
             "slope_range must be [lo, hi]")
    max_qps = float(cfg.get("max_queries_per_step", 32))
    constants = _constants(cfg)
    delta_tv = cfg.get("delta_tv")
    body_for = lambda d: L2Ball(np.zeros(d), D / 2.0)
    rows = []
    per_d_measured = {int(dv): [] for dv in d_grid}
    for d in d_grid:
        for n in n_grid:
            spec = ProblemSpec(int(n), int(d), G, D)
            rng = np.random.default_rng(seed + 1000 * int(d) + int(n))
            data = Dataset(_unit_rows(int(n), int(d), G, rng))
            family = linear_family(data.samples)
            config, _ = (calibrate_erm if mode == "erm" else calibrate_sco)(spec, budget)
            _, report = run_mechanism(config, family, data, body_for(int(d)),
                                      delta_tv=delta_tv, seed=seed, repetitions=reps,
                                      engine="fast", constants=constants,
                                      threads=threads, compute_excess=False)
            measured = report.queries / reps
            formula = _query_formula(mode, int(n), int(d), budget)
            qps = report.sampler.queries_per_step()
            rows.append((n, d, measured, formula, measured / formula, qps,
                         report.T, config.k, config.mu))
            per_d_measured[int(d)].append((int(n), measured))
            checks.check(f"ratio_in_range(n={n},d={d})",
                         1.0 / 64.0 <= measured / formula <= 64.0,
                         f"ratio={measured / formula!r}")
            checks.check(f"queries_per_step<= {max_qps}(n={n},d={d})",
                         qps <= max_qps, f"qps={qps!r}")
    slopes = {}
    for d, pts in per_d_measured.items():
        if len(pts) >= 2:
            ns = np.log([p[0] for p in pts])
            qs = np.log([p[1] for p in pts])
            slope = float(np.polyfit(ns, qs, 1)[0])
            slopes[str(d)] = slope
            checks.check(f"loglog_slope(d={d})",
                         slope_range[0] <= slope <= slope_range[1],
                         f"slope={slope!r} range={slope_range}")
    write_csv(os.path.join(out_dir, "query_scaling.csv"),
              ("n", "d", "measured_queries", "formula", "ratio",
               "queries_per_step", "T", "k", "mu"), rows)
    return {"slopes": slopes, "mode": mode,
            "branch": sco_branch(ProblemSpec(int(max(n_grid)), int(max(d_grid)), G, D),
                                 budget) if mode == "sco" else "privacy"}


def run_erm(cfg, out_dir, seed, threads, checks: Assertions):
    _validate_keys(cfg, {"n", "d", "G", "D", "epsilon", "delta", "repetitions",
                         "constants", "delta_tv"}, "erm")
    spec, budget = _spec_budget(cfg)
    reps = _positive_int(cfg, "repetitions", 100)
    rng = np.random.default_rng(seed)
    data = Dataset(_unit_rows(spec.n, spec.d, spec.G, rng))
    family = linear_family(data.samples)
    body = L2Ball(np.zeros(spec.d), spec.D / 2.0)
    config, cert = calibrate_erm(spec, budget)
    samples, report = run_mechanism(config, family, data, body,
                                    delta_tv=cfg.get("delta_tv"), seed=seed,
                                    repetitions=reps, engine="fast",
                                    constants=_constants(cfg), threads=threads,
                                    compute_excess=False)
    samples = np.atleast_2d(samples)
    fmin, _ = empirical_minimum(family, data, body)
    risks = np.array([erm_objective(family, data, samples[i]) for i in range(reps)])
    excess = risks - fmin
    se = float(excess.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    bound = cert.erm_bound + 3.0 * se
    write_csv(os.path.join(out_dir, "erm.csv"), ("rep", "excess_risk"),
              list(enumerate(excess)))
    checks.check("mean_excess<=bound", float(excess.mean()) <= bound,
                 f"mean={float(excess.mean())!r} bound={bound!r} (cert={cert.erm_bound!r})")
    return {"mean_excess": float(excess.mean()), "se": se,
            "erm_bound": cert.erm_bound, "k": config.k, "mu": config.mu,
            "T": report.T, "queries": report.queries}


def run_sco(cfg, out_dir, seed, threads, checks: Assertions):
    _validate_keys(cfg, {"n", "d", "G", "D", "epsilon", "delta", "repetitions",
                         "constants", "delta_tv"}, "sco")
    spec, budget = _spec_budget(cfg)
    reps = _positive_int(cfg, "repetitions", 100)
    config, cert = calibrate_sco(spec, budget)
    rng = np.random.default_rng(seed)
    params, data = sample_hard_instance(spec, config.k, rng)
    family = linear_family(data.samples)
    body = L2Ball(np.zeros(spec.d), spec.D / 2.0)
    samples, report = run_mechanism(config, family, data, body,
                                    delta_tv=cfg.get("delta_tv"), seed=seed,
                                    repetitions=reps, engine="fast",
                                    constants=_constants(cfg), threads=threads,
                                    compute_excess=False)
    samples = np.atleast_2d(samples)
    pop = params.population()
    gaps = np.array([optimality_gap(family, pop, samples[i], body)
                     for i in range(reps)])
    se = float(gaps.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    bound = cert.sco_bound + 3.0 * se
    write_csv(os.path.join(out_dir, "sco.csv"), ("rep", "population_excess"),
              list(enumerate(gaps)))
    checks.check("mean_gap<=bound", float(gaps.mean()) <= bound,
                 f"mean={float(gaps.mean())!r} bound={bound!r} (cert={cert.sco_bound!r})")
    return {"mean_gap": float(gaps.mean()), "se": se, "sco_bound": cert.sco_bound,
            "k": config.k, "mu": config.mu, "T": report.T,
            "queries": report.queries, "branch": sco_branch(spec, budget)}


def run_hard_instance_gap(cfg, out_dir, seed, threads, checks: Assertions):
    _validate_keys(cfg, {"n", "d", "G", "D", "k_budget"}, "hard_instance_gap")
    spec = ProblemSpec(_positive_int(cfg, "n"), _positive_int(cfg, "d"),
                       _positive_real(cfg, "G"), _positive_real(cfg, "D"))
    k_budget = _positive_real(cfg, "k_budget")
    rng = np.random.default_rng(seed)
    params = hard_instance_params(spec, k_budget, rng)
    body = L2Ball(np.zeros(spec.d), spec.D / 2.0)
    pop = params.population()
    # the family only carries G; rows are irrelevant to the closed-form gap
    family = linear_family(np.eye(spec.d) * spec.G)
    x_star = params.ball_minimizer() * spec.D / 2.0
    gap_star = optimality_gap(family, pop, x_star, body)
    gap_zero = optimality_gap(family, pop, np.zeros(spec.d), body)
    expected_zero = params.delta * math.sqrt(spec.d) * spec.D / 2.0
    rows = [("minimizer", gap_star), ("origin", gap_zero)]
    for j in range(min(spec.d, 4)):
        e = np.zeros(spec.d)
        e[j] = spec.D / 2.0
        rows.append((f"axis_{j}", optimality_gap(family, pop, e, body)))
    write_csv(os.path.join(out_dir, "hard_instance_gap.csv"), ("point", "gap"), rows)
    checks.check("gap_at_minimizer==0", abs(gap_star) <= 1e-12,
                 f"gap={gap_star!r}")
    checks.check("gap_at_origin==delta*sqrt(d)*R",
                 abs(gap_zero - expected_zero) <= 1e-12 * max(1.0, expected_zero),
                 f"gap={gap_zero!r} expected={expected_zero!r}")
    return {"sigma": params.sigma, "delta_hi": params.delta,
            "gap_origin": gap_zero}


RUNNERS = {
    "privacy_table": run_privacy_table,
    "tv_check": run_tv_check,
    "query_scaling": run_query_scaling,
    "erm": run_erm,
    "sco": run_sco,
    "hard_instance_gap": run_hard_instance_gap,
}


def run_config(cfg, out_dir=None, seed=None, threads=None):
    """Validate and execute one experiment config. Returns (exit_code, summary)."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    experiment = cfg.get("experiment")
    _require(experiment in EXPERIMENTS,
             f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    if seed is None:
        seed = cfg.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool)
             and 0 <= seed < 2 ** 64, "seed must be an integer in [0, 2^64)")
    if threads is None:
        threads = cfg.get("threads", int(os.environ.get("EXPMECH_THREADS", "1")))
    _require(isinstance(threads, int) and threads >= 1, "threads must be an integer >= 1")
    if out_dir is None:
        out_dir = cfg.get("output_path", ".")
    os.makedirs(out_dir, exist_ok=True)
    checks = Assertions()
    try:
        detail = RUNNERS[experiment](cfg, out_dir, seed, threads, checks)
    except ConfigError:
        raise
    except Exception as exc:  # sampler aborts, calibration failures: exit 1 with report
        checks.check("run_completed", False, f"{type(exc).__name__}: {exc}")
        detail = {}
    summary = {
        "experiment": experiment, "seed": seed, "threads": threads,
        "assertions": checks.as_json(), "passed": checks.all_passed,
        "detail": detail,
    }
    write_summary(os.path.join(out_dir, f"{experiment}_summary.json"), summary)
    return (0 if checks.all_passed else 1), summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m expmech.cli",
        description="Run a packaged experiment from a JSON config.")
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: config, then EXPMECH_THREADS, then 1)")
    parser.add_argument("--out", default=None, help="output directory")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        code, summary = run_config(cfg, out_dir=args.out, seed=args.seed,
                                   threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for res in summary["assertions"]:
        tag = "PASS" if res["passed"] else "FAIL"
        line = f"[{tag}] {res['name']}"
        if res["detail"]:
            line += f"  {res['detail']}"
        print(line)
    print(f"{'ok' if code == 0 else 'FAILED'}: {summary['experiment']} "
          f"(seed={summary['seed']})")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
