"""The hard instance: why value queries must scale like (eps n)^2.

A planted-sign Gaussian family certifies the query-complexity floor for
private optimization: each loss is linear with gradient drawn from
N(delta_hi * v, sigma^2 I) for a hidden sign vector v, and recovering enough
of v to optimize well requires a quadratic number of value queries.  This
script inspects the instance's closed forms and then measures the library's
own query budget growing quadratically in n.
"""

import math

import numpy as np

import expmech as em

print(__doc__)

# ---------------------------------------------------------------------------
print("=" * 72)
print("1. Instance geometry in closed form")
print("=" * 72)
spec = em.ProblemSpec(n=100, d=4, G=2.0, D=2.0)
k_budget = 4.0
params = em.hard_instance_params(spec, k_budget, np.random.default_rng(9))
print(f"""
shape n={spec.n}, d={spec.d}, G={spec.G}, D={spec.D}, query budget k={k_budget:g}:

  sigma    = G / sqrt(d + d^2/(4k)) = {params.sigma:.6f}
  delta_hi = sigma sqrt(d) / (2 sqrt(k)) = {params.delta:.6f}
  planted signs v = {params.v.astype(int).tolist()}

The scales are chosen so the instance saturates the declared Lipschitz
budget while keeping the signal delta_hi just at the detection threshold
for k queries.
""")
radius = spec.D / 2.0
body = em.L2Ball(np.zeros(spec.d), radius)
family = em.linear_family(np.eye(spec.d) * spec.G)
population = params.population()
x_star = params.ball_minimizer() * radius
print("population excess risk (exact arithmetic, no sampling):")
print(f"  at the minimizer -v R/sqrt(d): {em.optimality_gap(family, population, x_star, body)!r}")
print(f"  at the origin:                 "
      f"{em.optimality_gap(family, population, np.zeros(spec.d), body):.6f}"
      f"  (= delta_hi sqrt(d) R = {params.delta * math.sqrt(spec.d) * radius:.6f})")
print(f"  at +v R/sqrt(d) (worst sign):  "
      f"{em.optimality_gap(family, population, -x_star, body):.6f}")

# ---------------------------------------------------------------------------
print()
print("=" * 72)
print("2. Sampling the instance")
print("=" * 72)
rng = np.random.default_rng(2024)
params2, data = em.sample_hard_instance(em.ProblemSpec(500, 4, 2.0, 2.0), 8.0, rng)
emp_mean = data.samples.mean(axis=0)
print(f"""
A fresh instance (n=500 samples, query budget k=8, freshly drawn signs),
500 draws from its population:
  true mean      {np.round(params2.delta * params2.v, 4).tolist()}
  empirical mean {np.round(emp_mean, 4).tolist()}
  per-coordinate noise sigma/sqrt(n) = {params2.sigma / math.sqrt(500):.4f}

The per-coordinate signal ({params2.delta:.4f}) sits near the noise level —
exactly the regime where query-limited algorithms cannot find v.
""")

# ---------------------------------------------------------------------------
print("=" * 72)
print("3. The library's own query budget is quadratic in n")
print("=" * 72)
print("""
Running the calibrated ERM mechanism across a doubling sweep of n (d=1,
fixed budget) and counting actual value queries:
""")
G, D = 1.0, 2.0
budget = em.PrivacyBudget(1.0, 1e-4)
print(f"{'n':>6} {'k':>10} {'T':>10} {'queries':>14} {'q/step':>8}")
prev = None
for n in (40, 80, 160):
    spec = em.ProblemSpec(n, 1, G, D)
    rng = np.random.default_rng(1000 + n)
    raw = rng.standard_normal((n, 1))
    rows = G * raw / np.abs(raw)
    data = em.Dataset(rows)
    config, _ = em.calibrate_erm(spec, budget)
    samples, report = em.run_mechanism(config, em.linear_family(rows), data,
                                       em.L2Ball(np.zeros(1), D / 2.0),
                                       delta_tv=1e-2, seed=3, engine="fast",
                                       constants=em.DESK_CONSTANTS,
                                       compute_excess=False)
    growth = f"  x{report.queries / prev:.2f}" if prev else ""
    print(f"{n:>6} {config.k:>10.3f} {report.T:>10} {report.queries:>14}"
          f" {report.sampler.queries_per_step():>8.2f}{growth}")
    prev = report.queries
print("""
Each doubling of n multiplies the measured query count by about 4 (the
log factors in the schedule add a little on top): the mechanism works at
the quadratic query budget the hard instance proves necessary.
""")
print("done.")
