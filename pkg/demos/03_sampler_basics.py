"""The alternating sampler: exact draws from non-smooth log-concave targets.

The mechanism needs samples from exp(-psi(x)) on a convex body K, where psi
is strongly convex but possibly non-smooth (a max or an average of linear
pieces).  The sampler alternates two exact steps:

  forward:   y = x + sqrt(eta) * noise
  backward:  x' ~ exp(-psi(x')) * N(x'; y, eta)  restricted to K

The backward draw uses rejection from the Gaussian N(y/(1+eta*mu), eta') and
accepts with an unbiased randomly-truncated series estimate of the loss
factor — so psi is only ever touched through finitely many value queries.
"""

import dataclasses
import math

import numpy as np

import expmech as em

print(__doc__)
rng = np.random.default_rng(7)

# ---------------------------------------------------------------------------
print("=" * 72)
print("1. The unbiased exponential estimator")
print("=" * 72)
print("""
To accept with a probability involving exp(mean_i g_i) without reading every
member difference g_i, the sampler draws a randomly truncated product series
rho with E[rho] = exp(mean_i g_i) exactly; stage alpha of the series is
reached with probability 1/alpha!, so draws are cheap: reaching stage alpha
costs alpha(alpha+1) value queries, for 2e = 5.44 on average.
""")
body = em.Box(np.array([-2.0]), np.array([2.0]))
obj = em.Objective(em.Regularizer(1.0, body), "linear", rows=np.array([[0.2], [0.6]]))
x, z = np.array([0.0]), np.array([0.5])
n = 200_000
rhos = np.empty(n)
terms = np.empty(n, dtype=int)
for i in range(n):
    est = em.unbiased_exp_estimator(obj, x, z, rng)
    rhos[i], terms[i] = est.rho, est.terms_used
print(f"  target  exp(mean diff) = exp(0.2) = {math.exp(0.2):.6f}")
print(f"  mean(rho) over {n} draws = {rhos.mean():.6f}  "
      f"(SE {rhos.std(ddof=1) / math.sqrt(n):.6f})")
print(f"  mean queries per draw: {obj.counter.count / n:.3f}")
print("  stage-reach frequencies vs 1/alpha!:")
for alpha in (1, 2, 3, 4):
    print(f"    alpha={alpha}: {np.mean(terms >= alpha):.5f}  vs  "
          f"{1.0 / math.factorial(alpha):.5f}")

# ---------------------------------------------------------------------------
print()
print("=" * 72)
print("2. Deriving a schedule and sampling")
print("=" * 72)
print("""
derive_schedule turns (Lipschitz constant, strong convexity, TV target) into
a step size eta and an iteration count T.  PROOF_CONSTANTS are the fully
justified settings; DESK_CONSTANTS are the desk-scale ones used for quick
experiments.
""")
rows = np.array([[1.0], [-0.4]])
body = em.Box(np.array([-1.0]), np.array([1.0]))
objective = em.objective_from_family(em.linear_family(rows), rows, body,
                                     added_mu=1.0, scale=2.0)
for name, constants in (("proof", em.PROOF_CONSTANTS), ("desk", em.DESK_CONSTANTS)):
    sch = em.derive_schedule(objective.member_lipschitz, objective.reg.mu, 0.01,
                             x0=body.center(), D_init=body.diameter(), d=1,
                             constants=constants)
    print(f"  {name:>5}: eta = {sch.eta:.6f}, T = {sch.T}, "
          f"inner failure budget per step = {sch.delta_inner:.2e}")

sch = em.derive_schedule(objective.member_lipschitz, objective.reg.mu, 0.01,
                         x0=body.center(), D_init=body.diameter(), d=1,
                         constants=em.DESK_CONSTANTS)
samples, report = em.sample_chains(objective, sch, 50_000, seed=123, engine="fast")
samples = np.atleast_2d(samples)
print(f"""
sampled 50,000 independent chains (compiled engine):
  outer steps per chain: {report.outer_steps}
  value queries total:   {report.value_queries} ({report.queries_per_step():.2f} per outer step)
  base-Gaussian draws:   {report.base_draws}
  sample mean {samples[:, 0].mean():+.4f}, sd {samples[:, 0].std():.4f}
""")

# ---------------------------------------------------------------------------
print("=" * 72)
print("3. Accuracy against a grid oracle")
print("=" * 72)
oracle = em.grid_target(objective)
est = em.tv_estimate(samples[:, 0], oracle, bins=100,
                     rng=np.random.default_rng(5))
print(f"""
binned total-variation distance between the 50,000 draws and a dense
numerical integration of the target density:
  TV = {est.tv:.4f}   (bootstrap upper band [{est.ci_low:.4f}, {est.ci_high:.4f}];
  resampling noise pushes the band above the point estimate)
for a schedule that targeted TV <= 0.01 plus binning noise.
""")

# ---------------------------------------------------------------------------
print("=" * 72)
print("4. The two engines agree")
print("=" * 72)
small = dataclasses.replace(sch, T=30)
fast, _ = em.sample_chains(objective, small, 2000, seed=9, engine="fast")
ref, _ = em.sample_chains(objective, small, 2000, seed=10, engine="reference")
fast, ref = np.atleast_2d(fast), np.atleast_2d(ref)
print(f"""
same target, shortened schedule, 2000 chains each:
  compiled engine   mean {fast[:, 0].mean():+.4f}, sd {fast[:, 0].std():.4f}
  reference engine  mean {ref[:, 0].mean():+.4f}, sd {ref[:, 0].std():.4f}
The reference engine is plain numpy and is what the compiled kernel is
tested against (same law, different RNG streams).
""")
print("done.")
