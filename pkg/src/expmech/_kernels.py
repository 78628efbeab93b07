"""Compiled chain loop: same algorithm as expmech.sampler, built for long horizons.

The kernel reimplements the outer chain + restricted step + series estimator in
one njit function.  RNG is an in-kernel xoshiro256** seeded via splitmix64 from
(seed, global chain index): 64-bit seed space, streams independent of how
chains are batched across calls, and bit-identical output for a fixed seed.

Law equality with the reference engine is asserted by the test suite; nothing
here is fastmath or thread-local, so results are deterministic.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .geometry import AllSpace, Box, L2Ball
from .sampler import HIST_LEN, SamplerAbort, SamplerReport

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_CHAIN_MIX = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S17 = np.uint64(17)
_S64 = np.uint64(64)
_U5 = np.uint64(5)
_U7 = np.uint64(7)
_U9 = np.uint64(9)
_U45 = np.uint64(45)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53
_TWO_PI = 6.283185307179586


@njit(cache=True, inline="always")
def _sm64(state):
    state = state + _SM_GAMMA
    z = state
    z = (z ^ (z >> _S30)) * _SM_M1
    z = (z ^ (z >> _S27)) * _SM_M2
    z = z ^ (z >> _S31)
    return state, z


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << k) | (x >> (_S64 - k))


@njit(cache=True, inline="always")
def _xo_next(s):
    result = _rotl(s[1] * _U5, _U7) * _U9
    t = s[1] << _S17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], _U45)
    return result


@njit(cache=True, inline="always")
def _uniform(s):
    return float(_xo_next(s) >> _S11) * _INV53


@njit(cache=True, inline="always")
def _normal(s, nstate):
    if nstate[0] > 0.5:
        nstate[0] = 0.0
        return nstate[1]
    u1 = _uniform(s)
    while u1 <= 1e-300:
        u1 = _uniform(s)
    u2 = _uniform(s)
    r = math.sqrt(-2.0 * math.log(u1))
    a = _TWO_PI * u2
    nstate[0] = 1.0
    nstate[1] = r * math.sin(a)
    return r * math.cos(a)


@njit(cache=True, inline="always")
def _contains(body_kind, ba, bb, br, x):
    if body_kind == 0:
        return True
    if body_kind == 1:
        acc = 0.0
        for i in range(x.shape[0]):
            di = x[i] - ba[i]
            acc += di * di
        return acc <= br * br * (1.0 + 2e-12)
    for i in range(x.shape[0]):
        if x[i] < ba[i] - 1e-12 or x[i] > bb[i] + 1e-12:
            return False
    return True


@njit(cache=True)
def _base_draw(s, nstate, y, shrink, std, body_kind, ba, bb, br, out,
               anchor, uvec, max_attempts, counters):
    # Propose from the base Gaussian recentered at the projection of its mean
    # onto the body, and tilt back exactly (exponent <= 0 inside the body);
    # same scheme as sampler.base_gaussian_draw.
    d = y.shape[0]
    var = std * std
    for i in range(d):
        uvec[i] = y[i] * shrink          # the unprojected base mean
        anchor[i] = uvec[i]
    if body_kind == 1:
        acc = 0.0
        for i in range(d):
            di = anchor[i] - ba[i]
            acc += di * di
        r = math.sqrt(acc)
        if r > br:
            f = br / r
            for i in range(d):
                anchor[i] = ba[i] + f * (anchor[i] - ba[i])
    elif body_kind == 2:
        for i in range(d):
            if anchor[i] < ba[i]:
                anchor[i] = ba[i]
            elif anchor[i] > bb[i]:
                anchor[i] = bb[i]
    unorm2 = 0.0
    for i in range(d):
        uvec[i] = uvec[i] - anchor[i]
        unorm2 += uvec[i] * uvec[i]
    tilted = unorm2 > 0.0
    for _ in range(max_attempts):
        for i in range(d):
            out[i] = anchor[i] + std * _normal(s, nstate)
        counters[1] += 1
        if not _contains(body_kind, ba, bb, br, out):
            continue
        if not tilted:
            return True
        e = 0.0
        for i in range(d):
            e += (out[i] - anchor[i]) * uvec[i]
        e /= var
        if e >= 0.0 or _uniform(s) < math.exp(e):
            return True
    return False


@njit(cache=True, nogil=True)
def _run_chains(n_chains, chain_index0, seed, T, eta, mu, x0, kind, rows, scale,
                abs_offset, body_kind, ba, bb, br, max_base, max_step,
                out, counters, attempts_hist, terms_hist):
    d = x0.shape[0]
    m = rows.shape[0]
    shrink = 1.0 / (1.0 + eta * mu)
    std = math.sqrt(eta * shrink)
    sqrt_eta = math.sqrt(eta)
    x = np.empty(d)
    y = np.empty(d)
    xx = np.empty(d)
    zz = np.empty(d)
    dzx = np.empty(d)
    anchor = np.empty(d)
    uvec = np.empty(d)
    s = np.empty(4, dtype=np.uint64)
    nstate = np.zeros(2)
    for c in range(n_chains):
        sm = seed + np.uint64(chain_index0 + c + 1) * _CHAIN_MIX
        for i in range(4):
            sm, w = _sm64(sm)
            s[i] = w
        if s[0] == np.uint64(0) and s[1] == np.uint64(0) and s[2] == np.uint64(0) and s[3] == np.uint64(0):
            s[0] = np.uint64(1)
        nstate[0] = 0.0
        for i in range(d):
            x[i] = x0[i]
        for _t in range(T):
            for i in range(d):
                y[i] = x[i] + sqrt_eta * _normal(s, nstate)
            if kind == 0:
                if not _base_draw(s, nstate, y, shrink, std, body_kind, ba, bb, br,
                                  x, anchor, uvec, max_base, counters):
                    return 1
                attempts_hist[1] += 1
                terms_hist[0] += 1
            else:
                attempts = 0
                step_terms = 0
                while True:
                    attempts += 1
                    if attempts > max_step:
                        return 2
                    if not _base_draw(s, nstate, y, shrink, std, body_kind, ba, bb, br,
                                      xx, anchor, uvec, max_base, counters):
                        return 1
                    if not _base_draw(s, nstate, y, shrink, std, body_kind, ba, bb, br,
                                      zz, anchor, uvec, max_base, counters):
                        return 1
                    for i in range(d):
                        dzx[i] = zz[i] - xx[i]
                    rho = 1.0
                    alpha = 0
                    q = 0
                    while True:
                        alpha += 1
                        prod = 1.0
                        for _r in range(alpha):
                            j = int(_uniform(s) * m)
                            if j >= m:
                                j = m - 1
                            if kind == 1:
                                acc = 0.0
                                for i in range(d):
                                    acc += rows[j, i] * dzx[i]
                                prod *= scale * acc
                            else:
                                az = 0.0
                                ax = 0.0
                                for i in range(d):
                                    az += rows[j, i] * zz[i]
                                    ax += rows[j, i] * xx[i]
                                prod *= scale * (abs(az - abs_offset) - abs(ax - abs_offset))
                        q += 2 * alpha
                        rho += prod
                        step_terms += 1
                        if _uniform(s) < alpha / (alpha + 1.0):
                            break
                    counters[0] += q
                    if rho < 0.0:
                        counters[2] += 1
                    elif rho > 2.0:
                        counters[3] += 1
                    if _uniform(s) <= 0.5 * rho:
                        for i in range(d):
                            x[i] = xx[i]
                        break
                ai = attempts if attempts < HIST_LEN else HIST_LEN - 1
                attempts_hist[ai] += 1
                ti = step_terms if step_terms < HIST_LEN else HIST_LEN - 1
                terms_hist[ti] += 1
        for i in range(d):
            out[c, i] = x[i]
    return 0


_KIND_CODE = {"none": 0, "linear": 1, "abs_linear": 2}


def _encode_body(body, d):
    if isinstance(body, AllSpace):
        return 0, np.zeros(d), np.zeros(d), 0.0
    if isinstance(body, L2Ball):
        return 1, np.ascontiguousarray(body.center()), np.zeros(d), float(body.radius)
    if isinstance(body, Box):
        return 2, np.ascontiguousarray(body.lower), np.ascontiguousarray(body.upper), 0.0
    raise ValueError(f"kernel does not support body {body!r}")


def run_chains(objective, schedule, n_chains, seed, chain_index0=0,
               max_base_attempts=1_000_000, max_step_attempts=1_000_000):
    """Compiled version of sampler.sample_chains. Returns (samples, SamplerReport)."""
    if objective.index_law is not None:
        raise ValueError("the compiled engine only supports the uniform index law")
    d = objective.dim
    kind = _KIND_CODE[objective.kind]
    if objective.member_lipschitz == 0.0:
        kind = 0
    if kind != 0 and objective.member_count < 1:
        raise ValueError("objective has no loss members")
    body_kind, ba, bb, br = _encode_body(objective.reg.body, d)
    rows = np.ascontiguousarray(objective.rows, dtype=float)
    out = np.empty((int(n_chains), d))
    counters = np.zeros(5, dtype=np.int64)
    attempts_hist = np.zeros(HIST_LEN, dtype=np.int64)
    terms_hist = np.zeros(HIST_LEN, dtype=np.int64)
    status = _run_chains(int(n_chains), int(chain_index0), np.uint64(int(seed) & (2**64 - 1)),
                         int(schedule.T), float(schedule.eta), float(objective.reg.mu),
                         np.ascontiguousarray(schedule.x0, dtype=float), kind, rows,
                         float(objective.scale), float(objective.abs_offset),
                         body_kind, ba, bb, br, int(max_base_attempts), int(max_step_attempts),
                         out, counters, attempts_hist, terms_hist)
    if status == 1:
        raise SamplerAbort(
            f"base draw rejected {max_base_attempts} proposals (body {objective.reg.body!r}, "
            f"eta {schedule.eta:.3g}); target mass under the base Gaussian is effectively zero")
    if status == 2:
        raise SamplerAbort(
            f"restricted step rejected {max_step_attempts} attempts; schedule caps "
            f"likely violated (eta {schedule.eta:.3g}, member Lipschitz {objective.member_lipschitz:.3g})")
    report = SamplerReport(
        chains=int(n_chains), outer_steps=int(schedule.T),
        value_queries=int(counters[0]), base_draws=int(counters[1]),
        inner_attempts_hist=attempts_hist, terms_hist=terms_hist,
        rho_below_0=int(counters[2]), rho_above_2=int(counters[3]),
        short_circuited=(kind == 0), seed=int(seed), engine="fast")
    return out, report
