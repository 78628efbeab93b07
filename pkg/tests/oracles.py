"""Independent reimplementations used to cross-check the library.

Nothing here may call into expmech's formula paths: the privacy curve is
rebuilt from the Gaussian pdf by adaptive quadrature, and the tradeoff curve
by root-finding the rejection threshold on a quadrature CDF. Agreement then
certifies the closed forms rather than restating them.
"""

import math

from scipy import integrate, optimize

_SQ2PI = math.sqrt(2.0 * math.pi)


def _pdf(t):
    return math.exp(-0.5 * t * t) / _SQ2PI


def delta_by_quadrature(s, eps):
    """delta(s, eps) = int max(pdf(t - s) - e^eps pdf(t), 0) dt.

    The integrand is positive exactly on t > eps/s + s/2, so integrate the
    smooth difference from the crossover point outward.
    """
    if s == 0.0:
        return 0.0
    t_star = eps / s + s / 2.0
    val, err = integrate.quad(lambda t: _pdf(t - s) - math.exp(eps) * _pdf(t),
                              t_star, t_star + 60.0,
                              epsabs=1e-14, epsrel=1e-13, limit=300)
    if err > 1e-12:
        raise RuntimeError(f"quadrature did not converge: err={err}")
    return max(0.0, val)


def _upper_tail(c):
    val, _ = integrate.quad(_pdf, c, c + 60.0, epsabs=1e-14, epsrel=1e-13,
                            limit=300)
    return val


def threshold_for_type1(z):
    """c with P_{N(0,1)}(X > c) = z, via bisection on the quadrature CDF."""
    if not 0.0 < z < 1.0:
        raise ValueError("z must be interior")
    return optimize.brentq(lambda c: _upper_tail(c) - z, -40.0, 40.0,
                           xtol=1e-13, rtol=8.9e-16)


def tradeoff_by_quadrature(s, z, c=None):
    """Type-II error of the optimal level-z test between N(0,1) and N(s,1).

    The likelihood-ratio test rejects on X > c with P_0(X > c) = z; the
    type-II error is P_s(X <= c), integrated from the quadrature pdf. Pass a
    precomputed c (from threshold_for_type1) to amortize grids sharing z.
    """
    if c is None:
        c = threshold_for_type1(z)
    val, _ = integrate.quad(lambda t: _pdf(t - s), c - 60.0, c,
                            epsabs=1e-14, epsrel=1e-13, limit=300)
    return val
