"""Independent reference values for the test suite.

Everything here is computed by a different route than the package uses:
image sums instead of Fourier inversion, closed-form extremizers instead of
numeric minimization, midpoint Riemann sums with Richardson refinement
instead of adaptive quadrature, and high-precision series summation for the
one diagonal value that has no elementary closed form.  Expected values
frozen into the tests were produced by these functions.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# second-order generator: everything Gaussian


def wrapped_gaussian(t: float, z, images: int = 12):
    """Heat kernel of d^2/dx^2 on the circle via the method of images.

    exp(-t xi^2) multipliers sum to a Gaussian of variance 2t wrapped around
    the circle; image terms decay like exp(-pi^2 m^2 / t), so a dozen images
    is far below double precision for every t >= 1e-3.
    """
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    for m_img in range(-images, images + 1):
        out += np.exp(-((z + TWO_PI * m_img) ** 2) / (4.0 * t))
    return out / math.sqrt(4.0 * math.pi * t)


def tilted_gaussian_kernel(s: float, tau: float, z, images: int = 12):
    """Completing the square in exp(-s (xi - i tau)^2) recenters the wrapped
    Gaussian by 2 s tau and scales it by exp(s tau^2)."""
    return math.exp(s * tau * tau) * wrapped_gaussian(
        s, np.asarray(z, dtype=float) + 2.0 * s * tau, images=images
    )


def quadratic_rate(x: float, y: float, winding_max: int = 2) -> float:
    """Action of the straight line for H = xi^2: min over lifts of
    (displacement)^2 / 4."""
    return min(
        (y - x + TWO_PI * w) ** 2 / 4.0
        for w in range(-winding_max, winding_max + 1)
    )


# ---------------------------------------------------------------------------
# pure powers: closed-form convex analysis


def power_legendre(k: int, p: float) -> float:
    """sup_xi (p xi - xi^{2k}) = (2k-1) (|p| / 2k)^{2k/(2k-1)}."""
    return (2 * k - 1) * (abs(p) / (2 * k)) ** (2 * k / (2 * k - 1))


def chernoff_exponent(k: int, delta: float, s: float) -> tuple[float, float]:
    """Extremizer and value of min_{xi >= 0} (-delta xi + s xi^{2k})."""
    if delta <= 0:
        return 0.0, 0.0
    xi = (delta / (2 * k * s)) ** (1.0 / (2 * k - 1))
    return xi, -delta * xi + s * xi ** (2 * k)


def quartic_diag(t: float, dps: int = 30) -> float:
    """p_t(0,0) for the quartic generator by direct high-precision summation
    of (1/2pi) sum_n exp(-t n^4)."""
    with mp.workdps(dps):
        total = mp.mpf(1)
        n = 1
        while True:
            term = mp.e ** (-mp.mpf(t) * n ** 4)
            total += 2 * term
            if term < mp.mpf(10) ** (-dps - 5):
                break
            n += 1
        return float(total / (2 * mp.pi))


# ---------------------------------------------------------------------------
# compensated jump generator, flat density on (0, 1]


def _levy_riemann(xi: float, l: int, alpha: float, comp, n: int) -> float:
    """Midpoint Riemann sum of 2 int_0^1 comp(y xi) y^{-2l-1-alpha} dy."""
    y = (np.arange(n) + 0.5) / n
    vals = comp(y * xi, l) * y ** (-(2 * l + 1 + alpha))
    return 2.0 * float(np.sum(vals)) / n


def _cos_remainder(u, l: int):
    """cos(u) minus its Taylor polynomial through degree 2l, evaluated
    stably: the direct difference cancels catastrophically for small u, so
    sum the tail of the alternating series instead."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    small = np.abs(u) < 1.0
    # tail sum, first term degree 2l+2
    us = u[small]
    term = (-1.0) ** (l + 1) * us ** (2 * l + 2) / math.factorial(2 * l + 2)
    acc = term.copy()
    for j in range(l + 2, l + 30):
        term = term * (-(us * us)) / ((2 * j) * (2 * j - 1))
        acc += term
    out[small] = acc
    ub = u[~small]
    poly = np.zeros_like(ub)
    for j in range(l + 1):
        poly += (-1.0) ** j * ub ** (2 * j) / math.factorial(2 * j)
    out[~small] = np.cos(ub) - poly
    return out


def _cosh_remainder(u, l: int):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    small = np.abs(u) < 1.0
    us = u[small]
    term = us ** (2 * l + 2) / math.factorial(2 * l + 2)
    acc = term.copy()
    for j in range(l + 2, l + 30):
        term = term * (us * us) / ((2 * j) * (2 * j - 1))
        acc += term
    out[small] = acc
    ub = u[~small]
    poly = np.zeros_like(ub)
    for j in range(l + 1):
        poly += ub ** (2 * j) / math.factorial(2 * j)
    out[~small] = np.cosh(ub) - poly
    return out


def _richardson(f_coarse: float, f_fine: float) -> float:
    # midpoint rule converges at order 2; one extrapolation step
    return f_fine + (f_fine - f_coarse) / 3.0


def levy_symbol_riemann(xi: float, l: int = 1, alpha: float = -0.5,
                        n: int = 400_000) -> float:
    """Symbol of the compensated jump generator; odd l only, where the
    (-1)^{l+1} prefactor is +1 and the compensated remainder is dissipative."""
    coarse = _levy_riemann(xi, l, alpha, _cos_remainder, n // 2)
    fine = _levy_riemann(xi, l, alpha, _cos_remainder, n)
    return _richardson(coarse, fine)


def levy_hamiltonian_riemann(xi: float, l: int = 1, alpha: float = -0.5,
                             n: int = 400_000) -> float:
    coarse = _levy_riemann(xi, l, alpha, _cosh_remainder, n // 2)
    fine = _levy_riemann(xi, l, alpha, _cosh_remainder, n)
    return _richardson(coarse, fine)
