"""Symbol calculus for invariant generators on the circle and flat torus.

Every generator is described by an OperatorSpec and realized as a Fourier
multiplier a(xi) tabulated on a truncated integer lattice.  One sign
convention is fixed throughout: symbols satisfy Re a >= 0 and the semigroup
is the multiplier exp(-t a(xi)), so even-order derivative operators enter as
a(xi) = sum_i xi_i^(2k) with no alternating-sign bookkeeping anywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import (
    BranchCut,
    DegreeViolation,
    NonPositiveDefiniteForm,
    QuadratureNonConverged,
    TiltOutOfDomain,
    ValidationError,
)
from .grids import FrequencyGrid

# quadrature error above this multiple of the requested tolerance is a failure
_QUAD_SLACK = 10.0
# exp(support * |Im xi|) amplifies quadrature error; beyond this we refuse
_LEVY_IM_BUDGET = 30.0


# ---------------------------------------------------------------------------
# operator descriptions


class OperatorSpec:
    """Base class for generator descriptions; concrete variants below."""

    @property
    def dimension(self) -> int:
        raise NotImplementedError

    @property
    def order(self) -> float:
        raise NotImplementedError

    @property
    def ellipticity_order(self) -> float:
        return self.order


@dataclass(frozen=True)
class PurePower(OperatorSpec):
    """a(xi) = sum_i xi_i^(2k), the constant-coefficient power of the Laplacian."""

    k: int
    d: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.d not in (1, 2):
            raise ValidationError(f"d must be 1 or 2, got {self.d}")

    @property
    def dimension(self) -> int:
        return self.d

    @property
    def order(self) -> float:
        return 2 * self.k


def multi_indices(d: int, k: int) -> list[tuple[int, ...]]:
    """Length-k multi-indices over d coordinates, in deterministic order."""
    return list(combinations_with_replacement(range(d), k))


@dataclass(frozen=True, eq=False)
class QuadraticForm(OperatorSpec):
    """a(xi) = v(xi)^T A v(xi) with v the vector of degree-k monomials.

    A is indexed by `multi_indices(d, k)` and must be symmetric positive
    definite (checked by Cholesky).
    """

    k: int
    a_matrix: np.ndarray
    d: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.d not in (1, 2):
            raise ValidationError(f"d must be 1 or 2, got {self.d}")
        a = np.asarray(self.a_matrix, dtype=float)
        n = len(multi_indices(self.d, self.k))
        if a.shape != (n, n):
            raise ValidationError(
                f"a_matrix must be {n}x{n} for d={self.d}, k={self.k}, got {a.shape}"
            )
        if not np.allclose(a, a.T, rtol=0, atol=1e-12):
            raise NonPositiveDefiniteForm("a_matrix is not symmetric")
        try:
            np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            raise NonPositiveDefiniteForm("a_matrix fails Cholesky") from None
        object.__setattr__(self, "a_matrix", a)

    @property
    def dimension(self) -> int:
        return self.d

    @property
    def order(self) -> float:
        return 2 * self.k


@dataclass(frozen=True)
class LevyDensity:
    """Even, nonnegative jump density with compact support and h(0) = 1."""

    h: Callable[[float], float]
    support: float
    tol: float = 1e-8

    def __post_init__(self):
        if self.support <= 0:
            raise ValidationError(f"support must be > 0, got {self.support}")
        if abs(self.h(0.0) - 1.0) > 1e-12:
            raise ValidationError("density must satisfy h(0) = 1")
        for y in np.linspace(0.0, self.support, 17)[1:]:
            if abs(self.h(float(y)) - self.h(float(-y))) > 1e-12:
                raise ValidationError("density must be even")
            if self.h(float(y)) < -1e-15:
                raise ValidationError("density must be nonnegative")


@dataclass(frozen=True)
class Levy(OperatorSpec):
    """Compensated jump generator of effective order 2l + 1 + alpha_levy."""

    l: int
    alpha_levy: float
    density: LevyDensity

    def __post_init__(self):
        if self.l < 1:
            raise ValidationError(f"l must be >= 1, got {self.l}")
        if not (-1.0 < self.alpha_levy < 0.0):
            raise ValidationError(
                f"alpha_levy must lie in (-1, 0), got {self.alpha_levy}"
            )

    @property
    def dimension(self) -> int:
        return 1

    @property
    def order(self) -> float:
        return 2 * self.l + 1 + self.alpha_levy

    @property
    def ellipticity_order(self) -> float:
        # the compensated integral grows like xi^(2l) on the lattice
        return 2 * self.l


@dataclass(frozen=True)
class FractionalPower(OperatorSpec):
    """a(xi) = a_base(xi)^alpha_frac, principal branch on Re >= 0."""

    base: OperatorSpec
    alpha_frac: float

    def __post_init__(self):
        if not (0.0 < self.alpha_frac < 1.0):
            raise ValidationError(
                f"alpha_frac must lie in (0, 1), got {self.alpha_frac}"
            )

    @property
    def dimension(self) -> int:
        return self.base.dimension

    @property
    def order(self) -> float:
        return self.alpha_frac * self.base.order

    @property
    def ellipticity_order(self) -> float:
        return self.alpha_frac * self.base.ellipticity_order


@dataclass(frozen=True, eq=False)
class Perturbed(OperatorSpec):
    """a(xi) = a_base(xi) + Q(i xi) with deg Q strictly below the base order.

    q_coeffs maps exponent multi-indices (tuples of length d) to real
    coefficients of the polynomial Q evaluated at (i xi_1, ..., i xi_d).
    """

    base: OperatorSpec
    q_coeffs: dict

    def __post_init__(self):
        coeffs = dict(self.q_coeffs)
        d = self.base.dimension
        for expo, c in coeffs.items():
            if len(expo) != d or any(e < 0 for e in expo):
                raise ValidationError(f"bad exponent {expo} for d={d}")
            float(c)
        degree = max((sum(e) for e in coeffs), default=0)
        if degree >= self.base.order:
            raise DegreeViolation(
                f"perturbation degree {degree} must be < base order {self.base.order}"
            )
        object.__setattr__(self, "q_coeffs", coeffs)

    @property
    def dimension(self) -> int:
        return self.base.dimension

    @property
    def order(self) -> float:
        return self.base.order

    @property
    def ellipticity_order(self) -> float:
        return self.base.ellipticity_order


@dataclass(frozen=True)
class Rescaled(OperatorSpec):
    """prefactor * a_base(freq_scale * xi) — scaling plumbing shared by
    small-parameter normalizations and the t*L time identity."""

    base: OperatorSpec
    prefactor: float = 1.0
    freq_scale: float = 1.0

    def __post_init__(self):
        if self.prefactor <= 0 or self.freq_scale <= 0:
            raise ValidationError("prefactor and freq_scale must be > 0")

    @property
    def dimension(self) -> int:
        return self.base.dimension

    @property
    def order(self) -> float:
        return self.base.order

    @property
    def ellipticity_order(self) -> float:
        return self.base.ellipticity_order


# ---------------------------------------------------------------------------
# compensated kernels for the jump quadrature

def _series_tail(u: complex, first: int, step: int, signed: bool) -> complex:
    # sum_{j >= first, j = first + step*m} (+/-)^. u^j / j!  (tail of exp/cos/cosh)
    total = 0.0 + 0.0j
    term_pow = u**first
    j = first
    while True:
        term = term_pow / math.factorial(j)
        if signed and (j // 2) % 2 == 1:
            term = -term
        total += term
        if abs(term) <= 1e-30 * (1.0 + abs(total)) or j > first + 120:
            return total
        term_pow = term_pow * u**step
        j += step


def _cos_comp(u: float, l: int) -> float:
    """cos(u) minus its Taylor polynomial through degree 2l."""
    if abs(u) <= 2.0:
        return float(_series_tail(complex(u), 2 * l + 2, 2, signed=True).real)
    s = sum((-1.0) ** j * u ** (2 * j) / math.factorial(2 * j) for j in range(l + 1))
    return math.cos(u) - s


def _cosh_comp(u: float, l: int) -> float:
    """cosh(u) minus its Taylor polynomial through degree 2l."""
    if abs(u) <= 2.0:
        return float(_series_tail(complex(u), 2 * l + 2, 2, signed=False).real)
    s = sum(u ** (2 * j) / math.factorial(2 * j) for j in range(l + 1))
    return math.cosh(u) - s


def _exp_comp(w: complex, n: int) -> complex:
    """exp(w) minus its Taylor polynomial through degree n."""
    if abs(w) <= 2.0:
        return _series_tail(w, n + 1, 1, signed=False)
    s = sum(w**j / math.factorial(j) for j in range(n + 1))
    return np.exp(w) - s


def _quad_checked(f, a: float, b: float, tol: float) -> float:
    val, err = integrate.quad(f, a, b, epsabs=tol * 1e-3, epsrel=1e-10, limit=400)
    if err > _QUAD_SLACK * tol * (1.0 + abs(val)):
        raise QuadratureNonConverged(
            f"estimated quadrature error {err:.3e} above tolerance {tol:.1e}"
        )
    return val


def levy_symbol(density: LevyDensity, l: int, alpha_levy: float, xi) -> complex:
    """Compensated jump symbol at a (possibly complex) frequency.

    For real xi the even density makes the result real; complex shifts are
    admitted while exp(support * |Im xi|) stays within the quadrature budget.
    """
    if not (-1.0 < alpha_levy < 0.0):
        raise ValidationError(f"alpha_levy must lie in (-1, 0), got {alpha_levy}")
    if l < 1:
        raise ValidationError(f"l must be >= 1, got {l}")
    z = complex(xi)
    if z == 0:
        return 0.0 + 0.0j
    sign = (-1.0) ** (l + 1)
    supp, tol, h = density.support, density.tol, density.h
    power = 2 * l + 1 + alpha_levy
    if z.imag == 0.0:
        u = z.real

        def f(y):
            return _cos_comp(y * u, l) * h(y) * y ** (-power)

        return complex(sign * 2.0 * _quad_checked(f, 0.0, supp, tol), 0.0)
    if supp * abs(z.imag) > _LEVY_IM_BUDGET:
        raise TiltOutOfDomain(
            f"imaginary shift {z.imag:.3g} exceeds the quadrature budget "
            f"{_LEVY_IM_BUDGET / supp:.3g} for support {supp:.3g}"
        )

    def both(y):
        # f(y) + f(-y); the compensation keeps the integrand O(y^(1-alpha))
        return (_exp_comp(1j * y * z, 2 * l) + _exp_comp(-1j * y * z, 2 * l)) * h(
            y
        ) * y ** (-power)

    re = _quad_checked(lambda y: both(y).real, 0.0, supp, tol)
    im = _quad_checked(lambda y: both(y).imag, 0.0, supp, tol)
    return sign * complex(re, im)


def levy_hamiltonian(density: LevyDensity, l: int, alpha_levy: float, xi: float) -> float:
    """Real-phase version of levy_symbol: convex, even, vanishing at 0."""
    if not (-1.0 < alpha_levy < 0.0):
        raise ValidationError(f"alpha_levy must lie in (-1, 0), got {alpha_levy}")
    if xi == 0.0:
        return 0.0
    sign = (-1.0) ** (l + 1)
    supp, tol, h = density.support, density.tol, density.h
    power = 2 * l + 1 + alpha_levy

    def f(y):
        return _cosh_comp(y * xi, l) * h(y) * y ** (-power)

    return sign * 2.0 * _quad_checked(f, 0.0, supp, tol)


# ---------------------------------------------------------------------------
# pointwise evaluation, shared by tabulation and the continuous paths


def symbol_value(spec: OperatorSpec, z):
    """Evaluate the symbol at arbitrary (real or complex) frequencies.

    For d = 1, `z` is any scalar or array; for d = 2 the last axis holds the
    two coordinates.  Returns complex values of matching shape.
    """
    if isinstance(spec, Rescaled):
        return spec.prefactor * symbol_value(spec.base, np.asarray(z) * spec.freq_scale)
    d = spec.dimension
    z = np.asarray(z, dtype=complex)
    if d == 1:
        zz = z[..., np.newaxis]
    else:
        if z.ndim == 0 or z.shape[-1] != d:
            raise ValidationError(f"frequency array must have last axis {d}")
        zz = z
    if isinstance(spec, PurePower):
        return np.sum(zz ** (2 * spec.k), axis=-1)
    if isinstance(spec, QuadraticForm):
        idx = multi_indices(d, spec.k)
        mono = np.empty(zz.shape[:-1] + (len(idx),), dtype=complex)
        for m, ind in enumerate(idx):
            v = np.ones(zz.shape[:-1], dtype=complex)
            for j in ind:
                v = v * zz[..., j]
            mono[..., m] = v
        return np.einsum("...i,ij,...j->...", mono, spec.a_matrix, mono)
    if isinstance(spec, FractionalPower):
        w = symbol_value(spec.base, z)
        return _principal_power(w, spec.alpha_frac)
    if isinstance(spec, Perturbed):
        out = symbol_value(spec.base, z)
        iz = 1j * zz
        for expo, c in spec.q_coeffs.items():
            term = np.full(zz.shape[:-1], complex(c))
            for j, e in enumerate(expo):
                if e:
                    term = term * iz[..., j] ** e
            out = out + term
        return out
    if isinstance(spec, Levy):
        flat = zz[..., 0].ravel()
        vals = np.array(
            [levy_symbol(spec.density, spec.l, spec.alpha_levy, w) for w in flat]
        )
        return vals.reshape(zz.shape[:-1])
    raise ValidationError(f"unknown operator spec {type(spec).__name__}")


def _principal_power(w, alpha: float):
    w = np.asarray(w, dtype=complex)
    on_cut = (w.real < 0) & (np.abs(w.imag) <= 1e-14 * np.abs(w))
    if np.any(on_cut):
        raise BranchCut("fractional power hit the negative real axis")
    out = np.zeros_like(w)
    nz = w != 0
    out[nz] = np.exp(alpha * np.log(w[nz]))
    return out


# ---------------------------------------------------------------------------
# the tabulated symbol


@dataclass(eq=False)
class Symbol:
    """Fourier multiplier tabulated on a frequency lattice, with flags."""

    grid: FrequencyGrid
    values: np.ndarray
    order: float
    ellipticity_order: float
    real_valued: bool
    even: bool
    nonnegative_real_part: bool
    spec: OperatorSpec | None = None

    def at(self, z):
        """Continuous/complex evaluation; requires a backing OperatorSpec."""
        if self.spec is None:
            raise ValidationError("tabulated-only symbol has no continuous evaluation")
        return symbol_value(self.spec, z)

    def scaled(self, factor: float) -> "Symbol":
        """The symbol factor*a on the same lattice (factor > 0 keeps flags)."""
        if factor <= 0:
            raise ValidationError("scaling factor must be > 0")
        spec = Rescaled(self.spec, prefactor=factor) if self.spec is not None else None
        return Symbol(
            grid=self.grid,
            values=self.values * factor,
            order=self.order,
            ellipticity_order=self.ellipticity_order,
            real_valued=self.real_valued,
            even=self.even,
            nonnegative_real_part=self.nonnegative_real_part,
            spec=spec,
        )

    def lattice_min_real(self) -> float:
        return float(np.min(self.values.real))


def _negation_permutation(grid: FrequencyGrid) -> np.ndarray:
    index = {tuple(p): i for i, p in enumerate(grid.points)}
    return np.array([index[tuple(-p)] for p in grid.points])


def _probe_nonnegative(spec: OperatorSpec, n: int) -> bool:
    """Continuous dissipativity probe between lattice points.

    A lower-order perturbation can dip below zero strictly inside a lattice
    cell (e.g. xi^4 - xi^2 on 0 < |xi| < 1), which the tabulated values never
    see; the flag must reflect the continuous symbol.
    """
    if isinstance(spec, Levy):
        return True  # nonnegative density; checked on the lattice elsewhere
    d = spec.dimension
    if d == 1:
        xi = np.linspace(-n, n, 128 * n + 1)
        vals = symbol_value(spec, xi)
        return float(np.min(vals.real)) >= -1e-12
    rad = np.linspace(0.0, n * math.sqrt(2.0), 64 * n + 1)
    angles = np.linspace(0.0, 2.0 * np.pi, 65)[:-1]
    worst = 0.0
    for th in angles:
        pts = np.stack([rad * math.cos(th), rad * math.sin(th)], axis=-1)
        vals = symbol_value(spec, pts)
        worst = min(worst, float(np.min(vals.real)))
    return worst >= -1e-12


def build_symbol(spec: OperatorSpec, grid: FrequencyGrid) -> Symbol:
    """Tabulate an operator's symbol on a frequency lattice."""
    if spec.dimension != grid.dimension:
        raise ValidationError(
            f"spec dimension {spec.dimension} != grid dimension {grid.dimension}"
        )
    base = spec.base if isinstance(spec, Rescaled) else spec
    if isinstance(base, Levy) or (
        isinstance(base, (FractionalPower, Perturbed))
        and _contains_levy(base)
    ):
        values = _tabulate_with_cache(spec, grid)
    else:
        values = np.asarray(symbol_value(spec, grid.points.astype(float)), dtype=complex)
        if grid.dimension == 1:
            values = values.reshape(grid.size)
    scale = max(1.0, float(np.max(np.abs(values))))
    if isinstance(_fractional_root(spec), FractionalPower):
        # reject fractional powers of symbols that dip into Re < 0
        inner = _fractional_root(spec)
        base_vals = symbol_value(inner.base, grid.points.astype(float))
        if float(np.min(np.asarray(base_vals).real)) < -1e-12 * scale:
            raise BranchCut("fractional power of a symbol with negative real part")
    real_valued = bool(np.max(np.abs(values.imag)) <= 1e-12 * scale)
    neg = _negation_permutation(grid)
    even = bool(np.max(np.abs(values - values[neg])) <= 1e-12 * scale)
    nonneg = float(np.min(values.real)) >= -1e-12 * scale
    if nonneg and isinstance(base, (Perturbed, QuadraticForm, PurePower, FractionalPower)):
        nonneg = _probe_nonnegative(spec, grid.cutoff)
    return Symbol(
        grid=grid,
        values=values,
        order=spec.order,
        ellipticity_order=spec.ellipticity_order,
        real_valued=real_valued,
        even=even,
        nonnegative_real_part=bool(nonneg),
        spec=spec,
    )


def _contains_levy(spec: OperatorSpec) -> bool:
    if isinstance(spec, Levy):
        return True
    inner = getattr(spec, "base", None)
    return _contains_levy(inner) if inner is not None else False


def _fractional_root(spec: OperatorSpec):
    # unwrap Rescaled to find a FractionalPower at the top of the tree
    while isinstance(spec, Rescaled):
        spec = spec.base
    return spec


def _tabulate_with_cache(spec: OperatorSpec, grid: FrequencyGrid) -> np.ndarray:
    # jump symbols are quadratures: dedupe lattice points by value
    cache: dict[float, complex] = {}
    out = np.empty(grid.size, dtype=complex)
    for i, p in enumerate(grid.points):
        xi = float(p[0])
        key = abs(xi)  # even in xi for even densities
        if key not in cache:
            cache[key] = complex(symbol_value(spec, xi))
        out[i] = cache[key]
    return out


# ---------------------------------------------------------------------------
# structural checks


def ellipticity_constants(symbol: Symbol) -> tuple[float, float, bool]:
    """Largest C with |a(xi)| >= C |xi|^(m') over the outer half of the lattice."""
    n = symbol.grid.cutoff
    if n < 4:
        raise ValidationError("ellipticity fit needs a lattice with N >= 4")
    pts = symbol.grid.points.astype(float)
    norms = np.sqrt(np.sum(pts**2, axis=1))
    shell = norms >= n / 2.0
    m_prime = symbol.ellipticity_order
    ratios = np.abs(symbol.values[shell]) / norms[shell] ** m_prime
    c = float(np.min(ratios))
    return c, m_prime, bool(c > 1e-14)


def growth_check(symbol: Symbol) -> tuple[bool, float]:
    """Fit the smallest C with |a(xi)| <= C (1 + |xi|)^m over the lattice."""
    pts = symbol.grid.points.astype(float)
    norms = np.sqrt(np.sum(pts**2, axis=1))
    c_fit = float(np.max(np.abs(symbol.values) / (1.0 + norms) ** symbol.order))
    return bool(np.isfinite(c_fit)), c_fit


def _shell_min_real(spec: OperatorSpec, n: int) -> float:
    if spec.dimension == 1:
        vals = symbol_value(spec, np.array([-float(n), float(n)]))
        return float(np.min(vals.real))
    edge = np.arange(-n, n + 1, dtype=float)
    side = np.full_like(edge, float(n))
    ring = np.concatenate(
        [
            np.stack([side, edge], axis=-1),
            np.stack([-side, edge], axis=-1),
            np.stack([edge, side], axis=-1),
            np.stack([edge, -side], axis=-1),
        ]
    )
    return float(np.min(symbol_value(spec, ring).real))


def auto_cutoff(spec: OperatorSpec, t: float, threshold: float = 1e-16,
                n_max: int = 1 << 16) -> int:
    """Smallest lattice cutoff N whose boundary shell satisfies
    max |exp(-t Re a)| < threshold."""
    if t <= 0:
        raise ValidationError(f"t must be > 0, got {t}")
    target = -math.log(threshold)

    def ok(n: int) -> bool:
        return t * _shell_min_real(spec, n) > target

    n = 4
    while not ok(n):
        n *= 2
        if n > n_max:
            raise ValidationError(
                f"no admissible cutoff below {n_max} for t={t:.3g}"
            )
    lo, hi = n // 2, n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return max(hi, 4)
