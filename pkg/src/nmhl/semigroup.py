"""Heat kernels and semigroup actions evaluated from Fourier symbols.

Everything here is spectral and exact in time: the kernel is a truncated
Fourier series with multiplier exp(-t a(xi)), perturbations enter through a
Volterra series whose iterated integrals are polynomial in the inner times
(hence integrated exactly by Gauss-Legendre rules), and tilts are complex
frequency shifts.  Kernels are functions of the difference y - x; the (x, y)
interface wraps this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .errors import (
    ComplexResidue,
    CutoffTooSmall,
    DegreeViolation,
    SeriesDiverged,
    TiltOutOfDomain,
    ValidationError,
)
from .grids import TWO_PI, FrequencyGrid, spatial_grid, wrap_angle
from .spectral import (
    FractionalPower,
    Levy,
    OperatorSpec,
    Perturbed,
    PurePower,
    QuadraticForm,
    Rescaled,
    Symbol,
    auto_cutoff,
    symbol_value,
)

_IMAG_TOL = 1e-10


@dataclass
class KernelField:
    """Heat kernel p_t(x, .) sampled on the uniform spatial grid."""

    x: float | np.ndarray
    t: float
    resolution: int
    values: np.ndarray  # real, shape (M,) or (M, M)
    truncation: float   # max over the boundary shell of |exp(-t a)|
    dimension: int

    @property
    def points(self) -> np.ndarray:
        return spatial_grid(self.resolution, self.dimension)

    def mass(self) -> float:
        cell = (TWO_PI / self.resolution) ** self.dimension
        return float(np.sum(self.values) * cell)

    def abs_mass(self) -> float:
        cell = (TWO_PI / self.resolution) ** self.dimension
        return float(np.sum(np.abs(self.values)) * cell)


def _require_time(t: float):
    if t <= 0:
        raise ValidationError(f"t must be > 0, got {t}")


def _require_dissipative(symbol: Symbol):
    # what the multiplier actually needs: Re a >= 0 at the lattice points
    lo = symbol.lattice_min_real()
    scale = max(1.0, float(np.max(np.abs(symbol.values))))
    if lo < -1e-12 * scale:
        raise ValidationError(
            f"kernel evaluation needs Re a >= 0 on the lattice (min {lo:.3e})"
        )


def _truncation_diag(symbol: Symbol, t: float) -> float:
    shell = symbol.grid.boundary_shell()
    return float(np.max(np.abs(np.exp(-t * symbol.values[shell]))))


def _check_truncation(symbol: Symbol, t: float, threshold: float) -> float:
    diag = _truncation_diag(symbol, t)
    if diag > threshold:
        suggested = None
        if symbol.spec is not None:
            try:
                suggested = auto_cutoff(symbol.spec, t, threshold=min(threshold, 1e-16))
            except ValidationError:
                suggested = None
        raise CutoffTooSmall(
            f"boundary-shell damping {diag:.3e} exceeds threshold {threshold:.1e} "
            f"at t={t:.3g}" + (f"; suggested cutoff N={suggested}" if suggested else ""),
            suggested_cutoff=suggested,
        )
    return diag


def _fold_multiplier(grid: FrequencyGrid, coeffs: np.ndarray, m: int) -> np.ndarray:
    """Place per-lattice-point coefficients into the length-m FFT bins."""
    if m < 2 * grid.cutoff + 1:
        raise ValidationError(
            f"resolution M={m} must be >= 2N+1={2 * grid.cutoff + 1} to resolve the lattice"
        )
    if grid.dimension == 1:
        bins = np.zeros(m, dtype=complex)
        bins[np.mod(grid.points[:, 0], m)] = coeffs
        return bins
    bins = np.zeros((m, m), dtype=complex)
    bins[np.mod(grid.points[:, 0], m), np.mod(grid.points[:, 1], m)] = coeffs
    return bins


def _ifft_field(grid: FrequencyGrid, coeffs: np.ndarray, m: int) -> np.ndarray:
    bins = _fold_multiplier(grid, coeffs, m)
    if grid.dimension == 1:
        return np.fft.ifft(bins) * (m / TWO_PI)
    return np.fft.ifft2(bins) * (m * m / TWO_PI**2)


def _real_part(values: np.ndarray, context: str) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(values.real))))
    resid = float(np.max(np.abs(values.imag)))
    if resid > _IMAG_TOL * scale:
        raise ComplexResidue(
            f"{context}: imaginary residue {resid:.3e} above tolerance "
            f"(non-symmetric symbol fed to a real-kernel path?)"
        )
    return values.real


def heat_kernel(symbol: Symbol, t: float, x=0.0, resolution: int = 256,
                threshold: float = 1e-12) -> KernelField:
    """Kernel p_t(x, y_j) on the uniform grid, via the inverse transform of
    exp(-t a(xi)) exp(-i xi x)."""
    _require_time(t)
    _require_dissipative(symbol)
    diag = _check_truncation(symbol, t, threshold)
    pts = symbol.grid.points.astype(float)
    mult = np.exp(-t * symbol.values)
    if symbol.grid.dimension == 1:
        phase = np.exp(-1j * pts[:, 0] * float(x))
    else:
        xv = np.asarray(x, dtype=float).reshape(2)
        phase = np.exp(-1j * (pts @ xv))
    vals = _ifft_field(symbol.grid, mult * phase, resolution)
    out = _real_part(vals, "heat_kernel")
    if not np.all(np.isfinite(out)):
        raise ValidationError("kernel values are not finite")
    return KernelField(
        x=x, t=t, resolution=resolution, values=out,
        truncation=diag, dimension=symbol.grid.dimension,
    )


def kernel_values(symbol: Symbol, t: float, offsets, threshold: float = 1e-12):
    """p_t(0, z) at arbitrary offsets by the ordered direct sum (d = 1)."""
    _require_time(t)
    _require_dissipative(symbol)
    if symbol.grid.dimension != 1:
        raise ValidationError("direct evaluation is one-dimensional")
    _check_truncation(symbol, t, threshold)
    z = np.atleast_1d(np.asarray(offsets, dtype=float))
    mult = np.exp(-t * symbol.values)
    xi = symbol.grid.points[:, 0].astype(float)
    # lattice order is ascending |xi|: summation order is deterministic
    acc = np.zeros(z.shape, dtype=complex)
    for w, f in zip(mult, xi):
        acc += w * np.exp(1j * f * z)
    out = _real_part(acc / TWO_PI, "kernel_values")
    return out if np.ndim(offsets) else float(out[0])


# ---------------------------------------------------------------------------
# high-precision pointwise logarithm (small-time curves dip far below the
# double-precision cancellation floor)


def _mp_symbol(spec: OperatorSpec, n: int):
    if isinstance(spec, Rescaled):
        if spec.freq_scale != 1.0:
            raise ValidationError("frequency-rescaled specs are not supported here")
        return mp.mpf(spec.prefactor) * _mp_symbol(spec.base, n)
    if isinstance(spec, PurePower):
        return mp.mpf(n) ** (2 * spec.k)
    if isinstance(spec, QuadraticForm) and spec.d == 1:
        return mp.mpf(spec.a_matrix[0, 0]) * mp.mpf(n) ** (2 * spec.k)
    if isinstance(spec, FractionalPower):
        return mp.power(_mp_symbol(spec.base, n), mp.mpf(spec.alpha_frac))
    if isinstance(spec, Perturbed):
        if any(e[0] % 2 for e in spec.q_coeffs):
            # the +/-n pairing below assumes an even symbol
            raise ValidationError(
                "high-precision evaluation needs even perturbation exponents"
            )
        out = mp.mpf(_mp_symbol(spec.base, n))
        for expo, c in spec.q_coeffs.items():
            out += mp.mpf(c) * (-1) ** (expo[0] // 2) * mp.mpf(n) ** expo[0]
        return out
    raise ValidationError(
        "high-precision evaluation supports one-dimensional polynomial symbols only"
    )


def log_abs_kernel(spec: OperatorSpec, t: float, z: float, guard: float = 40.0) -> float:
    """log |p_t(0, z)| for a 1-d polynomial symbol, at whatever precision the
    cancellation demands.

    The Fourier sum is recomputed with cutoff and working precision driven by
    the current estimate of log p until the estimate stabilizes; double
    precision dies once |log p| approaches ~30.
    """
    _require_time(t)
    if isinstance(spec, Rescaled) and spec.freq_scale != 1.0:
        raise ValidationError("frequency-rescaled specs are not supported here")
    m_order = spec.order
    est = 0.0
    for _ in range(10):
        need = abs(est) + guard
        n_cut = int(math.ceil((need / t) ** (1.0 / m_order))) + 4
        dps = 30 + int(need / math.log(10.0))
        with mp.workdps(dps):
            zz = mp.mpf(z)
            a0 = _mp_symbol(spec, 0)
            total = mp.e ** (-mp.mpf(t) * a0)
            for n in range(1, n_cut + 1):
                an = _mp_symbol(spec, n)
                total += 2 * mp.e ** (-mp.mpf(t) * an) * mp.cos(n * zz)
            total = total / (2 * mp.pi)
            if total == 0:
                return float("-inf")
            logp = float(mp.log(abs(total)))
        if abs(logp) <= abs(est) + 5.0:
            return logp
        est = logp
    return logp


def apply_semigroup(symbol: Symbol, t: float, h: np.ndarray,
                    threshold: float = 1e-12) -> np.ndarray:
    """exp(-t L) h for a grid function h; exact identity at t = 0."""
    if t < 0:
        raise ValidationError(f"t must be >= 0, got {t}")
    h = np.asarray(h)
    d = symbol.grid.dimension
    m = h.shape[0]
    if d == 2 and h.shape != (m, m):
        raise ValidationError("grid function must be square for d = 2")
    if symbol.spec is not None:
        freqs = np.fft.fftfreq(m, d=1.0 / m)
        if d == 1:
            a_bins = symbol.at(freqs)
        else:
            f1, f2 = np.meshgrid(freqs, freqs, indexing="ij")
            a_bins = symbol.at(np.stack([f1, f2], axis=-1))
    else:
        if m > 2 * symbol.grid.cutoff + 1:
            raise ValidationError(
                "tabulated-only symbol cannot serve frequencies beyond its lattice"
            )
        freqs = np.fft.fftfreq(m, d=1.0 / m).astype(int)
        lookup = {tuple(p): v for p, v in zip(symbol.grid.points, symbol.values)}
        if d == 1:
            a_bins = np.array([lookup[(f,)] for f in freqs])
        else:
            a_bins = np.array(
                [[lookup[(f1, f2)] for f2 in freqs] for f1 in freqs]
            )
    if t > 0:
        mask = _fft_boundary_mask(m, d)
        edge = float(np.max(np.abs(np.exp(-t * np.asarray(a_bins)[mask]))))
        if edge > threshold:
            raise CutoffTooSmall(
                f"resolution M={m} leaves boundary damping {edge:.3e} above "
                f"{threshold:.1e}; raise M",
                suggested_cutoff=None,
            )
    mult = np.exp(-t * a_bins)
    if d == 1:
        out = np.fft.ifft(mult * np.fft.fft(h))
    else:
        out = np.fft.ifft2(mult * np.fft.fft2(h))
    if np.isrealobj(h):
        scale = max(1.0, float(np.max(np.abs(out.real))))
        if float(np.max(np.abs(out.imag))) <= _IMAG_TOL * scale:
            return out.real
    return out


def _fft_boundary_mask(m: int, d: int) -> np.ndarray:
    freqs = np.abs(np.fft.fftfreq(m, d=1.0 / m).astype(int))
    lim = freqs.max()
    if d == 1:
        return freqs == lim
    f1, f2 = np.meshgrid(freqs, freqs, indexing="ij")
    return np.maximum(f1, f2) == lim


# ---------------------------------------------------------------------------
# Volterra series for perturbed generators


@dataclass(frozen=True)
class DuhamelConfig:
    l_max: int = 8
    nodes: int = 16
    tol: float = 1e-10

    def __post_init__(self):
        if self.l_max < 1:
            raise ValidationError(f"l_max must be >= 1, got {self.l_max}")


@dataclass
class DuhamelResult:
    multiplier: np.ndarray      # truncated series, per lattice point
    remainder_bound: float      # sup over the lattice of the tail bound
    level_bounds: np.ndarray    # tail bound after truncating at each level
    levels: int


def _integration_matrix(nodes: np.ndarray, t: float) -> np.ndarray:
    """Map values at Gauss-Legendre nodes to values of the antiderivative
    (from 0) at the same nodes; exact for polynomials of degree < len(nodes).

    Built in the Legendre basis: analysis is the discrete transform (exact by
    quadrature), synthesis uses int P_k = (P_{k+1} - P_{k-1})/(2k+1), so the
    matrix stays well conditioned where a monomial Vandermonde would lose
    six digits at n = 16.
    """
    n = len(nodes)
    u, w = np.polynomial.legendre.leggauss(n)
    # p[k, i] = P_k(u_i), through degree n (synthesis needs one extra row)
    p = np.zeros((n + 1, n))
    p[0] = 1.0
    p[1] = u
    for k in range(1, n):
        p[k + 1] = ((2 * k + 1) * u * p[k] - k * p[k - 1]) / (k + 1)
    analysis = ((2 * np.arange(n) + 1)[:, None] / 2.0) * p[:n] * w
    synth = np.zeros((n, n))
    synth += (p[1] + p[0])[:, None] * analysis[0]          # int P_0 = u + 1
    for k in range(1, n):
        synth += ((p[k + 1] - p[k - 1]) / (2 * k + 1))[:, None] * analysis[k]
    return (t / 2.0) * synth


def duhamel_series(base: Symbol, perturbation: Symbol, t: float,
                   cfg: DuhamelConfig = DuhamelConfig()) -> DuhamelResult:
    """exp(-t(a+q)) as a truncated Volterra series around exp(-t a).

    The level-l iterated integral equals exp(-t a) (-t q)^l / l! analytically;
    numerically it is built by the nested quadrature, whose integrands are
    polynomial in the inner time, and the returned tail bound
    |exp(-t a)| (t|q|)^(L+1)/(L+1)! exp(t|q|) is checked per frequency.
    """
    _require_time(t)
    if perturbation.order >= base.order:
        raise DegreeViolation(
            f"perturbation order {perturbation.order} must be < base order {base.order}"
        )
    if perturbation.grid.size != base.grid.size or (
        perturbation.grid.cutoff != base.grid.cutoff
    ):
        raise ValidationError("base and perturbation must share one lattice")
    a = base.values
    q = perturbation.values
    n_nodes = max(cfg.nodes, cfg.l_max + 3)
    gl_x, gl_w = np.polynomial.legendre.leggauss(n_nodes)
    nodes = 0.5 * t * (gl_x + 1.0)
    weights = 0.5 * t * gl_w
    k_mat = _integration_matrix(nodes, t)

    # J_l(s) = exp(s a) I_l(s) is a degree-l polynomial: J_l = -q * int_0^s J_{l-1},
    # so both the node values and the endpoint integral are quadrature-exact.
    damp = np.exp(-t * a)
    tq = t * np.abs(q)
    tail = np.abs(damp) * np.exp(tq)
    j_nodes = np.ones((len(nodes), a.size), dtype=complex)
    partial = damp.copy()
    level_bounds = [float(np.max(tail * tq))]  # tail after keeping level 0
    for level in range(1, cfg.l_max + 1):
        j_t = -q * (weights @ j_nodes)       # J_level(t)
        j_nodes = -q * (k_mat @ j_nodes)     # J_level at the nodes
        partial = partial + damp * j_t
        level_bounds.append(
            float(np.max(tail * tq ** (level + 1) / math.factorial(level + 1)))
        )
    bounds = np.asarray(level_bounds)
    if len(bounds) >= 2 and bounds[-1] >= bounds[-2]:
        raise SeriesDiverged(
            f"remainder bound is not decreasing at l_max={cfg.l_max}; "
            f"increase l_max or shrink t*|q|"
        )
    return DuhamelResult(
        multiplier=partial,
        remainder_bound=float(bounds[-1]),
        level_bounds=bounds,
        levels=cfg.l_max,
    )


# ---------------------------------------------------------------------------
# tilted semigroups


@dataclass(frozen=True)
class TiltSpec:
    xi_tilt: float | tuple
    eps: float = 1.0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValidationError(f"eps must be > 0, got {self.eps}")


@dataclass
class TiltedOperator:
    """Multiplier operator exp(-s a(xi - i c)) with c = xi_tilt / eps."""

    symbol: Symbol
    tilt: TiltSpec
    s: float
    multiplier: np.ndarray

    def kernel(self, resolution: int = 1024) -> np.ndarray:
        vals = _ifft_field(self.symbol.grid, self.multiplier, resolution)
        # Hermitian multiplier (even real-coefficient symbols): kernel is real
        return _real_part(vals, "tilted kernel")

    def l1_norm(self, resolution: int = 1024) -> float:
        vals = self.kernel(resolution)
        d = self.symbol.grid.dimension
        return float(np.sum(np.abs(vals)) * (TWO_PI / resolution) ** d)

    def norm_on_constants(self) -> float:
        zero = np.all(self.symbol.grid.points == 0, axis=1)
        return float(np.abs(self.multiplier[zero][0]))


def tilted_semigroup(symbol: Symbol, tilt: TiltSpec, s: float) -> TiltedOperator:
    """Conjugation by exp(<x, xi_tilt>/eps), realized as a complex frequency
    shift of the symbol the caller provides (pre-scale it for small-eps runs)."""
    _require_time(s)
    if symbol.spec is None:
        raise ValidationError("tilting needs a symbol with continuous evaluation")
    d = symbol.grid.dimension
    shift = np.asarray(tilt.xi_tilt, dtype=float) / tilt.eps
    pts = symbol.grid.points.astype(float)
    if d == 1:
        z = pts[:, 0] - 1j * float(shift)
    else:
        z = pts - 1j * shift.reshape(1, 2)
    vals = symbol.at(z)
    mult = np.exp(-s * np.asarray(vals))
    return TiltedOperator(symbol=symbol, tilt=tilt, s=s, multiplier=mult)


# ---------------------------------------------------------------------------
# structural checks


def chapman_kolmogorov_check(symbol: Symbol, t: float, s: float, x=0.0,
                             resolution: int = 512) -> float:
    """max_y |p_{t+s}(x, y) - int p_t(x, z) p_s(z, y) dz| by grid quadrature."""
    _require_time(t)
    _require_time(s)
    d = symbol.grid.dimension
    pt = heat_kernel(symbol, t, x=x, resolution=resolution)
    ps = heat_kernel(symbol, s, x=0.0, resolution=resolution)
    if d == 1:
        conv = np.fft.ifft(np.fft.fft(pt.values) * np.fft.fft(ps.values)).real
        conv *= TWO_PI / resolution
    else:
        conv = np.fft.ifft2(np.fft.fft2(pt.values) * np.fft.fft2(ps.values)).real
        conv *= (TWO_PI / resolution) ** 2
    pts_combined = heat_kernel(symbol, t + s, x=x, resolution=resolution)
    return float(np.max(np.abs(pts_combined.values - conv)))


def kernel_symmetry_check(symbol: Symbol, t: float, resolution: int = 512) -> float:
    """max |p_t(x, y) - p_t(y, x)|; the kernel is a function of y - x, so this
    is the deviation of the difference kernel from evenness."""
    if not (symbol.real_valued and symbol.even):
        raise ValidationError("symmetry check applies to real even symbols")
    f = heat_kernel(symbol, t, x=0.0, resolution=resolution)
    if symbol.grid.dimension == 1:
        rev = np.roll(f.values[::-1], 1)
    else:
        rev = np.roll(np.roll(f.values[::-1, ::-1], 1, axis=0), 1, axis=1)
    return float(np.max(np.abs(f.values - rev)))


def derivative_seminorm(symbol: Symbol, frac_alpha: float, l: int, t: float,
                        resolution: int | None = None,
                        threshold: float = 1e-12) -> float:
    """L1 norm in y of the kernel of (L^alpha)^l exp(-t L) — the sharp constant
    in the sup-norm bound |P_t (L^alpha)^l f| <= C(t) ||f||_inf."""
    _require_time(t)
    if resolution is None:
        resolution = max(2048, 2 * symbol.grid.cutoff + 2)
    if l < 0:
        raise ValidationError(f"l must be >= 0, got {l}")
    a = symbol.values
    if l == 0:
        weight = np.ones_like(a)
    else:
        weight = np.zeros_like(a)
        nz = a != 0
        weight[nz] = np.exp(frac_alpha * l * np.log(a[nz].astype(complex)))
        weight[~nz] = 0.0
    coeffs = weight * np.exp(-t * a)
    shell = symbol.grid.boundary_shell()
    if float(np.max(np.abs(coeffs[shell]))) > threshold:
        raise CutoffTooSmall(
            f"weighted boundary damping exceeds {threshold:.1e} at t={t:.3g}",
            suggested_cutoff=None,
        )
    vals = _ifft_field(symbol.grid, coeffs, resolution)
    d = symbol.grid.dimension
    return float(np.sum(np.abs(vals)) * (TWO_PI / resolution) ** d)
