"""Upper-bound verification for small-time kernel logarithms: pointwise
Varadhan curves, set-level estimates, exit-probability fits against the
Chernoff extremization, tilted-norm bounds, and localized derivative bounds.

Every pass rule here is one-sided ("<= with slack"): the semigroups under
study do not preserve positivity, so only upper bounds are available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np
from scipy import optimize

from .errors import FitUnstable, ValidationError
from .grids import TWO_PI, FrequencyGrid, wrap_angle
from .ldp import Hamiltonian, hamiltonian_for, legendre, maslov_scaled_symbol
from .malliavin import exponent_fit
from .semigroup import (
    TiltSpec,
    _mp_symbol,
    heat_kernel,
    kernel_values,
    log_abs_kernel,
    tilted_semigroup,
)
from .spectral import (
    FractionalPower,
    Perturbed,
    PurePower,
    QuadraticForm,
    Rescaled,
    Symbol,
    auto_cutoff,
    build_symbol,
    symbol_value,
)

#: slack(t) = C_SLACK * t^{1/(2k-1)} * log(1/t); calibrated once against the
#: exact second-order wrapped Gaussian and frozen.
C_SLACK = 0.5

_MP_LOG_THRESHOLD = 25.0   # switch to multiprecision past this |log p| estimate


def _check_geometric(t_list) -> np.ndarray:
    ts = np.asarray(t_list, dtype=float)
    if ts.ndim != 1 or ts.size < 3:
        raise ValidationError("need at least 3 times")
    if np.any(ts <= 0):
        raise ValidationError("times must be positive")
    if np.any(np.diff(ts) >= 0):
        raise ValidationError("times must be strictly decreasing")
    ratios = ts[1:] / ts[:-1]
    if float(np.max(np.abs(ratios - ratios[0]))) > 1e-9:
        raise ValidationError("times must form a geometric sequence")
    return ts


def _is_mp_polynomial(spec) -> bool:
    if isinstance(spec, Rescaled):
        return spec.freq_scale == 1.0 and _is_mp_polynomial(spec.base)
    if isinstance(spec, PurePower):
        return True
    if isinstance(spec, QuadraticForm):
        return spec.d == 1
    if isinstance(spec, FractionalPower):
        return _is_mp_polynomial(spec.base)
    if isinstance(spec, Perturbed):
        return all(e[0] % 2 == 0 for e in spec.q_coeffs) and _is_mp_polynomial(spec.base)
    return False


def straight_rate(h: Hamiltonian, x: float, y: float, winding_max: int = 2) -> float:
    """l(x, y) by the straight-line oracle, minimized over winding classes.

    Exact for x-independent Lagrangians (Jensen): the infimum over each class
    is L(lifted displacement).
    """
    best = math.inf
    for w in range(-winding_max, winding_max + 1):
        best = min(best, legendre(h, y + TWO_PI * w - x))
    return best


def _extrapolate(ts: np.ndarray, vals: np.ndarray, power: float) -> float:
    """Limit of v(t) = v_inf + A * t^power * log(1/t) from the last 3 points,
    eliminating the leading correction by least squares."""
    tt = ts[-3:]
    vv = vals[-3:]
    g = tt**power * np.log(1.0 / tt)
    design = np.column_stack([np.ones_like(g), g])
    sol, *_ = np.linalg.lstsq(design, vv, rcond=None)
    return float(sol[0])


@dataclass
class ScalingCurve:
    """Normalized log-kernel samples v(t) = t^{1/(2k-1)} log|p_t(x,y)| with
    the slack-adjusted target and the extrapolated limit."""

    k: int
    x: float
    y: float
    t: np.ndarray
    values: np.ndarray
    target: float                 # -l(x, y)
    slack: np.ndarray
    extrapolated: float
    pointwise_pass: np.ndarray
    extrapolation_pass: bool
    passed: bool

    @property
    def power(self) -> float:
        return 1.0 / (2 * self.k - 1)

    def rows(self):
        for i in range(self.t.size):
            yield (
                float(self.t[i]), float(self.values[i]), self.target,
                float(self.slack[i]), bool(self.pointwise_pass[i]),
            )


def varadhan_curve(symbol: Symbol, k: int, x: float, y: float, t_list,
                   l_value: float | None = None,
                   c_slack: float = C_SLACK) -> ScalingCurve:
    """Pointwise small-time curve against the rate-function target.

    Passes iff v(t) <= -l + slack(t) at every sample and the extrapolated
    limit is <= -l + 2%|l|.  Evaluation switches to multiprecision once the
    expected log-magnitude exceeds the double-precision cancellation floor.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    ts = _check_geometric(t_list)
    z = float(wrap_angle(y - x))
    if abs(z) < 1e-12:
        raise ValidationError("endpoints must differ; the diagonal has l = 0")
    power = 1.0 / (2 * k - 1)
    if l_value is None:
        l_value = straight_rate(hamiltonian_for(_require_spec(symbol)), x, y)
    vals = np.empty(ts.size)
    for i, t in enumerate(ts):
        est = l_value / t**power
        if est > _MP_LOG_THRESHOLD and _is_mp_polynomial(symbol.spec):
            vals[i] = t**power * log_abs_kernel(symbol.spec, t, z)
        else:
            p = kernel_values(symbol, t, z)
            if p == 0.0:
                vals[i] = -math.inf
            else:
                vals[i] = t**power * math.log(abs(p))
    slack = c_slack * ts**power * np.log(1.0 / ts)
    pointwise = vals <= -l_value + slack + 1e-12
    extrap = _extrapolate(ts, vals, power)
    extrap_ok = extrap <= -l_value + 0.02 * abs(l_value) + 1e-12
    return ScalingCurve(
        k=k, x=x, y=y, t=ts, values=vals, target=-l_value, slack=slack,
        extrapolated=extrap, pointwise_pass=pointwise,
        extrapolation_pass=bool(extrap_ok),
        passed=bool(np.all(pointwise)) and bool(extrap_ok),
    )


def _require_spec(symbol: Symbol):
    if symbol.spec is None:
        raise ValidationError("this check needs a symbol with continuous evaluation")
    return symbol.spec


# ---------------------------------------------------------------------------
# set-level estimate


def _mp_interval_mass(spec, t: float, lo: float, hi: float, l_floor: float,
                      power: float, guard: float = 40.0) -> float:
    """log of integral_lo^hi p_t(0, y) dy for a positive-kernel polynomial
    symbol, via the exact Fourier antiderivative at adaptive precision."""
    est = l_floor / t**power
    for _ in range(10):
        need = abs(est) + guard
        n_cut = int(math.ceil((need / t) ** (1.0 / spec.order))) + 4
        dps = 30 + int(need / math.log(10.0))
        with mp.workdps(dps):
            a, b = mp.mpf(lo), mp.mpf(hi)
            total = mp.e ** (-mp.mpf(t) * _mp_symbol(spec, 0)) * (b - a)
            for n in range(1, n_cut + 1):
                an = _mp_symbol(spec, n)
                damp = mp.e ** (-mp.mpf(t) * an)
                # int_a^b 2 cos(n y) dy = 2 (sin(n b) - sin(n a)) / n
                total += 2 * damp * (mp.sin(n * b) - mp.sin(n * a)) / n
            total = total / (2 * mp.pi)
            if total <= 0:
                return -math.inf
            logm = float(mp.log(total))
        if abs(logm) <= abs(est) + 5.0:
            return logm
        est = logm
    return logm


def wf_set_estimate(symbol: Symbol, k: int, x: float, interval, t_list,
                    c_slack: float = C_SLACK, resolution: int = 4096,
                    target_points: int = 33) -> ScalingCurve:
    """u(t) = t^{1/(2k-1)} log of the absolute mass |P_t|[1_O](x) for an open
    arc O, against -inf_O l."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValidationError("interval must be nonempty")
    if hi - lo >= TWO_PI:
        raise ValidationError("interval must be a proper arc")
    ts = _check_geometric(t_list)
    power = 1.0 / (2 * k - 1)
    h = hamiltonian_for(_require_spec(symbol))
    endpoints = np.linspace(lo, hi, target_points)
    l_values = np.array([straight_rate(h, x, float(yy)) for yy in endpoints])
    l_inf = float(np.min(l_values))
    inside = abs(wrap_angle(x - lo)) < 1e-12 or abs(wrap_angle(x - hi)) < 1e-12 or (
        wrap_angle(x - lo) > 0 and wrap_angle(x - hi) < 0
    )
    vals = np.empty(ts.size)
    positive_closed_form = k == 1 and _is_mp_polynomial(symbol.spec)
    for i, t in enumerate(ts):
        est = l_inf / t**power
        if positive_closed_form and est > _MP_LOG_THRESHOLD:
            vals[i] = t**power * _mp_interval_mass(
                symbol.spec, t, lo - x, hi - x, l_inf, power
            )
            continue
        fld = heat_kernel(symbol, t, x=x, resolution=resolution)
        ys = fld.points
        mask = (ys > lo) & (ys < hi)
        if lo < 0 or hi > TWO_PI:  # arc wraps through 0
            yw = np.concatenate([ys - TWO_PI, ys, ys + TWO_PI])
            mask = ((yw > lo) & (yw < hi)).reshape(3, -1).any(axis=0)
        mass = float(np.sum(np.abs(fld.values[mask]))) * (TWO_PI / resolution)
        vals[i] = t**power * math.log(mass) if mass > 0 else -math.inf
    slack = c_slack * ts**power * np.log(1.0 / ts)
    if inside:
        # x interior to O: the mass tends to 1 and the target is 0
        l_inf = 0.0
    pointwise = vals <= -l_inf + slack + 1e-12
    extrap = _extrapolate(ts, vals, power)
    # absolute floor covers the interior case, where the target vanishes and
    # the relative band collapses to a point
    extrap_ok = extrap <= -l_inf + max(0.02 * abs(l_inf), 1e-3)
    return ScalingCurve(
        k=k, x=x, y=0.5 * (lo + hi), t=ts, values=vals, target=-l_inf,
        slack=slack, extrapolated=extrap, pointwise_pass=pointwise,
        extrapolation_pass=bool(extrap_ok),
        passed=bool(np.all(pointwise)) and bool(extrap_ok),
    )


# ---------------------------------------------------------------------------
# exit bound and Chernoff extremization


def chernoff_extremize(h: Hamiltonian, delta: float, s: float,
                       eps: float = 1.0):
    """Minimize -delta xi + s H(xi) over xi >= 0; returns (xi_star,
    exponent / eps).  For H = xi^{2k} the minimizer is (delta/(2ks))^{1/(2k-1)}."""
    if delta < 0:
        raise ValidationError("delta must be >= 0")
    if s <= 0 or eps <= 0:
        raise ValidationError("s and eps must be > 0")
    if delta == 0.0:
        return 0.0, 0.0
    f = lambda xi: -delta * xi + s * float(h(np.array(xi)))
    hi = 1.0
    prev = f(0.0)
    while f(hi) < prev:
        prev = f(hi)
        hi *= 2.0
        if hi > 1e12:
            raise ValidationError("Chernoff objective does not turn over")
    res = optimize.minimize_scalar(
        f, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-12}
    )
    return float(res.x), float(res.fun) / eps


@dataclass
class ExitBoundFit:
    delta: float
    s: float
    eps: np.ndarray
    log_mass: np.ndarray
    fit_c: float
    intercept: float
    r_squared: float
    chernoff_xi: float
    chernoff_c: float

    @property
    def ratio(self) -> float:
        return self.fit_c / self.chernoff_c if self.chernoff_c else math.inf

    def rows(self):
        for i in range(self.eps.size):
            yield float(self.eps[i]), float(self.log_mass[i]), self.fit_c


def exit_bound_check(symbol: Symbol, k: int, delta: float, s: float,
                     eps_list, resolution: int = 2048) -> ExitBoundFit:
    """Mass left outside the delta-ball by the eps-scaled semigroup, fitted as
    log mass ~ intercept - C / eps and compared with the Chernoff constant."""
    if not 0 < delta < math.pi:
        raise ValidationError("delta must lie in (0, pi)")
    if s <= 0:
        raise ValidationError("s must be > 0")
    eps = np.asarray(eps_list, dtype=float)
    if eps.ndim != 1 or eps.size < 3:
        raise ValidationError("need at least 3 epsilon values")
    if np.any(np.diff(eps) >= 0) or np.any(eps <= 0):
        raise ValidationError("epsilon values must be positive and decreasing")
    base_spec = _require_spec(symbol)
    log_mass = np.empty(eps.size)
    for i, e in enumerate(eps):
        scaled = maslov_scaled_symbol(symbol, k, float(e))
        need = auto_cutoff(scaled.spec, s)
        if need > scaled.grid.cutoff:
            scaled = build_symbol(scaled.spec, FrequencyGrid(1, need))
        res = max(resolution, 2 * scaled.grid.cutoff + 2)
        fld = heat_kernel(scaled, s, resolution=res)
        dist = np.abs(wrap_angle(fld.points))
        mask = dist > delta
        mass = float(np.sum(np.abs(fld.values[mask]))) * (TWO_PI / res)
        if mass <= 0:
            raise FitUnstable("exit mass underflowed; shrink the epsilon range")
        log_mass[i] = math.log(mass)
    design = 1.0 / eps
    coef = np.polyfit(design, log_mass, 1)
    fitted = np.polyval(coef, design)
    ss_res = float(np.sum((log_mass - fitted) ** 2))
    ss_tot = float(np.sum((log_mass - np.mean(log_mass)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if r2 < 0.99:
        raise FitUnstable(f"exit-mass fit has R^2 = {r2:.4f} < 0.99")
    slope = float(coef[0])
    if slope >= 0:
        raise FitUnstable("exit mass does not decay with 1/eps")
    h = hamiltonian_for(base_spec)
    xi_star, exponent = chernoff_extremize(h, delta, s)
    return ExitBoundFit(
        delta=delta, s=s, eps=eps, log_mass=log_mass, fit_c=-slope,
        intercept=float(coef[1]), r_squared=r2, chernoff_xi=xi_star,
        chernoff_c=-exponent,
    )


# ---------------------------------------------------------------------------
# tilted bound


@dataclass
class TiltedBound:
    xi_tilt: float
    s: float
    eps: float
    measured: float
    predicted: float
    bound: float
    passed: bool


def tilted_bound_check(symbol: Symbol, k: int, xi_tilt: float, s: float,
                       eps: float = 1.0, resolution: int = 2048) -> TiltedBound:
    """L1 norm of the eps-scaled tilted kernel against exp(s H(xi_tilt)/eps),
    with 5% headroom on the exponent."""
    if s <= 0 or eps <= 0:
        raise ValidationError("s and eps must be > 0")
    base_spec = _require_spec(symbol)
    scaled = maslov_scaled_symbol(symbol, k, eps)
    # enlarge the lattice until the tilted multiplier is damped at the edge
    cutoff = max(scaled.grid.cutoff, auto_cutoff(scaled.spec, s))
    for _ in range(20):
        edge = min(
            float(np.real(symbol_value(scaled.spec, np.array(sgn * cutoff, dtype=float)
                                       - 1j * xi_tilt / eps)))
            for sgn in (1.0, -1.0)
        )
        if s * edge > 40.0 + s * abs(
            float(np.real(symbol_value(scaled.spec, np.array(-1j * xi_tilt / eps))))
        ):
            break
        cutoff *= 2
    if cutoff != scaled.grid.cutoff:
        scaled = build_symbol(scaled.spec, FrequencyGrid(1, cutoff))
    op = tilted_semigroup(scaled, TiltSpec(xi_tilt=xi_tilt, eps=eps), s)
    measured = op.l1_norm(resolution=max(resolution, 2 * cutoff + 2))
    h = hamiltonian_for(base_spec)
    predicted = math.exp(s * float(h(np.array(xi_tilt))) / eps)
    bound = math.exp(1.05 * s * float(h(np.array(xi_tilt))) / eps)
    return TiltedBound(
        xi_tilt=xi_tilt, s=s, eps=eps, measured=measured,
        predicted=predicted, bound=bound, passed=measured <= bound,
    )


# ---------------------------------------------------------------------------
# localized estimate with frequency-side derivatives


def plateau_bump(center: float, r_inner: float, r_outer: float):
    """Smooth cutoff equal to 1 within r_inner of center and 0 beyond
    r_outer, built from the standard exponential transition."""
    if not 0 < r_inner < r_outer < math.pi:
        raise ValidationError("need 0 < r_inner < r_outer < pi")

    def sigma(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    def chi(y):
        dist = np.abs(wrap_angle(np.asarray(y, dtype=float) - center))
        u = (r_outer - dist) / (r_outer - r_inner)
        num = sigma(np.asarray(u))
        den = num + sigma(np.asarray(1.0 - u))
        return num / den

    return chi


@dataclass
class LocalizedCurve:
    k: int
    alpha_order: int
    r_alpha: float
    t: np.ndarray
    values: np.ndarray
    target: float                 # -l_near + delta
    slack: np.ndarray
    extrapolated: float
    passed: bool


def localized_estimate(symbol: Symbol, k: int, x: float, chi, t_list,
                       alpha_order: int = 0, c_slack: float = C_SLACK,
                       resolution: int = 4096) -> LocalizedCurve:
    """t^{1/(2k-1)} log |P_t[D^alpha chi](x)| against -l(x, supp chi) + delta.

    The derivative is applied on the frequency side; its polynomial-in-1/t
    cost enters the slack through the measured decay exponent r_alpha, and
    delta = 0.05 * l_near absorbs the support localization.
    """
    if alpha_order < 0 or alpha_order > 2:
        raise ValidationError("derivative order must be 0, 1, or 2")
    if symbol.grid.dimension != 1:
        raise ValidationError("localized estimates are one-dimensional")
    ts = _check_geometric(t_list)
    power = 1.0 / (2 * k - 1)
    ys = np.arange(resolution) * (TWO_PI / resolution)
    chi_vals = np.asarray(chi(ys), dtype=float)
    if np.all(chi_vals == 0.0):
        return LocalizedCurve(
            k=k, alpha_order=alpha_order, r_alpha=0.0, t=ts,
            values=np.full(ts.size, -math.inf), target=-math.inf,
            slack=np.zeros(ts.size), extrapolated=-math.inf, passed=True,
        )
    h = hamiltonian_for(_require_spec(symbol))
    support = ys[chi_vals > 1e-300]
    l_near = min(straight_rate(h, x, float(yy)) for yy in support)
    if l_near <= 0:
        raise ValidationError("bump support must exclude the base point")
    delta = 0.05 * l_near
    if alpha_order == 0:
        r_alpha = 0.0
    else:
        # the power law needs many active modes: fit deep in the small-t
        # regime on a lattice sized for the weighted multiplier
        t_fit = np.geomspace(1e-3, 1e-4, 7)
        fit_cut = max(symbol.grid.cutoff, 2 * auto_cutoff(symbol.spec, t_fit[-1]))
        fit_sym = (symbol if fit_cut == symbol.grid.cutoff
                   else build_symbol(symbol.spec, FrequencyGrid(1, fit_cut)))
        r_alpha = exponent_fit(
            fit_sym, 1.0 / (2 * k), alpha_order, t_fit, resolution=2 * fit_cut + 2
        ).r
    # frequency-side test function (i xi)^alpha chi^(xi)
    chi_hat = np.fft.fft(chi_vals) / resolution
    n = symbol.grid.cutoff
    if 2 * n + 1 > resolution:
        raise ValidationError("bump resolution must cover the symbol lattice")
    xi = symbol.grid.points[:, 0].astype(float)
    coeffs = chi_hat[np.mod(symbol.grid.points[:, 0], resolution)]
    weights = (1j * xi) ** alpha_order * coeffs
    vals = np.empty(ts.size)
    damp_phase = np.exp(1j * xi * x)
    for i, t in enumerate(ts):
        m = np.abs(np.sum(np.exp(-t * symbol.values) * weights * damp_phase))
        vals[i] = t**power * math.log(m) if m > 0 else -math.inf
    slack = (r_alpha + c_slack) * ts**power * np.log(1.0 / ts)
    pointwise = vals <= -l_near + delta + slack + 1e-12
    extrap = _extrapolate(ts, vals, power)
    return LocalizedCurve(
        k=k, alpha_order=alpha_order, r_alpha=r_alpha, t=ts, values=vals,
        target=-l_near + delta, slack=slack, extrapolated=extrap,
        passed=bool(np.all(pointwise)),
    )
