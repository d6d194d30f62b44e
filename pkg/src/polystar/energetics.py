"""Weighted norms, the instant/nonlinear energy hierarchy, growth-rate
fits, escape times, and Hardy-inequality property checks.

Norm conventions on a profile grid (gt = (1+alpha)/alpha):

    |f|_X(a)^2 = int w^a r^4 f^2 dr           (nodal trapezoid weights)
    |f|_Y(a)^2 = gt int w^(a+1) r^4 f_r^2 dr  (half-node fluxes between
                                               interior nodes)

With a = alpha these are the X / Y norms entering the growing-mode
normalization (1+mu0)|phi0|_X^2 + |phi0|_Y^2 = 1; the Y quadrature uses
exactly the pencil's flux coefficients, so the discrete energies and the
eigenproblem share one geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    ExponentOutOfRange,
    GridMismatch,
    UnsupportedOrder,
    WindowTooSmall,
)
from .evolution import (
    PerturbationState,
    SimConfig,
    _scheme,
    accel_time_derivative,
    cell_jacobian_minus_one,
    smallness_monitor,
)
from .polytrope import LaneEmdenProfile

_JMAX = 2


def weighted_norm_X(f: np.ndarray, profile: LaneEmdenProfile, a: float) -> float:
    """|f|_X(a); for negative exponents the degenerate endpoint node is
    excluded (truncated quadrature at the last resolved node)."""
    sch = _scheme(profile)
    f = np.asarray(f, dtype=float)
    if a >= 0:
        weight = sch.w**a * sch.r**4 * sch.quad_w
    else:
        weight = np.zeros_like(sch.w)
        pos = sch.w > 0
        weight[pos] = sch.w[pos] ** a * sch.r[pos] ** 4 * sch.quad_w[pos]
    return float(np.sqrt(np.sum(weight * f * f)))


def weighted_norm_Y(f: np.ndarray, profile: LaneEmdenProfile, a: float) -> float:
    """|f|_Y(a) over the flux cells between interior nodes."""
    sch = _scheme(profile)
    f = np.asarray(f, dtype=float)
    N = sch.N
    df = (f[2:N] - f[1 : N - 1]) / sch.h[1 : N - 1]
    gcell = sch.w_half[1 : N - 1] ** (a + 1.0) * sch.rm[1 : N - 1] ** 4
    return float(np.sqrt(sch.gt * np.sum(gcell * df * df * sch.h[1 : N - 1])))


def zero_norm(
    zeta: np.ndarray, zeta_t: np.ndarray, profile: LaneEmdenProfile
) -> float:
    """|(zeta, zeta_t)|_0: the square root of the zeroth-order energy,
    |zeta|_X^2 + |zeta_t|_X^2 + |zeta|_Y^2."""
    a = profile.alpha
    return float(
        math.sqrt(
            weighted_norm_X(zeta, profile, a) ** 2
            + weighted_norm_X(zeta_t, profile, a) ** 2
            + weighted_norm_Y(zeta, profile, a) ** 2
        )
    )


def _derivative_chain(values: np.ndarray, points: np.ndarray, k: int):
    """k successive half-node differencings; returns (values, points)."""
    v, p = values, points
    for _ in range(k):
        v = np.diff(v) / np.diff(p)
        p = 0.5 * (p[:-1] + p[1:])
    return v, p


def _trapezoid_weights(points: np.ndarray) -> np.ndarray:
    w = np.empty_like(points)
    w[0] = (points[1] - points[0]) / 2.0
    w[-1] = (points[-1] - points[-2]) / 2.0
    w[1:-1] = (points[2:] - points[:-2]) / 2.0
    return w


def _staggered_X(
    f: np.ndarray, profile: LaneEmdenProfile, k: int, exponent: float
) -> float:
    """int w^exponent r^4 (d_r^k f)^2 dr on the k-times staggered grid."""
    if k == 0:
        return weighted_norm_X(f, profile, exponent) ** 2
    v, p = _derivative_chain(f, profile.grid, k)
    wv, _ = profile.enthalpy(np.clip(p, 0.0, profile.R))
    wv = np.clip(wv, 0.0, None)
    return float(np.sum(wv**exponent * p**4 * _trapezoid_weights(p) * v * v))


@dataclass(frozen=True)
class EnergyReport:
    """Instant energies at one time.

    E0 = |zeta_t|_X^2 + |zeta|_Y^2 + |zeta|_X^2; Ej[j] for j >= 1 are the
    temporal energies |d_t^j zeta_t|_X^2 + |d_t^j zeta|_Y^2; Ejk[j][k]
    carry one extra power of w per spatial derivative.  frakE holds the
    nonlinear energies built on varphi = (1+zeta)^2 zeta_t.
    """

    E0: float
    Ej: list
    Ejk: list
    frakE: list
    xnorm: float
    ynorm: float
    theta_measure: dict


def _time_ladder(state: PerturbationState, profile: LaneEmdenProfile, jmax: int):
    """[zeta, zeta_t, zeta_tt, zeta_ttt][: jmax + 2] by analytic chain rule."""
    fields = [state.zeta, state.zeta_t]
    if jmax >= 1:
        ztt, zttt = accel_time_derivative(state, profile)
        fields.append(ztt)
        if jmax >= 2:
            fields.append(zttt)
    return fields


def instant_energy(
    state: PerturbationState, profile: LaneEmdenProfile, jmax: int = 2
) -> EnergyReport:
    """Temporal and mixed instant energies up to order jmax (<= 2).

    Higher temporal orders would need either deeper analytic chain rules
    or stored trajectories; they are outside the implemented ceiling.
    """
    if jmax > _JMAX:
        raise UnsupportedOrder(f"jmax={jmax} above implemented ceiling {_JMAX}")
    a = profile.alpha
    gt = (1.0 + a) / a
    fields = _time_ladder(state, profile, jmax)

    xnorm = weighted_norm_X(state.zeta, profile, a)
    ynorm = weighted_norm_Y(state.zeta, profile, a)
    E0 = (
        weighted_norm_X(state.zeta_t, profile, a) ** 2
        + ynorm**2
        + xnorm**2
    )
    Ej = []
    Ejk = []
    for j in range(1, jmax + 1):
        Ej.append(
            weighted_norm_X(fields[j + 1], profile, a) ** 2
            + weighted_norm_Y(fields[j], profile, a) ** 2
        )
        # k = 0 is E^j itself, shared code path so the identity is exact
        row = [Ej[-1]]
        for k in range(1, j + 1):
            xpart = _staggered_X(fields[j - k + 1], profile, k, a + k)
            ypart = gt * _staggered_X(fields[j - k], profile, k + 1, 1.0 + a + k)
            row.append(xpart + ypart)
        Ejk.append(row)

    frakE = nonlinear_energy(state, profile, min(jmax, _JMAX)) if jmax >= 1 else []

    theta = smallness_monitor(state, profile, SimConfig())
    return EnergyReport(
        E0=float(E0),
        Ej=[float(e) for e in Ej],
        Ejk=[[float(x) for x in row] for row in Ejk],
        frakE=[float(e) for e in frakE],
        xnorm=float(xnorm),
        ynorm=float(ynorm),
        theta_measure={
            "sup_zeta": theta.sup_zeta,
            "sup_zeta_r": theta.sup_zeta_r,
            "sup_zeta_t": theta.sup_zeta_t,
            "sup_w12_zeta_tt": theta.sup_w12_zeta_tt,
        },
    )


def _conservative_field_derivative(g: np.ndarray, profile: LaneEmdenProfile):
    """(r^3 g)_r / r^2 at half nodes in the conservative form 3 d(r^3 g)/d(r^3)."""
    sch = _scheme(profile)
    return 3.0 * np.diff(sch.r3 * g) / sch.d3


def nonlinear_energy(
    state: PerturbationState, profile: LaneEmdenProfile, imax: int = 1
) -> list:
    """Nonlinear energies frakE^i for 1 <= i <= imax (<= 2), built on the
    momentum variable varphi = (1+zeta)^2 zeta_t:

        frakE^i = int w^alpha r^4 |d_t^(i-1) varphi_t|^2 / (1+zeta)^4 dr
                + gt int w^(1+alpha) J^(-(1+2 alpha)/alpha)
                      (1/r^2) |(r^3 d_t^(i-1) varphi)_r|^2 dr.

    The 1/r^2 factor is absorbed by the conservative derivative, which is
    regular at the origin by parity.
    """
    if imax > _JMAX:
        raise UnsupportedOrder(f"imax={imax} above implemented ceiling {_JMAX}")
    sch = _scheme(profile)
    a = sch.alpha
    z, zt = state.zeta, state.zeta_t
    jm1 = cell_jacobian_minus_one(z, sch)
    jfac = np.exp(-(1.0 + 2.0 * a) / a * np.log1p(jm1))

    fields = _time_ladder(state, profile, min(imax, _JMAX))
    ztt = fields[2] if imax >= 1 else None
    zttt = fields[3] if imax >= 2 else None

    varphi = (1.0 + z) ** 2 * zt
    varphi_t = (1.0 + z) ** 2 * ztt + 2.0 * (1.0 + z) * zt * zt
    levels = [(varphi_t, varphi)]
    if imax >= 2:
        varphi_tt = (
            (1.0 + z) ** 2 * zttt + 4.0 * (1.0 + z) * zt * ztt + 2.0 * zt**3
        )
        levels.append((varphi_tt, varphi_t))

    out = []
    for dt_phi, phi_i in levels[:imax]:
        t1 = float(np.sum(sch.xweight * dt_phi * dt_phi / (1.0 + z) ** 4))
        dc = _conservative_field_derivative(phi_i, profile)
        t2 = float(sch.gt * np.sum(sch.w_half_1a * jfac * dc * dc * sch.d3 / 3.0))
        out.append(t1 + t2)
    return out


@dataclass(frozen=True)
class EnergyGapReport:
    """Decomposition of frakE^1 - E^1.

    The small-amplitude limit of the gap is the positive quadratic cross
    term gt * [ |zeta_t|_Yhat^2 - |zeta_t|_Y^2 ], equal (by parts) to
    3 gt int Phi w^alpha r^4 zeta_t^2 dr: it is second order in amplitude,
    the same order as the energies themselves.  Only the reduced gap,
    with that cross term removed, vanishes linearly with amplitude.
    """

    frak1: float
    E1: float
    E0: float
    cross_term: float
    cross_term_ibp: float
    gap_raw: float
    gap_reduced: float


def energy_gap_report(
    state: PerturbationState, profile: LaneEmdenProfile
) -> EnergyGapReport:
    sch = _scheme(profile)
    rep = instant_energy(state, profile, jmax=1)
    frak1 = rep.frakE[0]
    E1 = rep.Ej[0]
    zt = state.zeta_t
    dc = _conservative_field_derivative(zt, profile)
    yhat2 = float(sch.gt * np.sum(sch.w_half_1a * dc * dc * sch.d3 / 3.0))
    y2 = weighted_norm_Y(zt, profile, profile.alpha) ** 2
    cross = yhat2 - y2
    cross_ibp = float(3.0 * sch.gt * np.sum(sch.xweight * sch.phi * zt * zt))
    denom = rep.E0 + E1
    return EnergyGapReport(
        frak1=frak1,
        E1=E1,
        E0=rep.E0,
        cross_term=cross,
        cross_term_ibp=cross_ibp,
        gap_raw=abs(frak1 - E1) / denom,
        gap_reduced=abs(frak1 - E1 - cross) / denom,
    )


@dataclass(frozen=True)
class GrowthFit:
    """Least-squares growth rate of ln sqrt(E0) and escape diagnostics.

    escape_time is the first crossing of theta0 by sqrt(E0);
    escape_time_double the crossing of 2*theta0, the quantity the linear
    prediction (1/rate) ln(2 theta0 / delta) targets.
    """

    rate: float
    window: tuple
    r_squared: float
    escape_time: float | None
    escape_time_double: float | None
    predicted_escape: float | None


def _first_crossing(t: np.ndarray, amp: np.ndarray, level: float) -> float | None:
    above = amp >= level
    if not above.any():
        return None
    i = int(np.argmax(above))
    if i == 0:
        return float(t[0])
    # interpolate in ln amp, exact for exponential growth
    la, lb = math.log(amp[i - 1]), math.log(amp[i])
    frac = (math.log(level) - la) / (lb - la)
    return float(t[i - 1] + frac * (t[i] - t[i - 1]))


def growth_fit(record, delta: float, theta0: float) -> GrowthFit:
    """Fit the growth rate on the window amplitude in [3 delta, theta0/3].

    record must expose times, E0 arrays and (optionally) mu0 of the
    underlying linear mode for the escape prediction.
    """
    t = np.asarray(record.times, dtype=float)
    amp = np.sqrt(np.asarray(record.E0, dtype=float))
    mask = (amp > 3.0 * delta) & (amp < theta0 / 3.0)
    if mask.sum() < 32:
        raise WindowTooSmall(
            f"only {int(mask.sum())} samples in the fit window [3 delta, theta0/3]"
        )
    tw, yw = t[mask], np.log(amp[mask])
    slope, intercept = np.polyfit(tw, yw, 1)
    resid = yw - (slope * tw + intercept)
    ss_tot = float(np.sum((yw - yw.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0

    mu0 = getattr(record, "mu0", None)
    predicted = (
        math.log(2.0 * theta0 / delta) / math.sqrt(mu0)
        if mu0 is not None and mu0 > 0
        else None
    )
    return GrowthFit(
        rate=float(slope),
        window=(float(tw[0]), float(tw[-1])),
        r_squared=float(r2),
        escape_time=_first_crossing(t, amp, theta0),
        escape_time_double=_first_crossing(t, amp, 2.0 * theta0),
        predicted_escape=predicted,
    )


def duhamel_remainder(nonlinear, linear, delta: float) -> dict:
    """|zeta_nl - zeta_lin|_0 against the squared linear envelope.

    Both records must come from identical initial data, grid and dt.
    Returns arrays t, remainder and ratio = remainder/(delta e^(rate t))^2;
    the quadratic envelope makes the ratio bounded and delta-independent.
    """
    if nonlinear.grid_signature != linear.grid_signature:
        raise GridMismatch("runs use different grids")
    if abs(nonlinear.dt - linear.dt) > 1e-15 * nonlinear.dt:
        raise GridMismatch("runs use different time steps")
    profile = nonlinear.profile
    rate = math.sqrt(nonlinear.mu0)
    n = min(len(nonlinear.snapshots), len(linear.snapshots))
    ts = np.asarray(nonlinear.snapshot_times[:n])
    rem = np.empty(n)
    for i in range(n):
        zn, vn = nonlinear.snapshots[i]
        zl, vl = linear.snapshots[i]
        rem[i] = zero_norm(zn - zl, vn - vl, profile)
    envelope = (delta * np.exp(rate * ts)) ** 2
    return {"t": ts, "remainder": rem, "ratio": rem / envelope, "rate": rate}


# ---------------------------------------------------------------------------
# Hardy-inequality property checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HardyReport:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        if self.lhs == 0.0:
            return 0.0
        return self.lhs / self.rhs


def _spline_integral(x: np.ndarray, y: np.ndarray, a: float, b: float) -> float:
    return float(CubicSpline(x, y).integrate(a, b))


def hardy_check_origin(
    v: np.ndarray, profile: LaneEmdenProfile, v_r: np.ndarray | None = None
) -> HardyReport:
    """Origin-localized inequality with cutoff c = R/4:

        int_0^c r^2 v^2  <=  C ( int_0^2c r^4 v_r^2 + int_c^2c r^4 v^2 ).

    Reports both sides; v_r defaults to a spline derivative of v.
    """
    r = profile.grid
    v = np.asarray(v, dtype=float)
    if not np.any(v != 0.0):
        return HardyReport(0.0, 0.0)
    if v_r is None:
        v_r = CubicSpline(r, v)(r, 1)
    c = profile.R / 4.0
    lhs = _spline_integral(r, r**2 * v * v, 0.0, c)
    rhs = _spline_integral(r, r**4 * v_r * v_r, 0.0, 2 * c) + _spline_integral(
        r, r**4 * v * v, c, 2 * c
    )
    return HardyReport(lhs, rhs)


def _smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    out = np.zeros_like(s)
    inner = (s > 0) & (s < 1)
    si = s[inner]
    a = np.exp(-1.0 / si)
    b = np.exp(-1.0 / (1.0 - si))
    out[inner] = a / (a + b)
    out[s >= 1] = 1.0
    return out


def hardy_check_boundary(
    v: np.ndarray,
    profile: LaneEmdenProfile,
    a: float,
    v_r: np.ndarray | None = None,
) -> HardyReport:
    """Boundary-localized inequality for weight exponent a > 1:

        int w^(a-2) (psi v)^2  <=  C ( int w^a (psi v_r)^2 + int w^a (psi v)^2 )

    with the cutoff psi supported in [R-2c, R], c = R/8.  Quadrature is
    truncated at the last strictly positive enthalpy node, the same
    resolution cut for every mesh built from one grading."""
    if a <= 1.0:
        raise ExponentOutOfRange("boundary variant requires exponent a > 1")
    r = profile.grid
    v = np.asarray(v, dtype=float)
    if not np.any(v != 0.0):
        return HardyReport(0.0, 0.0)
    if v_r is None:
        v_r = CubicSpline(r, v)(r, 1)
    R = profile.R
    c = R / 8.0
    psi = _smooth_step((r - (R - 2 * c)) / c)
    w = np.clip(profile.w, 0.0, None)
    pos = w > 0.0
    lo, hi = R - 2 * c, r[pos][-1]
    lhs = _spline_integral(r[pos], w[pos] ** (a - 2.0) * (psi[pos] * v[pos]) ** 2, lo, hi)
    rhs = _spline_integral(
        r[pos], w[pos] ** a * (psi[pos] * v_r[pos]) ** 2, lo, hi
    ) + _spline_integral(r[pos], w[pos] ** a * (psi[pos] * v[pos]) ** 2, lo, hi)
    return HardyReport(lhs, rhs)


def hardy_trace_check(g, k: float, g_prime=None, n: int = 4097) -> HardyReport:
    """Unit-interval variant for k < 1, where g has a trace at 0:

        int_0^1 s^(k-2) (g - g(0))^2 ds  <=  C int_0^1 s^k g'^2 ds.

    g and g_prime may be callables or samples on a uniform grid; samples
    are promoted to splines.  Adaptive quadrature never evaluates exactly
    at s = 0, where the integrands have only integrable behavior.
    """
    from scipy.integrate import quad

    if k >= 1.0:
        raise ExponentOutOfRange("trace variant requires exponent k < 1")
    if callable(g):
        gf = g
    else:
        gf = CubicSpline(np.linspace(0.0, 1.0, len(g)), np.asarray(g, dtype=float))
    if g_prime is None:
        gpf = gf.derivative() if isinstance(gf, CubicSpline) else None
        if gpf is None:
            s = np.linspace(0.0, 1.0, n)
            gpf = CubicSpline(s, gf(s)).derivative()
    elif callable(g_prime):
        gpf = g_prime
    else:
        gpf = CubicSpline(
            np.linspace(0.0, 1.0, len(g_prime)), np.asarray(g_prime, dtype=float)
        )
    g0 = float(gf(0.0))
    lhs, _ = quad(lambda s: s ** (k - 2.0) * (float(gf(s)) - g0) ** 2, 0.0, 1.0, limit=200)
    rhs, _ = quad(lambda s: s**k * float(gpf(s)) ** 2, 0.0, 1.0, limit=200)
    if abs(lhs) < 1e-300:
        return HardyReport(0.0, 0.0)
    return HardyReport(float(lhs), float(rhs))
