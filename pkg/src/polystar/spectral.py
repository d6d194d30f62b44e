"""Self-adjoint pencil for the linearized radial dynamics and its
largest eigenpair.

The linearization of the Lagrangian perturbation equation around the
equilibrium reads w^alpha r^4 zeta_tt = L zeta with

    L phi = gt [w^(1+alpha) r^4 phi']' - (4 - 3 gt) [w^(1+alpha)]' r^3 phi,
    gt = (1+alpha)/alpha.

L is discretized in flux form on the profile grid: off-diagonal entries
come from half-node flux coefficients gt * (w^(1+alpha) r^4)_{j+1/2} / h,
the zeroth-order term enters the diagonal through the equilibrium
identity [w^(1+alpha)]' = -r w^alpha Phi(r).  The weights w^(1+alpha) r^4
vanish at both endpoints, so no boundary rows are needed: the first and
last interior rows simply omit the degenerate outer fluxes.

The generalized problem  (-S) phi = mu M phi  with the diagonal mass
M = w^alpha r^4 dr is reduced by the M^(-1/2) scaling to a standard
symmetric tridiagonal problem; the algebraically largest eigenvalue is
found by Sturm-sequence bisection plus inverse iteration (LAPACK
stebz/stein via scipy), which is deterministic across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConvergenceFailure, ZeroVector
from .polytrope import LaneEmdenProfile

_NEAR_DEGENERATE_GAP = 1e-8


@dataclass(frozen=True, eq=False)
class OperatorPencil:
    """Tridiagonal stiffness (representing -L) and diagonal mass weights
    on the interior nodes of a profile grid."""

    grid: np.ndarray              # interior nodes r_1 .. r_{N-1}
    stiffness_diag: np.ndarray
    stiffness_off: np.ndarray
    mass_weights: np.ndarray      # w^alpha r^4 dr, positive
    quadrature_weights: np.ndarray
    gamma_tilde: float
    profile: LaneEmdenProfile = field(repr=False)

    @property
    def n_interior(self) -> int:
        return self.grid.size

    def apply_stiffness(self, phi: np.ndarray) -> np.ndarray:
        out = self.stiffness_diag * phi
        out[:-1] += self.stiffness_off * phi[1:]
        out[1:] += self.stiffness_off * phi[:-1]
        return out

    def bilinear(self, u: np.ndarray, v: np.ndarray) -> float:
        """u^T S v through a manifestly symmetric expression: swapping
        u and v permutes only commutative additions, so the value is
        bitwise identical."""
        return float(
            np.sum(self.stiffness_diag * (u * v))
            + np.sum(self.stiffness_off * (u[:-1] * v[1:] + u[1:] * v[:-1]))
        )

    def to_dense(self) -> np.ndarray:
        n = self.n_interior
        S = np.zeros((n, n))
        S[np.arange(n), np.arange(n)] = self.stiffness_diag
        S[np.arange(n - 1), np.arange(1, n)] = self.stiffness_off
        S[np.arange(1, n), np.arange(n - 1)] = self.stiffness_off
        return S


@dataclass(frozen=True, eq=False)
class GrowingMode:
    """Largest eigenpair of the pencil, normalized so that
    (1 + mu0) |phi0|_X^2 + |phi0|_Y^2 = 1 and phi0(0) > 0."""

    mu0: float
    rate: float
    phi0: np.ndarray              # on the full grid, endpoints extrapolated
    residual: float
    norm_X: float
    norm_Y: float
    near_degenerate: bool
    gap: float


def half_node_coefficients(profile: LaneEmdenProfile):
    """Flux coefficients (w^(1+alpha) r^4) evaluated at cell midpoints."""
    r = profile.grid
    rm = 0.5 * (r[:-1] + r[1:])
    wm, _ = profile.enthalpy(rm)
    return rm, np.clip(wm, 0.0, None) ** (1.0 + profile.alpha) * rm**4


def assemble_pencil(profile: LaneEmdenProfile) -> OperatorPencil:
    """Flux-form assembly; symmetric by construction, never symmetrized."""
    alpha = profile.alpha
    gt = (1.0 + alpha) / alpha
    r = profile.grid
    N = r.size - 1
    h = np.diff(r)
    _, g = half_node_coefficients(profile)

    ri = r[1:N]
    wi = profile.w[1:N]
    dr = 0.5 * (r[2:] - r[:-2])
    mass = wi**alpha * ri**4 * dr

    # interior cells j = 1 .. N-2 couple interior neighbours
    flux = gt * g[1 : N - 1] / h[1 : N - 1]
    diag = np.zeros(N - 1)
    diag[:-1] += flux
    diag[1:] += flux
    diag -= (4.0 - 3.0 * gt) * profile.phi[1:N] * mass

    quad_w = np.empty(N + 1)
    quad_w[0] = h[0] / 2.0
    quad_w[-1] = h[-1] / 2.0
    quad_w[1:N] = dr

    return OperatorPencil(
        grid=ri,
        stiffness_diag=diag,
        stiffness_off=-flux,
        mass_weights=mass,
        quadrature_weights=quad_w,
        gamma_tilde=gt,
        profile=profile,
    )


def rayleigh_quotient(pencil: OperatorPencil, phi: np.ndarray) -> float:
    """Q(phi)/I(phi) for a trial vector on the interior nodes.

    Evaluated through the pencil's flux sums, which coincides with the
    matrix quotient phi^T (-S) phi / phi^T M phi.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != pencil.grid.shape:
        raise ValueError("trial vector must live on the interior nodes")
    if not np.any(phi != 0.0):
        raise ZeroVector("trial vector is identically zero")
    num = -float(phi @ pencil.apply_stiffness(phi))
    den = float(np.sum(pencil.mass_weights * phi * phi))
    return num / den


def extend_to_full_grid(profile: LaneEmdenProfile, interior: np.ndarray) -> np.ndarray:
    """Endpoint values by extrapolation: even (quadratic in r^2) at the
    origin, linear at the vacuum radius.  Reporting convenience only;
    both endpoints carry zero weight in every norm."""
    r = profile.grid
    full = np.empty(r.size)
    full[1:-1] = interior
    full[0] = interior[0] + (interior[1] - interior[0]) * (
        (0.0 - r[1] ** 2) / (r[2] ** 2 - r[1] ** 2)
    )
    full[-1] = interior[-1] + (interior[-1] - interior[-2]) / (r[-2] - r[-3]) * (
        r[-1] - r[-2]
    )
    return full


def largest_eigenpair(pencil: OperatorPencil, eig_tol: float = 1e-8) -> GrowingMode:
    """Largest eigenvalue of (-S) phi = mu M phi and its eigenvector.

    M^(-1/2) scaling keeps the problem symmetric tridiagonal; the top two
    eigenvalues are requested so a near-degenerate pair can be flagged
    instead of silently trusted.
    """
    from .energetics import weighted_norm_X, weighted_norm_Y  # cycle-free at call time

    scale = 1.0 / np.sqrt(pencil.mass_weights)
    d = -pencil.stiffness_diag * scale * scale
    e = -pencil.stiffness_off * scale[:-1] * scale[1:]
    n = d.size
    try:
        top_vals = eigh_tridiagonal(
            d, e, select="i", select_range=(n - 2, n - 1), eigvals_only=True
        )
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(n - 1, n - 1))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceFailure(str(exc)) from exc
    mu0 = float(vals[0])
    gap = float(top_vals[1] - top_vals[0])

    profile = pencil.profile
    interior = vecs[:, 0] * scale
    phi0 = extend_to_full_grid(profile, interior)
    if phi0[0] < 0:
        phi0 = -phi0
        interior = -interior

    nx2 = weighted_norm_X(phi0, profile, profile.alpha) ** 2
    ny2 = weighted_norm_Y(phi0, profile, profile.alpha) ** 2
    s = 1.0 / np.sqrt((1.0 + mu0) * nx2 + ny2)
    phi0 = phi0 * s
    interior = interior * s

    resid_rows = -pencil.apply_stiffness(interior) - mu0 * pencil.mass_weights * interior
    residual = float(np.abs(resid_rows / pencil.quadrature_weights[1:-1]).max())
    res_scale = float(
        (pencil.mass_weights / pencil.quadrature_weights[1:-1]).max()
        * np.abs(interior).max()
        * (1.0 + abs(mu0))
    )
    if residual > eig_tol * res_scale:
        raise ConvergenceFailure(
            f"eigen residual {residual:.3e} exceeds {eig_tol:.1e} * scale {res_scale:.3e}"
        )

    return GrowingMode(
        mu0=mu0,
        rate=float(np.sqrt(max(mu0, 0.0))),
        phi0=phi0,
        residual=residual,
        norm_X=float(np.sqrt(nx2) * s),
        norm_Y=float(np.sqrt(ny2) * s),
        near_degenerate=gap < _NEAR_DEGENERATE_GAP,
        gap=gap,
    )


def mode_regularity_report(mode: GrowingMode, profile: LaneEmdenProfile) -> dict:
    """Regularity diagnostics of the eigenfunction.

    Reports the origin slope from a quadratic fit through the first
    interior nodes, the weighted integrals with beta powers of w removed
    (finite for 0 <= beta <= floor(alpha)), and the near-boundary
    integrals with weight w^(z-2) for z slightly above one.
    """
    from .energetics import weighted_norm_X, weighted_norm_Y

    r = profile.grid
    phi0 = mode.phi0
    nfit = 6
    coef = np.polyfit(r[1 : nfit + 1], phi0[1 : nfit + 1], 2)
    origin_slope = float(coef[1])

    betas = list(range(int(np.floor(profile.alpha)) + 1))
    beta_integrals = {}
    for beta in betas:
        ix = weighted_norm_X(phi0, profile, profile.alpha - beta) ** 2
        iy = weighted_norm_Y(phi0, profile, profile.alpha - beta) ** 2
        beta_integrals[beta] = {"value": ix, "derivative": iy}

    z_integrals = {
        z: weighted_norm_X(phi0, profile, z - 2.0) ** 2 for z in (1.1, 1.5, 2.0)
    }

    return {
        "origin_slope": origin_slope,
        "beta_integrals": beta_integrals,
        "z_integrals": z_integrals,
        "near_degenerate": mode.near_degenerate,
        "gap": mode.gap,
    }
