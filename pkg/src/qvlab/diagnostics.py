"""Residual evaluators for the identities the current-decomposition framework
guarantees: continuity, Hamilton-Jacobi balance, gauge conditions, field
self-consistency, the Maxwell-type system, and four-current conservation.

Every time derivative is a centered second-order difference over stored
snapshots, so residuals carry an O(dt^2) floor that is discretization, not
identity failure; report dt alongside the norms.  Norms are taken over the
unmasked grid points only (l2 is the root mean square), and the masked
fraction is part of the report.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .decomposition import (
    FourCurrent,
    GaugeConfiguration,
    PhysicalConstants,
    current_scalar,
    velocity,
)
from .fields import ComplexScalarField, NodeError, VectorField, density, node_mask, phase_gradient
from .lattice import Grid, curl, divergence, spectral_gradient, spectral_laplacian

_JUMP_FRACTION = 0.9  # |angle| above this multiple of pi flags a branch jump


@dataclass
class ResidualReport:
    """Norms of one residual over the unmasked points."""

    name: str
    l2: float
    linf: float
    mask_fraction: float
    n_points: int
    dt: Optional[float] = None
    per_point: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.l2 < 0.0 or self.linf < 0.0:
            raise ValueError("residual norms cannot be negative")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must lie in [0, 1]")

    def to_json(self) -> str:
        payload = {
            "name": self.name,
            "l2": self.l2,
            "linf": self.linf,
            "mask_fraction": self.mask_fraction,
            "n_points": self.n_points,
            "dt": self.dt,
        }
        return json.dumps(payload) + "\n"


def _report(name, samples, mask=None, dt=None) -> ResidualReport:
    samples = np.asarray(samples, dtype=float)
    if mask is None:
        keep = samples.reshape(-1)
    else:
        keep = samples[~np.broadcast_to(mask, samples.shape)]
    if keep.size == 0:
        raise NodeError(f"{name}: every sample is masked")
    return ResidualReport(
        name=name,
        l2=float(np.sqrt(np.mean(keep**2))),
        linf=float(np.max(np.abs(keep))),
        mask_fraction=1.0 - keep.size / samples.size,
        n_points=int(keep.size),
        dt=dt,
        per_point=samples,
    )


def _series_spacing(times: Sequence[float]) -> float:
    if len(times) < 3:
        raise ValueError(f"need at least 3 snapshots, got {len(times)}")
    steps = np.diff(np.asarray(times, dtype=float))
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ValueError("snapshots must be equally spaced in time")
    return float(steps[0])


def _centered(series: Sequence[np.ndarray], index: int, dt: float) -> np.ndarray:
    return (series[index + 1] - series[index - 1]) / (2.0 * dt)


# ---------------------------------------------------------------------------
# continuity and current conservation

def continuity_residual(
    times: Sequence[float],
    densities: Sequence[np.ndarray],
    currents: Sequence[VectorField],
) -> ResidualReport:
    """r = df/dt + div J at the interior snapshot times."""
    dt = _series_spacing(times)
    if not len(times) == len(densities) == len(currents):
        raise ValueError("times, densities, and currents must align")
    rows = []
    for i in range(1, len(times) - 1):
        grid = currents[i].grid
        rows.append(
            _centered(densities, i, dt) + divergence(currents[i].components, grid)
        )
    return _report("continuity", np.stack(rows), dt=dt)


def four_current_divergence(
    times: Sequence[float],
    currents: Sequence[FourCurrent],
    consts: PhysicalConstants,
) -> ResidualReport:
    """r = (1/c) dJ^0/dt + div J at the interior snapshot times."""
    dt = _series_spacing(times)
    j0 = [j.j0 for j in currents]
    rows = [
        _centered(j0, i, dt) / consts.c + currents[i].spatial_divergence()
        for i in range(1, len(times) - 1)
    ]
    return _report("four_current_divergence", np.stack(rows), dt=dt)


# ---------------------------------------------------------------------------
# quantum potential and the Hamilton-Jacobi balance

def quantum_potential(psi: ComplexScalarField, consts: PhysicalConstants):
    """Q = (alpha/beta) * Lap|psi|/|psi| away from nodes; returns (Q, mask).

    Evaluated through Lap|psi|/|psi| = Re(Lap psi / psi) + |grad phi|^2, which
    stays smooth where |psi| has kinks (sign-changing real states).
    """
    f = density(psi)
    mask = node_mask(f)
    if mask.all():
        raise NodeError("quantum potential undefined: density has no support")
    lap = spectral_laplacian(psi.values, psi.grid)
    ratio = np.zeros(psi.grid.shape, dtype=complex)
    np.divide(lap, psi.values, out=ratio, where=~mask)
    grads, _ = phase_gradient(psi)
    grad2 = sum(g**2 for g in grads)
    q = (consts.alpha / consts.beta) * (ratio.real + grad2)
    q[mask] = 0.0
    return q, mask


def quantum_force(psi: ComplexScalarField, consts: PhysicalConstants):
    """-grad Q as node-safe pointwise combinations; returns (components, mask).

    Spatially differentiating the masked Q samples would ring: the mask edge
    is a jump, and spectral derivatives are global.  Instead every derivative
    lands on psi itself (smooth), and the division happens last:

        grad(Lap|psi|/|psi|) = Re(grad(Lap psi)/psi - (Lap psi/psi)(grad psi/psi))
                               + 2 sum_b Im(d_b psi/psi) Im(d_a d_b psi/psi
                               - (d_a psi/psi)(d_b psi/psi)).
    """
    grid = psi.grid
    f = density(psi)
    mask = node_mask(f)
    if mask.all():
        raise NodeError("quantum force undefined: density has no support")
    keep = ~mask
    inv = np.zeros(grid.shape, dtype=complex)
    np.divide(1.0, psi.values, out=inv, where=keep)
    d1 = spectral_gradient(psi.values, grid)
    lap = spectral_laplacian(psi.values, grid)
    dlap = spectral_gradient(lap, grid)
    second = [spectral_gradient(d, grid) for d in d1]
    r1 = [d * inv for d in d1]
    rlap = lap * inv
    comps = []
    for a in range(grid.dim):
        dg = (dlap[a] * inv - rlap * r1[a]).real
        for b in range(grid.dim):
            cross = (second[a][b] * inv - r1[a] * r1[b]).imag
            dg = dg + 2.0 * r1[b].imag * cross
        force = -(consts.alpha / consts.beta) * dg
        force[mask] = 0.0
        comps.append(force)
    return tuple(comps), mask


def phase_rate_from_snapshots(
    earlier: ComplexScalarField, later: ComplexScalarField, spacing: float
):
    """Phase change rate angle(psi_later * conj(psi_earlier)) / spacing.

    Returns (rate, mask, jumps); jumps marks points whose phase advanced by
    nearly pi or more in one spacing, where the branch is ambiguous.  They are
    reported, never corrected.
    """
    if spacing == 0.0:
        raise ValueError("snapshot spacing must be nonzero")
    if earlier.grid != later.grid:
        raise ValueError("snapshots live on different grids")
    mask = node_mask(density(earlier)) | node_mask(density(later))
    angle = np.angle(later.values * np.conj(earlier.values))
    jumps = (np.abs(angle) > _JUMP_FRACTION * np.pi) & ~mask
    rate = np.where(mask, 0.0, angle / spacing)
    return rate, mask, jumps


def hamilton_jacobi_residual(
    psi: ComplexScalarField,
    gauge: GaugeConfiguration,
    consts: PhysicalConstants,
    phase_rate: np.ndarray,
    rate_mask: Optional[np.ndarray] = None,
    dt: Optional[float] = None,
) -> ResidualReport:
    """r = -(1/beta) dphi/dt + |<v>|^2/(4 alpha beta) - U - Q.

    phase_rate is the centered phase derivative (see phase_rate_from_snapshots);
    with the standard constants the balance reads
    -hbar dphi/dt - (m/2)|<v>|^2 - U - Q.
    """
    f = density(psi)
    j = current_scalar(psi, gauge, consts)
    v, mask = velocity(j, f)
    q, qmask = quantum_potential(psi, consts)
    mask = mask | qmask
    if rate_mask is not None:
        mask = mask | rate_mask
    speed2 = sum(c**2 for c in v.components)
    r = (
        -phase_rate / consts.beta
        + speed2 / (4.0 * consts.alpha * consts.beta)
        - gauge.u
        - q
    )
    return _report("hamilton_jacobi", r, mask=mask, dt=dt)


# ---------------------------------------------------------------------------
# electromagnetic analogues

def _curl3(components, grid: Grid):
    """curl as a fixed 3-tuple; 2D fills the out-of-plane slot, 1D has none."""
    zeros = np.zeros(grid.shape)
    if grid.dim == 3:
        return tuple(curl(components, grid))
    if grid.dim == 2:
        return (zeros, zeros, curl(components, grid)[0])
    return (zeros, zeros, zeros)


@dataclass
class EMFields:
    """Field strengths of the total, classical, and quantum potentials at one
    snapshot time.  E fields follow the grid dimension; B fields keep 3
    components because the curl leaves the grid plane."""

    grid: Grid
    e_psi: VectorField
    e_classical: VectorField
    e_quantum: VectorField
    b_psi: tuple
    b_classical: tuple
    b_quantum: tuple


def em_fields(
    times: Sequence[float],
    gauges: Sequence[GaugeConfiguration],
    consts: PhysicalConstants,
    q_series: Optional[Sequence[np.ndarray]] = None,
):
    """E and B fields of each potential family at the interior snapshot times.

    E_psi = -dA_psi/dt - (2 alpha beta / gamma) grad(V) with V = U + Q; the
    classical split pairs (A, U) and the quantum split (A_Q, Q).  Q defaults
    to zero when no series is given.  Returns (interior_times, [EMFields]).
    """
    dt = _series_spacing(times)
    grid = gauges[0].grid
    if any(g.grid != grid for g in gauges):
        raise ValueError("gauge snapshots live on different grids")
    zeros = np.zeros(grid.shape)
    if q_series is None:
        q_series = [zeros] * len(times)
    if len(q_series) != len(times):
        raise ValueError("q_series must align with the snapshot times")
    coeff = 2.0 * consts.alpha * consts.beta / consts.gamma
    out_times, frames = [], []
    for i in range(1, len(times) - 1):
        g = gauges[i]
        parts = {}
        for name, pick, scalar in (
            ("psi", lambda cfg: cfg.a_psi, g.u + q_series[i]),
            ("classical", lambda cfg: cfg.a_classical, g.u),
            ("quantum", lambda cfg: cfg.a_quantum, q_series[i]),
        ):
            da = [
                _centered([pick(cfg).components[ax] for cfg in gauges], i, dt)
                for ax in range(grid.dim)
            ]
            grad = spectral_gradient(scalar, grid)
            parts[name] = VectorField(
                grid, tuple(-d - coeff * gr for d, gr in zip(da, grad))
            )
        b_psi = _curl3(g.a_psi.components, grid)
        b_cl = _curl3(g.a_classical.components, grid)
        b_q = _curl3(g.a_quantum.components, grid)
        if g.b_external is not None:
            b_psi = tuple(b + ext for b, ext in zip(b_psi, g.b_external))
            b_cl = tuple(b + ext for b, ext in zip(b_cl, g.b_external))
        frames.append(
            EMFields(
                grid=grid,
                e_psi=parts["psi"],
                e_classical=parts["classical"],
                e_quantum=parts["quantum"],
                b_psi=b_psi,
                b_classical=b_cl,
                b_quantum=b_q,
            )
        )
        out_times.append(times[i])
    return out_times, frames


def gauge_residuals(
    times: Sequence[float],
    gauges: Sequence[GaugeConfiguration],
    consts: PhysicalConstants,
    q_series: Optional[Sequence[np.ndarray]] = None,
):
    """Reports for the three gauge conditions, at interior snapshot times.

    r_psi = div A_psi + (2 alpha beta / gamma) (1/c^2) dV/dt with V = U + Q,
    r_lorentz = div A + (1/(q c^2)) dU/dt,
    r_quantum = div A_Q + (1/(q c^2)) dQ/dt,
    and r_psi = r_lorentz + r_quantum up to roundoff by construction.
    """
    dt = _series_spacing(times)
    grid = gauges[0].grid
    zeros = np.zeros(grid.shape)
    if q_series is None:
        q_series = [zeros] * len(times)
    u_series = [g.u for g in gauges]
    v_series = [u + q for u, q in zip(u_series, q_series)]
    coeff = 2.0 * consts.alpha * consts.beta / consts.gamma
    inv_qc2 = 1.0 / (consts.q * consts.c**2)
    rows = {"gauge_psi": [], "gauge_lorentz": [], "gauge_quantum": []}
    for i in range(1, len(times) - 1):
        g = gauges[i]
        rows["gauge_psi"].append(
            divergence(g.a_psi.components, grid)
            + coeff / consts.c**2 * _centered(v_series, i, dt)
        )
        rows["gauge_lorentz"].append(
            divergence(g.a_classical.components, grid)
            + inv_qc2 * _centered(u_series, i, dt)
        )
        rows["gauge_quantum"].append(
            divergence(g.a_quantum.components, grid)
            + inv_qc2 * _centered(q_series, i, dt)
        )
    return tuple(_report(name, np.stack(r), dt=dt) for name, r in rows.items())


def self_consistency_residual(
    e_psi: VectorField, f: np.ndarray, consts: PhysicalConstants
) -> ResidualReport:
    """r = eps0 div E_psi - q f; measured, never enforced."""
    r = consts.eps0 * divergence(e_psi.components, e_psi.grid) - consts.q * f
    return _report("self_consistency", r)


@dataclass
class MaxwellFrame:
    """One snapshot of the Maxwell-type system: E, B, charge density, and
    current, all as plain samples on a 3D grid."""

    grid: Grid
    e: tuple
    b: tuple
    rho: Optional[np.ndarray] = None
    j: Optional[tuple] = None

    def __post_init__(self):
        if self.grid.dim != 3:
            raise ValueError("Maxwell frames need a 3D grid")
        zeros = np.zeros(self.grid.shape)
        self.e = tuple(np.broadcast_to(np.asarray(c, dtype=float), self.grid.shape) for c in self.e)
        self.b = tuple(np.broadcast_to(np.asarray(c, dtype=float), self.grid.shape) for c in self.b)
        if len(self.e) != 3 or len(self.b) != 3:
            raise ValueError("E and B need exactly 3 components")
        self.rho = zeros if self.rho is None else np.asarray(self.rho, dtype=float)
        self.j = (
            (zeros,) * 3
            if self.j is None
            else tuple(np.broadcast_to(np.asarray(c, dtype=float), self.grid.shape) for c in self.j)
        )


def maxwell_residuals(
    times: Sequence[float],
    frames: Sequence[MaxwellFrame],
    consts: PhysicalConstants,
) -> dict:
    """The four Maxwell-type residuals with D = eps0 E and mu0 H = B:

    div D - rho, div B, curl E + dB/dt, curl H - dD/dt - J,
    evaluated at the interior snapshot times.
    """
    dt = _series_spacing(times)
    grid = frames[0].grid
    e_series = [fr.e for fr in frames]
    b_series = [fr.b for fr in frames]
    gauss_e, gauss_b, faraday, ampere = [], [], [], []
    for i in range(1, len(times) - 1):
        fr = frames[i]
        gauss_e.append(consts.eps0 * divergence(fr.e, grid) - fr.rho)
        gauss_b.append(divergence(fr.b, grid))
        curl_e = curl(fr.e, grid)
        curl_b = curl(fr.b, grid)
        for ax in range(3):
            db = _centered([b[ax] for b in b_series], i, dt)
            de = _centered([e[ax] for e in e_series], i, dt)
            faraday.append(curl_e[ax] + db)
            ampere.append(curl_b[ax] / consts.mu0 - consts.eps0 * de - fr.j[ax])
    return {
        "gauss_electric": _report("gauss_electric", np.stack(gauss_e), dt=dt),
        "gauss_magnetic": _report("gauss_magnetic", np.stack(gauss_b), dt=dt),
        "faraday": _report("faraday", np.stack(faraday), dt=dt),
        "ampere": _report("ampere", np.stack(ampere), dt=dt),
    }
