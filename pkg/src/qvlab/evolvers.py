"""Split-step integrators for the scalar, spinor, and bispinor wave equations,
a leapfrog solver for the four-potential wave equation, and the Taylor
evolution matrix for truncated kinematic-state flows.

The scalar step factors exp(-i*dt*H/hbar) with H = (p - qA)^2/(2m) + U into a
pointwise phase for U + q^2|A|^2/(2m), an exact transform-space kinetic
multiplier, and the cross term -(q/2m)(A.p + p.A).  For uniform A the cross
term is diagonal in transform space and the whole step is exact; otherwise it
is applied through a short series of the symmetrized generator, a unitary
deviation far below the O(dt^2) splitting error.  The spinor step wraps that
machinery componentwise between exact 2x2 rotations for the magnetic moment
term, and the bispinor step pairs a closed-form free propagator (H_free^2 is
scalar in transform space) with a pointwise closed-form interaction
exponential.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .decomposition import FourCurrent, GaugeConfiguration, PhysicalConstants
from .fields import BispinorField, ComplexScalarField, SpinorField
from .lattice import Grid, _kmesh, curl, divergence, k_squared, spectral_gradient, spectral_laplacian

# Terms kept in the symmetrized cross-term series; the truncation error
# (tau*|C|/hbar)^6/720 sits far below the O(dt^2) splitting error.
_CROSS_TERMS = 6


@dataclass(frozen=True)
class EvolutionParams:
    """Step size and bookkeeping for a run.

    dt may be negative so a step can be undone (the split factors invert
    exactly); the wave solver additionally bounds c*|dt| by
    stability_factor*min_spacing.
    """

    dt: float
    steps: int
    snapshot_stride: int = 1
    splitting_order: int = 2
    stability_factor: float = 0.5

    def __post_init__(self):
        if self.dt == 0.0 or not math.isfinite(self.dt):
            raise ValueError("dt must be nonzero and finite")
        if self.steps < 0:
            raise ValueError(f"step count must be nonnegative, got {self.steps}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be at least 1")
        if self.splitting_order not in (1, 2):
            raise ValueError("splitting_order is 1 (Lie) or 2 (Strang)")
        if not 0.0 < self.stability_factor <= 1.0:
            raise ValueError("stability_factor must lie in (0, 1]")


@dataclass
class EvolutionTrace:
    """Snapshots collected every snapshot_stride steps (step 0 and the final
    step always included)."""

    times: list[float]
    snapshots: list


def _record(trace: EvolutionTrace, step: int, params: EvolutionParams, state, time: float):
    if step % params.snapshot_stride == 0 or step == params.steps:
        trace.times.append(time)
        trace.snapshots.append(state)


# ---------------------------------------------------------------------------
# scalar / spinor steps

def _potential_energy(gauge: GaugeConfiguration, consts: PhysicalConstants) -> np.ndarray:
    a2 = sum(c * c for c in gauge.a_psi.components)
    return gauge.u + consts.q**2 * a2 / (2.0 * consts.m)


def _uniform_components(field) -> Optional[list[float]]:
    """Constant value per component, or None if any component varies."""
    out = []
    for comp in field.components:
        flat = comp.reshape(-1)
        if not np.all(flat == flat[0]):
            return None
        out.append(float(flat[0]))
    return out


def _apply_cross(values, grid, gauge, consts, tau):
    """exp(-i*tau*C/hbar) with C = -(q/2m)(A.p + p.A)."""
    uniform = _uniform_components(gauge.a_psi)
    if uniform is not None:
        if all(v == 0.0 for v in uniform):
            return values
        phase = np.zeros(grid.shape)
        for axis, a in enumerate(uniform):
            phase = phase + a * _kmesh(grid, axis, True)
        mult = np.exp(1j * tau * (consts.q / consts.m) * phase)
        return np.fft.ifftn(mult * np.fft.fftn(values))
    # -i*tau*C/hbar reduces to a real coefficient on div(A psi) + A.grad(psi)
    coeff = tau * consts.q / (2.0 * consts.m)

    def gen(arr):
        flux = divergence([a * arr for a in gauge.a_psi.components], grid)
        adv = sum(
            a * g
            for a, g in zip(gauge.a_psi.components, spectral_gradient(arr, grid))
        )
        return coeff * (flux + adv)

    out = values
    term = values
    for n in range(1, _CROSS_TERMS):
        term = gen(term) / n
        out = out + term
    return out


def _scalar_step(values, grid, gauge, consts, params, kinetic, potential):
    dt = params.dt
    strang = params.splitting_order == 2
    if potential:
        v = _potential_energy(gauge, consts)
        if abs(dt) * float(np.max(np.abs(v))) * consts.beta > 0.5:
            warnings.warn(
                "potential phase exceeds 0.5 rad per step; splitting accuracy degrades",
                RuntimeWarning,
            )
        v_phase = np.exp(-1j * (0.5 * dt if strang else dt) * v * consts.beta)
        values = values * v_phase
    if kinetic:
        k_phase = np.exp(
            -1j * dt * consts.hbar * k_squared(grid) / (2.0 * consts.m)
        )
        if strang:
            values = _apply_cross(values, grid, gauge, consts, 0.5 * dt)
            values = np.fft.ifftn(k_phase * np.fft.fftn(values))
            values = _apply_cross(values, grid, gauge, consts, 0.5 * dt)
        else:
            values = _apply_cross(values, grid, gauge, consts, dt)
            values = np.fft.ifftn(k_phase * np.fft.fftn(values))
    if potential and strang:
        values = values * v_phase
    return values


def schrodinger_step(
    psi: ComplexScalarField,
    gauge: GaugeConfiguration,
    consts: PhysicalConstants,
    params: EvolutionParams,
    *,
    kinetic: bool = True,
    potential: bool = True,
) -> ComplexScalarField:
    """One split step of i*hbar dpsi/dt = [(p - qA)^2/(2m) + U] psi.

    Exact to roundoff when A and U are uniform; unitary to roundoff whenever
    A is uniform.  The kinetic/potential switches drop the corresponding
    factors, which isolates either piece for phase checks.
    """
    if psi.grid != gauge.grid:
        raise ValueError("field and gauge configuration live on different grids")
    values = _scalar_step(
        psi.values, psi.grid, gauge, consts, params, kinetic, potential
    )
    return ComplexScalarField(psi.grid, values)


def magnetic_field(gauge: GaugeConfiguration) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Three B components: curl of a_psi (2D fills the out-of-plane slot,
    1D has no curl) plus any fixed b_external."""
    grid = gauge.grid
    zeros = np.zeros(grid.shape)
    if grid.dim == 3:
        b = curl(gauge.a_psi.components, grid)
    elif grid.dim == 2:
        b = [zeros, zeros, curl(gauge.a_psi.components, grid)[0]]
    else:
        b = [zeros, zeros, zeros]
    if gauge.b_external is not None:
        b = [comp + ext for comp, ext in zip(b, gauge.b_external)]
    return tuple(b)


def _spin_rotation(values, b, consts, tau):
    # exp(i*theta*sigma.n) = cos(theta) + i*sin(theta)*sigma.n with
    # theta = (q*tau/2m)|B|; the sin(theta)/|B| factor tends to q*tau/2m.
    coeff = consts.q * tau / (2.0 * consts.m)
    bmag = np.sqrt(b[0] ** 2 + b[1] ** 2 + b[2] ** 2)
    theta = coeff * bmag
    cos = np.cos(theta)
    safe = np.where(bmag > 0.0, bmag, 1.0)
    scale = np.where(bmag > 0.0, np.sin(theta) / safe, coeff)
    up, down = values
    new_up = cos * up + 1j * scale * (b[2] * up + (b[0] - 1j * b[1]) * down)
    new_down = cos * down + 1j * scale * ((b[0] + 1j * b[1]) * up - b[2] * down)
    return np.stack([new_up, new_down])


def pauli_step(
    psi: SpinorField,
    gauge: GaugeConfiguration,
    consts: PhysicalConstants,
    params: EvolutionParams,
    *,
    kinetic: bool = True,
    potential: bool = True,
) -> SpinorField:
    """Componentwise scalar step wrapped in exact 2x2 rotations generated by
    the magnetic moment term -(q*hbar/2m) sigma.B.

    With B = 0 the rotation is skipped outright, so each component follows
    the scalar path bit for bit.
    """
    if psi.grid != gauge.grid:
        raise ValueError("field and gauge configuration live on different grids")
    b = magnetic_field(gauge)
    spinless = all(np.all(comp == 0.0) for comp in b)
    strang = params.splitting_order == 2
    values = psi.values
    if not spinless:
        values = _spin_rotation(values, b, consts, 0.5 * params.dt if strang else params.dt)
    values = np.stack(
        [
            _scalar_step(comp, psi.grid, gauge, consts, params, kinetic, potential)
            for comp in values
        ]
    )
    if not spinless and strang:
        values = _spin_rotation(values, b, consts, 0.5 * params.dt)
    return SpinorField(psi.grid, values)


# ---------------------------------------------------------------------------
# bispinor step

@dataclass
class FourPotential:
    """Scalar potential phi and the three spatial components of A, sampled on
    (or broadcast to) the grid."""

    grid: Grid
    phi: np.ndarray
    a: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        self.phi = np.broadcast_to(np.asarray(self.phi, dtype=float), self.grid.shape)
        if len(self.a) != 3:
            raise ValueError("the vector potential needs exactly 3 components")
        self.a = tuple(
            np.broadcast_to(np.asarray(c, dtype=float), self.grid.shape) for c in self.a
        )

    @classmethod
    def free(cls, grid: Grid) -> "FourPotential":
        z = np.zeros(grid.shape)
        return cls(grid, z, (z, z, z))


# Dirac representation constants for the free-propagator assembly.
_SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _alpha_matrix(axis: int) -> np.ndarray:
    out = np.zeros((4, 4), dtype=complex)
    out[:2, 2:] = _SIGMA[axis]
    out[2:, :2] = _SIGMA[axis]
    return out


@lru_cache(maxsize=8)
def _dirac_free_multiplier(grid: Grid, consts: PhysicalConstants, dt: float) -> np.ndarray:
    """exp(-i*dt*H_free/hbar) per wave vector; H_free^2 = E^2 makes the
    exponential cos(E*dt/hbar) - i*sin(E*dt/hbar)*H_free/E."""
    kvecs = [
        _kmesh(grid, axis, True) if axis < grid.dim else 0.0 for axis in range(3)
    ]
    k2 = np.zeros(grid.shape)
    for kv in kvecs[: grid.dim]:
        k2 = k2 + kv**2
    mc2 = consts.m * consts.c**2
    energy = np.sqrt((consts.c * consts.hbar) ** 2 * k2 + mc2**2)
    h = np.zeros((4, 4) + grid.shape, dtype=complex)
    for axis in range(grid.dim):
        h += consts.c * consts.hbar * kvecs[axis] * _alpha_matrix(axis).reshape(
            (4, 4) + (1,) * grid.dim
        )
    gamma0 = np.diag([1.0, 1.0, -1.0, -1.0]).reshape((4, 4) + (1,) * grid.dim)
    h = h + mc2 * gamma0
    phase = dt * energy * consts.beta
    eye = np.eye(4).reshape((4, 4) + (1,) * grid.dim)
    mult = np.cos(phase) * eye - 1j * (np.sin(phase) / energy) * h
    mult.flags.writeable = False
    return mult


def _dirac_interaction(values, pot, consts, tau):
    """Pointwise exp(-(i*tau/hbar)(q*phi - q*c*alpha.A)); (alpha.A)^2 = |A|^2
    collapses the exponential to a cosine/sine pair."""
    a1, a2, a3 = pot.a
    amag = np.sqrt(a1**2 + a2**2 + a3**2)
    w = consts.q * consts.c * tau * consts.beta * amag
    safe = np.where(amag > 0.0, amag, 1.0)
    scale = np.where(amag > 0.0, np.sin(w) / safe, consts.q * consts.c * tau * consts.beta)
    scalar = np.exp(-1j * consts.q * tau * consts.beta * pot.phi)
    p1, p2, p3, p4 = values
    cross = np.stack(
        [
            a3 * p3 + (a1 - 1j * a2) * p4,
            (a1 + 1j * a2) * p3 - a3 * p4,
            a3 * p1 + (a1 - 1j * a2) * p2,
            (a1 + 1j * a2) * p1 - a3 * p2,
        ]
    )
    return scalar * (np.cos(w) * values + 1j * scale * cross)


def dirac_step(
    psi: BispinorField,
    pot: FourPotential,
    consts: PhysicalConstants,
    params: EvolutionParams,
) -> BispinorField:
    """One split step of i*hbar dpsi/dt = [c*alpha.(p - qA) + m*c^2*gamma^0
    + q*phi] psi; the free factor is exact in transform space."""
    if psi.grid != pot.grid:
        raise ValueError("field and potential live on different grids")
    grid = psi.grid
    axes = tuple(range(1, grid.dim + 1))
    dt = params.dt
    strang = params.splitting_order == 2
    interacting = bool(np.any(pot.phi) or any(np.any(c) for c in pot.a))
    values = psi.values
    if interacting:
        values = _dirac_interaction(values, pot, consts, 0.5 * dt if strang else dt)
    mult = _dirac_free_multiplier(grid, consts, dt)
    hat = np.fft.fftn(values, axes=axes)
    hat = np.einsum("ab...,b...->a...", mult, hat)
    values = np.fft.ifftn(hat, axes=axes)
    if interacting and strang:
        values = _dirac_interaction(values, pot, consts, 0.5 * dt)
    return BispinorField(grid, values)


# ---------------------------------------------------------------------------
# four-potential wave equation

@dataclass
class WaveState:
    """Two leapfrog time levels of the four-potential (A^0, A^1, A^2, A^3);
    curr is at `time`, prev one step earlier."""

    grid: Grid
    prev: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    curr: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    time: float

    def __post_init__(self):
        for name in ("prev", "curr"):
            comps = getattr(self, name)
            if len(comps) != 4:
                raise ValueError("wave state carries exactly 4 potential components")
            setattr(
                self,
                name,
                tuple(
                    np.broadcast_to(np.asarray(c, dtype=float), self.grid.shape)
                    for c in comps
                ),
            )


def _check_cfl(grid: Grid, consts: PhysicalConstants, params: EvolutionParams):
    limit = params.stability_factor * min(grid.spacing)
    if consts.c * abs(params.dt) > limit:
        raise ValueError(
            f"CFL violation: c*dt = {consts.c * abs(params.dt):.3e} "
            f"exceeds {limit:.3e}"
        )


def _current_components(j: Optional[FourCurrent], grid: Grid):
    if j is None:
        zeros = np.zeros(grid.shape)
        return (zeros,) * 4
    if j.grid != grid:
        raise ValueError("source current lives on a different grid")
    return (j.j0, *j.jk)


def wave_initial_state(
    grid: Grid,
    a0: Sequence[np.ndarray],
    adot0: Sequence[np.ndarray],
    consts: PhysicalConstants,
    params: EvolutionParams,
    j: Optional[FourCurrent] = None,
) -> WaveState:
    """Build the two time levels leapfrog needs from (A, dA/dt) at t = 0.

    The backward level comes from a third-order Taylor step (the source is
    held static), which keeps the start error below the leapfrog dispersion.
    """
    _check_cfl(grid, consts, params)
    source = _current_components(j, grid)
    dt, c2 = params.dt, consts.c**2
    mu0 = consts.mu0
    curr, prev = [], []
    for a, adot, s in zip(a0, adot0, source):
        a = np.broadcast_to(np.asarray(a, dtype=float), grid.shape)
        adot = np.broadcast_to(np.asarray(adot, dtype=float), grid.shape)
        accel = c2 * (spectral_laplacian(a, grid) + mu0 * s)
        jerk = c2 * spectral_laplacian(adot, grid)
        prev.append(a - dt * adot + 0.5 * dt**2 * accel - dt**3 / 6.0 * jerk)
        curr.append(a)
    return WaveState(grid, tuple(prev), tuple(curr), 0.0)


def dalembert_step(
    state: WaveState,
    j: Optional[FourCurrent],
    consts: PhysicalConstants,
    params: EvolutionParams,
) -> WaveState:
    """Leapfrog update of (1/c^2) d^2A/dt^2 - Lap(A) = mu0*J with the
    spectral Laplacian."""
    _check_cfl(state.grid, consts, params)
    source = _current_components(j, state.grid)
    step2 = (consts.c * params.dt) ** 2
    nxt = tuple(
        2.0 * c - p + step2 * (spectral_laplacian(c, state.grid) + consts.mu0 * s)
        for p, c, s in zip(state.prev, state.curr, source)
    )
    return WaveState(state.grid, state.curr, nxt, state.time + params.dt)


# ---------------------------------------------------------------------------
# truncated kinematic-state evolution

@dataclass(frozen=True, eq=False)
class TaylorEvolutionMatrix:
    """Upper-triangular Taylor-shift matrix M_ij = t^(j-i)/(j-i)!.

    The diagonal is identically 1, so det M = 1 exactly at every order."""

    order: int
    t: float
    entries: np.ndarray

    @property
    def det(self) -> float:
        return float(np.prod(np.diag(self.entries)))


def gps_matrix(order: int, t: float) -> TaylorEvolutionMatrix:
    """Evolution matrix for a kinematic state (r, v, dv/dt, ...) truncated at
    `order` slots."""
    if order < 1:
        raise ValueError(f"order must be at least 1, got {order}")
    m = np.zeros((order, order))
    for i in range(order):
        for j in range(i, order):
            m[i, j] = t ** (j - i) / math.factorial(j - i)
    m.flags.writeable = False
    return TaylorEvolutionMatrix(order, float(t), m)


def gps_apply(matrix: TaylorEvolutionMatrix, state) -> np.ndarray:
    """Advance a kinematic-state vector (leading axis indexes the derivative
    order; trailing axes ride along)."""
    state = np.asarray(state, dtype=float)
    if state.shape[0] != matrix.order:
        raise ValueError(
            f"state has {state.shape[0]} slots, matrix expects {matrix.order}"
        )
    return np.einsum("ij,j...->i...", matrix.entries, state)


# ---------------------------------------------------------------------------
# run drivers

def run_schrodinger(psi, gauge, consts, params, **flags) -> EvolutionTrace:
    trace = EvolutionTrace([], [])
    _record(trace, 0, params, psi, 0.0)
    for step in range(1, params.steps + 1):
        psi = schrodinger_step(psi, gauge, consts, params, **flags)
        _record(trace, step, params, psi, step * params.dt)
    return trace


def run_pauli(psi, gauge, consts, params, **flags) -> EvolutionTrace:
    trace = EvolutionTrace([], [])
    _record(trace, 0, params, psi, 0.0)
    for step in range(1, params.steps + 1):
        psi = pauli_step(psi, gauge, consts, params, **flags)
        _record(trace, step, params, psi, step * params.dt)
    return trace


def run_dirac(psi, pot, consts, params) -> EvolutionTrace:
    trace = EvolutionTrace([], [])
    _record(trace, 0, params, psi, 0.0)
    for step in range(1, params.steps + 1):
        psi = dirac_step(psi, pot, consts, params)
        _record(trace, step, params, psi, step * params.dt)
    return trace


def run_wave(state: WaveState, j, consts, params) -> EvolutionTrace:
    trace = EvolutionTrace([], [])
    _record(trace, 0, params, state, state.time)
    for step in range(1, params.steps + 1):
        state = dalembert_step(state, j, consts, params)
        _record(trace, step, params, state, state.time)
    return trace
