"""Split-step integrators, the wave-equation leapfrog, and the Taylor
evolution matrix."""
import numpy as np
import pytest

from qvlab.decomposition import FourCurrent, GaugeConfiguration, PhysicalConstants
from qvlab.evolvers import (
    EvolutionParams,
    FourPotential,
    WaveState,
    dalembert_step,
    dirac_step,
    gps_apply,
    gps_matrix,
    pauli_step,
    run_schrodinger,
    run_wave,
    schrodinger_step,
    wave_initial_state,
)
from qvlab.fields import BispinorField, ComplexScalarField, SpinorField, VectorField
from qvlab.lattice import make_grid
from oracles import CoherentState, GaussianPacket, dirac_free_eigenstates
from util import linf, random_band_limited


NAT = PhysicalConstants.natural()


def _norm(values, grid):
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * grid.cell_volume))


def test_params_validation():
    good = dict(dt=0.1, steps=10)
    EvolutionParams(**good)
    for bad in (
        dict(good, dt=0.0),
        dict(good, steps=-1),
        dict(good, snapshot_stride=0),
        dict(good, splitting_order=3),
        dict(good, stability_factor=0.0),
        dict(good, stability_factor=1.5),
    ):
        with pytest.raises(ValueError):
            EvolutionParams(**bad)


def test_plane_wave_kinetic_phase_exact():
    g = make_grid(1, [64], [2 * np.pi])
    x = g.axis_coordinates(0)
    k, dt = 3.0, 0.01
    psi = ComplexScalarField(g, np.exp(1j * k * x))
    out = schrodinger_step(psi, GaugeConfiguration.free(g), NAT, EvolutionParams(dt, 1))
    expected = np.exp(1j * k * x) * np.exp(-1j * k**2 * dt / 2.0)
    assert linf(out.values - expected) <= 1e-13


def test_plane_wave_uniform_gauge_exact():
    # all three split factors are diagonal on a plane wave, so the full step
    # reproduces exp(-i*dt*(k - q*a)^2 / 2m) with no splitting error
    g = make_grid(1, [64], [2 * np.pi])
    x = g.axis_coordinates(0)
    k, a0, dt = 3.0, 0.4, 0.02
    gauge = GaugeConfiguration.assemble(
        g, a_classical=VectorField(g, (np.full(g.shape, a0),))
    )
    psi = ComplexScalarField(g, np.exp(1j * k * x))
    out = schrodinger_step(psi, gauge, NAT, EvolutionParams(dt, 1))
    expected = np.exp(1j * k * x) * np.exp(-1j * dt * (k - NAT.q * a0) ** 2 / 2.0)
    assert linf(out.values - expected) <= 1e-13


def test_uniform_potential_global_phase():
    rng = np.random.default_rng(5)
    g = make_grid(1, [64], [2 * np.pi])
    psi = ComplexScalarField(g, random_band_limited(g, rng, complex_valued=True))
    u0, dt = 0.7, 0.05
    gauge = GaugeConfiguration.assemble(g, u=np.full(g.shape, u0))
    out = schrodinger_step(
        psi, gauge, NAT, EvolutionParams(dt, 1), kinetic=False
    )
    assert linf(out.values - psi.values * np.exp(-1j * u0 * dt)) <= 1e-14


def test_free_gaussian_long_run_matches_oracle():
    pk = GaussianPacket(sigma0=1.0, x0=20.0, k0=1.0)
    g = make_grid(1, [256], [40.0])
    x = g.axis_coordinates(0)
    psi = ComplexScalarField(g, pk.psi(x, 0.0))
    params = EvolutionParams(dt=1e-3, steps=1000)
    trace = run_schrodinger(psi, GaugeConfiguration.free(g), NAT, params)
    final = trace.snapshots[-1].values
    assert linf(final - pk.psi(x, 1.0)) <= 1e-6


def _coherent_error(dt: float, t_final: float) -> float:
    state = CoherentState(displacement=1.0)
    g = make_grid(1, [128], [24.0])
    x = g.axis_coordinates(0) - 12.0
    gauge = GaugeConfiguration.assemble(g, u=state.potential(x))
    psi = ComplexScalarField(g, state.psi(x, 0.0))
    steps = int(round(t_final / dt))
    trace = run_schrodinger(psi, gauge, NAT, EvolutionParams(dt, steps))
    return linf(trace.snapshots[-1].values - state.psi(x, t_final))


def test_coherent_state_second_order_convergence():
    coarse = _coherent_error(2e-3, 0.5)
    fine = _coherent_error(1e-3, 0.5)
    assert coarse / fine >= 3.5


def test_lie_splitting_is_less_accurate():
    state = CoherentState(displacement=1.0)
    g = make_grid(1, [128], [24.0])
    x = g.axis_coordinates(0) - 12.0
    gauge = GaugeConfiguration.assemble(g, u=state.potential(x))
    psi = ComplexScalarField(g, state.psi(x, 0.0))
    errs = {}
    for order in (1, 2):
        trace = run_schrodinger(
            psi, gauge, NAT, EvolutionParams(1e-3, 200, splitting_order=order)
        )
        errs[order] = linf(trace.snapshots[-1].values - state.psi(x, 0.2))
    assert errs[1] > 5 * errs[2]


def test_norm_conserved_uniform_gauge():
    rng = np.random.default_rng(11)
    g = make_grid(1, [64], [2 * np.pi])
    psi = random_band_limited(g, rng, complex_valued=True)
    gauge = GaugeConfiguration.assemble(
        g,
        a_classical=VectorField(g, (np.full(g.shape, 0.3),)),
        u=np.cos(g.axis_coordinates(0)),
    )
    params = EvolutionParams(dt=1e-3, steps=1)
    n0 = _norm(psi, g)
    field = ComplexScalarField(g, psi)
    for _ in range(1000):
        field = schrodinger_step(field, gauge, NAT, params)
    assert abs(_norm(field.values, g) - n0) <= 1e-10


def test_norm_drift_small_for_nonuniform_gauge():
    rng = np.random.default_rng(12)
    g = make_grid(1, [64], [2 * np.pi])
    x = g.axis_coordinates(0)
    psi = random_band_limited(g, rng, complex_valued=True)
    gauge = GaugeConfiguration.assemble(
        g, a_classical=VectorField(g, (0.2 * (1.0 + 0.5 * np.cos(x)),))
    )
    params = EvolutionParams(dt=1e-3, steps=1)
    n0 = _norm(psi, g)
    field = ComplexScalarField(g, psi)
    for _ in range(500):
        field = schrodinger_step(field, gauge, NAT, params)
    assert abs(_norm(field.values, g) - n0) <= 1e-6


def test_strang_step_reversible():
    rng = np.random.default_rng(13)
    g = make_grid(1, [64], [2 * np.pi])
    vals = random_band_limited(g, rng, complex_valued=True)
    gauge = GaugeConfiguration.assemble(
        g,
        a_classical=VectorField(g, (np.full(g.shape, 0.5),)),
        u=np.sin(g.axis_coordinates(0)),
    )
    fwd = schrodinger_step(
        ComplexScalarField(g, vals), gauge, NAT, EvolutionParams(0.01, 1)
    )
    back = schrodinger_step(fwd, gauge, NAT, EvolutionParams(-0.01, 1))
    assert linf(back.values - vals) <= 1e-12


def test_potential_phase_warning():
    g = make_grid(1, [32], [2 * np.pi])
    psi = ComplexScalarField(g, np.ones(g.shape, dtype=complex))
    gauge = GaugeConfiguration.assemble(g, u=np.full(g.shape, 100.0))
    with pytest.warns(RuntimeWarning):
        schrodinger_step(psi, gauge, NAT, EvolutionParams(0.01, 1))


def test_grid_mismatch_rejected():
    g1 = make_grid(1, [32], [2 * np.pi])
    g2 = make_grid(1, [64], [2 * np.pi])
    psi = ComplexScalarField(g1, np.ones(g1.shape, dtype=complex))
    with pytest.raises(ValueError):
        schrodinger_step(psi, GaugeConfiguration.free(g2), NAT, EvolutionParams(0.01, 1))


def test_run_driver_records_stride_and_final():
    g = make_grid(1, [32], [2 * np.pi])
    psi = ComplexScalarField(g, np.exp(1j * g.axis_coordinates(0)))
    params = EvolutionParams(dt=0.01, steps=10, snapshot_stride=3)
    trace = run_schrodinger(psi, GaugeConfiguration.free(g), NAT, params)
    assert trace.times == pytest.approx([0.0, 0.03, 0.06, 0.09, 0.10])
    assert len(trace.snapshots) == 5


# ---------------------------------------------------------------------------
# spinor step

def test_pauli_reduces_to_scalar_when_b_vanishes():
    rng = np.random.default_rng(21)
    g = make_grid(1, [64], [2 * np.pi])
    vals = random_band_limited(g, rng, complex_valued=True)
    gauge = GaugeConfiguration.assemble(
        g,
        a_classical=VectorField(g, (np.full(g.shape, 0.4),)),
        u=np.cos(g.axis_coordinates(0)),
    )
    params = EvolutionParams(dt=0.01, steps=1)
    scalar = schrodinger_step(ComplexScalarField(g, vals), gauge, NAT, params)
    spinor = pauli_step(
        SpinorField(g, np.stack([vals, np.zeros_like(vals)])), gauge, NAT, params
    )
    assert np.array_equal(spinor.values[0], scalar.values)
    assert np.all(spinor.values[1] == 0.0)


def test_larmor_precession_of_sigma_x():
    # spatial part frozen; <sigma_x>(t) = cos(qBt/m) for B along z
    g = make_grid(1, [16], [2 * np.pi])
    b = 2.0
    gauge = GaugeConfiguration.assemble(g, b_external=(0.0, 0.0, b))
    up = np.full(g.shape, 1.0 / np.sqrt(2.0), dtype=complex)
    psi = SpinorField(g, np.stack([up, up]))
    params = EvolutionParams(dt=0.01, steps=1)
    for step in range(1, 501):
        psi = pauli_step(psi, gauge, NAT, params, kinetic=False, potential=False)
        if step == 250:
            mid = psi
    sx = lambda s: float(np.mean(2.0 * (np.conj(s.values[0]) * s.values[1]).real))
    assert sx(mid) == pytest.approx(np.cos(NAT.q * b * 2.5 / NAT.m), abs=1e-12)
    assert sx(psi) == pytest.approx(np.cos(NAT.q * b * 5.0 / NAT.m), abs=1e-12)


def test_eigenspinor_of_b_direction_keeps_magnitudes():
    g = make_grid(1, [16], [2 * np.pi])
    gauge = GaugeConfiguration.assemble(g, b_external=(0.0, 0.0, 1.5))
    up = np.ones(g.shape, dtype=complex)
    psi = SpinorField(g, np.stack([up, np.zeros_like(up)]))
    params = EvolutionParams(dt=0.02, steps=1)
    out = psi
    for _ in range(100):
        out = pauli_step(out, gauge, NAT, params, kinetic=False, potential=False)
    # pure phase exp(i*q*B*t/2m) on the aligned component
    expected = np.exp(1j * NAT.q * 1.5 * 2.0 / (2.0 * NAT.m))
    assert linf(np.abs(out.values[0]) - 1.0) <= 1e-13
    assert linf(out.values[1]) == 0.0
    assert linf(out.values[0] - expected * up) <= 1e-12


def test_pauli_inplane_field_mixes_components():
    # B along x swaps the basis spinors at the half period
    g = make_grid(1, [16], [2 * np.pi])
    b = 1.0
    gauge = GaugeConfiguration.assemble(g, b_external=(b, 0.0, 0.0))
    up = np.ones(g.shape, dtype=complex)
    psi = SpinorField(g, np.stack([up, np.zeros_like(up)]))
    # theta(t) = qBt/2m reaches pi/2 at t = pi*m/(q*B)
    t_half = np.pi * NAT.m / (NAT.q * b)
    steps = 1000
    params = EvolutionParams(dt=t_half / steps, steps=1)
    for _ in range(steps):
        psi = pauli_step(psi, gauge, NAT, params, kinetic=False, potential=False)
    assert linf(np.abs(psi.values[1]) - 1.0) <= 1e-9
    assert linf(psi.values[0]) <= 1e-9


# ---------------------------------------------------------------------------
# bispinor step

def test_dirac_plane_wave_positive_energy_phase():
    g = make_grid(1, [64], [2 * np.pi])
    x = g.axis_coordinates(0)
    k = 5.0
    energies, states = dirac_free_eigenstates((k, 0.0, 0.0), 1.0, 1.0, 1.0)
    e_plus = energies[3]
    u = states[:, 3]
    assert e_plus == pytest.approx(np.sqrt(k**2 + 1.0))
    psi = BispinorField(g, u[:, None] * np.exp(1j * k * x)[None, :])
    dt = 1e-3
    out = dirac_step(psi, FourPotential.free(g), NAT, EvolutionParams(dt, 1))
    expected = psi.values * np.exp(-1j * e_plus * dt)
    assert linf(out.values - expected) <= 1e-12


def test_dirac_rest_spinors_carry_rest_energy_phase():
    g = make_grid(1, [32], [2 * np.pi])
    dt = 0.01
    params = EvolutionParams(dt, 1)
    ones = np.ones(g.shape, dtype=complex)
    zero = np.zeros(g.shape, dtype=complex)
    particle = BispinorField(g, np.stack([ones, zero, zero, zero]))
    out = dirac_step(particle, FourPotential.free(g), NAT, params)
    assert linf(out.values[0] - np.exp(-1j * dt) * ones) <= 1e-14
    antiparticle = BispinorField(g, np.stack([zero, zero, ones, zero]))
    out = dirac_step(antiparticle, FourPotential.free(g), NAT, params)
    assert linf(out.values[2] - np.exp(+1j * dt) * ones) <= 1e-14


def test_dirac_step_unitary_and_reversible_with_potentials():
    rng = np.random.default_rng(31)
    g = make_grid(1, [64], [2 * np.pi])
    x = g.axis_coordinates(0)
    vals = np.stack(
        [random_band_limited(g, rng, complex_valued=True) for _ in range(4)]
    )
    pot = FourPotential(g, 0.3 * np.cos(x), (0.2 * np.sin(x), 0.0, 0.1 * np.cos(x)))
    psi = BispinorField(g, vals)
    n0 = _norm(vals, g)
    params = EvolutionParams(dt=0.01, steps=1)
    out = psi
    for _ in range(100):
        out = dirac_step(out, pot, NAT, params)
    assert abs(_norm(out.values, g) - n0) <= 1e-12
    back = dirac_step(
        dirac_step(psi, pot, NAT, params), pot, NAT, EvolutionParams(-0.01, 1)
    )
    assert linf(back.values - vals) <= 1e-12


def test_dirac_uniform_scalar_potential_exact_phase():
    # with A = 0 and uniform phi the interaction commutes with H_free
    g = make_grid(1, [32], [2 * np.pi])
    phi0, dt = 0.8, 0.02
    pot = FourPotential(g, np.full(g.shape, phi0), (0.0, 0.0, 0.0))
    ones = np.ones(g.shape, dtype=complex)
    zero = np.zeros(g.shape, dtype=complex)
    psi = BispinorField(g, np.stack([ones, zero, zero, zero]))
    out = dirac_step(psi, pot, NAT, EvolutionParams(dt, 1))
    expected = np.exp(-1j * dt * (1.0 + NAT.q * phi0)) * ones
    assert linf(out.values[0] - expected) <= 1e-14


# ---------------------------------------------------------------------------
# four-potential wave equation

def test_wave_standing_mode_over_one_period():
    g = make_grid(1, [64], [2 * np.pi])
    x = g.axis_coordinates(0)
    k = 3.0
    period = 2 * np.pi / k
    steps = 8000
    params = EvolutionParams(dt=period / steps, steps=steps)
    zeros = np.zeros(g.shape)
    state = wave_initial_state(
        g, (zeros, np.sin(k * x), zeros, zeros), (zeros,) * 4, NAT, params
    )
    trace = run_wave(state, None, NAT, params)
    final = trace.snapshots[-1].curr[1]
    assert linf(final - np.sin(k * x)) <= 1e-6


def test_wave_half_period_flips_sign():
    g = make_grid(1, [64], [2 * np.pi])
    x = g.axis_coordinates(0)
    k = 2.0
    steps = 4000
    params = EvolutionParams(dt=(np.pi / k) / steps, steps=steps)
    zeros = np.zeros(g.shape)
    state = wave_initial_state(
        g, (zeros, np.sin(k * x), zeros, zeros), (zeros,) * 4, NAT, params
    )
    trace = run_wave(state, None, NAT, params)
    assert linf(trace.snapshots[-1].curr[1] + np.sin(k * x)) <= 1e-6


def test_wave_zero_mode_grows_quadratically():
    # uniform static source: the k = 0 mode obeys an exact discrete quadratic
    g = make_grid(1, [32], [2 * np.pi])
    j0 = 2.0
    j = FourCurrent(g, np.zeros(g.shape), (np.full(g.shape, j0), 0.0, 0.0))
    params = EvolutionParams(dt=0.05, steps=200)
    zeros = np.zeros(g.shape)
    state = wave_initial_state(g, (zeros,) * 4, (zeros,) * 4, NAT, params, j=j)
    trace = run_wave(state, j, NAT, params)
    t = trace.snapshots[-1].time
    assert t == pytest.approx(10.0)
    expected = NAT.mu0 * j0 * NAT.c**2 * t**2 / 2.0
    assert linf(trace.snapshots[-1].curr[1] - expected) <= 1e-9


def test_wave_zero_data_stays_zero():
    g = make_grid(1, [32], [2 * np.pi])
    params = EvolutionParams(dt=0.01, steps=50)
    zeros = np.zeros(g.shape)
    state = wave_initial_state(g, (zeros,) * 4, (zeros,) * 4, NAT, params)
    trace = run_wave(state, None, NAT, params)
    for comp in trace.snapshots[-1].curr:
        assert linf(comp) == 0.0


def test_wave_cfl_violation_raises():
    g = make_grid(1, [64], [2 * np.pi])
    zeros = np.zeros(g.shape)
    params = EvolutionParams(dt=0.2, steps=1)  # c*dt > 0.5*spacing
    with pytest.raises(ValueError, match="CFL"):
        wave_initial_state(g, (zeros,) * 4, (zeros,) * 4, NAT, params)


def test_wave_energy_stays_bounded():
    g = make_grid(1, [64], [2 * np.pi])
    x = g.axis_coordinates(0)
    params = EvolutionParams(dt=0.02, steps=3000)
    zeros = np.zeros(g.shape)
    state = wave_initial_state(
        g, (zeros, np.sin(3.0 * x), zeros, zeros), (zeros,) * 4, NAT, params
    )
    peak = 0.0
    for _ in range(params.steps):
        state = dalembert_step(state, None, NAT, params)
        peak = max(peak, float(np.max(np.abs(state.curr[1]))))
    assert peak <= 1.001


# ---------------------------------------------------------------------------
# Taylor evolution matrix

def test_gps_matrix_entries():
    m = gps_matrix(4, 2.0).entries
    expected = np.array(
        [
            [1.0, 2.0, 2.0, 4.0 / 3.0],
            [0.0, 1.0, 2.0, 2.0],
            [0.0, 0.0, 1.0, 2.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    assert np.array_equal(m, expected)


@pytest.mark.parametrize("order", range(1, 13))
def test_gps_determinant_exactly_one(order):
    for t in (0.0, 0.3, -2.5, 17.0):
        assert gps_matrix(order, t).det == 1.0


def test_gps_group_law():
    rng = np.random.default_rng(7)
    for _ in range(20):
        t1, t2 = rng.uniform(-2, 2, size=2)
        prod = gps_matrix(8, t1).entries @ gps_matrix(8, t2).entries
        assert linf(prod - gps_matrix(8, t1 + t2).entries) <= 1e-12


def test_gps_uniform_motion():
    out = gps_apply(gps_matrix(2, 3.0), [1.5, -0.5])
    assert np.array_equal(out, [1.5 - 1.5, -0.5])


def test_gps_quadratic_motion_exact_for_dyadic_times():
    m = gps_matrix(3, 0.5)
    out = gps_apply(m, [1.0, 2.0, 4.0])
    assert np.array_equal(out, [1.0 + 2.0 * 0.5 + 4.0 * 0.125, 2.0 + 4.0 * 0.5, 4.0])


def test_gps_apply_broadcasts_over_vectors():
    state = np.array([[0.0, 0.0, 1.0], [1.0, 2.0, 0.0]])
    out = gps_apply(gps_matrix(2, 2.0), state)
    assert np.array_equal(out[0], [2.0, 4.0, 1.0])


def test_gps_rejects_bad_order_and_shape():
    with pytest.raises(ValueError):
        gps_matrix(0, 1.0)
    with pytest.raises(ValueError):
        gps_apply(gps_matrix(3, 1.0), [1.0, 2.0])
