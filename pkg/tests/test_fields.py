"""Field containers, density/phase extraction, node masking, snapshot I/O."""
import numpy as np
import pytest

from qvlab.fields import (
    BispinorField,
    ComplexScalarField,
    NodeError,
    SnapshotError,
    SpinorField,
    VectorField,
    density,
    node_mask,
    phase,
    phase_gradient,
    read_snapshot,
    write_snapshot,
)
from qvlab.lattice import make_grid, spectral_gradient
from util import linf, random_band_limited


@pytest.fixture
def grid1d():
    return make_grid(1, [64], [2 * np.pi])


def test_density_uniform_scalar(grid1d):
    psi = ComplexScalarField(grid1d, np.full(grid1d.shape, 1.0 + 0j))
    assert linf(density(psi) - 1.0) == 0.0


def test_density_spinor_sums_components(grid1d):
    up = np.full(grid1d.shape, 1 / np.sqrt(2), dtype=complex)
    psi = SpinorField(grid1d, np.stack([up, 1j * up]))
    assert linf(density(psi) - 1.0) <= 1e-15


def test_density_bispinor_basis_vector(grid1d):
    vals = np.zeros((4, *grid1d.shape), dtype=complex)
    vals[0] = 1.0
    assert linf(density(BispinorField(grid1d, vals)) - 1.0) == 0.0


def test_density_scales_quadratically(grid1d):
    rng = np.random.default_rng(7)
    v = random_band_limited(grid1d, rng, complex_valued=True)
    f1 = density(ComplexScalarField(grid1d, v))
    f2 = density(ComplexScalarField(grid1d, (2 - 1j) * v))
    assert linf(f2 - 5.0 * f1) <= 1e-12


def test_phase_plane_wave_gradient_exact(grid1d):
    x = grid1d.axis_coordinates(0)
    k = 3.0  # on-grid mode of the 2*pi box
    psi = ComplexScalarField(grid1d, np.exp(1j * k * x))
    (dphi,), mask = phase_gradient(psi)
    assert not mask.any()
    assert linf(dphi - k) <= 1e-12
    phi, _ = phase(psi)
    slope = np.diff(phi) / np.diff(x)
    assert linf(slope - k) <= 1e-10


def test_phase_of_positive_real_field_is_zero(grid1d):
    x = grid1d.axis_coordinates(0)
    psi = ComplexScalarField(grid1d, (2.0 + np.cos(x)).astype(complex))
    phi, mask = phase(psi)
    assert not mask.any()
    assert linf(phi) == 0.0


def test_phase_masked_envelope_keeps_slope(grid1d):
    g = make_grid(1, [256], [40.0])
    x = g.axis_coordinates(0)
    envelope = np.exp(-((x - 20.0) ** 2))
    psi = ComplexScalarField(g, envelope * np.exp(3j * x))
    phi, mask = phase(psi)
    assert mask.any() and not mask.all()
    inner = ~mask
    slope = np.diff(phi[inner]) / np.diff(x[inner])
    assert linf(slope - 3.0) <= 1e-6
    (dphi,), _ = phase_gradient(psi)
    assert linf(dphi[inner] - 3.0) <= 1e-7


def test_phase_strict_raises_with_indices():
    g = make_grid(1, [64], [40.0])
    x = g.axis_coordinates(0)
    psi = ComplexScalarField(g, np.exp(-((x - 20.0) ** 2)).astype(complex))
    with pytest.raises(NodeError) as err:
        phase(psi, strict=True)
    assert err.value.indices is not None and len(err.value.indices) > 0


def test_phase_all_masked_raises(grid1d):
    psi = ComplexScalarField(grid1d, np.zeros(grid1d.shape, dtype=complex))
    with pytest.raises(NodeError):
        phase(psi)
    with pytest.raises(NodeError):
        phase_gradient(psi)


def test_node_mask_relative_threshold(grid1d):
    f = np.ones(grid1d.shape)
    f[3] = 1e-9
    mask = node_mask(f)
    assert mask[3] and mask.sum() == 1


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_paramagnetic_identity_branch_free(grid1d, seed):
    # i*alpha*(conj(psi)*dpsi - psi*conj(dpsi)) == -2*alpha*f*grad(phi)
    rng = np.random.default_rng(seed)
    alpha = -0.5
    v = random_band_limited(grid1d, rng, complex_valued=True)
    v = v + 1.5  # keep the field away from nodes
    psi = ComplexScalarField(grid1d, v)
    (dv,) = spectral_gradient(v, grid1d)
    lhs = 1j * alpha * (np.conj(v) * dv - v * np.conj(dv))
    (dphi,), mask = phase_gradient(psi)
    rhs = -2 * alpha * density(psi) * dphi
    assert not mask.any()
    assert linf(lhs - rhs) <= 1e-9
    assert linf(lhs.imag) <= 1e-12


@pytest.mark.parametrize("kind", ["scalar", "spinor", "bispinor", "vector"])
def test_snapshot_round_trip_bit_exact(tmp_path, kind):
    rng = np.random.default_rng(42)
    g = make_grid(2, [8, 12], [1.0, 2.5])
    if kind == "scalar":
        field = ComplexScalarField(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    elif kind == "spinor":
        field = SpinorField(g, rng.standard_normal((2, *g.shape)) + 1j * rng.standard_normal((2, *g.shape)))
    elif kind == "bispinor":
        field = BispinorField(g, rng.standard_normal((4, *g.shape)) + 1j * rng.standard_normal((4, *g.shape)))
    else:
        field = VectorField(g, tuple(rng.standard_normal(g.shape) for _ in range(2)))
    path = tmp_path / f"{kind}.qfs"
    write_snapshot(field, path)
    back = read_snapshot(path)
    assert type(back) is type(field)
    assert back.grid == g
    if kind == "vector":
        for a, b in zip(back.components, field.components):
            assert np.array_equal(a, b)
    else:
        assert np.array_equal(back.values, field.values)


def test_snapshot_rewrite_is_deterministic(tmp_path):
    g = make_grid(1, [16], [1.0])
    field = ComplexScalarField(g, np.exp(2j * np.pi * np.arange(16) / 16))
    p1, p2 = tmp_path / "a.qfs", tmp_path / "b.qfs"
    write_snapshot(field, p1)
    write_snapshot(field, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_snapshot_truncated_header(tmp_path):
    p = tmp_path / "bad.qfs"
    p.write_bytes(b"QVLABQFS\x01")
    with pytest.raises(SnapshotError, match="truncated"):
        read_snapshot(p)


def test_snapshot_truncated_payload(tmp_path):
    g = make_grid(1, [16], [1.0])
    field = ComplexScalarField(g, np.ones(16, dtype=complex))
    p = tmp_path / "cut.qfs"
    write_snapshot(field, p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(SnapshotError, match="payload"):
        read_snapshot(p)


def test_snapshot_bad_magic(tmp_path):
    g = make_grid(1, [16], [1.0])
    field = ComplexScalarField(g, np.ones(16, dtype=complex))
    p = tmp_path / "magic.qfs"
    write_snapshot(field, p)
    raw = bytearray(p.read_bytes())
    raw[:8] = b"NOTAQFS!"
    p.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError, match="magic"):
        read_snapshot(p)


def test_snapshot_wrong_component_count(tmp_path):
    # a complex payload with 3 components matches no field kind
    import struct

    header = struct.Struct("<8sII3I3dII4x").pack(
        b"QVLABQFS", 1, 1, 16, 0, 0, 1.0, 0.0, 0.0, 3, 16
    )
    payload = np.zeros(16 * 3, dtype="<c16").tobytes()
    p = tmp_path / "odd.qfs"
    p.write_bytes(header + payload)
    with pytest.raises(SnapshotError, match="components"):
        read_snapshot(p)


def test_vector_field_component_count_enforced():
    g = make_grid(2, [8, 8], [1.0, 1.0])
    with pytest.raises(ValueError):
        VectorField(g, (np.zeros(g.shape),))


def test_field_rejects_nonfinite(grid1d):
    vals = np.ones(grid1d.shape, dtype=complex)
    vals[0] = np.nan
    with pytest.raises(ValueError):
        ComplexScalarField(grid1d, vals)
