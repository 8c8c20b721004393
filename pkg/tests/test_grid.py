import numpy as np
import pytest

from fisherq.errors import ConfigError, InputError
from fisherq.grid import (
    ParticleAxes,
    absorbing_mask,
    differentiate,
    integrate,
    laplacian,
    make_grid,
    spectral_energy,
)
from fisherq.snapshot import HEADER, decode, encode, read_snapshot, write_snapshot


def test_spacing_and_size():
    assert make_grid(256, 20.0).spacing == (0.078125,)
    assert make_grid((32, 32, 32), 1.0).size == 32768


@pytest.mark.parametrize("points, lengths", [(0, 1.0), ((8, -1), (1.0, 1.0)), (8, 0.0), ((4, 4, 4, 4), 1.0)])
def test_bad_grids_rejected(points, lengths):
    with pytest.raises(ConfigError):
        make_grid(points, lengths)


def test_single_mode_derivative_is_exact():
    g = make_grid(64, 10.0)
    x = g.axis_coords(0)
    k = 2 * np.pi / 10.0
    assert np.max(np.abs(differentiate(np.sin(k * x), g) - k * np.cos(k * x))) < 1e-13


def test_constant_has_zero_derivative():
    g = make_grid((16, 12), (3.0, 2.0))
    for scheme in ("spectral", "central-4th"):
        for order in (1, 2):
            assert np.max(np.abs(differentiate(np.full(g.shape, 2.5), g, 1, order, scheme))) < 1e-12


def test_gaussian_derivative_matches_analytic():
    g = make_grid(256, 40.0)
    x = g.axis_coords(0)
    sigma = 1.3
    f = np.exp(-x * x / (2 * sigma ** 2))
    assert np.max(np.abs(differentiate(f, g) + x / sigma ** 2 * f)) < 1e-10


def test_central_fourth_converges_at_fourth_order():
    errs = []
    for n in (64, 128):
        g = make_grid(n, 2 * np.pi, boundary="padded-absorbing")
        x = g.axis_coords(0)
        d = differentiate(np.sin(x), g)
        errs.append(np.max(np.abs(d - np.cos(x))[4:-4]))
    assert 14 < errs[0] / errs[1] < 18


def test_spectral_needs_periodic_grid():
    g = make_grid(32, 1.0, boundary="padded-absorbing")
    with pytest.raises(ConfigError):
        differentiate(np.zeros(32), g, scheme="spectral")


def test_repeated_first_derivative_equals_second():
    g = make_grid(128, 2 * np.pi)
    x = g.axis_coords(0)
    f = np.exp(np.cos(x)) + np.sin(3 * x)
    twice = differentiate(differentiate(f, g), g)
    direct = differentiate(f, g, order=2)
    assert np.linalg.norm(twice - direct) / np.linalg.norm(direct) < 1e-9


def test_quadrature_rules():
    g = make_grid((20, 30), (2.0, 3.0))
    assert integrate(np.ones(g.shape), g) == pytest.approx(6.0, rel=1e-14)
    g1 = make_grid(200, 40.0)
    x = g1.axis_coords(0)
    sigma = 8 * g1.spacing[0]
    rho = np.exp(-x * x / (2 * sigma ** 2)) / np.sqrt(2 * np.pi * sigma ** 2)
    assert abs(integrate(rho, g1) - 1.0) < 1e-12
    assert abs(integrate(np.sin(2 * np.pi * x / 40.0), g1)) < 1e-12


def test_divergence_theorem_and_parseval():
    g = make_grid((32, 24), (5.0, 4.0))
    x, y = g.mesh()
    f = np.exp(np.sin(2 * np.pi * x / 5.0) * np.cos(2 * np.pi * y / 4.0))
    assert abs(integrate(differentiate(f, g, 0), g)) < 1e-12
    z = f * np.exp(1j * x)
    assert spectral_energy(z, g) == pytest.approx(integrate(np.abs(z) ** 2, g), rel=1e-10)


def test_laplacian_of_plane_wave():
    g = make_grid((16, 16), (1.0, 1.0))
    x, y = g.mesh()
    f = np.exp(2j * np.pi * (x + 2 * y))
    assert np.max(np.abs(laplacian(f, g) + (2 * np.pi) ** 2 * 5 * f)) < 1e-9


def test_absorbing_mask_shape():
    g = make_grid(100, 10.0, boundary="padded-absorbing")
    mask = absorbing_mask(g, 1.0)
    assert mask[0] == pytest.approx(0.0, abs=1e-12)
    assert mask[50] == 1.0
    assert np.all((mask >= 0) & (mask <= 1))


def test_particle_axes_layout():
    axes = ParticleAxes(2, ("x",))
    assert axes.coordinate_names() == ["x1", "x2"]
    assert axes.axis(1, "x") == 1
    assert axes.axis(0, "y") is None
    with pytest.raises(ConfigError):
        axes.check(make_grid(16, 1.0))


@pytest.mark.parametrize("kind", ["real", "complex", "spinor"])
def test_snapshot_round_trip(tmp_path, kind):
    rng = np.random.default_rng(1)
    shape = (5, 7)
    values = rng.normal(size=shape)
    if kind != "real":
        values = values + 1j * rng.normal(size=shape)
    if kind == "spinor":
        values = np.stack([values, 2 * values])
    path = tmp_path / "f.fqf"
    write_snapshot(path, values, 2)
    got_kind, got = read_snapshot(path)
    assert got_kind == kind
    assert np.array_equal(got, values)


def test_snapshot_header_layout():
    data = encode(np.zeros((3, 4)), 2)
    assert len(data) == HEADER.size + 12 * 8 == 32 + 96
    assert data[:4] == b"FQF1"
    assert data[20] == 0
    assert int.from_bytes(data[16:20], "little") == 0


def test_snapshot_rejects_corruption():
    data = encode(np.zeros(4), 1)
    with pytest.raises(InputError):
        decode(b"XXXX" + data[4:])
    with pytest.raises(InputError):
        decode(data[:-8])
    with pytest.raises(InputError):
        decode(data[:10])
