import numpy as np
import pytest

from fisherq.errors import ConfigError, DomainError
from fisherq.evolution import PropagatorConfig, normalize, propagate
from fisherq.expr import Expression
from fisherq.gauge import (
    Constants,
    GaugeFunction,
    GaugePotential,
    arunsalam_gould_dress,
    field_strengths,
    field_strengths_at,
    gauge_transform,
    grid_bounds,
    phase_line_integral,
    transformed_potential,
)
from fisherq.grid import make_grid
from fisherq.hamiltonian import HamiltonianSpec


def test_expression_language():
    ex = Expression("0.5*x^2 + sin(pi*t)")
    assert ex.variables == {"x", "t"}
    assert ex(x=np.array([2.0]), t=0.5)[0] == pytest.approx(3.0)
    for bad in ("__import__('os')", "x.y", "x[0]", "lambda: 1", ""):
        with pytest.raises(ConfigError):
            Expression(bad)


def test_zero_potential_has_no_fields():
    g = make_grid((8, 8, 8), 4.0)
    f = field_strengths(GaugePotential(), g, 0.0)
    assert all(np.max(np.abs(c)) == 0 for c in f.e_field + f.b_field)


def test_symmetric_gauge_gives_uniform_field():
    g = make_grid((8, 8, 8), 4.0)
    pot = GaugePotential.from_expressions(ax="-0.5*1.7*y", ay="0.5*1.7*x")
    f = field_strengths(pot, g, 0.0)
    assert np.allclose(f.b_field[2], 1.7, atol=1e-9)
    assert np.allclose(f.b_field[0], 0.0, atol=1e-9)
    assert all(np.max(np.abs(c)) < 1e-12 for c in f.e_field)
    assert f.div_b < 1e-8


def test_linear_scalar_potential_gives_uniform_e():
    g = make_grid((8, 8, 8), 4.0)
    f = field_strengths(GaugePotential.from_expressions(phi="-0.3*x"), g, 0.0)
    assert np.allclose(f.e_field[0], 0.3, atol=1e-10)
    assert np.allclose(f.e_field[1], 0.0, atol=1e-12)


def test_faraday_law_for_time_dependent_potential():
    pot = GaugePotential.from_expressions(phi="0.2*x*y", ax="sin(t)*y^2", ay="cos(t)*x*z", az="t*x*y")
    pts = [np.array([0.3, -0.4]), np.array([0.1, 0.7]), np.array([-0.5, 0.2])]
    h = 1e-3

    def fields(x, y, z, t):
        return field_strengths_at(pot, x, y, z, t)

    t = 0.4
    f0 = fields(*pts, t)
    e_at = lambda dx, dy, dz: fields(pts[0] + dx, pts[1] + dy, pts[2] + dz, t).e_field  # noqa: E731
    d = lambda k, j: (e_at(*(h * (i == j) for i in range(3)))[k] - e_at(*(-h * (i == j) for i in range(3)))[k]) / (2 * h)  # noqa: E731
    curl_e = (d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1))
    db_dt = [(a - b) / (2 * h) for a, b in zip(fields(*pts, t + h).b_field, fields(*pts, t - h).b_field)]
    for k in range(3):
        assert np.max(np.abs(curl_e[k] + db_dt[k])) < 1e-6
    assert f0.div_b < 1e-6


def test_identity_and_constant_gauge_functions():
    grid = make_grid(16, 4.0)
    pot = GaugePotential.from_expressions(phi="x", ax="0.3")
    s = np.linspace(0, 1, 16)
    g2, s2 = gauge_transform(pot, s, GaugeFunction("0"), grid, 0.0)
    x = grid.axis_coords(0)
    zero = np.zeros_like(x)
    assert np.array_equal(s2, s)
    assert np.allclose(g2.scalar(x, zero, zero, 0.0), x)
    g3, s3 = gauge_transform(pot, s, GaugeFunction("2*t"), grid, 1.5)
    assert np.allclose(s3, s + 3.0)
    assert np.allclose(g3.vector(x, zero, zero, 0.0)[0], 0.3)
    assert np.allclose(g3.scalar(x, zero, zero, 0.0), x - 2.0)


def test_random_gauge_function_leaves_fields_unchanged():
    grid = make_grid((10, 10, 10), 6.0)
    pot = GaugePotential.from_expressions(phi="0.1*x*y", ax="-0.5*z", ay="0.2*x^2", az="sin(y)")
    chi = GaugeFunction("0.3*sin(x+0.2*t) + 0.2*cos(2*y - t) + 0.1*sin(x*z)")
    before = field_strengths(pot, grid, 0.3)
    after = field_strengths(transformed_potential(pot, chi), grid, 0.3)
    scale = np.sqrt(sum(np.linalg.norm(np.asarray(a)) ** 2 for a in before.e_field + before.b_field))
    for a, b in zip(before.e_field + before.b_field, after.e_field + after.b_field):
        assert np.linalg.norm(np.asarray(a) - np.asarray(b)) <= 1e-10 * scale


def test_stokes_phase_around_rectangle():
    b0, c = 1.3, Constants(hbar=0.7, e=2.0, c=3.0)
    pot = GaugePotential.from_expressions(ax=f"-0.5*{b0}*y", ay=f"0.5*{b0}*x")
    corners = [(-1, -0.5, 0), (2, -0.5, 0), (2, 1, 0), (-1, 1, 0), (-1, -0.5, 0)]
    phase = phase_line_integral(pot, [(p, 0.0) for p in corners], c)
    assert phase == pytest.approx(c.e / (c.hbar * c.c) * b0 * 3.0 * 1.5, rel=1e-8)


def test_time_leg_and_zero_potential():
    assert phase_line_integral(GaugePotential(), [((0, 0, 0), 0.0), ((1, 2, 3), 4.0)]) == 0.0
    pot = GaugePotential.from_expressions(phi="0.25*x")
    phase = phase_line_integral(pot, [((2.0, 0, 0), 0.0), ((2.0, 0, 0), 3.0)])
    assert phase == pytest.approx(-0.5 * 3.0)


def test_flux_line_loop_is_topological():
    flux = 0.9
    pot = GaugePotential.from_expressions(
        ax=f"-({flux}/(2*pi))*y/(x^2+y^2)", ay=f"({flux}/(2*pi))*x/(x^2+y^2)"
    )
    square = [(-1, -1, 0), (1, -1, 0), (1, 1, 0), (-1, 1, 0), (-1, -1, 0)]
    phase = phase_line_integral(pot, [(p, 0.0) for p in square])
    assert phase == pytest.approx(flux, rel=1e-8)
    outside = [(2, -1, 0), (4, -1, 0), (4, 1, 0), (2, 1, 0), (2, -1, 0)]
    assert abs(phase_line_integral(pot, [(p, 0.0) for p in outside])) < 1e-10


def test_path_outside_domain():
    grid = make_grid((8, 8), 2.0)
    with pytest.raises(DomainError):
        phase_line_integral(GaugePotential(), [((0, 0, 0), 0), ((3, 0, 0), 0)], bounds=grid_bounds(grid))


def test_dressing_identity_inverse_and_wavenumber_shift():
    grid = make_grid(64, 8.0)
    x = grid.axis_coords(0)
    rng = np.random.default_rng(0)
    psi = rng.normal(size=(2, 64)) + 1j * rng.normal(size=(2, 64))
    assert np.array_equal(arunsalam_gould_dress(psi, GaugePotential(), grid), psi)
    pot = GaugePotential.from_expressions(ax="0.4*sin(x) + 0.1")
    back = arunsalam_gould_dress(arunsalam_gould_dress(psi, pot, grid), pot, grid, inverse=True)
    assert np.max(np.abs(back - psi)) < 1e-13
    c = Constants(hbar=0.5, e=2.0, c=4.0)
    uniform = GaugePotential.from_expressions(ax="0.3")
    wave = np.exp(1j * x)
    dressed = arunsalam_gould_dress(wave, uniform, grid, constants=c, inverse=True)
    k = np.gradient(np.unwrap(np.angle(dressed)), x)
    assert np.allclose(k, 1.0 + c.e * 0.3 / (c.hbar * c.c), atol=1e-10)


def test_gauge_covariance_of_dynamics():
    """Evolve then transform equals transform then evolve."""
    grid = make_grid(128, 16.0)
    x = grid.axis_coords(0)
    zero = np.zeros_like(x)
    pot = GaugePotential.from_expressions(ax="0.2*sin(2*pi*x/16)")
    chi = GaugeFunction("0.3*sin(2*pi*x/16 + 0.5) + 0.1*t")
    h = HamiltonianSpec(grid, gauge=pot, potential="0.5*x^2")
    h2 = HamiltonianSpec(grid, gauge=transformed_potential(pot, chi), potential="0.5*x^2")
    psi = normalize(np.exp(-(x - 1) ** 2 + 0.5j * x), grid)
    cfg = PropagatorConfig(dt=0.0025)
    steps = 200
    t = steps * cfg.dt
    final = propagate(psi, h, cfg, steps, every=steps)[1][-1] * np.exp(1j * chi(x, zero, zero, t))
    moved = propagate(psi * np.exp(1j * chi(x, zero, zero, 0.0)), h2, cfg, steps, every=steps)[1][-1]
    assert np.linalg.norm(final - moved) / np.linalg.norm(final) < 1e-6


def test_constants_validation():
    with pytest.raises(ConfigError):
        Constants(hbar=0.0)
    assert Constants().bohr_magneton == -0.5
