import warnings

import numpy as np
import pytest

from fisherq.errors import UnwrapWarning
from fisherq.evolution import PropagatorConfig, normalize, step
from fisherq.gauge import GaugePotential
from fisherq.grid import integrate, make_grid
from fisherq.hamiltonian import HamiltonianSpec
from fisherq.madelung import (
    HydroState,
    SpinHydroState,
    continuity_residual,
    hj_residual,
    hydro_to_psi,
    internal_potentials,
    psi_to_hydro,
    quantum_terms,
    spin_evolution_residual,
    spin_vector,
    takabayasi_join,
    takabayasi_split,
    velocity_field,
    zero_mean_force,
)

TWO_PI = 2 * np.pi


def periodic_plane(points=48):
    grid = make_grid((points, points), (TWO_PI, TWO_PI))
    x, y = np.meshgrid(grid.axis_coords(0), grid.axis_coords(1), indexing="ij")
    return grid, x, y


def smooth_spin_state(grid, x, y):
    rho = np.exp(0.3 * np.cos(x) + 0.2 * np.sin(2 * y))
    rho /= integrate(rho, grid)
    theta = 1.5 + 0.6 * np.sin(x + y)
    phi = 0.7 * np.cos(x) + 0.4 * np.sin(y)
    return SpinHydroState(rho, 0.3 * np.sin(x - y), theta, phi)


def same_up_to_phase(a, b):
    k = np.argmax(np.abs(b))
    phase = a.flat[k] / b.flat[k]
    phase /= abs(phase)
    return np.max(np.abs(a - phase * b))


# ---------------------------------------------------------------- scalar maps

def test_uniform_density_gives_constant_psi():
    rho = np.full(32, 0.25)
    psi = hydro_to_psi(HydroState(rho, np.zeros(32)))
    assert np.allclose(psi, 0.5)


def test_action_shift_by_planck_period_is_invisible():
    grid = make_grid(32, 4.0)
    x = grid.axis_coords(0)
    hs = HydroState(np.exp(-x * x), 0.3 * x)
    shifted = HydroState(hs.rho, hs.s + TWO_PI * 0.7)
    assert np.allclose(hydro_to_psi(hs, 0.7), hydro_to_psi(shifted, 0.7), atol=1e-14)


def test_boosted_gaussian_round_trip():
    grid = make_grid(128, 20.0)
    x = grid.axis_coords(0)
    rho = np.exp(-x * x / 2)
    rho /= integrate(rho, grid)
    hs = HydroState(rho, 1.3 * x)
    back, report = psi_to_hydro(hydro_to_psi(hs))
    assert np.max(np.abs(back.rho - rho)) < 1e-14
    ds = back.s - hs.s
    assert np.ptp(ds[rho > 1e-10 * rho.max()]) < 1e-10
    assert report.count == 0


def test_real_positive_psi_has_zero_action():
    x = make_grid(64, 10.0).axis_coords(0)
    hs, report = psi_to_hydro(np.exp(-x * x))
    assert np.all(hs.s == 0.0)
    assert report.count == 0


def test_plane_wave_action_is_linear():
    grid, x, y = periodic_plane(32)
    hbar = 0.5
    psi = np.exp(1j * (2 * x - 3 * y)) / TWO_PI
    hs, report = psi_to_hydro(psi, hbar)
    ds = hs.s - hbar * (2 * x - 3 * y)
    assert np.ptp(ds) < 1e-10
    assert report.count == 0


def test_vortex_is_flagged_once():
    grid = make_grid((64, 64), (8.0, 8.0))
    x, y = np.meshgrid(grid.axis_coords(0), grid.axis_coords(1), indexing="ij")
    # centre the core inside a plaquette
    cx = cy = 0.5 * grid.spacing[0]
    psi = normalize(((x - cx) + 1j * (y - cy)) * np.exp(-(x * x + y * y) / 2), grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnwrapWarning)
        _, report = psi_to_hydro(psi, hbar=0.8)
    assert report.count == 1
    (vortex,) = report.plaquettes
    assert vortex["winding"] == 1
    assert vortex["circulation"] == pytest.approx(TWO_PI * 0.8)


def test_unwrap_through_node_warns_with_region():
    x = make_grid(128, 20.0).axis_coords(0)
    psi = np.exp(-(x - 3) ** 2) + np.exp(-(x + 3) ** 2) * np.exp(2j * x)
    with pytest.warns(UnwrapWarning):
        _, report = psi_to_hydro(psi)
    assert report.unwrap_mask.any()
    assert not report.unwrap_mask[np.argmin(np.abs(x - 3))]


# ---------------------------------------------------------------- spinor maps

def test_pure_upper_spinor_has_zero_polar_angle():
    x = make_grid(64, 10.0).axis_coords(0)
    f = np.exp(-x * x) * np.exp(0.4j * x)
    shs = takabayasi_split(np.stack([f, np.zeros_like(f)]))
    assert shs.degenerate
    assert np.all(shs.theta == 0.0)
    assert np.allclose(shs.rho, np.abs(f) ** 2)


def test_equal_weight_spinor_with_i_factor():
    x = make_grid(64, 10.0).axis_coords(0)
    f = np.exp(-x * x)
    shs = takabayasi_split(np.stack([f, 1j * f]) / np.sqrt(2))
    live = shs.rho > 1e-10 * shs.rho.max()
    assert np.max(np.abs(shs.theta[live] - np.pi / 2)) < 1e-12
    assert np.max(np.abs(shs.phi_angle[live])) < 1e-12


def test_split_join_round_trip_random_spinor():
    grid, x, y = periodic_plane(32)
    rng = np.random.default_rng(4)
    comps = []
    for _ in range(2):
        a = rng.normal(size=4)
        comps.append(np.exp(0.4 * a[0] * np.cos(x) + 0.3 * a[1] * np.sin(y) + 1j * (a[2] * np.sin(x) + a[3] * np.cos(x + y))))
    psi = np.stack(comps)
    psi /= np.sqrt(integrate(np.sum(np.abs(psi) ** 2, axis=0), grid))
    back = takabayasi_join(takabayasi_split(psi, 0.6), 0.6)
    assert same_up_to_phase(back, psi) < 1e-10


def test_join_limits_and_normalization():
    grid, x, y = periodic_plane(32)
    rho = np.full(x.shape, 1.0 / TWO_PI ** 2)
    up = takabayasi_join(SpinHydroState(rho, 0 * x, 0 * x, 0.3 + 0 * x))
    assert np.all(up[1] == 0)
    down = takabayasi_join(SpinHydroState(rho, 0 * x, np.pi + 0 * x, 0 * x))
    assert np.max(np.abs(up[0])) == pytest.approx(np.sqrt(rho[0, 0]))
    assert np.max(np.abs(np.abs(down[1]) - np.sqrt(rho))) < 1e-15
    assert np.max(np.abs(down[0])) < 1e-15
    psi = takabayasi_join(smooth_spin_state(grid, x, y))
    assert integrate(np.sum(np.abs(psi) ** 2, axis=0), grid) == pytest.approx(1.0, abs=1e-12)


def test_spin_vector_length_is_half_hbar():
    grid, x, y = periodic_plane(32)
    s = spin_vector(smooth_spin_state(grid, x, y), hbar=0.3)
    assert np.max(np.abs(np.sqrt(sum(c * c for c in s)) - 0.15)) < 1e-12


# ---------------------------------------------------------------- internal potentials

def test_internal_potentials_vanish_for_constant_azimuth():
    grid, x, y = periodic_plane(32)
    h = HamiltonianSpec(grid)
    shs = smooth_spin_state(grid, x, y)
    shs.phi_angle = np.full(x.shape, 0.9)
    pot = internal_potentials(shs, h, route="fields", slices=(shs, shs), dt=0.1)
    assert all(np.max(np.abs(a)) < 1e-12 for a in pot.a_s)
    assert np.max(np.abs(pot.phi_s)) < 1e-12


def test_internal_vector_potential_vanishes_on_equator():
    grid, x, y = periodic_plane(32)
    h = HamiltonianSpec(grid)
    shs = smooth_spin_state(grid, x, y)
    shs.theta = np.full(x.shape, np.pi / 2)
    pot = internal_potentials(shs, h, route="fields")
    assert all(np.max(np.abs(a)) < 1e-12 for a in pot.a_s)


def test_internal_vector_potential_for_azimuth_ramp():
    grid = make_grid(64, TWO_PI)
    x = grid.axis_coords(0)
    k = 3
    h = HamiltonianSpec(grid)
    shs = SpinHydroState(np.full(64, 1 / TWO_PI), 0 * x, np.zeros(64), k * x)
    pot = internal_potentials(shs, h, route="fields")
    c = h.constants
    expected = -c.hbar * c.c * k / (2 * c.e)
    assert np.max(np.abs(pot.a_s[0] - expected)) < 1e-10


# ---------------------------------------------------------------- quantum terms

def test_quantum_terms_vanish_for_uniform_state():
    grid, x, y = periodic_plane(32)
    rho = np.full(x.shape, 1.0 / TWO_PI ** 2)
    q = quantum_terms(SpinHydroState(rho, 0 * x, 1.0 + 0 * x, 0.5 + 0 * x), HamiltonianSpec(grid))
    for f in (q.l0, q.g1, q.g2, q.g3):
        assert np.max(np.abs(f)) < 1e-12


def test_gaussian_quantum_potential_matches_closed_form():
    grid = make_grid((256,), (30.0,))
    x = grid.axis_coords(0)
    sigma = 1.3
    rho = np.exp(-x * x / (2 * sigma ** 2))
    rho /= integrate(rho, grid)
    h = HamiltonianSpec(grid)
    # sqrt(rho) ~ exp(-x^2/4 sigma^2) so Lap sqrt/sqrt = x^2/4 sigma^4 - 1/2 sigma^2
    expected = 0.5 * (x * x / (4 * sigma ** 4) - 1 / (2 * sigma ** 2))
    for state in (HydroState(rho, 0.4 * x), SpinHydroState(rho, 0.4 * x, np.full(256, 0.8), np.full(256, 0.2))):
        for route in ("state", "fields"):
            q = quantum_terms(state, h, route)
            core = np.abs(x) < 8
            assert np.max(np.abs(q.l0 - expected)[core]) < 1e-8


@pytest.mark.parametrize("route", ["state", "fields"])
def test_quantum_term_constraints(route):
    grid, x, y = periodic_plane()
    shs = smooth_spin_state(grid, x, y)
    q = quantum_terms(shs, HamiltonianSpec(grid), route)
    assert q.coverage == 1.0
    scale = max(np.max(np.abs(g)) for g in (q.g1, q.g2, q.g3))
    assert scale > 1e-2
    for g in (q.g1, q.g2, q.g3):
        assert abs(integrate(shs.rho * g, grid)) < 1e-6 * scale
    s = spin_vector(shs)
    dot = q.g1 * s[0] + q.g2 * s[1] + q.g3 * s[2]
    assert np.max(np.abs(dot)) < 1e-8 * scale * 0.5


def test_scalar_quantum_potential_exerts_no_net_force():
    grid, x, y = periodic_plane()
    rho = np.exp(0.5 * np.cos(x) + 0.4 * np.sin(2 * y) + 0.3 * np.cos(x - y))
    rho /= integrate(rho, grid)
    h = HamiltonianSpec(grid)
    q = quantum_terms(HydroState(rho, 0 * x), h)
    scale = integrate(np.abs(q.l0) * rho, grid)
    for f in zero_mean_force(HydroState(rho, 0 * x), h):
        assert abs(f) < 1e-10 * scale


# ---------------------------------------------------------------- residuals

def harmonic_slices(dt, hbar=1.0, corrupt=False):
    grid = make_grid(256, 20.0)
    x = grid.axis_coords(0)
    h = HamiltonianSpec(grid, potential="0.5*x^2")
    psi = normalize(np.exp(-(x - 1.5) ** 2 / 2 + 0.7j * x), grid)
    cfg = PropagatorConfig(dt=dt)
    states = [psi, step(psi, h, cfg, 0.0)]
    states.append(step(states[1], h, cfg, dt))
    slices = [psi_to_hydro(p)[0] for p in states]
    if corrupt:
        r = slices[1].rho
        slices[1] = HydroState(r * r / integrate(r * r, grid), slices[1].s)
    return slices, h


def test_stationary_state_residuals_vanish():
    grid = make_grid(128, 20.0)
    x = grid.axis_coords(0)
    h = HamiltonianSpec(grid, potential="0.5*x^2")
    rho = np.exp(-x * x)
    rho /= integrate(rho, grid)
    dt = 0.01
    slices = [HydroState(rho, np.full(128, -0.5 * t)) for t in (0.0, dt, 2 * dt)]
    assert continuity_residual(slices, h, dt, dt).norm < 1e-13
    assert hj_residual(slices, h, dt, dt).relative < 1e-6


def test_uniform_state_with_constant_potential():
    grid = make_grid(32, 4.0)
    h = HamiltonianSpec(grid, potential="2.5")
    rho = np.full(32, 0.25)
    dt = 0.1
    slices = [HydroState(rho, np.full(32, -2.5 * t)) for t in (0.0, dt, 2 * dt)]
    assert hj_residual(slices, h, dt, dt).norm < 1e-12


def test_solver_step_satisfies_hydrodynamics():
    slices, h = harmonic_slices(1e-3)
    assert continuity_residual(slices, h, 1e-3, 1e-3).relative < 1e-5
    assert hj_residual(slices, h, 1e-3, 1e-3).relative < 1e-5


def test_corrupted_density_breaks_continuity():
    slices, h = harmonic_slices(1e-3, corrupt=True)
    assert continuity_residual(slices, h, 1e-3, 1e-3).relative > 0.1


def test_dropping_quantum_potential_leaves_its_magnitude():
    slices, h = harmonic_slices(1e-3)
    full = hj_residual(slices, h, 1e-3, 1e-3)
    ablated = hj_residual(slices, h, 1e-3, 1e-3, drop_quantum=True)
    assert ablated.norm == pytest.approx(full.term_norms["quantum"], rel=1e-3)
    assert ablated.relative > 1e3 * full.relative


def test_residual_time_error_is_second_order():
    errors = []
    for dt in (4e-3, 2e-3):
        slices, h = harmonic_slices(dt)
        errors.append(hj_residual(slices, h, dt, dt).relative)
    assert errors[0] / errors[1] > 3.5


def uniform_precession(b0, theta, hbar=1.0):
    grid = make_grid(16, TWO_PI)
    g = GaugePotential.from_expressions(zeeman=("0", "0", f"{b0}"))
    h = HamiltonianSpec(grid, gauge=g, zeeman=True)
    rate = b0  # e B0 / m c in the default units
    rho = np.full(16, 1 / TWO_PI)

    def at(t):
        return SpinHydroState(rho, np.full(16, 0.5 * hbar * 0.0), np.full(16, theta), np.full(16, 0.3 + rate * t))

    return h, at


def test_larmor_precession_of_uniform_spinor():
    h, at = uniform_precession(1.4, np.pi / 2)
    dt = 1e-3
    r_theta, r_phi = spin_evolution_residual([at(0), at(dt), at(2 * dt)], h, dt, dt)
    assert r_theta.norm < 1e-12
    assert r_phi.relative < 1e-6
    assert r_phi.term_norms["dphi_dt"] > 1.0


def test_solver_precesses_in_the_analytic_sense():
    h, at = uniform_precession(1.4, np.pi / 2)
    dt = 1e-3
    psi0 = takabayasi_join(at(0))
    psi1 = step(psi0, h, PropagatorConfig(dt=dt))
    assert same_up_to_phase(psi1, takabayasi_join(at(dt))) < 1e-8


def test_field_free_uniform_spinor_is_still():
    grid = make_grid(16, TWO_PI)
    h = HamiltonianSpec(grid, zeeman=True)
    rho = np.full(16, 1 / TWO_PI)
    shs = SpinHydroState(rho, np.zeros(16), np.full(16, 1.1), np.full(16, 0.4))
    r_theta, r_phi = spin_evolution_residual([shs] * 3, h, 0.0, 1e-3)
    assert r_theta.norm == 0.0 and r_phi.norm == 0.0


def test_velocity_field_of_plane_wave():
    grid = make_grid(64, TWO_PI)
    x = grid.axis_coords(0)
    h = HamiltonianSpec(grid)
    (v,) = velocity_field(psi_to_hydro(np.exp(2j * x) / np.sqrt(TWO_PI))[0], h, 0.0)[:1]
    assert np.allclose(v, 2.0)


def test_azimuth_jump_at_pole_is_masked_and_flagged():
    grid = make_grid(64, TWO_PI)
    x = grid.axis_coords(0)
    theta = np.where(np.arange(64) < 32, 0.0, 1.0)
    phi = np.where(np.arange(64) < 10, 0.0, 2.0)
    pot = internal_potentials(SpinHydroState(np.full(64, 1 / TWO_PI), 0 * x, theta, phi), HamiltonianSpec(grid), route="fields")
    assert pot.degenerate
    assert not pot.mask[9] and not pot.mask[10]
    assert pot.mask[40]
