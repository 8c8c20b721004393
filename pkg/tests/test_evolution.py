import numpy as np
import pytest

from fisherq.errors import ConfigError, PropagationError
from fisherq.evolution import PropagatorConfig, ground_state, norm, normalize, propagate, rayleigh_quotient, step
from fisherq.gauge import Constants, GaugePotential
from fisherq.grid import ParticleAxes, integrate, make_grid
from fisherq.hamiltonian import PAULI, HamiltonianSpec, apply_hamiltonian


def harmonic(points=256, length=20.0, omega=1.0, **kw):
    grid = make_grid(points, length)
    return grid, HamiltonianSpec(grid, potential=f"0.5*{omega ** 2}*x^2", **kw)


def test_plane_wave_is_momentum_eigenstate():
    grid = make_grid(64, 2 * np.pi)
    x = grid.axis_coords(0)
    psi = np.exp(3j * x)
    h = HamiltonianSpec(grid, constants=Constants(hbar=0.5, m=2.0))
    assert np.max(np.abs(apply_hamiltonian(psi, h) - (0.25 * 9 / 4.0) * psi)) < 1e-12


def test_harmonic_ground_state_is_eigenstate():
    omega = 1.7
    grid, h = harmonic(omega=omega)
    x = grid.axis_coords(0)
    psi = np.exp(-omega * x * x / 2)
    hpsi = apply_hamiltonian(psi, h)
    assert np.linalg.norm(hpsi - 0.5 * omega * psi) / np.linalg.norm(psi) < 1e-8


def test_zeeman_acts_as_sigma_z():
    grid = make_grid(16, 4.0)
    g = GaugePotential.from_expressions(zeeman=("0", "0", "0.8"))
    h = HamiltonianSpec(grid, gauge=g, zeeman=True)
    psi = np.stack([np.ones(16), np.zeros(16)]).astype(complex)
    out = apply_hamiltonian(psi, h)
    assert np.allclose(out[0], h.bohr_magneton() * 0.8)
    assert np.allclose(out[1], 0.0)


def test_pauli_matrices_obey_product_rule():
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k], eps[j, i, k] = 1, -1
    for i in range(3):
        for j in range(3):
            expected = (i == j) * np.eye(2) + 1j * sum(eps[i, j, k] * PAULI[k] for k in range(3))
            assert np.array_equal(PAULI[i] @ PAULI[j], expected)


def test_eigenstate_picks_up_cayley_phase():
    grid, h = harmonic()
    x = grid.axis_coords(0)
    psi = normalize(np.exp(-x * x / 2).astype(complex), grid)
    dt = 0.01
    out = step(psi, h, PropagatorConfig(dt=dt))
    energy = 0.5
    cayley = (1 - 0.5j * dt * energy) / (1 + 0.5j * dt * energy)
    assert np.max(np.abs(out - cayley * psi)) < 1e-9
    assert np.max(np.abs(out - np.exp(-1j * energy * dt) * psi)) < 1e-6


def test_zero_step_is_identity():
    grid, h = harmonic(64, 10.0)
    psi = np.exp(-grid.axis_coords(0) ** 2).astype(complex)
    assert np.array_equal(step(psi, h, PropagatorConfig(dt=0.0)), psi)


def test_free_packet_width_law():
    grid = make_grid(512, 60.0)
    x = grid.axis_coords(0)
    h = HamiltonianSpec(grid)
    sigma0 = 1.0
    psi = normalize(np.exp(-x * x / (4 * sigma0 ** 2) + 0.5j * x), grid)
    _, states = propagate(psi, h, PropagatorConfig(dt=0.01), 100, every=100)
    rho = np.abs(states[-1]) ** 2
    mean = integrate(rho * x, grid)
    var = integrate(rho * (x - mean) ** 2, grid)
    assert var == pytest.approx(sigma0 ** 2 * (1 + (1.0 / 2) ** 2), rel=1e-4)


def test_norm_conserved_over_many_steps():
    grid = make_grid(128, 16.0)
    x = grid.axis_coords(0)
    h = HamiltonianSpec(grid, gauge=GaugePotential.from_expressions(ax="0.3*sin(2*pi*x/16)"), potential="0.1*x^2")
    psi = normalize(np.exp(-(x - 1) ** 2 + 1j * x), grid)
    _, states = propagate(psi, h, PropagatorConfig(dt=0.01), 1000, every=1000)
    assert abs(norm(states[-1], grid) - 1.0) <= 1e-8


def test_split_step_agrees_with_crank_nicolson():
    grid, h = harmonic(128, 16.0, scheme="spectral")
    x = grid.axis_coords(0)
    psi = normalize(np.exp(-(x - 1) ** 2 + 0.5j * x), grid)
    a = propagate(psi, h, PropagatorConfig(dt=0.002), 250, every=250)[1][-1]
    b = propagate(psi, h, PropagatorConfig(dt=0.002, scheme="split-step-spectral"), 250, every=250)[1][-1]
    assert np.linalg.norm(a - b) / np.linalg.norm(a) < 1e-4


def test_split_step_refuses_vector_potential():
    grid = make_grid(32, 4.0)
    h = HamiltonianSpec(grid, gauge=GaugePotential.from_expressions(ax="0.1"))
    with pytest.raises(ConfigError):
        step(np.ones(32, complex), h, PropagatorConfig(dt=0.1, scheme="split-step-spectral"))


def test_absorbing_layer_removes_norm():
    grid = make_grid(256, 20.0, boundary="padded-absorbing")
    x = grid.axis_coords(0)
    h = HamiltonianSpec(grid)
    psi = normalize(np.exp(-(x - 6) ** 2 + 4j * x), grid)
    _, states = propagate(psi, h, PropagatorConfig(dt=0.01, absorb_width=2.0), 200, every=200)
    assert norm(states[-1], grid) < 0.5


def test_failed_solve_raises_with_residual():
    grid = make_grid(256, 16.0)
    x = grid.axis_coords(0)
    h = HamiltonianSpec(grid, potential="1000*sin(20*x)*x^2")
    psi = normalize(np.exp(-x * x + 2j * x), grid)
    with pytest.raises(PropagationError) as info:
        step(psi, h, PropagatorConfig(dt=1.0, tol=1e-14, max_iter=1))
    assert info.value.residual is not None


def test_bad_configs():
    with pytest.raises(ConfigError):
        PropagatorConfig(dt=-1.0)
    with pytest.raises(ConfigError):
        PropagatorConfig(dt=0.1, scheme="euler")
    with pytest.raises(ConfigError):
        HamiltonianSpec(make_grid(16, 1.0), axes=ParticleAxes(2, ("x",)))
    with pytest.raises(ConfigError):
        HamiltonianSpec(make_grid(16, 1.0), gauge=GaugePotential.from_expressions(ax="y"))
    grid, h = harmonic(16, 4.0)
    with pytest.raises(ConfigError):
        apply_hamiltonian(np.ones((3, 16), complex), h)


def test_harmonic_ground_state_energy():
    omega = 1.5
    grid, h = harmonic(128, 16.0, omega=omega)
    psi, energy = ground_state(h, PropagatorConfig(dt=0.5, max_iter=200))
    assert energy == pytest.approx(0.5 * omega, rel=1e-6)
    assert rayleigh_quotient(psi, h) == pytest.approx(energy)


def test_free_box_ground_state_is_flat():
    grid = make_grid(32, 5.0)
    psi, energy = ground_state(HamiltonianSpec(grid), PropagatorConfig(dt=2.0, max_iter=200))
    assert abs(energy) < 1e-10
    assert np.ptp(np.abs(psi)) < 1e-6


def test_zeeman_ground_state_aligns_spin():
    grid = make_grid(128, 16.0)
    b0 = 0.6
    g = GaugePotential.from_expressions(zeeman=("0", "0", str(b0)))
    h = HamiltonianSpec(grid, gauge=g, zeeman=True, potential="0.5*x^2")
    x = grid.axis_coords(0)
    start = np.stack([np.exp(-x * x), 0.7 * np.exp(-x * x)]).astype(complex)
    psi, energy = ground_state(h, PropagatorConfig(dt=0.5, max_iter=300), psi0=start)
    assert energy == pytest.approx(0.5 - abs(h.bohr_magneton() * b0), rel=1e-6)
    # mu_B < 0 for positive charge, so the lower branch is spin up
    assert integrate(np.abs(psi[1]) ** 2, grid) < 1e-10


def test_potential_lowest_at_edge_is_refused():
    grid = make_grid(64, 8.0)
    h = HamiltonianSpec(grid, potential="-x^2")
    with pytest.raises(PropagationError):
        ground_state(h, PropagatorConfig(dt=0.1))
