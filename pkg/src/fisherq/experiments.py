"""Reference experiments with analytic or structural oracles.

Each function runs a small, fixed numerical experiment and returns the
measured quantities next to what theory predicts. The verification suites,
the acceptance tests and the demos all call these.
"""

import time
import warnings

import numpy as np

from .classical import ConvergenceScenario, ensemble_means, evolve_characteristics, hbar_convergence_study
from .errors import UnwrapWarning
from .evolution import PropagatorConfig, normalize, propagate, step
from .gauge import (
    Constants,
    GaugeFunction,
    GaugePotential,
    arunsalam_gould_dress,
    field_strengths,
    transformed_potential,
)
from .grid import ParticleAxes, integrate, make_grid
from .hamiltonian import PAULI, HamiltonianSpec, free_pauli_alternative, free_pauli_plain
from .madelung import (
    HydroState,
    continuity_residual,
    hj_residual,
    hydro_to_psi,
    psi_to_hydro,
    spin_evolution_residual,
    takabayasi_join,
    takabayasi_split,
)
from .observables import ehrenfest_check, ensemble_report, mean_spin

SPIN_LABELS = {
    "up": (0.0, 0.0),
    "down": (np.pi, 0.0),
    "+x": (0.5 * np.pi, 0.5 * np.pi),
    "-x": (0.5 * np.pi, -0.5 * np.pi),
    "+y": (0.5 * np.pi, 0.0),
    "-y": (0.5 * np.pi, np.pi),
}


def spinor(theta, phi):
    """Unit two-spinor with spin direction (sin th sin ph, sin th cos ph, cos th)."""
    return np.array([np.cos(0.5 * theta) * np.exp(0.5j * phi), 1j * np.sin(0.5 * theta) * np.exp(-0.5j * phi)])


def spin_from_label(label):
    label = label.strip()
    if label in SPIN_LABELS:
        return spinor(*SPIN_LABELS[label])
    if label.startswith("angles:"):
        theta, phi = (float(v) for v in label[len("angles:"):].split(":"))
        return spinor(theta, phi)
    raise ValueError(f"unknown spin label {label!r}")


def gaussian(coords, center, width, momentum, hbar=1.0):
    return np.exp(-((coords - center) ** 2) / (4.0 * width ** 2) + 1j * momentum * coords / hbar)


def _residual_slices(states, hbar, spin):
    split = (lambda p: takabayasi_split(p, hbar)) if spin else (lambda p: psi_to_hydro(p, hbar)[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnwrapWarning)
        return [split(p) for p in states]


def madelung_residuals(states, h, t, dt, spin=False):
    """All hydrodynamic residual reports at the middle of three consecutive states."""
    sl = _residual_slices(states, h.constants.hbar, spin)
    out = {"continuity": continuity_residual(sl, h, t, dt), "hj": hj_residual(sl, h, t, dt)}
    if spin:
        out["theta"], out["phi"] = spin_evolution_residual(sl, h, t, dt)
    return out


def _scan_residuals(h, psi, dt, steps, every, spin):
    cfg = PropagatorConfig(dt=dt)
    worst = {}
    prev, cur, t = None, psi, 0.0
    for n in range(1, steps + 1):
        nxt = step(cur, h, cfg, t)
        if prev is not None and n % every == 0:
            for k, r in madelung_residuals([prev, cur, nxt], h, t, dt, spin).items():
                worst[k] = max(worst.get(k, 0.0), r.relative)
        prev, cur, t = cur, nxt, n * dt
    return worst, cur


def scalar_equivalence(points=256, steps=500, dt=1e-3, every=50):
    """Harmonic coherent state: worst continuity and HJ residuals along the run, plus the ablated HJ."""
    start = time.perf_counter()
    grid = make_grid((points,), (20.0,))
    x = grid.axis_coords(0)
    h = HamiltonianSpec(grid, potential="0.5*x^2")
    psi = normalize(gaussian(x, 1.5, np.sqrt(0.5), 0.7), grid)
    worst, last = _scan_residuals(h, psi, dt, steps, every, spin=False)
    runtime = time.perf_counter() - start
    states = propagate(last, h, PropagatorConfig(dt=dt), 2, t0=steps * dt)[1]
    sl = _residual_slices(states, 1.0, False)
    worst["hj_ablated"] = hj_residual(sl, h, (steps + 1) * dt, dt, drop_quantum=True).relative
    worst["runtime"] = runtime
    return worst


def pauli_setup(points=256, field=(0.3, 0.0, 1.0)):
    """1D (along y) spinor packet in a uniform field B = (bx, 0, bz) with A = (-bz y, 0, bx y)."""
    bx, _, bz = field
    grid = make_grid((points,), (20.0,))
    y = grid.axis_coords(0)
    axes = ParticleAxes(1, ("y",))
    g = GaugePotential.from_expressions(ax=f"-({bz})*y", az=f"({bx})*y")
    h = HamiltonianSpec(grid, gauge=g, zeeman=True, potential="0.5*y^2", axes=axes)
    up = gaussian(y, 0.5, np.sqrt(0.5), 0.3)
    down = 0.8 * gaussian(y, -0.3, 1.3 * np.sqrt(0.5), -0.2)
    return h, normalize(np.stack([up, down]), grid)


def spin_equivalence(points=256, steps=1200, dt=2.5e-4, every=100):
    """Pauli packet with spatially varying theta and phi: worst of the four residuals."""
    start = time.perf_counter()
    h, psi = pauli_setup(points)
    worst, _ = _scan_residuals(h, psi, dt, steps, every, spin=True)
    worst["runtime"] = time.perf_counter() - start
    return worst


def ehrenfest_run(kind, dt=1e-3, duration=1.0, points=256):
    """Ehrenfest residual maxima for the 'free', 'harmonic' or 'magnetic' setup."""
    grid = make_grid((points,), (20.0,))
    x = grid.axis_coords(0)
    if kind == "free":
        h = HamiltonianSpec(grid)
        psi = normalize(gaussian(x, -1.0, 1.0, 0.8), grid)
    elif kind == "harmonic":
        h = HamiltonianSpec(grid, potential="0.5*x^2")
        psi = normalize(gaussian(x, 1.5, np.sqrt(0.5), 0.7), grid)
    elif kind == "magnetic":
        h, psi = pauli_setup(points)
    else:
        raise ValueError(kind)
    steps = int(round(duration / dt))
    ts, states = propagate(psi, h, PropagatorConfig(dt=dt), steps)
    reports = [ensemble_report(p, h, t) for t, p in zip(ts, states)]
    return ehrenfest_check(reports).worst


def larmor_precession(periods=5, dt=0.01, points=64, b0=1.0, g_scale=1.0, window=20):
    """Precession of a tipped spin in B = b0 z (Landau gauge, 1D along x).

    Returns the frequency from zero crossings of <s_x>, the expected e b0 / m c,
    the sense of rotation (sign of d<s_y>/dt at t = 0 relative to the torque
    law) and the largest torque-law residual over the first ``window`` steps
    with the torque scaled by ``g_scale``.
    """
    grid = make_grid((points,), (16.0,))
    x = grid.axis_coords(0)
    h = HamiltonianSpec(grid, gauge=GaugePotential.from_expressions(ay=f"{b0}*x"), zeeman=True)
    psi = normalize(np.exp(-x * x / 2.0)[None] * spin_from_label("+x")[:, None], grid)
    omega = h.charges[0] * b0 / (h.masses[0] * h.constants.c)
    steps = int(np.ceil(periods * 2.0 * np.pi / omega / dt)) + 2
    cfg = PropagatorConfig(dt=dt)
    ts = dt * np.arange(steps + 1)
    spins, reports = [], []
    for n, t in enumerate(ts):
        if n:
            psi = step(psi, h, cfg, ts[n - 1])
        spins.append(mean_spin(psi, h))
        if n <= window:
            reports.append(ensemble_report(psi, h, t))
    sx = np.array(spins)[:, 0]
    crossings = []
    for i in np.nonzero(np.sign(sx[:-1]) * np.sign(sx[1:]) < 0)[0]:
        lo = min(max(i - 1, 0), len(sx) - 4)
        sl = slice(lo, lo + 4)
        roots = np.roots(np.polyfit(ts[sl] - ts[i], sx[sl], 3))
        roots = roots[np.isreal(roots)].real
        roots = roots[(roots >= 0) & (roots <= dt)]
        crossings.append(ts[i] + (roots[0] if roots.size else -sx[i] * dt / (sx[i + 1] - sx[i])))
    crossings = np.array(crossings)
    measured = np.pi * (len(crossings) - 1) / (crossings[-1] - crossings[0])
    for r in reports:
        r.torque = g_scale * r.torque
    check = ehrenfest_check(reports)
    sy_rate = (reports[1].mean_s[1] - reports[0].mean_s[1]) / dt
    return {
        "measured": float(measured),
        "expected": float(omega),
        "relative_error": float(abs(measured - omega) / omega),
        "periods": (len(crossings) - 1) / 2.0,
        "sense": float(np.sign(sy_rate) * np.sign(reports[0].torque[1])),
        "torque_residual": float(check.worst["torque"]),
    }


def stern_gerlach(b0=1.0, gradient=0.1, dt=0.01, steps=40, points=256):
    """d<p_z>/dt for pure up and down spinors in the Zeeman-only field B_z = b0 + gradient z."""
    grid = make_grid((points,), (20.0,))
    z = grid.axis_coords(0)
    axes = ParticleAxes(1, ("z",))
    g = GaugePotential.from_expressions(zeeman=("0", "0", f"{b0}+{gradient}*z"))
    h = HamiltonianSpec(grid, gauge=g, zeeman=True, axes=axes)
    out = {"expected_magnitude": abs(h.bohr_magneton() * gradient), "bohr_magneton_gradient": h.bohr_magneton() * gradient}
    for label in ("up", "down"):
        psi = normalize(np.exp(-z * z / 2.0)[None] * spin_from_label(label)[:, None], grid)
        ts, states = propagate(psi, h, PropagatorConfig(dt=dt), steps)
        p = np.array([ensemble_report(s, h, t).mean_p_kinetic[2] for t, s in zip(ts, states)])
        out[label] = float(np.polyfit(ts, p, 1)[0])
    return out


def free_spreading(points=512, length=60.0, sigma0=1.0, dt=0.01, momentum=0.5):
    """Position variance at t = 2 m sigma0^2 / hbar against sigma0^2 (1 + (hbar t / 2 m sigma0^2)^2)."""
    grid = make_grid((points,), (length,))
    x = grid.axis_coords(0)
    h = HamiltonianSpec(grid)
    c = h.constants
    t_final = 2.0 * c.m * sigma0 ** 2 / c.hbar
    steps = int(round(t_final / dt))
    psi = normalize(gaussian(x, 0.0, sigma0, momentum), grid)
    _, states = propagate(psi, h, PropagatorConfig(dt=dt), steps, every=steps)
    rho = np.abs(states[-1]) ** 2
    mean = integrate(rho * x, grid)
    var = integrate(rho * (x - mean) ** 2, grid)
    expected = sigma0 ** 2 * (1.0 + (c.hbar * t_final / (2.0 * c.m * sigma0 ** 2)) ** 2)
    return {"variance": var, "expected": expected, "relative_error": abs(var - expected) / expected, "t": t_final}


def ring_setup(flux, points=64, length=12.0, radius=3.0, frequency=6.0, core=0.3):
    grid = make_grid((points, points), (length, length))
    a = flux / (2.0 * np.pi)
    smooth = f"(1-exp(-(x^2+y^2)/{core ** 2}))/(x^2+y^2+1e-300)"
    g = GaugePotential.from_expressions(ax=f"-({a})*y*{smooth}", ay=f"({a})*x*{smooth}")
    h = HamiltonianSpec(grid, gauge=g, potential=f"0.5*{frequency}^2*(sqrt(x^2+y^2)-{radius})^2")
    return h


def _ring_run(h, sign, radius, frequency, wavenumber, arc_width, dt):
    x, y = h.grid.mesh()
    r = np.sqrt(x * x + y * y)
    arc = radius * np.angle(np.exp(1j * (np.arctan2(y, x) - np.pi)))
    psi = np.exp(-0.5 * frequency * (r - radius) ** 2 - arc ** 2 / (2.0 * arc_width ** 2) + 1j * sign * wavenumber * arc)
    psi = arunsalam_gould_dress(psi, h.gauge, h.grid, reference_point=(-radius, 0.0, 0.0), inverse=True)
    psi = normalize(psi, h.grid)
    steps = int(round(np.pi * radius / wavenumber / dt))
    _, states = propagate(psi, h, PropagatorConfig(dt=dt, tol=1e-10), steps, every=steps)
    return states[-1]


def aharonov_bohm(fluxes=(0.0, 0.8, 1.6, 2.4, 3.2), points=64, length=12.0, radius=3.0, frequency=6.0,
                  wavenumber=4.0, arc_width=0.8, core=0.3, dt=0.01):
    """Fringe shift of two counter-propagating ring packets against enclosed flux.

    Each packet starts at angle pi, dressed with the path phase so that its
    kinetic momentum does not depend on the flux, and travels half way round.
    The fringe pattern psi_plus conj(psi_minus) on the far half-plane is
    compared with the zero-flux pattern; its density-weighted phase shift is
    fitted linearly against flux.
    """
    shifts = []
    reference = None
    b_on_support = 0.0
    for flux in fluxes:
        h = ring_setup(flux, points, length, radius, frequency, core)
        plus = _ring_run(h, 1.0, radius, frequency, wavenumber, arc_width, dt)
        minus = _ring_run(h, -1.0, radius, frequency, wavenumber, arc_width, dt)
        x, y = h.grid.mesh()
        pattern = np.where(x > 0, plus * np.conj(minus), 0.0)
        if reference is None:
            reference = pattern
        unit = reference / np.maximum(np.abs(reference), 1e-300)
        shifts.append(float(np.angle(np.sum(pattern * np.conj(unit)))))
        b = field_strengths(h.gauge, h.grid, 0.0, h.constants).b_field[2]
        rho = np.abs(plus) ** 2 + np.abs(minus) ** 2
        support = rho > 1e-6 * rho.max()
        b_on_support = max(b_on_support, float(np.max(np.abs(np.asarray(b) * support))))
    shifts = np.unwrap(shifts)
    slope, intercept = np.polyfit(fluxes, shifts, 1)
    c = Constants()
    expected = c.e / (c.hbar * c.c)
    return {
        "fluxes": list(fluxes),
        "shifts": shifts.tolist(),
        "slope": float(slope),
        "expected_slope": expected,
        "relative_error": abs(slope - expected) / expected,
        "intercept": float(intercept),
        "max_b_on_support": b_on_support,
    }


def schmidt_truncation_error(psi4, n_points):
    """Weight outside the leading Schmidt term of a two-particle spin state of shape (4, N, N)."""
    tensor = psi4.reshape(2, 2, n_points, n_points).transpose(0, 2, 1, 3).reshape(2 * n_points, 2 * n_points)
    s = np.linalg.svd(tensor, compute_uv=False)
    return float(np.sqrt(np.sum(s[1:] ** 2)) / np.sqrt(np.sum(s ** 2)))


def two_particle_factorization(points=64, steps=200, dt=0.01, b0=1.0):
    """Product state of two spin particles in separate traps and a uniform Zeeman field."""
    grid = make_grid((points, points), (16.0, 16.0))
    axes = ParticleAxes(2, ("x",))
    g = GaugePotential.from_expressions(zeeman=("0.3", "0", f"{b0}"))
    h = HamiltonianSpec(grid, gauge=g, zeeman=True, axes=axes, potential="0.5*x1^2 + 0.5*(x2-1)^2")
    x = grid.axis_coords(0)
    one = gaussian(x, 1.0, 0.8, 0.5)[None] * spin_from_label("+x")[:, None]
    two = gaussian(x, -0.5, 1.1, -0.3)[None] * spin_from_label("angles:1.0:0.4")[:, None]
    psi = np.einsum("ai,bj->abij", one, two).reshape(4, points, points)
    psi = normalize(psi, grid)
    cfg = PropagatorConfig(dt=dt, scheme="split-step-spectral")
    _, states = propagate(psi, h, cfg, steps, every=steps)
    return {"initial": schmidt_truncation_error(psi, points), "final": schmidt_truncation_error(states[-1], points)}


def random_gauge_function(rng, length, modes=3, time_dependent=False, axis_name="y"):
    """Sum of a few periodic Fourier modes along one direction (units of action)."""
    terms = []
    for _ in range(modes):
        n = int(rng.integers(1, 4))
        amp = rng.uniform(-0.5, 0.5)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        om = rng.uniform(-1.0, 1.0) if time_dependent else 0.0
        terms.append(f"({amp})*sin({2.0 * np.pi * n / length}*{axis_name} + ({om})*t + ({ph}))")
    return GaugeFunction(" + ".join(terms))


def gauge_invariance(count=10, seed=7, points=256, dt=1e-3):
    """Largest change of report fields, residual norms and E, B under random gauge functions."""
    h, psi0 = pauli_setup(points)
    states = propagate(psi0, h, PropagatorConfig(dt=dt), 52)[1][-3:]
    t = 51 * dt
    base_report = ensemble_report(states[1], h, t)
    base_res = {k: r.relative for k, r in madelung_residuals(states, h, t, dt, spin=True).items()}
    base_fields = field_strengths(h.gauge, h.grid, t, h.constants, h.axes)
    rng = np.random.default_rng(seed)
    worst = {"report": 0.0, "residual": 0.0, "e_b": 0.0}
    c = h.constants
    for _ in range(count):
        chi = random_gauge_function(rng, h.grid.lengths[0])
        g2 = transformed_potential(h.gauge, chi, c)
        h2 = HamiltonianSpec(h.grid, c, g2, h.potential, True, h.axes)
        y = h.grid.axis_coords(0)
        zeros = np.zeros_like(y)
        shifted = [s * np.exp(1j * chi(zeros, y, zeros, tt) / c.hbar) for s, tt in zip(states, (t - dt, t, t + dt))]
        rep = ensemble_report(shifted[1], h2, t)
        for name in ("norm", "mean_x", "mean_p_kinetic", "mean_s", "energy", "lorentz", "dipole", "mechanical", "torque"):
            diff = np.max(np.abs(np.asarray(getattr(rep, name)) - np.asarray(getattr(base_report, name))))
            worst["report"] = max(worst["report"], float(diff))
        res = madelung_residuals(shifted, h2, t, dt, spin=True)
        for k, r in res.items():
            worst["residual"] = max(worst["residual"], abs(r.relative - base_res[k]))
        chi_t = random_gauge_function(rng, h.grid.lengths[0], time_dependent=True)
        f2 = field_strengths(transformed_potential(h.gauge, chi_t, c), h.grid, t, c, h.axes)
        for a, b in zip(base_fields.e_field + base_fields.b_field, f2.e_field + f2.b_field):
            worst["e_b"] = max(worst["e_b"], float(np.max(np.abs(np.asarray(a) - np.asarray(b)))))
    return worst


def dressing_equivalence(points=128, a0=0.4, steps=100, dt=0.01):
    """Free Pauli evolution dressed by the path phase against direct evolution in a uniform A."""
    grid = make_grid((points,), (20.0,))
    x = grid.axis_coords(0)
    free = HamiltonianSpec(grid, zeeman=True)
    g = GaugePotential.from_expressions(ax=f"{a0}")
    coupled = HamiltonianSpec(grid, gauge=g, zeeman=True)
    k = 2.0 * np.pi * 3 / grid.lengths[0]
    psi = normalize(np.exp(-x * x / 2.0 + 1j * k * x)[None] * spin_from_label("angles:0.7:0.3")[:, None], grid)
    cfg = PropagatorConfig(dt=dt)
    free_t = propagate(psi, free, cfg, steps, every=steps)[1][-1]
    dressed0 = arunsalam_gould_dress(psi, g, grid, inverse=True)
    coupled_t = propagate(dressed0, coupled, cfg, steps, every=steps)[1][-1]
    dressed_t = arunsalam_gould_dress(free_t, g, grid, inverse=True)
    return float(np.max(np.abs(coupled_t - dressed_t)))


def algebra_and_round_trips(seed=3):
    """Pauli algebra defects and Takabayasi / Madelung round-trip errors (up to global phase)."""
    eye = np.eye(2)
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    algebra = 0.0
    for i in range(3):
        for j in range(3):
            expected = (i == j) * eye + 1j * sum(eps[i, j, k] * PAULI[k] for k in range(3))
            algebra = max(algebra, float(np.max(np.abs(PAULI[i] @ PAULI[j] - expected))))
    grid = make_grid((128,), (2.0 * np.pi,))
    x = grid.axis_coords(0)
    rng = np.random.default_rng(seed)
    modes = lambda: sum(rng.uniform(-0.6, 0.6) * np.cos(n * x + rng.uniform(0, 6.3)) for n in (1, 2, 3))  # noqa: E731
    psi = normalize(np.stack([np.exp(modes() + 1j * modes()), np.exp(modes() + 1j * modes())]), grid)
    joined = takabayasi_join(takabayasi_split(psi))
    phase = np.vdot(joined.ravel(), psi.ravel())
    spin_trip = float(np.max(np.abs(joined * phase / abs(phase) - psi)))
    scalar = normalize(np.exp(modes() + 1j * modes()), grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnwrapWarning)
        back = hydro_to_psi(psi_to_hydro(scalar)[0])
    phase = np.vdot(back, scalar)
    scalar_trip = float(np.max(np.abs(back * phase / abs(phase) - scalar)))
    cube = make_grid((12, 12, 12), (2.0 * np.pi,) * 3)
    mesh = cube.mesh()
    blob = sum(rng.uniform(-0.5, 0.5) * np.cos(c + rng.uniform(0, 6.3)) for c in mesh)
    wave = np.stack([np.exp(blob + 1j * np.sin(mesh[0] - mesh[1])), np.exp(-blob + 1j * np.cos(mesh[2]))])
    h = HamiltonianSpec(cube, scheme="spectral")
    alt, plain = free_pauli_alternative(wave, h), free_pauli_plain(wave, h)
    pauli_identity = float(np.max(np.abs(alt - plain)) / np.max(np.abs(plain)))
    return {"algebra": algebra, "takabayasi": spin_trip, "madelung": scalar_trip, "pauli_identity": pauli_identity}


# ---------------------------------------------------------------- classical limit

def classical_harmonic_oracle(n_samples=20000, seed=11, t_final=np.pi / 3, dt=0.01, x0=-2.0, p0=1.0):
    """Per-trajectory errors against x0 cos wt + (p0/m w) sin wt and the ensemble mean against its 3 sigma band."""
    grid = make_grid((1024,), (40.0,))
    x = grid.axis_coords(0)
    rho = np.exp(-((x - x0) ** 2) / 2.0)
    rho /= integrate(rho, grid)
    h = HamiltonianSpec(grid, potential="0.5*x^2")
    ce = evolve_characteristics(HydroState(rho, p0 * x), h, t_final, n_samples, dt, seed=seed)
    xi, pi0 = ce.initial_positions[:, 0], ce.initial_momenta[:, 0]
    exact = xi * np.cos(t_final) + pi0 * np.sin(t_final)
    mean_x, _ = ensemble_means(ce)
    target = x0 * np.cos(t_final) + p0 * np.sin(t_final)
    sigma = np.cos(t_final) / np.sqrt(n_samples)
    hb = HamiltonianSpec(grid, potential="0.5*x^2", constants=Constants(hbar=0.125))
    ce2 = evolve_characteristics(HydroState(rho, p0 * x), hb, t_final, n_samples, dt, seed=seed)
    return {
        "trajectory_error": float(np.max(np.abs(ce.positions[:, 0] - exact))),
        "mean_offset_sigmas": abs(mean_x[0] - target) / sigma,
        "bitwise_hbar_independent": bool(
            np.array_equal(ce.positions, ce2.positions) and np.array_equal(ce.momenta, ce2.momenta)
        ),
        "caustic": ce.caustic,
    }


def classical_cyclotron_oracle(n_samples=400, seed=5, t_final=4.0, dt=0.005, b0=1.0, p0=0.7):
    """Trajectories in B = b0 z (symmetric gauge) against circular motion at e b0 / m c."""
    grid = make_grid((64, 64), (16.0, 16.0))
    x, y = grid.mesh()
    rho = np.exp(-(x * x + y * y))
    rho /= integrate(rho, grid)
    g = GaugePotential.from_expressions(ax=f"-0.5*{b0}*y", ay=f"0.5*{b0}*x")
    h = HamiltonianSpec(grid, gauge=g)
    ce = evolve_characteristics(HydroState(rho, p0 * x), h, t_final, n_samples, dt, seed=seed, caustic_guard=False)
    c = h.constants
    w = h.charges[0] * b0 / (h.masses[0] * c.c)
    r0, v0 = ce.initial_positions[:, :2], ce.initial_momenta[:, :2] / h.masses[0]
    ct, st = np.cos(w * t_final), np.sin(w * t_final)
    # v(t) = R(-w t) v0 for a positive charge; x(t) = x0 + integral of v
    vx = v0[:, 0] * st / w + v0[:, 1] * (1.0 - ct) / w
    vy = -v0[:, 0] * (1.0 - ct) / w + v0[:, 1] * st / w
    exact = np.stack([r0[:, 0] + vx, r0[:, 1] + vy], axis=1)
    return {"trajectory_error": float(np.max(np.abs(ce.positions[:, :2] - exact))), "frequency": w}


def convergence_scenario(kind, points=1024, length=40.0):
    """Fixed (rho0, S0) problems for the hbar sweep: 'harmonic' (w t = pi/3) or 'free' (t = 2)."""
    grid = make_grid((points,), (length,))
    x = grid.axis_coords(0)
    rho = np.exp(-((x + 2.0) ** 2) / 2.0)
    rho /= integrate(rho, grid)
    potential = "0.5*x^2" if kind == "harmonic" else None
    t_final = np.pi / 3 if kind == "harmonic" else 2.0
    return ConvergenceScenario(
        lambda hbar: HamiltonianSpec(grid, constants=Constants(hbar=hbar), potential=potential),
        rho, 1.0 * x, t_final, 1e-3, n_samples=20000, classical_dt=1e-2,
    )


def classical_convergence(kind, hbars=(1.0, 0.5, 0.25, 0.125)):
    rows = hbar_convergence_study(convergence_scenario(kind), hbars)
    return [(r.hbar, r.l1) for r in rows]
