"""The hbar = 0 statistical field theory integrated along characteristics.

An ensemble of trajectories is drawn from an initial density, each carrying
the kinetic momentum grad S - (e/c) A of its starting point, and moved by
Newton's equations with the Lorentz and mechanical forces. Nothing in this
module reads Planck's constant: the trajectories depend only on the mass,
charge, speed of light and the potentials.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator, RegularGridInterpolator
from scipy.spatial import cKDTree

from .errors import CausticError, ConfigError
from .evolution import PropagatorConfig, normalize, propagate
from .gauge import field_strengths_at
from .grid import DIRECTIONS, integrate

FD_STEP = 1e-3


@dataclass
class CharacteristicEnsemble:
    """Trajectory samples: positions and kinetic momenta of shape (n, 3) and weights summing to 1."""

    positions: np.ndarray
    momenta: np.ndarray
    weights: np.ndarray
    t: float
    initial_positions: np.ndarray
    initial_momenta: np.ndarray
    moving: tuple
    caustic: bool = False
    caustic_time: float = None
    source: dict = field(default_factory=dict)


@dataclass
class PhaseSpaceDensity:
    """w(x, p, t) = rho(x, t) delta(p - p_map(x, t)), kept as the pair (rho, p_map)."""

    rho: np.ndarray
    p_map: tuple
    bandwidth: tuple
    scatter: tuple = None
    scatter_bound: tuple = None
    support_level: float = 1e-3

    @property
    def support(self):
        return self.rho > self.support_level * float(np.max(self.rho))

    @property
    def delta_certified(self):
        """Momentum scatter within the kernel window stays below the bound wherever rho is resolved."""
        if self.scatter is None:
            return False
        return all(bool(np.all((s <= b)[self.support])) for s, b in zip(self.scatter, self.scatter_bound))


def _moving_axes(h):
    return [h.axes.axis(0, d) for d in DIRECTIONS]


def _single(h):
    if h.n_particles != 1:
        raise ConfigError("characteristics are implemented for one particle")


# ---------------------------------------------------------------- sampling

def _sample_1d(rho, grid, n, rng, quantile):
    """Inverse transform through the spline-integrated CDF with a monotone cubic inverse."""
    x = grid.axis_coords(0)
    cdf = CubicSpline(x, np.clip(rho, 0.0, None)).antiderivative()(x)
    cdf = (cdf - cdf[0]) / (cdf[-1] - cdf[0])
    keep = np.concatenate([[True], np.diff(cdf) > 1e-15])
    inverse = PchipInterpolator(cdf[keep], x[keep])
    u = (np.arange(n) + 0.5) / n if quantile else rng.random(n)
    return inverse(np.clip(u, 0.0, 1.0))[:, None]


def _sample_rejection(rho, grid, n, rng):
    axes_coords = [grid.axis_coords(a) for a in range(grid.ndim)]
    interp = RegularGridInterpolator(axes_coords, np.clip(rho, 0.0, None), bounds_error=False, fill_value=0.0)
    top = float(np.max(rho))
    lo = np.array([c[0] for c in axes_coords])
    hi = np.array([c[-1] for c in axes_coords])
    out = []
    count = 0
    while count < n:
        batch = max(2 * (n - count), 1024)
        pts = lo + (hi - lo) * rng.random((batch, grid.ndim))
        ok = rng.random(batch) * top < interp(pts)
        out.append(pts[ok])
        count += int(ok.sum())
    return np.concatenate(out)[:n]


def sample_positions(rho, grid, n_samples, seed=0, quantile=False):
    """Positions drawn from rho: inverse CDF in 1D (or its deterministic quantiles), rejection otherwise."""
    rng = np.random.default_rng(seed)
    if grid.ndim == 1:
        return _sample_1d(np.asarray(rho), grid, n_samples, rng, quantile)
    if quantile:
        raise ConfigError("quantile sampling is defined for one-dimensional densities")
    return _sample_rejection(np.asarray(rho), grid, n_samples, rng)


def _action_gradient(s, grid, pts):
    """grad S at sample points: cubic spline in 1D, cubic interpolation of 2nd-order differences otherwise."""
    if grid.ndim == 1:
        spline = CubicSpline(grid.axis_coords(0), s)
        return [spline(pts[:, 0], 1)]
    coords = [grid.axis_coords(a) for a in range(grid.ndim)]
    grads = np.gradient(s, *grid.spacing, edge_order=2)
    return [
        RegularGridInterpolator(coords, g, method="cubic", bounds_error=False, fill_value=None)(pts) for g in grads
    ]


# ---------------------------------------------------------------- dynamics

def _potential_at(h, pos, t):
    if h._v is None:
        return np.zeros(len(pos))
    env = {name: pos[:, DIRECTIONS.index(name)] for name in h.axes.directions}
    return np.broadcast_to(np.asarray(h._v(env, t), dtype=float), (len(pos),))


def _mechanical_force(h, pos, t, step=FD_STEP):
    out = np.zeros_like(pos)
    if h._v is None:
        return out
    for k, d in enumerate(DIRECTIONS):
        if d not in h.axes.directions:
            continue
        def at(shift):
            p = pos.copy()
            p[:, k] += shift * step
            return _potential_at(h, p, t)
        out[:, k] = -(8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * step)
    return out


def _acceleration(h, pos, mom, t):
    c = h.constants
    m, e = h.masses[0], h.charges[0]
    force = _mechanical_force(h, pos, t)
    if not h.gauge.is_zero:
        f = field_strengths_at(h.gauge, pos[:, 0], pos[:, 1], pos[:, 2], t, c, check_divergence=False)
        ef = np.stack([np.broadcast_to(np.asarray(v, float), (len(pos),)) for v in f.e_field], axis=1)
        bf = np.stack([np.broadcast_to(np.asarray(v, float), (len(pos),)) for v in f.b_field], axis=1)
        force = force + e * ef + (e / (m * c.c)) * np.cross(mom, bf)
    return force


def _rk4(h, pos, mom, t, dt):
    m = h.masses[0]
    k1x, k1p = mom / m, _acceleration(h, pos, mom, t)
    k2x, k2p = (mom + 0.5 * dt * k1p) / m, _acceleration(h, pos + 0.5 * dt * k1x, mom + 0.5 * dt * k1p, t + 0.5 * dt)
    k3x, k3p = (mom + 0.5 * dt * k2p) / m, _acceleration(h, pos + 0.5 * dt * k2x, mom + 0.5 * dt * k2p, t + 0.5 * dt)
    k4x, k4p = (mom + dt * k3p) / m, _acceleration(h, pos + dt * k3x, mom + dt * k3p, t + dt)
    return (
        pos + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x),
        mom + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p),
    )


def _neighbour_frames(pts, moving):
    """For each sample, indices of neighbours spanning the moving directions (Jacobian proxy frame)."""
    sub = pts[:, moving]
    d = sub.shape[1]
    n = len(sub)
    if d == 1:
        order = np.argsort(sub[:, 0], kind="stable")
        nxt = np.empty(n, dtype=int)
        nxt[order[:-1]] = order[1:]
        nxt[order[-1]] = order[-2]
        return nxt[:, None]
    tree = cKDTree(sub)
    k = min(n, 4 * d + 1)
    _, idx = tree.query(sub, k=k)
    frames = np.empty((n, d), dtype=int)
    for i in range(n):
        best, best_det = None, 0.0
        cand = idx[i, 1:]
        for a in range(len(cand)):
            for b in range(a + 1, len(cand)):
                if d == 2:
                    m = np.stack([sub[cand[a]] - sub[i], sub[cand[b]] - sub[i]])
                    det = abs(np.linalg.det(m))
                    if det > best_det:
                        best, best_det = (cand[a], cand[b]), det
                else:
                    for c_ in range(b + 1, len(cand)):
                        m = np.stack([sub[cand[j]] - sub[i] for j in (a, b, c_)])
                        det = abs(np.linalg.det(m))
                        if det > best_det:
                            best, best_det = (cand[a], cand[b], cand[c_]), det
        frames[i] = best
    return frames


def _frame_volumes(pts, moving, frames):
    sub = pts[:, moving]
    disp = sub[frames] - sub[:, None, :]
    if disp.shape[-1] == 1:
        return disp[:, 0, 0]
    return np.linalg.det(disp)


def evolve_characteristics(hs0, h, t_final, n_samples, dt, seed=0, quantile=False, caustic_guard=True, t0=0.0):
    """Integrate the ensemble from (rho0, S0) in ``hs0`` to ``t_final`` with RK4 steps of ``dt``.

    With ``caustic_guard`` the signed volume spanned by each sample and its
    neighbours is monitored; a sign change means characteristics crossed,
    and the run stops at the last pre-crossing time with ``caustic`` set.
    """
    _single(h)
    grid = h.grid
    if dt <= 0:
        raise ConfigError("time step must be positive")
    c = h.constants
    moving = [k for k, d in enumerate(DIRECTIONS) if d in h.axes.directions]
    sub = sample_positions(hs0.rho, grid, n_samples, seed, quantile)
    pos = np.zeros((len(sub), 3))
    pos[:, moving] = sub
    grad_s = _action_gradient(np.asarray(hs0.s, dtype=float), grid, sub)
    a = np.stack([np.broadcast_to(np.asarray(v, float), (len(pos),)) for v in h.gauge.vector(pos[:, 0], pos[:, 1], pos[:, 2], t0)], axis=1)
    mom = -(h.charges[0] / c.c) * a
    for j, k in enumerate(moving):
        mom[:, k] += grad_s[j]
    weights = np.full(len(pos), 1.0 / len(pos))
    ens = CharacteristicEnsemble(
        pos.copy(), mom.copy(), weights, t0, pos.copy(), mom.copy(), tuple(k in moving for k in range(3)),
        source={"n_samples": int(n_samples), "seed": int(seed), "sampling": "quantile" if quantile else "random", "dt": dt},
    )
    frames = _neighbour_frames(pos, moving) if caustic_guard and len(pos) > len(moving) else None
    base = _frame_volumes(pos, moving, frames) if frames is not None else None
    steps = int(np.ceil((t_final - t0) / dt - 1e-9))
    t = t0
    for n in range(steps):
        tau = min(dt, t_final - t)
        new_pos, new_mom = _rk4(h, pos, mom, t, tau)
        if frames is not None and np.any(_frame_volumes(new_pos, moving, frames) * base <= 0):
            ens.caustic = True
            ens.caustic_time = t + tau
            break
        pos, mom = new_pos, new_mom
        t = t0 + (n + 1) * dt if n + 1 < steps else t_final
    ens.positions, ens.momenta, ens.t = pos, mom, t
    return ens


# ---------------------------------------------------------------- fields from the ensemble

def silverman_bandwidth(samples, weights=None):
    """Per-dimension Silverman rule sigma (4/(d+2))^(1/(d+4)) n^(-1/(d+4))."""
    n, d = samples.shape
    w = np.full(n, 1.0 / n) if weights is None else weights
    mean = np.sum(w[:, None] * samples, axis=0)
    std = np.sqrt(np.sum(w[:, None] * (samples - mean) ** 2, axis=0))
    n_eff = 1.0 / np.sum(w * w)
    return tuple(float(s) * (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * n_eff ** (-1.0 / (d + 4.0)) for s in std)


def _kernel_sums(points, samples, weights, bandwidth, values, chunk=2048):
    """Gaussian-kernel sums over samples of weights * [1, values...] at each evaluation point."""
    d = samples.shape[1]
    bw = np.asarray(bandwidth)
    norm = 1.0 / (np.prod(bw) * (2.0 * np.pi) ** (0.5 * d))
    out = np.zeros((len(points), 1 + values.shape[1]))
    payload = np.concatenate([weights[:, None], weights[:, None] * values], axis=1)
    for i in range(0, len(points), chunk):
        p = points[i:i + chunk]
        r2 = np.sum(((p[:, None, :] - samples[None, :, :]) / bw) ** 2, axis=2)
        out[i:i + chunk] = norm * (np.exp(-0.5 * r2) @ payload)
    return out


def reconstruct_fields(ce, grid, bandwidth=None, strict=True):
    """Kernel estimates of rho and of the momentum map p(x) on ``grid``.

    After a caustic the momentum field is multivalued: with ``strict`` a
    CausticError is raised, otherwise only rho is returned (``p_map`` None).
    The momentum scatter within each kernel window is compared with what
    the linear variation of the map across one bandwidth allows.
    """
    moving = [k for k in range(3) if ce.moving[k]]
    if len(moving) != grid.ndim:
        raise ConfigError("grid dimension does not match the ensemble's moving directions")
    samples = ce.positions[:, moving]
    bw = tuple(bandwidth) if bandwidth is not None else silverman_bandwidth(samples, ce.weights)
    if len(bw) == 1 and grid.ndim > 1:
        bw = bw * grid.ndim
    pts = np.stack([m.ravel() for m in grid.mesh()], axis=1)
    refuse = ce.caustic
    if refuse and strict:
        raise CausticError(f"characteristics crossed at t = {ce.caustic_time}; the momentum map is not single valued")
    values = np.concatenate([ce.momenta, ce.momenta ** 2], axis=1)
    sums = _kernel_sums(pts, samples, ce.weights, bw, values)
    rho = sums[:, 0].reshape(grid.shape)
    if refuse:
        return PhaseSpaceDensity(rho, None, bw)
    safe = np.where(sums[:, 0] > 0, sums[:, 0], 1.0)
    mean = sums[:, 1:4] / safe[:, None]
    var = np.clip(sums[:, 4:7] / safe[:, None] - mean ** 2, 0.0, None)
    p_map = tuple(mean[:, k].reshape(grid.shape) for k in range(3))
    scatter = tuple(np.sqrt(var[:, k]).reshape(grid.shape) for k in range(3))
    bound = []
    for k in range(3):
        slope = sum(np.abs(np.gradient(p_map[k], grid.spacing[a], axis=a)) * bw[a] for a in range(grid.ndim))
        # the one-pass variance loses about sqrt(machine eps) relative to |p|
        bound.append(2.0 * slope + 1e-7 * (1.0 + np.abs(p_map[k])))
    return PhaseSpaceDensity(rho, p_map, bw, scatter, tuple(bound))


def quantile_density(ce, grid):
    """Density on a 1D grid from the quantile map of an ordered ensemble (noise free).

    Valid for ensembles sampled with ``quantile=True`` before any caustic:
    sample i carries cumulative probability (i + 1/2)/n, and rho = dF/dx.
    """
    if grid.ndim != 1 or sum(ce.moving) != 1:
        raise ConfigError("quantile densities are one dimensional")
    if ce.caustic:
        raise CausticError("quantile map is not monotone after a caustic")
    k = ce.moving.index(True)
    x = ce.positions[:, k]
    order = np.argsort(ce.initial_positions[:, k], kind="stable")
    xs = x[order]
    if np.any(np.diff(xs) <= 0):
        raise CausticError("ensemble order changed; characteristics crossed")
    n = len(xs)
    u = (np.arange(n) + 0.5) / n
    cdf = PchipInterpolator(xs, u, extrapolate=False)
    nodes = grid.axis_coords(0)
    rho = np.nan_to_num(cdf(nodes, 1), nan=0.0)
    return np.clip(rho, 0.0, None)


def ensemble_means(ce):
    w = ce.weights[:, None]
    return np.sum(w * ce.positions, axis=0), np.sum(w * ce.momenta, axis=0)


def write_ensemble_csv(path, ce):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "x", "y", "z", "p_x", "p_y", "p_z", "weight"])
        for i in range(len(ce.weights)):
            w.writerow([i, *(f"{v:.12e}" for v in ce.positions[i]), *(f"{v:.12e}" for v in ce.momenta[i]), f"{ce.weights[i]:.12e}"])


# ---------------------------------------------------------------- quantum vs classical

@dataclass
class ConvergenceScenario:
    """A fixed, hbar-independent initial (rho0, S0) problem.

    ``build(hbar)`` returns a HamiltonianSpec for that value of hbar;
    ``rho0`` and ``s0`` are arrays on its grid.
    """

    build: object
    rho0: np.ndarray
    s0: np.ndarray
    t_final: float
    dt: float
    n_samples: int = 20000
    classical_dt: float = None


@dataclass
class ConvergenceRow:
    hbar: float
    l1: float
    runtime: float


def hbar_convergence_study(scenario, hbar_sequence):
    """L1 distance between quantum and classical densities at ``t_final`` for each hbar."""
    from .madelung import HydroState

    rows = []
    h_classical = scenario.build(1.0)
    grid = h_classical.grid
    ce = evolve_characteristics(
        HydroState(scenario.rho0, scenario.s0), h_classical, scenario.t_final, scenario.n_samples,
        scenario.classical_dt or scenario.dt, quantile=True,
    )
    if ce.caustic:
        raise CausticError(f"the classical ensemble crosses at t = {ce.caustic_time}; shorten t_final")
    rho_c = quantile_density(ce, grid)
    for hbar in hbar_sequence:
        start = time.perf_counter()
        h = scenario.build(float(hbar))
        psi = normalize(np.sqrt(scenario.rho0) * np.exp(1j * scenario.s0 / hbar), grid)
        steps = int(round(scenario.t_final / scenario.dt))
        _, states = propagate(psi, h, PropagatorConfig(dt=scenario.dt), steps, every=steps)
        rho_q = np.abs(states[-1]) ** 2
        rows.append(ConvergenceRow(float(hbar), float(integrate(np.abs(rho_q - rho_c), grid)), time.perf_counter() - start))
    return rows


def write_study_csv(path, rows):
    """hbar and L1 distance per row; runtimes are kept out so the table is reproducible."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hbar", "l1_distance"])
        for r in rows:
            w.writerow([f"{r.hbar:.12g}", f"{r.l1:.12e}"])
