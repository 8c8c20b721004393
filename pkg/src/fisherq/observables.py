"""Expectation values and Ehrenfest-type relations for position, kinetic momentum and spin."""

import csv
from dataclasses import dataclass, asdict

import numpy as np

from .errors import InputError
from .evolution import rayleigh_quotient
from .gauge import field_strengths_at
from .grid import DIRECTIONS, differentiate, integrate
from .hamiltonian import PAULI

UNIFORM_DT_RTOL = 1e-9


@dataclass
class EnsembleReport:
    """Grid-quadrature expectations for one particle at time ``t``.

    ``mean_p_kinetic`` is the integral of the gauge-invariant current
    hbar Im(psi^* grad psi) - (e/c) A rho, which for spinors includes the
    internal spin contribution (hbar/2) cos(theta) grad phi.
    """

    t: float
    norm: float
    mean_x: np.ndarray
    mean_p_kinetic: np.ndarray
    mean_s: np.ndarray
    energy: float
    lorentz: np.ndarray
    dipole: np.ndarray
    mechanical: np.ndarray
    torque: np.ndarray
    mass: float
    moving: tuple = (True, True, True)

    @property
    def force(self):
        return self.lorentz + self.dipole + self.mechanical


def _components(psi, spinor):
    return psi if spinor else psi[None]


def _spin_density(psi, h):
    """(hbar/2) psi^dagger sigma_k psi for the single-particle spinor."""
    return [0.5 * h.constants.hbar * np.real(np.einsum("a...,ab,b...->...", np.conj(psi), PAULI[k], psi)) for k in range(3)]


def mean_spin(psi, h):
    """<s> for a single-particle spinor, without the rest of the report."""
    return np.array([integrate(s, h.grid) for s in _spin_density(psi, h)])


def _grid_derivative(f, h, particle, direction):
    axis = h.axes.axis(particle, direction)
    if axis is None:
        return np.zeros(h.grid.shape)
    return differentiate(f, h.grid, axis, 1, h.scheme)


def ensemble_report(psi, h, t=0.0, particle=0):
    """EnsembleReport of ``psi`` under the Hamiltonian ``h`` at time ``t``."""
    psi = np.asarray(psi, dtype=complex)
    spinor = h.is_spinor(psi)
    if spinor and h.n_particles > 1:
        raise InputError("ensemble_report handles one spin particle; use the reduced state per particle")
    comps = _components(psi, spinor)
    grid = h.grid
    c = h.constants
    m = h.masses[particle]
    e = h.charges[particle]
    rho = np.sum(np.abs(comps) ** 2, axis=0)
    norm = integrate(rho, grid)
    x, y, z = h.axes.coords(grid, particle)
    coords = [np.broadcast_to(np.asarray(v, float), grid.shape) for v in (x, y, z)]
    a = [np.broadcast_to(np.asarray(v, float), grid.shape) for v in h.gauge.vector(x, y, z, t)]
    current = []
    for k, d in enumerate(DIRECTIONS):
        canon = sum(np.imag(np.conj(cc) * _grid_derivative(cc, h, particle, d)) for cc in comps)
        current.append(c.hbar * canon - (e / c.c) * a[k] * rho)
    mean_x = np.array([integrate(rho * q, grid) for q in coords])
    mean_p = np.array([integrate(j, grid) for j in current])
    if spinor:
        sdens = _spin_density(psi, h)
        mean_s = np.array([integrate(s, grid) for s in sdens])
    else:
        sdens = None
        mean_s = np.zeros(3)
    energy = rayleigh_quotient(psi, h, t)
    fields = field_strengths_at(h.gauge, x, y, z, t, c)
    ef = [np.broadcast_to(np.asarray(v, float), grid.shape) for v in fields.e_field]
    bf = [np.broadcast_to(np.asarray(v, float), grid.shape) for v in fields.b_field]
    jxb = np.cross(np.stack(current), np.stack(bf), axis=0)
    lorentz = np.array([integrate(e * rho * ef[k] + (e / (m * c.c)) * jxb[k], grid) for k in range(3)])
    dipole = np.zeros(3)
    torque = np.zeros(3)
    if spinor and h.zeeman:
        bs = [np.broadcast_to(np.asarray(v, float), grid.shape) for v in h.gauge.spin_field(x, y, z, t)]
        grad_b = h.gauge.spin_field_gradient(x, y, z, t)
        gyro = e / (m * c.c)
        # dipole force -int mu_j d_l B_j with mu = -(e/mc) s
        dipole = np.array(
            [integrate(gyro * sum(sdens[j] * np.asarray(grad_b[j][l]) for j in range(3)), grid) for l in range(3)]
        )
        bxs = np.cross(np.stack(bs), np.stack(sdens), axis=0)
        torque = np.array([integrate(-gyro * bxs[k], grid) for k in range(3)])
    v = h.mechanical_potential(t)
    mechanical = np.array([-integrate(rho * _grid_derivative(v, h, particle, d), grid) for d in DIRECTIONS])
    moving = tuple(h.axes.axis(particle, d) is not None for d in DIRECTIONS)
    return EnsembleReport(
        float(t), float(norm), mean_x, mean_p, mean_s, energy, lorentz, dipole, mechanical, torque, m, moving
    )


def canonical_momentum(psi, h, particle=0):
    """Momentum expectation from the discrete Fourier transform of psi (periodic grids)."""
    psi = np.asarray(psi, dtype=complex)
    comps = _components(psi, h.is_spinor(psi))
    out = np.zeros(3)
    grid_axes = tuple(range(1, comps.ndim))
    power = np.sum(np.abs(np.fft.fftn(comps, axes=grid_axes)) ** 2, axis=0)
    total = power.sum()
    for k, d in enumerate(DIRECTIONS):
        axis = h.axes.axis(particle, d)
        if axis is None:
            continue
        shape = [1] * h.grid.ndim
        shape[axis] = -1
        kk = h.grid.wavenumbers(axis).reshape(shape)
        out[k] = h.constants.hbar * float(np.sum(power * kk) / total)
    return out


@dataclass
class EhrenfestResult:
    times: np.ndarray
    velocity: np.ndarray
    force: np.ndarray
    torque: np.ndarray
    tolerance: float

    @property
    def worst(self):
        return {
            "velocity": float(np.max(np.abs(self.velocity))) if self.velocity.size else 0.0,
            "force": float(np.max(np.abs(self.force))) if self.force.size else 0.0,
            "torque": float(np.max(np.abs(self.torque))) if self.torque.size else 0.0,
        }

    @property
    def passed(self):
        return all(v <= self.tolerance for v in self.worst.values())


def ehrenfest_check(reports, tolerance=1e-5, dt_coefficient=0.0):
    """Centered-difference residuals of the three Ehrenfest relations at interior reports.

    velocity: d<x>/dt - <p>/m along the directions the particle moves in
    (the state is uniform along the others, so <x> is not defined there); force: d<p>/dt - (Lorentz + dipole + mechanical);
    torque: d<s>/dt + (e/mc)<B x s>. The pass threshold is
    max(tolerance, dt_coefficient * dt^2).
    """
    if len(reports) < 3:
        raise InputError("need at least three consecutive reports")
    times = np.array([r.t for r in reports])
    steps = np.diff(times)
    dt = float(steps[0])
    if dt <= 0 or np.any(np.abs(steps - dt) > UNIFORM_DT_RTOL * max(abs(dt), 1.0)):
        raise InputError("reports must be evenly spaced in time")
    x = np.array([r.mean_x for r in reports])
    p = np.array([r.mean_p_kinetic for r in reports])
    s = np.array([r.mean_s for r in reports])
    f = np.array([r.force for r in reports])
    tq = np.array([r.torque for r in reports])
    mass = np.array([r.mass for r in reports])[:, None]
    moving = np.array(reports[0].moving, dtype=float)
    d = lambda a: (a[2:] - a[:-2]) / (2.0 * dt)  # noqa: E731
    return EhrenfestResult(
        times[1:-1],
        (d(x) - (p / mass)[1:-1]) * moving,
        d(p) - f[1:-1],
        d(s) - tq[1:-1],
        max(tolerance, dt_coefficient * dt * dt),
    )


REPORT_COLUMNS = (
    ["t", "norm"]
    + [f"x_{d}" for d in DIRECTIONS]
    + [f"p_{d}" for d in DIRECTIONS]
    + [f"s_{d}" for d in DIRECTIONS]
    + ["energy"]
    + [f"{kind}_{d}" for kind in ("lorentz", "dipole", "mechanical") for d in DIRECTIONS]
    + [f"ehrenfest_{kind}" for kind in ("velocity", "force", "torque")]
)


def report_rows(reports, ehrenfest=None):
    """Rows for REPORT_COLUMNS; Ehrenfest residuals are left blank at the two end points."""
    residual = {}
    if ehrenfest is not None:
        for i, t in enumerate(ehrenfest.times):
            residual[i + 1] = [
                float(np.max(np.abs(ehrenfest.velocity[i]))),
                float(np.max(np.abs(ehrenfest.force[i]))),
                float(np.max(np.abs(ehrenfest.torque[i]))),
            ]
    rows = []
    for i, r in enumerate(reports):
        row = [r.t, r.norm, *r.mean_x, *r.mean_p_kinetic, *r.mean_s, r.energy, *r.lorentz, *r.dipole, *r.mechanical]
        row += residual.get(i, ["", "", ""])
        rows.append(row)
    return rows


def write_report_csv(path, reports, ehrenfest=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for row in report_rows(reports, ehrenfest):
            w.writerow([f"{v:.12e}" if isinstance(v, float) else v for v in row])


def report_dict(report):
    out = asdict(report)
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in out.items()}
