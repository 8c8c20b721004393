"""Time stepping and imaginary-time ground states for :mod:`fisherq.hamiltonian`."""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConfigError, PropagationError
from .grid import DIRECTIONS, absorbing_mask, integrate
from .hamiltonian import PAULI, apply_hamiltonian

SCHEMES = ("crank-nicolson", "split-step-spectral")


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float
    scheme: str = "crank-nicolson"
    tol: float = 1e-12
    max_iter: int = 200
    absorb_width: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt < 0:
            raise ConfigError(f"time step must be non-negative, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not 0 < self.tol < 1:
            raise ConfigError("solver tolerance must lie in (0, 1)")


def norm(psi, grid):
    return float(np.sqrt(integrate(np.sum(np.abs(psi) ** 2, axis=tuple(range(psi.ndim - grid.ndim))), grid)))


def normalize(psi, grid):
    return psi / norm(psi, grid)


def _kinetic_symbol(h):
    """Fourier symbol of the free kinetic operator (used as a preconditioner)."""
    grid = h.grid
    hbar = h.constants.hbar
    total = np.zeros(grid.shape)
    for i in range(h.n_particles):
        for d in DIRECTIONS:
            a = h.axes.axis(i, d)
            if a is None:
                continue
            k = grid.wavenumbers(a)
            if h.scheme == "spectral":
                k2 = k * k
            else:
                hh = grid.spacing[a]
                k2 = (30.0 - 32.0 * np.cos(k * hh) + 2.0 * np.cos(2.0 * k * hh)) / (12.0 * hh * hh)
            shape = [1] * grid.ndim
            shape[a] = -1
            total = total + (hbar * hbar / (2.0 * h.masses[i])) * k2.reshape(shape)
    return total


def _fft_solver(h, coeff, shift):
    """Return v -> (1 + coeff (T + shift))^-1 v computed in Fourier space."""
    symbol = 1.0 + coeff * (_kinetic_symbol(h) + shift)
    g = h.grid.ndim

    def solve(v, shape):
        arr = v.reshape(shape)
        axes = tuple(range(arr.ndim - g, arr.ndim))
        return np.fft.ifftn(np.fft.fftn(arr, axes=axes) / symbol, axes=axes).ravel()

    return solve


def _solve(h, psi_shape, matvec, rhs, x0, precond, tol, max_iter):
    n = rhs.size
    op = LinearOperator((n, n), matvec=matvec, dtype=complex)
    m = LinearOperator((n, n), matvec=lambda v: precond(v, psi_shape), dtype=complex)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        return np.zeros_like(rhs)
    x = x0
    for _ in range(3):
        x, info = gmres(op, rhs, x0=x, rtol=tol, atol=0.0, restart=60, maxiter=max_iter, M=m)
        resid = np.linalg.norm(matvec(x) - rhs) / bnorm
        if resid <= tol * 10:
            return x
    raise PropagationError(f"linear solve did not converge (relative residual {resid:.3e})", residual=resid)


def _cn_step(psi, h, cfg, t):
    hbar = h.constants.hbar
    tm = t + 0.5 * cfg.dt
    coeff = 0.5j * cfg.dt / hbar
    shape = psi.shape

    def matvec(v):
        v = v.reshape(shape)
        return (v + coeff * apply_hamiltonian(v, h, tm)).ravel()

    rhs = (psi - coeff * apply_hamiltonian(psi, h, tm)).ravel()
    shift = float(np.mean(h.terms(tm)["diag"]))
    precond = _fft_solver(h, coeff, shift)
    x = _solve(h, shape, matvec, rhs, psi.ravel(), precond, cfg.tol, cfg.max_iter)
    return x.reshape(shape)


def _zeeman_exponential(psi, h, terms, tau):
    """Apply exp(-i tau mu_B sigma.B / hbar) per particle (tau is a time interval)."""
    hbar = h.constants.hbar
    n = h.n_particles
    out = psi
    for i in range(n):
        b = [np.broadcast_to(np.asarray(bk, float), h.grid.shape) for bk in terms["fields"][i]]
        mag = np.sqrt(b[0] ** 2 + b[1] ** 2 + b[2] ** 2)
        angle = h.bohr_magneton(i) * mag * tau / hbar
        safe = np.where(mag > 0, mag, 1.0)
        spin = out.reshape((2,) * n + h.grid.shape)
        rotated = np.cos(angle) * spin
        for k in range(3):
            sk = np.moveaxis(np.tensordot(PAULI[k], spin, axes=([1], [i])), 0, i)
            rotated = rotated - 1j * np.sin(angle) * (b[k] / safe) * sk
        out = rotated.reshape(psi.shape)
    return out


def _split_step(psi, h, cfg, t):
    if h.gauge.has_vector_potential:
        raise ConfigError("split-step-spectral requires a vanishing vector potential")
    if not h.grid.periodic:
        raise ConfigError("split-step-spectral requires a periodic grid")
    hbar = h.constants.hbar
    terms = h.terms(t + 0.5 * cfg.dt)
    half = np.exp(-0.5j * cfg.dt * terms["diag"] / hbar)
    g = h.grid.ndim
    axes = tuple(range(psi.ndim - g, psi.ndim))
    kinetic = np.exp(-1j * cfg.dt * _kinetic_symbol(h) / hbar)
    out = half * psi
    if h.zeeman:
        out = _zeeman_exponential(out, h, terms, 0.5 * cfg.dt)
    out = np.fft.ifftn(kinetic * np.fft.fftn(out, axes=axes), axes=axes)
    if h.zeeman:
        out = _zeeman_exponential(out, h, terms, 0.5 * cfg.dt)
    return half * out


def step(psi, h, cfg, t=0.0):
    """Advance psi from t to t + dt.

    Crank-Nicolson solves (1 + i dt H / 2 hbar) psi+ = (1 - i dt H / 2 hbar) psi
    with H at the midpoint, by preconditioned GMRES. Split-step applies the
    Strang splitting of the potential and kinetic exponentials (A = 0 only).
    """
    psi = np.asarray(psi, dtype=complex)
    h.is_spinor(psi)
    if cfg.dt == 0:
        return psi.copy()
    if cfg.scheme == "crank-nicolson":
        out = _cn_step(psi, h, cfg, t)
    else:
        out = _split_step(psi, h, cfg, t)
    if not h.grid.periodic and cfg.absorb_width > 0:
        out = out * absorbing_mask(h.grid, cfg.absorb_width)
    if not np.all(np.isfinite(out)):
        raise PropagationError("non-finite values after time step")
    return out


def propagate(psi, h, cfg, steps, t0=0.0, every=1):
    """Run ``steps`` steps; return (times, states) sampled every ``every`` steps, start included."""
    psi = np.asarray(psi, dtype=complex)
    times, states = [t0], [psi]
    t = t0
    for n in range(1, steps + 1):
        psi = step(psi, h, cfg, t)
        t = t0 + n * cfg.dt
        if n % every == 0:
            times.append(t)
            states.append(psi)
    return np.array(times), states


def rayleigh_quotient(psi, h, t=0.0):
    hpsi = apply_hamiltonian(psi, h, t)
    lead = tuple(range(psi.ndim - h.grid.ndim))
    num = integrate(np.sum(np.conj(psi) * hpsi, axis=lead), h.grid)
    den = integrate(np.sum(np.abs(psi) ** 2, axis=lead), h.grid)
    return float(np.real(num / den))


def _edge_minimum(v, grid):
    """True if a non-constant potential attains its minimum on the outermost node layers."""
    if np.ptp(v) == 0:
        return False
    at_min = v <= np.min(v) + 1e-12 * max(1.0, abs(np.min(v)))
    edge = np.zeros(grid.shape, dtype=bool)
    for a in range(grid.ndim):
        idx = [slice(None)] * grid.ndim
        for sl in (slice(0, 2), slice(-2, None)):
            idx[a] = sl
            edge[tuple(idx)] = True
    return bool(np.any(at_min & edge)) and not bool(np.any(at_min & ~edge))


def ground_state(h, cfg, psi0=None, t=0.0, energy_tol=1e-12):
    """Lowest state by implicit imaginary-time steps (1 + dtau (H - s)/hbar) psi+ = psi.

    ``cfg.dt`` is the imaginary time step, ``cfg.max_iter`` bounds the number of
    steps. ``s`` is a rigorous lower bound of H so the step is contractive.
    Returns (normalized state, Rayleigh-quotient energy).
    """
    grid = h.grid
    if _edge_minimum(h.mechanical_potential(t), grid):
        raise PropagationError("potential is lowest on the domain edge: unbounded below on this grid")
    if psi0 is None:
        psi0 = np.exp(-sum(x * x for x in grid.mesh()) / (2.0 * (0.1 * min(grid.lengths)) ** 2)).astype(complex)
    psi = normalize(np.asarray(psi0, dtype=complex), grid)
    h.is_spinor(psi)
    hbar = h.constants.hbar
    shift = h.lower_bound(t)
    dtau = cfg.dt if cfg.dt > 0 else 1.0
    coeff = dtau / hbar
    shape = psi.shape

    def matvec(v):
        v = v.reshape(shape)
        return (v + coeff * (apply_hamiltonian(v, h, t) - shift * v)).ravel()

    mean_diag = float(np.mean(h.terms(t)["diag"]))
    precond = _fft_solver(h, coeff, mean_diag - shift)
    energy = rayleigh_quotient(psi, h, t)
    history = [energy]
    for _ in range(max(cfg.max_iter, 1) * 5):
        new = _solve(h, shape, matvec, psi.ravel(), psi.ravel(), precond, min(cfg.tol, 1e-12), 500)
        psi = normalize(new.reshape(shape), grid)
        e_new = rayleigh_quotient(psi, h, t)
        history.append(e_new)
        if not np.isfinite(e_new) or e_new < shift - 1e-9 * max(1.0, abs(shift)):
            raise PropagationError("imaginary-time iteration diverged", residual=history)
        if abs(e_new - energy) <= energy_tol * max(1.0, abs(e_new)):
            hpsi = apply_hamiltonian(psi, h, t)
            resid = norm(hpsi - e_new * psi, grid)
            if resid <= 1e-5 * max(1.0, abs(e_new)):
                return psi, e_new
        energy = e_new
    raise PropagationError("imaginary-time iteration did not converge", residual=history)
