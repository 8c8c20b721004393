"""Hydrodynamic variables of scalar and spinor states, quantum terms and residual checks.

Scalar states split as psi = sqrt(rho) exp(iS/hbar). Spinors use the
(rho, S, theta, phi) parametrization

    psi = sqrt(rho) exp(iS/hbar) (cos(theta/2) exp(i phi/2), i sin(theta/2) exp(-i phi/2))

with spin vector s = (hbar/2)(sin theta sin phi, sin theta cos phi, cos theta).

Derivatives of the hydrodynamic fields are obtained by one of two routes:
``"state"`` rebuilds the wavefunction and works with component densities
and currents (robust for solver output whose phases are not periodic), and
``"fields"`` differentiates rho directly and the angles through their unit
phasors (used for smooth analytic test fields).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UnwrapWarning
from .grid import DIRECTIONS, differentiate, integrate

RHO_FLOOR = 1e-12
RESIDUAL_MASK = 1e-6
SIN_FLOOR = 1e-3


@dataclass
class HydroState:
    rho: np.ndarray
    s: np.ndarray


@dataclass
class SpinHydroState:
    rho: np.ndarray
    s: np.ndarray
    theta: np.ndarray
    phi_angle: np.ndarray
    degenerate: bool = False


@dataclass
class VortexReport:
    plaquettes: list = field(default_factory=list)
    unwrap_mask: np.ndarray = None

    @property
    def count(self):
        return len(self.plaquettes)


@dataclass
class InternalPotentials:
    a_s: tuple
    phi_s: np.ndarray
    mask: np.ndarray
    degenerate: bool


@dataclass
class QuantumTerms:
    l0: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    mask: np.ndarray
    coverage: float


@dataclass
class Residual:
    """Pointwise residual with absolute and relative L2 norms over ``mask``.

    The relative norm divides by the largest L2 norm among the individual
    terms of the equation, each of which is gauge invariant.
    """

    field: np.ndarray
    mask: np.ndarray
    norm: float
    relative: float
    term_norms: dict
    mask_fraction: float
    max_abs: float = 0.0


def _masked_norm(f, mask, grid):
    return float(np.sqrt(integrate(np.where(mask, np.abs(f) ** 2, 0.0), grid)))


def _residual(terms, mask, grid):
    total = sum(terms.values())
    norms = {k: _masked_norm(v, mask, grid) for k, v in terms.items()}
    scale = max(norms.values()) if norms else 0.0
    n = _masked_norm(total, mask, grid)
    rel = n / scale if scale > 1e-300 else (0.0 if n == 0 else np.inf)
    field = np.where(mask, total, 0.0)
    return Residual(field, mask, n, rel, norms, float(np.mean(mask)), float(np.max(np.abs(field))))


def _wrap(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _safe_div(num, den, floor):
    ok = den > floor
    return np.where(ok, num / np.where(ok, den, 1.0), 0.0)


# ---------------------------------------------------------------- unwrapping

def _unwrap_staircase(z, ref, floor_mask=None):
    """Continuous phase of the complex field z along axis-ordered staircases from ``ref``.

    Returns (phase, affected) where ``affected`` marks points whose path
    crosses an entry of ``floor_mask``.
    """
    phase = np.angle(z)
    out = np.zeros(z.shape)
    bad = np.zeros(z.shape, dtype=bool) if floor_mask is None else floor_mask.copy()
    affected = np.zeros(z.shape, dtype=bool)
    ndim = z.ndim
    ref = tuple(int(r) for r in ref)
    # start from the reference value and extend one axis at a time
    base_val = np.full((1,) * ndim, phase[ref])
    base_bad = np.full((1,) * ndim, bool(bad[ref]))
    for a in range(ndim):
        idx = tuple(slice(None) if b <= a else slice(ref[b], ref[b] + 1) for b in range(ndim))
        zz = z[idx]
        inc = np.angle(np.take(zz, range(1, zz.shape[a]), axis=a) * np.conj(np.take(zz, range(0, zz.shape[a] - 1), axis=a)))
        zero_shape = list(inc.shape)
        zero_shape[a] = 1
        cum = np.concatenate([np.zeros(zero_shape), np.cumsum(inc, axis=a)], axis=a)
        cum = cum - np.take(cum, [ref[a]], axis=a)
        bb = bad[idx].astype(np.int64)
        cb = np.cumsum(bb, axis=a)
        # number of bad points strictly between ref and i, inclusive of i
        at_ref = np.take(cb, [ref[a]], axis=a)
        pos = np.arange(zz.shape[a]).reshape([-1 if b == a else 1 for b in range(ndim)])
        before = np.concatenate([np.zeros(zero_shape, dtype=np.int64), np.take(cb, range(0, zz.shape[a] - 1), axis=a)], axis=a)
        crossed = np.where(pos >= ref[a], cb - at_ref + np.take(bb, [ref[a]], axis=a), at_ref - before)
        base_val = base_val + cum
        base_bad = base_bad | (crossed > 0)
    out[...] = base_val
    affected[...] = base_bad
    return out, affected


def _vortices(z, valid):
    """Plaquettes whose wrapped phase circulation is a nonzero multiple of 2 pi."""
    found = []
    ndim = z.ndim
    for a in range(ndim):
        for b in range(a + 1, ndim):
            n_a, n_b = z.shape[a], z.shape[b]

            def corner(da, db):
                idx = [slice(None)] * ndim
                idx[a] = slice(da, n_a - 1 + da)
                idx[b] = slice(db, n_b - 1 + db)
                return tuple(idx)

            c00, c10, c11, c01 = corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)
            circ = (
                np.angle(z[c10] * np.conj(z[c00]))
                + np.angle(z[c11] * np.conj(z[c10]))
                + np.angle(z[c01] * np.conj(z[c11]))
                + np.angle(z[c00] * np.conj(z[c01]))
            )
            ok = valid[c00] & valid[c10] & valid[c11] & valid[c01]
            winding = np.rint(circ / (2.0 * np.pi)).astype(int)
            for pos in zip(*np.nonzero((winding != 0) & ok)):
                found.append({"index": tuple(int(p) for p in pos), "axes": (a, b), "winding": int(winding[pos])})
    return found


def hydro_to_psi(hs, hbar=1.0):
    """psi = sqrt(rho) exp(iS/hbar)."""
    return np.sqrt(np.asarray(hs.rho)) * np.exp(1j * np.asarray(hs.s) / hbar)


def psi_to_hydro(psi, hbar=1.0, rho_floor=RHO_FLOOR):
    """(rho, S) with S unwrapped along staircases from the density maximum, plus vortex report.

    Emits :class:`UnwrapWarning` when paths cross points with rho below
    ``rho_floor * max(rho)``; the affected points are in ``report.unwrap_mask``.
    """
    psi = np.asarray(psi, dtype=complex)
    rho = np.abs(psi) ** 2
    floor = rho_floor * float(np.max(rho))
    low = rho <= floor
    ref = np.unravel_index(int(np.argmax(rho)), rho.shape)
    phase, affected = _unwrap_staircase(psi, ref, low)
    if np.any(affected):
        warnings.warn(f"{int(affected.sum())} points unwrapped across sub-floor density", UnwrapWarning, stacklevel=2)
    report = VortexReport(_vortices(psi, ~low), affected)
    for v in report.plaquettes:
        v["circulation"] = 2.0 * np.pi * hbar * v["winding"]
    return HydroState(rho, hbar * phase), report


def takabayasi_split(psi_hat, hbar=1.0, rho_floor=RHO_FLOOR):
    """(rho, S, theta, phi) from a two-component spinor.

    S = hbar(arg psi1 + arg psi2 - pi/2)/2 and phi = arg psi1 - arg psi2 + pi/2,
    both unwrapped continuously from the density maximum with the branch at
    the reference point fixed so that joining reproduces psi exactly.
    A component that vanishes identically gives theta in {0, pi}, phi = 0
    and ``degenerate = True``.
    """
    psi_hat = np.asarray(psi_hat, dtype=complex)
    if psi_hat.shape[0] != 2:
        raise ConfigError("takabayasi_split needs a two-component spinor")
    p1, p2 = psi_hat[0], psi_hat[1]
    r1, r2 = np.abs(p1) ** 2, np.abs(p2) ** 2
    rho = r1 + r2
    theta = 2.0 * np.arctan2(np.abs(p2), np.abs(p1))
    rmax = float(np.max(rho))
    floor = rho_floor * rmax
    ref = np.unravel_index(int(np.argmax(rho)), rho.shape)
    if np.all(r2 <= 0.0) or np.all(r1 <= 0.0):
        upper = np.all(r2 <= 0.0)
        carrier = p1 if upper else -1j * p2
        phase, _ = _unwrap_staircase(carrier, ref, rho <= floor)
        theta = np.zeros_like(rho) if upper else np.full_like(rho, np.pi)
        return SpinHydroState(rho, hbar * phase, theta, np.zeros_like(rho), degenerate=True)
    prod = -1j * p1 * p2
    quot = 1j * p1 * np.conj(p2)
    low = np.abs(prod) <= floor
    ref = np.unravel_index(int(np.argmax(np.abs(prod))), rho.shape)
    u, aff_u = _unwrap_staircase(prod, ref, low)
    p, aff_p = _unwrap_staircase(quot, ref, low)
    # choose branches at the reference so that (u + p)/2 equals arg psi1 there
    a1, a2 = np.angle(p1[ref]), np.angle(p2[ref])
    u += (a1 + a2 - 0.5 * np.pi) - u[ref]
    p += (a1 - a2 + 0.5 * np.pi) - p[ref]
    if np.any(aff_u | aff_p):
        warnings.warn("spinor phases unwrapped across near-degenerate points", UnwrapWarning, stacklevel=2)
    return SpinHydroState(rho, 0.5 * hbar * u, theta, p)


def takabayasi_join(shs, hbar=1.0):
    amp = np.sqrt(np.asarray(shs.rho)) * np.exp(1j * np.asarray(shs.s) / hbar)
    half_t = 0.5 * np.asarray(shs.theta)
    half_p = 0.5 * np.asarray(shs.phi_angle)
    return np.stack([amp * np.cos(half_t) * np.exp(1j * half_p), 1j * amp * np.sin(half_t) * np.exp(-1j * half_p)])


def spin_vector(shs, hbar=1.0):
    """(s_x, s_y, s_z) = (hbar/2)(sin theta sin phi, sin theta cos phi, cos theta)."""
    st = np.sin(shs.theta)
    return (0.5 * hbar * st * np.sin(shs.phi_angle), 0.5 * hbar * st * np.cos(shs.phi_angle), 0.5 * hbar * np.cos(shs.theta))


# ---------------------------------------------------------------- derivative jets

@dataclass
class Jet:
    """Values, gradients (one array per grid axis) and Laplacians of the hydro fields."""

    rho: np.ndarray
    grad_rho: list
    lap_rho: np.ndarray
    momentum: list            # grad S + (hbar/2) cos(theta) grad phi, per grid axis
    spin: bool = False
    theta: np.ndarray = None
    grad_theta: list = None
    lap_theta: np.ndarray = None
    phi_angle: np.ndarray = None
    grad_phi: list = None
    lap_phi: np.ndarray = None
    lap_sqrt_over_sqrt: np.ndarray = None
    mask: np.ndarray = None


def _grid_axes(h):
    return [h.axes.axis(0, d) for d in DIRECTIONS if h.axes.axis(0, d) is not None]


def _all_axes(grid):
    return list(range(grid.ndim))


def _lap_sqrt(rho, grid, scheme, floor):
    root = np.sqrt(rho)
    lap = sum(differentiate(root, grid, a, 2, scheme) for a in _all_axes(grid))
    return _safe_div(lap, root, np.sqrt(floor))


def _phasor_derivs(angle, grid, scheme):
    u = np.exp(1j * angle)
    grads = [np.imag(np.conj(u) * differentiate(u, grid, a, 1, scheme)) for a in _all_axes(grid)]
    lap = np.imag(np.conj(u) * sum(differentiate(u, grid, a, 2, scheme) for a in _all_axes(grid)))
    return grads, lap


def jet_from_fields(state, grid, hbar=1.0, scheme=None, rho_floor=RHO_FLOOR):
    """Jet by direct differentiation: rho as is, S and the angles through unit phasors."""
    rho = np.asarray(state.rho, dtype=float)
    floor = rho_floor * float(np.max(rho))
    axes = _all_axes(grid)
    grad_rho = [differentiate(rho, grid, a, 1, scheme) for a in axes]
    lap_rho = sum(differentiate(rho, grid, a, 2, scheme) for a in axes)
    grad_s, _ = _phasor_derivs(np.asarray(state.s) / hbar, grid, scheme)
    grad_s = [hbar * gs for gs in grad_s]
    jet = Jet(rho, grad_rho, lap_rho, grad_s, mask=rho > floor)
    jet.lap_sqrt_over_sqrt = _lap_sqrt(rho, grid, scheme, floor)
    if isinstance(state, SpinHydroState):
        jet.spin = True
        jet.theta, jet.phi_angle = np.asarray(state.theta), np.asarray(state.phi_angle)
        jet.grad_theta, jet.lap_theta = _phasor_derivs(jet.theta, grid, scheme)
        jet.grad_phi, jet.lap_phi = _phasor_derivs(jet.phi_angle, grid, scheme)
        c = np.cos(jet.theta)
        jet.momentum = [gs + 0.5 * hbar * c * gp for gs, gp in zip(grad_s, jet.grad_phi)]
    return jet


def jet_from_state(state, grid, hbar=1.0, scheme=None, rho_floor=RHO_FLOOR):
    """Jet through the wavefunction: component densities, currents and their derivatives."""
    axes = _all_axes(grid)
    if isinstance(state, SpinHydroState):
        comps = takabayasi_join(state, hbar)
    else:
        comps = hydro_to_psi(state, hbar)[None]
    dpsi = [[differentiate(c, grid, a, 1, scheme) for a in axes] for c in comps]
    lpsi = [sum(differentiate(c, grid, a, 2, scheme) for a in axes) for c in comps]
    dens = [np.abs(c) ** 2 for c in comps]
    rho = sum(dens)
    floor = rho_floor * float(np.max(rho))
    grad_dens = [[2.0 * np.real(np.conj(c) * d) for d in dc] for c, dc in zip(comps, dpsi)]
    lap_dens = [
        2.0 * np.real(np.conj(c) * lc) + 2.0 * sum(np.abs(d) ** 2 for d in dc)
        for c, dc, lc in zip(comps, dpsi, lpsi)
    ]
    curr = [[np.imag(np.conj(c) * d) for d in dc] for c, dc in zip(comps, dpsi)]
    grad_rho = [sum(gd[i] for gd in grad_dens) for i in range(len(axes))]
    lap_rho = sum(lap_dens)
    momentum = [hbar * _safe_div(sum(cu[i] for cu in curr), rho, floor) for i in range(len(axes))]
    jet = Jet(rho, grad_rho, lap_rho, momentum, mask=rho > floor)
    jet.lap_sqrt_over_sqrt = np.where(
        jet.mask,
        0.5 * _safe_div(lap_rho, rho, floor) - 0.25 * _safe_div(sum(g * g for g in grad_rho), rho * rho, floor * floor),
        0.0,
    )
    if isinstance(state, SpinHydroState):
        jet.spin = True
        r1, r2 = dens
        c1 = [_safe_div(cu, r1, floor) for cu in curr[0]]
        c2 = [_safe_div(cu, r2, floor) for cu in curr[1]]
        lchi = []
        for k in range(2):
            num = np.imag(np.conj(comps[k]) * lpsi[k]) - sum(
                gd * cc for gd, cc in zip(grad_dens[k], (c1, c2)[k])
            )
            lchi.append(_safe_div(num, dens[k], floor))
        jet.phi_angle = np.asarray(state.phi_angle)
        jet.grad_phi = [a - b for a, b in zip(c1, c2)]
        jet.lap_phi = lchi[0] - lchi[1]
        u = _safe_div(r1 - r2, rho, floor)
        diff_grad = [a - b for a, b in zip(grad_dens[0], grad_dens[1])]
        grad_u = [_safe_div(dg - u * gr, rho, floor) for dg, gr in zip(diff_grad, grad_rho)]
        lap_u = _safe_div(
            (lap_dens[0] - lap_dens[1]) - u * lap_rho - 2.0 * sum(a * b for a, b in zip(grad_u, grad_rho)), rho, floor
        )
        sin_t = _safe_div(2.0 * np.sqrt(r1 * r2), rho, floor)
        jet.theta = np.asarray(state.theta)
        jet.grad_theta = [_safe_div(-gu, sin_t, SIN_FLOOR * 1e-3) for gu in grad_u]
        gt2 = sum(g * g for g in jet.grad_theta)
        jet.lap_theta = _safe_div(-lap_u - u * gt2, sin_t, SIN_FLOOR * 1e-3)
    return jet


def make_jet(state, grid, hbar=1.0, route="state", scheme=None, rho_floor=RHO_FLOOR):
    if route == "state":
        return jet_from_state(state, grid, hbar, scheme, rho_floor)
    if route == "fields":
        return jet_from_fields(state, grid, hbar, scheme, rho_floor)
    raise ConfigError(f"unknown derivative route {route!r}")


# ---------------------------------------------------------------- potentials and quantum terms

def _single_particle(h):
    if h.n_particles != 1:
        raise ConfigError("spin hydrodynamics is implemented for a single particle")


def _axis_direction_pairs(h):
    """(grid axis index within jet lists, direction index) for the moving directions of particle 0."""
    out = []
    for k, d in enumerate(DIRECTIONS):
        a = h.axes.axis(0, d)
        if a is not None:
            out.append((a, k))
    return out


def internal_potentials(shs, h, slices=None, dt=None, route="state"):
    """Spin vector potential A^(s)_l = -(hbar c/2e) cos(theta) d_l phi and phi^(s) = (hbar/2e) cos(theta) d_t phi.

    ``slices`` = (previous, next) SpinHydroStates spaced ``2 dt`` apart give
    the time derivative; without them ``phi_s`` is None. Points where
    sin(theta) is tiny and phi jumps are masked and flagged.
    """
    _single_particle(h)
    c = h.constants
    e = h.charges[0]
    if e == 0:
        raise ConfigError("internal potentials need a nonzero charge")
    jet = make_jet(shs, h.grid, c.hbar, route, h.scheme)
    cos_t = np.cos(shs.theta)
    a_s = [np.zeros(h.grid.shape) for _ in range(3)]
    for a, k in _axis_direction_pairs(h):
        a_s[k] = -(c.hbar * c.c / (2.0 * e)) * cos_t * jet.grad_phi[a]
    phi_s = None
    if slices is not None:
        prev, nxt = slices
        phi_t = _wrap(np.asarray(nxt.phi_angle) - np.asarray(prev.phi_angle)) / (2.0 * dt)
        phi_s = (c.hbar / (2.0 * e)) * cos_t * phi_t
    sin_t = np.sin(shs.theta)
    mask = jet.mask & (sin_t > SIN_FLOOR)
    jumps = np.zeros(h.grid.shape, dtype=bool)
    for a in range(h.grid.ndim):
        d = np.abs(_wrap(np.diff(shs.phi_angle, axis=a)))
        pad = [(0, 0)] * h.grid.ndim
        pad[a] = (0, 1)
        jumps |= np.pad(d > 0.5 * np.pi, pad)
    degenerate_pts = (sin_t <= SIN_FLOOR) & jumps
    mask &= ~degenerate_pts
    degenerate = bool(np.any(degenerate_pts & jet.mask)) or shs.degenerate
    return InternalPotentials(tuple(a_s), phi_s, mask, degenerate)


def _spin_field(h, x, y, z, t):
    if not h.zeeman:
        return (0.0, 0.0, 0.0)
    return h.gauge.spin_field(x, y, z, t)


def _dot(u, v):
    return sum(a * b for a, b in zip(u, v))


def quantum_terms(state, h, route="state"):
    """L0 and the G fields.

    L0 = (hbar^2/2m)[Lap sqrt(rho)/sqrt(rho) - sin^2(theta)|grad phi|^2/4 - |grad theta|^2/4]
    and G1, G2, G3 from the divergence forms, expanded by the product rule in
    terms of the derivatives of rho, theta and phi. Scalar states (and N
    particles) give the sum over particles of (hbar^2/2m_I) Lap_I sqrt(rho)/sqrt(rho) with G = 0.
    """
    grid, c = h.grid, h.constants
    hbar = c.hbar
    jet = make_jet(state, grid, hbar, route, h.scheme)
    zeros = np.zeros(grid.shape)
    if not jet.spin:
        if h.n_particles == 1:
            l0 = (hbar ** 2 / (2.0 * h.masses[0])) * jet.lap_sqrt_over_sqrt
        else:
            root = np.sqrt(jet.rho)
            floor = np.sqrt(RHO_FLOOR * float(np.max(jet.rho)))
            l0 = zeros.copy()
            for i in range(h.n_particles):
                lap = sum(
                    differentiate(root, grid, h.axes.axis(i, d), 2, h.scheme)
                    for d in h.axes.directions
                )
                l0 += (hbar ** 2 / (2.0 * h.masses[i])) * _safe_div(lap, root, floor)
        mask = jet.mask
        return QuantumTerms(np.where(mask, l0, 0.0), zeros, zeros, zeros, mask, _coverage(jet.rho, mask))
    _single_particle(h)
    m = h.masses[0]
    th, ph = jet.theta, jet.phi_angle
    st = np.sin(th)
    sp, cp = np.sin(ph), np.cos(ph)
    s2t, c2t = np.sin(2.0 * th), np.cos(2.0 * th)
    gphi2 = _dot(jet.grad_phi, jet.grad_phi)
    gth2 = _dot(jet.grad_theta, jet.grad_theta)
    gtp = _dot(jet.grad_theta, jet.grad_phi)
    floor = RHO_FLOOR * float(np.max(jet.rho))
    gr_phi = _safe_div(_dot(jet.grad_rho, jet.grad_phi), jet.rho, floor)
    gr_th = _safe_div(_dot(jet.grad_rho, jet.grad_theta), jet.rho, floor)
    l0 = (hbar ** 2 / (2.0 * m)) * (jet.lap_sqrt_over_sqrt - 0.25 * st * st * gphi2 - 0.25 * gth2)
    k = hbar / (2.0 * m)
    g3 = -k * (st * st * gr_phi + s2t * gtp + st * st * jet.lap_phi)
    f1 = 0.5 * s2t * sp
    g1 = k * (
        f1 * gr_phi + c2t * sp * gtp + 0.5 * s2t * cp * gphi2 + f1 * jet.lap_phi
        - cp * gr_th + sp * gtp - cp * jet.lap_theta
    )
    f2 = 0.5 * s2t * cp
    g2 = k * (
        f2 * gr_phi + c2t * cp * gtp - 0.5 * s2t * sp * gphi2 + f2 * jet.lap_phi
        + sp * gr_th + cp * gtp + sp * jet.lap_theta
    )
    mask = jet.mask & (st > SIN_FLOOR)
    z = lambda f: np.where(mask, f, 0.0)  # noqa: E731
    return QuantumTerms(z(l0), z(g1), z(g2), z(g3), mask, _coverage(jet.rho, mask))


def _coverage(rho, mask):
    total = float(np.sum(rho))
    return float(np.sum(np.where(mask, rho, 0.0)) / total) if total > 0 else 0.0


# ---------------------------------------------------------------- residuals

def _time_derivative(prev, nxt, dt, wrap=False, period=2.0 * np.pi):
    d = np.asarray(nxt) - np.asarray(prev)
    if wrap:
        d = (d + 0.5 * period) % period - 0.5 * period
    return d / (2.0 * dt)


def _residual_mask(rho, mask_rel):
    return rho > mask_rel * float(np.max(rho))


def _kinetic_momentum(h, jet, t):
    """Per particle and direction: m v = grad S + (hbar/2) cos(theta) grad phi - (e/c) A, as lists [I][k]."""
    out = []
    for i in range(h.n_particles):
        x, y, z = h.axes.coords(h.grid, i)
        a = h.gauge.vector(x, y, z, t)
        q = h.charges[i] / h.constants.c
        row = []
        for k, d in enumerate(DIRECTIONS):
            ax = h.axes.axis(i, d)
            p = jet.momentum[ax] if ax is not None else 0.0
            row.append(p - q * a[k])
        out.append(row)
    return out


def _flux_divergence(state, h, t, route):
    """Divergence of the probability current rho v summed over particles."""
    hbar = h.constants.hbar
    grid = h.grid
    total = np.zeros(grid.shape)
    if route == "state":
        comps = takabayasi_join(state, hbar) if isinstance(state, SpinHydroState) else hydro_to_psi(state, hbar)[None]
        rho = sum(np.abs(cc) ** 2 for cc in comps)
        for i in range(h.n_particles):
            x, y, z = h.axes.coords(grid, i)
            a = h.gauge.vector(x, y, z, t)
            q = h.charges[i] / h.constants.c
            for k, d in enumerate(DIRECTIONS):
                ax = h.axes.axis(i, d)
                if ax is None:
                    continue
                cur = hbar * sum(np.imag(np.conj(cc) * differentiate(cc, grid, ax, 1, h.scheme)) for cc in comps)
                total += differentiate((cur - q * a[k] * rho) / h.masses[i], grid, ax, 1, h.scheme)
        return total
    jet = make_jet(state, grid, hbar, route, h.scheme)
    mv = _kinetic_momentum(h, jet, t)
    for i in range(h.n_particles):
        for k, d in enumerate(DIRECTIONS):
            ax = h.axes.axis(i, d)
            if ax is not None:
                total += differentiate(jet.rho * mv[i][k] / h.masses[i], grid, ax, 1, h.scheme)
    return total


def continuity_residual(slices, h, t, dt, route="state", mask_rel=RESIDUAL_MASK):
    """Residual of d rho/dt + div(rho v) = 0 at the middle of three slices spaced dt apart."""
    prev, cur, nxt = slices
    rho_t = _time_derivative(prev.rho, nxt.rho, dt)
    div = _flux_divergence(cur, h, t, route)
    mask = _residual_mask(cur.rho, mask_rel)
    return _residual({"drho_dt": rho_t, "div_flux": div}, mask, h.grid)


def hj_residual(slices, h, t, dt, route="state", mask_rel=RESIDUAL_MASK, drop_quantum=False):
    """Residual of the (generalized) Hamilton-Jacobi equation at the middle slice.

    Scalar: S_t + e phi + (grad S - e A/c)^2/2m + V - (hbar^2/2m) Lap sqrt(rho)/sqrt(rho).
    Spinor: S_t + e(phi + phi_s) + (grad S - e A_hat/c)^2/2m + mu.B + V - L0,
    with A_hat = A + A^(s) and mu = -(e/mc) s. ``drop_quantum`` removes the
    L0 term (a negative control).
    """
    prev, cur, nxt = slices
    c = h.constants
    grid = h.grid
    spin = isinstance(cur, SpinHydroState)
    s_t = _time_derivative(prev.s, nxt.s, dt, wrap=True, period=2.0 * np.pi * c.hbar)
    if spin:
        # S is defined modulo pi hbar when the spinor phases are unwrapped jointly
        s_t = _time_derivative(prev.s, nxt.s, dt, wrap=True, period=np.pi * c.hbar)
    jet = make_jet(cur, grid, c.hbar, route, h.scheme)
    mv = _kinetic_momentum(h, jet, t)
    kinetic = sum(sum(p * p for p in mv[i]) / (2.0 * h.masses[i]) for i in range(h.n_particles))
    scalar_pot = s_t.copy()
    for i in range(h.n_particles):
        x, y, z = h.axes.coords(grid, i)
        scalar_pot = scalar_pot + h.charges[i] * h.gauge.scalar(x, y, z, t)
    terms = {"kinetic": kinetic, "potential": h.mechanical_potential(t)}
    mask = _residual_mask(cur.rho, mask_rel) & jet.mask
    qt = quantum_terms(cur, h, route)
    if spin:
        _single_particle(h)
        phi_t = _time_derivative(prev.phi_angle, nxt.phi_angle, dt, wrap=True)
        scalar_pot = scalar_pot + 0.5 * c.hbar * np.cos(cur.theta) * phi_t
        x, y, z = h.axes.coords(grid, 0)
        b = _spin_field(h, x, y, z, t)
        s = spin_vector(cur, c.hbar)
        gyro = h.charges[0] / (h.masses[0] * c.c)
        terms["zeeman"] = -gyro * sum(sk * bk for sk, bk in zip(s, b))
        mask &= np.sin(cur.theta) > SIN_FLOOR
    terms["time_and_scalar"] = scalar_pot
    if not drop_quantum:
        terms["quantum"] = -qt.l0
    return _residual(terms, mask, grid)


def spin_evolution_residual(slices, h, t, dt, route="state", mask_rel=RESIDUAL_MASK):
    """Residuals of the theta and phi transport equations with torque and G terms.

    phi (times sin th): sin th (phi_t + v.grad phi)
         - (e/mc)(B_z sin th - B_y cos th cos phi - B_x cos th sin phi) - (cos phi G1 - sin phi G2)
    theta: theta_t + v.grad theta - (e/mc)(B_x cos phi - B_y sin phi) + G3/sin th
    Returns (theta residual, phi residual).
    """
    _single_particle(h)
    prev, cur, nxt = slices
    c = h.constants
    grid = h.grid
    jet = make_jet(cur, grid, c.hbar, route, h.scheme)
    qt = quantum_terms(cur, h, route)
    mv = _kinetic_momentum(h, jet, t)[0]
    m = h.masses[0]
    x, y, z = h.axes.coords(grid, 0)
    bx, by, bz = _spin_field(h, x, y, z, t)
    th, ph = np.asarray(cur.theta), np.asarray(cur.phi_angle)
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    safe_st = np.where(st > SIN_FLOOR, st, 1.0)
    gyro = h.charges[0] / (m * c.c)
    adv_th = np.zeros(grid.shape)
    adv_ph = np.zeros(grid.shape)
    for a, k in _axis_direction_pairs(h):
        v = mv[k] / m
        adv_th += v * jet.grad_theta[a]
        adv_ph += v * jet.grad_phi[a]
    th_t = _time_derivative(prev.theta, nxt.theta, dt)
    ph_t = _time_derivative(prev.phi_angle, nxt.phi_angle, dt, wrap=True)
    mask = _residual_mask(cur.rho, mask_rel) & qt.mask
    r_theta = _residual(
        {
            "dtheta_dt": th_t,
            "advection": adv_th,
            "torque": -gyro * (bx * cp - by * sp),
            "g_term": qt.g3 / safe_st,
        },
        mask,
        grid,
    )
    # phi is weighted by sin(theta): the azimuthal speed of the unit spin
    # vector, which stays finite where phi itself is ill-conditioned
    r_phi = _residual(
        {
            "dphi_dt": st * ph_t,
            "advection": st * adv_ph,
            "torque": -gyro * (bz * st - by * ct * cp - bx * ct * sp),
            "g_term": -(cp * qt.g1 - sp * qt.g2),
        },
        mask,
        grid,
    )
    return r_theta, r_phi


def velocity_field(state, h, t, route="state"):
    """Gauge-invariant velocity (grad S + (hbar/2) cos(theta) grad phi - (e/c) A)/m for particle 0."""
    jet = make_jet(state, h.grid, h.constants.hbar, route, h.scheme)
    mv = _kinetic_momentum(h, jet, t)[0]
    return tuple(np.where(jet.mask, p / h.masses[0], 0.0) for p in mv)


def zero_mean_force(state, h, route="state"):
    """Integrals of (d rho/d x_k) L0 over the grid axes; these vanish for a proper L0."""
    qt = quantum_terms(state, h, route)
    jet = make_jet(state, h.grid, h.constants.hbar, route, h.scheme)
    return [integrate(np.where(qt.mask, g * qt.l0, 0.0), h.grid) for g in jet.grad_rho]
