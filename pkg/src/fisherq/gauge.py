"""Potentials, gauge transformations, field strengths and path phase factors.

Gaussian-style units throughout: the kinetic momentum is grad S - (e/c) A,
E = -(1/c) dA/dt - grad phi and B = curl A. Potentials are callables
``f(x, y, z, t)`` acting elementwise on arrays, so they can be sampled on a
grid or at arbitrary points (trajectories, quadrature nodes). Derivatives of
potentials use fourth-order finite differences of these callables, which
keeps mixed derivatives exactly symmetric.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .expr import Expression
from .grid import DIRECTIONS, ParticleAxes

FD_STEP = 1e-3
_FD_OFFSETS = (-2.0, -1.0, 1.0, 2.0)
_FD_WEIGHTS = (1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0)


@dataclass(frozen=True)
class Constants:
    hbar: float = 1.0
    m: float = 1.0
    e: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "m", "c"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"constant {name} must be positive, got {value}")
        if not np.isfinite(self.e):
            raise ConfigError("charge must be finite")

    @property
    def bohr_magneton(self):
        """mu_B = -hbar e / (2 m c); negative for positive charge."""
        return -self.hbar * self.e / (2.0 * self.m * self.c)

    @property
    def gyromagnetic(self):
        """Ratio e/(m c) appearing in mu = -(e/mc) s and the precession rate."""
        return self.e / (self.m * self.c)


def _zero(x, y, z, t):
    return 0.0


def _as_callable(spec):
    if spec is None:
        return _zero
    if callable(spec):
        return spec
    ex = spec if isinstance(spec, Expression) else Expression(spec)
    ex.check_names(DIRECTIONS + ("t",))
    if ex.is_zero:
        return _zero
    return lambda x, y, z, t: ex(x=x, y=y, z=z, t=t)


def _broadcast(value, *like):
    shape = np.broadcast_shapes(*(np.shape(a) for a in like))
    return np.broadcast_to(np.asarray(value, dtype=float), shape)


def fd_partial(f, x, y, z, t, wrt, step=FD_STEP):
    """Fourth-order central difference of ``f(x, y, z, t)`` with respect to one argument."""
    if f is _zero:
        return _broadcast(0.0, x, y, z, t)
    args = [x, y, z, t]
    i = {"x": 0, "y": 1, "z": 2, "t": 3}[wrt]
    total = 0.0
    for off, w in zip(_FD_OFFSETS, _FD_WEIGHTS):
        shifted = list(args)
        shifted[i] = args[i] + off * step
        total = total + w * np.asarray(f(*shifted), dtype=float)
    return _broadcast(total / step, x, y, z, t)


@dataclass(frozen=True)
class EMField:
    e_field: tuple
    b_field: tuple
    div_b: float = 0.0


@dataclass
class GaugePotential:
    """Scalar potential phi and vector potential (ax, ay, az) as functions of (x, y, z, t).

    ``zeeman_b`` optionally overrides the magnetic field seen by the spin
    (Zeeman coupling, dipole force, torque) for idealized fields such as a
    bare linear gradient; by default the spin sees curl A.
    """

    phi: object = None
    a: tuple = (None, None, None)
    zeeman_b: tuple = None
    text: dict = field(default_factory=dict)

    def __post_init__(self):
        self.phi = _as_callable(self.phi)
        self.a = tuple(_as_callable(c) for c in self.a)
        if len(self.a) != 3:
            raise ConfigError("vector potential needs three components")
        if self.zeeman_b is not None:
            self.zeeman_b = tuple(_as_callable(c) for c in self.zeeman_b)

    @classmethod
    def from_expressions(cls, phi="0", ax="0", ay="0", az="0", zeeman=None):
        text = {"phi": phi, "ax": ax, "ay": ay, "az": az}
        zb = None
        if zeeman is not None:
            zb = tuple(zeeman)
            text.update(bx=zb[0], by=zb[1], bz=zb[2])
        return cls(phi, (ax, ay, az), zb, text)

    def variables(self):
        """Names used by the expression-defined parts (empty for callables)."""
        names = set()
        for text in self.text.values():
            names |= Expression(text).variables
        return names

    @property
    def has_vector_potential(self):
        return any(c is not _zero for c in self.a)

    @property
    def is_zero(self):
        return self.phi is _zero and not self.has_vector_potential and self.zeeman_b is None

    def scalar(self, x, y, z, t):
        return _broadcast(self.phi(x, y, z, t), x, y, z)

    def vector(self, x, y, z, t):
        return tuple(_broadcast(c(x, y, z, t), x, y, z) for c in self.a)

    def curl(self, x, y, z, t, step=FD_STEP):
        """B = curl A at the given points."""
        da = [[fd_partial(c, x, y, z, t, wrt=d, step=step) for d in DIRECTIONS] for c in self.a]
        return (da[2][1] - da[1][2], da[0][2] - da[2][0], da[1][0] - da[0][1])

    def spin_field(self, x, y, z, t, step=FD_STEP):
        """Magnetic field coupling to the spin: the override if present, else curl A."""
        if self.zeeman_b is not None:
            return tuple(_broadcast(c(x, y, z, t), x, y, z) for c in self.zeeman_b)
        return self.curl(x, y, z, t, step)

    def spin_field_gradient(self, x, y, z, t, step=FD_STEP):
        """d B_j / d x_l as a nested list ``[j][l]`` for the spin-coupled field."""
        if self.zeeman_b is not None:
            comps = self.zeeman_b
            return [[fd_partial(c, x, y, z, t, wrt=d, step=step) for d in DIRECTIONS] for c in comps]

        grads = []
        for d in DIRECTIONS:
            total = 0.0
            for off, w in zip(_FD_OFFSETS, _FD_WEIGHTS):
                shifted = [x, y, z, t]
                shifted[DIRECTIONS.index(d)] = shifted[DIRECTIONS.index(d)] + off * step
                total = total + w * np.array([_broadcast(b, x, y, z, t) for b in self.curl(*shifted, step)])
            grads.append(total / step)
        return [[grads[d][j] for d in range(3)] for j in range(3)]


def field_strengths(g, grid, t, constants=Constants(), axes=None, particle=0, step=FD_STEP):
    """E and B sampled on the grid, with the largest |div B| reported.

    E_k = -(1/c) dA_k/dt - d phi/dx_k and B = curl A, derivatives taken by
    fourth-order differences of the potential callables around each node
    (time derivative from samples at t +- step).
    """
    axes = axes or ParticleAxes.for_grid(grid)
    x, y, z = axes.coords(grid, particle)
    return field_strengths_at(g, x, y, z, t, constants, step)


def field_strengths_at(g, x, y, z, t, constants=Constants(), step=FD_STEP, check_divergence=True):
    args = (x, y, z, t)
    c = constants.c
    dphi = [fd_partial(g.phi, *args, wrt=d, step=step) for d in DIRECTIONS]
    dadt = [fd_partial(comp, *args, wrt="t", step=step) for comp in g.a]
    e_field = tuple(-dadt[k] / c - dphi[k] for k in range(3))
    b_field = g.curl(x, y, z, t, step)
    if g.has_vector_potential and check_divergence:
        div_b = sum(
            fd_partial(lambda *p, j=j: g.curl(*p, step=step)[j], *args, wrt=DIRECTIONS[j], step=step)
            for j in range(3)
        )
        div_b = float(np.max(np.abs(div_b)))
    else:
        div_b = 0.0
    return EMField(e_field, b_field, div_b)


@dataclass
class GaugeFunction:
    """Smooth single-valued gauge function chi(x, y, z, t) with units of action.

    The transformation shifts S by chi, phi by -(1/e) dchi/dt and A by (c/e) grad chi.
    """

    chi: object

    def __post_init__(self):
        self.chi = _as_callable(self.chi)

    def __call__(self, x, y, z, t):
        return _broadcast(self.chi(x, y, z, t), x, y, z)

    def mixed_derivative_defect(self, x, y, z, t, step=FD_STEP):
        """Largest |d_i d_k chi - d_k d_i chi| over direction pairs at the given points."""
        worst = 0.0
        for i, a in enumerate(DIRECTIONS):
            for b in DIRECTIONS[i + 1:]:
                dab = fd_partial(lambda *p: fd_partial(self.chi, *p, wrt=a, step=step), x, y, z, t, wrt=b, step=step)
                dba = fd_partial(lambda *p: fd_partial(self.chi, *p, wrt=b, step=step), x, y, z, t, wrt=a, step=step)
                worst = max(worst, float(np.max(np.abs(dab - dba))))
        return worst


def transformed_potential(g, chi, constants=Constants(), step=FD_STEP):
    """The gauge potential after the transformation generated by ``chi``."""
    e, c = constants.e, constants.c
    if e == 0:
        raise ConfigError("gauge transformations of potentials need a nonzero charge")
    phi0, a0 = g.phi, g.a

    def phi(x, y, z, t):
        return phi0(x, y, z, t) - fd_partial(chi.chi, x, y, z, t, wrt="t", step=step) / e

    def make_a(k):
        ak = a0[k]
        d = DIRECTIONS[k]
        return lambda x, y, z, t: ak(x, y, z, t) + (c / e) * fd_partial(chi.chi, x, y, z, t, wrt=d, step=step)

    return GaugePotential(phi, tuple(make_a(k) for k in range(3)), g.zeeman_b)


def gauge_transform(g, s, chi, grid, t, constants=Constants(), axes=None, particle=0):
    """Return ``(g', S')`` with S' = S + chi on the grid and the transformed potentials."""
    axes = axes or ParticleAxes.for_grid(grid)
    x, y, z = axes.coords(grid, particle)
    s_new = np.asarray(s, dtype=float) + chi(x, y, z, t)
    return transformed_potential(g, chi, constants), s_new


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _segment_integral(g, p0, p1, t0, t1, c, pieces=8):
    """Integral of dx.A - c dt phi along the straight segment (p0, t0) -> (p1, t1)."""
    dx = np.asarray(p1, float) - np.asarray(p0, float)
    dt = t1 - t0
    edges = np.linspace(0.0, 1.0, pieces + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1] - edges[0])
    s = (mids + half * _GL_NODES[None, :]).ravel()
    w = np.tile(half * _GL_WEIGHTS, pieces)
    pts = np.asarray(p0, float)[:, None] + dx[:, None] * s[None, :]
    ts = t0 + dt * s
    total = 0.0
    if np.any(dx != 0):
        a = g.vector(pts[0], pts[1], pts[2], ts)
        total += float(np.sum(w * sum(dx[k] * a[k] for k in range(3))))
    if dt != 0:
        total -= c * dt * float(np.sum(w * g.scalar(pts[0], pts[1], pts[2], ts)))
    return total


def phase_line_integral(g, path, constants=Constants(), bounds=None):
    """(e / hbar c) times the line integral of dx.A - c dt phi along a polyline.

    ``path`` is a sequence of vertices ``((x, y, z), t)``; consecutive vertices
    are joined by straight segments integrated with Gauss-Legendre quadrature.
    ``bounds`` maps direction names to (lo, hi); a vertex outside raises
    :class:`DomainError`.
    """
    verts = [(np.asarray(p, float).reshape(3), float(t)) for p, t in path]
    if len(verts) < 2:
        return 0.0
    if bounds:
        for p, _ in verts:
            for k, d in enumerate(DIRECTIONS):
                if d in bounds:
                    lo, hi = bounds[d]
                    if not lo - 1e-12 <= p[k] <= hi + 1e-12:
                        raise DomainError(f"path vertex {tuple(p)} leaves the domain along {d}")
    total = 0.0
    for (p0, t0), (p1, t1) in zip(verts[:-1], verts[1:]):
        total += _segment_integral(g, p0, p1, t0, t1, constants.c)
    return constants.e / (constants.hbar * constants.c) * total


def grid_bounds(grid, axes=None, particle=0):
    axes = axes or ParticleAxes.for_grid(grid)
    out = {}
    for d in axes.directions:
        a = axes.axis(particle, d)
        out[d] = (-0.5 * grid.lengths[a], 0.5 * grid.lengths[a])
    return out


def _staircase_phase(g, grid, axes, particle, reference, t, c):
    """Equal-time line integral of A.dx from ``reference`` to every node, axis by axis."""
    coords = axes.coords(grid, particle)
    start = [np.full(grid.shape, float(r)) for r in reference]
    total = np.zeros(grid.shape)
    for k, d in enumerate(DIRECTIONS):
        if axes.axis(particle, d) is None:
            continue
        length = coords[k] - start[k]
        s = 0.5 * (_GL_NODES + 1.0)
        w = 0.5 * _GL_WEIGHTS
        pieces = 8
        acc = np.zeros(grid.shape)
        for j in range(pieces):
            lo, hi = j / pieces, (j + 1) / pieces
            for sn, wn in zip(lo + (hi - lo) * s, (hi - lo) * w):
                p = list(start)
                p[k] = start[k] + sn * length
                acc += wn * np.asarray(_broadcast(g.a[k](p[0], p[1], p[2], t), *p))
        total += acc * length
        start[k] = coords[k]
    return total


def arunsalam_gould_dress(psi, g, grid, reference_point=(0.0, 0.0, 0.0), t=0.0,
                          constants=Constants(), axes=None, inverse=False, t_ref=None):
    """Multiply a state by the inverse path phase factor (or the factor itself if ``inverse``).

    The phase is (e / hbar c) times the integral of dx.A - c dt phi along the
    axis-ordered staircase from ``reference_point`` to each node at time t
    (plus a time leg at the reference point from ``t_ref`` when given), summed
    over particles. Works for scalar and multi-component states.
    """
    axes = axes or ParticleAxes.for_grid(grid)
    axes.check(grid)
    psi = np.asarray(psi)
    c = constants.c
    phase = np.zeros(grid.shape)
    for particle in range(axes.n_particles):
        phase += _staircase_phase(g, grid, axes, particle, reference_point, t, c)
        if t_ref is not None and t_ref != t:
            ref = np.asarray(reference_point, float)
            phase += _segment_integral(g, ref, ref, t_ref, t, c)
    phase *= constants.e / (constants.hbar * c)
    factor = np.exp(1j * phase) if inverse else np.exp(-1j * phase)
    return psi * factor
