"""Minimal-coupling Schrödinger and Pauli Hamiltonians on configuration-space grids.

A scalar state is an array of ``grid.shape``. A spin state for N particles
is an array of shape ``(2**N,) + grid.shape`` whose leading index is the
binary spin label of particle 1 (most significant) to particle N.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .expr import Expression
from .gauge import Constants, GaugePotential
from .grid import DIRECTIONS, ParticleAxes, default_scheme, differentiate

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
IDENTITY2 = np.eye(2, dtype=complex)


def apply_pauli(psi, k, particle, n_particles, ndim):
    """Apply sigma_k acting on one particle's spin index of a ``(2**N,) + grid`` array."""
    spin = psi.reshape((2,) * n_particles + psi.shape[1:])
    out = np.tensordot(PAULI[k], spin, axes=([1], [particle]))
    out = np.moveaxis(out, 0, particle)
    return out.reshape(psi.shape)


def _potential_callable(spec, axes):
    if spec is None:
        return None
    if callable(spec):
        return spec
    ex = spec if isinstance(spec, Expression) else Expression(spec)
    ex.check_names(axes.coordinate_names() + ["t"])
    if ex.is_zero:
        return None
    return lambda env, t: ex(t=t, **env)


@dataclass
class HamiltonianSpec:
    """Everything needed to apply H: grid, particle layout, constants, potentials.

    ``potential`` is V over configuration coordinates: an expression string
    in the coordinate names of ``axes`` (``x`` or ``x1, x2`` ...) and ``t``,
    or a callable ``f(env, t)`` with ``env`` mapping names to mesh arrays.
    ``masses`` and ``charges`` default to the values in ``constants``.
    """

    grid: object
    constants: Constants = Constants()
    gauge: GaugePotential = None
    potential: object = None
    zeeman: bool = False
    axes: ParticleAxes = None
    masses: tuple = None
    charges: tuple = None
    scheme: str = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.axes = self.axes or ParticleAxes.for_grid(self.grid)
        self.axes.check(self.grid)
        n = self.axes.n_particles
        self.masses = tuple(self.masses) if self.masses is not None else (self.constants.m,) * n
        self.charges = tuple(self.charges) if self.charges is not None else (self.constants.e,) * n
        if len(self.masses) != n or len(self.charges) != n:
            raise ConfigError("need one mass and one charge per particle")
        if any(m <= 0 for m in self.masses):
            raise ConfigError("masses must be positive")
        self.gauge = self.gauge if self.gauge is not None else GaugePotential()
        frozen = self.gauge.variables() - set(self.axes.directions) - {"t"}
        if frozen:
            raise ConfigError(
                f"potentials depend on {sorted(frozen)}, along which the state is held uniform; "
                "add those directions to the grid"
            )
        self.scheme = self.scheme or default_scheme(self.grid)
        self._v = _potential_callable(self.potential, self.axes)

    @property
    def n_particles(self):
        return self.axes.n_particles

    @property
    def n_spin_components(self):
        return 2 ** self.n_particles

    def bohr_magneton(self, particle=0):
        """mu_B for one particle, -hbar e_I / (2 m_I c)."""
        c = self.constants
        return -c.hbar * self.charges[particle] / (2.0 * self.masses[particle] * c.c)

    def is_spinor(self, psi):
        g = self.grid.ndim
        if psi.ndim == g and psi.shape == self.grid.shape:
            return False
        if psi.ndim == g + 1 and psi.shape[1:] == self.grid.shape and psi.shape[0] == self.n_spin_components:
            return True
        raise ConfigError(
            f"state of shape {psi.shape} does not match grid {self.grid.shape} "
            f"with {self.n_particles} particle(s)"
        )

    def mechanical_potential(self, t):
        if self._v is None:
            return np.zeros(self.grid.shape)
        env = self.axes.environment(self.grid)
        return np.broadcast_to(np.asarray(self._v(env, t), dtype=float), self.grid.shape)

    def terms(self, t):
        """Sampled potentials at time t (memoized for the most recent few times)."""
        key = float(t)
        if key in self._cache:
            return self._cache[key]
        c = self.constants.c
        diag = self.mechanical_potential(t).copy()
        vectors, fields = [], []
        for i in range(self.n_particles):
            x, y, z = self.axes.coords(self.grid, i)
            q = self.charges[i] / c
            diag += self.charges[i] * self.gauge.scalar(x, y, z, t)
            a = self.gauge.vector(x, y, z, t) if self.gauge.has_vector_potential else (0.0, 0.0, 0.0)
            a = tuple(np.broadcast_to(np.asarray(ak, float), self.grid.shape) for ak in a)
            diag += q * q * sum(ak * ak for ak in a) / (2.0 * self.masses[i])
            vectors.append(a)
            fields.append(self.gauge.spin_field(x, y, z, t) if self.zeeman else None)
        out = {"diag": diag, "vectors": vectors, "fields": fields}
        if len(self._cache) > 4:
            self._cache.clear()
        self._cache[key] = out
        return out

    def lower_bound(self, t):
        """A lower bound of the spectrum: min of the scalar terms minus the largest Zeeman splitting."""
        terms = self.terms(t)
        bound = float(np.min(self.mechanical_potential(t)))
        for i in range(self.n_particles):
            x, y, z = self.axes.coords(self.grid, i)
            bound += float(np.min(self.charges[i] * self.gauge.scalar(x, y, z, t)))
            if self.zeeman:
                b = terms["fields"][i]
                bmax = float(np.max(np.sqrt(sum(np.asarray(bk) ** 2 for bk in b))))
                bound -= abs(self.bohr_magneton(i)) * bmax
        return bound


def _apply_scalar(psi, h, t, terms):
    hbar, c = h.constants.hbar, h.constants.c
    out = terms["diag"] * psi
    for i in range(h.n_particles):
        m = h.masses[i]
        q = h.charges[i] / c
        for k, d in enumerate(DIRECTIONS):
            axis = h.axes.axis(i, d)
            if axis is None:
                continue
            out = out - (hbar * hbar / (2.0 * m)) * differentiate(psi, h.grid, axis, 2, h.scheme)
            ak = terms["vectors"][i][k]
            if q != 0 and np.any(ak):
                cross = differentiate(ak * psi, h.grid, axis, 1, h.scheme) + ak * differentiate(
                    psi, h.grid, axis, 1, h.scheme
                )
                out = out + (1j * hbar * q / (2.0 * m)) * cross
    return out


def apply_hamiltonian(psi, h, t=0.0):
    """H psi for a scalar or spin state.

    Kinetic part: sum over particles and moving directions of
    (1/2m)[(hbar/i) d - (e/c) A]^2 expanded symmetrically; frozen directions
    contribute (e A / c)^2 / 2m. Scalar part: sum of e Phi, plus V. With
    ``h.zeeman`` the term mu_B sigma.B is added for every particle.
    """
    psi = np.asarray(psi, dtype=complex)
    spinor = h.is_spinor(psi)
    terms = h.terms(t)
    out = _apply_scalar(psi, h, t, terms)
    if h.zeeman:
        if not spinor:
            raise ConfigError("Zeeman coupling needs a spin state")
        g = h.grid.ndim
        for i in range(h.n_particles):
            mu = h.bohr_magneton(i)
            b = terms["fields"][i]
            for k in range(3):
                bk = np.asarray(b[k])
                if np.any(bk):
                    out = out + mu * bk * apply_pauli(psi, k, i, h.n_particles, g)
    return out


def free_pauli_alternative(psi, h):
    """(1/2m)(hbar/i)^2 (sigma.grad)(sigma.grad) psi for a single-particle spinor.

    Evaluated literally as a sum over sigma_i sigma_k d_i d_k with the stored
    matrices, without using the product identity.
    """
    psi = np.asarray(psi, dtype=complex)
    if not h.is_spinor(psi) or h.n_particles != 1:
        raise ConfigError("alternative free Pauli form needs a single-particle spinor")
    hbar, m = h.constants.hbar, h.masses[0]
    out = np.zeros_like(psi)
    for i, di in enumerate(DIRECTIONS):
        ai = h.axes.axis(0, di)
        if ai is None:
            continue
        for k, dk in enumerate(DIRECTIONS):
            ak = h.axes.axis(0, dk)
            if ak is None:
                continue
            d2 = differentiate(differentiate(psi, h.grid, ak, 1, h.scheme), h.grid, ai, 1, h.scheme)
            prod = PAULI[i] @ PAULI[k]
            out = out + np.tensordot(prod, d2, axes=([1], [0]))
    return -(hbar * hbar / (2.0 * m)) * out


def free_pauli_plain(psi, h):
    """-(hbar^2/2m) Laplacian applied to each spinor component, built from first derivatives."""
    psi = np.asarray(psi, dtype=complex)
    hbar, m = h.constants.hbar, h.masses[0]
    out = np.zeros_like(psi)
    for d in DIRECTIONS:
        a = h.axes.axis(0, d)
        if a is None:
            continue
        out = out + differentiate(differentiate(psi, h.grid, a, 1, h.scheme), h.grid, a, 1, h.scheme)
    return -(hbar * hbar / (2.0 * m)) * out
