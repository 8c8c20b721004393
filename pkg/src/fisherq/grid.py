"""Uniform rectangular grids, differentiation and quadrature.

Fields are plain numpy arrays whose trailing ``grid.ndim`` axes match
``grid.shape`` (row-major, axis 0 slowest). Leading axes, if any, index
field components, e.g. ``(2, nx)`` for a spinor on a line.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

BOUNDARIES = ("periodic", "padded-absorbing")
SCHEMES = ("spectral", "central-4th")


@dataclass(frozen=True)
class Grid:
    points: tuple
    lengths: tuple
    boundary: str = "periodic"

    @property
    def ndim(self):
        return len(self.points)

    @property
    def shape(self):
        return tuple(self.points)

    @property
    def size(self):
        return int(np.prod(self.points))

    @property
    def spacing(self):
        return tuple(length / n for length, n in zip(self.lengths, self.points))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    @property
    def periodic(self):
        return self.boundary == "periodic"

    def axis_coords(self, axis):
        """Node coordinates along one axis, centred on the origin."""
        n, length = self.points[axis], self.lengths[axis]
        return -0.5 * length + self.spacing[axis] * np.arange(n)

    def mesh(self):
        """Broadcastable coordinate arrays, one per axis (``np.meshgrid`` with ``ij`` indexing)."""
        return np.meshgrid(*(self.axis_coords(a) for a in range(self.ndim)), indexing="ij")

    def wavenumbers(self, axis):
        return 2.0 * np.pi * np.fft.fftfreq(self.points[axis], d=self.spacing[axis])


def make_grid(points, lengths, boundary="periodic"):
    """Build a :class:`Grid`, validating extents and point counts.

    ``points`` and ``lengths`` may be scalars (1D) or sequences of equal length.
    """
    points = tuple(int(p) for p in np.atleast_1d(points))
    lengths = tuple(float(v) for v in np.atleast_1d(lengths))
    if len(lengths) == 1 and len(points) > 1:
        lengths = lengths * len(points)
    if len(points) != len(lengths):
        raise ConfigError(f"{len(points)} point counts but {len(lengths)} lengths")
    if not 1 <= len(points) <= 3:
        raise ConfigError(f"grid must have 1 to 3 axes, got {len(points)}")
    if any(p <= 0 for p in points):
        raise ConfigError(f"point counts must be positive, got {points}")
    if any(not np.isfinite(v) or v <= 0 for v in lengths):
        raise ConfigError(f"lengths must be positive, got {lengths}")
    if boundary not in BOUNDARIES:
        raise ConfigError(f"unknown boundary {boundary!r}; expected one of {BOUNDARIES}")
    return Grid(points, lengths, boundary)


def _array_axis(f, grid, axis):
    if not 0 <= axis < grid.ndim:
        raise ConfigError(f"axis {axis} out of range for a {grid.ndim}D grid")
    if f.shape[f.ndim - grid.ndim:] != grid.shape:
        raise ConfigError(f"field shape {f.shape} does not end with grid shape {grid.shape}")
    return f.ndim - grid.ndim + axis


def default_scheme(grid):
    return "spectral" if grid.periodic else "central-4th"


def spectral_multiplier(grid, axis, order):
    """Fourier symbol (ik)^order along ``axis``; the Nyquist mode is dropped for odd orders."""
    k = grid.wavenumbers(axis)
    if order % 2 == 1 and grid.points[axis] % 2 == 0:
        k = k.copy()
        k[grid.points[axis] // 2] = 0.0
    return (1j * k) ** order


def _spectral(f, grid, axis, order):
    ax = _array_axis(f, grid, axis)
    shape = [1] * f.ndim
    shape[ax] = grid.points[axis]
    mult = spectral_multiplier(grid, axis, order).reshape(shape)
    out = np.fft.ifft(np.fft.fft(f, axis=ax) * mult, axis=ax)
    return out.real if np.isrealobj(f) else out


def _shift(f, ax, k, periodic):
    """Return g with g[i] = f[i + k] along ``ax``; zero outside the domain unless periodic."""
    if periodic:
        return np.roll(f, -k, axis=ax)
    out = np.zeros_like(f)
    n = f.shape[ax]
    src = [slice(None)] * f.ndim
    dst = [slice(None)] * f.ndim
    if k >= 0:
        src[ax], dst[ax] = slice(k, n), slice(0, n - k)
    else:
        src[ax], dst[ax] = slice(0, n + k), slice(-k, n)
    out[tuple(dst)] = f[tuple(src)]
    return out


def _central4(f, grid, axis, order):
    ax = _array_axis(f, grid, axis)
    h = grid.spacing[axis]
    p = grid.periodic
    fp1, fm1 = _shift(f, ax, 1, p), _shift(f, ax, -1, p)
    fp2, fm2 = _shift(f, ax, 2, p), _shift(f, ax, -2, p)
    if order == 1:
        return (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h)
    return (-fp2 + 16.0 * fp1 - 30.0 * f + 16.0 * fm1 - fm2) / (12.0 * h * h)


def differentiate(f, grid, axis=0, order=1, scheme=None):
    """Derivative of order 1 or 2 along one grid axis.

    ``scheme`` defaults to spectral on periodic grids and central-4th otherwise.
    Spectral differentiation on a non-periodic grid raises :class:`ConfigError`.
    """
    f = np.asarray(f)
    scheme = scheme or default_scheme(grid)
    if order not in (1, 2):
        raise ConfigError(f"derivative order must be 1 or 2 per call, got {order}")
    if scheme == "spectral":
        if not grid.periodic:
            raise ConfigError("spectral differentiation requires a periodic grid")
        return _spectral(f, grid, axis, order)
    if scheme == "central-4th":
        return _central4(f, grid, axis, order)
    raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def gradient(f, grid, scheme=None):
    """List of first derivatives along every grid axis."""
    return [differentiate(f, grid, a, 1, scheme) for a in range(grid.ndim)]


def laplacian(f, grid, scheme=None):
    return sum(differentiate(f, grid, a, 2, scheme) for a in range(grid.ndim))


def divergence(components, grid, scheme=None):
    """Divergence of a vector field given as one array per grid axis."""
    return sum(differentiate(c, grid, a, 1, scheme) for a, c in enumerate(components))


def integrate(f, grid):
    """Grid quadrature: sum of values times the cell volume over the trailing grid axes."""
    f = np.asarray(f)
    axes = tuple(range(f.ndim - grid.ndim, f.ndim))
    total = np.sum(f, axis=axes) * grid.cell_volume
    return total if np.ndim(total) else total.item()


def spectral_energy(f, grid):
    """Sum of |F_k|^2 over the discrete Fourier modes, scaled to match ``integrate(|f|^2)``."""
    f = np.asarray(f)
    axes = tuple(range(f.ndim - grid.ndim, f.ndim))
    spec = np.fft.fftn(f, axes=axes)
    return float(np.sum(np.abs(spec) ** 2) * grid.cell_volume / grid.size)


def absorbing_mask(grid, width):
    """cos^2 ramp that falls from 1 to 0 over ``width`` (length units) at every face."""
    mask = np.ones(grid.shape)
    for axis in range(grid.ndim):
        x = grid.axis_coords(axis)
        lo, hi = x[0], x[-1]
        dist = np.minimum(x - lo, hi - x)
        s = np.clip((width - dist) / width, 0.0, 1.0)
        ramp = np.cos(0.5 * np.pi * s) ** 2
        shape = [1] * grid.ndim
        shape[axis] = -1
        mask = mask * ramp.reshape(shape)
    return mask


DIRECTIONS = ("x", "y", "z")


@dataclass(frozen=True)
class ParticleAxes:
    """How grid axes map onto particles and spatial directions.

    A grid for ``n_particles`` particles, each moving along ``directions``,
    has ``n_particles * len(directions)`` axes ordered particle-major.
    Directions a particle does not move along are held at coordinate 0 and
    the state is taken to be translation invariant along them.
    """

    n_particles: int = 1
    directions: tuple = ("x",)

    def __post_init__(self):
        if self.n_particles < 1:
            raise ConfigError("particle count must be at least 1")
        if not self.directions or len(set(self.directions)) != len(self.directions):
            raise ConfigError(f"bad direction list {self.directions}")
        if any(d not in DIRECTIONS for d in self.directions):
            raise ConfigError(f"directions must be drawn from {DIRECTIONS}")

    @classmethod
    def for_grid(cls, grid):
        return cls(1, DIRECTIONS[: grid.ndim])

    @property
    def grid_ndim(self):
        return self.n_particles * len(self.directions)

    def check(self, grid):
        if grid.ndim != self.grid_ndim:
            raise ConfigError(
                f"{self.n_particles} particle(s) x {len(self.directions)} direction(s) "
                f"need a {self.grid_ndim}D grid, got {grid.ndim}D"
            )

    def axis(self, particle, direction):
        """Grid axis carrying ``direction`` of ``particle``, or None if that direction is frozen."""
        if direction not in self.directions:
            return None
        return particle * len(self.directions) + self.directions.index(direction)

    def coordinate_names(self):
        if self.n_particles == 1:
            return list(self.directions)
        return [f"{d}{i + 1}" for i in range(self.n_particles) for d in self.directions]

    def coords(self, grid, particle=0):
        """(x, y, z) arrays for one particle, broadcastable to ``grid.shape``."""
        mesh = grid.mesh()
        out = []
        for d in DIRECTIONS:
            a = self.axis(particle, d)
            out.append(mesh[a] if a is not None else np.zeros(grid.shape))
        return tuple(out)

    def environment(self, grid):
        """Mapping from coordinate names to mesh arrays, for expression evaluation."""
        self.check(grid)
        return dict(zip(self.coordinate_names(), grid.mesh()))
