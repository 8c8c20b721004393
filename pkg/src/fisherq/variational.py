"""Numerical certification of the minimal Fisher information quantum terms.

Checks that L0 and the G fields solve the Euler-Lagrange systems of the
variational problem, and compares the averaged L0 with a sum of Fisher
functionals over three partial densities. All derivatives are spectral, so
every function here needs a periodic grid and smooth periodic fields.

The Euler-Lagrange residuals are evaluated along a route independent of
:func:`fisherq.madelung.quantum_terms`: the composite fluxes (for example
rho d_k theta) are formed pointwise and then differentiated numerically,
while L0 and G come from product-rule expansions. Their difference is pure
discretization error and shrinks under grid refinement.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .gauge import Constants
from .grid import integrate, make_grid, differentiate
from .hamiltonian import HamiltonianSpec
from .madelung import HydroState, SpinHydroState, _residual, jet_from_fields, quantum_terms

MASK_REL = 1e-6
SIN_FLOOR = 1e-3
COVERAGE_MIN = 0.99


@dataclass
class FisherReport:
    lhs: float
    rhs: float
    contributions: tuple
    gap: float
    coverage: float
    degraded: bool
    azimuth_mismatch: float = 0.0
    """(hbar^2/8m) int rho (sin^2 theta - sin^2(theta/2)) |grad phi|^2, the difference
    between the two sides implied by the three-density parametrization."""


@dataclass
class ELResidualReport:
    residuals: dict
    coverage: float
    degenerate: bool = False

    @property
    def worst(self):
        return max((r.relative for r in self.residuals.values()), default=0.0)

    def norms(self):
        return {k: (r.norm, r.max_abs, r.relative) for k, r in self.residuals.items()}


def _spectral_spec(grid, m, hbar):
    if not grid.periodic:
        raise ConfigError("variational checks need a periodic grid (third and fourth derivatives)")
    return HamiltonianSpec(grid, constants=Constants(hbar=hbar, m=m), scheme="spectral")


def _d(f, grid, axis, order=1):
    return differentiate(f, grid, axis, order, "spectral")


def _div(components, grid):
    return sum(_d(c, grid, a) for a, c in enumerate(components))


def rho_j_decomposition(shs):
    """Partial densities rho sin^2(th/2)cos^2(ph/2), rho sin^2(th/2)sin^2(ph/2), rho cos^2(th/2)."""
    rho = np.asarray(shs.rho)
    s2 = np.sin(0.5 * np.asarray(shs.theta)) ** 2
    c2 = np.cos(0.5 * np.asarray(shs.theta)) ** 2
    return (
        rho * s2 * np.cos(0.5 * np.asarray(shs.phi_angle)) ** 2,
        rho * s2 * np.sin(0.5 * np.asarray(shs.phi_angle)) ** 2,
        rho * c2,
    )


def fisher_identity_check(shs, grid, m=1.0, hbar=1.0, floor=1e-12):
    """Compare int(-rho L0) with (hbar^2/8m) sum_j int |grad rho_j|^2 / rho_j."""
    h = _spectral_spec(grid, m, hbar)
    qt = quantum_terms(shs, h, route="fields")
    rho = np.asarray(shs.rho)
    lhs = integrate(-rho * qt.l0, grid)
    parts = rho_j_decomposition(shs)
    scale = floor * float(np.max(rho))
    ok = np.ones(grid.shape, dtype=bool)
    contributions = []
    for pj in parts:
        good = pj > scale
        ok &= good | (np.abs(pj) <= scale)
        grad2 = sum(_d(pj, grid, a) ** 2 for a in range(grid.ndim))
        dens = np.where(good, grad2 / np.where(good, pj, 1.0), 0.0)
        contributions.append(hbar * hbar / (8.0 * m) * integrate(dens, grid))
    rhs = float(sum(contributions))
    both = max(abs(lhs), abs(rhs))
    gap = abs(lhs - rhs) / both if both > 1e-300 else 0.0
    coverage = float(np.sum(np.where(ok & qt.mask, rho, 0.0)) / np.sum(rho))
    jet = jet_from_fields(shs, grid, hbar, "spectral")
    th = np.asarray(shs.theta)
    gphi2 = sum(g * g for g in jet.grad_phi)
    mismatch = hbar * hbar / (8.0 * m) * integrate(rho * (np.sin(th) ** 2 - np.sin(0.5 * th) ** 2) * gphi2, grid)
    return FisherReport(lhs, rhs, tuple(contributions), gap, coverage, coverage < COVERAGE_MIN, mismatch)


def _mask(rho):
    return rho > MASK_REL * float(np.max(rho))


def el_residual_scalar(rho, grid, m=1.0, hbar=1.0, epsilon=0.0):
    """Residuals of the split Euler-Lagrange equations for beta = rho L0.

    ``second_order``: d_k d_i (d beta / d rho_ki), with d beta / d rho_ki = B0 delta_ki.
    ``first_order``: d_k (d beta / d rho_k) - d beta / d rho + beta / rho.
    ``epsilon`` adds epsilon |grad rho|^2 / rho^2 to L0, which leaves a
    residual 2 epsilon Lap rho / rho in the first-order equation.
    """
    rho = np.asarray(rho, dtype=float)
    h = _spectral_spec(grid, m, hbar)
    b0 = hbar * hbar / (4.0 * m)
    nd = grid.ndim
    mask = _mask(rho)
    grads = [_d(rho, grid, a) for a in range(nd)]
    grad2 = sum(g * g for g in grads)
    l0 = quantum_terms(HydroState(rho, np.zeros_like(rho)), h, route="fields").l0
    l0 = l0 + epsilon * grad2 / rho ** 2
    flux = [(-b0 + 2.0 * epsilon) * g / rho for g in grads]
    d_beta_d_rho = b0 * grad2 / (2.0 * rho ** 2) - epsilon * grad2 / rho ** 2
    first = _residual(
        {"flux_divergence": _div(flux, grid), "d_beta_d_rho": -d_beta_d_rho, "beta_over_rho": l0},
        mask,
        grid,
    )
    hessian_weight = np.full(grid.shape, b0)
    second_terms = {
        f"d{k}d{k}": _d(_d(hessian_weight, grid, k), grid, k) for k in range(nd)
    }
    second = _residual(second_terms, mask, grid)
    return ELResidualReport({"second_order": second, "first_order": first}, float(np.mean(mask)))


def el_residual_spin(shs, grid, m=1.0, hbar=1.0, drop_g3=False, drop_g12=False):
    """Residuals of the rho-, theta- and phi-variation equations for beta = rho L0.

    rho:   d_k(d beta/d rho_k) - rho dL0/d rho (second-order part vanishes identically)
    theta: d_k(-(hbar^2/4m) rho theta_k) + (hbar^2/8m) rho sin(2 theta)|grad phi|^2
           - (hbar rho/2)(G1 cos phi - G2 sin phi)
    phi:   d_k(-(hbar^2/4m) rho sin^2(theta) phi_k) - (hbar/2) rho G3
    ``drop_g3`` and ``drop_g12`` zero the corresponding G fields (negative controls).
    """
    h = _spectral_spec(grid, m, hbar)
    nd = grid.ndim
    rho = np.asarray(shs.rho, dtype=float)
    th = np.asarray(shs.theta)
    ph = np.asarray(shs.phi_angle)
    jet = jet_from_fields(SpinHydroState(rho, np.zeros_like(rho), th, ph), grid, hbar, "spectral")
    qt = quantum_terms(SpinHydroState(rho, np.zeros_like(rho), th, ph), h, route="fields")
    st = np.sin(th)
    mask = _mask(rho) & (st > SIN_FLOOR)
    degenerate = bool(np.any(_mask(rho) & (st <= SIN_FLOOR)))
    k2 = hbar * hbar / (4.0 * m)
    k8 = hbar * hbar / (8.0 * m)
    grads = [_d(rho, grid, a) for a in range(nd)]
    grad2 = sum(g * g for g in grads)
    gphi2 = sum(g * g for g in jet.grad_phi)
    gth2 = sum(g * g for g in jet.grad_theta)
    d_beta_d_rho = k2 * grad2 / (2.0 * rho ** 2) - k8 * (st * st * gphi2 + gth2)
    rho_eq = _residual(
        {
            "flux_divergence": _div([-k2 * g / rho for g in grads], grid),
            "d_beta_d_rho": -d_beta_d_rho,
            "beta_over_rho": qt.l0,
        },
        mask,
        grid,
    )
    g1 = 0.0 if drop_g12 else qt.g1
    g2 = 0.0 if drop_g12 else qt.g2
    g3 = 0.0 if drop_g3 else qt.g3
    theta_eq = _residual(
        {
            "flux_divergence": _div([-k2 * rho * g for g in jet.grad_theta], grid),
            "d_beta_d_theta": k8 * rho * np.sin(2.0 * th) * gphi2,
            "g_term": -0.5 * hbar * rho * (g1 * np.cos(ph) - g2 * np.sin(ph)),
        },
        mask,
        grid,
    )
    phi_eq = _residual(
        {
            "flux_divergence": _div([-k2 * rho * st * st * g for g in jet.grad_phi], grid),
            "g_term": -0.5 * hbar * rho * g3,
        },
        mask,
        grid,
    )
    return ELResidualReport({"rho": rho_eq, "theta": theta_eq, "phi": phi_eq}, float(np.mean(mask)), degenerate)


# ---------------------------------------------------------------- fixed test-field corpus

CORPUS_SEED = 20240611
CORPUS_LENGTH = 2.0 * np.pi


def _normalized(rho, grid):
    return rho / integrate(rho, grid)


def _von_mises(x, centre, kappa):
    return np.exp(kappa * np.cos(x - centre))


def _random_modes(rng, coords, count, amplitude):
    out = 0.0
    for _ in range(count):
        k = [int(rng.integers(1, 4)) for _ in coords]
        phase = rng.uniform(0.0, 2.0 * np.pi)
        arg = sum(kk * c for kk, c in zip(k, coords))
        out = out + rng.uniform(-amplitude, amplitude) * np.sin(arg + phase)
    return out


def corpus_state(name, points):
    """One member of the fixed corpus sampled with ``points`` per axis.

    Members are periodic on [-pi, pi): densities are (sums of) von Mises
    bumps and the angles stay inside [0.6, 2.5] so every partial density is
    strictly positive.
    """
    if name == "planar":
        grid = make_grid((points, points), (CORPUS_LENGTH, CORPUS_LENGTH))
        x, y = grid.mesh()
        rho = np.exp(1.2 * np.cos(x) + 0.8 * np.cos(y - 0.5) + 0.3 * np.cos(x + y))
        theta = 0.5 * np.pi + 0.3 * np.sin(x) * np.cos(y)
        phi = 1.2 + 0.25 * np.sin(y) + 0.2 * np.cos(x - y)
        return SpinHydroState(_normalized(rho, grid), np.zeros(grid.shape), theta, phi), grid
    grid = make_grid((points,), (CORPUS_LENGTH,))
    x = grid.axis_coords(0)
    if name == "von_mises":
        rho = _von_mises(x, 0.3, 2.0)
        theta, phi = np.full_like(x, 1.1), np.full_like(x, 0.9)
    elif name == "double_von_mises":
        rho = _von_mises(x, -1.0, 3.0) + 0.6 * _von_mises(x, 1.5, 4.0)
        theta, phi = np.full_like(x, 2.0), np.full_like(x, 1.4)
    elif name == "single_mode":
        rho = _von_mises(x, 0.0, 1.5)
        theta = 0.5 * np.pi + 0.4 * np.sin(x)
        phi = 1.3 + 0.3 * np.cos(x)
    elif name == "random_modes":
        rng = np.random.default_rng(CORPUS_SEED)
        rho = np.exp(_random_modes(rng, [x], 3, 0.8))
        theta = 0.5 * np.pi + _random_modes(rng, [x], 3, 0.25)
        phi = 1.3 + _random_modes(rng, [x], 3, 0.2)
    else:
        raise ConfigError(f"unknown corpus member {name!r}")
    return SpinHydroState(_normalized(rho, grid), np.zeros(grid.shape), theta, phi), grid


CORPUS = ("von_mises", "double_von_mises", "single_mode", "random_modes", "planar")
PRODUCTION_POINTS = {"planar": 64}
DEFAULT_POINTS = 128


def corpus(points=None):
    """All corpus members as (name, state, grid) at production resolution or ``points`` per axis."""
    out = []
    for name in CORPUS:
        n = points or PRODUCTION_POINTS.get(name, DEFAULT_POINTS)
        state, grid = corpus_state(name, n)
        out.append((name, state, grid))
    return out


@dataclass
class RefinementStep:
    points: int
    value: float


@dataclass
class RefinementStudy:
    name: str
    steps: list = field(default_factory=list)
    coarse: int = 0
    ratio: float = 0.0


ROUNDOFF_LEVEL = 1e-11


def refinement_study(name, measure, levels=(8, 16, 32, 64, 128)):
    """Evaluate ``measure(state, grid)`` on successive doublings of one corpus member.

    The reported ratio compares the finest level whose value still exceeds
    ``ROUNDOFF_LEVEL`` with the next level; spectrally converging quantities
    drop far more than 4x across that pair.
    """
    study = RefinementStudy(name)
    for n in levels:
        state, grid = corpus_state(name, n)
        study.steps.append(RefinementStep(n, float(measure(state, grid))))
    pick = 0
    for i in range(len(study.steps) - 1):
        if study.steps[i].value > ROUNDOFF_LEVEL:
            pick = i
    a, b = study.steps[pick].value, study.steps[pick + 1].value
    study.coarse = study.steps[pick].points
    study.ratio = a / b if b > 0 else np.inf
    return study
