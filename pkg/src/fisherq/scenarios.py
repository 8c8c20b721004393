"""Scenario runner: build a problem from a parsed config, run it, write artifacts.

Every run directory gets ``checks.csv`` (check, value, tolerance, pass),
``manifest.json`` and ``timings.json``. Everything except the timings file is
a pure function of the config text and the seed.
"""

import csv
import json
import platform
import time
import warnings
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import experiments
from .classical import (
    ConvergenceScenario,
    evolve_characteristics,
    hbar_convergence_study,
    write_ensemble_csv,
    write_study_csv,
)
from .config import load_config
from .errors import ConfigError, InputError, UnwrapWarning
from .evolution import PropagatorConfig, norm, normalize, step
from .gauge import Constants, GaugePotential, arunsalam_gould_dress
from .grid import DIRECTIONS, ParticleAxes, integrate, make_grid
from .hamiltonian import HamiltonianSpec
from .madelung import HydroState
from .observables import REPORT_COLUMNS, ehrenfest_check, ensemble_report, report_rows
from .snapshot import read_snapshot, write_snapshot

BUNDLED_DIR = Path(__file__).with_name("scenario_files")
RESIDUAL_COLUMNS = ["t", "residual_continuity", "residual_hj", "residual_theta", "residual_phi", "mask_fraction"]


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    @classmethod
    def at_most(cls, name, value, tolerance):
        return cls(name, float(value), float(tolerance), bool(value <= tolerance))

    @classmethod
    def at_least(cls, name, value, bound):
        return cls(name, float(value), float(bound), bool(value >= bound))


class OutputDir:
    """A run directory that remembers every file path handed out, for the manifest."""

    def __init__(self, root, prefix="", written=None):
        self.root = Path(root)
        self.prefix = prefix
        self.written = [] if written is None else written
        (self.root / prefix).mkdir(parents=True, exist_ok=True)

    def __truediv__(self, name):
        rel = f"{self.prefix}/{name}" if self.prefix else name
        self.written.append(rel)
        return self.root / rel

    def subdir(self, name):
        prefix = f"{self.prefix}/{name}" if self.prefix else name
        return OutputDir(self.root, prefix, self.written)


@dataclass
class RunResult:
    name: str
    out_dir: Path
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{value:.10e}"
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if v != "" else "" for v in row])


def write_checks(path, checks):
    write_csv(path, ["check", "value", "tolerance", "pass"], [[c.name, c.value, c.tolerance, c.passed] for c in checks])


def versions():
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"fisherq": own, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


# ---------------------------------------------------------------- problem construction

def build_problem(cfg):
    """(grid, HamiltonianSpec) from parsed config values."""
    axes = ParticleAxes(cfg["particles.count"], tuple(cfg["grid.directions"]))
    lengths = cfg["grid.lengths"]
    if len(lengths) == 1:
        lengths = lengths * len(cfg["grid.points"])
    grid = make_grid(cfg["grid.points"], lengths, cfg["grid.boundary"])
    constants = Constants(cfg["constants.hbar"], cfg["constants.m"], cfg["constants.e"], cfg["constants.c"])
    b = [cfg[f"gauge.b{d}"] for d in DIRECTIONS]
    zeeman_b = None
    if any(v is not None for v in b):
        zeeman_b = tuple(v or "0" for v in b)
    gauge = GaugePotential.from_expressions(cfg["gauge.phi"], cfg["gauge.ax"], cfg["gauge.ay"], cfg["gauge.az"], zeeman_b)
    zeeman = cfg["hamiltonian.zeeman"]
    if zeeman is None:
        zeeman = cfg["initial.spin"] is not None
    h = HamiltonianSpec(grid, constants, gauge, cfg["potential"], zeeman, axes)
    return grid, h


def _per_axis(values, n, key):
    if len(values) == 1:
        return values * n
    if len(values) != n:
        raise ConfigError(f"{key} needs 1 or {n} entries")
    return values


def initial_state(cfg, h, spin_override=None):
    grid = h.grid
    if cfg["initial.kind"] == "snapshot":
        try:
            _, psi = read_snapshot(cfg["initial.path"])
        except OSError as exc:
            raise ConfigError(f"cannot read snapshot {cfg['initial.path']}: {exc.strerror}") from None
        h.is_spinor(psi)
        return normalize(np.asarray(psi, dtype=complex), grid)
    n = grid.ndim
    centers = _per_axis(cfg["initial.center"], n, "initial.center")
    widths = _per_axis(cfg["initial.width"], n, "initial.width")
    momenta = _per_axis(cfg["initial.momentum"], n, "initial.momentum")
    hbar = h.constants.hbar
    mesh = grid.mesh()
    psi = np.ones(grid.shape, dtype=complex)
    for a in range(n):
        psi = psi * experiments.gaussian(mesh[a], centers[a], widths[a], momenta[a], hbar)
    labels = spin_override or cfg["initial.spin"]
    if labels is not None:
        spinors = [experiments.spin_from_label(label) for label in labels]
        amp = spinors[0]
        for extra in spinors[1:]:
            amp = np.kron(amp, extra)
        psi = amp.reshape((-1,) + (1,) * n) * psi[None]
    if cfg["initial.dress"]:
        psi = arunsalam_gould_dress(
            psi, h.gauge, grid, cfg["initial.dress_reference"], constants=h.constants, axes=h.axes, inverse=True
        )
    h.is_spinor(psi)
    return normalize(psi, grid)


# ---------------------------------------------------------------- runners

def _evolve(cfg, h, psi, out, tag=""):
    """Step through the run, writing time series, residuals and snapshots.

    Ehrenfest and hydrodynamic residuals at an output time use the states one
    step before and after it, so their accuracy is set by dt, not by the
    output cadence.
    """
    grid = h.grid
    dt, steps, every = cfg["propagator.dt"], cfg["propagator.steps"], cfg["output.every"]
    pcfg = PropagatorConfig(dt, cfg["propagator.scheme"], cfg["propagator.tol"], absorb_width=cfg["propagator.absorb_width"])
    single = h.n_particles == 1
    spinor = psi.ndim > grid.ndim
    want_ehrenfest = cfg["verify.ehrenfest"]
    madelung_every = cfg["verify.madelung_every"] or every
    want_madelung = cfg["verify.madelung"]
    if want_ehrenfest and not single:
        raise ConfigError("verify.ehrenfest needs a single particle")
    if want_madelung and spinor and not single:
        raise ConfigError("spin hydrodynamic residuals need a single particle")
    snap_every = cfg["output.snapshot_every"]
    snap_dir = out.subdir("snapshots") if snap_every else None
    torque_scale = cfg["verify.torque_scale"]

    series, residual_rows = [], []
    worst = {"velocity": 0.0, "force": 0.0, "torque": 0.0}
    worst_res = {}
    norm0 = norm(psi, grid)
    norm_drift = 0.0
    window = [None, psi]
    t = 0.0

    def report(p, tt):
        r = ensemble_report(p, h, tt)
        r.torque = torque_scale * r.torque
        return r

    for n in range(steps + 1):
        nxt = step(window[1], h, pcfg, t) if n < steps else None
        prev, cur = window
        norm_drift = max(norm_drift, abs(norm(cur, grid) - norm0))
        interior = prev is not None and nxt is not None
        if snap_every and n % snap_every == 0:
            write_snapshot(snap_dir / f"{tag}psi_{n:06d}.fqf", cur, grid.ndim)
        if n % every == 0 or n == steps:
            if single:
                row = report_rows([report(cur, t)])[0][: len(REPORT_COLUMNS) - 3]
                if want_ehrenfest and interior:
                    check = ehrenfest_check([report(prev, t - dt), report(cur, t), report(nxt, t + dt)])
                    vals = check.worst
                    for k in worst:
                        worst[k] = max(worst[k], vals[k])
                    row += [vals["velocity"], vals["force"], vals["torque"]]
                else:
                    row += ["", "", ""]
            else:
                row = [t, norm(cur, grid)]
            series.append(row)
        if want_madelung and interior and n % madelung_every == 0:
            res = experiments.madelung_residuals([prev, cur, nxt], h, t, dt, spin=spinor)
            for k, r in res.items():
                worst_res[k] = max(worst_res.get(k, 0.0), r.relative)
            residual_rows.append([
                t,
                res["continuity"].relative,
                res["hj"].relative,
                res["theta"].relative if spinor else "",
                res["phi"].relative if spinor else "",
                res["continuity"].mask_fraction,
            ])
        window = [cur, nxt]
        t = (n + 1) * dt
    header = REPORT_COLUMNS if single else ["t", "norm"]
    write_csv(out / f"{tag}timeseries.csv", header, series)
    checks = [Check.at_most(f"{tag}norm_drift", norm_drift, cfg["verify.norm_tol"])]
    if want_ehrenfest:
        tol = cfg["verify.ehrenfest_tol"]
        checks += [Check.at_most(f"{tag}ehrenfest_{k}", v, tol) for k, v in worst.items()]
    if want_madelung:
        write_csv(out / f"{tag}residuals.csv", RESIDUAL_COLUMNS, residual_rows)
        tol = cfg["verify.madelung_tol"]
        checks += [Check.at_most(f"{tag}residual_{k}", v, tol) for k, v in sorted(worst_res.items())]
    return window[0], series, checks


def _larmor_check(cfg, h, series):
    """Frequency from zero crossings of <s_x> in the time series against e|B(0)|/mc."""
    b = np.array([np.asarray(v).ravel()[0] for v in h.gauge.spin_field(*(np.zeros(1),) * 3, 0.0)])
    c = h.constants
    omega = abs(h.charges[0]) * float(np.linalg.norm(b)) / (h.masses[0] * c.c)
    col = REPORT_COLUMNS.index("s_x")
    t = np.array([row[0] for row in series])
    sx = np.array([row[col] for row in series])
    idx = np.nonzero(np.sign(sx[:-1]) * np.sign(sx[1:]) < 0)[0]
    if len(idx) < 2:
        raise InputError("fewer than two zero crossings of <s_x>; run longer")
    crossings = []
    for i in idx:
        lo = min(max(i - 1, 0), len(sx) - 4)
        sl = slice(lo, lo + 4)
        roots = np.roots(np.polyfit(t[sl] - t[i], sx[sl], 3))
        roots = roots[np.isreal(roots)].real
        roots = roots[(roots >= 0) & (roots <= t[i + 1] - t[i])]
        crossings.append(t[i] + (roots[0] if roots.size else -sx[i] * (t[i + 1] - t[i]) / (sx[i + 1] - sx[i])))
    measured = np.pi * (len(crossings) - 1) / (crossings[-1] - crossings[0])
    return [Check.at_most("larmor_frequency_relative_error", abs(measured - omega) / omega, cfg["verify.larmor_tol"])]


def _spreading_check(cfg, h, psi, t):
    if not h.gauge.is_zero or cfg["potential"] != "0" or h.grid.ndim != 1:
        raise ConfigError("verify.spreading needs a free 1D particle")
    grid = h.grid
    x = grid.axis_coords(0)
    rho = np.abs(psi) ** 2
    rho = rho.sum(axis=0) if rho.ndim > 1 else rho
    mean = integrate(rho * x, grid)
    var = integrate(rho * (x - mean) ** 2, grid)
    sigma0 = cfg["initial.width"][0]
    c = h.constants
    expected = sigma0 ** 2 * (1.0 + (c.hbar * t / (2.0 * h.masses[0] * sigma0 ** 2)) ** 2)
    return [Check.at_most("spreading_relative_error", abs(var - expected) / expected, cfg["verify.spreading_tol"])]


def _factorization_check(cfg, h, psi):
    if h.n_particles != 2 or h.grid.ndim != 2 or psi.ndim != 3:
        raise ConfigError("verify.factorization needs two spin particles on a 2D grid")
    err = experiments.schmidt_truncation_error(psi, h.grid.points[0])
    return [Check.at_most("schmidt_truncation_error", err, cfg["verify.factorization_tol"])]


def run_evolution(cfg, out):
    _, h = build_problem(cfg)
    psi = initial_state(cfg, h)
    final, series, checks = _evolve(cfg, h, psi, out)
    t_final = cfg["propagator.steps"] * cfg["propagator.dt"]
    if cfg["verify.larmor"]:
        checks += _larmor_check(cfg, h, series)
    if cfg["verify.spreading"]:
        checks += _spreading_check(cfg, h, final, t_final)
    if cfg["verify.factorization"]:
        checks += _factorization_check(cfg, h, final)
    return checks


def run_stern_gerlach(cfg, out):
    """Up and down spinors in the configured field; d<p_z>/dt against -/+ mu_B dB_z/dz."""
    _, h = build_problem(cfg)
    if h.axes.directions != ("z",) or h.n_particles != 1:
        raise ConfigError("stern_gerlach needs one particle moving along z")
    zero = np.zeros(1)
    gradient = h.gauge.spin_field_gradient(zero, zero, zero, 0.0)[2][2]
    mu_b_gradient = h.bohr_magneton() * float(np.asarray(gradient).ravel()[0])
    col = REPORT_COLUMNS.index("p_z")
    rates = {}
    checks = []
    for label in ("up", "down"):
        psi = initial_state(cfg, h, spin_override=(label,))
        _, series, sub = _evolve(cfg, h, psi, out, tag=f"{label}_")
        checks += sub
        t = np.array([row[0] for row in series])
        p = np.array([row[col] for row in series])
        rates[label] = float(np.polyfit(t, p, 1)[0])
    tol = cfg["verify.stern_gerlach_tol"]
    checks += [
        Check.at_most("force_up_error", abs(rates["up"] + mu_b_gradient), tol),
        Check.at_most("force_down_error", abs(rates["down"] - mu_b_gradient), tol),
        Check.at_most("opposite_signs", float(np.sign(rates["up"]) * np.sign(rates["down"])), -1.0),
    ]
    write_csv(out / "forces.csv", ["spin", "dpz_dt", "expected"], [
        ["up", rates["up"], -mu_b_gradient],
        ["down", rates["down"], mu_b_gradient],
    ])
    return checks


def run_aharonov_bohm(cfg, out):
    grid_points = cfg["grid.points"]
    if len(grid_points) != 2:
        raise ConfigError("aharonov_bohm needs a 2D grid")
    res = experiments.aharonov_bohm(
        fluxes=cfg["ab.fluxes"], points=grid_points[0], length=cfg["grid.lengths"][0],
        radius=cfg["ab.radius"], frequency=cfg["ab.frequency"], wavenumber=cfg["ab.wavenumber"],
        arc_width=cfg["ab.arc_width"], core=cfg["ab.core"], dt=cfg["propagator.dt"],
    )
    write_csv(out / "fringes.csv", ["flux", "fringe_shift"], list(zip(res["fluxes"], res["shifts"])))
    return [
        Check.at_most("fringe_slope_relative_error", res["relative_error"], cfg["ab.tol"]),
        Check.at_most("max_b_on_support", res["max_b_on_support"], 1e-6),
    ]


def run_classical(cfg, out, timings):
    grid, h = build_problem(cfg)
    if grid.ndim != 1 or h.n_particles != 1:
        raise ConfigError("classical_convergence is implemented for one particle in 1D")
    x = grid.axis_coords(0)
    rho = np.abs(experiments.gaussian(x, cfg["initial.center"][0], cfg["initial.width"][0], 0.0)) ** 2
    rho /= integrate(rho, grid)
    s0 = cfg["initial.momentum"][0] * x
    t_final = cfg["classical.t_final"]

    def build(hbar):
        return HamiltonianSpec(grid, Constants(hbar, h.constants.m, h.constants.e, h.constants.c), h.gauge, h.potential)

    ce = evolve_characteristics(HydroState(rho, s0), h, t_final, cfg["classical.samples"], cfg["classical.dt"], seed=cfg["seed"])
    write_ensemble_csv(out / "ensemble.csv", ce)
    checks = [Check.at_most("caustic_before_t_final", float(ce.caustic), 0.0)]
    other = evolve_characteristics(
        HydroState(rho, s0), build(0.5 * h.constants.hbar), t_final, cfg["classical.samples"], cfg["classical.dt"], seed=cfg["seed"]
    )
    same = np.array_equal(ce.positions, other.positions) and np.array_equal(ce.momenta, other.momenta)
    checks.append(Check.at_most("trajectories_depend_on_hbar", float(not same), 0.0))
    w = cfg["classical.harmonic_frequency"]
    if w is not None:
        x0, p0 = ce.initial_positions[:, 0], ce.initial_momenta[:, 0]
        m = h.masses[0]
        exact = x0 * np.cos(w * t_final) + p0 / (m * w) * np.sin(w * t_final)
        checks.append(Check.at_most("harmonic_trajectory_error", np.max(np.abs(ce.positions[:, 0] - exact)), cfg["classical.trajectory_tol"]))
    scenario = ConvergenceScenario(build, rho, s0, t_final, cfg["propagator.dt"], cfg["classical.samples"], cfg["classical.dt"])
    rows = hbar_convergence_study(scenario, cfg["classical.hbars"])
    write_study_csv(out / "study.csv", rows)
    timings.update({f"hbar_{r.hbar:g}_s": r.runtime for r in rows})
    l1 = [r.l1 for r in rows]
    worst_step = max((b / a for a, b in zip(l1, l1[1:])), default=0.0)
    checks.append(Check(
        "l1_strictly_decreasing_max_ratio", worst_step, 1.0, bool(worst_step < 1.0) if len(l1) > 1 else True
    ))
    return checks


RUNNERS = {
    "evolution": run_evolution,
    "stern_gerlach": run_stern_gerlach,
    "aharonov_bohm": run_aharonov_bohm,
}


def run_config(path, out_dir, seed=None):
    """Run one scenario file; returns a RunResult. Config problems raise ConfigError."""
    cfg, digest = load_config(path)
    if seed is not None:
        cfg["seed"] = int(seed)
    out = OutputDir(out_dir)
    result = RunResult(cfg["name"], out.root)
    start = time.perf_counter()
    kind = cfg["experiment.kind"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnwrapWarning)
        if kind == "classical_convergence":
            result.checks = run_classical(cfg, out, result.timings)
        else:
            result.checks = RUNNERS[kind](cfg, out)
    result.timings["total_s"] = time.perf_counter() - start
    write_checks(out / "checks.csv", result.checks)
    result.files = sorted(set(out.written))
    manifest = {
        "name": cfg["name"],
        "kind": kind,
        "config": str(Path(path).name),
        "config_sha256": digest,
        "seed": cfg["seed"],
        "versions": versions(),
        "files": result.files,
        "passed": result.passed,
    }
    with open(out.root / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out.root / "timings.json", "w") as fh:
        json.dump({k: round(v, 3) for k, v in result.timings.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result


def scenario_dirs(extra=None):
    dirs = [BUNDLED_DIR]
    if extra:
        dirs.append(Path(extra))
    return dirs


def list_scenarios(extra=None):
    """(name, description, path) for bundled scenarios and any valid ``*.cfg`` in ``extra``."""
    from .config import parse_config

    found = []
    for d in scenario_dirs(extra):
        if not d.is_dir():
            continue
        for path in sorted(d.glob("*.cfg")):
            try:
                cfg = parse_config(path.read_text(encoding="utf-8"), str(path))
            except ConfigError:
                continue
            found.append((cfg["name"], cfg["description"], path))
    return found


def resolve_scenario(name_or_path, extra=None):
    path = Path(name_or_path)
    if path.suffix == ".cfg" or path.exists():
        return path
    for name, _, p in list_scenarios(extra):
        if name == name_or_path or p.stem == name_or_path:
            return p
    raise ConfigError(f"no scenario named {name_or_path!r}")
