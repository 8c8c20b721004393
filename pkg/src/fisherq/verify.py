"""Property suites behind ``fisherq verify``.

Each suite returns a list of :class:`~fisherq.scenarios.Check` rows plus a
dict of wall-clock timings. Runtime limits are checked too, but reported
in the timings table so the main report stays reproducible.
"""

import time
import warnings

import numpy as np

from . import experiments as ex
from . import variational as var
from .errors import UnwrapWarning
from .scenarios import Check

ABLATION_FACTOR = 1e3


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def scalar_suite():
    checks, timings = [], {}
    eq, elapsed = _timed(ex.scalar_equivalence)
    timings["scalar_equivalence_s"] = (elapsed, 10.0)
    checks += [
        Check.at_most("madelung_continuity", eq["continuity"], 1e-5),
        Check.at_most("madelung_hj", eq["hj"], 1e-5),
        Check.at_least("madelung_hj_without_quantum_term", eq["hj_ablated"], 1e-5 * ABLATION_FACTOR),
    ]
    for kind in ("free", "harmonic"):
        worst = ex.ehrenfest_run(kind)
        checks += [Check.at_most(f"ehrenfest_{kind}_{k}", v, 1e-5) for k, v in worst.items()]
    spread = ex.free_spreading()
    checks.append(Check.at_most("free_spreading_relative_error", spread["relative_error"], 1e-4))
    trips = ex.algebra_and_round_trips()
    checks.append(Check.at_most("madelung_round_trip", trips["madelung"], 1e-10))
    return checks, timings


def spin_suite():
    checks, timings = [], {}
    eq, elapsed = _timed(ex.spin_equivalence)
    timings["spin_equivalence_s"] = (elapsed, 20.0)
    checks += [Check.at_most(f"pauli_residual_{k}", eq[k], 1e-4) for k in ("continuity", "hj", "theta", "phi")]
    worst = ex.ehrenfest_run("magnetic")
    checks += [Check.at_most(f"ehrenfest_magnetic_{k}", v, 1e-5) for k, v in worst.items()]
    larmor = ex.larmor_precession()
    checks += [
        Check.at_most("larmor_frequency_relative_error", larmor["relative_error"], 1e-4),
        Check.at_least("larmor_periods_covered", larmor["periods"], 4.0),
        Check.at_least("larmor_sense_matches_torque", larmor["sense"], 1.0),
    ]
    wrong = ex.larmor_precession(periods=1, dt=0.002, g_scale=2.0)
    checks.append(Check.at_least("torque_check_rejects_double_coupling", wrong["torque_residual"], 1e-5 * ABLATION_FACTOR))
    sg = ex.stern_gerlach()
    expected = sg["bohr_magneton_gradient"]
    checks += [
        Check.at_most("stern_gerlach_up_error", abs(sg["up"] + expected), 1e-6),
        Check.at_most("stern_gerlach_down_error", abs(sg["down"] - expected), 1e-6),
        Check.at_most("stern_gerlach_sign_product", float(np.sign(sg["up"]) * np.sign(sg["down"])), -1.0),
    ]
    trips = ex.algebra_and_round_trips()
    checks += [
        Check.at_most("pauli_algebra", trips["algebra"], 1e-10),
        Check.at_most("takabayasi_round_trip", trips["takabayasi"], 1e-10),
        Check.at_most("free_pauli_forms_agree", trips["pauli_identity"], 1e-10),
    ]
    two = ex.two_particle_factorization()
    checks.append(Check.at_most("two_particle_schmidt_error", two["final"], 1e-8))
    return checks, timings


def variational_suite():
    checks, timings = [], {}
    for name, state, grid in var.corpus():
        fisher = var.fisher_identity_check(state, grid)
        checks.append(Check.at_most(f"fisher_gap_{name}", fisher.gap, 1e-7))
        spin = var.el_residual_spin(state, grid)
        checks.append(Check.at_most(f"el_spin_{name}", spin.worst, 1e-5))
        scalar = var.el_residual_scalar(state.rho, grid)
        checks.append(Check.at_most(f"el_scalar_{name}", scalar.worst, 1e-5))
        floor = max(spin.worst, 1e-16)
        if spin.residuals["phi"].term_norms.get("g_term", 0.0) > 0:
            no_g3 = var.el_residual_spin(state, grid, drop_g3=True).residuals["phi"].relative
            checks.append(Check.at_least(f"el_spin_without_g3_{name}", no_g3 / floor, ABLATION_FACTOR))
        if spin.residuals["theta"].term_norms.get("g_term", 0.0) > 0:
            no_g12 = var.el_residual_spin(state, grid, drop_g12=True).residuals["theta"].relative
            checks.append(Check.at_least(f"el_spin_without_g12_{name}", no_g12 / floor, ABLATION_FACTOR))
        perturbed = var.el_residual_scalar(state.rho, grid, epsilon=1e-2).worst
        checks.append(Check.at_least(f"el_scalar_perturbed_{name}", perturbed / max(scalar.worst, 1e-16), ABLATION_FACTOR))
    for name in var.CORPUS:
        levels = (8, 16, 32, 64) if name == "planar" else (8, 16, 32, 64, 128)
        study = var.refinement_study(name, lambda s, g: var.fisher_identity_check(s, g).gap, levels)
        checks.append(Check.at_least(f"fisher_gap_refinement_{name}", min(study.ratio, 1e300), 4.0))
    return checks, timings


def gauge_suite():
    checks, timings = [], {}
    inv = ex.gauge_invariance()
    checks += [
        Check.at_most("gauge_report_fields", inv["report"], 1e-8),
        Check.at_most("gauge_residual_norms", inv["residual"], 1e-8),
        Check.at_most("gauge_field_strengths", inv["e_b"], 1e-10),
    ]
    checks.append(Check.at_most("path_phase_dressing", ex.dressing_equivalence(), 1e-8))
    ab, elapsed = _timed(ex.aharonov_bohm)
    timings["aharonov_bohm_s"] = (elapsed, None)
    checks += [
        Check.at_most("aharonov_bohm_slope_relative_error", ab["relative_error"], 1e-3),
        Check.at_most("aharonov_bohm_b_on_support", ab["max_b_on_support"], 1e-6),
    ]
    return checks, timings


def classical_suite():
    checks, timings = [], {}
    osc = ex.classical_harmonic_oracle()
    checks += [
        Check.at_most("classical_harmonic_trajectories", osc["trajectory_error"], 1e-6),
        Check.at_most("classical_harmonic_mean_sigmas", osc["mean_offset_sigmas"], 3.0),
        Check.at_least("classical_hbar_independent", float(osc["bitwise_hbar_independent"]), 1.0),
        Check.at_most("classical_no_caustic", float(osc["caustic"]), 0.0),
    ]
    cyc = ex.classical_cyclotron_oracle()
    checks.append(Check.at_most("classical_cyclotron_trajectories", cyc["trajectory_error"], 1e-6))
    for kind in ("harmonic", "free"):
        rows, elapsed = _timed(ex.classical_convergence, kind)
        timings[f"convergence_{kind}_s"] = (elapsed, None)
        l1 = [d for _, d in rows]
        ratios = [b / a for a, b in zip(l1, l1[1:])]
        checks.append(Check.at_most(f"convergence_{kind}_worst_ratio", max(ratios), 1.0 - 1e-12))
        if kind == "free":
            checks.append(Check.at_least("convergence_free_smallest_improvement", min(a / b for a, b in zip(l1, l1[1:])), 1.5))
    return checks, timings


SUITES = {
    "scalar": scalar_suite,
    "spin": spin_suite,
    "variational": variational_suite,
    "gauge": gauge_suite,
    "classical": classical_suite,
}


def run_suite(name):
    """(checks, timing checks) for one suite. Timing checks carry their limit as tolerance."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnwrapWarning)
        checks, timings = SUITES[name]()
    timing_checks = []
    for key, (seconds, limit) in timings.items():
        if limit is None:
            timing_checks.append(Check(key, seconds, float("nan"), True))
        else:
            timing_checks.append(Check.at_most(key, seconds, limit))
    return checks, timing_checks
