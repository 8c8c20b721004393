"""Statistical-field quantum dynamics: Schrodinger and Pauli solvers, the
equivalent hydrodynamic field equations, and checks that tie them together.

Submodules are imported on first attribute access so that ``fisherq.cli``
can configure thread pools before numpy loads.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "classical", "config", "errors", "evolution", "experiments", "expr", "gauge", "grid",
    "hamiltonian", "madelung", "observables", "scenarios", "snapshot", "variational", "verify",
)

_EXPORTS = {
    "make_grid": "grid",
    "Grid": "grid",
    "ParticleAxes": "grid",
    "Constants": "gauge",
    "GaugePotential": "gauge",
    "GaugeFunction": "gauge",
    "HamiltonianSpec": "hamiltonian",
    "apply_hamiltonian": "hamiltonian",
    "PropagatorConfig": "evolution",
    "propagate": "evolution",
    "ground_state": "evolution",
    "HydroState": "madelung",
    "SpinHydroState": "madelung",
    "psi_to_hydro": "madelung",
    "hydro_to_psi": "madelung",
    "takabayasi_split": "madelung",
    "takabayasi_join": "madelung",
    "ensemble_report": "observables",
    "ehrenfest_check": "observables",
    "fisher_identity_check": "variational",
    "evolve_characteristics": "classical",
}

__all__ = sorted(_EXPORTS) + list(_SUBMODULES)


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
