"""
Letting hbar go to zero
=======================

The same initial density and action are evolved two ways: by the
Schroedinger equation at decreasing hbar, and by the hbar-free
characteristics of the classical continuity and Hamilton-Jacobi pair.
The L1 distance between the two densities falls with hbar.
"""

import numpy as np

from fisherq import experiments as ex
from fisherq.classical import evolve_characteristics, reconstruct_fields
from fisherq.grid import integrate, make_grid
from fisherq.hamiltonian import HamiltonianSpec
from fisherq.madelung import HydroState

for kind in ("harmonic", "free"):
    rows = ex.classical_convergence(kind)
    print(kind)
    for hbar, dist in rows:
        print(f"  hbar = {hbar:<6g} L1 = {dist:.4f}")

# before the focal time the momentum field is single valued: p(x) = -x tan t
grid = make_grid(512, 40.0)
x = grid.axis_coords(0)
rho = np.exp(-((x + 2.0) ** 2) / 2)
rho /= integrate(rho, grid)
h = HamiltonianSpec(grid, potential="0.5*x^2")
ce = evolve_characteristics(HydroState(rho, 0 * x), h, np.pi / 3, 20000, 0.01, seed=4)
field = reconstruct_fields(ce, grid)
for xi in (-1.5, -1.0, -0.5):
    i = np.argmin(np.abs(x - xi))
    print(f"p({x[i]:+.2f}) = {field.p_map[0][i]:+.4f}, expected {-x[i] * np.tan(np.pi / 3):+.4f}")

# at t = pi/2 every trajectory reaches the origin
late = evolve_characteristics(HydroState(rho, 0 * x), h, 2.0, 2000, 0.01, seed=4)
print(f"caustic: {late.caustic} at t = {late.caustic_time:.2f}")
