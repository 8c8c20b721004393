"""
Splitting a wavefunction into density and action
=================================================

A coherent state of the oscillator is evolved with the linear solver, then
cut into (rho, S). The continuity and Hamilton-Jacobi residuals of the
split fields stay at discretization level. Deleting the quantum potential
from the Hamilton-Jacobi equation leaves a residual of order one.
"""

import warnings

import numpy as np

from fisherq.errors import UnwrapWarning
from fisherq.evolution import PropagatorConfig, normalize, step
from fisherq.grid import make_grid
from fisherq.hamiltonian import HamiltonianSpec
from fisherq.madelung import continuity_residual, hj_residual, psi_to_hydro

warnings.simplefilter("ignore", UnwrapWarning)

grid = make_grid(256, 20.0)
x = grid.axis_coords(0)
h = HamiltonianSpec(grid, potential="0.5*x^2")
psi = normalize(np.exp(-((x - 1.5) ** 2) / 2 + 0.7j * x), grid)

dt = 1e-3
cfg = PropagatorConfig(dt=dt)
print("step   continuity     Hamilton-Jacobi   HJ without quantum term")
prev, cur = None, psi
for n in range(1, 301):
    nxt = step(cur, h, cfg, (n - 1) * dt)
    if prev is not None and n % 50 == 0:
        slices = [psi_to_hydro(p)[0] for p in (prev, cur, nxt)]
        t = (n - 1) * dt
        c = continuity_residual(slices, h, t, dt).relative
        hj = hj_residual(slices, h, t, dt).relative
        bare = hj_residual(slices, h, t, dt, drop_quantum=True).relative
        print(f"{n:4d}   {c:.3e}      {hj:.3e}         {bare:.3e}")
    prev, cur = cur, nxt

# the residuals shrink as dt^2 since time derivatives are centred differences
for dt in (4e-3, 2e-3, 1e-3):
    cfg = PropagatorConfig(dt=dt)
    a = step(psi, h, cfg)
    b = step(a, h, cfg, dt)
    slices = [psi_to_hydro(p)[0] for p in (psi, a, b)]
    print(f"dt = {dt:.0e}: HJ residual {hj_residual(slices, h, dt, dt).relative:.3e}")
