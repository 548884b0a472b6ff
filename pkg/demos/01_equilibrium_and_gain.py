"""Solve the three-machine equilibrium and look at the sector gains.

Run from the repository root: python3 demos/01_equilibrium_and_gain.py
"""
from pathlib import Path

import numpy as np

from gridcert import check_sync_condition, load_grid_file, sector_gain, solve_equilibrium

GRID = Path(__file__).parent / "grids" / "three_machine.yaml"

net = load_grid_file(GRID)
print(f"network: {net.n} buses, {net.ne} lines, {net.m} generators")

# The synchronization test is a closed-form bound: if the weighted flow
# imbalance fits under sin(gamma), an equilibrium with every line angle
# inside [-gamma, gamma] exists and Newton will find it from a flat start.
gamma = np.pi / 10
holds, value = check_sync_condition(net, gamma)
print(f"sync condition: {value:.6f} <= sin(gamma) = {np.sin(gamma):.6f}: "
      f"{holds}")

eq = solve_equilibrium(net, gamma=gamma)
for line, angle in zip(net.lines, eq.line_angles):
    u, v = line.endpoints
    print(f"  line ({u},{v}): delta* = {angle:+.6f} rad")
print(f"residual after {eq.iterations} Newton steps: {eq.residual:.2e}")

# Two sector gains bracket the sine nonlinearity inside the polytope
# |delta| <= pi/2. The per-line variant uses each line's own equilibrium
# angle; the uniform variant plugs in the worst case gamma for every line,
# so it is always the smaller (more conservative) of the two.
print(f"per-line gain: {sector_gain(eq):.6f}")
print(f"uniform gain:  {sector_gain(eq, uniform=True):.6f}")

# The region must contain the equilibrium: gamma = 0.05*pi = 0.157 sits
# just under the largest line angle (0.1588) and is rejected outright.
from gridcert import EquilibriumError

try:
    solve_equilibrium(net, gamma=0.05 * np.pi)
except EquilibriumError as ex:
    print(f"\ngamma = 0.05*pi rejected: {ex}")

# Above that threshold the uniform gain decays as the region widens.
print("\ngamma sweep (uniform gain):")
for frac in (0.06, 0.1, 0.2, 0.3, 0.4):
    g = sector_gain(solve_equilibrium(net, gamma=np.pi * frac), uniform=True)
    print(f"  gamma = {frac:.2f}*pi -> g = {g:.4f}")
