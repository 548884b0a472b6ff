"""Equilibrium flow, synchronization test, and the sector gain.

The equilibrium solves a_kj sin(delta_k - delta_j) balancing the bus
injections. Angles live on a quotient (uniform shifts are unobservable),
so the last bus angle is pinned to zero during the Newton solve.
"""

from dataclasses import dataclass
from math import pi, sin

import numpy as np

from .exceptions import EquilibriumError
from .network import Network

RESIDUAL_TOL = 1e-10
ANGLE_SLACK = 1e-12
DEFAULT_GAMMA = pi / 2 - 1e-9


@dataclass
class Equilibrium:
    """Synchronous equilibrium of the network.

    angles are per-bus (internal order, last bus pinned to zero) and
    line_angles holds delta_k - delta_j per line following the incidence
    orientation. gamma is the bound the line angles were checked against.
    """

    angles: np.ndarray
    line_angles: np.ndarray
    gamma: float
    residual: float
    iterations: int

    @property
    def max_line_angle(self) -> float:
        return float(np.max(np.abs(self.line_angles)))


def flow_mismatch(net: Network, angles: np.ndarray) -> np.ndarray:
    """Per-bus power mismatch: injections minus line flows."""
    E = net.incidence()
    a = net.couplings()
    return net.injections() - E.T @ (a * np.sin(E @ angles))


def solve_equilibrium(net: Network, gamma: float = DEFAULT_GAMMA,
                      max_iter: int = 50) -> Equilibrium:
    """Newton solve from a flat start with the last bus angle pinned.

    Raises EquilibriumError if the iteration stalls, the residual stays
    above 1e-10, or any line angle magnitude exceeds gamma (with a small
    numerical slack).
    """
    if not (0 < gamma < pi / 2):
        raise EquilibriumError(f"gamma must lie in (0, pi/2), got {gamma}")
    n = net.n
    E = net.incidence()
    a = net.couplings()
    p = net.injections()
    theta = np.zeros(n)
    free = slice(0, n - 1)
    res = p - E.T @ (a * np.sin(E @ theta))
    it = 0
    while it < max_iter and np.max(np.abs(res)) > RESIDUAL_TOL:
        w = a * np.cos(E @ theta)
        J = E.T @ (w[:, None] * E)  # Jacobian of the flow map
        try:
            step = np.linalg.solve(J[free, free], res[free])
        except np.linalg.LinAlgError:
            raise EquilibriumError(
                "singular Jacobian during equilibrium solve") from None
        theta[free] += step
        res = p - E.T @ (a * np.sin(E @ theta))
        it += 1
    resid = float(np.max(np.abs(res)))
    if resid > RESIDUAL_TOL:
        raise EquilibriumError(
            f"no equilibrium: residual {resid:.3e} after {it} iterations")
    line_angles = E @ theta
    worst = float(np.max(np.abs(line_angles)))
    if worst > gamma + ANGLE_SLACK:
        raise EquilibriumError(
            f"equilibrium outside the angle region: max |line angle| "
            f"{worst:.6f} > gamma = {gamma:.6f}")
    return Equilibrium(angles=theta, line_angles=line_angles, gamma=gamma,
                       residual=resid, iterations=it)


def sync_condition_norm(net: Network) -> float:
    """Edge infinity norm of the linearized flow solution.

    Solves the DC flow L theta = p through the pseudoinverse and returns
    the largest line angle magnitude max_e |theta_k - theta_j|.
    """
    E = net.incidence()
    a = net.couplings()
    L = E.T @ (a[:, None] * E)
    theta_dc = np.linalg.pinv(L) @ net.injections()
    return float(np.max(np.abs(E @ theta_dc)))


def check_sync_condition(net: Network, gamma: float) -> tuple[bool, float]:
    """Sufficient synchronization test: edge norm of L^+ p against sin(gamma).

    Returns (holds, norm value). The test is sufficient only; a False
    result does not rule out an equilibrium.
    """
    if not (0 < gamma < pi / 2):
        raise EquilibriumError(f"gamma must lie in (0, pi/2), got {gamma}")
    value = sync_condition_norm(net)
    return value <= sin(gamma), value


def _gain_at(angle: float) -> float:
    return (1.0 - sin(abs(angle))) / (pi / 2 - abs(angle))


def sector_gain(eq: Equilibrium, uniform: bool = False) -> float:
    """Lower sector slope g of the shifted line nonlinearities.

    Per-line mode (default) evaluates (1 - sin|d*|)/(pi/2 - |d*|) at each
    line's equilibrium angle and takes the minimum, which is the least
    conservative uniform bound valid for every line. With uniform=True
    the gain is evaluated at the region bound gamma instead, matching a
    worst-case-over-the-region analysis.
    """
    if uniform:
        return _gain_at(eq.gamma)
    return float(min(_gain_at(d) for d in eq.line_angles))
