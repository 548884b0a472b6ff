"""Trajectory integration for the full and fault-on dynamics.

States are deviation coordinates around the equilibrium, ordered
[generator angles, generator velocities, load angles]. The fault phase
runs the tripped-line dynamics with the plan's retuned parameters; the
post-fault phase recloses the line and restores nominal parameters.
"""

from dataclasses import dataclass, field
from math import pi

import numpy as np

from .certificate import Certificate
from .emergency import EmergencyPlan
from .equilibrium import Equilibrium
from .exceptions import SimulationError
from .network import Network, SystemMatrices, assemble_matrices

DEFAULT_STEP = 1e-3
DEFAULT_POST_HORIZON = 20.0
CONVERGENCE_TOL = 1e-4


@dataclass
class Trajectory:
    """Sampled trajectory with optional Lyapunov trace.

    phase_marks holds sample indices of fault-start, clearing, and end
    for scenario runs. polytope_exit is the first sample index at which
    some line angle leaves [-pi/2, pi/2], or None; samples beyond it are
    outside the certified region, which is recorded rather than fatal.
    """

    times: np.ndarray
    states: np.ndarray
    lyapunov: np.ndarray | None = None
    phase_marks: dict = field(default_factory=dict)
    diverged: bool = False
    polytope_exit: int | None = None

    @property
    def final_infnorm(self) -> float:
        return float(np.max(np.abs(self.states[-1])))

    def converged(self, tol: float = CONVERGENCE_TOL) -> bool:
        return (not self.diverged) and self.final_infnorm < tol


def rhs_full(sys: SystemMatrices, eq: Equilibrium, x) -> np.ndarray:
    """Drift of the intact system: A x - B [sin(d* + Cx) - sin d*]."""
    x = np.asarray(x, float)
    f = np.sin(eq.line_angles + sys.C @ x) - np.sin(eq.line_angles)
    return sys.A @ x - sys.B @ f


def rhs_fault_on(sys: SystemMatrices, eq: Equilibrium, edge: int,
                 x) -> np.ndarray:
    """Fault-on drift: the intact field plus the tripped line's flow
    injected back, which cancels that line's coupling exactly."""
    x = np.asarray(x, float)
    y = eq.line_angles + sys.C @ x
    f = np.sin(y) - np.sin(eq.line_angles)
    out = sys.A @ x - sys.B @ f
    out += sys.B[:, edge] * np.sin(y[edge])
    return out


def make_rhs_full(sys: SystemMatrices, eq: Equilibrium):
    """Buffered closure form of rhs_full for the integrator hot loop."""
    A, B, C = sys.A, sys.B, sys.C
    dstar = eq.line_angles.copy()
    s0 = np.sin(dstar)

    def rhs(x, out):
        f = np.sin(dstar + C @ x)
        f -= s0
        np.dot(A, x, out=out)
        out -= B @ f
        return out

    return rhs


def make_rhs_fault(sys: SystemMatrices, eq: Equilibrium, edge: int):
    """Buffered closure form of rhs_fault_on."""
    A, B, C = sys.A, sys.B, sys.C
    dstar = eq.line_angles.copy()
    s0 = np.sin(dstar)
    Bcol = B[:, edge].copy()

    def rhs(x, out):
        y = dstar + C @ x
        f = np.sin(y)
        fe = f[edge]
        f -= s0
        np.dot(A, x, out=out)
        out -= B @ f
        out += Bcol * fe
        return out

    return rhs


def integrate(rhs, x0, horizon: float, step: float) -> Trajectory:
    """Classical fixed-step 4th-order integration of rhs(x, out).

    Samples every step from 0 and appends an exact-endpoint sample when
    the horizon is not a step multiple. A non-finite state truncates the
    trajectory at the last good sample and sets the divergence flag.
    """
    if step <= 0:
        raise SimulationError(f"step must be positive, got {step}")
    if horizon < step:
        raise SimulationError("horizon must cover at least one step")
    x0 = np.asarray(x0, float)
    nsteps = int(np.floor(horizon / step + 1e-12))
    rem = horizon - nsteps * step
    partial = rem > 1e-12 * max(1.0, horizon)
    total = nsteps + (1 if partial else 0)
    xs = np.empty((total + 1, x0.size))
    ts = np.empty(total + 1)
    xs[0] = x0
    ts[0] = 0.0
    x = x0.copy()
    k1 = np.empty_like(x)
    k2 = np.empty_like(x)
    k3 = np.empty_like(x)
    k4 = np.empty_like(x)
    tmp = np.empty_like(x)
    kept = 0
    diverged = False
    for i in range(total):
        h = step if i < nsteps else rem
        rhs(x, k1)
        np.multiply(k1, 0.5 * h, out=tmp)
        tmp += x
        rhs(tmp, k2)
        np.multiply(k2, 0.5 * h, out=tmp)
        tmp += x
        rhs(tmp, k3)
        np.multiply(k3, h, out=tmp)
        tmp += x
        rhs(tmp, k4)
        # x += h/6 (k1 + 2 k2 + 2 k3 + k4), fused in place
        k2 += k3
        k1 += k4
        k2 *= 2.0
        k1 += k2
        k1 *= h / 6.0
        x += k1
        if not np.all(np.isfinite(x)):
            diverged = True
            break
        kept = i + 1
        xs[kept] = x
        ts[kept] = (i + 1) * step if i + 1 <= nsteps else horizon
    return Trajectory(times=ts[:kept + 1].copy(), states=xs[:kept + 1].copy(),
                      diverged=diverged)


def simulate_scenario(net: Network, eq: Equilibrium,
                      cert: Certificate | None, plan: EmergencyPlan,
                      post_horizon: float = DEFAULT_POST_HORIZON,
                      step: float = DEFAULT_STEP) -> Trajectory:
    """Fault window under the plan's parameters, then nominal recovery.

    Phase 1 integrates the fault-on dynamics from the equilibrium (zero
    deviation) for tau_clearing with the plan's (m, d) and the tripped
    line. Phase 2 recloses the line, restores nominal parameters, and
    integrates the intact dynamics for post_horizon. The Lyapunov trace
    uses the certificate's P when given, else the plan's stored matrix.
    """
    edge = net.line_index(plan.tripped_line)
    sys_fault = assemble_matrices(net, plan.tuned_inertia, plan.tuned_damping)
    x0 = np.zeros(sys_fault.state_dim)
    phase1 = integrate(make_rhs_fault(sys_fault, eq, edge), x0,
                       plan.tau_clearing, step)
    sys_post = assemble_matrices(net)  # nominal, line back in service
    marks = {"fault-start": 0, "clearing": len(phase1.times) - 1}
    if phase1.diverged:
        times, states = phase1.times, phase1.states
        diverged = True
    else:
        phase2 = integrate(make_rhs_full(sys_post, eq),
                           phase1.states[-1], post_horizon, step)
        times = np.concatenate([phase1.times,
                                phase1.times[-1] + phase2.times[1:]])
        states = np.vstack([phase1.states, phase2.states[1:]])
        diverged = phase2.diverged
    marks["end"] = len(times) - 1
    P = cert.P if cert is not None else plan.check_P
    lyap = np.einsum("ij,jk,ik->i", states, P, states)
    angles = eq.line_angles + states @ sys_post.C.T
    outside = np.max(np.abs(angles), axis=1) > pi / 2
    exit_idx = int(np.argmax(outside)) if outside.any() else None
    return Trajectory(times=times, states=states, lyapunov=lyap,
                      phase_marks=marks, diverged=diverged,
                      polytope_exit=exit_idx)


def save_trajectory(traj: Trajectory, net: Network, path):
    """Write the trajectory as CSV: t, per-bus angle deviations, per-
    generator velocities, and V, at 12 significant digits.

    Angle columns follow the internal generator-first bus order; the
    network's order attribute maps positions back to bus ids.
    """
    if traj.lyapunov is None:
        raise SimulationError("trajectory has no Lyapunov trace to export")
    n, m = net.n, net.m
    header = (["t"] + [f"delta_{i + 1}" for i in range(n)]
              + [f"omega_{j + 1}" for j in range(m)] + ["V"])
    deltas = np.hstack([traj.states[:, :m], traj.states[:, 2 * m:]])
    omegas = traj.states[:, m:2 * m]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(traj.times.size):
            row = ([traj.times[k]] + list(deltas[k]) + list(omegas[k])
                   + [traj.lyapunov[k]])
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


def load_trajectory(path) -> dict:
    """Parse a trajectory CSV back into arrays keyed t, delta, omega, V."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if header[0] != "t" or header[-1] != "V":
        raise SimulationError(f"{path}: unexpected trajectory header")
    n = sum(1 for h in header if h.startswith("delta_"))
    m = sum(1 for h in header if h.startswith("omega_"))
    if len(header) != 2 + n + m:
        raise SimulationError(f"{path}: malformed trajectory header")
    return {"t": data[:, 0], "delta": data[:, 1:1 + n],
            "omega": data[:, 1 + n:1 + n + m], "V": data[:, -1]}
