"""Emergency retuning of synchronverter inertia and damping.

Given a stability certificate P and a line trip with clearing time tau,
the designer looks for parameters (m, d) on the tunable generators such
that the fault-cleared state is certifiably inside the region of
attraction. Two routes are implemented: a common-P design that reuses
the certificate's P (affine in damping with inertia fixed, or in inverse
inertia with damping fixed), and a per-candidate design that solves for
a fresh matrix dominating P for each tabled (m, d).

Parameter vectors follow the network's internal generator-first order.
"""

import itertools
import json
import os
import warnings
from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .certificate import Certificate, find_certificate, matrix_from_json
from .equilibrium import Equilibrium
from .exceptions import DesignError
from .lmi import (AffineBlock, LmiProblem, deflated_max_eig, psd_feasibility,
                  sym_from_coeffs, sym_variable_basis)
from .network import Network, SystemMatrices, assemble_matrices

DAMPING_BOUNDS = (0.1, 50.0)
INERTIA_BOUNDS = (0.2, 20.0)
BLOCK_EPS = 1e-6
DOMINANCE_SLACK = -1e-10
DEFAULT_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)

SAFE = "SAFE"
CONTROLLABLE = "CONTROLLABLE"
SHED_REQUIRED = "SHED-REQUIRED"


@dataclass
class EmergencyPlan:
    """Retuning instruction for one contingency.

    mu equals tau_clearing divided by the level used as vmin, exactly.
    tuned_inertia has one entry per generator, tuned_damping one per bus;
    only tunable generators may differ from nominal. method records which
    design route produced the plan; fault_P is the per-candidate matrix
    when the per-dynamics route was used, else None.
    """

    tripped_line: tuple[int, int]
    tau_clearing: float
    mu: float
    tuned_inertia: np.ndarray
    tuned_damping: np.ndarray
    method: str
    design_P: np.ndarray
    fault_P: np.ndarray | None = None
    verified_margins: dict = field(default_factory=dict)

    @property
    def vmin(self) -> float:
        return self.tau_clearing / self.mu

    @property
    def check_P(self) -> np.ndarray:
        """Matrix whose sub-level set certifies the cleared state."""
        return self.fault_P if self.fault_P is not None else self.design_P


# -- fixed-parameter blocks ---------------------------------------------


def fault_input_matrix(sys: SystemMatrices, mu: float, edge: int) -> np.ndarray:
    """Input matrix of the fault-on decay block: B with the tripped
    line's column appended again, scaled by sqrt(mu)."""
    if mu < 0:
        raise DesignError(f"mu must be nonnegative, got {mu}")
    return np.hstack([sys.B, sqrt(mu) * sys.B[:, edge:edge + 1]])


def _decay_block(P, Ab, C, Bin, g):
    nx = Ab.shape[0]
    kk = Bin.shape[1]
    M = np.zeros((nx + kk, nx + kk))
    M[:nx, :nx] = Ab.T @ P + P @ Ab + ((1.0 - g) ** 2 / 4.0) * (C.T @ C)
    M[:nx, nx:] = P @ Bin
    M[nx:, :nx] = Bin.T @ P
    M[nx:, nx:] = -np.eye(kk)
    return M


def fault_block(P, sys: SystemMatrices, g: float, mu: float,
                edge: int) -> tuple[np.ndarray, np.ndarray]:
    """Fault-on decay block at fixed (P, m, d) and its gauge direction."""
    Ab = sys.A - 0.5 * (1.0 + g) * sys.B @ sys.C
    Bbar = fault_input_matrix(sys, mu, edge)
    M = _decay_block(P, Ab, sys.C, Bbar, g)
    z = np.zeros(M.shape[0])
    z[:sys.state_dim] = sys.gauge_direction()
    return M, z


def fault_condition_dense(P, sys: SystemMatrices, g: float, mu: float,
                          edge: int) -> np.ndarray:
    """Riccati form of the fault-on condition, before the Schur step."""
    Ab = sys.A - 0.5 * (1.0 + g) * sys.B @ sys.C
    Bbar = fault_input_matrix(sys, mu, edge)
    return (Ab.T @ P + P @ Ab + ((1.0 - g) ** 2 / 4.0) * (sys.C.T @ sys.C)
            + P @ Bbar @ Bbar.T @ P)


def design_block_margin(cert: Certificate, net: Network, line, mu: float,
                        inertia=None, damping=None) -> float:
    """Deflated max eigenvalue of the fault-on block at fixed parameters.

    Negative means the certificate's P already certifies the fault-on
    phase with those parameters (nominal ones by default).
    """
    sys = assemble_matrices(net, inertia, damping)
    M, z = fault_block(cert.P, sys, cert.gain, mu, net.line_index(line))
    return deflated_max_eig(M, (z,))


# -- affine design problems ---------------------------------------------


@dataclass
class DesignVariables:
    """Meaning of the scalar variables of an assembled design problem."""

    channel: str  # "damping" or "inverse-inertia"
    indices: list[int]  # internal generator indices, one per variable
    base_inertia: np.ndarray
    base_damping: np.ndarray

    def parameters(self, x) -> tuple[np.ndarray, np.ndarray]:
        mv = self.base_inertia.copy()
        dv = self.base_damping.copy()
        for j, k in enumerate(self.indices):
            if self.channel == "damping":
                dv[k] = x[j]
            else:
                mv[k] = 1.0 / x[j]
        return mv, dv


def assemble_design_lmi(sys: SystemMatrices, P, g: float, mu: float,
                        edge: int, channel: str, indices,
                        bounds) -> tuple[LmiProblem, DesignVariables]:
    """Fault-on decay block as an affine problem in retuned parameters.

    channel selects the free quantity on the listed generators: their
    damping (inertia held at sys values) or their inverse inertia
    (damping held). Freeing both at once makes the block bilinear and is
    rejected; alternate between the channels instead. bounds is one
    (lo, hi) pair per variable, in the variable's own scale.
    """
    if channel not in ("damping", "inverse-inertia"):
        raise DesignError(
            f"channel must be 'damping' or 'inverse-inertia', got {channel!r}; "
            "freeing both makes the problem bilinear")
    indices = list(indices)
    if len(bounds) != len(indices):
        raise DesignError("need one (lo, hi) pair per free variable")
    nx, ne, m = sys.state_dim, sys.B.shape[1], sys.m
    P = np.asarray(P, float)
    nvar = len(indices)

    A0 = sys.A.copy()
    B0 = sys.B.copy()
    for k in indices:
        A0[m + k, m + k] = 0.0
        if channel == "inverse-inertia":
            B0[m + k, :] = 0.0
    EtS = sys.E.T * np.diag(sys.S)

    def bbar(B):
        return np.hstack([B, sqrt(mu) * B[:, edge:edge + 1]])

    Ab0 = A0 - 0.5 * (1.0 + g) * B0 @ sys.C
    F0 = _decay_block(P, Ab0, sys.C, bbar(B0), g)
    q = F0.shape[0]
    coeffs = np.zeros((nvar, q, q))
    for j, k in enumerate(indices):
        dA = np.zeros((nx, nx))
        dB = np.zeros((nx, ne))
        if channel == "damping":
            dA[m + k, m + k] = -1.0 / sys.inertia[k]
        else:
            dA[m + k, m + k] = -sys.damping[k]
            dB[m + k, :] = EtS[k]
        dAb = dA - 0.5 * (1.0 + g) * dB @ sys.C
        dBbar = bbar(dB)
        K = np.zeros((q, q))
        K[:nx, :nx] = dAb.T @ P + P @ dAb
        K[:nx, nx:] = P @ dBbar
        K[nx:, :nx] = dBbar.T @ P
        coeffs[j] = K
    z = np.zeros(q)
    z[:nx] = sys.gauge_direction()
    blocks = [AffineBlock(F0, coeffs, aim=1e-4, null_dirs=(z,),
                          name="fault-decay")]
    for j, (lo, hi) in enumerate(bounds):
        if lo > hi:
            raise DesignError(f"variable {j}: empty bound interval")
        cj = np.zeros((nvar, 1, 1))
        cj[j, 0, 0] = 1.0
        blocks.append(AffineBlock(np.array([[-hi]]), cj.copy(), aim=0.0,
                                  eps=0.0, name=f"upper-bound-{j}"))
        blocks.append(AffineBlock(np.array([[lo]]), -cj, aim=0.0, eps=0.0,
                                  name=f"lower-bound-{j}"))
    meta = DesignVariables(channel=channel, indices=indices,
                           base_inertia=sys.inertia.copy(),
                           base_damping=sys.damping.copy())
    return LmiProblem(blocks=blocks, nvar=nvar), meta


def _solve_channel(cert, net, line, tau, channel, var_bounds, base_inertia,
                   base_damping, vmin_override):
    """Shared body of the fixed-inertia and fixed-damping designers."""
    if tau <= 0:
        raise DesignError(f"clearing time must be positive, got {tau}")
    level = vmin_override if vmin_override is not None else cert.vmin
    mu = tau / level
    edge = net.line_index(line)
    sys = assemble_matrices(net, base_inertia, base_damping)
    tunable = net.tunable_generators()

    # collapsed bounds pin the variable; keep only genuinely free ones
    lo, hi = var_bounds
    free, bounds = [], []
    mv = sys.inertia.copy()
    dv = sys.damping.copy()
    for k in tunable:
        if lo == hi:
            if channel == "damping":
                dv[k] = lo
            else:
                mv[k] = 1.0 / lo
        else:
            free.append(k)
            bounds.append((lo, hi))
    sys = assemble_matrices(net, mv, dv)

    if not free:
        M, z = fault_block(cert.P, sys, cert.gain, mu, edge)
        margin = -deflated_max_eig(M, (z,))
        info = {"status": "pinned", "margins": {"fault-decay": margin}}
        if margin < BLOCK_EPS:
            return None, mu, info
        return (mv, dv, info["margins"]), mu, info

    prob, meta = assemble_design_lmi(sys, cert.P, cert.gain, mu, edge,
                                     channel, free, bounds)
    if channel == "damping":
        hint = np.array([dv[k] for k in free])
    else:
        hint = np.array([1.0 / mv[k] for k in free])
    res = psd_feasibility(prob, x_hint=hint)
    info = {"status": res.status, "margins": res.margins,
            "best-max": res.best_max}
    if not res.feasible:
        return None, mu, info
    mv, dv = meta.parameters(res.x)
    return (mv, dv, res.margins), mu, info


def _make_plan(net, line, tau, mu, mv, dv, margins, method,
               design_P, fault_P=None) -> EmergencyPlan:
    u, v = net.lines[net.line_index(line)].endpoints
    return EmergencyPlan(tripped_line=(u, v), tau_clearing=tau, mu=mu,
                         tuned_inertia=np.asarray(mv, float),
                         tuned_damping=np.asarray(dv, float),
                         method=method, design_P=np.asarray(design_P, float),
                         fault_P=None if fault_P is None else np.asarray(fault_P, float),
                         verified_margins=dict(margins))


def design_fixed_inertia(cert: Certificate, net: Network, line, tau: float,
                         bounds=DAMPING_BOUNDS, base_inertia=None,
                         base_damping=None, vmin_override=None):
    """Retune tunable-generator damping with inertia held fixed.

    Returns (plan, info); plan is None when no verified damping exists
    within bounds, and info carries the solver diagnostics either way.
    """
    out, mu, info = _solve_channel(cert, net, line, tau, "damping", bounds,
                                   base_inertia, base_damping, vmin_override)
    if out is None:
        return None, info
    mv, dv, margins = out
    return _make_plan(net, line, tau, mu, mv, dv, margins, "common-P",
                      cert.P), info


def design_fixed_damping(cert: Certificate, net: Network, line, tau: float,
                         bounds=INERTIA_BOUNDS, base_inertia=None,
                         base_damping=None, vmin_override=None):
    """Retune tunable-generator inertia with damping held fixed.

    The affine variable is the inverse inertia, so the inertia interval
    (m_lo, m_hi) becomes (1/m_hi, 1/m_lo) internally.
    """
    m_lo, m_hi = bounds
    if m_lo <= 0:
        raise DesignError("inertia bounds must be positive")
    out, mu, info = _solve_channel(cert, net, line, tau, "inverse-inertia",
                                   (1.0 / m_hi, 1.0 / m_lo), base_inertia,
                                   base_damping, vmin_override)
    if out is None:
        return None, info
    mv, dv, margins = out
    return _make_plan(net, line, tau, mu, mv, dv, margins, "common-P",
                      cert.P), info


def alternate_heuristic(cert: Certificate, net: Network, line, tau: float,
                        rounds: int = 2, damping_bounds=DAMPING_BOUNDS,
                        inertia_bounds=INERTIA_BOUNDS, vmin_override=None):
    """Alternate the damping and inertia channels until one verifies.

    Odd rounds solve for damping, even rounds for inertia, each warm
    started from the parameters the previous rounds settled on. Returns
    (plan, history); plan is None after the round budget is exhausted.
    """
    if rounds < 1:
        raise DesignError(f"need at least one round, got {rounds}")
    mv = net.nominal_inertia()
    dv = net.nominal_damping()
    history = []
    for r in range(rounds):
        if r % 2 == 0:
            plan, info = design_fixed_inertia(
                cert, net, line, tau, bounds=damping_bounds,
                base_inertia=mv, base_damping=dv, vmin_override=vmin_override)
        else:
            plan, info = design_fixed_damping(
                cert, net, line, tau, bounds=inertia_bounds,
                base_inertia=mv, base_damping=dv, vmin_override=vmin_override)
        history.append({"round": r + 1,
                        "channel": "damping" if r % 2 == 0 else "inertia",
                        **info})
        if plan is not None:
            return plan, history
    return None, history


def procedure_b(net: Network, eq: Equilibrium, line, tau: float,
                retries: int = 3, rounds: int = 2,
                damping_bounds=DAMPING_BOUNDS, inertia_bounds=INERTIA_BOUNDS,
                uniform_gain: bool = False, vmin_override=None,
                cert: Certificate | None = None) -> EmergencyPlan:
    """Common-P design loop: certificate, level, then channel alternation.

    Each failed attempt re-solves the certificate from a perturbed start
    (the repeat step), up to the retry cap. Raises DesignError with the
    attempt history when no plan verifies. A pre-solved certificate may
    be passed in to reuse for the first attempt.
    """
    history = []
    for attempt in range(retries + 1):
        if cert is None or attempt > 0:
            cert = find_certificate(net, eq, uniform_gain=uniform_gain,
                                    seed=attempt)
        plan, rounds_info = alternate_heuristic(
            cert, net, line, tau, rounds=rounds,
            damping_bounds=damping_bounds, inertia_bounds=inertia_bounds,
            vmin_override=vmin_override)
        history.append({"attempt": attempt, "vmin": cert.vmin,
                        "rounds": rounds_info})
        if plan is not None:
            return plan
    raise DesignError(
        f"no verified retuning for line {tuple(line)} after "
        f"{retries + 1} attempts; history: {history}")


# -- per-candidate design (fresh matrix per (m, d)) ----------------------


def default_candidate_grid(net: Network,
                           multipliers=DEFAULT_MULTIPLIERS) -> list:
    """Geometric (m, d) candidates around nominal for the tunable set.

    Returns full (inertia, damping) vector pairs, sorted by relative
    deviation from nominal so the least intrusive candidate comes first.
    """
    tunable = net.tunable_generators()
    if not tunable:
        raise DesignError("network has no tunable generators")
    m_nom = net.nominal_inertia()
    d_nom = net.nominal_damping()
    axes = []
    for _k in tunable:
        axes.append(multipliers)  # inertia multiplier
        axes.append(multipliers)  # damping multiplier
    seen = set()
    grid = []
    for combo in itertools.product(*axes):
        mv = m_nom.copy()
        dv = d_nom.copy()
        for j, k in enumerate(tunable):
            mv[k] = m_nom[k] * combo[2 * j]
            dv[k] = d_nom[k] * combo[2 * j + 1]
        key = (tuple(mv), tuple(dv))
        if key in seen:
            continue
        seen.add(key)
        grid.append((mv, dv))
    def deviation(cand):
        mv, dv = cand
        return sqrt(float(np.sum(((mv - m_nom) / m_nom) ** 2))
                    + float(np.sum(((dv - d_nom) / d_nom) ** 2)))
    grid.sort(key=deviation)
    return grid


def candidate_problem(cert: Certificate, net: Network, edge: int, mu: float,
                      inertia, damping) -> LmiProblem:
    """Feasibility problem for a dominating matrix at one candidate.

    Affine in the entries of the fresh matrix: the fault-on decay block
    at the candidate's (m, d), plus dominance over the certificate's P
    (checked with a small negative slack, since the difference is tight
    by construction).
    """
    sys = assemble_matrices(net, inertia, damping)
    nx = sys.state_dim
    basis = sym_variable_basis(nx)
    nvar = basis.shape[0]
    Ab = sys.A - 0.5 * (1.0 + cert.gain) * sys.B @ sys.C
    Bbar = fault_input_matrix(sys, mu, edge)
    kk = Bbar.shape[1]
    q = nx + kk
    const = np.zeros((q, q))
    const[:nx, :nx] = ((1.0 - cert.gain) ** 2 / 4.0) * (sys.C.T @ sys.C)
    const[nx:, nx:] = -np.eye(kk)
    coeffs = np.zeros((nvar, q, q))
    for i in range(nvar):
        Pi = basis[i]
        coeffs[i, :nx, :nx] = Ab.T @ Pi + Pi @ Ab
        coeffs[i, :nx, nx:] = Pi @ Bbar
        coeffs[i, nx:, :nx] = Bbar.T @ Pi
    z = np.zeros(q)
    z[:nx] = sys.gauge_direction()
    decay = AffineBlock(const, coeffs, aim=1e-4, null_dirs=(z,),
                        name="fault-decay")
    dominate = AffineBlock.lower(-cert.P, basis.copy(), aim=0.0,
                                 eps=DOMINANCE_SLACK, name="dominates-design-p")
    return LmiProblem(blocks=[decay, dominate], nvar=nvar)


def _solve_candidate(cert, net, edge, mu, mv, dv):
    prob = candidate_problem(cert, net, edge, mu, mv, dv)
    nx = cert.order
    hint = 1.3 * cert.P[np.triu_indices(nx)]
    res = psd_feasibility(prob, x_hint=hint)
    if not res.feasible:
        return None, res
    P_cand = sym_from_coeffs(res.x, sym_variable_basis(nx))
    return P_cand, res


def procedure_d(net: Network, eq: Equilibrium, line, tau: float, grid=None,
                uniform_gain: bool = False, vmin_override=None,
                cert: Certificate | None = None) -> EmergencyPlan:
    """Per-candidate design: first tabled (m, d) admitting a dominating
    matrix wins.

    The sub-level test against the cleared state may use the candidate's
    own matrix because dominance makes its level set a subset of P's.
    Raises DesignError with per-candidate margins when the whole grid
    fails.
    """
    if cert is None:
        cert = find_certificate(net, eq, uniform_gain=uniform_gain)
    if grid is None:
        grid = default_candidate_grid(net)
    if not grid:
        raise DesignError("candidate grid is empty")
    level = vmin_override if vmin_override is not None else cert.vmin
    mu = tau / level
    edge = net.line_index(line)
    record = []
    for mv, dv in grid:
        P_cand, res = _solve_candidate(cert, net, edge, mu, mv, dv)
        record.append({"inertia": list(np.asarray(mv, float)),
                       "damping": list(np.asarray(dv, float)),
                       "status": res.status, "margins": res.margins})
        if P_cand is not None:
            return _make_plan(net, line, tau, mu, mv, dv, res.margins,
                              "per-dynamics-P", cert.P, fault_P=P_cand)
    raise DesignError(
        f"no candidate admits a dominating matrix for line {tuple(line)}; "
        f"tried {len(grid)}: {record}")


def enumerate_feasible_candidates(net: Network, eq: Equilibrium, line,
                                  tau: float, grid=None,
                                  uniform_gain: bool = False,
                                  cert: Certificate | None = None) -> list:
    """All grid candidates that verify, each as its own EmergencyPlan."""
    if cert is None:
        cert = find_certificate(net, eq, uniform_gain=uniform_gain)
    if grid is None:
        grid = default_candidate_grid(net)
    mu = tau / cert.vmin
    edge = net.line_index(line)
    plans = []
    for mv, dv in grid:
        P_cand, res = _solve_candidate(cert, net, edge, mu, mv, dv)
        if P_cand is not None:
            plans.append(_make_plan(net, line, tau, mu, mv, dv, res.margins,
                                    "per-dynamics-P", cert.P, fault_P=P_cand))
    return plans


# -- contingency scan -----------------------------------------------------


@dataclass
class Contingency:
    """Scan verdict for one line."""

    line: tuple[int, int]
    classification: str
    plan: EmergencyPlan | None
    detail: str = ""


def contingency_scan(net: Network, eq: Equilibrium, lines, tau: float,
                     method: str = "procedure-b", store_dir=None,
                     vmin_bound=None, uniform_gain: bool = False) -> list:
    """Classify each requested contingency and optionally persist plans.

    SAFE: the certificate's P already decays through the fault window at
    nominal parameters. CONTROLLABLE: a retuning plan verifies.
    SHED-REQUIRED: neither, so parameter retuning cannot certify the trip
    and conventional protection must act. With vmin_bound set, that lower
    bound replaces the certificate's vmin in every mu, trading tightness
    for robustness across nearby operating points.
    """
    if method not in ("procedure-b", "procedure-d"):
        raise DesignError(f"unknown design method {method!r}")
    if lines is None:
        lines = [ln.endpoints for ln in net.lines]
    requested = []
    for line in lines:
        key = frozenset(line)
        if any(frozenset(r) == key for r in requested):
            warnings.warn(f"duplicate contingency {tuple(line)} ignored",
                          stacklevel=2)
            continue
        requested.append(tuple(line))
    cert = find_certificate(net, eq, uniform_gain=uniform_gain)
    level = vmin_bound if vmin_bound is not None else cert.vmin
    mu = tau / level
    results = []
    for line in requested:
        margin = -design_block_margin(cert, net, line, mu)
        if margin >= BLOCK_EPS:
            plan = _make_plan(net, line, tau, mu, net.nominal_inertia(),
                              net.nominal_damping(),
                              {"fault-decay": margin}, "common-P", cert.P)
            results.append(Contingency(plan.tripped_line, SAFE, plan,
                                       detail="nominal parameters verify"))
            continue
        try:
            if method == "procedure-b":
                plan = procedure_b(net, eq, line, tau, cert=cert,
                                   uniform_gain=uniform_gain,
                                   vmin_override=vmin_bound)
            else:
                plan = procedure_d(net, eq, line, tau, cert=cert,
                                   uniform_gain=uniform_gain,
                                   vmin_override=vmin_bound)
            results.append(Contingency(plan.tripped_line, CONTROLLABLE, plan,
                                       detail="retuning plan attached"))
        except DesignError as ex:
            u, v = net.lines[net.line_index(line)].endpoints
            results.append(Contingency((u, v), SHED_REQUIRED, None,
                                       detail=str(ex)[:400]))
    if store_dir is not None:
        save_scan_results(results, store_dir, tau)
    return results


def delay_window_bound(cert: Certificate, net: Network, line,
                       tau_delay: float, tau_clearing: float,
                       check_nominal: bool = True) -> dict:
    """Level budget left after an uncontrolled reaction window.

    During [0, tau_delay] the parameters are still nominal, but the
    fault-on level grows at most at rate 1/mu, so the level at the end of
    the window is bounded by tau_delay/mu and the controlled phase keeps
    vmin - tau_delay/mu of budget. Requires the nominal fault-on block to
    verify (skippable for arithmetic on externally given constants);
    raises DesignError when the budget is exhausted.
    """
    if tau_delay < 0 or tau_clearing <= 0:
        raise DesignError("delay and clearing times must be nonnegative/positive")
    if tau_delay > tau_clearing:
        raise DesignError("delay window exceeds the clearing time")
    mu = tau_clearing / cert.vmin
    if check_nominal:
        margin = -design_block_margin(cert, net, line, mu)
        if margin < BLOCK_EPS:
            raise DesignError(
                f"nominal parameters do not verify the fault-on block "
                f"(margin {margin:.3e}); the window bound needs them to")
    level = tau_delay / mu
    budget = cert.vmin - level
    if budget <= 0:
        raise DesignError(
            f"no level budget remains after the delay window "
            f"(bound {level:.4f} >= vmin {cert.vmin:.4f})")
    return {"level-bound": level, "remaining-budget": budget, "mu": mu}


# -- plan store ------------------------------------------------------------


def _matrix_json(M) -> dict:
    M = np.asarray(M, float)
    return {"order": M.shape[0], "entries": [float(v) for v in M.reshape(-1)]}


def plan_to_json(plan: EmergencyPlan) -> dict:
    return {
        "tripped-line": list(plan.tripped_line),
        "tau-clearing": plan.tau_clearing,
        "mu": plan.mu,
        "tuned-inertia": [float(v) for v in plan.tuned_inertia],
        "tuned-damping": [float(v) for v in plan.tuned_damping],
        "method": plan.method,
        "design-P": _matrix_json(plan.design_P),
        "fault-P": None if plan.fault_P is None else _matrix_json(plan.fault_P),
        "verified-margins": {k: float(v)
                             for k, v in plan.verified_margins.items()},
    }


def plan_from_json(data: dict) -> EmergencyPlan:
    try:
        fault = data.get("fault-P")
        return EmergencyPlan(
            tripped_line=tuple(int(b) for b in data["tripped-line"]),
            tau_clearing=float(data["tau-clearing"]),
            mu=float(data["mu"]),
            tuned_inertia=np.asarray(data["tuned-inertia"], float),
            tuned_damping=np.asarray(data["tuned-damping"], float),
            method=str(data["method"]),
            design_P=matrix_from_json(data["design-P"]),
            fault_P=None if fault is None else matrix_from_json(fault),
            verified_margins=dict(data.get("verified-margins", {})),
        )
    except (KeyError, TypeError, ValueError) as ex:
        raise DesignError(f"malformed plan document: {ex}") from None


def save_plan(plan: EmergencyPlan, path):
    with open(path, "w") as fh:
        json.dump(plan_to_json(plan), fh, indent=1)
        fh.write("\n")


def load_plan(path) -> EmergencyPlan:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as ex:
            raise DesignError(f"cannot parse {path}: {ex}") from None
    return plan_from_json(data)


def store_filename(line) -> str:
    u, v = sorted(line)
    return f"line-{u}-{v}.json"


def save_scan_results(results, store_dir, tau: float):
    """One document per contingency: plan fields plus the class."""
    os.makedirs(store_dir, exist_ok=True)
    for item in results:
        if item.plan is not None:
            doc = plan_to_json(item.plan)
        else:
            doc = {"tripped-line": list(item.line), "tau-clearing": tau,
                   "mu": None, "tuned-inertia": None, "tuned-damping": None,
                   "method": None, "design-P": None, "fault-P": None,
                   "verified-margins": {}}
        doc["class"] = item.classification
        doc["detail"] = item.detail
        path = os.path.join(store_dir, store_filename(item.line))
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


def load_contingency(store_dir, line) -> tuple[str, EmergencyPlan | None]:
    """Read one stored scan verdict back: (class, plan or None)."""
    path = os.path.join(store_dir, store_filename(line))
    if not os.path.exists(path):
        raise DesignError(f"no stored result for line {tuple(line)}")
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as ex:
            raise DesignError(f"cannot parse {path}: {ex}") from None
    klass = data.get("class", CONTROLLABLE)
    plan = plan_from_json(data) if data.get("tripped-line") and data.get("mu") else None
    return klass, plan
