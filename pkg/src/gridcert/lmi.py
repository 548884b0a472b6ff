"""Dense symmetric-matrix utilities and a small PSD feasibility solver.

Sized for the desk-scale problems this package produces (matrix orders of
a few tens). Constraints are affine symmetric blocks required negative
semidefinite with a margin; positive-semidefinite requirements are stored
negated so the solver sees one normal form.

The grid dynamics carry an exact structural null direction (a uniform
angle shift), so the blocks built downstream are singular by construction
and can never satisfy a strict inequality on the full space. Declared
null directions are therefore handled exactly: the equalities
F(x) z = 0 are eliminated from the variable space first, and eigenvalue
checks run on the orthogonal complement of the directions.

Every "feasible" answer is re-verified with a plain symmetric eigenvalue
decomposition before being reported; the optimizer is never trusted.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .exceptions import LmiError

SYMMETRY_TOL = 1e-12


def as_symmetric(M) -> np.ndarray:
    """Validate near-symmetry and return the symmetrized copy."""
    M = np.asarray(M, float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise LmiError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise LmiError("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(M).max()))
    asym = float(np.abs(M - M.T).max())
    if asym > SYMMETRY_TOL * scale:
        raise LmiError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (M + M.T)


def eig_sym(M) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending."""
    return np.linalg.eigvalsh(as_symmetric(M))


def complement_basis(null_dirs, order: int) -> np.ndarray:
    """Orthonormal basis of the complement of the given directions."""
    dirs = [np.asarray(z, float) for z in null_dirs]
    if not dirs:
        return np.eye(order)
    Z = np.column_stack(dirs)
    Q, _ = np.linalg.qr(Z)
    U, s, _ = np.linalg.svd(np.eye(order) - Q @ Q.T)
    rank = int(np.sum(s > 0.5))  # projector singular values are 0 or 1
    return U[:, :rank]


def deflated_max_eig(M, null_dirs=()) -> float:
    """Largest eigenvalue of M restricted to the complement of null_dirs."""
    M = as_symmetric(M)
    U = complement_basis(null_dirs, M.shape[0])
    return float(eig_sym(U.T @ M @ U)[-1])


def kernel_residual(M, z) -> float:
    """Relative size of M z, as a diagnostic for an intended null direction."""
    M = as_symmetric(M)
    z = np.asarray(z, float)
    scale = float(np.max(np.abs(eig_sym(M)))) * float(np.linalg.norm(z))
    return float(np.linalg.norm(M @ z)) / max(scale, 1e-300)


def sym_variable_basis(order: int) -> np.ndarray:
    """Basis of symmetric matrices matching the upper-triangle variable order."""
    iu = np.triu_indices(order)
    basis = np.zeros((iu[0].size, order, order))
    for k, (i, j) in enumerate(zip(*iu)):
        basis[k, i, j] = 1.0
        basis[k, j, i] = 1.0
    return basis


def sym_from_coeffs(x, basis) -> np.ndarray:
    """Assemble the symmetric matrix for upper-triangle coefficients x."""
    return np.tensordot(np.asarray(x, float), basis, axes=(0, 0))


def coeffs_from_sym(M, order: int) -> np.ndarray:
    """Upper-triangle coefficients reproducing M under sym_from_coeffs."""
    M = as_symmetric(M)
    iu = np.triu_indices(order)
    return M[iu]


def diag_weights(order: int) -> np.ndarray:
    """Indicator of diagonal entries in the upper-triangle variable order.

    Dotted with the variable vector this gives the trace of the matrix,
    which the solver can use as a shrink objective.
    """
    iu = np.triu_indices(order)
    return np.array([1.0 if i == j else 0.0 for i, j in zip(*iu)])


@dataclass
class AffineBlock:
    """One constraint block in normal form: F0 + sum_i x_i K_i ⪯ -aim*I.

    aim is the margin the solver steers to; eps is the margin the final
    verification requires (defaults to the problem-wide one, and may be
    negative for constraints that are tight by construction). null_dirs
    lists directions every feasible point must annihilate.
    """

    F0: np.ndarray
    coeffs: np.ndarray
    aim: float = 0.0
    eps: float | None = None
    null_dirs: tuple = ()
    name: str = ""

    def __post_init__(self):
        self.F0 = as_symmetric(self.F0)
        self.coeffs = np.asarray(self.coeffs, float)
        self.null_dirs = tuple(np.asarray(z, float) for z in self.null_dirs)

    @classmethod
    def lower(cls, F0, coeffs, **kw):
        """Constraint F0 + sum_i x_i K_i ⪰ +aim*I, stored negated."""
        return cls(-np.asarray(F0, float), -np.asarray(coeffs, float), **kw)

    @property
    def order(self) -> int:
        return self.F0.shape[0]

    def at(self, x) -> np.ndarray:
        return self.F0 + np.tensordot(np.asarray(x, float), self.coeffs,
                                      axes=(0, 0))


@dataclass
class LmiProblem:
    """Affine PSD feasibility problem over nvar scalar variables."""

    blocks: list
    nvar: int
    margin: float = 1e-6
    iter_cap: int = 5000

    def __post_init__(self):
        if self.margin <= 0:
            raise LmiError("margin must be positive")
        names = set()
        for i, blk in enumerate(self.blocks):
            if blk.coeffs.shape != (self.nvar, blk.order, blk.order):
                raise LmiError(f"block {blk.name or i}: coefficient tensor "
                               f"shape {blk.coeffs.shape} does not match")
            if not blk.name:
                blk.name = f"block-{i}"
            if blk.name in names:
                raise LmiError(f"duplicate block name {blk.name!r}")
            names.add(blk.name)


@dataclass
class FeasibilityResult:
    """Outcome of psd_feasibility.

    margins maps block name to the verified margin (minus the largest
    deflated eigenvalue, so positive is good). When no feasible point was
    found, best_max records the smallest aimed-at maximum eigenvalue seen,
    as a diagnostic only.
    """

    feasible: bool
    x: np.ndarray | None
    margins: dict = field(default_factory=dict)
    status: str = ""
    best_max: float = np.inf
    iterations: int = 0


def _certify(prob: LmiProblem, x) -> tuple[bool, dict]:
    ok = True
    margins = {}
    for blk in prob.blocks:
        margin = -deflated_max_eig(blk.at(x), blk.null_dirs)
        margins[blk.name] = margin
        need = prob.margin if blk.eps is None else blk.eps
        if margin < need:
            ok = False
    return ok, margins


def psd_feasibility(prob: LmiProblem, x_hint=None, seed: int = 0,
                    shrink_weights=None, stage_iters: int = 400,
                    ) -> FeasibilityResult:
    """Search for variable values satisfying every block of the problem.

    Declared null directions become linear equality constraints on the
    variables and are eliminated exactly (an inconsistent set means the
    problem is structurally infeasible). On the remaining free variables
    the solver descends a smoothed hinge on the deflated block eigenvalues
    with progressively sharper smoothing until every block clears its aim,
    then, if shrink_weights is given, pulls weights @ x down as far as
    feasibility allows. The returned margins come from a fresh eigenvalue
    check, not from the optimizer state.
    """
    blocks = prob.blocks
    rows, rhs = [], []
    for blk in blocks:
        for z in blk.null_dirs:
            Gz = (np.array([K @ z for K in blk.coeffs]) if prob.nvar
                  else np.zeros((0, blk.order)))
            for r in range(blk.order):
                rows.append(Gz[:, r])
                rhs.append(-float(blk.F0[r] @ z))
    if rows:
        G = np.array(rows)
        h = np.array(rhs)
        xp, *_ = np.linalg.lstsq(G, h, rcond=None)
        if np.linalg.norm(G @ xp - h) > 1e-8 * max(1.0, np.linalg.norm(h)):
            return FeasibilityResult(False, None, status="kernel-inconsistent")
        _, sG, VG = np.linalg.svd(G)
        tol = max(G.shape) * np.finfo(float).eps * (sG[0] if sG.size else 1.0)
        rank = int(np.sum(sG > tol))
        N = VG[rank:].T
    else:
        xp = np.zeros(prob.nvar)
        N = np.eye(prob.nvar)
    k = N.shape[1]

    # project every block onto the complement of its null directions once
    reduced = []
    for blk in blocks:
        U = complement_basis(blk.null_dirs, blk.order)
        F0r = U.T @ blk.at(xp) @ U
        if k:
            Fr = np.array([U.T @ np.tensordot(N[:, j], blk.coeffs, axes=(0, 0)) @ U
                           for j in range(k)])
        else:
            Fr = np.zeros((0, U.shape[1], U.shape[1]))
        reduced.append((F0r, Fr, blk.aim))

    def aimed_max(y):
        worst = -np.inf
        for F0r, Fr, aim in reduced:
            Mr = F0r + (np.tensordot(y, Fr, axes=(0, 0)) if k else 0.0)
            worst = max(worst, float(np.linalg.eigvalsh(Mr)[-1]) + aim)
        return worst

    if k == 0:
        # every variable is pinned by the equalities: plain point check
        ok, margins = _certify(prob, xp)
        return FeasibilityResult(ok, xp if ok else None, margins=margins,
                                 status="pinned" if ok else "pinned-infeasible",
                                 best_max=aimed_max(np.zeros(0)))

    weights = (np.zeros(prob.nvar) if shrink_weights is None
               else np.asarray(shrink_weights, float))

    def objective(y, beta, lam):
        f = 0.0
        grad = np.zeros(k)
        for F0r, Fr, aim in reduced:
            Mr = F0r + np.tensordot(y, Fr, axes=(0, 0))
            w, Q = np.linalg.eigh(Mr)
            zt = beta * (w + aim)
            # softplus hinge per eigenvalue; flat once the block clears aim
            sp = np.where(zt > 30, zt, np.log1p(np.exp(np.minimum(zt, 30)))) / beta
            sig = 1.0 / (1.0 + np.exp(-np.clip(zt, -500, 500)))
            f += sp.sum()
            grad += np.einsum('jab,ak,bk->jk', Fr, Q, Q) @ sig
        if lam > 0:
            f += lam * float(weights @ (xp + N @ y))
            grad += lam * (N.T @ weights)
        return f, grad

    if x_hint is not None:
        y = N.T @ (np.asarray(x_hint, float) - xp)
    else:
        y = 0.1 * np.random.default_rng(seed).standard_normal(k)

    used = 0
    best = np.inf
    feasible = False
    beta = 16.0
    for _stage in range(8):
        if used >= prob.iter_cap:
            break
        res = minimize(objective, y, args=(beta, 0.0), jac=True,
                       method="L-BFGS-B",
                       options=dict(maxiter=min(stage_iters, prob.iter_cap - used),
                                    ftol=1e-16, gtol=1e-14))
        used += res.nit
        y = res.x
        worst = aimed_max(y)
        best = min(best, worst)
        if worst < 0:
            feasible = True
            break
        beta *= 4.0

    if feasible and shrink_weights is not None:
        # trade slack for smaller weighted variables; keep only feasible moves
        lam = 1e-2
        for _round in range(12):
            if used >= prob.iter_cap:
                break
            res = minimize(objective, y, args=(2048.0, lam), jac=True,
                           method="L-BFGS-B",
                           options=dict(maxiter=min(stage_iters, prob.iter_cap - used),
                                        ftol=1e-16, gtol=1e-14))
            used += res.nit
            if aimed_max(res.x) < 0:
                y = res.x
                lam *= 2.0
            else:
                lam *= 0.25

    if not feasible:
        return FeasibilityResult(False, None, status="not-found",
                                 best_max=best, iterations=used)
    x = xp + N @ y
    ok, margins = _certify(prob, x)
    return FeasibilityResult(ok, x if ok else None, margins=margins,
                             status="feasible" if ok else "verification-failed",
                             best_max=min(best, aimed_max(y)), iterations=used)


def min_quadratic_on_hyperplane(P, c, b: float) -> float:
    """Minimum of x^T P x over the hyperplane c^T x = b, in closed form.

    Equals b^2 / (c^T P^{-1} c); the inverse is applied through a
    Cholesky solve. P must be positive definite and c nonzero.
    """
    P = as_symmetric(P)
    c = np.asarray(c, float)
    if np.linalg.norm(c) == 0.0:
        raise LmiError("hyperplane normal is zero")
    if float(eig_sym(P)[0]) < 1e-12:
        raise LmiError("matrix is singular or not positive definite")
    denom = float(c @ cho_solve(cho_factor(P), c))
    return b * b / denom
