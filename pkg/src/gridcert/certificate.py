"""Transient stability certificates.

A certificate is a positive definite P whose quadratic form decays along
the post-fault dynamics inside the angle polytope, together with the
level vmin below which sub-level sets cannot leave the polytope. The
decay condition is one semidefinite block in P; vmin has a closed form
per polytope face.
"""

import json
from dataclasses import dataclass
from math import pi

import numpy as np

from .equilibrium import Equilibrium, sector_gain
from .exceptions import CertificateError
from .lmi import (AffineBlock, LmiProblem, deflated_max_eig, diag_weights,
                  eig_sym, kernel_residual, min_quadratic_on_hyperplane,
                  psd_feasibility, sym_from_coeffs, sym_variable_basis)
from .network import Network, SystemMatrices, assemble_matrices

PD_RELATIVE_EPS = 1e-6
SUPPLIED_MARGIN = 1e-3  # absolute slack for matrices printed to few decimals


@dataclass
class Face:
    """Polytope face: a line pushed to sign * pi/2, and its level value."""

    line: tuple[int, int]
    sign: int
    value: float


@dataclass
class Certificate:
    """Verified stability certificate for one network and equilibrium.

    margins holds the re-verified eigenvalue margins of the defining
    blocks (positive is good). kernel_leak measures how far P's action on
    the gauge direction is from exact annihilation; it is a diagnostic,
    nonzero for externally supplied matrices printed to few decimals.
    """

    P: np.ndarray
    gain: float
    vmin: float
    margins: dict
    face_argmin: Face
    line_angles: np.ndarray
    C: np.ndarray
    gauge: np.ndarray
    kernel_leak: float

    @property
    def margin(self) -> float:
        return self.margins["stability"]

    @property
    def order(self) -> int:
        return self.P.shape[0]


def shifted_coupling_block(sys: SystemMatrices, g: float) -> np.ndarray:
    """Drift matrix after absorbing the sector midpoint: A - (1+g)/2 B C."""
    return sys.A - 0.5 * (1.0 + g) * sys.B @ sys.C


def assemble_cert_lmi(sys: SystemMatrices, g: float,
                      aim_block: float = 0.02,
                      aim_pd: float = 0.03) -> LmiProblem:
    """Certificate feasibility problem in the entries of P.

    Two blocks: the quadratic-decay block

        [Ab' P + P Ab + (1-g)^2/4 C'C,  P B]
        [B' P,                           -I ]  <= 0

    with Ab from shifted_coupling_block, deflated along the gauge
    direction, and P >= aim_pd * I. The aims are solve-to margins; final
    verification uses the problem margin.
    """
    if not 0.0 < g <= 1.0:
        raise CertificateError(f"sector gain must lie in (0, 1], got {g}")
    nx, ne = sys.state_dim, sys.B.shape[1]
    if sys.C.shape != (ne, nx):
        raise CertificateError("system matrices have inconsistent shapes")
    basis = sym_variable_basis(nx)
    nvar = basis.shape[0]
    Ab = shifted_coupling_block(sys, g)
    q = nx + ne
    const = np.zeros((q, q))
    const[:nx, :nx] = ((1.0 - g) ** 2 / 4.0) * (sys.C.T @ sys.C)
    const[nx:, nx:] = -np.eye(ne)
    coeffs = np.zeros((nvar, q, q))
    for i in range(nvar):
        Pi = basis[i]
        coeffs[i, :nx, :nx] = Ab.T @ Pi + Pi @ Ab
        coeffs[i, :nx, nx:] = Pi @ sys.B
        coeffs[i, nx:, :nx] = sys.B.T @ Pi
    z = np.zeros(q)
    z[:nx] = sys.gauge_direction()
    decay = AffineBlock(const, coeffs, aim=aim_block, null_dirs=(z,),
                        name="stability")
    pd = AffineBlock.lower(np.zeros((nx, nx)), basis.copy(), aim=aim_pd,
                           name="positive-definite")
    return LmiProblem(blocks=[decay, pd], nvar=nvar)


def compute_vmin(P, net: Network, eq: Equilibrium,
                 faces: str = "generator") -> tuple[float, Face]:
    """Smallest Lyapunov value on the polytope escape faces.

    Each face pins one line angle to sign * pi/2; in deviation
    coordinates that is the hyperplane c_e' x = sign * pi/2 - d*_e with
    c_e the line's row of C, and the face minimum has a closed form.
    faces selects the enumerated set: "generator" restricts to lines
    between generator buses, "all" covers every line (never larger, so
    always sound). An empty generator set falls back to all lines.
    """
    if faces not in ("generator", "all"):
        raise CertificateError(f"unknown face set {faces!r}")
    sys = assemble_matrices(net)
    edge_set = net.generator_line_indices() if faces == "generator" else range(net.ne)
    if not list(edge_set):
        edge_set = range(net.ne)
    best = None
    for e in edge_set:
        c = sys.C[e]
        for sign in (1, -1):
            b = sign * pi / 2 - eq.line_angles[e]
            val = min_quadratic_on_hyperplane(P, c, b)
            if best is None or val < best.value:
                best = Face(line=net.user_endpoints(e), sign=sign, value=val)
    return best.value, best


def find_certificate(net: Network, eq: Equilibrium,
                     uniform_gain: bool = False, seed: int = 0,
                     faces: str = "generator") -> Certificate:
    """Solve the certificate problem and return a fully verified result.

    seed = 0 starts the solve from the identity matrix; other seeds
    perturb the start, giving a different (equally valid) P, which the
    retry loop of the emergency designer exploits.
    """
    if eq.max_line_angle >= pi / 2:
        raise CertificateError("equilibrium outside the sine-monotone region")
    g = sector_gain(eq, uniform=uniform_gain)
    sys = assemble_matrices(net)
    prob = assemble_cert_lmi(sys, g)
    nx = sys.state_dim
    hint = np.eye(nx)[np.triu_indices(nx)]
    if seed:
        rng = np.random.default_rng(seed)
        hint = hint + 0.1 * rng.standard_normal(hint.size)
    res = psd_feasibility(prob, x_hint=hint, shrink_weights=diag_weights(nx))
    if not res.feasible:
        raise CertificateError(
            f"no certificate found within budget (status {res.status}, "
            f"best max eigenvalue {res.best_max:.3e})")
    P = sym_from_coeffs(res.x, sym_variable_basis(nx))
    vmin, face = compute_vmin(P, net, eq, faces=faces)
    zfull = np.zeros(prob.blocks[0].order)
    zfull[:nx] = sys.gauge_direction()
    leak = kernel_residual(prob.blocks[0].at(res.x), zfull)
    return Certificate(P=P, gain=g, vmin=vmin, margins=res.margins,
                       face_argmin=face, line_angles=eq.line_angles.copy(),
                       C=sys.C.copy(), gauge=sys.gauge_direction(),
                       kernel_leak=leak)


def verify_supplied_p(P, net: Network, eq: Equilibrium,
                      uniform_gain: bool = False,
                      block_margin: float = SUPPLIED_MARGIN,
                      faces: str = "generator") -> Certificate:
    """Build a Certificate around an externally supplied P.

    Checks positive definiteness (relative floor) and the decay block on
    the gauge complement; raises CertificateError with the eigenvalue
    evidence when either fails. Rounded published matrices leak into the
    gauge direction, which is why the block check is quotient-space and
    the leak is reported rather than enforced.
    """
    P = np.asarray(P, float)
    g = sector_gain(eq, uniform=uniform_gain)
    sys = assemble_matrices(net)
    if P.shape != (sys.state_dim, sys.state_dim):
        raise CertificateError(
            f"P has order {P.shape}, expected {sys.state_dim}")
    w = eig_sym(P)
    if w[0] < PD_RELATIVE_EPS * max(w[-1], 0.0):
        raise CertificateError(
            f"supplied P is not positive definite: eigenvalues {w}")
    Ab = shifted_coupling_block(sys, g)
    nx, ne = sys.state_dim, net.ne
    block = np.zeros((nx + ne, nx + ne))
    block[:nx, :nx] = Ab.T @ P + P @ Ab + ((1.0 - g) ** 2 / 4.0) * (sys.C.T @ sys.C)
    block[:nx, nx:] = P @ sys.B
    block[nx:, :nx] = sys.B.T @ P
    block[nx:, nx:] = -np.eye(ne)
    z = np.zeros(nx + ne)
    z[:nx] = sys.gauge_direction()
    lam = deflated_max_eig(block, (z,))
    if lam > -block_margin:
        raise CertificateError(
            f"supplied P fails the decay block: max deflated eigenvalue "
            f"{lam:.3e} (need <= {-block_margin:.0e})")
    vmin, face = compute_vmin(P, net, eq, faces=faces)
    return Certificate(P=0.5 * (P + P.T), gain=g, vmin=vmin,
                       margins={"stability": -lam, "positive-definite": float(w[0])},
                       face_argmin=face, line_angles=eq.line_angles.copy(),
                       C=sys.C.copy(), gauge=sys.gauge_direction(),
                       kernel_leak=kernel_residual(block, z))


@dataclass
class RoaCheck:
    """Region-of-attraction membership report for one state."""

    inside: bool
    value: float
    below_level: bool
    in_polytope: bool
    worst_line_angle: float


def check_state_in_roa(cert: Certificate, x) -> RoaCheck:
    """Strict sub-level and polytope membership of a deviation state."""
    x = np.asarray(x, float)
    value = float(x @ cert.P @ x)
    angles = cert.line_angles + cert.C @ x
    worst = float(np.max(np.abs(angles)))
    below = value < cert.vmin
    in_poly = worst <= pi / 2
    return RoaCheck(inside=below and in_poly, value=value,
                    below_level=below, in_polytope=in_poly,
                    worst_line_angle=worst)


def certificate_to_json(cert: Certificate) -> dict:
    """Serializable view: order, row-major entries, gain, vmin, margins."""
    return {
        "order": cert.order,
        "entries": [float(v) for v in cert.P.reshape(-1)],
        "gain": cert.gain,
        "vmin": cert.vmin,
        "margins": {k: float(v) for k, v in cert.margins.items()},
        "face-argmin": {"line": list(cert.face_argmin.line),
                        "sign": cert.face_argmin.sign},
    }


def save_certificate(cert: Certificate, path):
    with open(path, "w") as fh:
        json.dump(certificate_to_json(cert), fh, indent=1)
        fh.write("\n")


def matrix_from_json(data: dict) -> np.ndarray:
    """Read a square matrix from {order, entries row-major} fields."""
    try:
        order = int(data["order"])
        entries = np.asarray(data["entries"], float)
    except (KeyError, TypeError, ValueError):
        raise CertificateError("matrix document needs 'order' and 'entries'")
    flat = entries.reshape(-1)
    if flat.size != order * order:
        raise CertificateError(
            f"expected {order * order} entries, got {flat.size}")
    return flat.reshape(order, order)


def load_p_matrix(path) -> np.ndarray:
    """Load a candidate P from a JSON document (order + row-major entries)."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as ex:
            raise CertificateError(f"cannot parse {path}: {ex}") from None
    return matrix_from_json(data)
