"""Certificate LMI assembly, level computation, and verification."""
import json

import numpy as np
import pytest

from gridcert import (CertificateError, assemble_matrices, build_network,
                      check_state_in_roa, compute_vmin, find_certificate,
                      load_p_matrix, save_certificate, solve_equilibrium,
                      verify_supplied_p)
from gridcert.certificate import (Certificate, Face, assemble_cert_lmi,
                                  matrix_from_json, shifted_coupling_block)
from gridcert.equilibrium import sector_gain
from gridcert.lmi import coeffs_from_sym, sym_variable_basis

from conftest import REFERENCE_P, THREE_MACHINE, two_bus_doc


def dense_block(sys, P, g):
    """The certificate block written out directly."""
    nx, ne = sys.B.shape
    Ab = shifted_coupling_block(sys, g)
    top = np.hstack([Ab.T @ P + P @ Ab + ((1 - g) ** 2 / 4) * sys.C.T @ sys.C,
                     P @ sys.B])
    bottom = np.hstack([sys.B.T @ P, -np.eye(ne)])
    return np.vstack([top, bottom])


def test_block_assembly_matches_dense_formula(net):
    sys = assemble_matrices(net)
    rng = np.random.default_rng(4)
    basis = sym_variable_basis(sys.state_dim)
    prob = assemble_cert_lmi(sys, 0.55)
    stability = prob.blocks[0]
    for _ in range(5):
        G = rng.normal(size=(sys.state_dim, sys.state_dim))
        P = G @ G.T
        got = stability.at(coeffs_from_sym(P, sys.state_dim))
        assert np.allclose(got, dense_block(sys, P, 0.55), atol=1e-12)


def test_gain_one_drops_output_penalty(net):
    sys = assemble_matrices(net)
    prob = assemble_cert_lmi(sys, 1.0)
    F0 = prob.blocks[0].F0
    nx = sys.state_dim
    assert np.allclose(F0[:nx, :nx], 0.0)
    assert np.allclose(F0[nx:, nx:], -np.eye(sys.B.shape[1]))


def test_zero_coupling_decouples_the_block(net):
    import dataclasses
    sys = assemble_matrices(net)
    sys0 = dataclasses.replace(sys, B=np.zeros_like(sys.B))
    prob = assemble_cert_lmi(sys0, 0.55)
    nx = sys.state_dim
    # with B = 0 the variable only enters through A'P + PA
    coeffs = prob.blocks[0].coeffs
    assert np.allclose(coeffs[:, :nx, nx:], 0.0)
    P = np.eye(nx)
    got = prob.blocks[0].at(coeffs_from_sym(P, nx))
    assert np.allclose(got[:nx, :nx],
                       sys.A.T + sys.A + ((1 - 0.55) ** 2 / 4) * sys.C.T @ sys.C)


def test_gauge_direction_forces_kernel_equality(net, eq_tenth, cert_uniform):
    """The uniform angle shift must lie in the block's kernel at any
    feasible P; the solver enforces this as an equality, so the solved P
    annihilates the direction while a generic P does not."""
    sys = assemble_matrices(net)
    g = sector_gain(eq_tenth, uniform=True)
    prob = assemble_cert_lmi(sys, g)
    z = prob.blocks[0].null_dirs[0]
    assert np.array_equal(z[:sys.state_dim], sys.gauge_direction())
    assert np.allclose(z[sys.state_dim:], 0.0)
    solved = prob.blocks[0].at(coeffs_from_sym(cert_uniform.P, sys.state_dim))
    assert np.max(np.abs(solved @ z)) < 1e-12
    generic = prob.blocks[0].at(coeffs_from_sym(np.eye(sys.state_dim),
                                                sys.state_dim))
    assert np.max(np.abs(generic @ z)) > 1e-3


def test_own_certificate_verifies(net, eq_tenth, cert_uniform):
    cert = cert_uniform
    assert cert.margins["stability"] >= 1e-6
    assert cert.margins["positive-definite"] >= 1e-6
    evals = np.linalg.eigvalsh(cert.P)
    assert evals[0] > 0
    assert cert.kernel_leak < 1e-12  # solved in the quotient, exact kernel
    assert 0.0 < cert.vmin
    assert abs(cert.gain - sector_gain(eq_tenth, uniform=True)) < 1e-15
    # the returned block margin is reproducible from the pieces
    got = -max(np.linalg.eigvalsh(
        dense_block(assemble_matrices(net), cert.P, cert.gain))[-1], 0)
    # full-space max eig sits at the gauge kernel, so it is ~0, not the
    # quotient margin; the quotient is what the certificate reports
    assert abs(got) < 1e-10


def test_certificate_determinism(net, eq_tenth, cert_uniform):
    again = find_certificate(net, eq_tenth, uniform_gain=True)
    assert np.array_equal(again.P, cert_uniform.P)
    assert again.vmin == cert_uniform.vmin


def test_reference_matrix_verifies(ref_cert):
    assert ref_cert.margins["stability"] >= 1e-3
    assert abs(ref_cert.margins["stability"] - 0.005860363237220636) < 1e-9
    assert abs(ref_cert.vmin - 0.8139483683024354) < 1e-9
    assert ref_cert.face_argmin.sign == 1
    assert ref_cert.face_argmin.line == (2, 3)
    # printed to 4 decimals, so the gauge kernel only holds approximately
    assert 0 < ref_cert.kernel_leak < 1e-3


def test_supplied_matrix_rejections(net, eq_tenth):
    with pytest.raises(CertificateError, match="definite"):
        verify_supplied_p(np.diag([1.0] * 5 + [-1.0]), net, eq_tenth)
    with pytest.raises(CertificateError):
        verify_supplied_p(100.0 * np.eye(6), net, eq_tenth,
                          uniform_gain=True)
    with pytest.raises(CertificateError):
        verify_supplied_p(np.eye(4), net, eq_tenth)


def test_vmin_identity_matrix_single_line():
    net = build_network(two_bus_doc(injection=0.0))
    eq = solve_equilibrium(net)
    vmin, face = compute_vmin(np.eye(4), net, eq)
    # c'c = 2 for the only line, so the face minimum is (pi/2)^2 / 2
    assert vmin == pytest.approx((np.pi / 2) ** 2 / 2)
    assert face.line == (1, 2)
    # at a flat equilibrium both signs tie; either is a valid argmin
    assert abs(
        min(vmin, compute_vmin(np.eye(4), net, eq, faces="all")[0]) - vmin) == 0


def test_vmin_brute_force_agreement(net, eq_tenth, cert_uniform):
    sys = assemble_matrices(net)
    for P in (REFERENCE_P, cert_uniform.P):
        vmin, face = compute_vmin(P, net, eq_tenth)
        Pinv = np.linalg.inv(P)
        best = np.inf
        for e in range(net.ne):
            c = sys.C[e]
            for sign in (1, -1):
                b = sign * np.pi / 2 - eq_tenth.line_angles[e]
                best = min(best, b * b / float(c @ Pinv @ c))
        assert abs(vmin - best) < 1e-12 * max(1.0, best)


def test_vmin_scaling_covariance(net, eq_tenth):
    v1, f1 = compute_vmin(REFERENCE_P, net, eq_tenth)
    v2, f2 = compute_vmin(3.0 * REFERENCE_P, net, eq_tenth)
    assert v2 == pytest.approx(3.0 * v1, rel=1e-14)
    assert (f1.line, f1.sign) == (f2.line, f2.sign)


def test_all_faces_never_increase_vmin():
    doc = two_bus_doc(injection=0.1, load=True)
    doc["buses"].append({"id": 3, "kind": "conventional-generator",
                         "voltage": 1.0, "injection": 0.0, "inertia": 1.0,
                         "damping": 1.0})
    doc["lines"].append({"from": 2, "to": 3, "susceptance": 1.0})
    net = build_network(doc)
    eq = solve_equilibrium(net)
    rng = np.random.default_rng(6)
    for _ in range(10):
        G = rng.normal(size=(net.n + net.m, net.n + net.m))
        P = G @ G.T + 0.1 * np.eye(net.n + net.m)
        v_gen, _ = compute_vmin(P, net, eq, faces="generator")
        v_all, _ = compute_vmin(P, net, eq, faces="all")
        assert v_all <= v_gen + 1e-12


def test_empty_generator_face_set_falls_back():
    # gen - load - gen chain: no generator-generator line exists
    doc = {
        "buses": [
            {"id": 1, "kind": "conventional-generator", "voltage": 1.0,
             "injection": 0.1, "inertia": 1.0, "damping": 1.0},
            {"id": 2, "kind": "load", "voltage": 1.0, "injection": -0.2,
             "damping": 1.0},
            {"id": 3, "kind": "conventional-generator", "voltage": 1.0,
             "injection": 0.1, "inertia": 1.0, "damping": 1.0},
        ],
        "lines": [{"from": 1, "to": 2, "susceptance": 1.0},
                  {"from": 2, "to": 3, "susceptance": 1.0}],
    }
    net = build_network(doc)
    eq = solve_equilibrium(net)
    P = np.eye(net.n + net.m) + 0.1
    v_gen, _ = compute_vmin(P, net, eq, faces="generator")
    v_all, _ = compute_vmin(P, net, eq, faces="all")
    assert v_gen == v_all
    with pytest.raises(CertificateError):
        compute_vmin(P, net, eq, faces="everything")


def test_roa_membership(ref_cert):
    origin = check_state_in_roa(ref_cert, np.zeros(6))
    assert origin.inside and origin.value == 0.0

    # the face minimizer sits exactly on the level set and the face
    P, face = ref_cert.P, ref_cert.face_argmin
    from gridcert.network import extraction_vector
    net = build_network(THREE_MACHINE)
    sys = assemble_matrices(net)
    e = net.line_index(face.line)
    c = sys.C[e]
    b = face.sign * np.pi / 2 - ref_cert.line_angles[e]
    xstar = np.linalg.solve(P, c) * (b / float(c @ np.linalg.solve(P, c)))
    on_face = check_state_in_roa(ref_cert, xstar)
    assert abs(on_face.value - ref_cert.vmin) < 1e-9
    assert abs(on_face.worst_line_angle - np.pi / 2) < 1e-12
    # nudging outward leaves the region through both tests
    out = check_state_in_roa(ref_cert, xstar * (1 + 1e-6))
    assert not out.inside and not out.below_level


def test_roa_polytope_test_is_not_subsumed_by_level():
    # small weight on the load angle: the level test alone would accept a
    # state that already left the polytope through the generator-load line
    doc = two_bus_doc(injection=0.1, load=True)
    doc["buses"].append({"id": 3, "kind": "conventional-generator",
                         "voltage": 1.0, "injection": 0.0, "inertia": 1.0,
                         "damping": 1.0})
    doc["lines"].append({"from": 1, "to": 3, "susceptance": 1.0})
    net = build_network(doc)
    eq = solve_equilibrium(net)
    sys = assemble_matrices(net)
    P = np.diag([1.0, 1.0, 1.0, 1.0, 0.01])
    vmin, face = compute_vmin(P, net, eq, faces="generator")
    cert = Certificate(P=P, gain=0.5, vmin=vmin, margins={"stability": 1.0},
                       face_argmin=face, line_angles=eq.line_angles,
                       C=sys.C, gauge=sys.gauge_direction(), kernel_leak=0.0)
    x = np.zeros(5)
    x[4] = -(np.pi / 2 + 0.1)  # load angle deviation on line (1, 2)
    report = check_state_in_roa(cert, x)
    assert report.below_level
    assert not report.in_polytope
    assert not report.inside


def test_certificate_round_trip(tmp_path, ref_cert):
    path = tmp_path / "cert.json"
    save_certificate(ref_cert, path)
    doc = json.loads(path.read_text())
    assert doc["order"] == 6
    assert doc["face-argmin"] == {"line": [2, 3], "sign": 1}
    P = load_p_matrix(path)
    assert np.allclose(P, ref_cert.P, atol=0, rtol=0)


def test_matrix_from_json_validation():
    with pytest.raises(CertificateError):
        matrix_from_json({"order": 2, "entries": [1.0, 2.0, 3.0]})
    with pytest.raises(CertificateError):
        matrix_from_json({"entries": [1.0]})
    ok = matrix_from_json({"order": 2, "entries": [2.0, 0.5, 0.5, 1.0]})
    assert np.array_equal(ok, [[2.0, 0.5], [0.5, 1.0]])
