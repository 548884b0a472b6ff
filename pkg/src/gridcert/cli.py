"""Command-line front end: gridcert <subcommand>.

Subcommands: equilibrium, certify, design, scan, simulate, lookup.
Exit codes: 0 success, 2 parse/model error, 3 no equilibrium, 4 no
certificate, 5 design not found, 6 simulation divergence. Output is
deterministic for a fixed seed: no timestamps or wall-clock times.
"""

import argparse
import sys
from math import pi, sin

import numpy as np

from . import __version__
from .certificate import (Certificate, find_certificate, load_p_matrix,
                          save_certificate, verify_supplied_p)
from .emergency import (contingency_scan, load_contingency, load_plan,
                        procedure_b, procedure_d, save_plan)
from .equilibrium import (DEFAULT_GAMMA, check_sync_condition, sector_gain,
                          solve_equilibrium)
from .exceptions import (CertificateError, DesignError, EquilibriumError,
                         GridModelError, SimulationError)
from .network import load_grid_file
from .simulate import save_trajectory, simulate_scenario


def _parse_line(text: str) -> tuple[int, int]:
    try:
        u, v = (int(part) for part in text.split(","))
    except ValueError:
        raise GridModelError(
            f"expected a line as 'u,v' with integer bus ids, got {text!r}")
    return u, v


def _prepare(args):
    """Load the grid and solve the equilibrium under the region bound."""
    net = load_grid_file(args.grid)
    gamma = args.gamma if args.gamma is not None else DEFAULT_GAMMA
    eq = solve_equilibrium(net, gamma=gamma)
    uniform = args.gamma is not None
    return net, eq, uniform


def cmd_equilibrium(args) -> int:
    net, eq, uniform = _prepare(args)
    print("bus order:", " ".join(str(b) for b in net.order))
    for e, ln in enumerate(net.lines):
        u, v = ln.endpoints
        print(f"line ({u},{v}): delta* = {eq.line_angles[e]:+.6f}")
    print(f"region bound gamma: {eq.gamma:.6f}")
    print(f"max |delta*|: {eq.max_line_angle:.6f}")
    g = sector_gain(eq, uniform=uniform)
    mode = "uniform" if uniform else "per-line"
    print(f"sector gain ({mode}): {g:.6f}")
    holds, value = check_sync_condition(net, eq.gamma)
    verdict = "holds" if holds else "not satisfied (sufficient test only)"
    print(f"sync condition: {value:.6f} vs sin(gamma) = {sin(eq.gamma):.6f}"
          f" -> {verdict}")
    return 0


def cmd_certify(args) -> int:
    net, eq, uniform = _prepare(args)
    if args.use_p:
        P = load_p_matrix(args.use_p)
        cert = verify_supplied_p(P, net, eq, uniform_gain=uniform)
        print("supplied P verified")
    else:
        cert = find_certificate(net, eq, uniform_gain=uniform, seed=args.seed)
    print(f"gain: {cert.gain:.6f}")
    print(f"vmin: {cert.vmin:.6f}")
    u, v = cert.face_argmin.line
    print(f"argmin face: line ({u},{v}) at {cert.face_argmin.sign:+d}*pi/2")
    for name in sorted(cert.margins):
        print(f"margin[{name}]: {cert.margins[name]:.3e}")
    print(f"gauge kernel leak: {cert.kernel_leak:.3e}")
    save_certificate(cert, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_design(args) -> int:
    net, eq, uniform = _prepare(args)
    line = _parse_line(args.line)
    if args.method == "procedure-b":
        plan = procedure_b(net, eq, line, args.tau, uniform_gain=uniform)
    else:
        plan = procedure_d(net, eq, line, args.tau, uniform_gain=uniform)
    print(f"method: {plan.method}")
    print(f"mu: {plan.mu:.6f}")
    print(f"vmin: {plan.vmin:.6f}")
    print("tuned inertia: "
          + " ".join(f"{v:.6g}" for v in plan.tuned_inertia))
    print("tuned damping: "
          + " ".join(f"{v:.6g}" for v in plan.tuned_damping))
    for name in sorted(plan.verified_margins):
        print(f"margin[{name}]: {plan.verified_margins[name]:.3e}")
    save_plan(plan, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_scan(args) -> int:
    net, eq, uniform = _prepare(args)
    results = contingency_scan(net, eq, None, args.tau, method=args.method,
                               store_dir=args.out, vmin_bound=args.vmin_bound,
                               uniform_gain=uniform)
    for item in results:
        u, v = item.line
        print(f"line ({u},{v}): {item.classification}")
    print(f"wrote plan store to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    net, eq, uniform = _prepare(args)
    plan = load_plan(args.plan)
    if plan.tuned_inertia.shape != (net.m,) or plan.tuned_damping.shape != (net.n,):
        raise DesignError("plan parameter vectors do not match the grid")
    cert = None
    if args.use_p:
        P = load_p_matrix(args.use_p)
        cert = verify_supplied_p(P, net, eq, uniform_gain=uniform)
    traj = simulate_scenario(net, eq, cert, plan,
                             post_horizon=args.horizon, step=args.step)
    clear = traj.phase_marks["clearing"]
    vmin = cert.vmin if cert is not None else plan.vmin
    v_at_clear = traj.lyapunov[clear]
    print(f"V at clearing: {v_at_clear:.6f} (vmin {vmin:.6f},"
          f" {'inside' if v_at_clear < vmin else 'outside'})")
    if traj.polytope_exit is None:
        print("polytope exits: none")
    else:
        print(f"polytope exits: first at t = {traj.times[traj.polytope_exit]:.4f}")
    print(f"final |x|_inf: {traj.final_infnorm:.3e}")
    print(f"converged: {'yes' if traj.converged() else 'no'}")
    save_trajectory(traj, net, args.out)
    print(f"wrote {args.out}")
    if traj.diverged:
        print("error: trajectory diverged", file=sys.stderr)
        return 6
    return 0


def cmd_lookup(args) -> int:
    line = _parse_line(args.line)
    klass, plan = load_contingency(args.store, line)
    u, v = sorted(line)
    print(f"line ({u},{v}): {klass}")
    if plan is not None:
        print(f"method: {plan.method}")
        print(f"mu: {plan.mu:.6f}")
        print("tuned inertia: "
              + " ".join(f"{v:.6g}" for v in plan.tuned_inertia))
        print("tuned damping: "
              + " ".join(f"{v:.6g}" for v in plan.tuned_damping))
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="gridcert",
        description="Transient stability certificates and synchronverter "
                    "emergency retuning for lossless structure-preserving "
                    "grid models.")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("grid", help="grid description file (YAML)")
        p.add_argument("--gamma", type=float, default=None,
                       help="angle region bound; also switches the sector "
                            "gain to its uniform worst-case value at gamma")

    p = sub.add_parser("equilibrium", help="solve and report the operating "
                       "point")
    add_common(p)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("certify", help="find or verify a stability certificate")
    add_common(p)
    p.add_argument("--use-p", metavar="FILE",
                   help="verify this matrix (JSON: order + row-major entries) "
                        "instead of solving")
    p.add_argument("--seed", type=int, default=0,
                   help="solver start perturbation seed (default 0)")
    p.add_argument("--out", default="certificate.json",
                   help="certificate output file")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("design", help="design emergency retuning for one trip")
    add_common(p)
    p.add_argument("--line", required=True, metavar="U,V",
                   help="tripped line endpoints")
    p.add_argument("--tau", type=float, required=True,
                   help="fault clearing time in seconds")
    p.add_argument("--method", choices=("procedure-b", "procedure-d"),
                   default="procedure-b")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="plan.json", help="plan output file")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("scan", help="classify every line contingency")
    add_common(p)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--method", choices=("procedure-b", "procedure-d"),
                   default="procedure-b")
    p.add_argument("--vmin-bound", type=float, default=None,
                   help="lower bound used in place of vmin for robustness")
    p.add_argument("--out", default="plans", help="plan store directory")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("simulate", help="run the fault scenario of a plan")
    add_common(p)
    p.add_argument("plan", help="plan file from design or scan")
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=20.0,
                   help="post-fault horizon in seconds")
    p.add_argument("--use-p", metavar="FILE",
                   help="Lyapunov trace under this verified matrix")
    p.add_argument("--out", default="trajectory.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lookup", help="read one stored scan verdict")
    p.add_argument("store", help="plan store directory")
    p.add_argument("--line", required=True, metavar="U,V")
    p.set_defaults(func=cmd_lookup)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GridModelError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2
    except OSError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2
    except EquilibriumError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 3
    except CertificateError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 4
    except DesignError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 5
    except SimulationError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 6


if __name__ == "__main__":
    sys.exit(main())
