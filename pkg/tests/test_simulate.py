"""Vector fields, the fixed-step integrator, and scenario runs."""
import numpy as np
import pytest

from gridcert import (SimulationError, assemble_matrices, build_network,
                      integrate, load_trajectory, procedure_b, rhs_fault_on,
                      rhs_full, save_trajectory, simulate_scenario,
                      solve_equilibrium)
from gridcert.simulate import Trajectory, make_rhs_fault, make_rhs_full

from conftest import two_bus_doc


def physical_rhs(net, eq, x, skip_line=None):
    """Bus-by-bus swing/load dynamics in deviation coordinates.

    Works on absolute angles delta = delta* + deviation and recomputes
    every flow from scratch, so it shares no code path with the model's
    matrix form.
    """
    m, n = net.m, net.n
    dev_ang = np.concatenate([x[:m], x[2 * m:]])
    omega = x[m:2 * m]
    theta = np.empty(n)
    for k in range(n):
        theta[k] = eq.angles[k] + dev_ang[k]
    flows = np.zeros(n)
    for e, ln in enumerate(net.lines):
        if skip_line is not None and e == skip_line:
            continue
        u, v = sorted(net.bus_index(b) for b in ln.endpoints)
        a = net.couplings()[e]
        flows[u] += a * np.sin(theta[u] - theta[v])
        flows[v] += a * np.sin(theta[v] - theta[u])
    out = np.empty_like(x)
    p = net.injections()
    for k in range(m):
        out[k] = omega[k]
        out[m + k] = (p[k] - net.buses[k].damping * omega[k]
                      - flows[k]) / net.buses[k].inertia
    for j, k in enumerate(range(m, n)):
        out[2 * m + j] = (p[k] - flows[k]) / net.buses[k].damping
    return out


def test_vector_field_matches_physical_model(net, eq_tenth):
    sys = assemble_matrices(net)
    rng = np.random.default_rng(20)
    for _ in range(1000):
        x = rng.uniform(-1.0, 1.0, size=sys.state_dim)
        got = rhs_full(sys, eq_tenth, x)
        want = physical_rhs(net, eq_tenth, x)
        assert np.max(np.abs(got - want)) < 1e-12


def test_fault_field_matches_tripped_network(net, eq_tenth):
    sys = assemble_matrices(net)
    rng = np.random.default_rng(21)
    for line in [(1, 2), (1, 3), (2, 3)]:
        e = net.line_index(line)
        for _ in range(350):
            x = rng.uniform(-1.0, 1.0, size=sys.state_dim)
            got = rhs_fault_on(sys, eq_tenth, e, x)
            want = physical_rhs(net, eq_tenth, x, skip_line=e)
            assert np.max(np.abs(got - want)) < 1e-12


def test_rest_states(net, eq_tenth):
    sys = assemble_matrices(net)
    zero = np.zeros(sys.state_dim)
    assert np.allclose(rhs_full(sys, eq_tenth, zero), 0.0, atol=1e-15)
    # the equilibrium is NOT a rest point of the faulted system: the
    # tripped line's flow appears as a constant forcing at x = 0
    e = net.line_index((1, 2))
    forcing = rhs_fault_on(sys, eq_tenth, e, zero)
    assert np.allclose(forcing, sys.B[:, e] * np.sin(eq_tenth.line_angles[e]))
    assert np.max(np.abs(forcing)) > 1e-3


def test_gauge_shift_leaves_field_unchanged(net, eq_tenth):
    sys = assemble_matrices(net)
    rng = np.random.default_rng(22)
    z = sys.gauge_direction()
    for _ in range(20):
        x = rng.uniform(-1.0, 1.0, size=sys.state_dim)
        shift = rng.normal()
        assert np.allclose(rhs_full(sys, eq_tenth, x),
                           rhs_full(sys, eq_tenth, x + shift * z), atol=1e-13)
        assert np.allclose(rhs_fault_on(sys, eq_tenth, 0, x),
                           rhs_fault_on(sys, eq_tenth, 0, x + shift * z),
                           atol=1e-13)


def test_buffered_closures_agree_with_plain_forms(net, eq_tenth):
    sys = assemble_matrices(net)
    rng = np.random.default_rng(23)
    f_full = make_rhs_full(sys, eq_tenth)
    f_fault = make_rhs_fault(sys, eq_tenth, 2)
    out = np.empty(sys.state_dim)
    for _ in range(50):
        x = rng.uniform(-2.0, 2.0, size=sys.state_dim)
        assert np.array_equal(f_full(x, out), rhs_full(sys, eq_tenth, x))
        assert np.array_equal(f_fault(x, out), rhs_fault_on(sys, eq_tenth, 2, x))


def test_integrator_exponential_decay():
    def rhs(x, out):
        np.multiply(x, -1.0, out=out)
        return out

    traj = integrate(rhs, np.array([1.0, 2.0]), horizon=1.0, step=1e-3)
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(1.0)
    assert abs(traj.states[-1, 0] - np.exp(-1.0)) < 1e-8
    assert abs(traj.states[-1, 1] - 2.0 * np.exp(-1.0)) < 1e-8
    assert not traj.diverged


def test_integrator_fourth_order_on_pendulum():
    """Richardson check: halving the step shrinks the endpoint error by
    about 2^4 for a smooth nonlinear field."""
    def rhs(x, out):
        out[0] = x[1]
        out[1] = -np.sin(x[0]) - 0.1 * x[1]
        return out

    x0 = np.array([2.5, 0.0])
    ref = integrate(rhs, x0, horizon=1.0, step=1.0 / 16384).states[-1]
    errs = []
    for step in (1.0 / 128, 1.0 / 256, 1.0 / 512):
        got = integrate(rhs, x0, horizon=1.0, step=step).states[-1]
        errs.append(np.max(np.abs(got - ref)))
    for coarse, fine in zip(errs, errs[1:]):
        assert 12.0 < coarse / fine < 20.0


def test_integrator_exact_endpoint_with_partial_step():
    def rhs(x, out):
        out[:] = 1.0
        return out

    traj = integrate(rhs, np.zeros(1), horizon=0.2005, step=1e-3)
    assert traj.times[-1] == pytest.approx(0.2005, abs=1e-15)
    assert traj.states[-1, 0] == pytest.approx(0.2005, abs=1e-12)
    gaps = np.diff(traj.times[:-1])
    assert np.allclose(gaps, 1e-3, atol=1e-15)


def test_integrator_flags_divergence():
    def rhs(x, out):
        np.multiply(x, x, out=out)
        out *= x  # cubic growth, finite-time blowup
        return out

    with np.errstate(over="ignore", invalid="ignore"):
        traj = integrate(rhs, np.array([5.0]), horizon=10.0, step=0.1)
    assert traj.diverged
    assert len(traj.times) < 101  # truncated at the first bad sample
    assert np.all(np.isfinite(traj.states))
    assert not traj.converged()


def test_integrator_input_validation():
    def rhs(x, out):
        out[:] = 0.0
        return out

    with pytest.raises(SimulationError):
        integrate(rhs, np.zeros(2), horizon=-1.0, step=1e-3)
    with pytest.raises(SimulationError):
        integrate(rhs, np.zeros(2), horizon=1.0, step=0.0)
    # a non-finite start is divergence, not a usage error
    traj = integrate(rhs, np.array([np.inf, 0.0]), horizon=1.0, step=1e-3)
    assert traj.diverged and len(traj.times) == 1


def test_scenario_run_reaches_equilibrium(net, eq_tenth, cert_uniform,
                                          scenario_plan):
    traj = simulate_scenario(net, eq_tenth, cert_uniform, scenario_plan)
    marks = traj.phase_marks
    assert marks["fault-start"] == 0
    assert traj.times[marks["clearing"]] == pytest.approx(0.2, abs=1e-12)
    assert marks["end"] == len(traj.times) - 1
    assert traj.times[-1] == pytest.approx(20.2, abs=1e-9)
    assert traj.polytope_exit is None
    assert not traj.diverged
    assert traj.final_infnorm < 1e-4
    # Lyapunov trace: zero at fault start, below the level at clearing
    assert traj.lyapunov[0] == 0.0
    v_clear = traj.lyapunov[marks["clearing"]]
    assert 0.0 < v_clear < scenario_plan.vmin
    # angle differences relax back to the equilibrium values (each line
    # angle subtracts two coordinates, hence twice the state bound)
    sys = assemble_matrices(net)
    final_lines = eq_tenth.line_angles + sys.C @ traj.states[-1]
    assert np.max(np.abs(final_lines - eq_tenth.line_angles)) < 2e-4


def test_scenario_conserves_weighted_momentum(net, eq_tenth, cert_uniform,
                                              scenario_plan):
    """The damping-weighted angle plus inertia-weighted velocity sum is a
    first integral of both phases (lossless coupling cancels in the sum),
    up to the clearing-time parameter swap."""
    traj = simulate_scenario(net, eq_tenth, cert_uniform, scenario_plan)
    m = net.m
    clearing = traj.phase_marks["clearing"]
    for phase, (mv, dv) in (
            (slice(0, clearing + 1),
             (scenario_plan.tuned_inertia, scenario_plan.tuned_damping)),
            (slice(clearing + 1, len(traj.times)),
             (net.nominal_inertia(), net.nominal_damping()))):
        states = traj.states[phase]
        if len(states) < 2:
            continue
        conserved = (states[:, m:2 * m] @ mv
                     + states[:, :m] @ dv[:m]
                     + states[:, 2 * m:] @ dv[m:])
        drift = np.max(np.abs(conserved - conserved[0]))
        assert drift < 1e-10


def test_fault_phase_level_growth_is_budgeted(net, eq_tenth, cert_uniform,
                                              scenario_plan):
    """V(x(tau)) <= tau / mu: the fault-on certificate bounds the level
    reached at clearing by the budgeted share of vmin."""
    traj = simulate_scenario(net, eq_tenth, cert_uniform, scenario_plan)
    clearing = traj.phase_marks["clearing"]
    v_clear = traj.lyapunov[clearing]
    assert v_clear <= scenario_plan.tau_clearing / scenario_plan.mu + 1e-9
    # sampled growth rate during the fault stays below the certified 1/mu
    rate = np.diff(traj.lyapunov[:clearing + 1]) / np.diff(
        traj.times[:clearing + 1])
    assert np.max(rate) <= 1.0 / scenario_plan.mu + 1e-4
    # post-fault the level decays monotonically apart from float noise
    post = traj.lyapunov[clearing:]
    increases = np.diff(post)
    assert np.max(increases, initial=0.0) < 1e-12


def test_scenario_records_polytope_exit(eq_deficient_pair):
    """Tripping the only line of a two-bus grid leaves the load adrift,
    so the trajectory must leave the certified angle polytope and the
    exit gets recorded without aborting the run."""
    net, eq, cert, plan = eq_deficient_pair
    traj = simulate_scenario(net, eq, cert, plan, post_horizon=1.0)
    assert traj.polytope_exit is not None
    exit_angles = eq.line_angles + traj.states[traj.polytope_exit] @ cert.C.T
    assert np.max(np.abs(exit_angles)) > np.pi / 2
    assert not traj.diverged


def test_step_halving_agreement(net, eq_tenth, cert_uniform, scenario_plan):
    coarse = simulate_scenario(net, eq_tenth, cert_uniform, scenario_plan,
                               post_horizon=0.5, step=1e-3)
    fine = simulate_scenario(net, eq_tenth, cert_uniform, scenario_plan,
                             post_horizon=0.5, step=5e-4)
    assert np.max(np.abs(coarse.states[-1] - fine.states[-1])) < 1e-7


def test_trajectory_csv_round_trip(net, eq_tenth, cert_uniform,
                                   scenario_plan, tmp_path):
    traj = simulate_scenario(net, eq_tenth, cert_uniform, scenario_plan,
                             post_horizon=0.3)
    path = tmp_path / "trajectory.csv"
    save_trajectory(traj, net, path)
    header = path.read_text().splitlines()[0]
    assert header == "t,delta_1,delta_2,delta_3,omega_1,omega_2,omega_3,V"
    data = load_trajectory(path)
    assert np.max(np.abs(data["t"] - traj.times)) < 1e-10
    m = net.m
    deltas = np.hstack([traj.states[:, :m], traj.states[:, 2 * m:]])
    assert np.max(np.abs(data["delta"] - deltas)) < 1e-10
    assert np.max(np.abs(data["omega"] - traj.states[:, m:2 * m])) < 1e-10
    assert np.max(np.abs(data["V"] - traj.lyapunov)) < 1e-10


def test_save_trajectory_requires_lyapunov(net, tmp_path):
    traj = Trajectory(times=np.array([0.0]), states=np.zeros((1, 6)))
    with pytest.raises(SimulationError):
        save_trajectory(traj, net, tmp_path / "x.csv")


def test_load_trajectory_rejects_foreign_tables(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(SimulationError):
        load_trajectory(path)


@pytest.fixture(scope="module")
def scenario_plan(net, eq_tenth, cert_uniform):
    return procedure_b(net, eq_tenth, (1, 2), 0.2, uniform_gain=True,
                       cert=cert_uniform)


@pytest.fixture(scope="module")
def eq_deficient_pair():
    from gridcert import find_certificate
    from gridcert.emergency import EmergencyPlan
    net = build_network(two_bus_doc(injection=0.5, susceptance=1.0))
    eq = solve_equilibrium(net)
    cert = find_certificate(net, eq)
    plan = EmergencyPlan(tripped_line=(1, 2), tau_clearing=3.0,
                         mu=3.0 / cert.vmin,
                         tuned_inertia=net.nominal_inertia(),
                         tuned_damping=net.nominal_damping(),
                         method="common-P", design_P=cert.P)
    return net, eq, cert, plan
