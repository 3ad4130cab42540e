import math

import numpy as np
import pytest

from impulsive_iss.errors import ArgumentError, BlowUpError, GridError, RangeError
from impulsive_iss.scenarios import scenario_heat, scenario_rotation2d
from impulsive_iss.system import (
    ImpulseSequence,
    ImpulsiveSystem,
    InputSignal,
    export_trajectory_csv,
    grad_l2_norm,
    l2_norm,
    left_limit,
    semidiscretize_heat,
    simulate,
)


def halving_system():
    return ImpulsiveSystem(
        dim=1,
        flow=lambda t, x, u: np.zeros_like(x),
        jump=lambda i, x, u: 0.5 * x,
        impulses=ImpulseSequence.periodic(1.0),
        label="halving")


def test_two_halvings():
    traj = simulate(halving_system(), [8.0], InputSignal.zero(), 2.5, 0.1)
    assert traj.state_at(2.5)[0] == pytest.approx(2.0, abs=1e-12)


def test_left_limit_at_impulse_and_between():
    traj = simulate(halving_system(), [8.0], InputSignal.zero(), 2.5, 0.1)
    assert left_limit(traj, 1.0)[0] == pytest.approx(8.0, abs=1e-12)
    assert left_limit(traj, 0.5)[0] == pytest.approx(8.0, abs=1e-12)
    assert traj.state_at(1.0)[0] == pytest.approx(4.0, abs=1e-12)  # right-continuous
    with pytest.raises(RangeError):
        left_limit(traj, 3.0)


def test_right_continuity_invariant():
    traj = simulate(halving_system(), [8.0], InputSignal.zero(), 3.5, 0.05)
    for si, ti in enumerate(traj.impulse_times):
        post = traj.segments[si + 1].states[0]
        assert np.array_equal(post, 0.5 * traj.left_limits[ti])


def test_rotation_norm_growth_identity():
    sc = scenario_rotation2d(x0=(1.0, 0.0), horizon=1.5, step=1e-3)
    traj = simulate(sc.system, sc.x0, sc.input, sc.horizon, sc.step)
    seg = traj.segments[0]
    n0 = np.linalg.norm(seg.states[0])
    for j in range(0, len(seg.times), 100):
        tau = seg.times[j] - seg.t_start
        expect = math.exp(tau) * n0
        assert np.linalg.norm(seg.states[j]) == pytest.approx(expect, rel=1e-6)


def test_rk4_order_by_step_halving():
    # exact oracle: x(t_n + tau) = e^tau R(tau) x_n, jumps applied exactly
    def oracle(times_by_seg, x0, u):
        out, x = [], np.asarray(x0, float)
        for times in times_by_seg:
            t0 = times[0]
            rows = []
            for t in times:
                tau = t - t0
                c, s = math.cos(tau), math.sin(tau)
                rows.append(math.exp(tau) * np.array([c * x[0] + s * x[1],
                                                      -s * x[0] + c * x[1]]))
            out.append(np.array(rows))
            xe = rows[-1]
            x = np.array([2.0 * xe[0], u * math.tanh(xe[1])])
        return out

    sc = scenario_rotation2d(x0=(1.0, 0.7), horizon=3.0)
    errs = []
    for step in (0.02, 0.01):
        traj = simulate(sc.system, sc.x0, sc.input, sc.horizon, step)
        exact = oracle([seg.times for seg in traj.segments], sc.x0, 0.1)
        errs.append(max(np.max(np.abs(seg.states - ex))
                        for seg, ex in zip(traj.segments, exact)))
    ratio = errs[0] / errs[1]
    assert 8.0 <= ratio <= 32.0


def test_causality_restart_reproduces_tail():
    sc = scenario_rotation2d()
    traj = simulate(sc.system, sc.x0, sc.input, sc.horizon, 1e-3)
    seg = traj.segments[1]
    j = len(seg.times) // 2
    tstar, xstar = float(seg.times[j]), seg.states[j].copy()
    remaining = [t for t in traj.impulse_times if t > tstar]
    restart = ImpulsiveSystem(sc.system.dim, sc.system.flow, sc.system.jump,
                              ImpulseSequence.explicit(remaining, t0=tstar))
    tail = simulate(restart, xstar, sc.input, sc.horizon, 1e-3)
    worst = 0.0
    for seg2 in tail.segments:
        for t, x in zip(seg2.times, seg2.states):
            side = "left" if (seg2.ends_at_impulse and t == seg2.t_end) else "right"
            xo = traj.state_at(float(t), side=side)
            worst = max(worst, float(np.max(np.abs(x - xo))))
    assert worst <= 1e-9


def test_heat_center_derivative_n3():
    sys = semidiscretize_heat(a=1.0, N=3, f_gain=0.0)
    d = sys.flow(0.0, np.array([0.0, 1.0, 0.0]), 0.0)
    assert d[1] == pytest.approx(-8.0, rel=1e-12)
    assert np.all(sys.flow(0.0, np.zeros(3), 0.0) == 0.0)


def test_heat_grid_requires_odd_n():
    with pytest.raises(GridError):
        semidiscretize_heat(a=0.1, N=4)
    # y = 0 must be a node
    sys = semidiscretize_heat(a=0.1, N=201)
    assert 0.0 in sys.grid_meta.nodes


def test_l2_norm_values():
    sys = semidiscretize_heat(a=0.1, N=201)
    grid = sys.grid_meta
    ones = np.ones(201)
    # trapezoid with forced boundary zeros: h * N = 2 - h
    assert l2_norm(ones, grid) == pytest.approx(math.sqrt(2.0 - grid.spacing), rel=1e-12)
    assert l2_norm(np.zeros(201), grid) == 0.0
    x0 = 2.0 * (grid.nodes**2 - 1.0) ** 2
    assert l2_norm(x0, grid) ** 2 == pytest.approx(1024.0 / 315.0, abs=1e-3)
    with pytest.raises(ArgumentError):
        l2_norm(ones, None)


def test_heat_jump_contracts_above_radius():
    sc = scenario_heat(N=101)
    traj = simulate(sc.system, sc.x0, sc.input, sc.horizon, sc.step)
    pre = traj.left_limit(0.5)
    post = traj.segments[1].states[0]
    assert traj.norm_of(pre) > traj.norm_of(post)


def test_heat_profile_shape_and_decay_after_jumps():
    sc = scenario_heat(N=101)
    grid = sc.system.grid_meta
    center = np.argmin(np.abs(grid.nodes))
    assert sc.x0[center] == pytest.approx(2.0)
    assert np.argmax(sc.x0) == center
    traj = simulate(sc.system, sc.x0, sc.input, sc.horizon, sc.step)
    assert all(np.all(np.isfinite(seg.states)) for seg in traj.segments)
    for si, ti in enumerate(traj.impulse_times):
        pre_max = np.max(np.abs(traj.left_limits[ti]))
        post_max = np.max(np.abs(traj.segments[si + 1].states[0]))
        assert post_max < pre_max


def test_discrete_friedrichs_on_simulated_states():
    sc = scenario_heat(N=101)
    traj = simulate(sc.system, sc.x0, sc.input, sc.horizon, sc.step)
    grid = sc.system.grid_meta
    for _, _, _, x in traj.sample_iter():
        assert l2_norm(x, grid) <= 2.0 * grad_l2_norm(x, grid) + 1e-12


def test_uniform_jump_respects_envelope():
    sys = semidiscretize_heat(a=0.1, N=51)
    x = np.sin(np.pi * (sys.grid_meta.nodes + 1.0))
    g = sys.jump(1, x, 0.1)
    env = math.sqrt(0.1 * l2_norm(x, sys.grid_meta))
    assert np.max(np.abs(g)) <= env + 1e-12
    sys2 = semidiscretize_heat(a=0.1, N=51, jump_spec="scaled-cap")
    g2 = sys2.jump(1, x, 0.1)
    assert np.max(np.abs(g2)) <= env + 1e-12
    assert np.all(np.sign(g2[np.abs(x) > 1e-9]) == np.sign(x[np.abs(x) > 1e-9]))


def test_blow_up_reports_last_finite_time():
    sys = ImpulsiveSystem(
        dim=1, flow=lambda t, x, u: x * x,
        jump=lambda i, x, u: x,
        impulses=ImpulseSequence.periodic(100.0), label="riccati")
    with pytest.raises(BlowUpError) as exc:
        simulate(sys, [5.0], InputSignal.zero(), 1.0, 0.01)
    assert 0.0 < exc.value.last_finite_time < 1.0


def test_simulate_argument_validation():
    sys = halving_system()
    with pytest.raises(ArgumentError):
        simulate(sys, [1.0], InputSignal.zero(), 2.0, 1.5)  # step >= min gap
    with pytest.raises(ArgumentError):
        simulate(sys, [1.0], InputSignal.zero(), -1.0, 0.1)
    with pytest.raises(ArgumentError):
        simulate(sys, [1.0, 2.0], InputSignal.zero(), 2.0, 0.1)  # wrong dim


def test_input_sup_norm_invariant():
    lying = InputSignal(lambda t: 2.0, sup_norm=0.5)
    with pytest.raises(ArgumentError):
        simulate(halving_system(), [1.0], lying, 2.0, 0.1)


def test_impulse_sequence_segment_bounds():
    seq = ImpulseSequence.periodic(0.5)
    i, lo, hi = seq.segment_bounds(0.75)
    assert (i, lo, hi) == (1, 0.5, 1.0)
    i, lo, hi = seq.segment_bounds(0.5, side="right")
    assert (i, lo) == (1, 0.5)
    i, lo, hi = seq.segment_bounds(0.5, side="left")
    assert (i, lo, hi) == (0, 0.0, 0.5)
    exp = ImpulseSequence.explicit([1.0, 2.5], t0=0.0)
    assert exp.segment_bounds(2.0) == (1, 1.0, 2.5)
    assert exp.min_gap() == 1.0 and exp.sup_gap() == 1.5


def test_horizon_on_impulse_takes_no_jump():
    sc = scenario_heat(N=51)
    traj = simulate(sc.system, sc.x0, sc.input, 2.0, 1e-3)
    assert traj.impulse_times == [0.5, 1.0, 1.5]
    assert traj.segments[-1].t_end == 2.0
    assert not traj.segments[-1].ends_at_impulse


def test_trajectory_csv_round_trip(tmp_path):
    sc = scenario_heat(N=51)
    traj = simulate(sc.system, sc.x0, sc.input, sc.horizon, sc.step)
    path = tmp_path / "trajectory.csv"
    export_trajectory_csv(traj, path, lyapunov=sc.lyapunov, per_node=True)
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["t", "norm", "V", "pre_jump"]
    assert header[4].startswith("x@")
    rows = [ln.split(",") for ln in lines[1:]]
    pre_rows = [r for r in rows if r[3] == "1"]
    assert [float(r[0]) for r in pre_rows] == [0.5, 1.0, 1.5]
    # duplicated impulse instants: pre row then post row
    for ti in (0.5, 1.0, 1.5):
        dupes = [r for r in rows if float(r[0]) == ti]
        assert len(dupes) == 2 and dupes[0][3] == "1" and dupes[1][3] == "0"
    # 17 significant digits round-trip
    v = float(rows[1][1])
    assert rows[1][1] == f"{v:.17g}"
