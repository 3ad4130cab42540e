"""Acceptance gate: one test per release criterion, at the stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` for one PASS line per
criterion.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from impulsive_iss.comparison import linear
from impulsive_iss.construct import (
    DwellParams,
    check_dwell_sfuj,
    check_dwell_ufsj,
    construct_sfuj,
    construct_ufsj,
    dwell_region,
)
from impulsive_iss.lyapunov import (
    check_iss_estimate,
    dini_derivative,
    verify_definition3,
)
from impulsive_iss.scenarios import (
    scenario_heat,
    scenario_rotation2d,
    scenario_scalar_sfuj,
    scenario_scalar_ufsj,
)
from impulsive_iss.system import ImpulseSequence, ImpulsiveSystem, simulate
from impulsive_iss.transform import (
    build_beta_tilde,
    build_iss_gains,
    build_transform,
)

LN2 = math.log(2.0)


def gains_of(V):
    T = build_transform(V.phi)
    return build_iss_gains(V.alpha1, V.alpha2, V.alpha3, V.chi, build_beta_tilde(T))


def test_acceptance_heat_scenario():
    """Heat scenario at the reference constants: N=201, step=1e-3."""
    start = time.perf_counter()
    sc = scenario_heat(N=201, a=0.1, f_gain=2.0, u_level=0.1, c=0.5,
                       horizon=2.0, step=1e-3)
    traj = simulate(sc.system, sc.x0, sc.input, sc.horizon, sc.step)
    V = sc.lyapunov

    report = verify_definition3(V, sc.system, [traj])
    assert report.passed, report.failures()[:5]

    level = V.chi.eval(sc.input.sup_norm)
    assert abs(level - 5.9365) <= 1e-3

    v0 = V.value(0.0, sc.x0)
    target = math.e * 1024.0 / 315.0
    assert abs(v0 - target) <= 0.005 * target

    # V non-increasing across every jump taken above the radius, and bounded
    # by max(chi, alpha3) once it has crossed below
    a3 = V.alpha3.eval(sc.input.sup_norm)
    bound = max(level, a3)
    crossed = False
    above_jumps = 0
    for si, ti in enumerate(traj.impulse_times):
        v_pre = V.value_at(ti, traj.left_limits[ti], side="left")
        v_post = V.value_at(ti, traj.segments[si + 1].states[0])
        if v_pre >= level:
            above_jumps += 1
            assert v_post <= v_pre + 1e-9 * (1.0 + v_pre)
    for seg, j, t, x in traj.sample_iter():
        pre = seg.ends_at_impulse and j == len(seg.times) - 1
        v = V.value_at(t, x, side="left" if pre else "right")
        if crossed:
            assert v <= bound + 1e-9 * (1.0 + bound), f"escaped the radius at t={t}"
        elif v < level:
            crossed = True
    assert above_jumps >= 1 and crossed

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"heat acceptance took {elapsed:.1f}s"
    print(f"\nPASS: heat scenario (def3 pass, level {level:.4f}, "
          f"V(0)={v0:.4f}, {elapsed:.1f}s)")


def test_acceptance_rotation2d_scenario():
    """Planar rotation scenario: identities, verification, sabotage."""
    start = time.perf_counter()
    sc = scenario_rotation2d(step=1e-4)
    traj = simulate(sc.system, sc.x0, sc.input, sc.horizon, sc.step)
    V = sc.lyapunov

    # along-flow identity V(t_n + tau) = e^{-2 tau} V(t_n) within 1e-6
    for seg in traj.segments:
        v0 = V.value(float(seg.times[0]), seg.states[0])
        for j in range(0, len(seg.times), 997):
            t, x = float(seg.times[j]), seg.states[j]
            expect = math.exp(-2.0 * (t - seg.t_start)) * v0
            assert V.value(t, x) == pytest.approx(expect, rel=1e-6)

    # Dini derivative tracks -2V within 1e-3 relative
    for t in (0.3, 1.0, 2.0):
        d = dini_derivative(V, traj, t)
        val = V.value(t, traj.state_at(t))
        assert d == pytest.approx(-2.0 * val, rel=1e-3)

    chi_coeff = 8.0 * math.exp(6.0 * math.pi)
    assert V.chi.eval(1.0) == pytest.approx(chi_coeff, rel=1e-12)
    report = verify_definition3(V, sc.system, [traj])
    assert report.passed, report.failures()[:5]

    # sabotage: the discount removed must fail around every impulse
    sab = scenario_rotation2d(step=1e-3, drop_discount=True)
    straj = simulate(sab.system, sab.x0, sab.input, sab.horizon, sab.step)
    srep = verify_definition3(sab.lyapunov, sab.system, [straj])
    assert not srep.passed
    fails = srep.failures()
    for ti in straj.impulse_times:
        assert any(abs(c.t - ti) <= math.pi / 2.0 for c in fails), \
            f"sabotage not detected near impulse {ti}"

    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"rotation2d acceptance took {elapsed:.1f}s"
    print(f"\nPASS: rotation2d scenario (identity 1e-6, Dini 1e-3, def3 pass, "
          f"sabotage detected, {elapsed:.1f}s)")


def test_acceptance_transform_oracles():
    """Transform suite against closed-form antiderivatives."""
    cases = [
        (lambda s: s, lambda q: math.log(q)),
        (lambda s: 2.0 * s, lambda q: 0.5 * math.log(q)),
        (lambda s: s * s, lambda q: 1.0 - 1.0 / q),
        (lambda s: math.sqrt(s), lambda q: 2.0 * (math.sqrt(q) - 1.0)),
    ]
    for rate, exact in cases:
        T = build_transform(rate)
        for q in np.logspace(-6, 6, 100):
            v = T.value(float(q))
            assert abs(v - exact(q)) <= 1e-10 * max(1.0, abs(exact(q)))
        for q in np.logspace(-6, 6, 25):
            assert T.inverse(T.value(float(q))) == pytest.approx(q, rel=1e-8)

    Ts = build_transform(lambda s: math.sqrt(s))
    assert abs(Ts.m - (-2.0)) <= 1e-8
    bt = build_beta_tilde(Ts)
    for v0 in (0.2, 1.0, 9.0):
        assert bt.eval(v0, 0.0) == v0  # exact at zero elapsed time
    vals = [bt.eval(1.0, tau) for tau in np.linspace(0.0, 50.0, 101)]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-9
    print("\nPASS: transform oracle suite (closed forms 1e-10, round trip 1e-8, "
          "m=-2±1e-8, relaxed branch)")


def test_acceptance_dwell_closed_forms():
    """Dwell-time integrals and the sweep boundary at ln 2."""
    p = DwellParams(rho=lambda v: v, alpha=linear(2.0), theta=1.0, delta=0.3)
    rep = check_dwell_sfuj(p)
    for v in rep.values:
        assert abs(v - LN2) <= 1e-10

    q = DwellParams(rho=lambda v: -v, alpha=linear(0.5), theta=0.6, delta=0.1)
    repu = check_dwell_ufsj(q)
    for v in repu.values:
        assert abs(v - LN2) <= 1e-10

    thetas = np.linspace(0.8, 1.2, 81)
    cell = thetas[1] - thetas[0]
    rows = dwell_region("sfuj", lambda v: v, linear(2.0), thetas, [0.3])
    flips = [i for i in range(1, len(rows)) if rows[i][2] != rows[i - 1][2]]
    assert len(flips) == 1
    assert abs((rows[flips[0]][0] - 0.3) - LN2) <= cell + 1e-12
    rows_u = dwell_region("ufsj", lambda v: -v, linear(0.5), thetas, [0.3])
    flips_u = [i for i in range(1, len(rows_u)) if rows_u[i][2] != rows_u[i - 1][2]]
    assert len(flips_u) == 1
    assert abs((rows_u[flips_u[0]][0] - 0.3) - LN2) <= cell + 1e-12
    print("\nPASS: dwell closed forms (ln2 ± 1e-10 at every grid a, sweep "
          "boundary within one cell, reverse-regime mirror)")


def test_acceptance_construction_end_to_end():
    """Constructed functions verify and yield working ISS estimates."""
    sc = scenario_scalar_sfuj()
    res = construct_sfuj(sc.candidate, sc.dwell, sc.system.impulses)
    for xv in (0.5, 1.0, 2.0, 5.0):
        v = res.V.value(1.0, np.array([xv]))
        assert abs(v - xv * xv / 2.0) <= 1e-9

    traj = simulate(sc.system, sc.x0, sc.input, sc.horizon, sc.step)
    assert verify_definition3(res.V, sc.system, [traj]).passed
    gains = gains_of(res.V)
    rng = np.random.default_rng(20230817)
    for x0 in rng.uniform(-10.0, 10.0, 10):
        tr = simulate(sc.system, [float(x0)], sc.input, sc.horizon, sc.step)
        rep = check_iss_estimate(tr, gains, [float(x0)], sc.input)
        assert rep.passed, (x0, rep.failures()[:3])

    uf = scenario_scalar_ufsj()
    res_u = construct_ufsj(uf.candidate, uf.dwell, uf.system.impulses)
    traj_u = simulate(uf.system, uf.x0, uf.input, uf.horizon, uf.step)
    assert verify_definition3(res_u.V, uf.system, [traj_u]).passed
    gains_u = gains_of(res_u.V)
    assert check_iss_estimate(traj_u, gains_u, uf.x0, uf.input).passed
    print("\nPASS: construction end-to-end (v1 = x^2/2 ± 1e-9, def3 pass, "
          "ISS estimate on 10 random starts, reverse regime likewise)")


def test_acceptance_simulator_order_and_causality():
    """Fourth-order convergence and the restart (causality) property."""
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
    assert 8.0 <= ratio <= 32.0, f"halving ratio {ratio}"

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
            worst = max(worst, float(np.max(np.abs(x - traj.state_at(float(t), side=side)))))
    assert worst <= 1e-9, f"causality restart deviates by {worst}"
    print(f"\nPASS: simulator order check (ratio {ratio:.1f} in [8,32], "
          f"restart within {worst:.2e})")


def test_acceptance_primary_standalone():
    """The primary package runs with no plotting component present."""
    code = ("import sys\n"
            "import impulsive_iss\n"
            "import impulsive_iss.cli\n"
            "assert 'matplotlib' not in sys.modules\n"
            "assert not any(m.startswith('iss_figures') for m in sys.modules)\n"
            "print('standalone-ok')\n")
    proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "standalone-ok" in proc.stdout
    print("\nPASS: primary suite standalone (no plotting component imported)")
