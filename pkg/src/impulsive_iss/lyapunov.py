"""Candidate and time-varying Lyapunov objects, and trajectory-based checks.

The checks are numerical: every inequality is evaluated along simulated
trajectories on their dense sampling grid, never for all states.  The flow
decay condition uses a conservative forward-difference proxy for the Dini
derivative plus a slack proportional to the step, so a correct certificate
is not failed for discretization noise while genuinely wrong rates still
trip the margin (see the sabotage tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .comparison import ComparisonFunction
from .errors import SegmentBoundaryError
from .system import ImpulseSequence, ImpulsiveSystem, Trajectory, format_float

DEFAULT_C_SLACK = 10.0
# tolerance absorbing rounding in exact-equality checks (sandwich at segment
# boundaries, jump chains that hold with equality)
SANDWICH_RTOL = 1e-12
JUMP_RTOL = 1e-9
ISS_RTOL = 1e-9
# strictness margin for the below-gate branch of the jump condition
GATE_STRICT = 1e-12


@dataclass(frozen=True)
class CandidateLyapunov:
    """Time-invariant Lyapunov function with rates and gains.

    rho is a plain scalar callable: it may be negative-valued (unstable
    flows, where -rho is positive definite).
    """

    V: Callable[[np.ndarray], float]
    psi1: ComparisonFunction
    psi2: ComparisonFunction
    eta: ComparisonFunction
    rho: Callable[[float], float]
    alpha: ComparisonFunction
    psi3: ComparisonFunction


class TimeVaryingLyapunov:
    """Segment-wise V(t, x) on [t_i, t_{i+1}) with its certificates.

    segment_value(i, t_i, t_ip1, t, x) evaluates the formula of segment i at
    parameter t; value_at(..., side="left") resolves an impulse instant into
    the preceding segment, giving the left limit V(t_i^-, x).
    """

    def __init__(self, impulses: ImpulseSequence, segment_value: Callable,
                 alpha1: ComparisonFunction, alpha2: ComparisonFunction,
                 chi: ComparisonFunction, phi: ComparisonFunction,
                 alpha3: ComparisonFunction, name: str = "V"):
        self.impulses = impulses
        self._segment_value = segment_value
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.chi = chi
        self.phi = phi
        self.alpha3 = alpha3
        self.name = name

    def value_at(self, t: float, x, side: str = "right") -> float:
        i, lo, hi = self.impulses.segment_bounds(t, side=side)
        return float(self._segment_value(i, lo, hi, t, x))

    def value(self, t: float, x) -> float:
        return self.value_at(t, x, side="right")


@dataclass(frozen=True)
class CheckRecord:
    condition_id: str
    t: float
    margin: float
    passed: bool


@dataclass
class VerificationReport:
    """All checks of one verification run; verdict passes iff every check does."""

    label: str
    checks: list[CheckRecord] = field(default_factory=list)

    def add(self, condition_id: str, t: float, margin: float, passed: bool):
        self.checks.append(CheckRecord(condition_id, float(t), float(margin), bool(passed)))

    @property
    def worst_margin(self) -> float:
        return min((c.margin for c in self.checks), default=math.inf)

    @property
    def verdict(self) -> str:
        return "pass" if all(c.passed for c in self.checks) else "fail"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def failures(self) -> list[CheckRecord]:
        return [c for c in self.checks if not c.passed]

    def by_condition(self) -> dict[str, list[CheckRecord]]:
        out: dict[str, list[CheckRecord]] = {}
        for c in self.checks:
            out.setdefault(c.condition_id, []).append(c)
        return out

    def to_json_dict(self, max_entries: int = 20000) -> dict:
        summary = {}
        for cond, recs in self.by_condition().items():
            worst = min(recs, key=lambda c: c.margin)
            summary[cond] = {
                "checks": len(recs),
                "failures": sum(1 for c in recs if not c.passed),
                "worst_margin": worst.margin,
                "worst_t": worst.t,
            }
        entries: list[CheckRecord]
        if len(self.checks) <= max_entries:
            entries = self.checks
        else:
            entries = self.failures()[:max_entries]
        return {
            "label": self.label,
            "verdict": self.verdict,
            "worst_margin": self.worst_margin,
            "n_checks": len(self.checks),
            "summary": summary,
            "entries": [
                {"condition_id": c.condition_id, "t": c.t, "margin": c.margin, "pass": c.passed}
                for c in entries
            ],
        }


def dini_derivative(V, traj: Trajectory, t: float, h: float | None = None) -> float:
    """Conservative forward-difference proxy for the upper Dini derivative.

    Max over the shrinking steps {h, h/2, h/4}; off-sample states come from
    linear interpolation of the dense grid.  t and t+h must lie in one flow
    segment.
    """
    if h is None:
        h = traj.meta["step"]
    seg = traj._locate_segment(t, side="right")
    if t + h > seg.t_end + 1e-12:
        raise SegmentBoundaryError(
            f"stencil [{t}, {t + h}] crosses segment end {seg.t_end}")
    if t < seg.t_start - 1e-12:
        raise SegmentBoundaryError(f"t = {t} precedes segment start {seg.t_start}")
    v0 = _value_of(V, t, traj.state_at(t))
    best = -math.inf
    for hp in (h, 0.5 * h, 0.25 * h):
        # clamp to the segment end and evaluate as a left limit there, so a
        # stencil touching the impulse time reads the pre-jump flow value
        tf = min(t + hp, seg.t_end)
        v1 = _value_of(V, tf, traj.state_at(tf, side="left"), side="left")
        best = max(best, (v1 - v0) / (tf - t))
    return best


def _value_of(V, t: float, x, side: str = "right") -> float:
    if isinstance(V, TimeVaryingLyapunov):
        return V.value_at(t, x, side=side)
    if isinstance(V, CandidateLyapunov):
        return float(V.V(x))
    return float(V(t, x))


def _jump_points(traj: Trajectory):
    """(t_i, x_pre, x_post) for every impulse taken during the simulation."""
    for si, ti in enumerate(traj.impulse_times):
        yield ti, traj.left_limits[ti], traj.segments[si + 1].states[0]


def verify_definition3(V: TimeVaryingLyapunov, sys: ImpulsiveSystem,
                       trajectories: Sequence[Trajectory], h: float | None = None,
                       c_slack: float = DEFAULT_C_SLACK,
                       label: str = "definition3") -> VerificationReport:
    """Check the time-varying Lyapunov conditions along simulated trajectories.

    (i) sandwich at every dense sample (left limits evaluated as such);
    (ii) above the gate chi(||u||_inf): Dini <= -phi(V) + slack between
    impulses and jump non-increase at them; (iii) strictly below the gate:
    the jump bound alpha3(||u||_inf).
    """
    report = VerificationReport(label=label)
    for traj in trajectories:
        uinf = traj.meta["input"].sup_norm
        gate = V.chi.eval(uinf)
        a3 = V.alpha3.eval(uinf)
        h_eff = h if h is not None else traj.meta["step"]
        for seg, j, t, x in traj.sample_iter():
            pre = seg.ends_at_impulse and j == len(seg.times) - 1
            side = "left" if pre else "right"
            val = _value_of(V, t, x, side=side)
            nx = traj.norm_of(x)
            tol = SANDWICH_RTOL * (1.0 + abs(val))
            lo_m = val - V.alpha1.eval(nx)
            hi_m = V.alpha2.eval(nx) - val
            report.add("sandwich_lower", t, lo_m, lo_m >= -tol)
            report.add("sandwich_upper", t, hi_m, hi_m >= -tol)
            if not pre and val >= gate and t + h_eff <= seg.t_end + 1e-12:
                d = dini_derivative(V, traj, t, h_eff)
                slack = c_slack * h_eff * (1.0 + abs(val))
                margin = (-V.phi.eval(val) + slack) - d
                report.add("flow_decay", t, margin, margin >= 0.0)
        for ti, x_pre, x_post in _jump_points(traj):
            v_pre = _value_of(V, ti, x_pre, side="left")
            v_post = _value_of(V, ti, x_post, side="right")
            tol = JUMP_RTOL * (1.0 + abs(v_pre))
            if v_pre < gate - GATE_STRICT:
                margin = a3 - v_post
                report.add("jump_below_gate", ti, margin, margin >= -tol)
            else:
                margin = v_pre - v_post
                report.add("jump_noninc", ti, margin, margin >= -tol)
    return report


def verify_definition2(C: CandidateLyapunov, sys: ImpulsiveSystem,
                       trajectories: Sequence[Trajectory], h: float | None = None,
                       c_slack: float = DEFAULT_C_SLACK,
                       label: str = "definition2") -> VerificationReport:
    """Check the candidate Lyapunov conditions along simulated trajectories.

    The gate is eta(||u||_inf) on V_cand; the flow rate rho may be negative
    (then -rho bounds the growth).  The below-gate branch is evaluated at the
    left-limit state.
    """
    report = VerificationReport(label=label)
    for traj in trajectories:
        uinf = traj.meta["input"].sup_norm
        gate = C.eta.eval(uinf)
        p3 = C.psi3.eval(uinf)
        h_eff = h if h is not None else traj.meta["step"]
        for seg, j, t, x in traj.sample_iter():
            pre = seg.ends_at_impulse and j == len(seg.times) - 1
            val = float(C.V(x))
            nx = traj.norm_of(x)
            tol = SANDWICH_RTOL * (1.0 + abs(val))
            lo_m = val - C.psi1.eval(nx)
            hi_m = C.psi2.eval(nx) - val
            report.add("sandwich_lower", t, lo_m, lo_m >= -tol)
            report.add("sandwich_upper", t, hi_m, hi_m >= -tol)
            if not pre and val >= gate and t + h_eff <= seg.t_end + 1e-12:
                d = dini_derivative(C, traj, t, h_eff)
                slack = c_slack * h_eff * (1.0 + abs(val))
                margin = (-C.rho(val) + slack) - d
                report.add("flow_decay", t, margin, margin >= 0.0)
        for ti, x_pre, x_post in _jump_points(traj):
            v_pre = float(C.V(x_pre))
            v_post = float(C.V(x_post))
            tol = JUMP_RTOL * (1.0 + abs(v_pre))
            if v_pre < gate - GATE_STRICT:
                margin = p3 - v_post
                report.add("jump_below_gate", ti, margin, margin >= -tol)
            else:
                margin = C.alpha.eval(v_pre) - v_post
                report.add("jump_rate", ti, margin, margin >= -tol)
    return report


def check_iss_estimate(traj: Trajectory, gains, x0, u, label: str = "iss_estimate") -> VerificationReport:
    """Assert ||x(t)|| <= beta(||x0||, t - t0) + gamma(||u||_inf) at every sample."""
    report = VerificationReport(label=label)
    r0 = traj.norm_of(np.asarray(x0, dtype=float))
    gamma_u = gains.gamma.eval(u.sup_norm)
    t0 = traj.t0
    for seg, j, t, x in traj.sample_iter():
        bound = gains.beta.eval(r0, t - t0) + gamma_u
        margin = bound - traj.norm_of(x)
        report.add("iss_bound", t, margin, margin >= -ISS_RTOL * (1.0 + abs(bound)))
    return report


def lyapunov_csv_rows(V: TimeVaryingLyapunov, traj: Trajectory, chi_level: float):
    """Rows (t, V, chi_level, pre_jump) for the verification CSV."""
    rows = []
    for seg, j, t, x in traj.sample_iter():
        pre = seg.ends_at_impulse and j == len(seg.times) - 1
        v = V.value_at(t, x, side="left" if pre else "right")
        rows.append((t, v, chi_level, 1 if pre else 0))
    return rows


def write_lyapunov_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,V,chi_level,pre_jump\n")
        for t, v, chi, pre in rows:
            fh.write(f"{format_float(t)},{format_float(v)},{format_float(chi)},{pre}\n")
