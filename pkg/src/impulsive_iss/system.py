"""Impulsive systems: flow between prescribed impulse times, jumps at them.

Trajectories are right-continuous with stored left limits.  Integration is
classical fixed-step RK4 with the final substep of each segment shortened to
land exactly on the impulse time.  Systems obtained by semidiscretizing a
diffusion advertise a maximum stable substep; simulate() then divides each
output step evenly so the recorded sampling grid is unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import (
    ArgumentError,
    BlowUpError,
    GridError,
    RangeError,
)

BLOWUP_THRESHOLD = 1e12
# left limits of inputs at jumps: u^-(t) evaluated at t - LEFT_EPS
LEFT_EPS = 1e-12


class ImpulseSequence:
    """Strictly increasing impulse instants after t0.

    Either periodic (t_i = t0 + c*i, never exhausting) or an explicit finite
    list.  Segment i is [t_i, t_{i+1}) with t_0 = t0.
    """

    def __init__(self, t0: float = 0.0, period: float | None = None,
                 times: Iterable[float] | None = None):
        self.t0 = float(t0)
        if (period is None) == (times is None):
            raise ArgumentError("specify exactly one of period or times")
        if period is not None:
            if period <= 0:
                raise ArgumentError(f"period must be positive, got {period}")
            self.period = float(period)
            self.times = None
        else:
            ts = [float(t) for t in times]
            if not ts:
                raise ArgumentError("explicit impulse list must be non-empty")
            if ts[0] <= self.t0 or any(b <= a for a, b in zip(ts, ts[1:])):
                raise ArgumentError("impulse times must be strictly increasing and exceed t0")
            self.period = None
            self.times = ts

    @classmethod
    def periodic(cls, c: float, t0: float = 0.0) -> "ImpulseSequence":
        return cls(t0=t0, period=c)

    @classmethod
    def explicit(cls, times: Iterable[float], t0: float = 0.0) -> "ImpulseSequence":
        return cls(t0=t0, times=times)

    def time(self, i: int) -> float:
        """t_i; t_0 is the initial time."""
        if i == 0:
            return self.t0
        if self.period is not None:
            return self.t0 + self.period * i
        if i - 1 < len(self.times):
            return self.times[i - 1]
        raise RangeError(f"impulse index {i} beyond explicit sequence")

    def times_in(self, horizon: float) -> list[float]:
        """Impulse instants strictly inside (t0, horizon)."""
        out = []
        i = 1
        while True:
            try:
                ti = self.time(i)
            except RangeError:
                break
            if ti >= horizon - LEFT_EPS:
                break
            out.append(ti)
            i += 1
        return out

    def segment_index(self, t: float, side: str = "right") -> int:
        """Number of impulses <= t ("right") or < t ("left")."""
        if t < self.t0:
            raise RangeError(f"t = {t} precedes t0 = {self.t0}")
        if self.period is not None:
            n = int(math.floor((t - self.t0) / self.period))
            # robust re-anchoring against rounding in the division
            while self.time(n + 1) <= t:
                n += 1
            while n > 0 and self.time(n) > t:
                n -= 1
            if side == "left" and n > 0 and self.time(n) == t:
                n -= 1
            return n
        side_arg = "right" if side == "right" else "left"
        return int(np.searchsorted(self.times, t, side=side_arg))

    def segment_bounds(self, t: float, side: str = "right") -> tuple[int, float, float]:
        """(i, t_i, t_{i+1}) of the segment containing t.

        side="left" resolves t exactly at an impulse into the preceding
        segment, for evaluating left limits of segment-wise functions.
        """
        n = self.segment_index(t, side=side)
        return n, self.time(n), self.time(n + 1)

    def min_gap(self, horizon: float | None = None) -> float:
        if self.period is not None:
            return self.period
        pts = [self.t0] + list(self.times)
        return min(b - a for a, b in zip(pts, pts[1:]))

    def sup_gap(self, horizon: float | None = None) -> float:
        if self.period is not None:
            return self.period
        pts = [self.t0] + list(self.times)
        return max(b - a for a, b in zip(pts, pts[1:]))


class InputSignal:
    """Bounded input t -> scalar or vector, with its declared sup norm."""

    def __init__(self, fn: Callable[[float], float], sup_norm: float, name: str = "u"):
        if sup_norm < 0:
            raise ArgumentError("sup_norm must be nonnegative")
        self.fn = fn
        self.sup_norm = float(sup_norm)
        self.name = name

    @classmethod
    def constant(cls, level: float) -> "InputSignal":
        lv = float(level)
        return cls(lambda t: lv, sup_norm=abs(lv), name=f"const:{lv:g}")

    @classmethod
    def zero(cls) -> "InputSignal":
        return cls.constant(0.0)

    def eval(self, t: float):
        return self.fn(t)

    def left_value(self, t: float):
        return self.fn(t - LEFT_EPS)


@dataclass(frozen=True)
class GridMeta:
    """Interior nodes of a uniform Dirichlet grid on [-1, 1]."""

    nodes: np.ndarray
    spacing: float


def l2_norm(state, grid_meta: GridMeta | None) -> float:
    """Composite trapezoid L2 norm; boundary values are the Dirichlet zeros."""
    if grid_meta is None:
        raise ArgumentError("l2_norm needs grid metadata")
    x = np.asarray(state, dtype=float)
    return math.sqrt(grid_meta.spacing * float(np.dot(x, x)))


def grad_l2_norm(state, grid_meta: GridMeta) -> float:
    """L2 norm of the forward-difference gradient, boundary zeros included."""
    x = np.asarray(state, dtype=float)
    padded = np.concatenate([[0.0], x, [0.0]])
    d = np.diff(padded) / grid_meta.spacing
    return math.sqrt(grid_meta.spacing * float(np.dot(d, d)))


class ImpulsiveSystem:
    """Flow right-hand side, indexed jump maps and the impulse sequence."""

    def __init__(self, dim: int, flow: Callable, jump: Callable,
                 impulses: ImpulseSequence, grid_meta: GridMeta | None = None,
                 max_stable_step: float | None = None, label: str = "system"):
        self.dim = int(dim)
        self.flow = flow                  # flow(t, x, u_value) -> dx/dt
        self.jump = jump                  # jump(i, x, u_value) -> new state
        self.impulses = impulses
        self.grid_meta = grid_meta
        self.max_stable_step = max_stable_step
        self.label = label

    def norm(self, state) -> float:
        if self.grid_meta is not None:
            return l2_norm(state, self.grid_meta)
        return float(np.linalg.norm(np.asarray(state, dtype=float)))


@dataclass
class Segment:
    """Dense samples on [t_start, t_end]; the final sample at an interior
    impulse time is the pre-jump left limit."""

    index: int
    t_start: float
    t_end: float
    times: np.ndarray
    states: np.ndarray
    ends_at_impulse: bool


@dataclass
class Trajectory:
    segments: list[Segment]
    left_limits: dict[float, np.ndarray]
    impulse_times: list[float]
    meta: dict = field(default_factory=dict)

    @property
    def t0(self) -> float:
        return self.segments[0].t_start

    @property
    def horizon(self) -> float:
        return self.segments[-1].t_end

    def sample_iter(self):
        """Yield (segment, j, t, x) over all dense samples."""
        for seg in self.segments:
            for j, t in enumerate(seg.times):
                yield seg, j, float(t), seg.states[j]

    def _locate_segment(self, t: float, side: str = "right") -> Segment:
        if t < self.t0 - 1e-12 or t > self.horizon + 1e-12:
            raise RangeError(f"t = {t} outside simulated horizon [{self.t0}, {self.horizon}]")
        eps = 1e-12 * max(1.0, abs(t))
        for seg in self.segments:
            upper_open = seg.ends_at_impulse
            if side == "left":
                if seg.t_start < t <= seg.t_end + eps:
                    return seg
            else:
                if seg.t_start - eps <= t < seg.t_end or (not upper_open and t <= seg.t_end + eps):
                    return seg
        return self.segments[-1] if side == "right" else self.segments[0]

    def state_at(self, t: float, side: str = "right") -> np.ndarray:
        """Dense state lookup; off-sample times are linearly interpolated."""
        seg = self._locate_segment(t, side=side)
        times = seg.times
        j = int(np.searchsorted(times, t))
        for cand in (j - 1, j, j + 1):
            if 0 <= cand < len(times) and abs(times[cand] - t) <= 1e-9 * max(1.0, abs(t)):
                return seg.states[cand]
        if j <= 0 or j >= len(times):
            raise RangeError(f"t = {t} not covered by segment samples")
        t0, t1 = times[j - 1], times[j]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * seg.states[j - 1] + w * seg.states[j]

    def left_limit(self, t: float) -> np.ndarray:
        """Pre-jump state at impulse times; the dense sample elsewhere."""
        for ti, x in self.left_limits.items():
            if abs(ti - t) <= 1e-12 * max(1.0, abs(t)):
                return x
        return self.state_at(t, side="left")

    def norm_of(self, state) -> float:
        return self.meta["norm_fn"](state)


def _rk4_span(flow, t: float, x: np.ndarray, dt: float, u: InputSignal, n_sub: int) -> np.ndarray:
    h = dt / n_sub
    for k in range(n_sub):
        tk = t + k * h
        um = u.eval(tk + 0.5 * h)
        k1 = flow(tk, x, u.eval(tk))
        k2 = flow(tk + 0.5 * h, x + 0.5 * h * k1, um)
        k3 = flow(tk + 0.5 * h, x + 0.5 * h * k2, um)
        k4 = flow(tk + h, x + h * k3, u.eval(tk + h))
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def simulate(sys: ImpulsiveSystem, x0, u: InputSignal, horizon: float, step: float) -> Trajectory:
    """Integrate the impulsive system from (t0, x0) up to the horizon.

    Jumps are taken at impulse times strictly inside (t0, horizon); a horizon
    that coincides with an impulse ends the trajectory on its left limit.
    """
    t0 = sys.impulses.t0
    if horizon <= t0:
        raise ArgumentError(f"horizon {horizon} must exceed t0 = {t0}")
    if step <= 0:
        raise ArgumentError(f"step must be positive, got {step}")
    if step >= sys.impulses.min_gap(horizon):
        raise ArgumentError(f"step {step} must undercut the minimal impulse gap")

    x = np.array(x0, dtype=float).reshape(-1)
    if x.size != sys.dim:
        raise ArgumentError(f"x0 has length {x.size}, system dimension is {sys.dim}")

    boundaries = [t0] + sys.impulses.times_in(horizon) + [horizon]
    impulse_times = boundaries[1:-1]
    segments: list[Segment] = []
    left_limits: dict[float, np.ndarray] = {}
    sup_seen = 0.0

    for si in range(len(boundaries) - 1):
        a, b = boundaries[si], boundaries[si + 1]
        n_full = int(math.floor((b - a) / step - 1e-9))
        times = [a + k * step for k in range(n_full + 1)]
        if b - times[-1] > 1e-12 * max(1.0, abs(b)):
            times.append(b)
        else:
            times[-1] = b
        states = np.empty((len(times), sys.dim))
        states[0] = x
        for j in range(1, len(times)):
            dt = times[j] - times[j - 1]
            n_sub = 1
            if sys.max_stable_step is not None and dt > sys.max_stable_step:
                n_sub = int(math.ceil(dt / sys.max_stable_step))
            x = _rk4_span(sys.flow, times[j - 1], x, dt, u, n_sub)
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP_THRESHOLD:
                raise BlowUpError(
                    f"state escaped at t = {times[j]:.6g}", last_finite_time=times[j - 1])
            states[j] = x
        for tj in times:
            uv = np.asarray(u.eval(tj), dtype=float)
            sup_seen = max(sup_seen, float(np.linalg.norm(uv.reshape(-1))))
        ends_at_impulse = si < len(boundaries) - 2
        segments.append(Segment(index=si, t_start=a, t_end=b,
                                times=np.array(times), states=states,
                                ends_at_impulse=ends_at_impulse))
        if ends_at_impulse:
            left_limits[b] = x.copy()
            x_new = np.asarray(sys.jump(si + 1, x, u.left_value(b)), dtype=float).reshape(-1)
            if x_new.size != sys.dim:
                raise ArgumentError(f"jump {si + 1} returned length {x_new.size}, expected {sys.dim}")
            if not np.all(np.isfinite(x_new)) or np.max(np.abs(x_new)) > BLOWUP_THRESHOLD:
                raise BlowUpError(f"jump at t = {b:.6g} escaped", last_finite_time=b)
            x = x_new

    if sup_seen > u.sup_norm + 1e-12:
        raise ArgumentError(
            f"input exceeded its declared sup norm: {sup_seen} > {u.sup_norm}")

    traj = Trajectory(segments=segments, left_limits=left_limits,
                      impulse_times=impulse_times,
                      meta={"x0": np.array(x0, dtype=float), "input": u, "step": float(step),
                            "horizon": float(horizon), "norm_fn": sys.norm,
                            "grid_meta": sys.grid_meta})
    # right-continuity: first sample of each post-jump segment equals the jump image
    for si, ti in enumerate(impulse_times):
        post = segments[si + 1].states[0]
        expect = sys.jump(si + 1, left_limits[ti], u.left_value(ti))
        if not np.array_equal(post, np.asarray(expect, dtype=float).reshape(-1)):
            raise AssertionError("right-continuity invariant violated")
    return traj


def left_limit(traj: Trajectory, t: float) -> np.ndarray:
    return traj.left_limit(t)


def semidiscretize_heat(a: float, N: int, f_gain: float = 0.0,
                        jump_spec: str = "uniform",
                        impulses: ImpulseSequence | None = None) -> ImpulsiveSystem:
    """Method-of-lines discretization of a 1-D diffusion on [-1, 1].

    N odd interior nodes (so y = 0 is a node), Dirichlet zero boundary,
    second-order central-difference Laplacian, flow a*lap(x) + f_gain*x.
    The jump replaces the profile under the envelope |g| <= sqrt(|u|*||x||_2):
    "uniform" uses the spatially constant interior profile, "scaled-cap"
    the per-node capped variant.
    """
    if a <= 0:
        raise ArgumentError(f"diffusivity must be positive, got {a}")
    if N < 3 or N % 2 == 0:
        raise GridError(f"N must be odd and >= 3, got {N}")
    h = 2.0 / (N + 1)
    nodes = -1.0 + h * np.arange(1, N + 1)
    meta = GridMeta(nodes=nodes, spacing=h)
    inv_h2 = 1.0 / (h * h)

    def flow(t, x, u_val):
        d = np.empty_like(x)
        d[1:-1] = x[:-2] - 2.0 * x[1:-1] + x[2:]
        d[0] = x[1] - 2.0 * x[0]
        d[-1] = x[-2] - 2.0 * x[-1]
        return (a * inv_h2) * d + f_gain * x

    def jump_uniform(i, x, u_val):
        level = math.sqrt(abs(float(u_val)) * l2_norm(x, meta))
        return np.full_like(x, level)

    def jump_scaled_cap(i, x, u_val):
        env = math.sqrt(abs(float(u_val)) * l2_norm(x, meta))
        peak = float(np.max(np.abs(x)))
        if peak == 0.0:
            return np.zeros_like(x)
        mag = np.minimum(np.abs(x), env) * (np.abs(x) / peak)
        return np.sign(x) * mag

    jumps = {"uniform": jump_uniform, "scaled-cap": jump_scaled_cap}
    if jump_spec not in jumps:
        raise ArgumentError(f"unknown jump_spec {jump_spec!r}; expected one of {sorted(jumps)}")

    lam_max = 4.0 * a * inv_h2 + abs(f_gain)
    return ImpulsiveSystem(
        dim=N, flow=flow, jump=jumps[jump_spec],
        impulses=impulses or ImpulseSequence.periodic(0.5),
        grid_meta=meta,
        max_stable_step=2.5 / lam_max,
        label=f"heat(a={a:g},N={N})")


def format_float(v: float) -> str:
    """CSV float serialization: 17 significant digits round-trips doubles."""
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def export_trajectory_csv(traj: Trajectory, path, lyapunov=None, per_node: bool = False):
    """Write the trajectory CSV: t,norm,V,pre_jump plus optional per-node columns.

    Impulse times appear twice: the left-limit row carries pre_jump=1 (with V
    evaluated as the left limit), the post-jump row pre_jump=0.
    """
    grid = traj.meta.get("grid_meta")
    node_cols: list[str] = []
    if per_node:
        if grid is not None:
            node_cols = [f"x@{y:.10g}" for y in grid.nodes]
        else:
            dim = traj.segments[0].states.shape[1]
            node_cols = [f"x{k + 1}" for k in range(dim)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["t", "norm", "V", "pre_jump"] + node_cols) + "\n")
        for seg, j, t, x in traj.sample_iter():
            pre = seg.ends_at_impulse and j == len(seg.times) - 1
            if lyapunov is not None:
                v = lyapunov.value_at(t, x, side="left" if pre else "right")
            else:
                v = math.nan
            row = [format_float(t), format_float(traj.norm_of(x)), format_float(v),
                   "1" if pre else "0"]
            if node_cols:
                row.extend(format_float(c) for c in x)
            fh.write(",".join(row) + "\n")
