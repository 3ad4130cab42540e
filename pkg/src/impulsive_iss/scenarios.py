"""Packaged example scenarios and the JSON scenario loader.

Built-ins: "heat" (impulsive diffusion on [-1, 1] with the spatially uniform
resetting jump), "rotation2d" (planar system with unstable flow and a
rotation-weighted quadratic Lyapunov function), and two scalar dwell-time
scenarios ("scalar_sfuj", "scalar_ufsj") carrying candidate Lyapunov
functions for the construction pipeline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import comparison
from .comparison import linear, parse_comparison, parse_rate, power
from .construct import DwellParams
from .errors import ConfigError
from .lyapunov import CandidateLyapunov, TimeVaryingLyapunov
from .system import (
    GridMeta,
    ImpulseSequence,
    ImpulsiveSystem,
    InputSignal,
    l2_norm,
    semidiscretize_heat,
)


@dataclass
class Scenario:
    system: ImpulsiveSystem
    input: InputSignal
    x0: np.ndarray
    horizon: float
    step: float
    lyapunov: TimeVaryingLyapunov | None = None
    candidate: CandidateLyapunov | None = None
    dwell: DwellParams | None = None
    regime: str | None = None
    label: str = "scenario"

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.size != self.system.dim:
            raise ConfigError(
                f"x0: length {self.x0.size} does not match system dimension {self.system.dim}")


def scenario_rotation2d(u_level: float = 0.1, horizon: float = 4.0,
                        step: float = 1e-4, x0=(0.0, 5200.0),
                        drop_discount: bool = False) -> Scenario:
    """Planar flow dx/dt = Ax with A = [[1,1],[-1,1]] (unstable in both
    components), jumps (x1, x2) -> (2 x1, u tanh x2) every pi/2.

    The matrix exponential factorizes as e^{A tau} = e^tau R(tau) with R the
    rotation matrix, which makes V(t,x) = e^{-4(t-t_n)} x^T R D R^T x decay
    like e^{-2 tau} along the flow.  The default x0 starts above the
    perturbation radius chi(u) = 8 e^{6 pi} u^2, so the gated flow and jump
    conditions are exercised non-vacuously before the state settles inside
    the radius.  drop_discount removes the e^{-4(t-t_n)} factor (test hook;
    breaks the flow decay condition).
    """
    A = np.array([[1.0, 1.0], [-1.0, 1.0]])
    d11, d22 = 0.25, 2.0 * math.exp(2.0 * math.pi)

    def flow(t, x, u_val):
        return A @ x

    def jump(i, x, u_val):
        return np.array([2.0 * x[0], float(u_val) * math.tanh(x[1])])

    impulses = ImpulseSequence.periodic(math.pi / 2.0)
    sys = ImpulsiveSystem(dim=2, flow=flow, jump=jump, impulses=impulses,
                          label="rotation2d")

    def segment_value(i, lo, hi, t, x):
        tau = t - lo
        c, s = math.cos(tau), math.sin(tau)
        w1 = c * x[0] - s * x[1]
        w2 = s * x[0] + c * x[1]
        quad = d11 * w1 * w1 + d22 * w2 * w2
        if drop_discount:
            return quad
        return math.exp(-4.0 * tau) * quad

    chi = power(8.0 * math.exp(6.0 * math.pi), 2, name="chi")
    V = TimeVaryingLyapunov(
        impulses=impulses, segment_value=segment_value,
        alpha1=power(math.exp(-2.0 * math.pi) / 4.0, 2, name="alpha1"),
        alpha2=power(2.0 * math.exp(2.0 * math.pi), 2, name="alpha2"),
        chi=chi, phi=linear(2.0, name="phi"), alpha3=chi,
        name="V_rotation2d" + ("_sabotaged" if drop_discount else ""))
    return Scenario(system=sys, input=InputSignal.constant(u_level),
                    x0=np.asarray(x0, dtype=float), horizon=horizon, step=step,
                    lyapunov=V, label="rotation2d")


def heat_initial_profile(grid: GridMeta) -> np.ndarray:
    y = grid.nodes
    return 2.0 * (y * y - 1.0) ** 2


def scenario_heat(N: int = 201, a: float = 0.1, f_gain: float = 2.0,
                  u_level: float = 0.1, c: float = 0.5, horizon: float = 2.0,
                  step: float = 1e-3, jump_spec: str = "uniform") -> Scenario:
    """Impulsive diffusion with resetting jumps, the companion of Fig. 1.

    V(t,x) = ||e^{-h(t)} x||_2^2 with h(t) = (t - t_n)/(t_{n+1} - t_n) - 1/2,
    perturbation radius chi(s) = 4 e^5 s^2, flow decay phi(v) = (a/2) v and
    below-gate jump bound alpha3(s) = 4 e^4 s^2.  The sandwich
    (1/e)||x||^2 <= V <= e||x||^2 is exact because h stays in [-1/2, 1/2).
    """
    impulses = ImpulseSequence.periodic(c)
    sys = semidiscretize_heat(a=a, N=N, f_gain=f_gain, jump_spec=jump_spec,
                              impulses=impulses)
    grid = sys.grid_meta

    def segment_value(i, lo, hi, t, x):
        h = (t - lo) / (hi - lo) - 0.5
        nrm = l2_norm(x, grid)
        return math.exp(-2.0 * h) * nrm * nrm

    V = TimeVaryingLyapunov(
        impulses=impulses, segment_value=segment_value,
        alpha1=power(1.0 / math.e, 2, name="alpha1"),
        alpha2=power(math.e, 2, name="alpha2"),
        chi=power(4.0 * math.e**5, 2, name="chi"),
        phi=linear(0.5 * a, name="phi"),
        alpha3=power(4.0 * math.e**4, 2, name="alpha3"),
        name="V_heat")
    return Scenario(system=sys, input=InputSignal.constant(u_level),
                    x0=heat_initial_profile(grid), horizon=horizon, step=step,
                    lyapunov=V, label="heat")


def scenario_scalar_sfuj(u_level: float = 0.1, horizon: float = 7.5,
                         step: float = 1e-2, x0: float = 2.0) -> Scenario:
    """Scalar stable flow dx/dt = -x with expanding jumps x -> sqrt(2) x at
    unit gaps; candidate V = x^2 with rho(v) = 2v, alpha(a) = 2a.

    theta = 1 and delta = 1 - ln(2)/2 sit exactly on the dwell boundary:
    the integral of 1/rho over [a, 2a] is ln(2)/2 for every a.
    """
    impulses = ImpulseSequence.periodic(1.0)
    root2 = math.sqrt(2.0)
    sys = ImpulsiveSystem(
        dim=1,
        flow=lambda t, x, u_val: -x,
        jump=lambda i, x, u_val: root2 * x,
        impulses=impulses, label="scalar_sfuj")
    cand = CandidateLyapunov(
        V=lambda x: float(x[0]) ** 2,
        psi1=power(1.0, 2, name="psi1"), psi2=power(1.0, 2, name="psi2"),
        eta=power(1.0, 2, name="eta"),
        rho=lambda v: 2.0 * v,
        alpha=linear(2.0, name="alpha"),
        psi3=power(2.0, 2, name="psi3"))
    dwell = DwellParams(rho=cand.rho, alpha=cand.alpha,
                        theta=1.0, delta=1.0 - 0.5 * math.log(2.0))
    return Scenario(system=sys, input=InputSignal.constant(u_level),
                    x0=np.array([x0]), horizon=horizon, step=step,
                    candidate=cand, dwell=dwell, regime="sfuj",
                    label="scalar_sfuj")


def scenario_scalar_ufsj(u_level: float = 0.1, horizon: float = 3.75,
                         step: float = 5e-3, x0: float = 2.0) -> Scenario:
    """Scalar unstable flow dx/dt = +x with contracting jumps x -> x/2 at
    gaps 0.5; candidate V = x^2 with rho(v) = -2v, alpha(a) = a/4.

    The reverse dwell integral over [a/4, a] equals ln 2 for every a, so
    theta = 0.5, delta = 0.15 passes the dwell check (ln 2 >= 0.35) and also
    covers the jump budget theta + delta = 0.65 <= ln 2 that the constructed
    function needs at impulses.
    """
    impulses = ImpulseSequence.periodic(0.5)
    sys = ImpulsiveSystem(
        dim=1,
        flow=lambda t, x, u_val: x,
        jump=lambda i, x, u_val: 0.5 * x,
        impulses=impulses, label="scalar_ufsj")
    cand = CandidateLyapunov(
        V=lambda x: float(x[0]) ** 2,
        psi1=power(1.0, 2, name="psi1"), psi2=power(1.0, 2, name="psi2"),
        eta=power(1.0, 2, name="eta"),
        rho=lambda v: -2.0 * v,
        alpha=linear(0.25, name="alpha"),
        psi3=power(0.25, 2, name="psi3"))
    dwell = DwellParams(rho=cand.rho, alpha=cand.alpha, theta=0.5, delta=0.15)
    return Scenario(system=sys, input=InputSignal.constant(u_level),
                    x0=np.array([x0]), horizon=horizon, step=step,
                    candidate=cand, dwell=dwell, regime="ufsj",
                    label="scalar_ufsj")


BUILTIN_SCENARIOS: dict[str, Callable[..., Scenario]] = {
    "heat": scenario_heat,
    "rotation2d": scenario_rotation2d,
    "scalar_sfuj": scenario_scalar_sfuj,
    "scalar_ufsj": scenario_scalar_ufsj,
}


# --- config loader ---------------------------------------------------------


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"{path}: missing required key {key!r}")
    return cfg[key]


def _build_impulses(cfg: dict, path: str) -> ImpulseSequence:
    t0 = float(cfg.get("t0", 0.0))
    if "periodic" in cfg:
        return ImpulseSequence.periodic(float(cfg["periodic"]), t0=t0)
    if "times" in cfg:
        return ImpulseSequence.explicit([float(t) for t in cfg["times"]], t0=t0)
    raise ConfigError(f"{path}: need either 'periodic' or 'times'")


def _build_flow(cfg: dict, dim: int, path: str):
    kind = _require(cfg, "kind", path)
    if kind == "linear":
        A = np.asarray(_require(cfg, "matrix", path), dtype=float)
        if A.shape != (dim, dim):
            raise ConfigError(f"{path}.matrix: shape {A.shape} does not match dim {dim}")
        return lambda t, x, u_val: A @ x
    if kind == "diagonal":
        rates = np.asarray(_require(cfg, "rates", path), dtype=float)
        if rates.size != dim:
            raise ConfigError(f"{path}.rates: length {rates.size} does not match dim {dim}")
        return lambda t, x, u_val: rates * x
    raise ConfigError(f"{path}.kind: unknown flow kind {kind!r}")


def _build_jump(cfg: dict, dim: int, path: str):
    kind = _require(cfg, "kind", path)
    if kind == "matrix":
        G = np.asarray(_require(cfg, "matrix", path), dtype=float)
        if G.shape != (dim, dim):
            raise ConfigError(f"{path}.matrix: shape {G.shape} does not match dim {dim}")
        return lambda i, x, u_val: G @ x
    if kind == "diagonal":
        factors = np.asarray(_require(cfg, "factors", path), dtype=float)
        if factors.size != dim:
            raise ConfigError(f"{path}.factors: length {factors.size} does not match dim {dim}")
        return lambda i, x, u_val: factors * x
    if kind == "tanh_second":
        if dim != 2:
            raise ConfigError(f"{path}: tanh_second needs dim 2, got {dim}")
        gain = float(cfg.get("gain", 2.0))
        return lambda i, x, u_val: np.array([gain * x[0], float(u_val) * math.tanh(x[1])])
    raise ConfigError(f"{path}.kind: unknown jump kind {kind!r}")


def _build_candidate(cfg: dict, path: str) -> CandidateLyapunov:
    form = cfg.get("form", "norm_sq")
    scale = float(cfg.get("scale", 1.0))
    if form != "norm_sq":
        raise ConfigError(f"{path}.form: unknown candidate form {form!r}")

    def V(x):
        x = np.asarray(x, dtype=float)
        return scale * float(np.dot(x, x))

    try:
        return CandidateLyapunov(
            V=V,
            psi1=parse_comparison(_require(cfg, "psi1", path)),
            psi2=parse_comparison(_require(cfg, "psi2", path)),
            eta=parse_comparison(_require(cfg, "eta", path)),
            rho=parse_rate(_require(cfg, "rho", path)),
            alpha=parse_comparison(_require(cfg, "alpha", path)),
            psi3=parse_comparison(_require(cfg, "psi3", path)))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_scenario(source) -> Scenario:
    """Build a Scenario from a JSON file path, a JSON string, or a dict.

    Either {"builtin": name, "params": {...}} or a structural config with
    system/input/x0/run keys (see the shipped files under configs/).
    """
    if isinstance(source, dict):
        cfg = source
    else:
        text = str(source)
        if text.strip().startswith("{"):
            cfg = json.loads(text)
        else:
            try:
                with open(text, "r", encoding="utf-8") as fh:
                    cfg = json.load(fh)
            except FileNotFoundError as exc:
                raise ConfigError(f"scenario file not found: {text}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{text}: invalid JSON ({exc})") from exc

    if "builtin" in cfg:
        name = cfg["builtin"]
        if name not in BUILTIN_SCENARIOS:
            raise ConfigError(
                f"builtin: unknown scenario {name!r}; have {sorted(BUILTIN_SCENARIOS)}")
        params = cfg.get("params", {})
        try:
            return BUILTIN_SCENARIOS[name](**params)
        except TypeError as exc:
            raise ConfigError(f"params: {exc}") from exc

    sys_cfg = _require(cfg, "system", "config")
    run_cfg = _require(cfg, "run", "config")
    if "grid" in sys_cfg:
        grid_cfg = sys_cfg["grid"]
        flow_cfg = sys_cfg.get("flow", {})
        system = semidiscretize_heat(
            a=float(flow_cfg.get("a", 0.1)),
            N=int(_require(grid_cfg, "N", "config.system.grid")),
            f_gain=float(flow_cfg.get("f_gain", 0.0)),
            jump_spec=sys_cfg.get("jumps", {}).get("kind", "uniform"),
            impulses=_build_impulses(_require(sys_cfg, "impulses", "config.system"),
                                     "config.system.impulses"))
        x0_cfg = cfg.get("x0", "heat_default")
        if x0_cfg == "heat_default":
            x0 = heat_initial_profile(system.grid_meta)
        else:
            x0 = np.asarray(x0_cfg, dtype=float)
    else:
        dim = int(_require(sys_cfg, "dim", "config.system"))
        system = ImpulsiveSystem(
            dim=dim,
            flow=_build_flow(_require(sys_cfg, "flow", "config.system"), dim,
                             "config.system.flow"),
            jump=_build_jump(_require(sys_cfg, "jumps", "config.system"), dim,
                             "config.system.jumps"),
            impulses=_build_impulses(_require(sys_cfg, "impulses", "config.system"),
                                     "config.system.impulses"),
            label=cfg.get("label", "custom"))
        x0 = np.asarray(_require(cfg, "x0", "config"), dtype=float)

    in_cfg = cfg.get("input", {"kind": "constant", "level": 0.0})
    kind = in_cfg.get("kind", "constant")
    if kind == "constant":
        u = InputSignal.constant(float(in_cfg.get("level", 0.0)))
    elif kind == "zero":
        u = InputSignal.zero()
    else:
        raise ConfigError(f"config.input.kind: unknown input kind {kind!r}")

    candidate = None
    if "candidate" in cfg:
        candidate = _build_candidate(cfg["candidate"], "config.candidate")
    dwell = None
    regime = cfg.get("regime")
    if "dwell" in cfg:
        if candidate is None:
            raise ConfigError("config.dwell: dwell parameters need a candidate")
        dw = cfg["dwell"]
        dwell = DwellParams(rho=candidate.rho, alpha=candidate.alpha,
                            theta=float(_require(dw, "theta", "config.dwell")),
                            delta=float(_require(dw, "delta", "config.dwell")))

    try:
        return Scenario(
            system=system, input=u, x0=x0,
            horizon=float(_require(run_cfg, "horizon", "config.run")),
            step=float(_require(run_cfg, "step", "config.run")),
            candidate=candidate, dwell=dwell, regime=regime,
            label=cfg.get("label", "custom"))
    except ConfigError:
        raise
