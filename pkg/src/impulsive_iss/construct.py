"""Dwell-time conditions and time-varying Lyapunov constructions.

Two regimes: stable flow with unstable jumps (SFUJ), where the integral of
1/rho from a to alpha(a) must stay below theta - delta and impulses must be
at least theta apart; and unstable flow with stable jumps (UFSJ), with the
mirrored condition and impulses at most theta apart.  The constructions turn
a candidate Lyapunov function into a segment-wise time-varying one whose
value strictly falls above the perturbation radius.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import comparison
from .comparison import ComparisonFunction, verify_class
from .errors import (
    ArgumentError,
    ConstructionError,
    OrientationError,
    PreconditionError,
    SequenceError,
)
from .lyapunov import CandidateLyapunov, TimeVaryingLyapunov
from .system import ImpulseSequence
from .transform import build_transform

THREADS_ENV = "IMPULSIVE_ISS_THREADS"
# boundary cases (the integral equals theta - delta exactly) must not flip on
# quadrature rounding; the check cannot resolve tighter than its quadrature
DWELL_TOL = 1e-11


def _default_a_grid() -> np.ndarray:
    return np.logspace(-6.0, 6.0, 121)


@dataclass(frozen=True)
class DwellParams:
    """Rates, jump gain and the (theta, delta) dwell bound to test."""

    rho: Callable[[float], float]
    alpha: ComparisonFunction
    theta: float
    delta: float
    a_grid: np.ndarray = field(default_factory=_default_a_grid)

    def __post_init__(self):
        if not (self.theta > self.delta > 0):
            raise ArgumentError(
                f"need theta > delta > 0, got theta={self.theta}, delta={self.delta}")
        if np.any(np.asarray(self.a_grid) <= 0):
            raise ArgumentError("a_grid must be positive")


@dataclass(frozen=True)
class DwellReport:
    regime: str
    passed: bool
    bound: float          # theta - delta
    extremal: float       # max integral (sfuj) / min integral (ufsj)
    extremal_a: float
    margin: float         # >= 0 iff passed
    values: tuple = ()


def _map_grid(fn, grid):
    workers = int(os.environ.get(THREADS_ENV, "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, grid))
    return [fn(a) for a in grid]


def check_dwell_sfuj(p: DwellParams, quad_tol: float = 1e-12) -> DwellReport:
    """Integral of 1/rho from a to alpha(a) <= theta - delta for all grid a."""
    T = build_transform(p.rho, quad_tol=quad_tol, name="F_sfuj")
    vals = _map_grid(lambda a: T.between(float(a), p.alpha.eval(float(a))), p.a_grid)
    idx = int(np.argmax(vals))
    bound = p.theta - p.delta
    extremal = float(vals[idx])
    return DwellReport(regime="sfuj", passed=extremal <= bound + DWELL_TOL, bound=bound,
                       extremal=extremal, extremal_a=float(p.a_grid[idx]),
                       margin=bound - extremal, values=tuple(float(v) for v in vals))


def check_dwell_ufsj(p: DwellParams, quad_tol: float = 1e-12) -> DwellReport:
    """Integral of 1/(-rho) from alpha(a) to a >= theta - delta for all grid a."""
    for a in p.a_grid:
        if p.alpha.eval(float(a)) >= float(a):
            raise OrientationError(f"alpha({a:g}) = {p.alpha.eval(float(a)):g} >= a; "
                                   "stabilizing jumps require alpha(a) < a")
    T = build_transform(lambda s: -p.rho(s), quad_tol=quad_tol, name="F_ufsj")
    vals = _map_grid(lambda a: T.between(p.alpha.eval(float(a)), float(a)), p.a_grid)
    idx = int(np.argmin(vals))
    bound = p.theta - p.delta
    extremal = float(vals[idx])
    return DwellReport(regime="ufsj", passed=extremal >= bound - DWELL_TOL, bound=bound,
                       extremal=extremal, extremal_a=float(p.a_grid[idx]),
                       margin=extremal - bound, values=tuple(float(v) for v in vals))


class RationalKappa(ComparisonFunction):
    """kappa(s) = c s^2 / (1 + s): K-infinity, C^1, kappa' in P, with closed
    forms for the derivative and inverse."""

    __slots__ = ("c",)

    def __init__(self, c: float):
        if c <= 0:
            raise ConstructionError(f"kappa coefficient degenerate: c = {c}")
        super().__init__(lambda s: c * s * s / (1.0 + s), class_tag="K_infinity",
                         name=f"kappa[c={c:.6g}]",
                         inverse_hint=lambda v: (v + math.sqrt(v * v + 4.0 * c * v)) / (2.0 * c))
        self.c = float(c)

    def derivative(self, s: float) -> float:
        return self.c * (s * s + 2.0 * s) / ((1.0 + s) ** 2)

    def inv(self, v: float) -> float:
        if v <= 0:
            return 0.0
        return (v + math.sqrt(v * v + 4.0 * self.c * v)) / (2.0 * self.c)


def default_kappa(alpha: ComparisonFunction, grid=None) -> RationalKappa:
    """Largest safe kappa of the rational family below min{alpha^-1, id}.

    c = 0.99 * inf over the grid of min{alpha^-1(s), s} (1+s) / s^2, then the
    bound kappa <= min{alpha^-1, id} and kappa' in P are re-verified on the
    grid.
    """
    if grid is None:
        grid = comparison.default_grid()
    grid = np.asarray(grid, dtype=float)
    grid = grid[grid > 0]
    if grid.size == 0:
        raise ArgumentError("kappa grid must contain positive points")
    c_inf = math.inf
    for s in grid:
        ainv = comparison.inverse(alpha, float(s))
        c_inf = min(c_inf, min(ainv, s) * (1.0 + s) / (s * s))
    c = 0.99 * c_inf
    if not (c > 0) or not math.isfinite(c):
        raise ConstructionError(f"kappa construction failed: c = {c}")
    kappa = RationalKappa(c)
    for s in grid:
        bound = min(comparison.inverse(alpha, float(s)), s)
        if kappa.eval(s) > bound * (1.0 + 1e-12):
            raise ConstructionError(f"kappa({s:g}) exceeds min(alpha^-1, id)")
    deriv = ComparisonFunction(kappa.derivative, name="kappa'")
    rep = verify_class(deriv, "P", grid)
    if not rep.passed:
        raise ConstructionError(f"kappa' failed the class-P check: {rep.violations[:3]}")
    return kappa


def build_phi(C: CandidateLyapunov, p: DwellParams, kappa: RationalKappa,
              grid=None) -> ComparisonFunction:
    """Flow decay rate of the SFUJ-constructed function.

    phi(v) = min{(delta/theta) rho(v), kappa'(w) rho(w)} with w = kappa^-1(v):
    the two branch bounds of the construction, combined so phi is a valid
    lower bound whichever branch attains the max.  Class P is enforced on a
    grid.
    """
    ratio = p.delta / p.theta

    def phi_fn(v: float) -> float:
        if v <= 0.0:
            return 0.0
        w = kappa.inv(v)
        return min(ratio * C.rho(v), kappa.derivative(w) * C.rho(w))

    phi = ComparisonFunction(phi_fn, class_tag="P", name="phi_sfuj")
    rep = verify_class(phi, "P", grid if grid is not None else comparison.default_grid())
    if not rep.passed:
        raise ConstructionError(f"phi failed the class-P check: {rep.violations[:3]}")
    return phi


@dataclass(frozen=True)
class ConstructionResult:
    V: TimeVaryingLyapunov
    dwell: DwellReport
    provenance: dict

    @property
    def certificates(self):
        return {"alpha1": self.V.alpha1, "alpha2": self.V.alpha2, "chi": self.V.chi,
                "phi": self.V.phi, "alpha3": self.V.alpha3}


def construct_sfuj(C: CandidateLyapunov, p: DwellParams, S: ImpulseSequence,
                   kappa: RationalKappa | None = None,
                   quad_tol: float = 1e-10) -> ConstructionResult:
    """Stable-flow/unstable-jump construction V = max{v1, kappa(V_cand)}.

    v1 discounts V_cand through the rate transform by the unused fraction of
    the dwell budget theta - delta: full discount right after a jump, none
    just before the next one, so each jump's expansion is pre-paid.
    """
    dwell = check_dwell_sfuj(p)
    if not dwell.passed:
        raise PreconditionError(
            f"dwell condition failed: max integral {dwell.extremal:.6g} > "
            f"theta - delta = {dwell.bound:.6g} (margin {dwell.margin:.3g})")
    if S.min_gap() < p.theta - 1e-12:
        raise SequenceError(
            f"impulse gaps must be >= theta = {p.theta}, min gap is {S.min_gap()}")
    if kappa is None:
        kappa = default_kappa(p.alpha)
    T = build_transform(C.rho, quad_tol=quad_tol, name="F_sfuj")
    budget = p.theta - p.delta

    def v1(lo: float, hi: float, t: float, x) -> float:
        vc = float(C.V(x))
        if vc <= 0.0:
            return 0.0
        backfrac = (hi - t) / (hi - lo)
        arg = T.value(vc) - backfrac * budget
        if math.isfinite(T.m):
            arg = max(arg, T.m)
        return T.inverse(arg)

    def segment_value(i, lo, hi, t, x):
        return max(v1(lo, hi, t, x), kappa.eval(float(C.V(x))))

    chi = comparison.compose(C.alpha, C.eta, name="chi")
    phi = build_phi(C, p, kappa)
    V = TimeVaryingLyapunov(
        impulses=S, segment_value=segment_value,
        alpha1=comparison.compose(kappa, C.psi1, name="alpha1"),
        alpha2=C.psi2, chi=chi, phi=phi,
        alpha3=comparison.pointwise_max(C.psi3, chi, name="alpha3"),
        name="V_sfuj")
    prov = {
        "method": "sfuj",
        "theta": p.theta,
        "delta": p.delta,
        "kappa_c": kappa.c,
        "dwell_margin": dwell.margin,
        "dwell_extremal": dwell.extremal,
        "transform_lower_limit": T.m if math.isfinite(T.m) else "-inf",
        "notes": ["clamp at the transform's lower limit active only for rates "
                  "with finite-time convergence"],
    }
    return ConstructionResult(V=V, dwell=dwell, provenance=prov)


def construct_ufsj(C: CandidateLyapunov, p: DwellParams, S: ImpulseSequence,
                   quad_tol: float = 1e-10) -> ConstructionResult:
    """Unstable-flow/stable-jump construction.

    V discounts V_cand by the elapsed fraction of theta + delta within each
    segment, so the discount outruns the flow growth; certificates mirror the
    SFUJ construction with the gate chi = max{eta, alpha o eta} (alpha is
    contracting here, so the plain mirror alpha o eta would under-gate).
    """
    dwell = check_dwell_ufsj(p)
    if not dwell.passed:
        raise PreconditionError(
            f"dwell condition failed: min integral {dwell.extremal:.6g} < "
            f"theta - delta = {dwell.bound:.6g} (margin {dwell.margin:.3g})")
    if S.sup_gap() > p.theta + 1e-12:
        raise SequenceError(
            f"impulse gaps must be <= theta = {p.theta}, sup gap is {S.sup_gap()}")
    T = build_transform(lambda s: -C.rho(s), quad_tol=quad_tol, name="F_ufsj")
    load = p.theta + p.delta
    jump_margin = dwell.extremal - load

    def segment_value(i, lo, hi, t, x):
        vc = float(C.V(x))
        if vc <= 0.0:
            return 0.0
        frac = (t - lo) / (hi - lo)
        arg = T.value(vc) - frac * load
        if math.isfinite(T.m):
            arg = max(arg, T.m)
        return T.inverse(arg)

    def alpha1_fn(s: float) -> float:
        v = C.psi1.eval(s)
        if v <= 0.0:
            return 0.0
        arg = T.value(v) - load
        if math.isfinite(T.m):
            arg = max(arg, T.m)
        return T.inverse(arg)

    def alpha1_inv(y: float) -> float:
        if y <= 0.0:
            return 0.0
        return comparison.inverse(C.psi1, T.inverse(T.value(y) + load))

    alpha1 = ComparisonFunction(alpha1_fn, class_tag="K_infinity", name="alpha1",
                                inverse_hint=alpha1_inv)
    rep = verify_class(alpha1, "K", np.logspace(-6, 6, 49))
    if not rep.passed:
        raise ConstructionError(
            f"lower sandwich certificate degenerates (finite-time clamp active): "
            f"{rep.violations[:3]}")
    chi = comparison.pointwise_max(C.eta, comparison.compose(C.alpha, C.eta), name="chi")
    ratio = p.delta / p.theta
    phi = ComparisonFunction(lambda v: ratio * (-C.rho(v)) if v > 0 else 0.0,
                             class_tag="P", name="phi_ufsj")
    rep = verify_class(phi, "P", comparison.default_grid())
    if not rep.passed:
        raise ConstructionError(f"phi failed the class-P check: {rep.violations[:3]}")
    V = TimeVaryingLyapunov(
        impulses=S, segment_value=segment_value,
        alpha1=alpha1, alpha2=C.psi2, chi=chi, phi=phi,
        alpha3=comparison.pointwise_max(C.psi3, chi, name="alpha3"),
        name="V_ufsj")
    prov = {
        "method": "ufsj",
        "theta": p.theta,
        "delta": p.delta,
        "dwell_margin": dwell.margin,
        "dwell_extremal": dwell.extremal,
        "jump_budget": load,
        "jump_margin": jump_margin,
        "transform_lower_limit": T.m if math.isfinite(T.m) else "-inf",
        "notes": (["jump contraction does not cover theta + delta; "
                   "verification may fail at impulses"] if jump_margin < 0 else [])
                 + ["certificates mirrored from the stable-flow construction; "
                    "gate uses max{eta, alpha o eta}"],
    }
    return ConstructionResult(V=V, dwell=dwell, provenance=prov)


def dwell_region(regime: str, rho: Callable[[float], float], alpha: ComparisonFunction,
                 thetas: Sequence[float], deltas: Sequence[float],
                 a_grid=None) -> list[tuple[float, float, bool]]:
    """Evaluate the dwell condition over a (theta, delta) grid.

    The per-a integrals do not depend on (theta, delta), so the extremal
    integral is computed once and compared against each theta - delta.
    """
    a_grid = _default_a_grid() if a_grid is None else np.asarray(a_grid, dtype=float)
    probe = DwellParams(rho=rho, alpha=alpha, theta=2.0, delta=1.0, a_grid=a_grid)
    if regime == "sfuj":
        rep = check_dwell_sfuj(probe)
        passes = lambda th, de: rep.extremal <= th - de
    elif regime == "ufsj":
        rep = check_dwell_ufsj(probe)
        passes = lambda th, de: rep.extremal >= th - de
    else:
        raise ArgumentError(f"unknown regime {regime!r}")
    rows = []
    for th in thetas:
        for de in deltas:
            ok = bool(th > de > 0) and bool(passes(th, de))
            rows.append((float(th), float(de), ok))
    return rows
