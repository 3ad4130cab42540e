"""Comparison functions (classes K, K-infinity, P, KL) and grid-certified class checks.

Class membership of a comparison function is an analytic property; this module
certifies it on finite grids only.  A passing report therefore means "no
violation found on the tested grid", and unboundedness of a K-infinity
function is recorded as a documented limitation rather than checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    BracketError,
    ClassViolationError,
    DomainError,
)

# Inversion tolerance, applied to |f(s) - y| normalized by max(1, |y|).
# (A plain absolute 1e-12 is unattainable in double precision for images ~1e12.)
TOL_INV = 1e-12
MAX_INV_ITER = 200

DEFAULT_DOMAIN_HINT = 1e6


def default_grid(domain_hint: float = DEFAULT_DOMAIN_HINT, n: int = 256) -> np.ndarray:
    """Log-spaced certification grid over [1e-9, domain_hint]."""
    if domain_hint <= 1e-9:
        raise ArgumentError(f"domain_hint must exceed 1e-9, got {domain_hint}")
    return np.logspace(-9.0, math.log10(domain_hint), n)


class ComparisonFunction:
    """A scalar function on the nonnegative reals with a claimed class tag.

    Values are immutable after construction and safe to share between
    workers.  ``inverse_hint`` optionally supplies a closed-form inverse
    (used by the built-in linear/power constructors).
    """

    __slots__ = ("_fn", "class_tag", "domain_hint", "name", "_inverse_hint")

    def __init__(
        self,
        fn: Callable[[float], float],
        class_tag: str = "generic",
        domain_hint: float = DEFAULT_DOMAIN_HINT,
        name: str = "f",
        inverse_hint: Callable[[float], float] | None = None,
    ):
        if class_tag not in ("K", "K_infinity", "P", "generic"):
            raise ArgumentError(f"unknown class tag {class_tag!r}")
        self._fn = fn
        self.class_tag = class_tag
        self.domain_hint = float(domain_hint)
        self.name = name
        self._inverse_hint = inverse_hint

    def eval(self, s: float) -> float:
        if s < 0:
            raise DomainError(f"{self.name}: negative argument {s}")
        v = float(self._fn(float(s)))
        if v < 0.0:
            # absorb rounding noise only; a genuinely negative value is a class violation
            if v > -1e-12:
                return 0.0
            raise ClassViolationError(f"{self.name}({s}) = {v} < 0")
        return v

    __call__ = eval

    def __repr__(self):
        return f"ComparisonFunction({self.name!r}, tag={self.class_tag})"


def linear(a: float, name: str | None = None) -> ComparisonFunction:
    if a <= 0:
        raise ArgumentError(f"linear slope must be positive, got {a}")
    return ComparisonFunction(
        lambda s: a * s,
        class_tag="K_infinity",
        name=name or f"linear:{a:g}",
        inverse_hint=lambda y: y / a,
    )


def power(c: float, p: float, name: str | None = None) -> ComparisonFunction:
    """c * s**p; class K-infinity for c, p > 0."""
    if c <= 0 or p <= 0:
        raise ArgumentError(f"power coefficients must be positive, got c={c}, p={p}")
    return ComparisonFunction(
        lambda s: c * s**p,
        class_tag="K_infinity",
        name=name or f"power:{c:g},{p:g}",
        inverse_hint=lambda y: (y / c) ** (1.0 / p),
    )


def identity() -> ComparisonFunction:
    return ComparisonFunction(lambda s: s, class_tag="K_infinity", name="identity",
                              inverse_hint=lambda y: y)


def expm1_scaled(c: float, k: float, name: str | None = None) -> ComparisonFunction:
    """c * (exp(k*s) - 1); class K-infinity for c, k > 0."""
    if c <= 0 or k <= 0:
        raise ArgumentError(f"expm1 coefficients must be positive, got c={c}, k={k}")
    return ComparisonFunction(
        lambda s: c * math.expm1(k * s),
        class_tag="K_infinity",
        name=name or f"expm1:{c:g},{k:g}",
        inverse_hint=lambda y: math.log1p(y / c) / k,
    )


def table(points: Sequence[tuple[float, float]], name: str = "table") -> ComparisonFunction:
    """Monotone piecewise-linear interpolant through (s, f(s)) pairs.

    Extrapolates with the last segment's slope beyond the final knot.
    """
    pts = sorted((float(s), float(v)) for s, v in points)
    if len(pts) < 2:
        raise ArgumentError("table needs at least two points")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(np.diff(xs) <= 0):
        raise ArgumentError("table abscissae must be strictly increasing")
    if np.any(np.diff(ys) <= 0):
        raise ClassViolationError("table ordinates must be strictly increasing")
    if xs[0] < 0 or ys[0] < 0:
        raise DomainError("table points must be nonnegative")
    end_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])

    def fn(s: float) -> float:
        if s >= xs[-1]:
            return float(ys[-1] + end_slope * (s - xs[-1]))
        return float(np.interp(s, xs, ys))

    tag = "K_infinity" if math.isclose(ys[0], 0.0, abs_tol=1e-15) and xs[0] == 0.0 else "generic"
    return ComparisonFunction(fn, class_tag=tag, name=name, domain_hint=float(xs[-1]))


def load_table(path: str) -> ComparisonFunction:
    """Read a two-column (s, f(s)) text/CSV file into a table function."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] != 2:
        raise ArgumentError(f"table file {path}: expected two columns, got {data.shape[1]}")
    return table([(r[0], r[1]) for r in data], name=f"table:{path}")


def inverse(f: ComparisonFunction, y: float, bracket: tuple[float, float] | None = None,
            tol: float = TOL_INV) -> float:
    """Invert a strictly increasing function at y.

    Bisection refined by secant steps; the residual |f(s) - y| is driven
    below tol * max(1, |y|).  Without an explicit bracket the upper end is
    expanded geometrically from the domain hint.
    """
    if y < 0:
        raise DomainError(f"inverse target must be nonnegative, got {y}")
    if f._inverse_hint is not None and bracket is None:
        return float(f._inverse_hint(y))
    if bracket is None:
        lo, hi = 0.0, max(f.domain_hint, 1.0)
        while f.eval(hi) < y:
            hi *= 10.0
            if hi > 1e300:
                raise BracketError(f"{f.name}: could not bracket y={y}")
    else:
        lo, hi = float(bracket[0]), float(bracket[1])
    flo, fhi = f.eval(lo), f.eval(hi)
    if flo > fhi:
        raise ClassViolationError(f"{f.name}: not increasing on bracket [{lo}, {hi}]")
    scale = max(1.0, abs(y))
    if y < flo - tol * scale or y > fhi + tol * scale:
        raise BracketError(f"{f.name}: y={y} outside image [{flo}, {fhi}] of bracket")
    y = min(max(y, flo), fhi)
    s = 0.5 * (lo + hi)
    for it in range(MAX_INV_ITER):
        fs = f.eval(s)
        if abs(fs - y) <= tol * scale:
            return s
        if fs > y:
            hi, fhi = s, fs
        else:
            lo, flo = s, fs
        # secant proposal on even iterations, plain bisection on odd ones
        # (pure false position can stagnate against one bracket end)
        cand = 0.5 * (lo + hi)
        if it % 2 == 0 and fhi > flo:
            sec = lo + (y - flo) * (hi - lo) / (fhi - flo)
            if lo < sec < hi:
                cand = sec
        s = cand
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
    if abs(f.eval(s) - y) > max(10 * tol * scale, 1e-9 * scale):
        raise ClassViolationError(
            f"{f.name}: inversion stalled at s={s} (non-monotone samples?)")
    return s


def inverse_fn(f: ComparisonFunction, name: str | None = None) -> ComparisonFunction:
    """The inverse of a K-infinity function, as a comparison function."""
    tag = "K_infinity" if f.class_tag == "K_infinity" else "generic"
    if f._inverse_hint is not None:
        return ComparisonFunction(f._inverse_hint, class_tag=tag,
                                  name=name or f"{f.name}^-1")
    return ComparisonFunction(lambda y: inverse(f, y), class_tag=tag,
                              name=name or f"{f.name}^-1")


def compose(f: ComparisonFunction, g: ComparisonFunction, name: str | None = None) -> ComparisonFunction:
    """(f o g)(s) = f(g(s)); K-infinity is preserved, K is preserved."""
    if f.class_tag == "K_infinity" and g.class_tag == "K_infinity":
        tag = "K_infinity"
    elif f.class_tag in ("K", "K_infinity") and g.class_tag in ("K", "K_infinity"):
        tag = "K"
    else:
        tag = "generic"
    hint = None
    if f._inverse_hint is not None and g._inverse_hint is not None:
        fh, gh = f._inverse_hint, g._inverse_hint
        hint = lambda y: gh(fh(y))
    return ComparisonFunction(lambda s: f.eval(g.eval(s)), class_tag=tag,
                              name=name or f"{f.name}∘{g.name}",
                              domain_hint=g.domain_hint, inverse_hint=hint)


def pointwise_max(f: ComparisonFunction, g: ComparisonFunction, name: str | None = None) -> ComparisonFunction:
    if f.class_tag == "K_infinity" and g.class_tag == "K_infinity":
        tag = "K_infinity"
    elif f.class_tag in ("K", "K_infinity") and g.class_tag in ("K", "K_infinity"):
        tag = "K"
    else:
        tag = "generic"
    return ComparisonFunction(lambda s: max(f.eval(s), g.eval(s)), class_tag=tag,
                              name=name or f"max({f.name},{g.name})",
                              domain_hint=max(f.domain_hint, g.domain_hint))


@dataclass(frozen=True)
class ClassReport:
    """Result of a grid class check; empty violations mean "passed on grid"."""

    name: str
    tag: str
    violations: tuple = ()
    notes: tuple = ()

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_class(f: ComparisonFunction, tag: str, grid) -> ClassReport:
    """Check the class properties of f on a finite grid.

    Violations carry (property, witness point(s), detail).  K-infinity
    unboundedness cannot be certified on a grid; a note records that the
    growth was only observed up to the largest grid point.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ArgumentError("empty certification grid")
    if np.any(grid < 0):
        raise ArgumentError("certification grid must be nonnegative")
    if np.any(np.diff(grid) < 0):
        raise ArgumentError("certification grid must be sorted")

    violations: list[tuple] = []
    notes: list[str] = []

    def value(s):
        try:
            return f.eval(s)
        except ClassViolationError:
            return -math.inf  # negative output; recorded below

    if tag in ("K", "K_infinity", "P"):
        v0 = value(0.0)
        if not math.isclose(v0, 0.0, abs_tol=1e-12):
            violations.append(("zero_at_zero", 0.0, f"f(0) = {v0}"))

    pos = grid[grid > 0]
    vals = np.array([value(s) for s in pos])
    if np.any(vals < 0):
        idx = int(np.argmax(vals < 0))
        violations.append(("nonnegative", float(pos[idx]), f"f = {vals[idx]}"))

    if tag in ("K", "K_infinity"):
        diffs = np.diff(vals)
        if np.any(diffs <= 0):
            idx = int(np.argmax(diffs <= 0))
            violations.append(("strictly_increasing",
                               (float(pos[idx]), float(pos[idx + 1])),
                               f"f({pos[idx]}) = {vals[idx]}, f({pos[idx+1]}) = {vals[idx+1]}"))
        if tag == "K_infinity" and pos.size:
            notes.append(
                f"unboundedness not certifiable on a grid; observed up to f({pos[-1]:g}) = {vals[-1]:g}")
    elif tag == "P":
        if np.any(vals <= 0):
            idx = int(np.argmax(vals <= 0))
            violations.append(("positive_definite", float(pos[idx]), f"f = {vals[idx]}"))
    elif tag != "generic":
        raise ArgumentError(f"unknown class tag {tag!r}")

    return ClassReport(name=f.name, tag=tag, violations=tuple(violations), notes=tuple(notes))


class KLFunction:
    """Two-argument comparison function: class K in r, decreasing to zero in s."""

    __slots__ = ("_fn", "name")

    def __init__(self, fn: Callable[[float, float], float], name: str = "beta"):
        self._fn = fn
        self.name = name

    def eval(self, r: float, s: float) -> float:
        if r < 0 or s < 0:
            raise DomainError(f"{self.name}: arguments must be nonnegative, got ({r}, {s})")
        v = float(self._fn(float(r), float(s)))
        return 0.0 if -1e-12 < v < 0.0 else v

    __call__ = eval

    def verify(self, r_grid, s_grid) -> ClassReport:
        """Grid check: class K in r for each fixed s, non-increasing in s for each fixed r."""
        r_grid = np.asarray(r_grid, dtype=float)
        s_grid = np.asarray(s_grid, dtype=float)
        violations: list[tuple] = []
        for s in s_grid:
            section = ComparisonFunction(lambda r, s=s: self._fn(r, s), name=f"{self.name}(.,{s:g})")
            rep = verify_class(section, "K", r_grid)
            violations.extend(rep.violations)
        for r in r_grid[r_grid > 0]:
            vals = np.array([self.eval(r, s) for s in s_grid])
            if np.any(np.diff(vals) > 1e-12 * np.maximum(1.0, np.abs(vals[:-1]))):
                idx = int(np.argmax(np.diff(vals) > 0))
                violations.append(("nonincreasing_in_s", (float(r), float(s_grid[idx])),
                                   f"{vals[idx]} -> {vals[idx+1]}"))
        notes = ("decay to zero checked only up to the s-grid horizon",)
        return ClassReport(name=self.name, tag="KL", violations=tuple(violations), notes=notes)


# --- config-facing constructors -------------------------------------------------

def parse_comparison(spec: str) -> ComparisonFunction:
    """Build a named comparison function from a config string.

    Forms: "identity", "linear:a", "power:c,p", "expm1:c,k", "table:<path>".
    Numeric fields are plain floats (note: "4e5" is the float 400000.0).
    """
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    try:
        if kind == "identity":
            return identity()
        if kind == "linear":
            return linear(float(rest))
        if kind == "power":
            c, p = (float(x) for x in rest.split(","))
            return power(c, p)
        if kind == "expm1":
            c, k = (float(x) for x in rest.split(","))
            return expm1_scaled(c, k)
        if kind == "table":
            return load_table(rest.strip())
    except (ValueError, TypeError) as exc:
        raise ArgumentError(f"bad comparison spec {spec!r}: {exc}") from exc
    raise ArgumentError(f"unknown comparison function kind {kind!r}")


def parse_rate(spec: str) -> Callable[[float], float]:
    """Build a (possibly sign-indefinite) scalar rate from a config string.

    Forms: "linear:a" with any nonzero a, or any parse_comparison spec.
    """
    kind, _, rest = spec.partition(":")
    if kind.strip() == "linear":
        a = float(rest)
        if a == 0:
            raise ArgumentError("rate slope must be nonzero")
        return lambda v: a * v
    f = parse_comparison(spec)
    return f.eval
