"""Monotone integral transforms of decay rates and the ISS gain assembly.

The central object is F(q) = integral from 1 to q of ds / rate(s) for a rate
that is positive away from zero.  F is strictly increasing, so it has an
inverse on its image; the lower limit m = lim_{q -> 0+} F(q) decides between
the plain decay bound and the exponential-relaxation bound used to build a
KL estimate, and the ISS gains are assembled from it together with the
sandwich and gate certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import comparison
from .comparison import ComparisonFunction, KLFunction
from .errors import ArgumentError, DomainError, ImageError, RateSignError

DEFAULT_QUAD_TOL = 1e-10
_SIMPSON_DEPTH_CAP = 40
_DIVERGENCE_FLOOR = -1e6
# contraction required of the epsilon-ladder difference ratios before the
# geometric tail extrapolation is trusted
_TAIL_RATIO_MAX = 0.95


def _adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float) -> float:
    """Adaptive Simpson quadrature on [a, b] with error target ~tol (absolute)."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, fa, m, fm, b, fb, S, eps, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        Sl = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        Sr = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = Sl + Sr - S
        if depth <= 0 or abs(err) <= 15.0 * eps:
            return Sl + Sr + err / 15.0
        return (rec(a, fa, lm, flm, m, fm, Sl, 0.5 * eps, depth - 1)
                + rec(m, fm, rm, frm, b, fb, Sr, 0.5 * eps, depth - 1))

    eps = max(tol, 1e-300)
    return rec(a, fa, m, fm, b, fb, whole, eps, _SIMPSON_DEPTH_CAP)


class MonotoneTransform:
    """F(q) = integral_1^q ds / rate(s) with cached knot table and inverse.

    Immutable in spirit: the knot table is built eagerly over [1e-9, 1e9]
    and only ever extended (append-only), so concurrent evaluation is safe.
    """

    def __init__(self, rate: Callable[[float], float], quad_tol: float = DEFAULT_QUAD_TOL,
                 name: str = "F"):
        if quad_tol <= 0:
            raise ArgumentError(f"quad_tol must be positive, got {quad_tol}")
        self.rate = rate.eval if isinstance(rate, ComparisonFunction) else rate
        self.quad_tol = float(quad_tol)
        self.name = name
        self._probe_rate_sign()
        self.m = self._lower_limit()
        # 64 log-spaced bracket knots, with 1.0 pinned so F(1) = 0 exactly
        knots = np.unique(np.concatenate([np.logspace(-9.0, 9.0, 64), [1.0]]))
        self._knots = list(knots)
        self._values = self._cumulative_values(self._knots)

    # -- construction helpers ---------------------------------------------

    def _probe_rate_sign(self):
        for s in np.logspace(-9.0, 9.0, 181):
            r = self.rate(float(s))
            if not (r > 0.0) or not math.isfinite(r):
                raise RateSignError(f"{self.name}: rate({s:g}) = {r} is not positive")

    def _integrand(self, s: float) -> float:
        r = self.rate(s)
        if not (r > 0.0):
            raise RateSignError(f"{self.name}: rate({s:g}) = {r} is not positive")
        return 1.0 / r

    def between(self, a: float, b: float) -> float:
        """Directed integral of 1/rate over [a, b] (negative when b < a)."""
        if a < 0 or b < 0:
            raise DomainError(f"{self.name}: integration limits must be nonnegative")
        if a == b:
            return 0.0
        if b < a:
            return -self.between(b, a)
        lo_est = min(self._integrand(a), self._integrand(b)) * (b - a)
        return _adaptive_simpson(self._integrand, a, b, self.quad_tol * max(abs(lo_est), 1e-16))

    def _cumulative_values(self, knots) -> list[float]:
        vals = [0.0] * len(knots)
        i1 = knots.index(1.0)
        for i in range(i1 - 1, -1, -1):
            vals[i] = vals[i + 1] - self.between(knots[i], knots[i + 1])
        for i in range(i1 + 1, len(knots)):
            vals[i] = vals[i - 1] + self.between(knots[i - 1], knots[i])
        return vals

    def _lower_limit(self) -> float:
        """lim_{q -> 0+} F(q) via the epsilon ladder eps = 10^-k, k = 1..12.

        Divergence is declared when a partial value falls below -1e6 or the
        ladder differences stop contracting geometrically; otherwise the
        geometric tail is summed in closed form (exact for power-law rates).
        """
        ladder = []
        acc = 0.0
        for k in range(1, 13):
            acc -= self.between(10.0 ** (-k), 10.0 ** (-k + 1))
            if acc < _DIVERGENCE_FLOOR:
                return -math.inf
            ladder.append(acc)
        d = np.diff(ladder)  # negative, magnitude shrinking iff convergent
        if abs(d[-1]) <= 1e-12:
            return ladder[-1]
        if d[-2] == 0.0 or d[-3] == 0.0:
            return ladder[-1]
        r1 = d[-1] / d[-2]
        r2 = d[-2] / d[-3]
        if not (0.0 < r1 < _TAIL_RATIO_MAX and 0.0 < r2 < _TAIL_RATIO_MAX):
            return -math.inf
        tail = d[-1] * r1 / (1.0 - r1)
        if abs(tail) > 1.0:
            return -math.inf
        return float(ladder[-1] + tail)

    # -- evaluation --------------------------------------------------------

    def value(self, q: float) -> float:
        if q < 0:
            raise DomainError(f"{self.name}: argument must be nonnegative, got {q}")
        if q == 0.0:
            return self.m
        i = int(np.searchsorted(self._knots, q, side="right")) - 1
        if i < 0:
            return self._values[0] - self.between(q, self._knots[0])
        if q == self._knots[i]:
            return self._values[i]
        return self._values[i] + self.between(self._knots[i], q)

    def _extend_down(self) -> bool:
        lo = self._knots[0] * 0.1
        if lo < 1e-308 or lo <= 0.0:
            return False
        v = self._values[0] - self.between(lo, self._knots[0])
        self._knots.insert(0, lo)
        self._values.insert(0, v)
        return True

    def _extend_up(self) -> bool:
        hi = self._knots[-1] * 10.0
        if hi > 1e300:
            return False
        v = self._values[-1] + self.between(self._knots[-1], hi)
        self._knots.append(hi)
        self._values.append(v)
        return True

    def inverse(self, y: float, tol: float = comparison.TOL_INV) -> float:
        """q >= 0 with |F(q) - y| <= tol * max(1, |y|); y = m (finite) maps to 0."""
        if math.isfinite(self.m):
            scale_m = max(1.0, abs(self.m))
            if y < self.m - 1e-9 * scale_m:
                raise ImageError(f"{self.name}: y = {y} below lower limit m = {self.m}")
            if y <= self.m + 1e-12 * scale_m:
                return 0.0
        while y < self._values[0]:
            if not self._extend_down():
                # image unreachable within double range; the preimage underflows
                return 0.0
        while y > self._values[-1]:
            if not self._extend_up():
                raise ImageError(f"{self.name}: y = {y} above reachable image "
                                 f"(F({self._knots[-1]:g}) = {self._values[-1]:g})")
        i = int(np.searchsorted(self._values, y)) - 1
        i = max(0, min(i, len(self._knots) - 2))
        lo, hi = self._knots[i], self._knots[i + 1]
        q = math.sqrt(lo * hi)
        vq = self._values[i] + self.between(lo, q)
        scale = max(1.0, abs(y))
        for _ in range(comparison.MAX_INV_ITER):
            err = vq - y
            newton = err * self.rate(q)
            # the Newton displacement measures the q-space error directly,
            # which matters where 1/rate is tiny and y barely moves with q
            if abs(err) <= tol * scale and abs(newton) <= 1e-12 * max(abs(q), 1e-300):
                return q
            if err > 0:
                hi = q
            else:
                lo = q
            q_new = q - newton
            if not (lo < q_new < hi):
                q_new = math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
            vq += self.between(q, q_new)
            q = q_new
            if hi - lo <= 1e-15 * max(abs(hi), 1.0):
                return q
        return q


def build_transform(rate, quad_tol: float = DEFAULT_QUAD_TOL, name: str = "F") -> MonotoneTransform:
    """Construct the monotone transform of a positive rate."""
    return MonotoneTransform(rate, quad_tol=quad_tol, name=name)


def transform_inverse(T: MonotoneTransform, y: float) -> float:
    return T.inverse(y)


def build_beta_tilde(T: MonotoneTransform) -> KLFunction:
    """KL decay bound induced by the transform.

    For m = -inf the plain form F^{-1}(F(v0) - tau); for finite m the
    exponential relaxation that approaches m only asymptotically, so the
    bound stays positive for finite tau and tends to zero as tau grows.
    """

    def bt(v0: float, tau: float) -> float:
        if v0 <= 0.0:
            return 0.0
        if tau <= 0.0:
            return v0
        F0 = T.value(v0)
        if T.m == -math.inf:
            arg = F0 - tau
        else:
            span = F0 - T.m
            if span <= 0.0:
                return 0.0
            arg = F0 - span * (-math.expm1(-tau / span))
            arg = max(arg, T.m)
        return T.inverse(arg)

    return KLFunction(bt, name=f"beta_tilde[{T.name}]")


@dataclass(frozen=True)
class IssGains:
    """The (beta, gamma) pair of an ISS estimate."""

    beta: KLFunction
    gamma: ComparisonFunction


def build_iss_gains(alpha1: ComparisonFunction, alpha2: ComparisonFunction,
                    alpha3: ComparisonFunction, chi: ComparisonFunction,
                    beta_tilde: KLFunction) -> IssGains:
    """Assemble beta(r, s) = alpha1^{-1}(beta_tilde(alpha2(r), s)) and
    gamma = alpha1^{-1} o max{alpha3, chi}."""
    for f, label in ((alpha1, "alpha1"), (alpha2, "alpha2"), (chi, "chi")):
        if f.class_tag != "K_infinity":
            raise ArgumentError(f"{label} must be class K-infinity, got tag {f.class_tag}")
    inv1 = comparison.inverse_fn(alpha1)
    beta = KLFunction(lambda r, s: inv1.eval(beta_tilde.eval(alpha2.eval(r), s)), name="beta")
    gamma = comparison.compose(inv1, comparison.pointwise_max(alpha3, chi), name="gamma")
    return IssGains(beta=beta, gamma=gamma)
