"""Adaptive 1D quadrature tuned for Lévy-density integrands.

Every Lévy integral in the package routes through this module: plain finite
intervals, semi-infinite tails via a rational map, regions of the form
``{|zeta| >= a}`` or a half-line resolved from ``{gamma(x, zeta) >= y}``, and
compensated integrals ``int psi(z) z^2 hbar(z) dz`` whose density blows up at
the origin.

Integrands are called with a numpy array of abscissae and must return an
array of the same shape.  Panels use an embedded Gauss7/Kronrod15 pair; the
error estimate is the sum of panel discrepancies, and panel contributions are
accumulated in interval order so results do not depend on refinement order.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace

import numpy as np


class QuadratureError(RuntimeError):
    """Hard numeric failure (non-finite integrand value, bad interval)."""


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_evaluations: int = 10**6
    tail_map: float = 1.0  # scale of the rational map for semi-infinite tails

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_evaluations < 100:
            raise ValueError("max_evaluations must be >= 100")
        if self.tail_map <= 0:
            raise ValueError("tail_map must be positive")

    def scaled(self, factor: float) -> "QuadratureConfig":
        """Config with both tolerances multiplied by ``factor``."""
        return replace(self, abs_tol=self.abs_tol * factor, rel_tol=self.rel_tol * factor)


DEFAULT_CONFIG = QuadratureConfig()


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int
    converged: bool

    def __add__(self, other):
        if isinstance(other, QuadratureResult):
            return QuadratureResult(
                self.value + other.value,
                self.abs_error_estimate + other.abs_error_estimate,
                self.evaluations + other.evaluations,
                self.converged and other.converged,
            )
        return NotImplemented


_ZERO_RESULT = QuadratureResult(0.0, 0.0, 0, True)


# Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (positive half; symmetric).
_XGK = np.array([
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.0,
])
_WGK = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
])
_WG = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])  # 15 ascending nodes
_W_KRON = np.concatenate([_WGK[:-1], _WGK[::-1]])
_W_GAUSS = np.zeros(15)
# Gauss nodes sit at the odd Kronrod positions (indices 1,3,...,13).
_W_GAUSS[1:14:2] = np.concatenate([_WG[:-1], _WG[::-1]])


def _check_finite(fv, xv):
    bad = ~np.isfinite(fv)
    if np.any(bad):
        where = float(np.asarray(xv)[bad][0])
        raise QuadratureError(f"integrand returned a non-finite value at x={where!r}")


def _panel(f, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    xs = c + h * _NODES
    fv = np.asarray(f(xs), dtype=float)
    _check_finite(fv, xs)
    kron = h * float(fv @ _W_KRON)
    gauss = h * float(fv @ _W_GAUSS)
    err = abs(kron - gauss)
    # discrepancy can't be trusted below the rounding floor of the panel sum
    floor = abs(h) * float(np.abs(fv) @ _W_KRON) * 5e-16
    return kron, max(err, floor)


def integrate_adaptive(f, a: float, b: float, cfg: QuadratureConfig | None = None) -> QuadratureResult:
    """Adaptive bisection with a Gauss7/Kronrod15 pair on each panel.

    ``f`` is evaluated on numpy arrays of abscissae strictly inside (a, b).
    Non-finite integrand values raise QuadratureError with the offending
    abscissa; exceeding the evaluation budget returns ``converged=False``.
    """
    cfg = cfg or DEFAULT_CONFIG
    if not (np.isfinite(a) and np.isfinite(b)):
        raise QuadratureError("integrate_adaptive needs finite endpoints")
    if not a < b:
        if a == b:
            return _ZERO_RESULT
        raise QuadratureError(f"bad interval [{a}, {b}]")

    evals = 0
    val, err = _panel(f, a, b)
    evals += 15
    heap = [(-err, a, b, val, err)]
    total_val, total_err = val, err

    def tol(v):
        return max(cfg.abs_tol, cfg.rel_tol * abs(v))

    while total_err > tol(total_val) and evals + 30 <= cfg.max_evaluations:
        neg_err, pa, pb, pval, perr = heapq.heappop(heap)
        if perr <= 0 or (pb - pa) <= abs(pa) * 1e-15 + 1e-300:
            heapq.heappush(heap, (0.0, pa, pb, pval, perr))
            break
        pm = 0.5 * (pa + pb)
        v1, e1 = _panel(f, pa, pm)
        v2, e2 = _panel(f, pm, pb)
        evals += 30
        total_val += v1 + v2 - pval
        total_err += e1 + e2 - perr
        heapq.heappush(heap, (-e1, pa, pm, v1, e1))
        heapq.heappush(heap, (-e2, pm, pb, v2, e2))

    # deterministic accumulation: re-sum panels ordered by position
    panels = sorted(heap, key=lambda p: p[1])
    total_val = math.fsum(p[3] for p in panels)
    total_err = math.fsum(p[4] for p in panels)
    return QuadratureResult(total_val, total_err, evals, total_err <= tol(total_val))


def _tail_wrap(f, a, scale, sign):
    """Integrand on u in (0,1) for x = a + sign*scale*u/(1-u)."""

    def g(u):
        w = u / (1.0 - u)
        x = a + sign * scale * w
        jac = scale / (1.0 - u) ** 2
        fv = np.asarray(f(x), dtype=float)
        # decayed integrand kills the growing jacobian; avoid 0*inf
        out = np.where(fv == 0.0, 0.0, fv * jac)
        return out

    return g


def integrate_semi_infinite(f, a: float, cfg: QuadratureConfig | None = None,
                            direction: int = +1) -> QuadratureResult:
    """Integral of f over [a, +inf) (direction=+1) or (-inf, a] (direction=-1).

    Uses the rational substitution x = a +/- s*u/(1-u) with s = tail_map *
    max(1, |a|); the integrand must decay at infinity.
    """
    cfg = cfg or DEFAULT_CONFIG
    scale = cfg.tail_map * max(1.0, abs(a))
    return integrate_adaptive(_tail_wrap(f, a, scale, +1 if direction >= 0 else -1), 0.0, 1.0, cfg)


def integrate_log(f, lo: float, hi: float, cfg: QuadratureConfig | None = None) -> QuadratureResult:
    """Integral of f over [lo, hi] with 0 < lo < hi via the substitution z = e^u.

    Suited to integrands with power-law behaviour toward 0.
    """
    if not (0 < lo < hi):
        raise QuadratureError("integrate_log needs 0 < lo < hi")

    def g(u):
        z = np.exp(u)
        return np.asarray(f(z), dtype=float) * z

    return integrate_adaptive(g, math.log(lo), math.log(hi), cfg)


# ---------------------------------------------------------------------------
# region descriptions for Lévy-tail integrals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AbsTail:
    """The set {zeta: |zeta| >= a} with a > 0."""
    a: float


@dataclass(frozen=True)
class HalfLine:
    """[c, inf) when direction=+1, (-inf, c] when direction=-1."""
    c: float
    direction: int = +1


@dataclass(frozen=True)
class EmptyRegion:
    pass


@dataclass(frozen=True)
class FullLine:
    """All of R; only meaningful for densities vanishing near 0."""
    inner_gap: float = 0.0  # density known to vanish on (-gap, gap)


def integrate_levy_tail(f, h, region, cfg: QuadratureConfig | None = None) -> QuadratureResult:
    """Integral of f(z) h(z) dz over a region bounded away from the origin.

    ``region`` is AbsTail, HalfLine, FullLine (h must vanish near 0, e.g. a
    truncated density) or EmptyRegion.  Half-line regions typically come from
    resolving {gamma(x, zeta) >= y} with the model's inverse jump map.
    """
    cfg = cfg or DEFAULT_CONFIG

    def fh(z):
        return np.asarray(f(z), dtype=float) * np.asarray(h(z), dtype=float)

    if isinstance(region, EmptyRegion):
        return _ZERO_RESULT
    if isinstance(region, AbsTail):
        if region.a <= 0:
            raise QuadratureError("AbsTail needs a > 0")
        up = integrate_semi_infinite(fh, region.a, cfg, +1)
        dn = integrate_semi_infinite(fh, -region.a, cfg, -1)
        return up + dn
    if isinstance(region, HalfLine):
        if region.direction >= 0:
            if region.c > 0:
                return integrate_semi_infinite(fh, region.c, cfg, +1)
            # crossing the origin is only legal for truncated densities
            return _split_across_origin(fh, region.c, cfg, upward=True)
        if region.c < 0:
            return integrate_semi_infinite(fh, region.c, cfg, -1)
        return _split_across_origin(fh, region.c, cfg, upward=False)
    if isinstance(region, FullLine):
        gap = max(region.inner_gap, 1e-300)
        up = integrate_semi_infinite(fh, gap, cfg, +1)
        dn = integrate_semi_infinite(fh, -gap, cfg, -1)
        return up + dn
    raise TypeError(f"unknown region {region!r}")


def _split_across_origin(fh, c, cfg, upward: bool) -> QuadratureResult:
    """[c, inf) with c <= 0 (or mirrored): split at 0, leaning on fh(0)=0."""
    tiny = 1e-300
    if upward:
        left = integrate_adaptive(fh, c, -tiny, cfg) if c < -tiny else _ZERO_RESULT
        right = integrate_semi_infinite(fh, tiny, cfg, +1)
    else:
        left = integrate_semi_infinite(fh, -tiny, cfg, -1)
        right = integrate_adaptive(fh, tiny, c, cfg) if c > tiny else _ZERO_RESULT
    return left + right


# ---------------------------------------------------------------------------
# compensated (zeta^2-weighted) integrals
# ---------------------------------------------------------------------------

_LOG_DEPTH = 60.0  # integrate e^u panels down to ln(split) - 60


def integrate_compensated(psi, hbar, bound: float, cfg: QuadratureConfig | None = None,
                          split: float | None = None, sides=(-1, +1)) -> QuadratureResult:
    """``int psi(z) z^2 hbar(z) dz`` over {|z| <= bound} (chosen sides).

    ``psi`` must stay bounded near 0; the z^2 factor makes the integrand
    integrable even though hbar typically blows up like |z|^(-1-alpha).
    Panels abutting the origin use the substitution z = +/- e^u, which turns
    the blow-up into exponential decay.  ``split`` is the hand-off point
    between the plain and substituted panels (default bound/2).
    """
    cfg = cfg or DEFAULT_CONFIG
    if bound <= 0:
        return _ZERO_RESULT
    if split is None:
        split = 0.5 * bound
    split = min(split, bound)
    if split <= 0:
        raise QuadratureError("split point must be positive")

    total = _ZERO_RESULT
    for sgn in sides:
        def f_plain(z, s=sgn):
            zz = s * z
            return np.asarray(psi(zz), dtype=float) * z * z * np.asarray(hbar(zz), dtype=float)

        if split < bound:
            total = total + integrate_adaptive(f_plain, split, bound, cfg)

        def f_log(u, s=sgn):
            z = np.exp(u)
            zz = s * z
            return (np.asarray(psi(zz), dtype=float) * z * z
                    * np.asarray(hbar(zz), dtype=float) * z)

        lo_u = math.log(split) - _LOG_DEPTH
        total = total + integrate_adaptive(f_log, lo_u, math.log(split), cfg)
    return total


def gauss_legendre_unit(n: int = 16):
    """Nodes/weights on [0, 1]; used for smooth inner beta-integrals."""
    xs, ws = np.polynomial.legendre.leggauss(n)
    return 0.5 * (xs + 1.0), 0.5 * ws


BETA_NODES, BETA_WEIGHTS = gauss_legendre_unit(16)
