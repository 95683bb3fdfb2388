"""Local jump-diffusion model specifications.

A model is the tuple (drift b, volatility sigma, jump map gamma(x, zeta),
Lévy density h) with derivative accessors, non-degeneracy constants, and the
derived objects the expansion formulas need: the inverse jump map, the
pre-jump state map, and the process Lévy density

    g(x; y) = h(gamma_inv(x, y)) / |d_zeta gamma(x, gamma_inv(x, y))|.

Presets: ``pure-levy-tempered-stable``, ``state-dependent-tanh`` and
``exp-levy-pricing``; custom models load from JSON with expression strings.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import numint
from .expressions import compile_bivariate, compile_univariate

TOL_ROOT = 1e-12
_MAX_BRACKET = 200
_MAX_NEWTON = 200


class JumpRangeError(ValueError):
    """Requested value is outside the range of zeta -> gamma(x, zeta)."""


class RootFindingError(RuntimeError):
    """Bracketed Newton/bisection failed to converge."""


def _fd_step(x):
    return np.maximum(1e-6, 1e-6 * np.abs(x))


@dataclass(frozen=True)
class ScalarFunc:
    """Scalar function with optional analytic first/second derivatives.

    Missing derivatives fall back to central differences with step
    max(1e-6, 1e-6*|x|) and the standard 3-point stencil for order two.
    """

    fn: object
    d1: object = None
    d2: object = None
    name: str = ""

    def __call__(self, x):
        return self.fn(x)

    def deriv1(self, x):
        if self.d1 is not None:
            return self.d1(x)
        h = _fd_step(x)
        return (self.fn(x + h) - self.fn(x - h)) / (2.0 * h)

    def deriv2(self, x):
        if self.d2 is not None:
            return self.d2(x)
        h = _fd_step(x)
        return (self.fn(x + h) - 2.0 * self.fn(x) + self.fn(x - h)) / (h * h)

    @property
    def analytic(self):
        return self.d1 is not None and self.d2 is not None


def constant_func(value: float, name: str = "") -> ScalarFunc:
    v = float(value)
    return ScalarFunc(
        fn=lambda x: v + 0.0 * np.asarray(x, dtype=float),
        d1=lambda x: 0.0 * np.asarray(x, dtype=float),
        d2=lambda x: 0.0 * np.asarray(x, dtype=float),
        name=name,
    )


@dataclass(frozen=True)
class JumpFunc:
    """Bivariate jump map gamma(x, zeta) with partial-derivative accessors."""

    fn: object
    dx: object = None
    dz: object = None
    dxx: object = None
    dzz: object = None
    dxz: object = None

    def __call__(self, x, z):
        return self.fn(x, z)

    def d_x(self, x, z):
        if self.dx is not None:
            return self.dx(x, z)
        h = _fd_step(x)
        return (self.fn(x + h, z) - self.fn(x - h, z)) / (2.0 * h)

    def d_z(self, x, z):
        if self.dz is not None:
            return self.dz(x, z)
        h = _fd_step(z)
        return (self.fn(x, z + h) - self.fn(x, z - h)) / (2.0 * h)

    def d_xx(self, x, z):
        if self.dxx is not None:
            return self.dxx(x, z)
        h = _fd_step(x)
        return (self.fn(x + h, z) - 2.0 * self.fn(x, z) + self.fn(x - h, z)) / (h * h)

    def d_zz(self, x, z):
        if self.dzz is not None:
            return self.dzz(x, z)
        h = _fd_step(z)
        return (self.fn(x, z + h) - 2.0 * self.fn(x, z) + self.fn(x, z - h)) / (h * h)

    def d_xz(self, x, z):
        if self.dxz is not None:
            return self.dxz(x, z)
        hx, hz = _fd_step(x), _fd_step(z)
        return (self.fn(x + hx, z + hz) - self.fn(x + hx, z - hz)
                - self.fn(x - hx, z + hz) + self.fn(x - hx, z - hz)) / (4.0 * hx * hz)

    @property
    def analytic(self):
        return all(d is not None for d in (self.dx, self.dz, self.dxx, self.dzz, self.dxz))


@dataclass(frozen=True)
class Regularity:
    """Non-degeneracy constants: |d_zeta gamma| >= delta_jump,
    |1 + d_x gamma| >= delta_flow, sigma >= delta_vol."""

    delta_jump: float
    delta_flow: float
    delta_vol: float


@dataclass(frozen=True)
class ModelSpec:
    drift: ScalarFunc
    vol: ScalarFunc
    jump_gen: JumpFunc
    levy_density: ScalarFunc
    regularity: Regularity
    x_free_jumps: bool = False
    name: str = "custom"

    def v(self, x):
        """Half squared volatility sigma^2(x)/2."""
        s = self.vol(x)
        return 0.5 * s * s

    @property
    def jump_sign(self) -> int:
        """Sign of d_zeta gamma; constant by non-degeneracy + continuity."""
        return 1 if float(self.jump_gen.d_z(0.0, 1.0)) >= 0 else -1

    @property
    def analytic_chain(self) -> bool:
        """True when g and its first x/y derivatives have exact chain rules."""
        return self.levy_density.d1 is not None and self.jump_gen.analytic


# ---------------------------------------------------------------------------
# inverse maps and the process Lévy density
# ---------------------------------------------------------------------------

def _bracketed_newton(f, df, lo, hi, flo, fhi, tol):
    """Monotone root of f in [lo, hi] to |f| <= tol; Newton with bisection
    safeguard.  f(lo), f(hi) must straddle zero."""
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise RootFindingError("root not bracketed")
    z = 0.5 * (lo + hi)
    for _ in range(_MAX_NEWTON):
        fz = f(z)
        if abs(fz) <= tol:
            return z
        if fz * flo > 0:
            lo, flo = z, fz
        else:
            hi, fhi = z, fz
        d = df(z)
        step_ok = d != 0 and np.isfinite(d)
        if step_ok:
            zn = z - fz / d
            step_ok = lo < zn < hi
        z = zn if step_ok else 0.5 * (lo + hi)
        if hi - lo <= 1e-16 * max(1.0, abs(lo), abs(hi)):
            return z
    raise RootFindingError(f"no convergence to |f|<={tol} (last z={z}, f={f(z)})")


def gamma_inverse(model: ModelSpec, x: float, y: float, tol: float = TOL_ROOT,
                  z0: float | None = None) -> float:
    """Solve gamma(x, zeta) = y for zeta.

    Monotonicity of zeta -> gamma(x, zeta) makes the root unique; the bracket
    grows geometrically from 0 and failure to bracket means y is outside the
    reachable range (JumpRangeError).  ``z0`` is an optional warm start: a few
    plain Newton steps are tried from it before falling back to bracketing.
    """
    g = model.jump_gen
    if y == 0.0:
        return 0.0
    s = model.jump_sign

    def f(z):
        return float(g(x, z)) - y

    def df(z):
        return float(g.d_z(x, z))

    if z0 is not None and np.isfinite(z0):
        z = float(z0)
        for _ in range(8):
            fz = f(z)
            if abs(fz) <= tol:
                return z
            d = df(z)
            if d == 0 or not np.isfinite(d):
                break
            z = z - fz / d

    side = 1.0 if s * y > 0 else -1.0
    lo = 0.0
    flo = -y
    step = max(abs(y) / max(model.regularity.delta_jump, 1e-12), 1e-6)
    hi = side * step
    fhi = f(hi)
    n = 0
    while flo * fhi > 0:
        lo, flo = hi, fhi
        hi = hi * 2.0
        fhi = f(hi)
        n += 1
        if n > _MAX_BRACKET or not np.isfinite(fhi):
            raise JumpRangeError(f"y={y} outside the range of gamma({x}, .)")
    if side > 0:
        return _bracketed_newton(f, df, lo, hi, flo, fhi, tol)
    return _bracketed_newton(f, df, hi, lo, fhi, flo, tol)


def bar_gamma(model: ModelSpec, u: float, zeta: float, tol: float = TOL_ROOT) -> float:
    """Pre-jump state: the z solving z + gamma(z, zeta) = u."""
    g = model.jump_gen
    if zeta == 0.0:
        return float(u)

    def f(z):
        return z + float(g(z, zeta)) - u

    def df(z):
        return 1.0 + float(g.d_x(z, zeta))

    # z -> z + gamma(z, zeta) is increasing (1 + d_x gamma > 0 at zeta=0,
    # nonvanishing everywhere), so bracket around u
    f_u = f(u)
    if abs(f_u) <= tol:
        return float(u)
    step = max(abs(f_u) / max(model.regularity.delta_flow, 1e-12), 1e-6)
    if f_u > 0:
        hi, fhi = u, f_u
        lo = u - step
        flo = f(lo)
        n = 0
        while flo > 0:
            hi, fhi = lo, flo
            step *= 2.0
            lo = u - step
            flo = f(lo)
            n += 1
            if n > _MAX_BRACKET:
                raise RootFindingError("bar_gamma bracket expansion failed")
    else:
        lo, flo = u, f_u
        hi = u + step
        fhi = f(hi)
        n = 0
        while fhi < 0:
            lo, flo = hi, fhi
            step *= 2.0
            hi = u + step
            fhi = f(hi)
            n += 1
            if n > _MAX_BRACKET:
                raise RootFindingError("bar_gamma bracket expansion failed")
    return _bracketed_newton(f, df, lo, hi, flo, fhi, tol)


def bar_gamma_du(model: ModelSpec, u: float, zeta: float, z: float | None = None) -> float:
    """d/du of bar_gamma(u, zeta) = 1/(1 + d_x gamma(bar_gamma(u, zeta), zeta))."""
    if z is None:
        z = bar_gamma(model, u, zeta)
    return 1.0 / (1.0 + float(model.jump_gen.d_x(z, zeta)))


def process_levy_density(model: ModelSpec, x: float, y: float) -> float:
    """g(x; y) = h(gamma_inv) / |d_zeta gamma(x, gamma_inv)|; 0 off-range."""
    if y == 0.0:
        raise ValueError("process Lévy density is undefined at y=0")
    try:
        p = gamma_inverse(model, x, y)
    except JumpRangeError:
        return 0.0
    dz = float(model.jump_gen.d_z(x, p))
    return float(model.levy_density(p)) / abs(dz)


def jump_region(model: ModelSpec, x: float, y: float, tol: float = TOL_ROOT):
    """Resolve {zeta: gamma(x, zeta) >= y} into a half-line (or empty/full)."""
    s = model.jump_sign
    try:
        p = gamma_inverse(model, x, y, tol)
    except JumpRangeError:
        # y above the range: empty; below the range: everything
        probe = float(model.jump_gen(x, s * 1.0))
        big = float(model.jump_gen(x, s * 64.0))
        return numint.EmptyRegion() if y > max(probe, big) else numint.FullLine()
    return numint.HalfLine(p, +1 if s > 0 else -1)


# ---------------------------------------------------------------------------
# condition checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionItem:
    name: str
    passed: bool
    worst_value: float
    witness: tuple
    note: str = ""

    def to_dict(self):
        return {
            "pass": bool(self.passed),
            "worst_value": float(self.worst_value),
            "witness": [None if w is None else float(w) for w in self.witness],
            "note": self.note,
        }


@dataclass(frozen=True)
class ConditionReport:
    items: tuple
    grid_shape: tuple

    @property
    def passed(self):
        return all(it.passed for it in self.items)

    def __getitem__(self, name):
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)

    def to_json(self, indent=None):
        payload = {
            "pass": self.passed,
            "conditions": {it.name: it.to_dict() for it in self.items},
        }
        return json.dumps(payload, indent=indent)


def default_grids():
    """x on 41 points of [-2, 2]; zeta on 80 log points per sign in [1e-4, 10]."""
    xg = np.linspace(-2.0, 2.0, 41)
    zp = np.geomspace(1e-4, 10.0, 80)
    zg = np.concatenate([-zp[::-1], zp])
    return xg, zg


def _finite_min(values, xg, zg):
    """(min value, witness) over an (x, zeta) array; non-finite wins as worst."""
    arr = np.asarray(values, dtype=float)
    bad = ~np.isfinite(arr)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        return math.nan, (float(xg[i]), float(zg[j]))
    i, j = np.unravel_index(np.argmin(arr), arr.shape)
    return float(arr[i, j]), (float(xg[i]), float(zg[j]))


def check_conditions(model: ModelSpec, x_grid=None, zeta_grid=None,
                     cfg: numint.QuadratureConfig | None = None,
                     include_c5: bool = True) -> ConditionReport:
    """Evaluate the model's regularity/non-degeneracy conditions on a grid.

    Each reported item carries the worst observed value and the grid point
    achieving it; a non-finite function value marks the condition FAILED with
    that witness.
    """
    xg, zg = default_grids()
    if x_grid is not None:
        xg = np.asarray(x_grid, dtype=float)
    if zeta_grid is not None:
        zg = np.asarray(zeta_grid, dtype=float)
    if xg.size == 0 or zg.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(zg == 0.0):
        raise ValueError("zeta grid must exclude 0")
    cfg = cfg or numint.DEFAULT_CONFIG
    reg = model.regularity
    X, Z = np.meshgrid(xg, zg, indexing="ij")
    items = []

    # C1: strictly positive finite Lévy density, integrable away from 0
    hv = np.asarray(model.levy_density(zg), dtype=float)
    if np.all(np.isfinite(hv)):
        j = int(np.argmin(hv))
        worst, wit = float(hv[j]), (None, float(zg[j]))
        ok = worst > 0.0
        note = ""
        a = float(np.min(np.abs(zg)))
        try:
            mass = numint.integrate_levy_tail(lambda z: np.ones_like(z),
                                              model.levy_density, numint.AbsTail(a), cfg)
            if not (np.isfinite(mass.value) and mass.converged):
                ok = False
                note = f"tail mass over |zeta|>={a:g} did not converge"
            else:
                note = f"nu(|zeta|>={a:g}) = {mass.value:.6g}"
        except numint.QuadratureError as exc:
            ok, note = False, f"tail mass quadrature failed: {exc}"
    else:
        j = int(np.argwhere(~np.isfinite(hv))[0][0])
        worst, wit, ok, note = math.nan, (None, float(zg[j])), False, "non-finite h"
    items.append(ConditionItem("C1", ok, worst, wit, note))

    # C2-a: gamma(x, 0) = 0
    g0 = np.asarray([abs(float(model.jump_gen(float(x), 0.0))) for x in xg])
    if np.all(np.isfinite(g0)):
        i = int(np.argmax(g0))
        items.append(ConditionItem("C2a", bool(g0[i] <= 1e-12), float(g0[i]),
                                   (float(xg[i]), 0.0)))
    else:
        i = int(np.argwhere(~np.isfinite(g0))[0][0])
        items.append(ConditionItem("C2a", False, math.nan, (float(xg[i]), 0.0)))

    # C2-b: |d_zeta gamma| bounded below
    dz = np.abs(np.asarray(model.jump_gen.d_z(X, Z), dtype=float))
    worst, wit = _finite_min(dz, xg, zg)
    items.append(ConditionItem("C2b", bool(worst >= reg.delta_jump), worst, wit,
                               f"threshold delta_jump={reg.delta_jump:g}"))

    # C3: b and v = sigma^2/2 bounded with bounded derivatives (orders 0-2)
    worst_c3, wit_c3, ok_c3 = -math.inf, (None, None), True
    for fn in (model.drift, model.vol):
        for acc in (fn, fn.deriv1, fn.deriv2):
            vals = np.asarray([float(acc(float(x))) for x in xg])
            if not np.all(np.isfinite(vals)):
                i = int(np.argwhere(~np.isfinite(vals))[0][0])
                ok_c3, worst_c3, wit_c3 = False, math.nan, (float(xg[i]), None)
                break
            i = int(np.argmax(np.abs(vals)))
            if abs(vals[i]) > worst_c3:
                worst_c3, wit_c3 = abs(float(vals[i])), (float(xg[i]), None)
        if not ok_c3:
            break
    items.append(ConditionItem("C3", ok_c3, worst_c3, wit_c3,
                               "max |b|, |sigma| and derivatives on the grid"))

    # C4(i): |1 + d_x gamma| bounded below
    flow = np.abs(1.0 + np.asarray(model.jump_gen.d_x(X, Z), dtype=float))
    worst, wit = _finite_min(flow, xg, zg)
    items.append(ConditionItem("C4i", bool(worst >= reg.delta_flow), worst, wit,
                               f"threshold delta_flow={reg.delta_flow:g}"))

    # C4(ii): sigma bounded below
    sv = np.asarray([float(model.vol(float(x))) for x in xg])
    if np.all(np.isfinite(sv)):
        i = int(np.argmin(sv))
        items.append(ConditionItem("C4ii", bool(sv[i] >= reg.delta_vol), float(sv[i]),
                                   (float(xg[i]), None),
                                   f"threshold delta_vol={reg.delta_vol:g}"))
    else:
        i = int(np.argwhere(~np.isfinite(sv))[0][0])
        items.append(ConditionItem("C4ii", False, math.nan, (float(xg[i]), None)))

    # C5: sup_x of the exponential-moment integral over |z| >= 1
    if include_c5:
        worst_c5, wit_c5, ok_c5, note = -math.inf, (None, None), True, ""
        for x in xg:
            def f(z, xx=float(x)):
                return np.exp(3.0 * np.abs(model.jump_gen(xx, z)))

            try:
                r = numint.integrate_levy_tail(f, model.levy_density,
                                               numint.AbsTail(1.0), cfg)
            except numint.QuadratureError as exc:
                ok_c5, worst_c5, wit_c5 = False, math.nan, (float(x), None)
                note = f"quadrature failed: {exc}"
                break
            if not np.isfinite(r.value) or not r.converged:
                ok_c5, worst_c5, wit_c5 = False, math.inf, (float(x), None)
                note = "divergent exponential moment"
                break
            if r.value > worst_c5:
                worst_c5, wit_c5 = r.value, (float(x), None)
        items.append(ConditionItem("C5", ok_c5, worst_c5, wit_c5, note))

    return ConditionReport(tuple(items), (len(xg), len(zg)))


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def tempered_stable_density(c: float, M: float, alpha: float) -> ScalarFunc:
    """h(z) = c exp(-M|z|) |z|^(-1-alpha): infinite activity for alpha in (0,1)."""
    if not (c > 0 and M > 0 and 0 < alpha < 1):
        raise ValueError("need c > 0, M > 0, alpha in (0, 1)")
    p = 1.0 + alpha

    def h(z):
        az = np.abs(z)
        return c * np.exp(-M * az) * az ** (-p)

    def d1(z):
        az = np.abs(z)
        return -np.sign(z) * (M + p / az) * h(z)

    def d2(z):
        az = np.abs(z)
        return ((M + p / az) ** 2 + p / az**2) * h(z)

    return ScalarFunc(h, d1, d2, name=f"tempered-stable(c={c},M={M},alpha={alpha})")


def identity_jump() -> JumpFunc:
    zero = lambda x, z: np.zeros(np.broadcast(np.asarray(x), np.asarray(z)).shape) \
        if (np.ndim(x) or np.ndim(z)) else 0.0
    one = lambda x, z: np.ones(np.broadcast(np.asarray(x), np.asarray(z)).shape) \
        if (np.ndim(x) or np.ndim(z)) else 1.0
    return JumpFunc(fn=lambda x, z: z + 0.0 * np.asarray(x, dtype=float),
                    dx=zero, dz=one, dxx=zero, dzz=zero, dxz=zero)


def _pure_levy_preset(params):
    p = {"c": 1.0, "M": 5.0, "alpha": 0.5, "sigma": 0.2, "b": 0.05}
    p.update(params or {})
    if p["sigma"] <= 0:
        raise ValueError("sigma must be positive")
    h = tempered_stable_density(p["c"], p["M"], p["alpha"])
    return ModelSpec(
        drift=constant_func(p["b"], "b"),
        vol=constant_func(p["sigma"], "sigma"),
        jump_gen=identity_jump(),
        levy_density=h,
        regularity=Regularity(delta_jump=1.0, delta_flow=1.0, delta_vol=p["sigma"]),
        x_free_jumps=True,
        name="pure-levy-tempered-stable",
    )


def _tanh_preset(params):
    p = {"a": 0.3, "c": 1.0, "M": 5.0, "alpha": 0.5, "sigma": 0.2, "b": 0.05}
    p.update(params or {})
    a = float(p["a"])
    if not 0.0 < a < 1.0:
        raise ValueError("state-dependent amplitude needs 0 < a < 1 "
                         "(delta_jump = 1 - a must stay positive)")
    if p["sigma"] <= 0:
        raise ValueError("sigma must be positive")
    h = tempered_stable_density(p["c"], p["M"], p["alpha"])

    def sech2(z):
        # clip: cosh overflows past ~710 while the true value is 0 in double
        return 1.0 / np.cosh(np.clip(z, -350.0, 350.0)) ** 2

    gamma = JumpFunc(
        fn=lambda x, z: z + a * np.sin(x) * np.tanh(z),
        dx=lambda x, z: a * np.cos(x) * np.tanh(z),
        dz=lambda x, z: 1.0 + a * np.sin(x) * sech2(z),
        dxx=lambda x, z: -a * np.sin(x) * np.tanh(z),
        dzz=lambda x, z: -2.0 * a * np.sin(x) * sech2(z) * np.tanh(z),
        dxz=lambda x, z: a * np.cos(x) * sech2(z),
    )
    return ModelSpec(
        drift=constant_func(p["b"], "b"),
        vol=constant_func(p["sigma"], "sigma"),
        jump_gen=gamma,
        levy_density=h,
        regularity=Regularity(delta_jump=1.0 - a, delta_flow=1.0 - a,
                              delta_vol=p["sigma"]),
        x_free_jumps=False,
        name="state-dependent-tanh",
    )


def _exp_levy_pricing_preset(params):
    p = {"c": 1.0, "M": 5.0, "alpha": 0.5, "sigma": 0.2}
    p.update(params or {})
    if p["M"] <= 3.0:
        raise ValueError("pricing preset needs tempering M > 3 so that the "
                         "e^(3|z|) moment over |z|>=1 is finite")
    if p["sigma"] <= 0:
        raise ValueError("sigma must be positive")
    h = tempered_stable_density(p["c"], p["M"], p["alpha"])
    vol = constant_func(p["sigma"], "sigma")
    gamma = identity_jump()
    from . import pricing  # deferred: pricing imports this module

    b_val = pricing.martingale_drift(vol, gamma, h, 0.0)
    return ModelSpec(
        drift=constant_func(b_val, "martingale-drift"),
        vol=vol,
        jump_gen=gamma,
        levy_density=h,
        regularity=Regularity(delta_jump=1.0, delta_flow=1.0, delta_vol=p["sigma"]),
        x_free_jumps=True,
        name="exp-levy-pricing",
    )


PRESETS = {
    "pure-levy-tempered-stable": _pure_levy_preset,
    "state-dependent-tanh": _tanh_preset,
    "exp-levy-pricing": _exp_levy_pricing_preset,
}


def make_preset(name: str, params: dict | None = None) -> ModelSpec:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    return builder(params)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def model_from_dict(spec: dict) -> ModelSpec:
    """Build a model from a parsed specification dict.

    {"preset": name, "params": {...}} or
    {"custom": {"b": expr, "sigma": expr, "gamma": expr, "h": expr,
                "regularity": {...}?}} with the expression grammar of
    :mod:`jdx.expressions` (variables x and zeta).
    """
    if "preset" in spec:
        return make_preset(spec["preset"], spec.get("params"))
    if "custom" not in spec:
        raise ValueError('model spec needs a "preset" or "custom" key')
    c = spec["custom"]
    for key in ("b", "sigma", "gamma", "h"):
        if key not in c:
            raise ValueError(f'custom model is missing "{key}"')
    bf, bd1, bd2 = compile_univariate(c["b"], "x")
    sf, sd1, sd2 = compile_univariate(c["sigma"], "x")
    hf, hd1, hd2 = compile_univariate(c["h"], "zeta")
    gc = compile_bivariate(c["gamma"])
    reg = c.get("regularity", {})
    regularity = Regularity(
        delta_jump=float(reg.get("delta_jump", 1e-3)),
        delta_flow=float(reg.get("delta_flow", 1e-3)),
        delta_vol=float(reg.get("delta_vol", 1e-3)),
    )
    return ModelSpec(
        drift=ScalarFunc(bf, bd1, bd2, name="b"),
        vol=ScalarFunc(sf, sd1, sd2, name="sigma"),
        jump_gen=JumpFunc(fn=gc["f"], dx=gc["dx"], dz=gc["dz"],
                          dxx=gc["dxx"], dzz=gc["dzz"], dxz=gc["dxz"]),
        levy_density=ScalarFunc(hf, hd1, hd2, name="h"),
        regularity=regularity,
        x_free_jumps=gc["x_free"],
        name=str(spec.get("name", "custom")),
    )


def load_model_file(path) -> ModelSpec:
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    return model_from_dict(spec)
