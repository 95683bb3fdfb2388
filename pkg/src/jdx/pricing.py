"""Short-maturity out-of-the-money call pricing.

The spot is S = exp(X) with X a local jump-diffusion under the pricing
measure (risk-free rate 0).  The drift is pinned by the martingale condition

    b(x) = -sigma^2(x)/2 - int (e^{gamma(x,z)} - 1 - gamma(x,z) 1_{|z|<=1}) h(z) dz

and the leading short-maturity term of an OTM call E(S_t - K)_+ is

    lim_{t->0} v_t / t = int (S0 e^{gamma(x0,z)} - K)_+ h(z) dz.

The exponential moment condition (integrability of e^{3|gamma|} h over
|z| >= 1) guards all of this; violating models are rejected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import model as model_mod
from . import numint


class ModelRejectionError(ValueError):
    """The exponential-moment condition failed; the drift is ill-defined."""


class OTMError(ValueError):
    """Strike at or below spot: the leading-order result is OTM only."""


def _masked_exp_integrand(values, hv):
    """expm1-type integrand with the density factor; 0 where h underflows so
    overflow in the exponential cannot poison the product."""
    out = np.zeros(np.shape(hv))
    live = hv > 0.0
    out[live] = values[live] * hv[live]
    return out


def martingale_drift(vol, jump_gen, levy_density, x: float,
                     cfg: numint.QuadratureConfig | None = None) -> float:
    """Drift making exp(X) a local martingale, at state x.

    The |z| <= 1 integrand is evaluated in compensated form (the e^g - 1 - g
    remainder carries a z^2 factor) so the small-jump singularity integrates
    cleanly; a divergent |z| > 1 part raises ModelRejectionError.
    """
    cfg = cfg or numint.DEFAULT_CONFIG
    sig = float(vol(x))
    v = 0.5 * sig * sig

    def psi(z):
        z = np.asarray(z, dtype=float)
        g = np.asarray(jump_gen(x, z), dtype=float)
        ratio = np.where(z != 0.0, g / np.where(z != 0.0, z, 1.0), 0.0)
        small = np.abs(g) < 1e-4
        series = ratio * ratio * (0.5 + g / 6.0 + g * g / 24.0)
        with np.errstate(over="ignore", invalid="ignore"):
            direct = (np.expm1(g) - g) / np.where(z != 0.0, z * z, 1.0)
        return np.where(small, series, direct)

    inner = numint.integrate_compensated(psi, levy_density, bound=1.0, cfg=cfg)

    def f_big(z):
        z = np.asarray(z, dtype=float)
        hv = np.asarray(levy_density(z), dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            ex = np.expm1(np.asarray(jump_gen(x, z), dtype=float))
        return _masked_exp_integrand(ex, hv)

    try:
        up = numint.integrate_semi_infinite(f_big, 1.0, cfg, +1)
        dn = numint.integrate_semi_infinite(f_big, -1.0, cfg, -1)
    except numint.QuadratureError as exc:
        raise ModelRejectionError(
            f"exponential jump moment diverges at x={x}: {exc}") from None
    big = up.value + dn.value
    if not (np.isfinite(big) and up.converged and dn.converged):
        raise ModelRejectionError(
            f"exponential jump moment diverges at x={x} (quadrature value {big!r})")
    return -v - inner.value - big


@dataclass(frozen=True)
class PricingModel:
    model: model_mod.ModelSpec  # drift already replaced by the martingale drift
    S0: float

    def __post_init__(self):
        if self.S0 <= 0:
            raise ValueError("spot must be positive")

    @property
    def x0(self) -> float:
        return math.log(self.S0)


def build_pricing_model(base: model_mod.ModelSpec, S0: float,
                        cfg: numint.QuadratureConfig | None = None) -> PricingModel:
    """Replace the drift of ``base`` with the martingale drift.

    For x-free jumps and constant volatility the drift is a constant and is
    computed once; otherwise it is wrapped as a function of x (finite
    difference derivative accessors).
    """
    vol, gm, h = base.vol, base.jump_gen, base.levy_density
    check_c5(base, cfg=cfg)
    sig_const, _ = _is_const_vol(vol)
    if base.x_free_jumps and sig_const:
        b0 = martingale_drift(vol, gm, h, 0.0, cfg)
        drift = model_mod.constant_func(b0, "martingale-drift")
    else:
        drift = model_mod.ScalarFunc(
            fn=lambda xx: martingale_drift(vol, gm, h, float(xx), cfg),
            name="martingale-drift")
    mdl = model_mod.ModelSpec(
        drift=drift, vol=vol, jump_gen=gm, levy_density=h,
        regularity=base.regularity, x_free_jumps=base.x_free_jumps,
        name=base.name + "+martingale-drift",
    )
    return PricingModel(model=mdl, S0=S0)


def _is_const_vol(vol, pts=(-2.0, -0.5, 0.0, 1.0, 2.0)):
    vals = [float(vol(p)) for p in pts]
    spread = max(vals) - min(vals)
    return spread <= 1e-12 * max(1.0, max(abs(v) for v in vals)), vals[0]


def check_c5(mdl: model_mod.ModelSpec, x_grid=None,
             cfg: numint.QuadratureConfig | None = None) -> float:
    """sup over the x grid of int_{|z|>=1} e^{3|gamma(x,z)|} h(z) dz.

    Raises ModelRejectionError if any quadrature diverges.
    """
    cfg = cfg or numint.DEFAULT_CONFIG
    xg = np.linspace(-2.0, 2.0, 9) if x_grid is None else np.asarray(x_grid, dtype=float)
    worst = 0.0
    for x in xg:
        def f(z, xx=float(x)):
            z = np.asarray(z, dtype=float)
            hv = np.asarray(mdl.levy_density(z), dtype=float)
            with np.errstate(over="ignore", invalid="ignore"):
                ex = np.exp(3.0 * np.abs(np.asarray(mdl.jump_gen(xx, z), dtype=float)))
            return _masked_exp_integrand(ex, hv)

        try:
            r = numint.integrate_levy_tail(lambda z: np.ones_like(z),
                                           lambda z: f(z), numint.AbsTail(1.0), cfg)
        except numint.QuadratureError as exc:
            raise ModelRejectionError(f"exponential moment check failed at x={x}: {exc}") from None
        if not (np.isfinite(r.value) and r.converged):
            raise ModelRejectionError(
                f"exponential moment diverges at x={x} (value {r.value!r})")
        worst = max(worst, r.value)
    return worst


def drift_identity_residual(pm: PricingModel, x_grid=None,
                            cfg: numint.QuadratureConfig | None = None) -> float:
    """max over the grid of |b(x) + sigma^2/2 + int(e^g - 1 - g 1_{|z|<=1}) h|."""
    xg = np.linspace(-2.0, 2.0, 9) if x_grid is None else np.asarray(x_grid, dtype=float)
    worst = 0.0
    for x in xg:
        target = martingale_drift(pm.model.vol, pm.model.jump_gen,
                                  pm.model.levy_density, float(x), cfg)
        worst = max(worst, abs(float(pm.model.drift(float(x))) - target))
    return worst


def otm_leading_term(pm: PricingModel, K: float,
                     cfg: numint.QuadratureConfig | None = None) -> float:
    """int (S0 e^{gamma(x0, z)} - K)_+ h(z) dz; the short-maturity limit of
    v_t / t for an OTM call."""
    if K <= pm.S0:
        raise OTMError("strike must exceed spot: out-of-the-money calls only")
    cfg = cfg or numint.DEFAULT_CONFIG
    mdl = pm.model
    x0 = pm.x0
    ystar = math.log(K / pm.S0)
    region = model_mod.jump_region(mdl, x0, ystar)
    if isinstance(region, numint.EmptyRegion):
        return 0.0
    if isinstance(region, numint.FullLine):
        raise numint.QuadratureError("positivity region touches the origin")

    def payoff(z):
        z = np.asarray(z, dtype=float)
        hv = np.asarray(mdl.levy_density(z), dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            val = pm.S0 * np.exp(np.asarray(mdl.jump_gen(x0, z), dtype=float)) - K
        return _masked_exp_integrand(np.maximum(val, 0.0), hv)

    res = numint.integrate_levy_tail(lambda z: np.ones_like(z), payoff, region, cfg)
    if not res.converged:
        raise numint.QuadratureError("OTM leading-term quadrature did not converge")
    return res.value


def otm_leading_from_tails(pm: PricingModel, K: float,
                           cfg: numint.QuadratureConfig | None = None,
                           n_cache: int = 2049) -> float:
    """The same limit through the tail representation S0 * int A1(x0, ln s) ds.

    A1 is cached on a grid in u = ln s with monotone (PCHIP) interpolation;
    the identity with :func:`otm_leading_term` is the Fubini consistency
    check of the pricing layer.
    """
    from .expansion import TailCalculus

    if K <= pm.S0:
        raise OTMError("strike must exceed spot: out-of-the-money calls only")
    cfg = cfg or numint.DEFAULT_CONFIG
    calc = TailCalculus(pm.model, cfg)
    x0 = pm.x0
    ystar = math.log(K / pm.S0)

    a1_star = calc.tail_mass(x0, ystar).value
    if a1_star <= 0:
        return 0.0
    scale = a1_star * math.exp(ystar)
    u_max = ystar + 1.0
    for _ in range(200):
        if calc.tail_mass(x0, u_max).value * math.exp(u_max) <= 1e-13 * scale:
            break
        u_max += 1.0
    grid = np.linspace(ystar, u_max, n_cache)
    vals = np.array([calc.tail_mass(x0, float(u)).value for u in grid])
    vals = np.maximum(vals, 0.0)
    interp = PchipInterpolator(grid, vals, extrapolate=False)

    def f(u):
        u = np.asarray(u, dtype=float)
        a1 = np.nan_to_num(interp(u), nan=0.0)
        return a1 * np.exp(u)

    res = numint.integrate_adaptive(f, ystar, u_max, cfg)
    return pm.S0 * res.value
