"""Second-order small-time expansion coefficients.

Tail probabilities:   P(X_t(x) >= x+y) = t*A1 + (t^2/2)*A2 + O(t^3)
Transition densities: p_t(x+y; x)      = t*a1 + (t^2/2)*a2 + O(t^3)

A1 is the mass of {gamma(x, zeta) >= y} under the Lévy measure; A2 splits
into a drift/diffusion part D, a compensated small-jump part J1, and a
two-big-jump part J2.  The density coefficients are the (negative)
y-derivatives of the tail ones: a1 = g(x; y) and a2 = eth + I1 + I2.

Both J-type integrands vanish to second order at zero jump size; they are
evaluated literally away from the origin and through their Taylor-remainder
(beta-integral) form below ``ZETA_SWITCH`` to defeat cancellation against the
exploding small-jump density.  Two-big-jump integrals use the truncated
process Lévy density (the cutoff kills the mass near zero jump size), which
keeps them finite when one big jump already clears the level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from . import numint
from .model import JumpRangeError, ScalarFunc, bar_gamma, bar_gamma_du, gamma_inverse
from .numint import BETA_NODES, BETA_WEIGHTS, QuadratureConfig
from .truncation import TruncationScheme, compensated_drift, make_truncation

ZETA_SWITCH = 1e-3


class ConsistencyError(RuntimeError):
    """Two mathematically-equal representations disagreed beyond tolerance."""


class CoefficientQuadratureError(RuntimeError):
    """A sub-quadrature of an expansion coefficient failed to converge."""


def _need(res: numint.QuadratureResult, label: str) -> numint.QuadratureResult:
    if not res.converged:
        raise CoefficientQuadratureError(
            f"{label}: quadrature did not converge "
            f"(value={res.value:.6g}, err={res.abs_error_estimate:.3g}, "
            f"evals={res.evaluations})")
    return res


# ---------------------------------------------------------------------------
# result records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailCoefficients:
    x: float
    y: float
    A1: float
    D_part: float
    J1_part: float
    J2_part: float
    eps_used: float
    error_budget: float
    flags: tuple = ()

    @property
    def A2(self) -> float:
        return self.D_part + self.J1_part + self.J2_part

    def to_dict(self):
        return {
            "x": self.x, "y": self.y, "eps": self.eps_used,
            "A1": self.A1, "A2": self.A2,
            "parts": {"D": self.D_part, "J1": self.J1_part, "J2": self.J2_part},
            "error_budget": self.error_budget,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class DensityCoefficients:
    x: float
    y: float
    a1: float
    eth_part: float
    Im1_part: float
    Im2_part: float
    eps_used: float
    error_budget: float
    flags: tuple = ()

    @property
    def a2(self) -> float:
        return self.eth_part + self.Im1_part + self.Im2_part

    def to_dict(self):
        return {
            "x": self.x, "y": self.y, "eps": self.eps_used,
            "a1": self.a1, "a2": self.a2,
            "parts": {"eth": self.eth_part, "I1": self.Im1_part, "I2": self.Im2_part},
            "error_budget": self.error_budget,
            "flags": list(self.flags),
        }


# ---------------------------------------------------------------------------
# derivative policy: analytic chain rules when available, else Richardson FD
# ---------------------------------------------------------------------------

def _richardson_d1(fn, t, h0, target=1e-6, max_halvings=3):
    """Central difference with one-step Richardson; halved until two levels
    agree to ``target`` relative.  Returns (value, discrepancy)."""
    h = h0
    d_h = (fn(t + h) - fn(t - h)) / (2.0 * h)
    best, err = d_h, math.inf
    for _ in range(max_halvings):
        h *= 0.5
        d_h2 = (fn(t + h) - fn(t - h)) / (2.0 * h)
        best = (4.0 * d_h2 - d_h) / 3.0
        err = abs(d_h2 - d_h) / 3.0
        if err <= target * max(1.0, abs(best)):
            break
        d_h = d_h2
    return best, err


def _richardson_d2(fn, t, h0, target=1e-6, max_halvings=3):
    h = h0
    f0 = fn(t)

    def stencil(hh):
        return (fn(t + hh) - 2.0 * f0 + fn(t - hh)) / (hh * hh)

    d_h = stencil(h)
    best, err = d_h, math.inf
    for _ in range(max_halvings):
        h *= 0.5
        d_h2 = stencil(h)
        best = (4.0 * d_h2 - d_h) / 3.0
        err = abs(d_h2 - d_h) / 3.0
        if err <= target * max(1.0, abs(best)):
            break
        d_h = d_h2
    return best, err


def _fd_base_step(arg):
    return 1e-4 * max(1.0, abs(arg))


class TailCalculus:
    """Process Lévy density g(x; y), tail mass F(x, y), and derivatives.

    F(x, y) = int over {gamma(x, zeta) >= y} of h; all derivatives of F in x
    are boundary terms, so with analytic model accessors no quadrature is
    differentiated.  Models without exact accessors fall back to central
    differences with Richardson refinement; the discrepancy feeds the error
    budget.
    """

    def __init__(self, mdl: model_mod.ModelSpec, cfg: QuadratureConfig | None = None):
        self.model = mdl
        self.cfg = cfg or numint.DEFAULT_CONFIG
        self.inner_cfg = self.cfg.scaled(1e-2)
        self.sign = mdl.jump_sign
        self.analytic = mdl.analytic_chain

    # -- core evaluations ----------------------------------------------------
    def chain(self, x: float, y: float, seed: float | None = None):
        """Pointwise chain-rule bundle at (x, y); None when y is off-range."""
        try:
            p = gamma_inverse(self.model, x, y, z0=seed)
        except JumpRangeError:
            return None
        gm = self.model.jump_gen
        a = float(gm.d_z(x, p))
        s = self.sign
        absa = s * a
        hp = float(self.model.levy_density(p))
        out = {"p": p, "a": a, "absa": absa, "h": hp, "g": hp / absa}
        if self.analytic:
            h1 = float(self.model.levy_density.d1(p))
            gx = float(gm.d_x(x, p))
            azz = float(gm.d_zz(x, p))
            axz = float(gm.d_xz(x, p))
            axx = float(gm.d_xx(x, p))
            p_y = 1.0 / a
            p_x = -gx / a
            p_xx = -(axx + 2.0 * axz * p_x + azz * p_x * p_x) / a
            out.update({
                "dF_dx": -s * hp * p_x,
                "d2F_dx2": -s * (h1 * p_x * p_x + hp * p_xx),
                "dg_dy": h1 * p_y / absa - hp * s * azz * p_y / (a * a),
                "dg_dx": h1 * p_x / absa - hp * s * (axz + azz * p_x) / (a * a),
            })
        return out

    def g(self, x: float, y: float, seed: float | None = None) -> float:
        ch = self.chain(x, y, seed)
        return 0.0 if ch is None else ch["g"]

    def tail_mass(self, x: float, y: float,
                  cfg: QuadratureConfig | None = None) -> numint.QuadratureResult:
        """F(x, y) under the full Lévy density h (needs y > 0 or bounded range)."""
        region = model_mod.jump_region(self.model, x, y)
        if isinstance(region, numint.FullLine):
            raise numint.QuadratureError(
                f"tail mass at (x={x}, y={y}) covers the origin and diverges")
        return numint.integrate_levy_tail(lambda z: np.ones_like(z),
                                          self.model.levy_density, region,
                                          cfg or self.inner_cfg)

    def tail_mass_trunc(self, scheme: TruncationScheme, x: float, y: float,
                        cfg: QuadratureConfig | None = None) -> numint.QuadratureResult:
        """F under the truncated density h_eps; finite for every level y."""
        cfg = cfg or self.inner_cfg
        region = model_mod.jump_region(self.model, x, y)
        if isinstance(region, numint.EmptyRegion):
            return numint.QuadratureResult(0.0, 0.0, 0, True)
        half = 0.5 * scheme.eps
        if isinstance(region, numint.FullLine):
            return numint.QuadratureResult(
                scheme.lambda_eps, scheme.lambda_error, 0, True)
        c, up = region.c, region.direction >= 0
        one = lambda z: np.ones_like(z)
        if up:
            if c >= half:
                return numint.integrate_levy_tail(one, scheme.h_eps,
                                                  numint.HalfLine(c, +1), cfg)
            res = numint.QuadratureResult(scheme.lambda_pos, 0.0, 0, True)
            if c <= -half:
                res = res + numint.integrate_adaptive(
                    lambda z: scheme.h_eps(z), c, -half, cfg)
            return res
        if c <= -half:
            return numint.integrate_levy_tail(one, scheme.h_eps,
                                              numint.HalfLine(c, -1), cfg)
        res = numint.QuadratureResult(scheme.lambda_neg, 0.0, 0, True)
        if c >= half:
            res = res + numint.integrate_adaptive(
                lambda z: scheme.h_eps(z), half, c, cfg)
        return res

    # -- derivatives with FD fallback -----------------------------------------
    def dF_dx(self, x, y):
        ch = self.chain(x, y)
        if ch is None:
            return 0.0, 0.0
        if self.analytic:
            return ch["dF_dx"], abs(ch["dF_dx"]) * 1e-12
        return _richardson_d1(lambda xx: self.tail_mass(xx, y).value,
                              x, _fd_base_step(x))

    def d2F_dx2(self, x, y):
        ch = self.chain(x, y)
        if ch is None:
            return 0.0, 0.0
        if self.analytic:
            return ch["d2F_dx2"], abs(ch["d2F_dx2"]) * 1e-12
        return _richardson_d2(lambda xx: self.tail_mass(xx, y).value,
                              x, _fd_base_step(x))

    def dg_dx(self, x, y):
        ch = self.chain(x, y)
        if ch is None:
            return 0.0, 0.0
        if self.analytic:
            return ch["dg_dx"], abs(ch["dg_dx"]) * 1e-12
        return _richardson_d1(lambda xx: self.g(xx, y), x, _fd_base_step(x))

    def dg_dy(self, x, y, seed=None):
        ch = self.chain(x, y, seed)
        if ch is None:
            return 0.0, 0.0
        if self.analytic:
            return ch["dg_dy"], abs(ch["dg_dy"]) * 1e-12
        return _richardson_d1(lambda yy: self.g(x, yy), y, _fd_base_step(y))

    def d2g_dy2(self, x, v):
        """Second y-derivative of g, always by differences of dg_dy (third
        order model derivatives are not part of the accessor contract)."""
        h0 = 0.5 * _fd_base_step(v)
        return _richardson_d1(lambda yy: self.dg_dy(x, yy)[0], v, h0)


# ---------------------------------------------------------------------------
# A1
# ---------------------------------------------------------------------------

def tail_A1(mdl: model_mod.ModelSpec, x: float, y: float,
            cfg: QuadratureConfig | None = None, check: bool = True) -> float:
    """First-order tail coefficient: the Lévy mass of {gamma(x, .) >= y}.

    Computes both representations (region mass of h, and the integral of the
    process Lévy density g over [y, inf)) and asserts their agreement; the
    returned value is the region-mass form.
    """
    if y <= 0:
        raise ValueError("tail coefficients need y > 0")
    calc = TailCalculus(mdl, cfg)
    mass = _need(calc.tail_mass(x, y), "A1 region mass")
    if check:
        def g_of(z):
            return np.array([calc.g(x, float(w)) for w in np.atleast_1d(z)])

        gform = _need(numint.integrate_semi_infinite(g_of, y, calc.inner_cfg, +1),
                      "A1 g-integral")
        tol = 100.0 * (mass.abs_error_estimate + gform.abs_error_estimate
                       + 1e-13 * max(1.0, abs(mass.value)))
        if abs(mass.value - gform.value) > tol:
            raise ConsistencyError(
                f"A1 representations disagree at (x={x}, y={y}): "
                f"{mass.value!r} (region) vs {gform.value!r} (g-integral)")
    return mass.value


# ---------------------------------------------------------------------------
# D, J1, J2 and A2
# ---------------------------------------------------------------------------

def _d_term(mdl, scheme, x, y, calc, cfg):
    """Drift/diffusion part of A2; returns (value, error_estimate)."""
    bx = compensated_drift(scheme, x, cfg)
    bxy = compensated_drift(scheme, x + y, cfg)
    g0 = calc.g(x, y)
    dFdx, e1 = calc.dF_dx(x, y)
    d2Fdx2, e2 = calc.d2F_dx2(x, y)
    dgdx, e3 = calc.dg_dx(x, y)
    dgdy, e4 = calc.dg_dy(x, y)
    sx = float(mdl.vol(x))
    sxy = float(mdl.vol(x + y))
    sxy1 = float(mdl.vol.deriv1(x + y))
    val = (bx * (dFdx + g0) + bxy * g0
           + 0.5 * sx * sx * (d2Fdx2 + 2.0 * dgdx - dgdy)
           - 0.5 * sxy * (sxy * dgdy + 2.0 * sxy1 * g0))
    err = (abs(bx) * e1 + 0.5 * sx * sx * (e2 + 2.0 * e3 + e4)
           + 0.5 * sxy * sxy * e4)
    return val, err


def _beta_remainder(kernel, step):
    """int_0^1 kernel(beta*step) (1-beta) dbeta by the fixed 16-point rule."""
    acc = 0.0
    for bk, wk in zip(BETA_NODES, BETA_WEIGHTS):
        acc += wk * (1.0 - bk) * kernel(bk * step)
    return acc


def _j1_term(mdl, scheme, x, y, calc, cfg, flags):
    """Compensated one-big-jump part of A2."""
    gm = mdl.jump_gen
    eps = scheme.eps
    ch0 = calc.chain(x, y)
    g0 = 0.0 if ch0 is None else ch0["g"]
    p0 = None if ch0 is None else ch0["p"]
    F0 = calc.tail_mass(x, y).value
    dFdx0, e1 = calc.dF_dx(x, y)
    comp0 = dFdx0 + g0  # d/ds of F(x+s, y-s) at s=0

    def q2(s):
        """Second s-derivative of s -> F(x+s, y-s)."""
        d2F, _ = calc.d2F_dx2(x + s, y - s)
        dgx, _ = calc.dg_dx(x + s, y - s)
        dgy, _ = calc.dg_dy(x + s, y - s)
        return d2F + 2.0 * dgx - dgy

    def bracket(zb):
        u = float(gm(x, zb))
        w = float(gm(x + y, zb))
        if y - u <= 0.0:
            flags.add("eps-out-of-regime")
            F1 = calc.tail_mass_trunc(scheme, x + u, y - u).value
        else:
            F1 = calc.tail_mass(x + u, y - u).value
        m = bar_gamma(mdl, x + y, zb) - x
        F2 = calc.tail_mass(x, m).value if m > 0 else \
            calc.tail_mass_trunc(scheme, x, m).value
        return F1 + F2 - 2.0 * F0 - u * comp0 - w * g0

    def bracket_taylor(zb):
        u = float(gm(x, zb))
        w = float(gm(x + y, zb))
        zroot = bar_gamma(mdl, x + y, zb)
        m = zroot - x
        r_q = u * u * _beta_remainder(q2, u)
        r_f = (m - y) ** 2 * _beta_remainder(
            lambda s: -calc.dg_dy(x, y + s, seed=p0)[0], m - y)
        cross = -(w - float(gm(zroot, zb))) * g0
        return r_q + r_f + cross

    total = numint.QuadratureResult(0.0, 0.0, 0, True)
    for sgn in (1.0, -1.0):
        if eps > ZETA_SWITCH:
            def f_direct(zarr, s=sgn):
                vals = np.empty_like(np.asarray(zarr, dtype=float))
                flat = np.atleast_1d(zarr)
                hb = scheme.hbar_eps(s * flat)
                for i, z in enumerate(flat):
                    vals.flat[i] = bracket(s * float(z)) * hb[i] if hb[i] != 0 else 0.0
                return vals

            total = total + _need(
                numint.integrate_log(f_direct, ZETA_SWITCH, eps, cfg),
                f"J1 direct part (side {int(sgn):+d})")

        def psi(zz, s=1.0):
            flat = np.atleast_1d(zz)
            vals = np.empty(flat.shape)
            for i, z in enumerate(flat):
                z = float(z)
                vals[i] = bracket_taylor(z) / (z * z)
            return vals.reshape(np.shape(zz))

        total = total + _need(
            numint.integrate_compensated(psi, scheme.hbar_eps,
                                         bound=min(ZETA_SWITCH, eps), cfg=cfg,
                                         sides=(int(sgn),)),
            f"J1 compensated core (side {int(sgn):+d})")
    return total.value, total.abs_error_estimate + e1


def _j2_term(mdl, scheme, x, y, calc, cfg, A1_val):
    """Two-big-jump part of A2 (truncated process Lévy density inside)."""
    gm = mdl.jump_gen
    half = 0.5 * scheme.eps

    def t2(zb):
        u = float(gm(x, zb))
        return calc.tail_mass_trunc(scheme, x + u, y - u).value

    total = numint.QuadratureResult(0.0, 0.0, 0, True)
    for sgn, direction in ((1.0, +1), (-1.0, -1)):
        def f(zarr, s=sgn):
            flat = np.atleast_1d(np.asarray(zarr, dtype=float))
            he = scheme.h_eps(flat)
            vals = np.empty(flat.shape)
            for i, z in enumerate(flat):
                vals[i] = t2(float(z)) * he[i] if he[i] != 0 else 0.0
            return vals.reshape(np.shape(zarr))

        total = total + _need(
            numint.integrate_semi_infinite(f, sgn * half, cfg, direction),
            f"J2 outer (side {int(sgn):+d})")
    val = total.value - 2.0 * A1_val * scheme.lambda_eps
    return val, total.abs_error_estimate + 2.0 * A1_val * scheme.lambda_error


def tail_A2(mdl: model_mod.ModelSpec, scheme: TruncationScheme, x: float, y: float,
            cfg: QuadratureConfig | None = None) -> TailCoefficients:
    """Second-order tail coefficient A2 = D + J1 + J2 at (x, y), y > 0."""
    if y <= 0:
        raise ValueError("tail coefficients need y > 0")
    if scheme.model is not mdl:
        raise ValueError("scheme was built for a different model")
    cfg = cfg or numint.DEFAULT_CONFIG
    calc = TailCalculus(mdl, cfg)
    flags = set()
    if calc.chain(x, y) is None:
        flags.add("boundary")
    A1_val = calc.tail_mass(x, y).value
    d_val, d_err = _d_term(mdl, scheme, x, y, calc, cfg)
    j1_val, j1_err = _j1_term(mdl, scheme, x, y, calc, cfg, flags)
    j2_val, j2_err = _j2_term(mdl, scheme, x, y, calc, cfg, A1_val)
    regime_gap = _regime_gap(mdl, x, y, scheme.eps)
    if regime_gap is not None and not regime_gap:
        flags.add("eps-out-of-regime")
    elif not _identity_margin_ok(mdl, x, y, scheme.eps):
        flags.add("eps-identity-marginal")
    return TailCoefficients(
        x=x, y=y, A1=A1_val,
        D_part=d_val, J1_part=j1_val, J2_part=j2_val,
        eps_used=scheme.eps,
        error_budget=d_err + j1_err + j2_err,
        flags=tuple(sorted(flags)),
    )


def _regime_gap(mdl, x, y, eps):
    """True when eps < |gamma_inv(x, y)| (the heuristic validity regime)."""
    try:
        p = gamma_inverse(mdl, x, y)
    except JumpRangeError:
        return None
    return eps < abs(p)


def _identity_margin_ok(mdl, x, y, eps):
    """Stronger (still sufficient-style) check that the truncated and full
    process Lévy densities coincide on every tail the J1 bracket touches:
    |gamma_inv| at the one-jump shifted states must stay >= eps.  Probed at
    the extreme small-jump sizes only."""
    gm = mdl.jump_gen
    try:
        for zb in (eps, -eps):
            u = float(gm(x, zb))
            if y - u > 0:
                if abs(gamma_inverse(mdl, x + u, y - u)) < eps:
                    return False
            else:
                return False
            m = bar_gamma(mdl, x + y, zb) - x
            if m > 0:
                if abs(gamma_inverse(mdl, x, m)) < eps:
                    return False
            else:
                return False
    except JumpRangeError:
        return False
    return True


@dataclass(frozen=True)
class TailExpansion:
    t: float
    value: float
    coefficients: TailCoefficients

    @property
    def first_order(self):
        return self.t * self.coefficients.A1

    @property
    def second_order(self):
        return 0.5 * self.t * self.t * self.coefficients.A2


def tail_expansion(mdl, scheme, x, y, t: float,
                   cfg: QuadratureConfig | None = None,
                   coefficients: TailCoefficients | None = None) -> TailExpansion:
    """t*A1 + (t^2/2)*A2 with the pieces attached."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    co = coefficients if coefficients is not None else tail_A2(mdl, scheme, x, y, cfg)
    value = t * co.A1 + 0.5 * t * t * co.A2
    return TailExpansion(t=t, value=value, coefficients=co)


# ---------------------------------------------------------------------------
# density coefficients
# ---------------------------------------------------------------------------

def density_a1(mdl: model_mod.ModelSpec, x: float, y: float) -> float:
    """Leading density coefficient a1 = g(x; y)."""
    if y <= 0:
        raise ValueError("density coefficients need y > 0")
    return model_mod.process_levy_density(mdl, x, y)


def _im1_term(mdl, scheme, x, y, calc, cfg, flags):
    """Compensated one-big-jump part of a2."""
    gm = mdl.jump_gen
    eps = scheme.eps
    ch0 = calc.chain(x, y)
    if ch0 is None:
        flags.add("boundary")
    g0 = 0.0 if ch0 is None else ch0["g"]
    p0 = None if ch0 is None else ch0["p"]
    dgdx0, e1 = calc.dg_dx(x, y)
    dgdy0, e2 = calc.dg_dy(x, y)

    def phi2(s):
        """Second s-derivative of s -> g(x+s, y-s) by central differences."""
        h = 1e-4 * max(1.0, abs(y))

        def phi(ss):
            return calc.g(x + ss, y - ss, seed=p0)

        return (phi(s + h) - 2.0 * phi(s) + phi(s - h)) / (h * h)

    def psi2(v):
        return calc.d2g_dy2(x, v)[0]

    def bracket(zb):
        u = float(gm(x, zb))
        w = float(gm(x + y, zb))
        g1 = calc.g(x + u, y - u) if y - u > 0 else \
            scheme.g_trunc(x + u, y - u)
        if y - u <= 0:
            flags.add("eps-out-of-regime")
        zroot = bar_gamma(mdl, x + y, zb)
        m = zroot - x
        du_bar = bar_gamma_du(mdl, x + y, zb, z=zroot)
        g2 = calc.g(x, m, seed=p0) if m > 0 else scheme.g_trunc(x, m)
        gx_xy = float(gm.d_x(x + y, zb))
        return (g1 + g2 * du_bar - 2.0 * g0
                - u * dgdx0 + u * dgdy0 + (gx_xy * g0 + w * dgdy0))

    def bracket_taylor(zb):
        u = float(gm(x, zb))
        w = float(gm(x + y, zb))
        zroot = bar_gamma(mdl, x + y, zb)
        m = zroot - x
        gxm = float(gm.d_x(zroot, zb))
        gxy = float(gm.d_x(x + y, zb))
        du_bar = 1.0 / (1.0 + gxm)
        r_a = u * u * _beta_remainder(phi2, u)
        r_psi = (m - y) ** 2 * _beta_remainder(lambda s: psi2(y + s), m - y)
        p2 = (gxy - gxm + gxy * gxm) * du_bar
        p3 = ((w - float(gm(zroot, zb))) + w * gxm) * du_bar
        return du_bar * r_psi + r_a + g0 * p2 + dgdy0 * p3

    total = numint.QuadratureResult(0.0, 0.0, 0, True)
    for sgn in (1.0, -1.0):
        if eps > ZETA_SWITCH:
            def f_direct(zarr, s=sgn):
                flat = np.atleast_1d(np.asarray(zarr, dtype=float))
                hb = scheme.hbar_eps(s * flat)
                vals = np.empty(flat.shape)
                for i, z in enumerate(flat):
                    vals[i] = bracket(s * float(z)) * hb[i] if hb[i] != 0 else 0.0
                return vals.reshape(np.shape(zarr))

            total = total + _need(
                numint.integrate_log(f_direct, ZETA_SWITCH, eps, cfg),
                f"I1 direct part (side {int(sgn):+d})")

        def psi(zz):
            flat = np.atleast_1d(zz)
            vals = np.empty(flat.shape)
            for i, z in enumerate(flat):
                z = float(z)
                vals[i] = bracket_taylor(z) / (z * z)
            return vals.reshape(np.shape(zz))

        total = total + _need(
            numint.integrate_compensated(psi, scheme.hbar_eps,
                                         bound=min(ZETA_SWITCH, eps), cfg=cfg,
                                         sides=(int(sgn),)),
            f"I1 compensated core (side {int(sgn):+d})")
    return total.value, total.abs_error_estimate + e1 + e2


def _im2_term(mdl, scheme, x, y, calc, cfg, g0):
    gm = mdl.jump_gen
    half = 0.5 * scheme.eps

    total = numint.QuadratureResult(0.0, 0.0, 0, True)
    for sgn, direction in ((1.0, +1), (-1.0, -1)):
        def f(zarr):
            flat = np.atleast_1d(np.asarray(zarr, dtype=float))
            he = scheme.h_eps(flat)
            vals = np.empty(flat.shape)
            for i, z in enumerate(flat):
                if he[i] == 0.0:
                    vals[i] = 0.0
                    continue
                u = float(gm(x, float(z)))
                w = y - u
                vals[i] = (scheme.g_trunc(x + u, w) if w != 0.0 else 0.0) * he[i]
            return vals.reshape(np.shape(zarr))

        total = total + _need(
            numint.integrate_semi_infinite(f, sgn * half, cfg, direction),
            f"I2 outer (side {int(sgn):+d})")
    val = total.value - 2.0 * g0 * scheme.lambda_eps
    return val, total.abs_error_estimate + 2.0 * abs(g0) * scheme.lambda_error


def density_a2(mdl: model_mod.ModelSpec, scheme: TruncationScheme, x: float, y: float,
               cfg: QuadratureConfig | None = None) -> DensityCoefficients:
    """Second-order density coefficient a2 = eth + I1 + I2 at (x, y)."""
    if y <= 0:
        raise ValueError("density coefficients need y > 0")
    if scheme.model is not mdl:
        raise ValueError("scheme was built for a different model")
    cfg = cfg or numint.DEFAULT_CONFIG
    calc = TailCalculus(mdl, cfg)
    flags = set()
    g0 = calc.g(x, y)

    # eth = -d/dy D, differentiated numerically (third-order model
    # derivatives are outside the accessor contract)
    def d_of_y(yy):
        return _d_term(mdl, scheme, x, yy, calc, cfg)[0]

    eth_neg, eth_err = _richardson_d1(d_of_y, y, _fd_base_step(y))
    eth_val = -eth_neg
    im1_val, im1_err = _im1_term(mdl, scheme, x, y, calc, cfg, flags)
    im2_val, im2_err = _im2_term(mdl, scheme, x, y, calc, cfg, g0)
    regime_gap = _regime_gap(mdl, x, y, scheme.eps)
    if regime_gap is not None and not regime_gap:
        flags.add("eps-out-of-regime")
    elif not _identity_margin_ok(mdl, x, y, scheme.eps):
        flags.add("eps-identity-marginal")
    return DensityCoefficients(
        x=x, y=y, a1=g0,
        eth_part=eth_val, Im1_part=im1_val, Im2_part=im2_val,
        eps_used=scheme.eps,
        error_budget=eth_err + im1_err + im2_err,
        flags=tuple(sorted(flags)),
    )


# ---------------------------------------------------------------------------
# generator and iterated expansion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorContext:
    model: model_mod.ModelSpec
    scheme: TruncationScheme
    cfg: QuadratureConfig = numint.DEFAULT_CONFIG

    def __post_init__(self):
        if self.scheme.model is not self.model:
            raise ValueError("scheme and context must reference the same model")


def as_smooth_func(f) -> ScalarFunc:
    if isinstance(f, ScalarFunc):
        return f
    if isinstance(f, tuple):
        return ScalarFunc(*f)
    return ScalarFunc(fn=f)


def generator_apply(ctx: GeneratorContext, f, y: float) -> float:
    """Apply the small-jump generator: local part v f'' + b_eps f' plus the
    compensated jump integral in its second-order Taylor-remainder form."""
    fs = as_smooth_func(f)
    mdl, scheme = ctx.model, ctx.scheme
    local = float(mdl.v(y)) * float(fs.deriv2(y)) \
        + compensated_drift(scheme, y, ctx.cfg) * float(fs.deriv1(y))

    gm = mdl.jump_gen

    def psi(zz):
        zz = np.asarray(zz, dtype=float)
        gz = np.asarray(gm(y, zz), dtype=float)
        ratio = np.where(zz != 0.0, gz / np.where(zz != 0.0, zz, 1.0),
                         float(gm.d_z(y, 0.0)))
        inner = np.zeros(zz.shape)
        for bk, wk in zip(BETA_NODES, BETA_WEIGHTS):
            inner += wk * (1.0 - bk) * np.asarray(fs.deriv2(y + gz * bk), dtype=float)
        return inner * ratio * ratio

    jump = _need(numint.integrate_compensated(psi, scheme.hbar_eps,
                                              bound=scheme.eps, cfg=ctx.cfg),
                 "generator jump integral")
    return local + jump.value


def _generator_reach(ctx, x):
    """Radius within which the spline of y -> L f(y) must be accurate."""
    gm = ctx.model.jump_gen
    eps = ctx.scheme.eps
    reach = 0.0
    for xx in (x - 1.0, x, x + 1.0):
        for zz in (-eps, eps):
            reach = max(reach, abs(float(gm(xx, zz))))
    return reach + 0.2


def dynkin_expand(ctx: GeneratorContext, f, x: float, t: float, order: int = 2,
                  grid_points: int = 201) -> float:
    """Time-polynomial expansion sum_{k<=order} t^k/k! L^k f(x).

    Order 2 applies the generator to a cubic-spline model of y -> L f(y)
    built on a grid wide enough to cover every point the jump integral can
    reach from x.
    """
    from scipy.interpolate import CubicSpline

    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    fs = as_smooth_func(f)
    total = float(fs(x))
    lf_x = generator_apply(ctx, fs, x)
    total += t * lf_x
    if order == 1:
        return total
    reach = _generator_reach(ctx, x)
    ys = np.linspace(x - reach, x + reach, grid_points)
    us = np.array([generator_apply(ctx, fs, float(yy)) for yy in ys])
    spl = CubicSpline(ys, us)
    u_func = ScalarFunc(fn=lambda w: spl(w),
                        d1=lambda w: spl(w, 1),
                        d2=lambda w: spl(w, 2))
    l2f_x = generator_apply(ctx, u_func, x)
    return total + 0.5 * t * t * l2f_x


# ---------------------------------------------------------------------------
# eps-invariance diagnostic and the state-independent fast path
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsInvarianceReport:
    quantity: str
    eps_list: tuple
    totals: tuple
    in_regime: tuple

    @property
    def spread(self) -> float:
        return max(self.totals) - min(self.totals)

    def to_dict(self):
        return {
            "quantity": self.quantity,
            "eps": list(self.eps_list),
            "totals": list(self.totals),
            "in_regime": list(self.in_regime),
            "spread": self.spread,
        }


def epsilon_invariance(mdl: model_mod.ModelSpec, x: float, y: float, eps_list,
                       quantity: str = "tail",
                       cfg: QuadratureConfig | None = None) -> EpsInvarianceReport:
    """Second-order coefficient at several eps values plus the max spread.

    The individual parts move with eps; only the total is expected to be
    invariant, and only below the regime threshold eps < |gamma_inv(x, y)|
    (entries violating it are flagged, not rejected).
    """
    eps_list = tuple(float(e) for e in eps_list)
    if len(eps_list) < 2:
        raise ValueError("eps_list needs at least two entries")
    totals, regime = [], []
    for eps in eps_list:
        scheme = make_truncation(mdl, eps, cfg)
        if quantity == "tail":
            totals.append(tail_A2(mdl, scheme, x, y, cfg).A2)
        elif quantity == "density":
            totals.append(density_a2(mdl, scheme, x, y, cfg).a2)
        else:
            raise ValueError("quantity must be 'tail' or 'density'")
        gap = _regime_gap(mdl, x, y, eps)
        regime.append(bool(gap) if gap is not None else False)
    return EpsInvarianceReport(quantity=quantity, eps_list=eps_list,
                               totals=tuple(totals), in_regime=tuple(regime))


def state_independent_A2(mdl: model_mod.ModelSpec, scheme: TruncationScheme,
                         x: float, y: float,
                         cfg: QuadratureConfig | None = None,
                         check: bool = True) -> TailCoefficients:
    """A2 through the reduced x-free-jump formulas; cross-checked against the
    general path (they must agree within combined tolerance)."""
    if not mdl.x_free_jumps:
        raise ValueError("state_independent_A2 needs a model with x-free jumps")
    if y <= 0:
        raise ValueError("tail coefficients need y > 0")
    cfg = cfg or numint.DEFAULT_CONFIG
    calc = TailCalculus(mdl, cfg)
    gm = mdl.jump_gen
    eps = scheme.eps
    flags = set()

    g0 = calc.g(x, y)
    dgdy, e_dg = calc.dg_dy(x, y)
    bx = compensated_drift(scheme, x, cfg)
    bxy = compensated_drift(scheme, x + y, cfg)
    sx = float(mdl.vol(x))
    sxy = float(mdl.vol(x + y))
    sxy1 = float(mdl.vol.deriv1(x + y))
    d_si = ((bx + bxy) * g0
            - 0.5 * (sx * sx + sxy * sxy) * dgdy
            - sxy * sxy1 * g0)

    F0 = calc.tail_mass(x, y).value

    def bracket(zb):
        u = float(gm(x, zb))
        Fu = calc.tail_mass(x, y - u).value if y - u > 0 else \
            calc.tail_mass_trunc(scheme, x, y - u).value
        return Fu - F0 - u * g0

    def bracket_taylor(zb):
        u = float(gm(x, zb))
        return u * u * _beta_remainder(lambda s: -calc.dg_dy(x, y - s)[0], u)

    j1 = numint.QuadratureResult(0.0, 0.0, 0, True)
    for sgn in (1.0, -1.0):
        if eps > ZETA_SWITCH:
            def f_direct(zarr, s=sgn):
                flat = np.atleast_1d(np.asarray(zarr, dtype=float))
                hb = scheme.hbar_eps(s * flat)
                vals = np.empty(flat.shape)
                for i, z in enumerate(flat):
                    vals[i] = bracket(s * float(z)) * hb[i] if hb[i] != 0 else 0.0
                return vals.reshape(np.shape(zarr))

            j1 = j1 + _need(numint.integrate_log(f_direct, ZETA_SWITCH, eps, cfg),
                            f"J1(si) direct (side {int(sgn):+d})")

        def psi(zz):
            flat = np.atleast_1d(zz)
            vals = np.empty(flat.shape)
            for i, z in enumerate(flat):
                z = float(z)
                vals[i] = bracket_taylor(z) / (z * z)
            return vals.reshape(np.shape(zz))

        j1 = j1 + _need(
            numint.integrate_compensated(psi, scheme.hbar_eps,
                                         bound=min(ZETA_SWITCH, eps), cfg=cfg,
                                         sides=(int(sgn),)),
            f"J1(si) compensated (side {int(sgn):+d})")
    j1_val = 2.0 * j1.value

    A1_val = F0
    j2_val, j2_err = _j2_term(mdl, scheme, x, y, calc, cfg, A1_val)

    out = TailCoefficients(
        x=x, y=y, A1=A1_val,
        D_part=d_si, J1_part=j1_val, J2_part=j2_val,
        eps_used=eps,
        error_budget=2.0 * j1.abs_error_estimate + j2_err + e_dg,
        flags=tuple(sorted(flags)),
    )
    if check:
        general = tail_A2(mdl, scheme, x, y, cfg)
        tol = 100.0 * (out.error_budget + general.error_budget
                       + 1e-10 * max(1.0, abs(general.A2)))
        if abs(out.A2 - general.A2) > tol:
            raise ConsistencyError(
                f"state-independent A2 {out.A2!r} disagrees with the general "
                f"path {general.A2!r} at (x={x}, y={y})")
    return out
