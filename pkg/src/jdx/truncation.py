"""Threshold decomposition of the driving Lévy process.

For a threshold eps > 0 the driving noise splits into a compound-Poisson
big-jump part and a compensated small-jump part through a smooth cutoff
phi_eps with 1_{|z|>=eps} <= phi_eps(z) <= 1_{|z|>=eps/2}:

    h_eps   = phi_eps * h          (big-jump Lévy density)
    hbar    = (1 - phi_eps) * h    (small-jump Lévy density)
    lam     = int h_eps            (big-jump intensity)
    breve_h = h_eps / lam          (big-jump size distribution)

plus the transformed-jump density Gamma_eps(.; z) of gamma(z, J) and the
compensated drift b_eps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from . import numint

_R_CLIP = 40.0  # logistic argument beyond which the step saturates exactly


def _smooth_step(s):
    """C-infinity step: 0 for s<=0, 1 for s>=1, logistic(1/(1-s) - 1/s) inside."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    out[s >= 1.0] = 1.0
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    r = 1.0 / (1.0 - si) - 1.0 / si
    out[inside] = 1.0 / (1.0 + np.exp(-np.clip(r, -_R_CLIP, _R_CLIP)))
    return out


def _smooth_step_d1(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    r = 1.0 / (1.0 - si) - 1.0 / si
    sig = 1.0 / (1.0 + np.exp(-np.clip(r, -_R_CLIP, _R_CLIP)))
    rp = 1.0 / (1.0 - si) ** 2 + 1.0 / si**2
    out[inside] = sig * (1.0 - sig) * rp
    return out


def _smooth_step_d2(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    r = 1.0 / (1.0 - si) - 1.0 / si
    sig = 1.0 / (1.0 + np.exp(-np.clip(r, -_R_CLIP, _R_CLIP)))
    rp = 1.0 / (1.0 - si) ** 2 + 1.0 / si**2
    rpp = 2.0 / (1.0 - si) ** 3 - 2.0 / si**3
    w = sig * (1.0 - sig)
    out[inside] = w * (1.0 - 2.0 * sig) * rp**2 + w * rpp
    return out


@dataclass(frozen=True)
class TruncationScheme:
    eps: float
    model: model_mod.ModelSpec
    lambda_eps: float
    lambda_error: float
    lambda_pos: float = 0.0  # intensity carried by zeta >= eps/2
    lambda_neg: float = 0.0  # intensity carried by zeta <= -eps/2

    # -- cutoff ------------------------------------------------------------
    def phi(self, z):
        s = (np.abs(np.asarray(z, dtype=float)) - 0.5 * self.eps) / (0.5 * self.eps)
        return _smooth_step(s)

    def phi_d1(self, z):
        z = np.asarray(z, dtype=float)
        s = (np.abs(z) - 0.5 * self.eps) / (0.5 * self.eps)
        return _smooth_step_d1(s) * np.sign(z) * (2.0 / self.eps)

    def phi_d2(self, z):
        z = np.asarray(z, dtype=float)
        s = (np.abs(z) - 0.5 * self.eps) / (0.5 * self.eps)
        return _smooth_step_d2(s) * (2.0 / self.eps) ** 2

    # -- split densities -----------------------------------------------------
    def h_eps(self, z):
        return self.phi(z) * np.asarray(self.model.levy_density(z), dtype=float)

    def hbar_eps(self, z):
        z = np.asarray(z, dtype=float)
        w = 1.0 - self.phi(z)
        out = np.zeros(z.shape)
        live = w > 0.0
        if np.any(live):
            out[live] = w[live] * np.asarray(self.model.levy_density(z[live]), dtype=float)
        return out

    def breve_h_eps(self, z):
        if self.lambda_eps <= 0.0:
            raise ValueError("big-jump intensity is zero; breve_h is undefined")
        return self.h_eps(z) / self.lambda_eps

    def g_trunc(self, z: float, w: float) -> float:
        """Truncated process Lévy density h_eps(gamma_inv)/|d_zeta gamma|.

        Equals lambda_eps * Gamma_eps(w; z); vanishes (exactly) wherever the
        driving jump that produces w is below the cutoff, which keeps the
        two-big-jump integrands finite across w = 0.
        """
        try:
            p = model_mod.gamma_inverse(self.model, z, w)
        except model_mod.JumpRangeError:
            return 0.0
        if abs(p) < 0.5 * self.eps:
            return 0.0
        dz = float(self.model.jump_gen.d_z(z, p))
        return float(self.h_eps(p)) / abs(dz)


def make_truncation(mdl: model_mod.ModelSpec, eps: float,
                    cfg: numint.QuadratureConfig | None = None) -> TruncationScheme:
    """Build the eps-scheme; lambda_eps is computed by quadrature over
    {|zeta| >= eps/2} where the cutoff is supported."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    cfg = cfg or numint.DEFAULT_CONFIG
    probe = TruncationScheme(eps=eps, model=mdl, lambda_eps=1.0, lambda_error=0.0)

    def fh(z):
        return probe.phi(z) * np.asarray(mdl.levy_density(z), dtype=float)

    pos = numint.integrate_semi_infinite(fh, 0.5 * eps, cfg, +1)
    neg = numint.integrate_semi_infinite(fh, -0.5 * eps, cfg, -1)
    lam = pos.value + neg.value
    if not np.isfinite(lam):
        raise numint.QuadratureError("big-jump intensity quadrature failed")
    return TruncationScheme(eps=eps, model=mdl, lambda_eps=lam,
                            lambda_error=pos.abs_error_estimate + neg.abs_error_estimate,
                            lambda_pos=pos.value, lambda_neg=neg.value)


def split_densities(scheme: TruncationScheme):
    """(h_eps, hbar_eps, breve_h_eps) as evaluable functions."""
    breve = scheme.breve_h_eps if scheme.lambda_eps > 0 else None
    return scheme.h_eps, scheme.hbar_eps, breve


def transformed_jump_density(scheme: TruncationScheme, z: float, zeta: float,
                             shifted: bool = False) -> float:
    """Density Gamma_eps(zeta; z) of gamma(z, J) for a big jump J from state z.

    With ``shifted=True`` returns the density of z + gamma(z, J) at zeta,
    i.e. the translate Gamma_eps(zeta - z; z).
    """
    if shifted:
        zeta = zeta - z
    return scheme.g_trunc(z, zeta) / scheme.lambda_eps


def compensated_drift(scheme: TruncationScheme, x: float,
                      cfg: numint.QuadratureConfig | None = None) -> float:
    """b_eps(x) = b(x) - int_{|z|<=1} gamma(x, z) h_eps(z) dz.

    The integrand vanishes on |z| < eps/2, so the quadrature runs over
    [-1, -eps/2] and [eps/2, 1] only; for eps >= 2 it is empty.
    """
    cfg = cfg or numint.DEFAULT_CONFIG
    b = float(scheme.model.drift(x))
    lo = 0.5 * scheme.eps
    if lo >= 1.0:
        return b
    correction = 0.0
    # both sides computed on the positive axis: int_{-1}^{-eps/2} F = int_{eps/2}^{1} F(-z) dz
    for sgn in (-1.0, 1.0):
        def f(z, s=sgn):
            zz = s * z
            return (np.asarray(scheme.model.jump_gen(x, zz), dtype=float)
                    * scheme.h_eps(zz))

        r = numint.integrate_adaptive(f, lo, 1.0, cfg)
        correction += r.value
    return b - correction


def jump_support_bound(scheme: TruncationScheme, x_grid=None, zeta_grid=None) -> float:
    """max |gamma(x, zeta)| over grid points where hbar_eps > 0."""
    xg, zg = model_mod.default_grids()
    if x_grid is not None:
        xg = np.asarray(x_grid, dtype=float)
    if zeta_grid is not None:
        zg = np.asarray(zeta_grid, dtype=float)
    zg = zg[np.abs(zg) < scheme.eps]
    if zg.size == 0:
        return 0.0
    live = scheme.hbar_eps(zg) > 0
    zg = zg[live]
    if zg.size == 0:
        return 0.0
    X, Z = np.meshgrid(xg, zg, indexing="ij")
    return float(np.max(np.abs(scheme.model.jump_gen(X, Z))))
