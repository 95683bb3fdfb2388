"""Simulation oracle for the jump-diffusion model.

Terminal values are sampled by drawing the big-jump skeleton exactly
(Poisson count, uniform jump times, inverse-CDF jump sizes) and evolving the
diffusion between jumps with Euler steps.  Small jumps are either dropped
with their compensator absorbed into the drift (``drift-compensate-only``) or
replaced by an extra diffusion with the matched second moment
(``gaussian-substitute``).

Randomness comes from counter-based Philox streams keyed by
(seed, stream_id, block index), with paths processed in fixed-size blocks, so
sample sets are bit-identical for a given (seed, stream_id, n, model, t)
regardless of thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import model as model_mod
from . import numint
from .truncation import TruncationScheme, compensated_drift, make_truncation

BLOCK = 1 << 19
_TABLE_NODES = 4096
_TAIL_CUT = 1e-14  # CDF table truncates where the remaining mass is below this (relative)
_WINDOW = 16.0     # half-width of the coefficient tabulation window around x0

SMALL_JUMP_MODES = ("drift-compensate-only", "gaussian-substitute")


@dataclass(frozen=True)
class SimScheme:
    seed: int
    eps: float = 0.5
    n_steps: int = 64  # Euler steps per unit time
    small_jump_mode: str = "drift-compensate-only"
    stream_id: int = 0
    big_jumps: bool = True

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.small_jump_mode not in SMALL_JUMP_MODES:
            raise ValueError(f"small_jump_mode must be one of {SMALL_JUMP_MODES}")


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n_samples: int
    seed_provenance: tuple | None = None


class JumpSampler:
    """Inverse-CDF sampler for the big-jump size distribution.

    The CDF is tabulated per sign on log-spaced nodes between eps/2 and a cap
    beyond which the remaining mass is below 1e-14 of the intensity (presets
    are tempered, so the cap is modest); quantiles interpolate monotonically
    (PCHIP).  The truncated tail mass is far below the resolution of any
    feasible sample size, so no rejection stage is kept behind the table.
    """

    def __init__(self, scheme: TruncationScheme, nodes: int = _TABLE_NODES,
                 cfg: numint.QuadratureConfig | None = None):
        if scheme.lambda_eps <= 0:
            raise ValueError("scheme has zero big-jump intensity")
        cfg = cfg or numint.DEFAULT_CONFIG
        self.lambda_eps = scheme.lambda_eps
        self._ppf = {}
        masses = {}
        for sgn in (+1, -1):
            side_mass = scheme.lambda_pos if sgn > 0 else scheme.lambda_neg
            masses[sgn] = side_mass
            if side_mass <= 0:
                self._ppf[sgn] = None
                continue
            lo = 0.5 * scheme.eps
            cap = self._find_cap(scheme, sgn, lo, side_mass, cfg)
            z = np.geomspace(lo, cap, nodes)
            h = scheme.h_eps(sgn * z)
            mids = 0.5 * (z[:-1] + z[1:])
            hm = scheme.h_eps(sgn * mids)
            widths = np.diff(z)
            cells = widths * (h[:-1] + 4.0 * hm + h[1:]) / 6.0
            cdf = np.concatenate([[0.0], np.cumsum(cells)])
            total = cdf[-1]
            if total <= 0:
                self._ppf[sgn] = None
                masses[sgn] = 0.0
                continue
            cdf /= total
            keep = np.concatenate([[True], np.diff(cdf) > 0])
            knots, zs = cdf[keep], z[keep]
            knots = knots / knots[-1]  # force the grid to reach exactly 1
            self._ppf[sgn] = PchipInterpolator(knots, zs, extrapolate=False)
        tot = masses[+1] + masses[-1]
        self.p_neg = masses[-1] / tot if tot > 0 else 0.0

    @staticmethod
    def _find_cap(scheme, sgn, lo, side_mass, cfg):
        cap = max(4.0 * lo, 1.0)
        for _ in range(200):
            tail = numint.integrate_semi_infinite(
                lambda z: scheme.h_eps(sgn * np.asarray(z)), cap, cfg, +1)
            if tail.value <= _TAIL_CUT * side_mass:
                return cap
            cap *= 1.5
        raise RuntimeError("could not cap the jump-size distribution")

    def draw(self, side_u: np.ndarray, mag_u: np.ndarray) -> np.ndarray:
        out = np.empty(side_u.shape)
        neg = side_u < self.p_neg
        for sgn, mask in ((-1, neg), (+1, ~neg)):
            if not np.any(mask):
                continue
            ppf = self._ppf[sgn]
            if ppf is None:
                out[mask] = 0.0
                continue
            q = np.clip(mag_u[mask], 0.0, 1.0 - 1e-16)
            out[mask] = sgn * ppf(q)
        return out


def _philox_rng(seed: int, stream_id: int, block: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(((stream_id & 0xFFFFFFFF) << 32) | (block & 0xFFFFFFFF))],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _probe_constant(fn, pts, rtol=1e-12):
    vals = np.asarray([float(fn(float(p))) for p in pts])
    spread = vals.max() - vals.min()
    scale = max(1.0, float(np.max(np.abs(vals))))
    return (spread <= rtol * scale), float(vals.mean())


class _Tabulated:
    """Vectorized x -> f(x) via a dense table (or a constant fast path)."""

    def __init__(self, fn, center: float, half_width: float = _WINDOW,
                 n: int = 2049):
        probe = np.linspace(center - half_width, center + half_width, 7)
        self.const, self.value = _probe_constant(fn, probe)
        if self.const:
            return
        self.grid = np.linspace(center - half_width, center + half_width, n)
        self.table = np.asarray([float(fn(float(g))) for g in self.grid])

    def __call__(self, x):
        if self.const:
            return np.full(np.shape(x), self.value) if np.ndim(x) else self.value
        return np.interp(x, self.grid, self.table)


class _SimContext:
    def __init__(self, mdl: model_mod.ModelSpec, sim: SimScheme, x0: float,
                 cfg: numint.QuadratureConfig | None = None):
        cfg = cfg or numint.DEFAULT_CONFIG
        self.model = mdl
        self.scheme = make_truncation(mdl, sim.eps, cfg)
        self.center = x0
        self.beps = _Tabulated(lambda xx: compensated_drift(self.scheme, xx, cfg), x0)
        if sim.small_jump_mode == "gaussian-substitute":
            gm = mdl.jump_gen

            def c2_of(xx):
                def psi(z):
                    z = np.asarray(z, dtype=float)
                    gz = np.asarray(gm(xx, z), dtype=float)
                    ratio = np.where(z != 0.0, gz / np.where(z != 0.0, z, 1.0),
                                     float(gm.d_z(xx, 0.0)))
                    return ratio * ratio

                r = numint.integrate_compensated(psi, self.scheme.hbar_eps,
                                                 bound=self.scheme.eps, cfg=cfg)
                return r.value

            self.c2 = _Tabulated(c2_of, x0)
        else:
            self.c2 = None
        self.sampler = (JumpSampler(self.scheme, cfg=cfg)
                        if self.scheme.lambda_eps > 0 else None)

    def covers(self, x0: float) -> bool:
        return abs(x0 - self.center) <= 0.25 * _WINDOW

    def sigma_eff(self, x):
        s = np.asarray(self.model.vol(x), dtype=float)
        if self.c2 is None:
            return s
        return np.sqrt(s * s + np.maximum(self.c2(x), 0.0))


_context_cache: dict = {}


def _get_context(mdl, sim: SimScheme, x0: float) -> _SimContext:
    key = (id(mdl), sim.eps, sim.small_jump_mode)
    ctx = _context_cache.get(key)
    if ctx is None or ctx.model is not mdl or not ctx.covers(x0):
        ctx = _SimContext(mdl, sim, x0)
        _context_cache[key] = ctx
    return ctx


def _simulate_block(ctx: _SimContext, sim: SimScheme, x: float, t: float,
                    n: int, block: int) -> np.ndarray:
    rng = _philox_rng(sim.seed, sim.stream_id, block)
    X = np.full(n, float(x))
    lam = ctx.scheme.lambda_eps if sim.big_jumps else 0.0

    if lam > 0:
        N = rng.poisson(lam * t, n)
        kmax = int(N.max()) if n else 0
    else:
        N = np.zeros(n, dtype=np.int64)
        kmax = 0
    if kmax > 0:
        times = rng.uniform(0.0, t, (n, kmax))
        cols = np.arange(kmax)[None, :]
        times = np.where(cols < N[:, None], times, t)
        times.sort(axis=1)
        side_u = rng.uniform(size=(n, kmax))
        mag_u = rng.uniform(size=(n, kmax))
        J = ctx.sampler.draw(side_u, mag_u)
    cur = np.zeros(n)
    gm = ctx.model.jump_gen
    for j in range(kmax + 1):
        end = times[:, j] if j < kmax else np.full(n, t)
        seg = np.maximum(end - cur, 0.0)
        k = np.maximum(np.ceil(seg * sim.n_steps), 1.0)
        dt_full = seg / k
        sub_max = int(k.max())
        for s in range(sub_max):
            dt = np.where(s < k, dt_full, 0.0)
            Z = rng.standard_normal(n)
            drift = np.asarray(ctx.beps(X), dtype=float)
            vol = np.asarray(ctx.sigma_eff(X), dtype=float)
            X = X + drift * dt + vol * np.sqrt(dt) * Z
        cur = end
        if j < kmax:
            live = j < N
            if np.any(live):
                jump = np.asarray(gm(X, J[:, j]), dtype=float)
                X = np.where(live, X + jump, X)
    return X


def simulate_terminal(mdl: model_mod.ModelSpec, sim: SimScheme, x: float,
                      t: float, n: int, threads: int = 1) -> np.ndarray:
    """n samples of X_t(x) under the scheme ``sim``.

    Paths are generated in fixed blocks of 2^19; block b uses the Philox
    counter stream keyed by (seed, stream_id, b), so the result is
    reproducible and independent of ``threads``.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return np.full(n, float(x))
    ctx = _get_context(mdl, sim, x)
    sizes = []
    left = n
    while left > 0:
        sizes.append(min(BLOCK, left))
        left -= sizes[-1]
    if threads > 1 and len(sizes) > 1:
        out = [None] * len(sizes)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(_simulate_block, ctx, sim, x, t, sz, b): b
                    for b, sz in enumerate(sizes)}
            for fut, b in futs.items():
                out[b] = fut.result()
        return np.concatenate(out)
    return np.concatenate([_simulate_block(ctx, sim, x, t, sz, b)
                           for b, sz in enumerate(sizes)])


def _paired_terminals(ctx: _SimContext, sim: SimScheme, x: float, t: float,
                      n: int, block: int = 0):
    """(coarse, fine) terminal values driven by one shared Brownian path and
    one shared jump skeleton; fine uses 2x the Euler resolution."""
    rng = _philox_rng(sim.seed, sim.stream_id, block)
    lam = ctx.scheme.lambda_eps if sim.big_jumps else 0.0
    if lam > 0:
        N = rng.poisson(lam * t, n)
        kmax = int(N.max()) if n else 0
    else:
        N = np.zeros(n, dtype=np.int64)
        kmax = 0
    if kmax > 0:
        times = rng.uniform(0.0, t, (n, kmax))
        cols = np.arange(kmax)[None, :]
        times = np.where(cols < N[:, None], times, t)
        times.sort(axis=1)
        J = ctx.sampler.draw(rng.uniform(size=(n, kmax)), rng.uniform(size=(n, kmax)))
    Xc = np.full(n, float(x))
    Xf = np.full(n, float(x))
    cur = np.zeros(n)
    gm = ctx.model.jump_gen
    for j in range(kmax + 1):
        end = times[:, j] if j < kmax else np.full(n, t)
        seg = np.maximum(end - cur, 0.0)
        kc = np.maximum(np.ceil(seg * sim.n_steps), 1.0)
        dtc = seg / kc
        dtf = 0.5 * dtc
        sub_max = int(kc.max())
        for s in range(sub_max):
            live = s < kc
            dW = np.zeros(n)
            for _half in range(2):
                Z = rng.standard_normal(n)
                dt_half = np.where(live, dtf, 0.0)
                inc = np.sqrt(dt_half) * Z
                Xf = Xf + np.asarray(ctx.beps(Xf), dtype=float) * dt_half \
                    + np.asarray(ctx.sigma_eff(Xf), dtype=float) * inc
                dW += inc
            dt_c = np.where(live, dtc, 0.0)
            Xc = Xc + np.asarray(ctx.beps(Xc), dtype=float) * dt_c \
                + np.asarray(ctx.sigma_eff(Xc), dtype=float) * dW
        cur = end
        if j < kmax:
            liveJ = j < N
            if np.any(liveJ):
                Xc = np.where(liveJ, Xc + np.asarray(gm(Xc, J[:, j]), dtype=float), Xc)
                Xf = np.where(liveJ, Xf + np.asarray(gm(Xf, J[:, j]), dtype=float), Xf)
    return Xc, Xf


def tune_n_steps(mdl, sim: SimScheme, x: float, t: float,
                 n_pilot: int = 65536, max_doublings: int = 6) -> SimScheme:
    """Double n_steps until a common-random-number pair of runs (one at the
    current resolution, one at twice it) agrees within half a standard error
    of the sample mean (Euler step-bias control)."""
    current = sim
    for _ in range(max_doublings):
        ctx = _get_context(mdl, current, x)
        coarse, fine = _paired_terminals(ctx, current, x, t, n_pilot)
        se = float(np.std(fine)) / math.sqrt(n_pilot)
        if abs(float(np.mean(fine - coarse))) <= 0.5 * max(se, 1e-300):
            return current
        current = replace(current, n_steps=current.n_steps * 2)
    return current


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def estimate_tail(samples: np.ndarray, x: float, y: float,
                  provenance: tuple | None = None) -> MCEstimate:
    """P(X_t(x) >= x+y) with the Bernoulli standard error."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("samples must be nonempty")
    n = samples.size
    p = float(np.count_nonzero(samples >= x + y)) / n
    se = math.sqrt(p * (1.0 - p) / n)
    return MCEstimate(mean=p, std_error=se, n_samples=n, seed_provenance=provenance)


def default_bandwidth(n: int, sample_std: float, y: float) -> float:
    """Plug-in rate with a floor: max(0.02*y, 2*n^(-1/5)*std)."""
    return max(0.02 * y, 2.0 * n ** (-0.2) * sample_std)


def estimate_density(samples: np.ndarray, x: float, y: float,
                     bandwidth_policy=None,
                     provenance: tuple | None = None) -> MCEstimate:
    """Transition density p_t(x+y; x) via a central difference of the
    empirical tail; the standard error combines the binomial variances of the
    two tail estimates."""
    samples = np.asarray(samples)
    n = samples.size
    if n < 1:
        raise ValueError("samples must be nonempty")
    policy = bandwidth_policy or default_bandwidth
    delta = float(policy(n, float(np.std(samples)), y))
    if not 0.0 < delta <= 0.5 * y:
        raise ValueError(f"bandwidth {delta} must lie in (0, y/2]")
    lo = estimate_tail(samples, x, y - delta)
    hi = estimate_tail(samples, x, y + delta)
    dens = (lo.mean - hi.mean) / (2.0 * delta)
    se = math.sqrt(lo.std_error**2 + hi.std_error**2) / (2.0 * delta)
    return MCEstimate(mean=dens, std_error=se, n_samples=n, seed_provenance=provenance)


def estimate_call_price(mdl, S0: float, K: float, t: float, n: int,
                        sim: SimScheme, threads: int = 1) -> MCEstimate:
    """E(S_t - K)_+ for the exponential model S = exp(X), X_0 = ln(S0)."""
    if K <= S0:
        raise ValueError("OTM only: strike must exceed spot")
    x0 = math.log(S0)
    X = simulate_terminal(mdl, sim, x0, t, n, threads=threads)
    payoff = np.maximum(np.exp(X) - K, 0.0)
    mean = float(np.mean(payoff))
    se = float(np.std(payoff)) / math.sqrt(n)
    return MCEstimate(mean=mean, std_error=se, n_samples=n,
                      seed_provenance=(sim.seed, sim.stream_id))


@dataclass(frozen=True)
class ExpansionFit:
    A1: float
    A2: float
    C3: float
    cov: np.ndarray  # covariance of (A1, A2, C3)

    @property
    def se_A1(self):
        return math.sqrt(max(self.cov[0, 0], 0.0))

    @property
    def se_A2(self):
        return math.sqrt(max(self.cov[1, 1], 0.0))


def fit_expansion_coeffs(t_grid, tail_estimates) -> ExpansionFit:
    """Weighted least squares of P(t) against t*A1 + (t^2/2)*A2 + t^3*C3.

    Weights are 1/std_error^2; exact (zero-noise) inputs fall back to an
    unweighted fit.  Returns the coefficients and their covariance.
    """
    t = np.asarray([float(tt) for tt in t_grid])
    if t.size < 4:
        raise ValueError("need at least 4 grid points to fit three coefficients")
    if np.any(np.diff(t) <= 0) or np.any(t <= 0):
        raise ValueError("t_grid must be strictly increasing and positive")
    p = np.asarray([e.mean for e in tail_estimates])
    se = np.asarray([e.std_error for e in tail_estimates])
    if p.size != t.size:
        raise ValueError("one tail estimate per grid point required")
    if np.any(se > 0):
        floor = max(se.max() * 1e-9, 1e-300)
        w = 1.0 / np.maximum(se, floor) ** 2
    else:
        w = np.ones_like(t)
    X = np.column_stack([t, 0.5 * t * t, t**3])
    Xw = X * np.sqrt(w)[:, None]
    pw = p * np.sqrt(w)
    gram = Xw.T @ Xw
    try:
        cov = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"degenerate design matrix: {exc}") from None
    beta = cov @ (Xw.T @ pw)
    return ExpansionFit(A1=float(beta[0]), A2=float(beta[1]), C3=float(beta[2]),
                        cov=cov)
