"""Heat-kernel envelopes: the annulus convolution Γ, q_t and ground-state envelopes."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .assumptions import CheckReport, Condition, Verdict
from .errors import ConvergenceError, DimensionError, DomainError, QuadratureError
from .rates import ModelSpec


class Method(str, Enum):
    QUADRATURE = "Quadrature"
    MONTE_CARLO = "MonteCarlo"


@dataclass(frozen=True)
class GammaEstimate:
    """Γ(τ, x, y) stored as a natural log; ``log_ci_halfwidth`` is log of the CI half-width."""

    log_value: float
    log_ci_halfwidth: float
    method: Method
    n_samples: int = 0
    std_error: float = 0.0

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    def to_dict(self) -> dict:
        return {"value_log": self.log_value, "ci_halfwidth_log": self.log_ci_halfwidth,
                "method": self.method.value}


@dataclass(frozen=True)
class EnvelopePoint:
    x: tuple
    y: tuple
    tau: float
    gamma_value: float          # log Γ
    q_envelope_lower: float     # log
    q_envelope_upper: float     # log


def _vec(x, d):
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.shape != (d,):
        raise DimensionError(f"expected a {d}-vector, got shape {v.shape}")
    return v


def _log_f1(spec: ModelSpec, r):
    """log f₁(r) with f₁ = f ∧ 1; r = 0 maps to 0."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        x = np.log(np.maximum(r, 1e-300))
    return np.minimum(spec.f.log_at(x), 0.0)


def _log_g(spec: ModelSpec, r):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        return spec.g.log_at(np.log(np.maximum(r, 1e-300)))


def _log_integrand(spec, tau, x, y, z):
    """log of f₁(|x−z|) f₁(|z−y|) e^{−τ g(|z|)}, vectorized over rows of z."""
    z = np.atleast_2d(z)
    dx = np.linalg.norm(z - x, axis=1)
    dy = np.linalg.norm(z - y, axis=1)
    rz = np.linalg.norm(z, axis=1)
    with np.errstate(over="ignore"):
        return _log_f1(spec, dx) + _log_f1(spec, dy) - tau * np.exp(_log_g(spec, rz))


# ---------------------------------------------------------------------------
# quadrature


def _quad_1d(spec, tau, x, y, lo, hi, offset, kink):
    xs, ys = float(x[0]), float(y[0])
    pts = sorted({p for p in (xs, ys, xs - kink, xs + kink, ys - kink, ys + kink) if lo < p < hi})
    edges = [lo] + pts + [hi]
    total, err = 0.0, 0.0

    def fun(z):
        return math.exp(float(_log_integrand(spec, tau, x, y, np.array([[z]]))[0]) - offset)

    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            val, e = integrate.quad(fun, a, b, epsabs=0.0, epsrel=1e-10, limit=400)
            total += val
            err += e
    return total, err


def _quad_nd(spec, tau, x, y, r_lo, r_hi, offset, d):
    # spherical coordinates centered at the origin; integrand is not radial
    if d == 2:
        def fun(phi, r):
            z = np.array([[r * math.cos(phi), r * math.sin(phi)]])
            return r * math.exp(float(_log_integrand(spec, tau, x, y, z)[0]) - offset)
        pts_r = sorted({p for p in (np.linalg.norm(x), np.linalg.norm(y)) if r_lo < p < r_hi})
        edges = [r_lo] + pts_r + [r_hi]
        total = err = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            val, e = integrate.nquad(fun, [(0.0, 2 * math.pi), (a, b)],
                                     opts=[{"epsrel": 1e-6, "limit": 200}, {"epsrel": 1e-6, "limit": 200}])
            total += val
            err += e
        return total, err

    def fun3(phi, c, r):
        s = math.sqrt(max(0.0, 1 - c * c))
        z = np.array([[r * s * math.cos(phi), r * s * math.sin(phi), r * c]])
        return r * r * math.exp(float(_log_integrand(spec, tau, x, y, z)[0]) - offset)
    opts = {"epsrel": 1e-5, "limit": 100}
    val, e = integrate.nquad(fun3, [(0.0, 2 * math.pi), (-1.0, 1.0), (r_lo, r_hi)],
                             opts=[opts, opts, opts])
    return val, e


def _gamma_quadrature(spec, tau, x, y, d) -> GammaEstimate:
    rho = spec.rho
    r_hi = max(np.linalg.norm(x), np.linalg.norm(y))
    r_lo = rho - 1.0
    if d > 3:
        raise DimensionError("quadrature path needs d <= 3")
    # normalize by the largest value at the natural peaks to keep exp() in range
    probes = np.array([x, y, x * (r_lo + 1e-9) / np.linalg.norm(x),
                       y * (r_lo + 1e-9) / np.linalg.norm(y)])
    offset = float(np.max(_log_integrand(spec, tau, x, y, probes)))
    if d == 1:
        kink = spec.operator.f1_kink_radius()
        pos, e1 = _quad_1d(spec, tau, x, y, r_lo, r_hi, offset, kink)
        neg, e2 = _quad_1d(spec, tau, x, y, -r_hi, -r_lo, offset, kink)
        val, err = pos + neg, e1 + e2
    else:
        val, err = _quad_nd(spec, tau, x, y, r_lo, r_hi, offset, d)
    if not val > 0:
        raise ConvergenceError("quadrature returned a non-positive value")
    if err > 1e-3 * val:
        raise QuadratureError(f"relative quadrature error {err / val:.2e} exceeds 1e-3")
    norm = float(_log_f1(spec, np.linalg.norm(x)) + _log_f1(spec, np.linalg.norm(y)))
    log_val = math.log(val) + offset - norm
    return GammaEstimate(log_val, math.log(max(err, 1e-300)) + offset - norm, Method.QUADRATURE,
                         std_error=err * math.exp(offset - norm))


# ---------------------------------------------------------------------------
# importance sampling

MIXTURE = (0.4, 0.4, 0.2)


def _unit_dirs(rng, n, d):
    if d == 1:
        return rng.choice([-1.0, 1.0], size=(n, 1))
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sphere_area(d):
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def _log_heavy_density(z, center, d):
    # density d/(ω_d (1+s)^{d+1}) at distance s from the center; integrates to 1
    s = np.linalg.norm(z - center, axis=1)
    return math.log(d / _sphere_area(d)) - (d + 1) * np.log1p(s)


def _sample_heavy(rng, n, center, d):
    u = rng.random(n) ** (1.0 / d)
    s = u / (1.0 - u)
    return center + _unit_dirs(rng, n, d) * s[:, None]


def _shell_bounds(spec, r_hi):
    return spec.rho - 1.0, min(spec.rho + 1.0, r_hi)


def _log_shell_density(z, lo, hi, d):
    r = np.linalg.norm(z, axis=1)
    vol = _sphere_area(d) / d * (hi ** d - lo ** d)
    return np.where((r > lo) & (r < hi), -math.log(vol), -np.inf)


def _sample_shell(rng, n, lo, hi, d):
    r = (lo ** d + rng.random(n) * (hi ** d - lo ** d)) ** (1.0 / d)
    return _unit_dirs(rng, n, d) * r[:, None]


def _mc_stream(spec, tau, x, y, d, n, seed_seq):
    """Log importance weights for one stream (zero weight outside the annulus)."""
    rng = np.random.default_rng(seed_seq)
    r_hi = max(np.linalg.norm(x), np.linalg.norm(y))
    lo, hi = _shell_bounds(spec, r_hi)
    comp = rng.choice(3, size=n, p=MIXTURE)
    z = np.empty((n, d))
    for k, sampler in enumerate((lambda m: _sample_heavy(rng, m, x, d),
                                 lambda m: _sample_heavy(rng, m, y, d),
                                 lambda m: _sample_shell(rng, m, lo, hi, d))):
        idx = comp == k
        z[idx] = sampler(int(idx.sum()))
    log_q = logsumexp(np.stack([_log_heavy_density(z, x, d), _log_heavy_density(z, y, d),
                                _log_shell_density(z, lo, hi, d)]),
                      axis=0, b=np.array(MIXTURE)[:, None])
    r = np.linalg.norm(z, axis=1)
    inside = (r > spec.rho - 1.0) & (r < r_hi)
    lw = np.full(n, -np.inf)
    lw[inside] = _log_integrand(spec, tau, x, y, z[inside]) - log_q[inside]
    return lw


def _gamma_monte_carlo(spec, tau, x, y, d, samples, seed, n_batches, threads) -> GammaEstimate:
    if samples < n_batches * 10:
        raise ConvergenceError("too few samples for batch means")
    streams = np.random.SeedSequence(seed).spawn(n_batches)
    sizes = [samples // n_batches + (1 if i < samples % n_batches else 0) for i in range(n_batches)]
    jobs = list(zip(sizes, streams))
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda j: _mc_stream(spec, tau, x, y, d, j[0], j[1]), jobs))
    else:
        parts = [_mc_stream(spec, tau, x, y, d, m, s) for m, s in jobs]
    # fixed reduction order: batch means in stream order
    shift = max(float(np.max(p)) for p in parts)
    if not math.isfinite(shift):
        raise ConvergenceError("no sample landed in the annulus")
    means = np.array([np.mean(np.exp(p - shift)) for p in parts])
    mean = float(np.mean(means))
    se = float(np.std(means, ddof=1) / math.sqrt(n_batches))
    norm = float(_log_f1(spec, np.linalg.norm(x)) + _log_f1(spec, np.linalg.norm(y)))
    if not mean > 0:
        raise ConvergenceError("Monte Carlo mean is zero")
    half = 1.96 * se
    return GammaEstimate(math.log(mean) + shift - norm,
                         (math.log(half) if half > 0 else -math.inf) + shift - norm,
                         Method.MONTE_CARLO, n_samples=samples,
                         std_error=se * math.exp(shift - norm))


def gamma_kernel(spec: ModelSpec, tau: float, x, y, method=Method.QUADRATURE, *,
                 samples: int = 200_000, seed: int = 0, n_batches: int = 32,
                 threads: int = 1) -> GammaEstimate:
    """Γ(τ,x,y): annulus integral of f₁(|x−z|)f₁(|z−y|)e^{−τg(|z|)} over f₁(|x|)f₁(|y|).

    The annulus is ρ−1 < |z| < |x| ∨ |y|; Γ vanishes unless |x|, |y| > ρ.
    """
    if not tau > 0:
        raise DomainError("tau must be positive")
    d = spec.operator.d
    x, y = _vec(x, d), _vec(y, d)
    method = Method(method)
    if np.linalg.norm(x) <= spec.rho or np.linalg.norm(y) <= spec.rho:
        return GammaEstimate(-math.inf, -math.inf, method)
    if tuple(y) < tuple(x):
        x, y = y, x   # canonical order makes Γ(x, y) = Γ(y, x) bit for bit
    if method == Method.QUADRATURE:
        return _gamma_quadrature(spec, tau, x, y, d)
    return _gamma_monte_carlo(spec, tau, x, y, d, samples, seed, n_batches, threads)


# ---------------------------------------------------------------------------
# envelopes


def q_envelope(spec: ModelSpec, t: float, x, y, method=Method.QUADRATURE, **kw):
    """(log lower, log upper) of C^{∓1} max{1, e^{λ₀t} Γ(K̃t or Kt, x, y)}."""
    if t < spec.T:
        raise DomainError(f"t = {t} below the configured T = {spec.T}")
    lc = math.log(spec.C_env)
    lo = gamma_kernel(spec, spec.K_tilde * t, x, y, method, **kw).log_value
    hi = gamma_kernel(spec, spec.K * t, x, y, method, **kw).log_value
    return (-lc + max(0.0, spec.lambda0 * t + lo), lc + max(0.0, spec.lambda0 * t + hi))


def envelope_point(spec: ModelSpec, t: float, x, y) -> EnvelopePoint:
    lower, upper = q_envelope(spec, t, x, y)
    g = gamma_kernel(spec, spec.K * t, x, y).log_value
    return EnvelopePoint(tuple(np.atleast_1d(x)), tuple(np.atleast_1d(y)), spec.K * t, g, lower, upper)


def groundstate_envelope(spec: ModelSpec, x):
    """(log lower, log upper) of C₁₀^{∓1} f₁(|x|)/g(|x|)."""
    r = float(np.linalg.norm(np.atleast_1d(x)))
    core = float(_log_f1(spec, r) - _log_g(spec, r)) if r > 0 else -float(_log_g(spec, 0.0))
    lc = math.log(spec.C10)
    return core - lc, core + lc


def groundstate_mass(spec: ModelSpec) -> float:
    """∫ (upper ground-state envelope)² dx by radial quadrature; inf if divergent."""
    d = spec.operator.d
    lc = 2 * math.log(spec.C10) + math.log(_sphere_area(d))

    def fun(s):  # r = e^s
        return math.exp(lc + d * s + 2 * float(_log_f1(spec, math.exp(s))) - 2 * float(spec.g.log_at(s)))

    head, _ = integrate.quad(lambda r: math.exp(lc + (d - 1) * math.log(r)) if r > 0 else 0.0,
                             0.0, min(1.0, spec.operator.f1_kink_radius()))
    lo = math.log(min(1.0, spec.operator.f1_kink_radius()))
    edges = np.linspace(lo, lo + 60.0, 13)
    parts = [integrate.quad(fun, a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:])]
    if parts[-1] > 1e-6 * sum(parts) and parts[-1] >= 0.5 * parts[-2]:
        return math.inf
    # head covers [0, min(1, kink)) where f₁ = 1 and g is at its plateau
    head *= math.exp(-2 * float(_log_g(spec, 0.5)))
    return head + sum(parts)


# ---------------------------------------------------------------------------
# convolution inequalities


def _log_conv_1d(spec, dist, rel=1e-9):
    kink = spec.operator.f1_kink_radius()

    def fun(z):
        return math.exp(float(_log_f1(spec, abs(z)) + _log_f1(spec, abs(dist - z))))
    pts = sorted({0.0, dist, -kink, kink, dist - kink, dist + kink})
    edges = [pts[0] - 10.0 ** k for k in range(12, -1, -1)] + pts + \
        [pts[-1] + 10.0 ** k for k in range(0, 13)]
    edges = sorted(set(edges))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(fun, a, b, epsrel=rel, limit=200)[0]
    return math.log(total)


def _log_conv_radial(spec, dist, d, rel=1e-8):
    # ∫ f₁(|z|) f₁(|w−z|) dz with |w| = dist via polar (d=2) or bipolar (d=3) coordinates
    def lf(r):
        return float(_log_f1(spec, r))
    edges = [0.0, 0.5, 1.0] + [10.0 ** k for k in range(1, 9)]
    edges = sorted(set(edges + [dist]))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if d == 3:
            def inner(rho):
                val, _ = integrate.quad(lambda s: s * math.exp(lf(s)), abs(dist - rho), dist + rho,
                                        epsrel=rel, limit=200)
                return rho * math.exp(lf(rho)) * val
            total += 2 * math.pi / dist * integrate.quad(inner, a, b, epsrel=rel, limit=200)[0]
        else:
            def inner(rho):
                val, _ = integrate.quad(
                    lambda p: math.exp(lf(math.sqrt(max(rho * rho + dist * dist - 2 * rho * dist * math.cos(p), 0.0)))),
                    0.0, math.pi, epsrel=rel, limit=200)
                return 2 * rho * math.exp(lf(rho)) * val
            total += integrate.quad(inner, a, b, epsrel=rel, limit=200)[0]
    return math.log(total)


def _conv_ratio(spec, x, y, rel):
    d = spec.operator.d
    dist = float(np.linalg.norm(x - y))
    if dist == 0:
        dist = 1e-9
    lc = _log_conv_1d(spec, dist, rel) if d == 1 else _log_conv_radial(spec, dist, d, rel)
    return math.exp(lc - float(_log_f1(spec, dist)))


def check_DJP(spec: ModelSpec, sample_pairs: Sequence, refine: bool = True) -> CheckReport:
    """Empirical C₈ (convolution) and C₉ (pointwise) over the sample pairs."""
    d = spec.operator.d
    if d > 3:
        raise DimensionError("convolution quadrature needs d <= 3")
    pairs = [(_vec(x, d), _vec(y, d)) for x, y in sample_pairs]
    c8 = max(_conv_ratio(spec, x, y, 1e-6) for x, y in pairs)
    c8_ref = max(_conv_ratio(spec, x, y, 1e-10) for x, y in pairs) if refine else c8
    c9 = max(math.exp(float(_log_f1(spec, np.linalg.norm(x)) + _log_f1(spec, np.linalg.norm(x - y))
                            - _log_f1(spec, np.linalg.norm(y)))) for x, y in pairs)
    stable = abs(c8_ref / c8 - 1) <= 0.05
    verdict = Verdict.PASS if (stable and math.isfinite(c8_ref) and math.isfinite(c9)) else Verdict.INCONCLUSIVE
    return CheckReport(Condition.A1, verdict, c8_ref,
                       {"C8": c8_ref, "C8_coarse": c8, "C9": c9, "pairs": len(pairs)})


def gamma_battery(d: int = 1):
    """Twelve (τ, x, y) points used for the quadrature vs Monte Carlo cross-check."""
    pts = []
    for tau in (0.5, 1.0, 2.0):
        for x, y in ((10.0, 10.0), (5.0, -8.0), (3.0, 20.0), (-15.0, -4.0)):
            pts.append((tau, np.array([x] + [0.0] * (d - 1)), np.array([y] + [0.0] * (d - 1))))
    return pts
