"""Numerical checks of the structural assumptions and the regime classifier."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import NotEventuallyMonotone, QuadratureError
from .profiles import OperatorFamily, Profile, ProfileKind, PotentialFamily
from .rates import (LN10, POINTS_PER_DECADE, X_WINDOW, ModelSpec, WitnessSpec, analytic_b,
                    certify_r0)


class Condition(str, Enum):
    A1 = "A1"
    A2_PROFILE = "A2profile"
    A3 = "A3"
    DECAY_TO_ZERO = "DecayToZero"
    CONDITION_C = "UltracontraCondC"
    ETA = "EtaCondition"
    SIGMA = "SigmaCondition"
    OMEGA = "CondRateOmega"


class Verdict(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"
    INCONCLUSIVE = "Inconclusive"


class Regime(str, Enum):
    ULTRACONTRACTIVE = "AsymptoticallyUltracontractive"
    L1_ORLICZ = "L1OrliczRegime"
    BORDERLINE = "Borderline"


@dataclass
class CheckReport:
    condition: Condition
    verdict: Verdict
    empirical_constant: Optional[float] = None
    evidence: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == Verdict.PASS

    def to_dict(self) -> dict:
        return {"condition": self.condition.value, "verdict": self.verdict.value,
                "empirical_constant": _jsonable(self.empirical_constant),
                "evidence": {k: _jsonable(v) for k, v in self.evidence.items()}}


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if not math.isfinite(v):
            return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


# ---------------------------------------------------------------------------
# (A1): convolution of f with itself away from the diagonal


def _quad(fun, a, b, **kw):
    """quad over [a, b] split into geometric panels when the range is long."""
    if b <= a:
        return 0.0
    edges = [a]
    if a > 0:
        while edges[-1] * 10 < b:
            edges.append(edges[-1] * 10)
    edges.append(b)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(fun, lo, hi, epsabs=0.0, epsrel=1e-9, limit=200, **kw)
        if err > 1e-6 * abs(val) + 1e-300:
            raise QuadratureError(f"quadrature error {err:.3g} on [{lo:.3g}, {hi:.3g}]")
        total += val
    return total


def _a1_shell_d1(lf, x: float, r_lo: float, r_hi: float) -> float:
    """∫ over r_lo < |y| < r_hi, |y| > 1, |x−y| > 1 of f(|x−y|) f(|y|) / f(x) dy in d = 1.

    ``lf(r)`` is log f(r) − log f(x)/2 so products stay representable.
    """
    lo = max(r_lo, 1.0)
    # negative side: y = −s, |x − y| = x + s
    neg = _quad(lambda s: math.exp(lf(x + s) + lf(s)), lo, r_hi)
    pos = 0.0
    for a, b in ((lo, min(r_hi, x - 1)), (max(lo, x + 1), r_hi)):
        if b > a:
            pos += _quad(lambda y: math.exp(lf(abs(x - y)) + lf(y)), a, b)
    return neg + pos


def _a1_shell_d3(lf, x: float, r_lo: float, r_hi: float) -> float:
    # bipolar coordinates: dy = (2π/|x|) ρ s dρ ds on |ρ − s| ≤ |x| ≤ ρ + s
    def inner(rho):
        s_lo = max(1.0, abs(x - rho))
        s_hi = rho + x
        if s_hi <= s_lo:
            return 0.0
        val, _ = integrate.quad(lambda s: math.exp(lf(s) + lf(rho)) * s, s_lo, s_hi,
                                epsrel=1e-9, limit=200)
        return val * rho
    return 2 * math.pi / x * _quad(inner, max(r_lo, 1.0), r_hi)


def _a1_shell_d2(lf, x: float, r_lo: float, r_hi: float) -> float:
    def inner(rho):
        # |x − y| > 1  ⇔  cos φ < (ρ² + x² − 1)/(2ρx)
        c = (rho * rho + x * x - 1) / (2 * rho * x)
        phi_lo = 0.0 if c >= 1 else (math.pi if c <= -1 else math.acos(c))
        if phi_lo >= math.pi:
            return 0.0
        val, _ = integrate.quad(
            lambda p: math.exp(lf(math.sqrt(rho * rho + x * x - 2 * rho * x * math.cos(p))) + lf(rho)),
            phi_lo, math.pi, epsrel=1e-9, limit=200)
        return 2 * val * rho
    return _quad(inner, max(r_lo, 1.0), r_hi)


def _a1_shell_mc(lf, d: int, x: float, r_lo: float, r_hi: float, n=200_000, seed=0):
    rng = np.random.default_rng(seed)
    lo = max(r_lo, 1.0)
    # radius log-uniform on the shell, direction uniform on the sphere
    rho = np.exp(rng.uniform(math.log(lo), math.log(r_hi), n))
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    y = dirs * rho[:, None]
    y[:, 0] -= x
    dist = np.linalg.norm(y, axis=1)
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    log_jac = math.log(area * math.log(r_hi / lo)) + d * np.log(rho)
    vals = np.where(dist > 1, np.exp(lf(np.maximum(dist, 1.0)) + lf(rho) + log_jac), 0.0)
    return float(vals.mean())


def _a1_ratio(f: Profile, d: int, x: float, n_shells: int = 8):
    shell = {1: _a1_shell_d1, 2: _a1_shell_d2, 3: _a1_shell_d3}.get(d)
    half = 0.5 * float(f.log_eval(x))

    def lf(r):
        return f.log_eval(r) - half

    edges = [1.0] + [max(x, 2.0) * 10.0 ** k for k in range(n_shells)]
    parts = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        parts.append(shell(lf, x, lo, hi) if shell else _a1_shell_mc(lf, d, x, lo, hi))
    cum = np.cumsum(parts)
    inc = np.array(parts[2:])
    converged = bool(cum[-1] > 0 and inc[-1] <= 1e-4 * cum[-1]
                     and (inc[-1] < inc[-3] or inc[-1] <= 1e-12 * cum[-1]))
    diverging = bool(np.all(inc[-3:] >= 0.5 * inc[-4:-1]) and inc[-1] > 1e-4 * cum[-1])
    return float(cum[-1]), converged, diverging, float(inc[-1] / max(cum[-1], 1e-300))


def check_A1(spec: ModelSpec, x_grid=None, f: Optional[Profile] = None) -> CheckReport:
    """Empirical C3 = sup over x_grid of ∫ f(|x−y|) f(|y|) dy / f(|x|).

    The integral runs over |y| > 1, |x − y| > 1.  Deterministic quadrature for
    d ≤ 3, Monte Carlo for larger d.  The sup is re-evaluated on a refined grid
    (midpoints in log scale) and must agree to 5%.
    """
    f = spec.f if f is None else f
    d = spec.operator.d
    xs = np.geomspace(1.0, 1e3, 7) if x_grid is None else np.asarray(x_grid, dtype=float)
    xs = xs[xs >= 1]
    coarse = [_a1_ratio(f, d, float(x)) for x in xs]
    if any(c[2] for c in coarse):
        return CheckReport(Condition.A1, Verdict.FAIL, math.inf,
                           {"reason": "convolution integral diverges", "x_grid": list(xs),
                            "last_relative_increment": [c[3] for c in coarse]})
    mids = np.sqrt(xs[1:] * xs[:-1])
    fine = [_a1_ratio(f, d, float(x)) for x in mids]
    c3 = max(c[0] for c in coarse)
    c3_ref = max(c3, max((c[0] for c in fine), default=c3))
    stable = abs(c3_ref / c3 - 1) <= 0.05
    conv = all(c[1] for c in coarse + fine)
    verdict = Verdict.PASS if (stable and conv) else Verdict.INCONCLUSIVE
    i = int(np.argmax([c[0] for c in coarse]))
    return CheckReport(Condition.A1, verdict, c3_ref,
                       {"max_ratio": c3_ref, "coarse_max": c3, "location": float(xs[i]),
                        "refinement_depth": 2, "method": "quadrature" if d <= 3 else "montecarlo"})


# ---------------------------------------------------------------------------
# regime: g / |log f| → 0 versus g ≳ |log f|


def _far_x(spec: ModelSpec, n=400):
    hi = 690.0 if spec.operator.family == OperatorFamily.RELATIVISTIC else 1e300
    return np.geomspace(X_WINDOW, hi, n)


def _log_ratio(spec: ModelSpec, x):
    return spec.g.log_at(x) - spec.f.neglog_log_at(x)


def _ratio_scan(spec: ModelSpec) -> dict:
    g = spec.g
    x_lo = max(g.activation_log_radius(), math.log(spec.rho), 0.1)
    n = int(math.ceil((X_WINDOW - x_lo) / LN10 * POINTS_PER_DECADE)) + 1
    xw = np.linspace(x_lo, X_WINDOW, n)
    lw = _log_ratio(spec, xw)
    dw = np.diff(lw)
    up = np.nonzero(dw >= 0)[0]
    xf = _far_x(spec)
    lf = _log_ratio(spec, xf)
    df = np.diff(lf)
    tail = df[len(df) // 2:]
    lx = np.log(xf)
    s1 = (lf[-2] - lf[-3]) / (lx[-2] - lx[-3])
    s2 = (lf[-1] - lf[-2]) / (lx[-1] - lx[-2])
    return {"window": (float(np.exp(x_lo)), 1e12),
            "last_sign_change_r": float(np.exp(xw[up[-1] + 1])) if up.size else float(np.exp(x_lo)),
            "window_decreasing_after_change": bool(up.size == 0 or up[-1] < len(dw) - 1),
            "far_log_radius": (float(xf[0]), float(xf[-1])),
            "tail_decreasing": bool(np.all(tail < 0)),
            "tail_increasing": bool(np.all(tail > 0)),
            "log_ratio_last": float(lf[-1]),
            "tail_slopes": (float(s1), float(s2)),
            "tail_log_spread": float(np.max(lf[len(lf) // 2:]) - np.min(lf[len(lf) // 2:])),
            "last_three_rel_change": float(np.max(np.abs(np.expm1(lf[-3:] - lf[-1]))))}


def check_decay_to_zero(spec: ModelSpec, tol: float = 1e-3) -> CheckReport:
    """Eventual decrease of g/|log f| and its limit 0."""
    ev = _ratio_scan(spec)
    s1, s2 = ev["tail_slopes"]
    if ev["tail_decreasing"] and ev["window_decreasing_after_change"]:
        if ev["log_ratio_last"] < math.log(tol) or (s1 < -tol and s2 < -tol):
            verdict = Verdict.PASS
        elif ev["last_three_rel_change"] < 1e-4:
            verdict = Verdict.FAIL
        else:
            verdict = Verdict.INCONCLUSIVE
    elif ev["tail_increasing"] or ev["last_three_rel_change"] < 1e-4:
        verdict = Verdict.FAIL
    elif not ev["tail_decreasing"] and ev["tail_log_spread"] > 1.0:
        verdict = Verdict.FAIL   # oscillating, no eventual decrease
    else:
        verdict = Verdict.INCONCLUSIVE
    return CheckReport(Condition.DECAY_TO_ZERO, verdict, math.exp(ev["log_ratio_last"]), ev)


def check_condition_c(spec: ModelSpec, tol: float = 1e-3) -> CheckReport:
    """g ≥ C |log f| eventually, i.e. liminf g/|log f| > 0."""
    ev = _ratio_scan(spec)
    s1, s2 = ev["tail_slopes"]
    bounded_below = ev["tail_log_spread"] < -math.log(tol)
    if ev["tail_increasing"] or (bounded_below and min(s1, s2) > -tol
                                 and (ev["last_three_rel_change"] < 1e-4 or min(s1, s2) > tol)):
        verdict = Verdict.PASS
    elif (ev["tail_decreasing"] and (s1 < -tol and s2 < -tol or ev["log_ratio_last"] < math.log(tol))) \
            or not bounded_below:
        verdict = Verdict.FAIL
    else:
        verdict = Verdict.INCONCLUSIVE
    return CheckReport(Condition.CONDITION_C, verdict, math.exp(ev["log_ratio_last"]), ev)


def classify_regime(spec: ModelSpec) -> Regime:
    return classify_with_reports(spec)[0]


def classify_with_reports(spec: ModelSpec):
    c = check_condition_c(spec)
    dz = check_decay_to_zero(spec)
    if c.passed:
        regime = Regime.ULTRACONTRACTIVE
    elif dz.passed:
        regime = Regime.L1_ORLICZ
    else:
        regime = Regime.BORDERLINE
    return regime, [c, dz]


# ---------------------------------------------------------------------------
# witness hypotheses


_ETA_INTEGRAL = {ProfileKind.ETA_R_LOG2: 2.0, ProfileKind.ETA_R_LOGR_LOGLOG2: 3.0}


def _eta_tail_integral(eta: Profile):
    """∫_1^∞ dr/η(r); closed form for built-ins, tail increments otherwise."""
    if eta.kind in _ETA_INTEGRAL:
        return _ETA_INTEGRAL[eta.kind], True
    if eta.kind == ProfileKind.ETA_POWER:
        p = eta.params["p"]
        return (1 / (p - 1), True) if p > 1 else (math.inf, False)
    # r = e^x, x = e^s: dr/η = exp(x + s − log η(e^x)) ds
    def piece(a, b):
        val, _ = integrate.quad(lambda s: math.exp(math.exp(s) + s - eta.log_at(math.exp(s))),
                                a, b, limit=200)
        return val
    head, _ = integrate.quad(lambda x: math.exp(x - eta.log_at(x)), 0.0, 1.0)
    edges = np.log(np.geomspace(1.0, 1e12, 13))
    incs = np.array([piece(a, b) for a, b in zip(edges[:-1], edges[1:])])
    total = head + incs.sum()
    ok = bool(incs[-1] <= 1e-3 * total and np.all(incs[-4:][1:] <= incs[-4:][:-1]))
    return float(total), ok


def _sigma_sup(spec: ModelSpec, sigma: Profile):
    x = np.linspace(0.0, X_WINDOW, int(X_WINDOW / LN10 * POINTS_PER_DECADE) + 1)
    ls = sigma.log_at(x)
    if np.any(ls >= x) or np.any(~np.isfinite(ls)):
        return math.inf, False, "sigma(r) >= r somewhere"
    lr = spec.f.log_at(ls) - spec.f.log_at(x)
    k = int(np.argmax(lr))
    last = x >= X_WINDOW - LN10
    growing = bool(last[k] and lr[k] - np.max(lr[~last]) > 1e-6)
    return float(math.exp(min(lr[k], 709.0))), not growing, f"sup at r={math.exp(x[k]):.4g}"


def check_sigma(spec: ModelSpec, w: WitnessSpec) -> CheckReport:
    sup, finite, note = _sigma_sup(spec, w.sigma)
    return CheckReport(Condition.SIGMA, Verdict.PASS if finite else Verdict.FAIL, sup,
                       {"sup_f_sigma_over_f": sup, "note": note, "window": (1.0, 1e12)})


def _extrapolated_b(spec: ModelSpec, w: WitnessSpec):
    xs = _far_x(spec, 40)[-3:]
    ratio = ((spec.operator.d - 1) * xs + w.log_eta_at(xs)) / np.exp(spec.f.neglog_log_at(xs))
    return float(ratio[-1]), float(abs(ratio[-1] - ratio[-2]))


def check_witness(spec: ModelSpec, w: WitnessSpec) -> CheckReport:
    """b < 2, eventual decrease of H_t, σ < r with bounded f(σ)/f, and 1/η ∈ L¹."""
    b_num, b_change = _extrapolated_b(spec, w)
    b_an = analytic_b(spec.operator, w)
    b = b_num if b_an is None else b_an
    try:
        cert = certify_r0(spec, "H", w)
        h_ok, r0 = True, cert.r0
    except NotEventuallyMonotone:
        h_ok, r0 = False, math.inf
    sig = check_sigma(spec, w)
    eta_int, eta_ok = _eta_tail_integral(w.eta)
    ok = b < 2 and h_ok and sig.passed and eta_ok
    ev = {"b_numeric": b_num, "b_analytic": b_an, "b_last_change": b_change,
          "H_decreasing_from_r0": r0, "sigma_sup": sig.empirical_constant,
          "sigma_verdict": sig.verdict, "inverse_eta_integral": eta_int,
          "inverse_eta_integrable": eta_ok}
    return CheckReport(Condition.ETA, Verdict.PASS if ok else Verdict.FAIL, b, ev)


# ---------------------------------------------------------------------------
# ω of the small-s ratio condition


def analytic_omega(spec: ModelSpec) -> Optional[float]:
    fam = spec.potential.family
    if fam == PotentialFamily.POWER_ITERLOG:
        return 0.0
    if fam == PotentialFamily.POWER_LOG:
        return spec.potential.theta if spec.operator.family == OperatorFamily.FRACTIONAL else 0.0
    if fam == PotentialFamily.POWER:
        return spec.potential.theta if spec.operator.family == OperatorFamily.RELATIVISTIC else math.inf
    return None


def _omega_log_ratio(spec: ModelSpec, big_l, c, lam):
    f, g = spec.f, spec.g
    x1 = f.invert_log(np.log(c) - lam * big_l)
    x0 = f.invert_log(-big_l)
    return np.asarray(g.log_at(x1)) - np.asarray(g.log_at(x0))


def estimate_omega(spec: ModelSpec, lambdas=(1.0, 1.5, 2.0), cs=(0.5, 2.0)) -> CheckReport:
    """ω = max over (c, λ) of log_λ lim g(f⁻¹(c s^λ))/g(f⁻¹(s)) as s → 0.

    The limit is extrapolated from s = e^{−L}, L ∈ {1e100, 1e200, 1e300}
    (L ≤ 1e300 keeps log-radii finite), by a quadratic fit in 1/log L.
    """
    ls = np.array([1e100, 1e200, 1e300])
    u = 1 / np.log(ls)
    table = {}
    omega = 0.0
    stable = True
    for lam in lambdas:
        for c in cs:
            vals = np.array([float(_omega_log_ratio(spec, L, c, lam)) for L in ls])
            if not np.all(np.isfinite(vals)):
                table[(lam, c)] = math.inf
                omega = math.inf
                continue
            coef = np.polyfit(u, vals, 2)
            lim = float(np.polyval(coef, 0.0))
            lim2 = float(vals[-1] + (vals[-1] - vals[-2]) * u[-1] / (u[-2] - u[-1]))
            stable &= abs(lim - lim2) < 1e-4 * max(1.0, abs(lim))
            table[(lam, c)] = lim
            if lam > 1:
                omega = max(omega, lim / math.log(lam))
            elif lim > 1e-6:
                omega = math.inf
    an = analytic_omega(spec)
    verdict = Verdict.PASS if (stable and math.isfinite(omega)) else (
        Verdict.FAIL if not math.isfinite(omega) else Verdict.INCONCLUSIVE)
    ev = {"omega_numeric": omega, "omega_analytic": an,
          "log_limits": {f"lambda={k[0]},c={k[1]}": v for k, v in table.items()}}
    return CheckReport(Condition.OMEGA, verdict, an if an is not None else omega, ev)


def check_A3(spec: ModelSpec) -> CheckReport:
    """Doubling of g: the report carries the C6 used for K, K̃."""
    from .rates import doubling_constant
    try:
        c6 = doubling_constant(spec.potential)
    except Exception as exc:  # GridError
        return CheckReport(Condition.A3, Verdict.FAIL, None, {"reason": str(exc)})
    return CheckReport(Condition.A3, Verdict.PASS, c6,
                       {"analytic": spec.C6, "grid": (spec.potential.R0, 1e12)})


def a2_by_citation(spec: ModelSpec) -> CheckReport:
    """Relativistic (A2) is not checked numerically; it rests on the literature."""
    return CheckReport(Condition.A2_PROFILE, Verdict.PASS, None,
                       {"basis": "citation", "family": spec.operator.family.value})
