"""Constants, inverse-profile radii, rate functions and tail bounds.

All composites are evaluated as log-expressions in the log-radius ``x = log r``
and all levels are handled through ``log u``, so the asymptotic regime (u far
beyond 1e300) is reachable.  Linear-scale wrappers are thin conveniences.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from functools import cached_property, lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import (DomainError, GridError, HypothesisError, NotEventuallyMonotone,
                     RangeError)
from .profiles import (E, EE, OperatorFamily, OperatorSpec, PotentialFamily,
                       PotentialSpec, Profile, ProfileKind, solve_log_monotone)

LN10 = math.log(10.0)
X_WINDOW = math.log(1e12)
POINTS_PER_DECADE = 20


def _log1p_exp(z):
    """log(1 + e^z), overflow-safe."""
    z = np.asarray(z, dtype=float)
    return np.where(z > 30, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(np.minimum(z, 30))))


def _analytic_c6(potential: PotentialSpec) -> Optional[float]:
    th = potential.theta
    if potential.family == PotentialFamily.POWER:
        return 2.0 ** th
    if potential.family == PotentialFamily.POWER_LOG:
        return math.log(1 + E) ** th
    if potential.family == PotentialFamily.POWER_ITERLOG:
        return math.log(math.log(1 + EE)) ** th
    return None


def doubling_constant(potential: PotentialSpec, r_max: float = 1e12,
                      per_decade: int = POINTS_PER_DECADE) -> float:
    """Grid estimate of C6 = sup_{r >= R0} g(r+1)/g(r)."""
    g = potential.profile
    x0 = math.log(potential.R0)
    n = max(int(math.ceil((math.log(r_max) - x0) / LN10 * per_decade)), 2) + 1
    x = np.linspace(x0, math.log(r_max), n)
    ratio = g.log_at(x + _log1p_exp(-x)) - g.log_at(x)
    best = float(np.max(ratio))
    last = x >= math.log(r_max) - LN10
    if np.argmax(ratio) >= np.argmax(last) and best - float(np.max(ratio[~last])) > 1e-6:
        raise GridError("sup of g(r+1)/g(r) still growing in the last decade")
    return math.exp(best)


def _derive(potential: PotentialSpec):
    c6 = _analytic_c6(potential)
    if c6 is None:
        c6 = doubling_constant(potential)
    kt = 4.0 * potential.C2 * c6 * c6
    return 1.0 / kt, kt, c6


@dataclass(frozen=True)
class ModelSpec:
    """Operator + potential + constants.

    ``K``, ``K_tilde`` and ``C6`` left as None are derived from the potential
    (K = 1/K̃ = 1/(4 C2 C6²)).  ``C`` and ``C_tilde`` are the tail-bound
    prefactors, ``C_env`` the constant of the two-sided q_t envelope and
    ``C10`` the ground-state comparability constant.
    """

    operator: OperatorSpec
    potential: PotentialSpec
    t: float = 1.0
    K: Optional[float] = None
    K_tilde: Optional[float] = None
    kappa: float = 1.0
    kappa_tilde: float = 1.0
    lambda0: float = 0.0
    rho: float = 2.0
    C6: Optional[float] = None
    C: float = 1.0
    C_tilde: float = 1.0
    C_env: float = 1.0
    C10: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if self.K is None or self.K_tilde is None or self.C6 is None:
            k, kt, c6 = _derive(self.potential)
            for name, val in (("K", k), ("K_tilde", kt), ("C6", c6)):
                if getattr(self, name) is None:
                    object.__setattr__(self, name, val)
        for name in ("t", "K", "K_tilde", "kappa", "kappa_tilde"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not self.rho > 1:
            raise DomainError("rho must exceed 1")
        if self.C6 < 1:
            raise DomainError("C6 must be >= 1")

    def with_(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    @cached_property
    def f(self) -> Profile:
        return self.operator.profile

    @cached_property
    def g(self) -> Profile:
        return self.potential.profile

    @property
    def Kt(self) -> float:
        return self.K * self.t

    @property
    def Ktt(self) -> float:
        return self.K_tilde * self.t

    @property
    def x_cap(self) -> float:
        # exp(x) must stay finite for the relativistic profile
        return 700.0 if self.operator.family == OperatorFamily.RELATIVISTIC else 1e300

    def g_at(self, x):
        with np.errstate(over="ignore"):
            return np.exp(self.g.log_at(x))

    def log_f1_at(self, x):
        return np.minimum(self.f.log_at(x), 0.0)


def derive_constants(spec: ModelSpec):
    """(K, K̃, C6) from the constant recipe K = K̃⁻¹ = (4 C2 C6²)⁻¹."""
    k, kt, c6 = _derive(spec.potential)
    return k, kt, c6


# ---------------------------------------------------------------------------
# witness data


@dataclass(frozen=True)
class WitnessSpec:
    eta: Profile
    sigma: Profile

    def log_eta_at(self, x):
        return self.eta.log_at(x)

    def log_gap_at(self, x):
        return self.sigma.log_gap_at(x)

    def log_eta_over_gap_at(self, x):
        """log(η(r) / (r − σ(r))), with the common factor r cancelled exactly."""
        return self.eta.log_excess_at(x) - self.sigma.log_gap_excess_at(x)


def analytic_b(operator: OperatorSpec, w: WitnessSpec) -> Optional[float]:
    """b = lim ((d-1) log r + log η(r)) / |log f(r)| for built-in families."""
    k = w.eta.kind
    growth = {ProfileKind.ETA_R_LOG2: 1.0, ProfileKind.ETA_R_LOGR_LOGLOG2: 1.0}.get(k)
    if k == ProfileKind.ETA_POWER:
        growth = w.eta.params["p"]
    if growth is None:
        return None
    if operator.family == OperatorFamily.RELATIVISTIC:
        return 0.0
    return (operator.d - 1 + growth) / (operator.d + 2 * operator.a)


def numeric_b(operator: OperatorSpec, w: WitnessSpec, x_far: Optional[float] = None) -> float:
    f = operator.profile
    if x_far is None:
        x_far = 600.0 if operator.family == OperatorFamily.RELATIVISTIC else 1e12
    xs = np.array([x_far / 100, x_far / 10, x_far])
    ratio = ((operator.d - 1) * xs + w.log_eta_at(xs)) / np.exp(f.neglog_log_at(xs))
    return float(ratio[-1])


def limit_parameter_b(operator: OperatorSpec, w: WitnessSpec) -> float:
    b = analytic_b(operator, w)
    return numeric_b(operator, w) if b is None else b


# ---------------------------------------------------------------------------
# composites in log-radius


class Selector(str, Enum):
    G = "G"
    H = "H"
    F_EXP = "f_exp"


def log_G(spec: ModelSpec, x):
    """log G_t = 2 log f + K̃ t g."""
    return 2 * spec.f.log_at(x) + spec.Ktt * spec.g_at(x)


def log_H(spec: ModelSpec, w: WitnessSpec, x):
    """log H_t = 2 log f + (d-1) log r + log η + K̃ t g."""
    return (2 * spec.f.log_at(x) + (spec.operator.d - 1) * np.asarray(x) + w.log_eta_at(x)
            + spec.Ktt * spec.g_at(x))


def log_f_exp(spec: ModelSpec, x):
    """log of f·exp(K t g)."""
    return spec.f.log_at(x) + spec.Kt * spec.g_at(x)


def _composite(spec, selector, witness):
    selector = Selector(selector)
    if selector == Selector.G:
        return lambda x: log_G(spec, x)
    if selector == Selector.H:
        if witness is None:
            raise DomainError("H_t needs a witness")
        return lambda x: log_H(spec, witness, x)
    return lambda x: log_f_exp(spec, x)


def _refine_sign_change(fun, lo, hi, iters=80):
    """Bisection for the sign change of ``fun`` from >= 0 at lo to < 0 at hi."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fun(mid) >= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.spacing(max(abs(lo), abs(hi))):
            break
    return hi


@dataclass(frozen=True)
class R0Certificate:
    log_r0: float
    window_hi: float
    extended: bool
    grid_points: int

    @property
    def r0(self) -> float:
        return math.exp(self.log_r0) if self.log_r0 < 709 else math.inf


@lru_cache(maxsize=256)
def certify_r0(spec: ModelSpec, selector, witness: Optional[WitnessSpec] = None,
               x_cap: float = 1e15) -> R0Certificate:
    """Smallest grid-certified log-radius beyond which the composite decreases."""
    F = _composite(spec, selector, witness)
    x_lo = math.log(spec.rho)
    n = int(math.ceil((X_WINDOW - x_lo) / LN10 * POINTS_PER_DECADE)) + 1
    x = np.linspace(x_lo, X_WINDOW, n)
    extended = False
    vals = np.asarray(F(x), dtype=float)
    d = vals[2:] - vals[:-2]
    nondec = np.nonzero(d >= 0)[0]
    if nondec.size and nondec[-1] == d.size - 1:
        # still increasing at 1e12: continue on a geometric grid in x
        extended = True
        xe = X_WINDOW * 1.02 ** np.arange(0, int(math.log(min(x_cap, spec.x_cap) / X_WINDOW) / math.log(1.02)) + 1)
        ve = np.asarray(F(xe), dtype=float)
        de = ve[2:] - ve[:-2]
        non = np.nonzero(~(de < 0))[0]
        if non.size and non[-1] >= de.size - 3:
            raise NotEventuallyMonotone("composite not decreasing anywhere below the cap")
        x, vals, d, nondec = xe, ve, de, non
    if nondec.size == 0:
        x_star = x[0]
    else:
        j = nondec[-1]
        h = 1e-7

        def slope(z):
            return float(F(z + h * max(1.0, abs(z)))) - float(F(z - h * max(1.0, abs(z))))
        lo, hi = x[j], x[j + 2]
        x_star = _refine_sign_change(slope, lo, hi) if slope(lo) >= 0 and slope(hi) < 0 else hi
    if Selector(selector) == Selector.F_EXP:
        # also need f_1(r) <= exp(-K t g(r)), i.e. log f + K t g <= 0
        pos = np.nonzero(vals > 0)[0]
        if pos.size:
            k = pos[-1]
            if k == vals.size - 1:
                raise NotEventuallyMonotone("f exp(Ktg) stays above 1 on the window")
            x_c = _refine_sign_change(lambda z: float(F(z)), x[k], x[k + 1])
            x_star = max(x_star, x_c)
    return R0Certificate(float(x_star), float(x[-1]), extended, int(x.size))


def find_r0(spec: ModelSpec, selector="G", witness: Optional[WitnessSpec] = None) -> float:
    """Radius r0(t) beyond which the selected composite is strictly decreasing."""
    return certify_r0(spec, Selector(selector), witness).r0


def log_u0(spec: ModelSpec, selector="G", witness=None) -> float:
    cert = certify_r0(spec, Selector(selector), witness)
    F = _composite(spec, selector, witness)
    return math.log(spec.kappa_tilde) - float(F(cert.log_r0))


# ---------------------------------------------------------------------------
# inverse radii (log-radius versions are vectorized in log u)


def _as_log_u(u, log_u):
    if log_u is not None:
        return np.asarray(log_u, dtype=float), log_u
    ua = np.asarray(u, dtype=float)
    if np.any(ua <= 0):
        raise RangeError("levels must be positive")
    return np.log(ua), u


def _out(ref, arr):
    return float(arr[0]) if np.ndim(ref) == 0 else np.asarray(arr)


def log_alpha_t(spec: ModelSpec, log_u, tol=1e-13):
    lu = np.atleast_1d(np.asarray(log_u, dtype=float))
    lk = math.log(spec.kappa)
    if np.any(lu < lk):
        raise RangeError("alpha_t needs u >= kappa")
    target = 0.5 * (lk - lu)
    if spec.operator.family == OperatorFamily.FRACTIONAL:
        out = -target / (spec.operator.d + 2 * spec.operator.a)
    else:
        # start from the asymptotic inverse p(s) to keep brackets short
        guess = np.log(np.maximum(-target / spec.operator.decay_rate, 1e-3))
        out = solve_log_monotone(spec.f.log_at, target, False, guess, -745.0, spec.x_cap, tol)
    return _out(log_u, out)


def _log_inverse_beyond(spec, selector, witness, log_u, tol=1e-13):
    lu = np.atleast_1d(np.asarray(log_u, dtype=float))
    cert = certify_r0(spec, Selector(selector), witness)
    F = _composite(spec, selector, witness)
    lu0 = math.log(spec.kappa_tilde) - float(F(cert.log_r0))
    if np.any(lu < lu0 - 1e-12 * max(1.0, abs(lu0))):
        raise RangeError(f"level below u0(t) = exp({lu0:.6g})")
    target = math.log(spec.kappa_tilde) - lu
    # start from the alpha radius (the f² part dominates) but never below r0
    try:
        guess = np.maximum(np.atleast_1d(log_alpha_t(spec, np.maximum(lu, math.log(spec.kappa)))), cert.log_r0)
    except RangeError:
        guess = cert.log_r0
    out = solve_log_monotone(F, target, False, guess, cert.log_r0, spec.x_cap, tol)
    return _out(log_u, out)


def log_beta_t(spec: ModelSpec, log_u, tol=1e-13):
    return _log_inverse_beyond(spec, Selector.G, None, log_u, tol)


def log_gamma_t(spec: ModelSpec, w: WitnessSpec, log_u, tol=1e-13):
    b = limit_parameter_b(spec.operator, w)
    if not b < 2:
        raise HypothesisError(f"witness limit b = {b:.6g} is not below 2")
    return _log_inverse_beyond(spec, Selector.H, w, log_u, tol)


def _radius(logr):
    with np.errstate(over="ignore"):
        return np.exp(logr)


def alpha_t(spec: ModelSpec, u=None, *, log_u=None):
    """α_t(u) = (f²)⁻¹(κ/u)."""
    lu, ref = _as_log_u(u, log_u)
    return _out(ref, np.atleast_1d(_radius(log_alpha_t(spec, lu))))


def beta_t(spec: ModelSpec, u=None, *, log_u=None):
    """β_t(u) = G_t⁻¹(κ̃/u) on the decreasing branch beyond r0(t)."""
    lu, ref = _as_log_u(u, log_u)
    return _out(ref, np.atleast_1d(_radius(log_beta_t(spec, lu))))


def gamma_t(spec: ModelSpec, w: WitnessSpec, u=None, *, log_u=None):
    """γ_t(u) = H_t⁻¹(κ̃/u) on the decreasing branch beyond r0(t)."""
    lu, ref = _as_log_u(u, log_u)
    return _out(ref, np.atleast_1d(_radius(log_gamma_t(spec, w, lu))))


# ---------------------------------------------------------------------------
# rate functions


def log_rate_w(spec: ModelSpec, x):
    """log w_t = 2 log g + K t g."""
    return 2 * spec.g.log_at(x) + spec.Kt * spec.g_at(x)


def log_rate_w_tilde(spec: ModelSpec, x):
    return 2 * spec.g.log_at(x) + spec.Ktt * spec.g_at(x)


def log_rate_v(spec: ModelSpec, w: WitnessSpec, x):
    """log v_t = log w̃_t + log η − log(r − σ(r))."""
    gap = w.log_gap_at(x)
    if np.any(~np.isfinite(gap)):
        raise DomainError("sigma(r) must stay below r")
    return log_rate_w_tilde(spec, x) + w.log_eta_over_gap_at(x)


def _log_r(r):
    ra = np.asarray(r, dtype=float)
    if np.any(ra <= 0):
        raise DomainError("radius must be positive")
    return np.log(ra)


def rate_w(spec: ModelSpec, r):
    return _out(r, np.atleast_1d(np.exp(log_rate_w(spec, _log_r(r)))))


def rate_w_tilde(spec: ModelSpec, r):
    return _out(r, np.atleast_1d(np.exp(log_rate_w_tilde(spec, _log_r(r)))))


def rate_v(spec: ModelSpec, w: WitnessSpec, r):
    return _out(r, np.atleast_1d(np.exp(log_rate_v(spec, w, _log_r(r)))))


# ---------------------------------------------------------------------------
# tail bounds


def log_tail_upper(spec: ModelSpec, log_u):
    lu = np.asarray(log_u, dtype=float)
    return -lu + math.log(spec.C) - log_rate_w(spec, log_alpha_t(spec, lu))


def log_tail_lower(spec: ModelSpec, log_u):
    lu = np.asarray(log_u, dtype=float)
    return -lu + math.log(spec.C_tilde) - log_rate_w_tilde(spec, log_beta_t(spec, lu))


def log_tail_witness(spec: ModelSpec, w: WitnessSpec, log_u):
    lu = np.asarray(log_u, dtype=float)
    return -lu + math.log(spec.C_tilde) - log_rate_v(spec, w, log_gamma_t(spec, w, lu))


def tail_upper_bound(spec: ModelSpec, u=None, *, log_u=None):
    """(1/u)·C/w_t(α_t(u)); compare with the Markov bound 1/u."""
    lu, ref = _as_log_u(u, log_u)
    return _out(ref, np.atleast_1d(np.exp(log_tail_upper(spec, lu))))


def tail_lower_bound(spec: ModelSpec, u=None, *, log_u=None):
    lu, ref = _as_log_u(u, log_u)
    return _out(ref, np.atleast_1d(np.exp(log_tail_lower(spec, lu))))


def tail_witness_bound(spec: ModelSpec, w: WitnessSpec, u=None, *, log_u=None):
    lu, ref = _as_log_u(u, log_u)
    return _out(ref, np.atleast_1d(np.exp(log_tail_witness(spec, w, lu))))


# ---------------------------------------------------------------------------
# tables

COLUMNS = ["u", "log_u", "alpha", "beta", "gamma", "w", "w_tilde", "v", "upper",
           "lower_sup", "lower_witness", "flags"]


@dataclass
class RatePoint:
    """One row of a rate table; every value is a natural log (NaN if undefined)."""

    log_u: float
    log_alpha: float = math.nan
    log_beta: float = math.nan
    log_gamma: float = math.nan
    log_w: float = math.nan
    log_w_tilde: float = math.nan
    log_v: float = math.nan
    log_upper: float = math.nan
    log_lower_sup: float = math.nan
    log_lower_witness: float = math.nan
    flags: list = field(default_factory=list)

    def values(self, linear: bool = False) -> dict:
        keys = ["log_alpha", "log_beta", "log_gamma", "log_w", "log_w_tilde", "log_v",
                "log_upper", "log_lower_sup", "log_lower_witness"]
        row = {"u": _fmt_exp(self.log_u), "log_u": self.log_u}
        for col, key in zip(COLUMNS[2:11], keys):
            v = getattr(self, key)
            row[col] = _fmt_exp(v) if linear else (v / LN10 if math.isfinite(v) else v)
        row["flags"] = ";".join(self.flags)
        return row


def _fmt_exp(logv: float) -> float:
    if not math.isfinite(logv) or logv > 709.7:
        return math.inf if logv > 0 else (0.0 if logv == -math.inf else math.nan)
    return math.exp(logv)


@dataclass
class RateTable:
    rows: list

    def __len__(self):
        return len(self.rows)

    def to_csv(self, linear: bool = False, header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        wr = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        wr.writeheader()
        for r in self.rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v)
                         for k, v in r.values(linear).items()})
        return buf.getvalue()

    def to_json(self, linear: bool = False) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
            return v
        rows = [{k: clean(v) for k, v in r.values(linear).items()} for r in self.rows]
        return json.dumps({"columns": COLUMNS, "scale": "linear" if linear else "log10",
                           "rows": rows}, indent=2)


def rate_table(spec: ModelSpec, w: Optional[WitnessSpec] = None, u_grid=None, *,
               log_u_grid=None) -> RateTable:
    """One RatePoint per level; per-row failures become flags instead of errors."""
    if log_u_grid is None:
        log_u_grid = [] if u_grid is None else list(np.log(np.asarray(u_grid, dtype=float)))
    rows = []
    for lu in log_u_grid:
        lu = float(lu)
        pt = RatePoint(lu)
        try:
            pt.log_alpha = float(log_alpha_t(spec, lu))
            pt.log_w = float(log_rate_w(spec, pt.log_alpha))
            pt.log_upper = float(log_tail_upper(spec, lu))
        except RangeError:
            pt.flags.append("below_kappa")
        try:
            pt.log_beta = float(log_beta_t(spec, lu))
            pt.log_w_tilde = float(log_rate_w_tilde(spec, pt.log_beta))
            pt.log_lower_sup = float(log_tail_lower(spec, lu))
        except RangeError:
            pt.flags.append("below_u0_beta")
        except NotEventuallyMonotone:
            pt.flags.append("G_not_monotone")
        if w is None:
            pt.flags.append("no_witness")
        else:
            try:
                pt.log_gamma = float(log_gamma_t(spec, w, lu))
                pt.log_v = float(log_rate_v(spec, w, pt.log_gamma))
                pt.log_lower_witness = float(log_tail_witness(spec, w, lu))
            except RangeError:
                pt.flags.append("below_u0_gamma")
            except (NotEventuallyMonotone, HypothesisError) as exc:
                pt.flags.append(type(exc).__name__)
        rows.append(pt)
    return RateTable(rows)


def decade_grid(lo: float, hi: float, step: float) -> list:
    """log u values for u = 10^lo, 10^(lo+step), ..., 10^hi."""
    n = int(round((hi - lo) / step))
    return [(lo + k * step) * LN10 for k in range(n + 1)]
