"""Radial profiles, operator/potential specs, and the special functions behind them.

Every profile can be evaluated in two ways: directly at a radius ``r`` and as a
log-value at a log-radius ``x = log r``.  The log form is what the rest of the
package uses, because the interesting radii (and the values of f there) leave
double precision long before the asymptotic regimes settle in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, DomainError, NoBracketError, RangeError

E = math.e
EE = math.exp(math.e)
LOG2 = math.log(2.0)


class ProfileKind(str, Enum):
    FRACTIONAL_F = "FractionalF"
    RELATIVISTIC_F = "RelativisticF"
    POWER_G = "PowerG"
    POWER_LOG_G = "PowerLogG"
    POWER_ITERLOG_G = "PowerIterLogG"
    ETA_R_LOG2 = "EtaRLog2"
    ETA_R_LOGR_LOGLOG2 = "EtaRLogRLogLog2"
    ETA_POWER = "EtaPower"
    SIGMA_HALF = "SigmaHalf"
    SIGMA_SHIFT = "SigmaShift"
    CUSTOM = "Custom"


class Direction(str, Enum):
    DECREASING = "StrictlyDecreasing"
    INCREASING = "StrictlyIncreasing"


def _scalar_or_array(inp, out):
    if np.ndim(inp) == 0:
        return float(np.asarray(out).ravel()[0])
    return out


def solve_log_monotone(fun, targets, increasing: bool, x_start=0.0, x_min=-np.inf,
                       x_max=np.inf, tol=1e-12, max_iter=200):
    """Solve ``fun(x) = target`` for a monotone vectorized ``fun``.

    Brackets are found by stepping away from ``x_start`` with a step that doubles
    every iteration (starting at log 2, or 1e-3·|x| at huge log-radii), then refined by
    bisection.  Stops once the log-residual is below ``tol/2`` (so the value
    matches to relative ``tol``) or the bracket has collapsed to a few ulps.
    """
    tgt = np.atleast_1d(np.asarray(targets, dtype=float))
    n = tgt.size
    sign = 1.0 if increasing else -1.0
    x0 = np.broadcast_to(np.asarray(x_start, dtype=float), (n,)).copy()
    x0 = np.clip(x0, x_min, x_max)
    with np.errstate(all="ignore"):
        v0 = np.asarray(fun(x0), dtype=float)
    # need_up: the root lies to the right of x0
    need_up = sign * (v0 - tgt) < 0
    lo = x0.copy()
    hi = x0.copy()
    # at huge log-radii a log 2 step would need hundreds of doublings
    step = np.maximum(LOG2, 1e-3 * np.abs(x0))
    pending = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        if not pending.any():
            break
        cand = np.where(need_up, hi + step, lo - step)
        cand = np.clip(cand, x_min, x_max)
        with np.errstate(all="ignore"):
            vc = np.asarray(fun(cand), dtype=float)
        crossed = np.where(need_up, sign * (vc - tgt) >= 0, sign * (vc - tgt) <= 0)
        stuck = pending & ~crossed & np.where(need_up, cand >= x_max, cand <= x_min)
        if stuck.any():
            raise RangeError("target outside the range of the function on its domain")
        up = pending & need_up
        dn = pending & ~need_up
        # shift the trailing end forward so the bracket stays tight
        lo = np.where(up & ~crossed, cand, lo)
        hi = np.where(up, cand, hi)
        hi = np.where(dn & ~crossed, cand, hi)
        lo = np.where(dn, cand, lo)
        pending = pending & ~crossed
        step = step * 2.0
    if pending.any():
        raise NoBracketError(f"no bracket within {max_iter} expansions")

    result = np.full(n, np.nan)
    active = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        with np.errstate(all="ignore"):
            vm = np.asarray(fun(mid), dtype=float)
        resid = vm - tgt
        width = hi - lo
        ulp = 4.0 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))
        done = active & ((np.abs(resid) <= 0.5 * tol) | (width <= ulp))
        result = np.where(done, mid, result)
        active = active & ~done
        if not active.any():
            break
        right = sign * resid < 0
        lo = np.where(active & right, mid, lo)
        hi = np.where(active & ~right, mid, hi)
    if active.any():
        raise ConvergenceError(f"bisection did not converge in {max_iter} steps")
    return result


@dataclass(frozen=True, eq=False)
class Profile:
    """A strictly monotone radial profile.

    ``params`` holds the family parameters (d, a, m, theta, p, c).  Custom
    profiles supply ``func`` (value at r) and/or ``log_func`` (log-value at
    ``x = log r``); the other is derived.
    """

    kind: ProfileKind
    params: dict = field(default_factory=dict)
    direction: Direction = Direction.INCREASING
    domain_lo: float = 0.0
    domain_hi: float = math.inf
    func: Optional[Callable] = field(default=None, compare=False)
    log_func: Optional[Callable] = field(default=None, compare=False)

    # constructors -------------------------------------------------------
    @classmethod
    def fractional(cls, d: int, a: float) -> "Profile":
        _check_da(d, a)
        return cls(ProfileKind.FRACTIONAL_F, {"d": d, "a": a}, Direction.DECREASING)

    @classmethod
    def relativistic(cls, d: int, a: float, m: float) -> "Profile":
        _check_da(d, a)
        if not m > 0:
            raise DomainError("mass must be positive")
        return cls(ProfileKind.RELATIVISTIC_F, {"d": d, "a": a, "m": m}, Direction.DECREASING)

    @classmethod
    def power_g(cls, theta: float) -> "Profile":
        return cls(ProfileKind.POWER_G, {"theta": _pos(theta)})

    @classmethod
    def power_log_g(cls, theta: float) -> "Profile":
        return cls(ProfileKind.POWER_LOG_G, {"theta": _pos(theta)})

    @classmethod
    def power_iterlog_g(cls, theta: float) -> "Profile":
        return cls(ProfileKind.POWER_ITERLOG_G, {"theta": _pos(theta)})

    @classmethod
    def eta_r_log2(cls) -> "Profile":
        return cls(ProfileKind.ETA_R_LOG2)

    @classmethod
    def eta_r_logr_loglog2(cls) -> "Profile":
        return cls(ProfileKind.ETA_R_LOGR_LOGLOG2)

    @classmethod
    def eta_power(cls, p: float) -> "Profile":
        return cls(ProfileKind.ETA_POWER, {"p": _pos(p)})

    @classmethod
    def sigma_half(cls) -> "Profile":
        return cls(ProfileKind.SIGMA_HALF, domain_lo=0.0)

    @classmethod
    def sigma_shift(cls, c: float = 1.0) -> "Profile":
        return cls(ProfileKind.SIGMA_SHIFT, {"c": _pos(c)}, domain_lo=0.0)

    @classmethod
    def custom(cls, func=None, direction=Direction.INCREASING, domain_lo=0.0,
               domain_hi=math.inf, log_func=None, **params) -> "Profile":
        if func is None and log_func is None:
            raise ValueError("custom profile needs func or log_func")
        return cls(ProfileKind.CUSTOM, dict(params), Direction(direction), domain_lo,
                   domain_hi, func, log_func)

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items())), self.direction,
                     self.domain_lo, self.domain_hi, id(self.func), id(self.log_func)))

    def __eq__(self, other):
        if not isinstance(other, Profile):
            return NotImplemented
        return (self.kind, self.params, self.direction, self.domain_lo, self.domain_hi,
                self.func, self.log_func) == (other.kind, other.params, other.direction,
                                              other.domain_lo, other.domain_hi, other.func,
                                              other.log_func)

    # evaluation ---------------------------------------------------------
    @property
    def decreasing(self) -> bool:
        return self.direction == Direction.DECREASING

    def _check_domain(self, r):
        r = np.asarray(r, dtype=float)
        lo_ok = r > self.domain_lo if self.kind in _OPEN_AT_ZERO else r >= self.domain_lo
        if not np.all(lo_ok & (r <= self.domain_hi)):
            raise DomainError(f"radius outside domain [{self.domain_lo}, {self.domain_hi}]")
        return r

    def __call__(self, r):
        return self.eval(r)

    def eval(self, r):
        """Value of the profile at radius ``r``."""
        rr = self._check_domain(r)
        k, p = self.kind, self.params
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            if k == ProfileKind.FRACTIONAL_F:
                out = rr ** (-(p["d"] + 2 * p["a"]))
            elif k == ProfileKind.RELATIVISTIC_F:
                d, a, m = p["d"], p["a"], p["m"]
                mr = m ** (1 / (2 * a)) * rr
                out = np.where(rr <= 1, rr ** (-d - 2 * a), rr ** (-(d + 2 * a + 1) / 2)) * np.exp(-mr)
            elif k == ProfileKind.POWER_G:
                out = np.maximum(rr, 1.0) ** p["theta"]
            elif k == ProfileKind.SIGMA_HALF:
                out = rr / 2
            elif k == ProfileKind.SIGMA_SHIFT:
                out = np.maximum(rr - p["c"], rr / 2)
            elif k == ProfileKind.CUSTOM and self.func is not None:
                out = np.vectorize(self.func, otypes=[float])(rr)
            else:
                pos = rr > 0
                x = np.log(np.where(pos, rr, 1.0))
                out = np.where(pos, np.exp(self.log_at(x)), np.exp(self.log_at(-np.inf * np.ones_like(x))))
        return _scalar_or_array(r, out)

    def log_eval(self, r):
        rr = self._check_domain(r)
        with np.errstate(divide="ignore"):
            return self.log_at(np.log(rr))

    def log_at(self, x):
        """Natural log of the profile at radius ``exp(x)`` (vectorized)."""
        xx = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if k == ProfileKind.FRACTIONAL_F:
                out = -(p["d"] + 2 * p["a"]) * xx
            elif k == ProfileKind.RELATIVISTIC_F:
                d, a, m = p["d"], p["a"], p["m"]
                lin = m ** (1 / (2 * a)) * np.exp(xx)
                out = np.where(xx <= 0, -(d + 2 * a) * xx, -(d + 2 * a + 1) / 2 * xx) - lin
            elif k == ProfileKind.POWER_G:
                out = p["theta"] * np.maximum(xx, 0.0)
            elif k == ProfileKind.POWER_LOG_G:
                out = p["theta"] * np.log(np.maximum(xx, 1.0))
            elif k == ProfileKind.POWER_ITERLOG_G:
                out = p["theta"] * np.log(np.log(np.maximum(xx, E)))
            elif k == ProfileKind.ETA_R_LOG2:
                out = np.maximum(xx, 0.0) + 2 * np.log(np.maximum(xx, 1.0))
            elif k == ProfileKind.ETA_R_LOGR_LOGLOG2:
                lx = np.log(np.maximum(xx, 1.0))
                out = np.maximum(xx, 0.0) + lx + 2 * np.log(np.maximum(lx, 1.0))
            elif k == ProfileKind.ETA_POWER:
                out = p["p"] * np.maximum(xx, 0.0)
            elif k == ProfileKind.SIGMA_HALF:
                out = xx - LOG2
            elif k == ProfileKind.SIGMA_SHIFT:
                c = p["c"]
                big = xx >= math.log(2 * c)
                out = np.where(big, xx + np.log1p(-c * np.exp(-np.where(big, xx, 0.0))), xx - LOG2)
            elif self.log_func is not None:
                out = np.vectorize(self.log_func, otypes=[float])(xx)
            else:
                out = np.log(np.vectorize(self.func, otypes=[float])(np.exp(xx)))
        return _scalar_or_array(x, out)

    def neglog_log_at(self, x):
        """log(-log f) at radius exp(x); stable where f itself underflows."""
        xx = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if k == ProfileKind.FRACTIONAL_F:
                out = np.log((p["d"] + 2 * p["a"]) * xx)
            elif k == ProfileKind.RELATIVISTIC_F:
                d, a, m = p["d"], p["a"], p["m"]
                ms = m ** (1 / (2 * a))
                big = xx > 30
                xs = np.where(big, xx, 0.0)
                far = xs + np.log(ms + (d + 2 * a + 1) / 2 * xs * np.exp(-xs))
                out = np.where(big, far, np.log(-np.asarray(self.log_at(np.where(big, 0.0, xx)))))
            else:
                out = np.log(-np.asarray(self.log_at(xx), dtype=float))
        return _scalar_or_array(x, out)

    def log_gap_at(self, x):
        """log(r - sigma(r)) at r = exp(x) for sigma-type profiles."""
        xx = np.asarray(x, dtype=float)
        k = self.kind
        if k == ProfileKind.SIGMA_HALF:
            out = xx - LOG2
        elif k == ProfileKind.SIGMA_SHIFT:
            c = self.params["c"]
            out = np.where(xx >= math.log(2 * c), math.log(c), xx - LOG2)
        else:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                r = np.exp(xx)
                out = np.log(r - np.exp(np.asarray(self.log_at(xx), dtype=float)))
        return _scalar_or_array(x, out)

    def log_excess_at(self, x):
        """log(profile / r) at r = exp(x), without cancelling two O(x) terms."""
        xx = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        neg = -np.minimum(xx, 0.0)
        if k == ProfileKind.ETA_R_LOG2:
            out = neg + 2 * np.log(np.maximum(xx, 1.0))
        elif k == ProfileKind.ETA_R_LOGR_LOGLOG2:
            lx = np.log(np.maximum(xx, 1.0))
            out = neg + lx + 2 * np.log(np.maximum(lx, 1.0))
        elif k == ProfileKind.ETA_POWER:
            out = neg + (p["p"] - 1) * np.maximum(xx, 0.0)
        else:
            out = np.asarray(self.log_at(xx), dtype=float) - xx
        return _scalar_or_array(x, out)

    def log_gap_excess_at(self, x):
        """log((r - sigma(r)) / r) at r = exp(x)."""
        xx = np.asarray(x, dtype=float)
        k = self.kind
        if k == ProfileKind.SIGMA_HALF:
            out = np.full_like(xx, -LOG2)
        elif k == ProfileKind.SIGMA_SHIFT:
            c = self.params["c"]
            out = np.where(xx >= math.log(2 * c), math.log(c) - xx, -LOG2)
        else:
            out = np.asarray(self.log_gap_at(xx), dtype=float) - xx
        return _scalar_or_array(x, out)

    # inversion ----------------------------------------------------------
    def activation_log_radius(self) -> float:
        """log of the radius where an increasing g-profile leaves its plateau."""
        return {ProfileKind.POWER_G: 0.0, ProfileKind.POWER_LOG_G: 1.0,
                ProfileKind.POWER_ITERLOG_G: E}.get(self.kind, -math.inf)

    def invert_log(self, log_s, tol=1e-12, x_start=None):
        """Log-radius x with log_at(x) = log_s."""
        k, p = self.kind, self.params
        ls = np.asarray(log_s, dtype=float)
        if k == ProfileKind.FRACTIONAL_F:
            return _scalar_or_array(log_s, -ls / (p["d"] + 2 * p["a"]))
        if k in (ProfileKind.POWER_G, ProfileKind.POWER_LOG_G, ProfileKind.POWER_ITERLOG_G):
            if np.any(ls < 0):
                raise RangeError("value below the plateau of g")
            th = p["theta"]
            if k == ProfileKind.POWER_G:
                out = ls / th
            elif k == ProfileKind.POWER_LOG_G:
                out = np.exp(ls / th)
            else:
                with np.errstate(over="ignore"):
                    out = np.exp(np.exp(ls / th))
            return _scalar_or_array(log_s, out)
        lo = math.log(self.domain_lo) if self.domain_lo > 0 else -745.0
        hi = math.log(self.domain_hi) if math.isfinite(self.domain_hi) else 1e300
        if x_start is None:
            x_start = 0.0 if lo <= 0.0 <= hi else 0.5 * (lo + hi)
        out = solve_log_monotone(self.log_at, ls, not self.decreasing, x_start, lo, hi, tol)
        return _scalar_or_array(log_s, out)

    def invert(self, s, tol=1e-12):
        """Radius r with eval(r) = s (relative tolerance ``tol``)."""
        sa = np.asarray(s, dtype=float)
        if np.any(sa <= 0):
            raise RangeError("profile values are positive")
        k, p = self.kind, self.params
        if k == ProfileKind.FRACTIONAL_F:
            return _scalar_or_array(s, sa ** (-1.0 / (p["d"] + 2 * p["a"])))
        if k == ProfileKind.POWER_G:
            if np.any(sa < 1):
                raise RangeError("value below the plateau of g")
            return _scalar_or_array(s, sa ** (1.0 / p["theta"]))
        with np.errstate(over="ignore"):
            out = np.exp(np.asarray(self.invert_log(np.log(sa), tol=tol)))
        return _scalar_or_array(s, out)


_OPEN_AT_ZERO = {ProfileKind.FRACTIONAL_F, ProfileKind.RELATIVISTIC_F}


def _check_da(d, a):
    if int(d) != d or d < 1:
        raise DomainError("dimension must be a positive integer")
    if not 0 < a < 1:
        raise DomainError("stability index a must lie in (0, 1)")


def _pos(v):
    if not v > 0:
        raise DomainError("parameter must be positive")
    return float(v)


def eval_profile(p: Profile, r):
    return p.eval(r)


def invert_monotone(p: Profile, s, tol: float = 1e-12):
    return p.invert(s, tol=tol)


# --------------------------------------------------------------------------
# operator and potential specs

class OperatorFamily(str, Enum):
    FRACTIONAL = "FractionalLaplacian"
    RELATIVISTIC = "RelativisticLaplacian"


class PotentialFamily(str, Enum):
    POWER = "Power"
    POWER_LOG = "PowerLog"
    POWER_ITERLOG = "PowerIterLog"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class OperatorSpec:
    family: OperatorFamily
    d: int = 1
    a: float = 0.5
    m: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", OperatorFamily(self.family))
        _check_da(self.d, self.a)
        if self.family == OperatorFamily.RELATIVISTIC and not (self.m is not None and self.m > 0):
            raise DomainError("relativistic operator needs a positive mass")

    @property
    def profile(self) -> Profile:
        if self.family == OperatorFamily.FRACTIONAL:
            return Profile.fractional(self.d, self.a)
        return Profile.relativistic(self.d, self.a, self.m)

    @property
    def decay_rate(self) -> float:
        """m^(1/(2a)), the exponential rate of the relativistic profile."""
        return self.m ** (1 / (2 * self.a)) if self.m else 0.0

    def f1_kink_radius(self) -> float:
        """Radius where f crosses 1 (where f_1 = f ∧ 1 has its kink)."""
        if self.family == OperatorFamily.FRACTIONAL:
            return 1.0
        return float(self.profile.invert(1.0))


@dataclass(frozen=True)
class PotentialSpec:
    family: PotentialFamily
    theta: float = 1.0
    R0: Optional[float] = None
    C2: float = 1.0
    profile_override: Optional[Profile] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", PotentialFamily(self.family))
        if self.C2 < 1:
            raise DomainError("C2 must be >= 1")
        if self.family == PotentialFamily.CUSTOM and self.profile_override is None:
            raise DomainError("custom potential needs a profile")
        if self.R0 is None:
            r0 = {PotentialFamily.POWER: 1.0, PotentialFamily.POWER_LOG: E,
                  PotentialFamily.POWER_ITERLOG: EE}.get(self.family, 1.0)
            object.__setattr__(self, "R0", r0)

    @property
    def profile(self) -> Profile:
        if self.family == PotentialFamily.POWER:
            return Profile.power_g(self.theta)
        if self.family == PotentialFamily.POWER_LOG:
            return Profile.power_log_g(self.theta)
        if self.family == PotentialFamily.POWER_ITERLOG:
            return Profile.power_iterlog_g(self.theta)
        return self.profile_override


# --------------------------------------------------------------------------
# special functions

def asymptotic_inverse_p(spec: OperatorSpec, s=None, *, log_s=None):
    """Left asymptotic inverse p(s) = -m^(-1/(2a)) log s of the relativistic f.

    Pass ``log_s`` instead of ``s`` when s underflows.
    """
    if spec.family != OperatorFamily.RELATIVISTIC:
        raise DomainError("asymptotic inverse is defined for the relativistic family")
    if log_s is None:
        sa = np.asarray(s, dtype=float)
        if np.any(sa <= 0):
            raise DomainError("need 0 < s < 1")
        with np.errstate(divide="ignore"):
            ls = np.log(sa)
        ref = s
    else:
        ls = np.asarray(log_s, dtype=float)
        ref = log_s
    if np.any(ls >= 0):
        raise DomainError("need 0 < s < 1")
    return _scalar_or_array(ref, -ls / spec.decay_rate)


def _half_integer_order(mu: float) -> Optional[int]:
    n = mu - 0.5
    if n >= 0 and abs(n - round(n)) < 1e-14:
        return int(round(n))
    return None


def _log_bessel_k_half(n: int, r: float) -> float:
    acc = 0.0
    for k in range(n + 1):
        acc += math.factorial(n + k) / (math.factorial(k) * math.factorial(n - k)) / (2 * r) ** k
    return 0.5 * math.log(math.pi / (2 * r)) - r + math.log(acc)


def _log_bessel_k_integral(mu: float, r: float, rtol: float = 1e-12) -> float:
    # K_mu(r) = 1/2 (r/2)^mu ∫_R exp(phi(v)) dv with u = e^v
    q = 0.25 * r * r

    def phi(v):
        return -mu * v - math.exp(v) - q * math.exp(-v)

    # stationary point: e^v = (-mu + sqrt(mu^2 + r^2)) / 2, written without cancellation
    vs = math.log(r * r / (2.0 * (mu + math.hypot(mu, r))))
    ps = phi(vs)
    drop = 60.0

    def edge(direction):
        step = 1.0
        v = vs
        for _ in range(200):
            v = vs + direction * step
            if phi(v) - ps < -drop:
                return v
            step *= 1.5
        raise ConvergenceError("could not bound the Bessel integrand")

    lo, hi = edge(-1), edge(+1)
    total = 0.0
    err = 0.0
    for a_, b_ in ((lo, vs), (vs, hi)):
        val, e_ = integrate.quad(lambda v: math.exp(phi(v) - ps), a_, b_, epsabs=0.0,
                                 epsrel=rtol, limit=200)
        total += val
        err += e_
    if not total > 0 or err > 1e-10 * total:
        raise ConvergenceError(f"Bessel quadrature error {err:.3g} exceeds tolerance")
    return math.log(0.5) + mu * math.log(r / 2) + ps + math.log(total)


def log_bessel_k(mu: float, r: float, method: str = "auto") -> float:
    """log K_mu(r) for mu > 0, r > 0.

    ``method`` is "auto" (closed form for half-integer orders, integral
    otherwise), "integral", or "closed".
    """
    if not (mu > 0 and r > 0):
        raise DomainError("need mu > 0 and r > 0")
    n = _half_integer_order(mu)
    if method == "closed" or (method == "auto" and n is not None):
        if n is None:
            raise DomainError("closed form only for half-integer orders")
        return _log_bessel_k_half(n, r)
    return _log_bessel_k_integral(mu, r)


def bessel_k(mu: float, r: float, method: str = "auto") -> float:
    return math.exp(log_bessel_k(mu, r, method))


def fractional_constant(d: int, a: float) -> float:
    """c_{d,a} = 2^{2a} Γ((d+2a)/2) / (π^{d/2} |Γ(-a)|)."""
    return 4 ** a * special.gamma((d + 2 * a) / 2) / (math.pi ** (d / 2) * abs(special.gamma(-a)))


def log_levy_density(spec: OperatorSpec, r: float) -> float:
    if not r > 0:
        raise DomainError("radius must be positive")
    d, a = spec.d, spec.a
    if spec.family == OperatorFamily.FRACTIONAL:
        return math.log(fractional_constant(d, a)) - (d + 2 * a) * math.log(r)
    m = spec.m
    mu = (d + 2 * a) / 2
    log_pref = (math.log(a) + (1 + a - d / 2) * LOG2 + (d + 2 * a) / (4 * a) * math.log(m)
                - d / 2 * math.log(math.pi) - special.gammaln(1 - a))
    return log_pref + log_bessel_k(mu, spec.decay_rate * r) - mu * math.log(r)


def levy_density_exact(spec: OperatorSpec, r: float) -> float:
    """Exact Lévy density ν at radius r for the two built-in families."""
    return math.exp(log_levy_density(spec, r))


def comparability_constant(spec: OperatorSpec, r_grid) -> float:
    """C1 such that C1^-1 f <= ν <= C1 f on the grid."""
    f = spec.profile
    logs = np.array([log_levy_density(spec, r) for r in r_grid]) - f.log_eval(np.asarray(r_grid))
    return float(math.exp(max(logs.max(), -logs.min())))


def symbol_psi(spec: OperatorSpec, xi) -> float:
    """Fourier symbol Ψ(ξ): |ξ|^{2a} or (|ξ|² + m^{1/a})^a − m."""
    k = float(np.linalg.norm(np.atleast_1d(np.asarray(xi, dtype=float))))
    a = spec.a
    if spec.family == OperatorFamily.FRACTIONAL:
        return k ** (2 * a)
    m = spec.m
    # (k² + m^{1/a})^a − m = m·expm1(a·log1p(k²/m^{1/a}))
    return m * math.expm1(a * math.log1p(k * k / m ** (1 / a)))


def f_comparison_constant(p: Profile, r_grid) -> float:
    """Empirical C7 = sup f(r)/f(r+1) over grid points r >= 1."""
    r = np.asarray(r_grid, dtype=float)
    r = r[r >= 1]
    return float(np.exp(np.max(p.log_eval(r) - p.log_eval(r + 1))))
