"""Young functions and the integrability test for Q_t(L¹(μ)) ⊂ L^Φ(μ).

Criterion integrals ∫ Φ'(u) / (u · rate(λu)) du are evaluated in the variable
τ = log log u on unit windows with Gauss-Legendre nodes and log-sum-exp, so the
rates never leave log space.  Convergence is read off the window increments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.special import expit, logsumexp

from .assumptions import Regime, classify_regime
from .errors import DomainError, HypothesisError, NoMatchError, NonIntegrable, RegimeError
from .profiles import OperatorFamily, PotentialFamily
from .rates import (ModelSpec, WitnessSpec, limit_parameter_b, log_alpha_t, log_gamma_t,
                    log_rate_v, log_rate_w, log_u0)

E = math.e
LOG_S_MAX = math.log(1e300)    # largest log u probed is 1e300
CONVERGENT_RATIO = 0.9
TAIL_WINDOWS = 8
LAMBDA_GRID = tuple(10.0 ** k for k in range(-3, 4))


class YoungFamily(str, Enum):
    POWER = "Power"
    EXP_LOG = "ExpLog"
    EXP_LOGLOG = "ExpLogLog"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class YoungFunction:
    """Φ(u) = |u|^q, |u| exp(c log^θ(e+|u|)), |u| exp(c log^θ log(e^e+|u|)) or custom.

    Custom functions supply ``log_phi`` and ``log_phi_prime`` as functions of
    s = log u.
    """

    family: YoungFamily
    c: float = 1.0
    theta: float = 1.0
    q: float = 1.0
    log_phi_fn: Optional[Callable] = field(default=None, compare=False)
    log_phi_prime_fn: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", YoungFamily(self.family))
        if self.family == YoungFamily.POWER and self.q < 1:
            raise DomainError("power Young function needs q >= 1")
        if self.family in (YoungFamily.EXP_LOG, YoungFamily.EXP_LOGLOG) and not (
                self.c > 0 and self.theta > 0):
            raise DomainError("c and theta must be positive")
        if self.family == YoungFamily.CUSTOM and (self.log_phi_fn is None or self.log_phi_prime_fn is None):
            raise DomainError("custom Young function needs log_phi_fn and log_phi_prime_fn")

    @classmethod
    def parse(cls, text: str) -> "YoungFunction":
        """'Power,q' or 'ExpLog,c,theta' or 'ExpLogLog,c,theta'."""
        parts = [p.strip() for p in text.split(",")]
        names = {f.value.lower(): f for f in YoungFamily}
        if parts[0].lower() not in names:
            raise DomainError(f"unknown Young family {parts[0]!r}")
        fam = names[parts[0].lower()]
        nums = [float(p) for p in parts[1:]]
        if fam == YoungFamily.POWER:
            return cls(fam, q=nums[0] if nums else 1.0)
        return cls(fam, c=nums[0], theta=nums[1] if len(nums) > 1 else 1.0)

    def _inner(self, s):
        """(h, u·h') at u = e^s, where Φ(u) = u exp(c h(u))."""
        s = np.asarray(s, dtype=float)
        if self.family == YoungFamily.EXP_LOG:
            L = np.logaddexp(1.0, s)                    # log(e + u)
            return L ** self.theta, self.theta * L ** (self.theta - 1) * expit(s - 1.0)
        L = np.logaddexp(E, s)                          # log(e^e + u)
        LL = np.log(L)
        return LL ** self.theta, self.theta * LL ** (self.theta - 1) / L * expit(s - E)

    def log_phi(self, s):
        """log Φ(e^s)."""
        s = np.asarray(s, dtype=float)
        if self.family == YoungFamily.POWER:
            return self.q * s
        if self.family == YoungFamily.CUSTOM:
            return self.log_phi_fn(s)
        return s + self.c * self._inner(s)[0]

    def log_phi_over_u(self, s):
        """log(Φ(u)/u) at u = e^s."""
        s = np.asarray(s, dtype=float)
        if self.family == YoungFamily.POWER:
            return (self.q - 1) * s
        if self.family == YoungFamily.CUSTOM:
            return self.log_phi_fn(s) - s
        return self.c * self._inner(s)[0]

    def log_phi_prime(self, s):
        """log Φ'(e^s)."""
        s = np.asarray(s, dtype=float)
        if self.family == YoungFamily.POWER:
            return math.log(self.q) + (self.q - 1) * s
        if self.family == YoungFamily.CUSTOM:
            return self.log_phi_prime_fn(s)
        h, uh = self._inner(s)
        return self.c * h + np.log1p(self.c * uh)

    def __call__(self, u):
        u = np.abs(np.asarray(u, dtype=float))
        with np.errstate(divide="ignore", over="ignore"):
            out = np.where(u > 0, np.exp(self.log_phi(np.log(np.where(u > 0, u, 1.0)))), 0.0)
        return out if out.ndim else float(out)

    def midpoint_convex(self, u_grid) -> bool:
        """Φ((a+b)/2) ≤ (Φ(a)+Φ(b))/2 on all pairs of neighbours and on (−u, u)."""
        u = np.sort(np.asarray(u_grid, dtype=float))
        a, b = u[:-1], u[1:]
        lhs = self((a + b) / 2)
        rhs = (self(a) + self(b)) / 2
        even = np.allclose(self(-u), self(u))
        return bool(np.all(lhs <= rhs * (1 + 1e-12)) and even and self(0.0) == 0.0)


class OrliczOutcome(str, Enum):
    MAPS_INTO = "MapsInto"
    NOT_SUBSET = "NotSubset"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ThresholdRecord:
    success_below: Optional[float]
    failure_above: Optional[float]
    pairing: str
    note: str = ""

    def predicts(self, c: float) -> Optional[OrliczOutcome]:
        if self.success_below is not None and c < self.success_below:
            return OrliczOutcome.MAPS_INTO
        if self.failure_above is not None and c > self.failure_above:
            return OrliczOutcome.NOT_SUBSET
        return None

    def to_dict(self) -> dict:
        return {"success_below": self.success_below, "failure_above": self.failure_above,
                "pairing": self.pairing, "note": self.note}


@dataclass
class OrliczVerdict:
    verdict: OrliczOutcome
    criterion_integral_log: float
    threshold_comparison: Optional[dict] = None
    note: str = ""
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        v = self.criterion_integral_log
        return {"verdict": self.verdict.value,
                "criterion_integral_log": v if math.isfinite(v) else ("inf" if v > 0 else "-inf"),
                "threshold_comparison": self.threshold_comparison, "note": self.note,
                "evidence": self.evidence}


# ---------------------------------------------------------------------------
# analytic thresholds


def analytic_thresholds(spec: ModelSpec, phi_family) -> ThresholdRecord:
    """Closed-form (success, failure) bounds on c for the four worked pairings."""
    fam = YoungFamily(phi_family)
    op, pot = spec.operator, spec.potential
    th = pot.theta
    kt, ktt = spec.Kt, spec.Ktt
    frac = op.family == OperatorFamily.FRACTIONAL
    if frac and pot.family == PotentialFamily.POWER_LOG and fam == YoungFamily.EXP_LOG:
        return ThresholdRecord(kt / (2 * op.d + 4 * op.a) ** th, ktt / (op.d + 4 * op.a) ** th,
                               "fractional, log^θ r, ExpLog")
    if not frac and pot.family == PotentialFamily.POWER and fam == YoungFamily.EXP_LOG:
        m2 = 2 * op.decay_rate
        return ThresholdRecord(kt / m2 ** th, ktt / m2 ** th, "relativistic, r^θ, ExpLog")
    if fam == YoungFamily.EXP_LOGLOG and (
            (frac and pot.family == PotentialFamily.POWER_ITERLOG)
            or (not frac and pot.family == PotentialFamily.POWER_LOG)):
        name = "fractional, log^θ log r" if frac else "relativistic, log^θ r"
        if th > 1:
            return ThresholdRecord(kt, ktt, name + ", ExpLogLog, θ>1")
        if th == 1:
            return ThresholdRecord(kt - 1, ktt + 1, name + ", ExpLogLog, θ=1")
        return ThresholdRecord(None, None, name + ", ExpLogLog, θ<1",
                               "upper bound not integrable")
    raise NoMatchError(f"no closed-form thresholds for {op.family.value}/{pot.family.value}/{fam.value}")


def _threshold_comparison(spec, phi, outcome):
    try:
        rec = analytic_thresholds(spec, phi.family)
    except NoMatchError:
        return None
    pred = rec.predicts(phi.c)
    out = rec.to_dict()
    out.update(c=phi.c, predicted=pred.value if pred else None,
               consistent=pred is None or outcome == OrliczOutcome.INCONCLUSIVE or pred == outcome)
    return out


# ---------------------------------------------------------------------------
# criterion integrals


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _window_log_increments(log_integrand_s, s_start, dtau=1.0):
    """log ∫ over unit τ-windows of integrand(s) ds, s = e^τ."""
    tau0 = math.log(s_start)
    # full-width windows only, so neighbouring increments are comparable
    n = int((LOG_S_MAX - tau0) // dtau)
    edges = tau0 + dtau * np.arange(n + 1)
    a, b = edges[:-1, None], edges[1:, None]
    tau = 0.5 * (a + b) + 0.5 * (b - a) * _GL_NODES[None, :]
    s = np.exp(tau)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = log_integrand_s(s.ravel()).reshape(s.shape) + tau
    lw = np.log(0.5 * (b - a) * _GL_WEIGHTS[None, :])
    return edges, logsumexp(vals + lw, axis=1)


def _classify_increments(logI):
    tail = logI[-TAIL_WINDOWS:]
    total = float(logsumexp(logI))
    if np.all(tail == -np.inf) or (np.all(np.isfinite(tail)) is False and tail[-1] == -np.inf):
        return "convergent", total, -np.inf
    d = np.diff(tail)
    slope = float(np.mean(d))
    if np.all(d <= math.log(CONVERGENT_RATIO)):
        return "convergent", total, slope
    if np.all(d >= 0):
        return "divergent", math.inf, slope
    return "undecided", total, slope


def _integral_report(edges, logI):
    kind, total, slope = _classify_increments(logI)
    return kind, {"log_integral": total, "tail_log_ratio": slope,
                  "windows": len(logI), "log_u_range": (float(math.exp(edges[0])), 1e300)}


def _ensure_regime(spec):
    regime = classify_regime(spec)
    if regime != Regime.L1_ORLICZ:
        raise RegimeError(f"spec is {regime.value}, not in the L1-Orlicz regime")


def criterion_a(spec: ModelSpec, phi: YoungFunction, lam=None, check_regime: bool = True) -> OrliczVerdict:
    """MapsInto when ∫ Φ'(u)/(u w_t(α_t(λu))) du converges for some λ in the scan."""
    if check_regime:
        _ensure_regime(spec)
    if phi.family == YoungFamily.POWER and phi.q == 1:
        return OrliczVerdict(OrliczOutcome.MAPS_INTO, -math.inf,
                             _threshold_comparison(spec, phi, OrliczOutcome.MAPS_INTO),
                             "Q_t is an L¹ contraction")
    lams = LAMBDA_GRID if lam is None else tuple(np.atleast_1d(lam))
    per = {}
    best = None
    for lm in lams:
        llm = math.log(lm)
        s0 = max(1.0, math.log(spec.kappa) - llm) + 1e-9

        def integrand(s, llm=llm):
            x = log_alpha_t(spec, s + llm)
            return phi.log_phi_prime(s) - log_rate_w(spec, x)
        edges, logI = _window_log_increments(integrand, s0)
        kind, ev = _integral_report(edges, logI)
        per[f"{lm:g}"] = dict(ev, behaviour=kind)
        if kind == "convergent" and (best is None or ev["log_integral"] < best):
            best = ev["log_integral"]
    cmp = None
    if best is not None:
        outcome, val, note = OrliczOutcome.MAPS_INTO, best, ""
    else:
        outcome = OrliczOutcome.INCONCLUSIVE
        val = max(v["log_integral"] for v in per.values())
        cmp = _threshold_comparison(spec, phi, outcome)
        if all(v["behaviour"] == "divergent" for v in per.values()) or (cmp and cmp["note"]):
            note = "upper bound not integrable"
        else:
            note = "tail increments neither summable nor clearly divergent"
    return OrliczVerdict(outcome, val, cmp or _threshold_comparison(spec, phi, outcome), note,
                         {"criterion": "a", "per_lambda": per})


def criterion_b(spec: ModelSpec, w: WitnessSpec, phi: YoungFunction, lam_grid=LAMBDA_GRID,
                check_regime: bool = True) -> OrliczVerdict:
    """NotSubset when ∫ Φ'(u)/(u v_t(γ_t(λu))) du diverges for every λ in the grid.

    v_t(γ_t(λu)) increases with λ, so divergence at the largest λ of the grid
    implies divergence for all smaller λ; the grid bounds the larger ones.
    """
    if check_regime:
        _ensure_regime(spec)
    if limit_parameter_b(spec.operator, w) >= 2:
        raise HypothesisError("witness needs b < 2")
    lu0 = log_u0(spec, "H", w)
    per = {}
    all_div = True
    for lm in lam_grid:
        llm = math.log(lm)
        s0 = max(1.0, math.log(spec.kappa_tilde) - llm, lu0 - llm) + 1e-9

        def integrand(s, llm=llm):
            x = log_gamma_t(spec, w, s + llm)
            return phi.log_phi_prime(s) - log_rate_v(spec, w, x)
        edges, logI = _window_log_increments(integrand, s0)
        kind, ev = _integral_report(edges, logI)
        per[f"{lm:g}"] = dict(ev, behaviour=kind)
        all_div &= kind == "divergent"
    if all_div:
        outcome, val, note = OrliczOutcome.NOT_SUBSET, math.inf, ""
    else:
        outcome = OrliczOutcome.INCONCLUSIVE
        val = max(v["log_integral"] for v in per.values())
        note = "lower-bound integral does not diverge for every lambda"
    return OrliczVerdict(outcome, val, _threshold_comparison(spec, phi, outcome), note,
                         {"criterion": "b", "per_lambda": per,
                          "lambda_monotonicity": "integrand decreasing in lambda"})


def classify_orlicz(spec: ModelSpec, w: WitnessSpec, phi: YoungFunction) -> OrliczVerdict:
    """Combine both criteria; never returns MapsInto and NotSubset together."""
    a = criterion_a(spec, phi)
    b = criterion_b(spec, w, phi, check_regime=False)
    if a.verdict == OrliczOutcome.MAPS_INTO and b.verdict == OrliczOutcome.NOT_SUBSET:
        raise AssertionError("criteria (a) and (b) contradict each other")
    return a if a.verdict == OrliczOutcome.MAPS_INTO else b


# ---------------------------------------------------------------------------
# Luxemburg norm


_LUX_NEAR = np.arange(-40.0, 1.0 + 1.0, 1.0)    # log-radius x ∈ [−40, 1]


@dataclass(frozen=True)
class RadialLog:
    """A radial function h given by log|h| on log-radius.

    ``log_h_env`` optionally gives log(|h| (f₁/g)² r^d) directly, the radial
    density per unit log-radius; supply it when h carries factors that cancel
    against the ground-state envelope or the volume element.
    """

    log_h: Callable
    log_h_env: Optional[Callable] = None

    def __call__(self, x):
        return self.log_h(x)


def witness_log_h(spec: ModelSpec, w: WitnessSpec) -> RadialLog:
    """h = g² / (η r^{d−1} f₁²); h (f₁/g)² r^d = r/η exactly."""
    d = spec.operator.d

    def log_h(x):
        x = np.asarray(x, dtype=float)
        return (2 * spec.g.log_at(x) - w.log_eta_at(x) - (d - 1) * x
                - 2 * np.minimum(spec.f.log_at(x), 0.0))

    def log_h_env(x):
        return -np.asarray(w.eta.log_excess_at(x), dtype=float)
    return RadialLog(log_h, log_h_env)


def _log_env_core(spec, x):
    # log(f₁/g)² on log-radius x, the squared ground-state envelope without C10
    return 2 * (np.minimum(spec.f.log_at(x), 0.0) - spec.g.log_at(x))


def _lux_nodes(spec):
    """Gauss-Legendre nodes in log-radius x and log-weights (dx measure).

    Below x = 1 the panels are uniform in x; beyond they are uniform in
    log x, up to the largest log-radius the profiles can represent.
    """
    a, b = _LUX_NEAR[:-1, None], _LUX_NEAR[1:, None]
    x1 = 0.5 * (a + b) + 0.5 * (b - a) * _GL_NODES[None, :]
    w1 = np.log(0.5 * (b - a) * _GL_WEIGHTS[None, :]) + 0 * x1
    top = math.log(min(spec.x_cap, 1e300))
    e = np.linspace(0.0, top, int(math.ceil(top)) + 1)
    a, b = e[:-1, None], e[1:, None]
    tau = 0.5 * (a + b) + 0.5 * (b - a) * _GL_NODES[None, :]
    x2 = np.exp(tau)
    w2 = np.log(0.5 * (b - a) * _GL_WEIGHTS[None, :]) + tau
    return np.vstack([x1, x2]), np.vstack([w1, w2])


def _log_mass(spec, log_density):
    """log ∫ over R^d of a radial density given per unit log-radius (r^d included)."""
    d = spec.operator.d
    area = math.log(2 * math.pi ** (d / 2) / math.gamma(d / 2))
    x, lw = _lux_nodes(spec)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        vals = log_density(x.ravel()).reshape(x.shape) + area
    vals = np.where(np.isnan(vals), -np.inf, vals)
    per = logsumexp(vals + lw, axis=1)
    tail = per[-6:]
    divergent = bool(np.isfinite(tail[-1]) and tail[-1] > float(logsumexp(per)) - 30
                     and np.all(np.diff(tail) > -1e-3))
    return (math.inf if divergent else float(logsumexp(per))), per


def luxemburg_norm(phi: YoungFunction, log_h, spec: ModelSpec, tol: float = 1e-8,
                   normalize: bool = False):
    """[lower, upper] bracket of inf{λ: ∫ Φ(|h|/λ) dμ ≤ 1} with μ between the envelopes.

    ``log_h`` maps log-radius to log|h| (−inf where h vanishes), or is a
    RadialLog.  The measure is C10^{∓2} (f₁/g)² dx; ``normalize`` rescales
    (f₁/g)² to total mass 1.  Φ(v) is split as v · (Φ(v)/v) so that h·μ can be
    taken from ``RadialLog.log_h_env`` without cancellation.
    """
    rl = log_h if isinstance(log_h, RadialLog) else RadialLog(log_h)
    probe = np.asarray(rl.log_h(_lux_nodes(spec)[0].ravel()), dtype=float)
    if np.all(probe == -np.inf):
        return (0.0, 0.0)
    shift = 0.0
    if normalize:
        m, _ = _log_mass(spec, lambda x: _log_env_core(spec, x) + spec.operator.d * x)
        shift = -m
    lc = 2 * math.log(spec.C10)

    def log_N(log_lam, side):
        offset = shift + (-lc if side == "lower" else lc)

        def integrand(x):
            lh = np.asarray(rl.log_h(x), dtype=float)
            lhe = (np.asarray(rl.log_h_env(x), dtype=float) if rl.log_h_env
                   else lh + _log_env_core(spec, x) + spec.operator.d * np.asarray(x))
            with np.errstate(invalid="ignore"):
                excess = np.where(lh == -np.inf, 0.0, phi.log_phi_over_u(lh - log_lam))
            return np.where(lh == -np.inf, -np.inf, lhe - log_lam + excess) + offset
        return _log_mass(spec, integrand)[0]

    out = []
    for side in ("lower", "upper"):
        lo, hi = -50.0, 50.0
        while log_N(hi, side) > 0 and hi < 700:
            hi += 50.0
        if log_N(hi, side) > 0:
            if side == "lower":
                raise NonIntegrable("Φ(|h|/λ) is not μ-integrable for any λ")
            out.append(math.inf)
            continue
        while log_N(lo, side) <= 0 and lo > -700:
            lo -= 50.0
        root = optimize.brentq(lambda ll: min(log_N(ll, side), 1e300), lo, hi, xtol=tol, rtol=1e-14)
        out.append(math.exp(root))
    return tuple(out)
