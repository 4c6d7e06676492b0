"""The four worked operator/potential pairings used throughout the tests and CLI.

Ex61  fractional f, g = log^θ r,        η = r log² r,              σ = r/2
Ex62  fractional f, g = log^θ log r,    η = r log r log² log r,    σ = r/2
Ex63  relativistic f, g = r^θ,          η = r²,                    σ = r − 1
Ex64  relativistic f, g = log^θ r,      η = r log² r,              σ = r − 1
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .profiles import OperatorFamily, OperatorSpec, PotentialFamily, PotentialSpec, Profile
from .rates import ModelSpec, WitnessSpec

NAMES = ("Ex61", "Ex62", "Ex63", "Ex64")

# default parameters: d = 1, a = 1/2, m = 1, θ = 1/2, t = 1
DEFAULTS = dict(d=1, a=0.5, m=1.0, theta=0.5, t=1.0)


@dataclass(frozen=True)
class Example:
    name: str
    spec: ModelSpec
    witness: WitnessSpec
    young_family: str  # "ExpLog" or "ExpLogLog"
    omega: float       # analytic ω of the small-s ratio condition

    @property
    def theta(self) -> float:
        return self.spec.potential.theta


def example(name: str, theta: float | None = None, t: float | None = None, d: int | None = None,
            a: float | None = None, m: float | None = None, **overrides) -> Example:
    """Build one of the catalog pairings; keyword overrides go to ModelSpec."""
    if name not in NAMES:
        raise KeyError(f"unknown example {name!r}; choose from {NAMES}")
    theta = DEFAULTS["theta"] if theta is None else theta
    t = DEFAULTS["t"] if t is None else t
    d = DEFAULTS["d"] if d is None else d
    a = DEFAULTS["a"] if a is None else a
    m = DEFAULTS["m"] if m is None else m
    if name in ("Ex61", "Ex62"):
        op = OperatorSpec(OperatorFamily.FRACTIONAL, d, a)
    else:
        op = OperatorSpec(OperatorFamily.RELATIVISTIC, d, a, m)
    fam = {"Ex61": PotentialFamily.POWER_LOG, "Ex62": PotentialFamily.POWER_ITERLOG,
           "Ex63": PotentialFamily.POWER, "Ex64": PotentialFamily.POWER_LOG}[name]
    pot = PotentialSpec(fam, theta)
    spec = ModelSpec(op, pot, t=t, **overrides)
    eta = {"Ex61": Profile.eta_r_log2(), "Ex62": Profile.eta_r_logr_loglog2(),
           "Ex63": Profile.eta_power(2.0), "Ex64": Profile.eta_r_log2()}[name]
    sigma = Profile.sigma_half() if name in ("Ex61", "Ex62") else Profile.sigma_shift(1.0)
    young = "ExpLog" if name in ("Ex61", "Ex63") else "ExpLogLog"
    omega = theta if name in ("Ex61", "Ex63") else 0.0
    return Example(name, spec, WitnessSpec(eta, sigma), young, omega)


def all_examples(**kw) -> list:
    return [example(n, **kw) for n in NAMES]


def _stairs_log_g(x):
    """log g at log-radius x: g rises from x_k to about 2 x_k on [x_k, x_k²), x_k = 2^(2^k)."""
    if x < 2.0:
        return 0.0
    k = math.floor(math.log2(math.log2(x)))
    xk = 2.0 ** (2.0 ** k)
    return math.log(xk + (x - xk) / xk)


def borderline_example(t: float = 1.0) -> ModelSpec:
    """Fractional d=1, a=1/2 with a staircase potential.

    g/|log f| returns to 1/2 at every stair and sinks to about 1/x_k before the
    next one, so neither g ≳ |log f| nor g/|log f| → 0 holds.
    """
    g = Profile.custom(log_func=_stairs_log_g)
    pot = PotentialSpec(PotentialFamily.CUSTOM, 1.0, R0=1.0, profile_override=g)
    return ModelSpec(OperatorSpec(OperatorFamily.FRACTIONAL, 1, 0.5), pot, t=t,
                     K=1.0, K_tilde=1.0, C6=2.0)
