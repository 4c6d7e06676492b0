"""Convergence tables for the large-u behaviour of the inverse-profile radii.

Each table evaluates one ratio on a grid of levels ``log u`` and records
whether its last rows sit inside the expected band and move monotonically
toward it.  The bands are the expected large-u limits: ratios of g at the
three radii tend to 1 (or stay in a bracket fixed by b and ω), rate functions
are sub-polynomial, and g(α_t(u)) follows an explicit border rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .assumptions import analytic_omega
from .errors import NoMatchError
from .profiles import OperatorFamily, PotentialFamily
from .rates import (LN10, ModelSpec, WitnessSpec, decade_grid, derive_constants, doubling_constant,
                    limit_parameter_b, log_alpha_t, log_beta_t, log_gamma_t, log_rate_v,
                    log_rate_w, log_rate_w_tilde)


class Lemma(str, Enum):
    SUBPOLY = "L42a"
    EQUIVALENCE = "L42b"
    WITNESS_BRACKET = "L53"
    CONSTANTS = "Kconst"
    BORDER = "BorderRates"


def log_border_rate(spec: ModelSpec, log_u):
    """log of the explicit large-u rate of g(α_t(u)) for the catalog families."""
    lu = np.asarray(log_u, dtype=float)
    op, pot = spec.operator, spec.potential
    th = pot.theta
    frac = op.family == OperatorFamily.FRACTIONAL
    if frac and pot.family == PotentialFamily.POWER_LOG:
        return th * np.log(lu / (2 * (op.d + 2 * op.a)))
    if frac and pot.family == PotentialFamily.POWER_ITERLOG:
        return th * np.log(np.log(lu))
    if not frac and pot.family == PotentialFamily.POWER:
        return th * np.log(lu / (2 * op.decay_rate))
    if not frac and pot.family == PotentialFamily.POWER_LOG:
        return th * np.log(np.log(lu))
    raise NoMatchError(f"no border rate for {op.family.value}/{pot.family.value}")


@dataclass
class ConvergenceTable:
    name: str
    columns: list
    rows: list
    band: tuple
    passed: bool
    monotone: bool
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
            return v
        return dict(name=self.name, columns=self.columns,
                    rows=[[clean(float(v)) for v in r] for r in self.rows],
                    band=[clean(float(b)) for b in self.band], passed=self.passed,
                    monotone=self.monotone, notes=self.notes)

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(repr(float(v)) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"


def _monotone_toward(vals, target: float, last: int = 3) -> bool:
    tail = np.abs(np.asarray(vals[-last:], dtype=float) - target)
    return bool(np.all(np.diff(tail) <= 0))


def _table(name, lus, cols, band, target, last=3, extra=None):
    cols = [np.asarray(c, dtype=float) for c in cols]
    rows = [[lu / LN10] + [c[i] for c in cols] for i, lu in enumerate(lus)]
    final = [c[-1] for c in cols]
    inside = all(band[0] <= v <= band[1] for v in final)
    mono = all(_monotone_toward(c, target, last) for c in cols) if target is not None else \
        all(bool(np.all(np.diff(c[-last:]) <= 0)) for c in cols)
    return name, rows, inside, mono, extra or {}


def border_rate_table(spec: ModelSpec, log_u_grid) -> ConvergenceTable:
    lus = np.asarray(log_u_grid, dtype=float)
    ratio = np.exp(spec.g.log_at(log_alpha_t(spec, lus)) - log_border_rate(spec, lus))
    name, rows, ok, mono, _ = _table("BorderRates", lus, [ratio], (0.97, 1.03), 1.0)
    return ConvergenceTable(name, ["log10_u", "g_alpha_over_rate"], rows, (0.97, 1.03),
                            ok and mono, mono)


def subpoly_table(spec: ModelSpec, w: Optional[WitnessSpec], log_u_grid, delta: float = 0.1,
                  bound: float = 1e-3) -> ConvergenceTable:
    """w_t(α_t(u))/u^δ and its companions; all must end below ``bound``."""
    lus = np.asarray(log_u_grid, dtype=float)
    cols = [np.exp(log_rate_w(spec, log_alpha_t(spec, lus)) - delta * lus),
            np.exp(log_rate_w_tilde(spec, log_beta_t(spec, lus)) - delta * lus)]
    names = ["log10_u", "w_over_u_delta", "w_tilde_over_u_delta"]
    if w is not None:
        cols.append(np.exp(log_rate_v(spec, w, log_gamma_t(spec, w, lus)) - delta * lus))
        names.append("v_over_u_delta")
    name, rows, ok, mono, _ = _table("L42a", lus, cols, (0.0, bound), None)
    return ConvergenceTable(name, names, rows, (0.0, bound), ok and mono, mono, dict(delta=delta))


def equivalence_table(spec: ModelSpec, log_u_grid) -> ConvergenceTable:
    lus = np.asarray(log_u_grid, dtype=float)
    ratio = np.exp(spec.g.log_at(log_beta_t(spec, lus)) - spec.g.log_at(log_alpha_t(spec, lus)))
    name, rows, ok, mono, _ = _table("L42b", lus, [ratio], (0.97, 1.03), 1.0)
    return ConvergenceTable(name, ["log10_u", "g_beta_over_g_alpha"], rows, (0.97, 1.03),
                            ok and mono, mono)


def witness_bracket(spec: ModelSpec, w: WitnessSpec) -> tuple:
    """(lower, upper) band for g(γ_t)/g(α_t): [0.95, (2/(2−b))^ω·1.05]."""
    b = limit_parameter_b(spec.operator, w)
    om = analytic_omega(spec)
    if om is None or not math.isfinite(om):
        raise NoMatchError("no analytic ω for this potential")
    return 0.95, (2 / (2 - b)) ** om * 1.05, b, om


def witness_table(spec: ModelSpec, w: WitnessSpec, log_u_grid) -> ConvergenceTable:
    lus = np.asarray(log_u_grid, dtype=float)
    lo, hi, b, om = witness_bracket(spec, w)
    ratio = np.exp(spec.g.log_at(log_gamma_t(spec, w, lus)) - spec.g.log_at(log_alpha_t(spec, lus)))
    inside = lo <= ratio[-1] <= hi
    rows = [[lu / LN10, r] for lu, r in zip(lus, ratio)]
    return ConvergenceTable("L53", ["log10_u", "g_gamma_over_g_alpha"], rows, (lo, hi),
                            bool(inside), True, dict(b=b, omega=om))


def constants_table(spec: ModelSpec) -> ConvergenceTable:
    k, kt, c6 = derive_constants(spec)
    c6_grid = doubling_constant(spec.potential)
    rows = [[k, kt, c6, c6_grid]]
    ok = c6_grid <= c6 * (1 + 1e-9)
    return ConvergenceTable("Kconst", ["K", "K_tilde", "C6", "C6_grid"], rows, (0.0, c6),
                            bool(ok), True)


def lemma_table(spec: ModelSpec, lemma, witness: Optional[WitnessSpec] = None,
                log_u_grid=None) -> ConvergenceTable:
    lemma = Lemma(lemma)
    if log_u_grid is None:
        log_u_grid = decade_grid(10, 60, 10)
    if lemma == Lemma.BORDER:
        return border_rate_table(spec, log_u_grid)
    if lemma == Lemma.SUBPOLY:
        return subpoly_table(spec, witness, log_u_grid)
    if lemma == Lemma.EQUIVALENCE:
        return equivalence_table(spec, log_u_grid)
    if lemma == Lemma.WITNESS_BRACKET:
        if witness is None:
            raise NoMatchError("the witness bracket needs a witness")
        return witness_table(spec, witness, log_u_grid)
    return constants_table(spec)
