"""Monte Carlo checks: Lévy increments, heat-kernel profile, Feynman–Kac and tail probes.

The driving processes are sampled exactly in law from their increments; only the
potential integral along a path is time-discretized (left-endpoint rule).  Every
experiment runs in ``n_batches`` independent batches with their own seeded
stream, and batches are reduced in a fixed order, so results do not depend on
the thread count.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy import stats

from .errors import (DimensionError, IntrsmError, DiscretizationWarning, DomainError, InsufficientSamples,
                     RejectionStall)
from .profiles import OperatorFamily
from .rates import ModelSpec, log_tail_upper, log_tail_witness

MIN_PATHS = 1000
MIN_BATCHES = 20


@dataclass(frozen=True)
class MCConfig:
    spec: ModelSpec
    seed: int = 0
    n_paths: int = 100_000
    n_steps: int = 20
    t: Optional[float] = None
    d: Optional[int] = None
    n_batches: int = MIN_BATCHES
    threads: int = 1

    def __post_init__(self):
        if self.t is None:
            object.__setattr__(self, "t", float(self.spec.t))
        if self.d is None:
            object.__setattr__(self, "d", self.spec.operator.d)
        if self.d != self.spec.operator.d:
            raise DimensionError("config dimension disagrees with the operator")
        if not self.t > 0:
            raise DomainError("horizon must be positive")
        if self.n_steps < 1 or self.n_paths < 1:
            raise DomainError("n_steps and n_paths must be positive")
        if self.n_batches < MIN_BATCHES:
            raise DomainError(f"need at least {MIN_BATCHES} batches")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def batch_size(self) -> int:
        return -(-self.n_paths // self.n_batches)

    def to_dict(self) -> dict:
        return dict(seed=self.seed, n_paths=self.n_paths, n_steps=self.n_steps, t=self.t,
                    d=self.d, n_batches=self.n_batches)


@dataclass
class MCResult:
    """Point estimate with a batch-means CI (95 %) and free-form diagnostics.

    ``curves`` holds equal-length columns for CSV export.
    """
    experiment: str
    estimate: float
    ci_halfwidth: float
    passed: Optional[bool] = None
    diagnostics: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(dict(experiment=self.experiment, estimate=self.estimate,
                              ci_halfwidth=self.ci_halfwidth, passed=self.passed,
                              diagnostics=self.diagnostics,
                              curves={k: list(v) for k, v in self.curves.items()}))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = list(self.curves)
        w.writerow(cols)
        for row in zip(*(self.curves[c] for c in cols)):
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, Enum):
        return obj.value
    return obj


# ---------------------------------------------------------------------------
# batching

def _batch_rngs(seed: int, n: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _run_batches(fn, cfg: MCConfig) -> list:
    """fn(rng, n) for each batch; results come back in batch order."""
    rngs = _batch_rngs(cfg.seed, cfg.n_batches)
    n = cfg.batch_size
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            return list(ex.map(lambda r: fn(r, n), rngs))
    return [fn(r, n) for r in rngs]


def _ci(values) -> float:
    v = np.asarray(values, dtype=float)
    b = v.shape[0]
    out = stats.t.ppf(0.975, b - 1) * np.std(v, axis=0, ddof=1) / math.sqrt(b)
    return float(out) if v.ndim == 1 else out


# ---------------------------------------------------------------------------
# samplers

def _check_a(a):
    if not 0 < a < 1:
        raise DomainError("a must lie in (0, 1)")


def positive_stable(a: float, dt: float, rng, size=None):
    """Stable subordinator at time dt: E exp(-λ S) = exp(-dt λ^a) (Kanter's representation)."""
    _check_a(a)
    u = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    s = np.sin(a * u) / np.sin(u) ** (1 / a) * (np.sin((1 - a) * u) / e) ** ((1 - a) / a)
    return dt ** (1 / a) * s


def sample_stable_increment(a: float, d: int, dt: float, rng, size=None):
    """Increment over dt of the isotropic 2a-stable process with symbol |ξ|^{2a}.

    d = 1 uses the Chambers–Mallows–Stuck formula; d ≥ 2 subordinates Brownian
    motion.  Returns shape ``size + (d,)`` (or ``(d,)`` when size is None).
    """
    _check_a(a)
    if not dt > 0:
        raise DomainError("dt must be positive")
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    if d == 1:
        al = 2 * a
        v = rng.uniform(-math.pi / 2, math.pi / 2, shape)
        w = rng.standard_exponential(shape)
        x = np.sin(al * v) / np.cos(v) ** (1 / al) * (np.cos((1 - al) * v) / w) ** ((1 - al) / al)
        return (dt ** (1 / al) * x)[..., None]
    s = positive_stable(a, dt, rng, shape)
    return np.sqrt(2 * s)[..., None] * rng.standard_normal(shape + (d,))


def tilted_stable(a: float, m: float, dt: float, rng, size, split=True):
    """Relativistic subordinator: stable law tilted by exp(-m^{1/a} S + m dt).

    Rejection from the stable proposal, accepting with probability
    exp(-m^{1/a} S); the acceptance rate is exp(-m dt).  With ``split`` a long
    step is cut into ⌈m dt⌉ pieces so each piece accepts at least 1/e.
    Returns (samples, accepted, proposed).
    """
    _check_a(a)
    if not m > 0:
        raise DomainError("mass must be positive")
    pieces = max(1, math.ceil(m * dt)) if split else 1
    h = dt / pieces
    if -m * h < math.log(1e-6):
        raise RejectionStall(f"predicted acceptance exp(-{m * h:.3g}) below 1e-6")
    lam = m ** (1 / a)
    total = np.zeros(size * pieces)
    filled, proposed = 0, 0
    need = size * pieces
    while filled < need:
        k = int((need - filled) * math.exp(m * h) * 1.1) + 16
        s = positive_stable(a, h, rng, k)
        keep = s[rng.uniform(size=k) < np.exp(-lam * s)]
        proposed += k
        take = min(keep.size, need - filled)
        total[filled:filled + take] = keep[:take]
        filled += take
        if proposed > 1e4 and filled / proposed < 1e-6:
            raise RejectionStall("empirical acceptance below 1e-6")
    # ``proposed`` counts the whole last round, so report acceptance from it
    accepted = filled
    return total.reshape(size, pieces).sum(axis=1), accepted, proposed


def sample_relativistic_increment(a: float, m: float, d: int, dt: float, rng, size=None):
    """Increment over dt of the process with symbol (|ξ|² + m^{1/a})^a − m."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    n = 1 if size is None else int(size)
    s, _, _ = tilted_stable(a, m, dt, rng, n)
    x = np.sqrt(2 * s)[:, None] * rng.standard_normal((n, d))
    return x[0] if size is None else x


def acceptance_rate(a: float, m: float, dt: float, n: int, seed: int = 0) -> tuple:
    """Empirical acceptance of a single unsplit rejection step and its standard error."""
    rng = np.random.default_rng(seed)
    s = positive_stable(a, dt, rng, n)
    acc = np.exp(-m ** (1 / a) * s)
    # Rao–Blackwellized: the acceptance probability itself is averaged
    return float(acc.mean()), float(acc.std(ddof=1) / math.sqrt(n))


def _increment_sampler(spec: ModelSpec):
    op = spec.operator
    if op.family == OperatorFamily.FRACTIONAL:
        return lambda dt, rng, n: sample_stable_increment(op.a, op.d, dt, rng, n)
    return lambda dt, rng, n: sample_relativistic_increment(op.a, op.m, op.d, dt, rng, n)


# ---------------------------------------------------------------------------
# self-similarity

def stable_scaling(a: float, dts=(0.01, 0.1, 1.0, 10.0), n_paths: int = 100_000, seed: int = 0,
                   d: int = 1, tol: float = 0.05) -> MCResult:
    """median|X_dt| / dt^{1/(2a)}, relative to its value at the reference dt (the middle one)."""
    dts = list(dts)
    rngs = _batch_rngs(seed, len(dts))
    med = np.array([np.median(np.linalg.norm(sample_stable_increment(a, d, dt, r, n_paths), axis=1))
                    for dt, r in zip(dts, rngs)])
    scaled = med / np.asarray(dts) ** (1 / (2 * a))
    ref = scaled[len(dts) // 2]
    dev = np.abs(scaled / ref - 1)
    return MCResult("scaling", float(dev.max()), float("nan"), bool(dev.max() <= tol),
                    dict(a=a, d=d, n_paths=n_paths, seed=seed, tol=tol),
                    dict(dt=dts, median=list(med), scaled_ratio=list(scaled / ref)))


# ---------------------------------------------------------------------------
# (A2) histogram

def verify_A2_profile(cfg: MCConfig, r_lo: float = 0.1, r_hi: float = 1e3, per_decade: int = 10,
                      min_count: int = 20, max_spread: float = 1e3) -> MCResult:
    """Histogram of |X_t| on log-spaced bins against f(|x|) ∧ 1."""
    if cfg.d != 1:
        raise DimensionError("density estimation is one-dimensional")
    if cfg.n_paths < MIN_PATHS:
        raise InsufficientSamples(f"need at least {MIN_PATHS} paths")
    spec = cfg.spec
    edges = np.geomspace(r_lo, r_hi, int(round(per_decade * math.log10(r_hi / r_lo))) + 1)
    sampler = _increment_sampler(spec)

    def batch(rng, n):
        r = np.abs(sampler(cfg.t, rng, n)[:, 0])
        return np.histogram(r, edges)[0]

    counts = np.array(_run_batches(batch, cfg))
    n_tot = cfg.batch_size * cfg.n_batches
    width = np.diff(edges)
    centers = np.sqrt(edges[:-1] * edges[1:])
    cap = np.exp(spec.log_f1_at(np.log(centers)))
    total = counts.sum(axis=0)
    dens = total / (n_tot * 2 * width)
    with np.errstate(invalid="ignore"):
        ratio = dens / cap
        per_batch = counts / (cfg.batch_size * 2 * width) / cap
    use = total >= min_count
    if use.sum() < 5:
        raise InsufficientSamples("fewer than five populated bins")
    rmax, rmin = ratio[use].max(), ratio[use].min()
    spread = float(rmax / rmin)
    ci = _ci(per_batch[:, use])
    imax = int(np.argmax(np.where(use, ratio, -np.inf)))
    return MCResult("a2", float(rmax), float(ci[np.flatnonzero(use).tolist().index(imax)]),
                    bool(math.isfinite(spread) and spread < max_spread),
                    dict(ratio_min=float(rmin), spread=spread, bins_used=int(use.sum()),
                         n_paths=n_tot, max_spread=max_spread, excluded_below=r_lo),
                    dict(r=list(centers), count=list(total), density=list(dens),
                         ratio=list(ratio), used=[int(u) for u in use]))


# ---------------------------------------------------------------------------
# Feynman–Kac

def _log_g_abs(spec, z):
    return spec.g.log_at(np.log(np.maximum(np.abs(z), 1e-300)))


def _log_envelope(spec, z):
    lz = np.log(np.maximum(np.abs(z), 1e-300))
    return spec.log_f1_at(lz) - spec.g.log_at(lz)


def _fk_paths(cfg: MCConfig, rng, n, starts, targets):
    """Feynman–Kac weights along n paths from every start point.

    Paths are sampled on the fine step t/(2 n_steps); the potential integral is
    accumulated on both the coarse and the fine grid.  For every target
    function returns the means of exp(-∫V)·target(X) at t/2 and t, for the
    coarse and fine rule: dict[name] -> array (2 rules, 2 horizons, n_starts).
    """
    spec = cfg.spec
    sampler = _increment_sampler(spec)
    steps = 2 * cfg.n_steps
    ds = cfg.t / steps
    half = steps // 2 if cfg.n_steps % 2 == 0 else None
    pos = np.zeros(n)
    i_c = np.zeros((len(starts), n))
    i_f = np.zeros((len(starts), n))
    out = {k: np.zeros((2, 2, len(starts))) for k in targets}

    def record(h):
        x = starts[:, None] + pos[None, :]
        for k, fn in targets.items():
            val = fn(x)
            out[k][0, h] = np.mean(np.exp(-i_c) * val, axis=1)
            out[k][1, h] = np.mean(np.exp(-i_f) * val, axis=1)

    for j in range(steps):
        if half is None and j == steps // 2:
            # odd coarse count: the half horizon is not a coarse node, so use the fine one
            record(0)
        elif half is not None and j == half:
            record(0)
        v = np.exp(_log_g_abs(spec, starts[:, None] + pos[None, :]))
        i_f += v * ds
        if j % 2 == 0:
            i_c += v * 2 * ds
        pos = pos + sampler(ds, rng, n)[:, 0]
    record(1)
    return out


def feynman_kac_groundstate(cfg: MCConfig, target: str = "indicator", grid=None,
                            compare_range=(1.0, 50.0), max_spread: float = 1e2,
                            rel_tol: float = 0.05) -> MCResult:
    """e^{-tH}𝟙_B on a grid, λ₀ from the ratio of horizons t/2 and t, and the envelope ratio.

    ``target`` is "indicator" (B = [-1, 1]) or "one" (B = ℝ).  λ̂₀ compares the
    grid sums of u_t and u_{t/2}; halving the time step must move it by at most
    ``rel_tol`` or a DiscretizationWarning is issued.
    """
    if cfg.d != 1:
        raise DimensionError("Feynman–Kac experiments are one-dimensional")
    if cfg.n_paths < MIN_PATHS:
        raise InsufficientSamples(f"need at least {MIN_PATHS} paths")
    spec = cfg.spec
    if grid is None:
        grid = np.concatenate([np.linspace(0.0, 1.0, 5)[:-1], np.geomspace(1.0, 50.0, 18)])
    grid = np.asarray(grid, dtype=float)
    if target == "indicator":
        fn = {"u": lambda x: (np.abs(x) <= 1.0).astype(float)}
    elif target == "one":
        fn = {"u": lambda x: np.ones_like(x)}
    else:
        raise DomainError(f"unknown target {target!r}")

    res = _run_batches(lambda rng, n: _fk_paths(cfg, rng, n, grid, fn)["u"], cfg)
    arr = np.array(res)                      # batch, rule, horizon, grid
    mean = arr.mean(axis=0)

    def lam(m):                              # m: (..., horizon, grid)
        with np.errstate(divide="ignore"):
            return -np.log(m[..., 1, :].sum(-1) / m[..., 0, :].sum(-1)) / (cfg.t / 2)

    lam_c, lam_f = float(lam(mean[0])), float(lam(mean[1]))
    lam_ci = float(_ci(lam(arr[:, 1])))
    moved = abs(lam_c - lam_f) / max(abs(lam_f), 1e-12)
    if moved > rel_tol:
        warnings.warn(f"halving the step moved the eigenvalue estimate by {moved:.1%}",
                      DiscretizationWarning, stacklevel=2)

    u_t = mean[1, 1]
    with np.errstate(divide="ignore"):
        log_ratio = np.log(u_t) - _log_envelope(spec, grid)
    sel = (np.abs(grid) >= compare_range[0]) & (np.abs(grid) <= compare_range[1])
    spread = float(np.exp(log_ratio[sel].max() - log_ratio[sel].min())) if sel.any() else math.nan
    ok = math.isfinite(spread) and spread <= max_spread and lam_f >= -lam_ci
    return MCResult("groundstate", lam_f, lam_ci, bool(ok),
                    dict(lambda0_coarse=lam_c, lambda0_fine=lam_f, step_sensitivity=moved,
                         envelope_spread=spread, max_spread=max_spread, target=target,
                         n_paths=cfg.batch_size * cfg.n_batches),
                    dict(x=list(grid), u_t=list(u_t), u_half=list(mean[1, 0]),
                         log_ratio_to_envelope=list(log_ratio),
                         ci_u_t=list(_ci(arr[:, 1, 1]))))


# ---------------------------------------------------------------------------
# tail probes

class HChoice(str, Enum):
    WITNESS = "WitnessH"
    INDICATOR_FAR = "IndicatorFar"
    ONE = "One"


def _h_function(spec, choice, r_far):
    if choice == HChoice.ONE:
        return lambda x: np.ones_like(x)
    if choice == HChoice.INDICATOR_FAR:
        return lambda x: (np.abs(x) > r_far).astype(float)
    raise DomainError("witness h needs a WitnessSpec")


def _witness_h(spec, w):
    def h(x):
        lx = np.log(np.maximum(np.abs(x), 1e-300))
        with np.errstate(over="ignore"):
            val = np.exp(2 * spec.g.log_at(lx) - w.eta.log_at(lx) - 2 * spec.log_f1_at(lx))
        return np.where(np.abs(x) >= 1.0, val, 0.0)
    return h


def _h_norm(spec, choice, r_far, witness):
    """‖h‖ in L¹ of the normalized envelope measure (f₁/g)² dx / mass."""
    from scipy import integrate

    from .kernelbound import groundstate_mass
    base = spec.with_(C10=1.0)
    mass = groundstate_mass(base)
    if choice == HChoice.ONE:
        return 1.0
    if choice == HChoice.INDICATOR_FAR:
        def dens(s):
            return math.exp(s + 2 * float(_log_envelope(spec, math.exp(s))))
        lo = math.log(r_far)
        edges = lo + np.array([0.0, 1, 3, 10, 30, 100, 300])
        part = sum(integrate.quad(dens, a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
        return 2 * part / mass
    from .orlicz import YoungFunction, luxemburg_norm, witness_log_h
    lo_, _ = luxemburg_norm(YoungFunction("Power", q=1), witness_log_h(base, witness), base)
    return lo_ / mass


def _pointwise(fn, lu):
    """Envelope values in log form; nan where the envelope is undefined (u below its range)."""
    out = np.full(len(lu), np.nan)
    for i, v in enumerate(lu):
        try:
            out[i] = float(fn(v))
        except IntrsmError:
            pass
    return out


def tail_probe(cfg: MCConfig, h_choice="IndicatorFar", u_grid=None, witness=None,
               r_far: float = 10.0, grid=None, shape_slack: float = 10.0) -> MCResult:
    """μ̂({Q̂_t h > u}) on ``u_grid`` with batch-means CIs.

    Q̂_t h(x) = E_x[e^{-∫V} (h φ̂)(X_t)] / E_x[e^{-∫V} φ̂(X_t)] with φ̂ = f₁/g the
    ground-state envelope; the self-normalization makes Q̂_t 1 = 1 exactly.
    μ̂ is φ̂² dx normalized by its total mass and discretized on ``grid``.
    """
    if cfg.d != 1:
        raise DimensionError("tail probes are one-dimensional")
    if cfg.n_paths < MIN_PATHS:
        raise InsufficientSamples(f"need at least {MIN_PATHS} paths")
    spec = cfg.spec
    choice = HChoice(h_choice)
    if choice == HChoice.WITNESS:
        if witness is None:
            raise DomainError("WitnessH needs a witness")
        h = _witness_h(spec, witness)
    else:
        h = _h_function(spec, choice, r_far)
    u_grid = np.geomspace(1e-3, 50.0, 16) if u_grid is None else np.asarray(u_grid, dtype=float)
    if grid is None:
        grid = np.concatenate([[0.0], np.geomspace(0.02, 300.0, 90)])
    grid = np.asarray(grid, dtype=float)

    from .kernelbound import groundstate_mass
    mass = groundstate_mass(spec.with_(C10=1.0))
    mids = np.concatenate([[0.0], (grid[1:] + grid[:-1]) / 2, [grid[-1]]])
    width = np.diff(mids) * np.where(grid > 0, 2.0, 1.0)
    weights = np.exp(2 * _log_envelope(spec, grid)) * width / mass

    def env(x):
        return np.exp(_log_envelope(spec, x))

    targets = {"num": lambda x: h(x) * env(x), "den": env}

    def batch(rng, n):
        o = _fk_paths(cfg, rng, n, grid, targets)
        return o["num"][1, 1], o["den"][1, 1]

    res = _run_batches(batch, cfg)
    num = np.array([r[0] for r in res])
    den = np.array([r[1] for r in res])
    with np.errstate(invalid="ignore", divide="ignore"):
        q = num.mean(0) / den.mean(0)
        qb = num / den
    q = np.nan_to_num(q)
    qb = np.nan_to_num(qb)
    tail = np.array([weights[q > u].sum() for u in u_grid])
    tail_b = np.array([[weights[row > u].sum() for u in u_grid] for row in qb])
    ci = _ci(tail_b)

    norm = _h_norm(spec, choice, r_far, witness)
    markov = norm / u_grid
    markov_ok = bool(np.all(tail - ci <= markov * (1 + 1e-12)))

    # shape comparison against the upper envelope with one fitted log-shift
    lu = np.log(u_grid)
    upper = _pointwise(lambda v: log_tail_upper(spec, v), lu)
    with np.errstate(divide="ignore"):
        log_tail = np.log(tail)
    # saturated points (μ̂ near its total mass) carry no shape information
    use = np.isfinite(upper) & (tail > 0) & (tail < 0.5)
    shift = float(np.mean(log_tail[use] - upper[use])) if use.any() else math.nan
    excess = float(np.max(log_tail[use] - upper[use] - shift)) if use.any() else math.nan
    shape_ok = bool(not use.any() or excess <= math.log(shape_slack))
    diag = dict(h=choice.value, h_norm=norm, markov_ok=markov_ok, shape_shift=shift,
                shape_excess=excess, shape_ok=shape_ok,
                q_integral=float(np.sum(weights * q)), grid_mass=float(weights.sum()),
                n_paths=cfg.batch_size * cfg.n_batches)
    curves = dict(u=list(u_grid), tail=list(tail), ci=list(ci), markov=list(markov),
                  log_upper_shape=list(upper))
    if choice == HChoice.WITNESS:
        curves["log_witness_shape"] = list(_pointwise(lambda v: log_tail_witness(spec, witness, v), lu))
    return MCResult("tail", float(tail[0]), float(ci[0]), markov_ok and shape_ok, diag, curves)
