"""Command-line entry point: ``intrsm <subcommand> [options]``.

Numeric results go to standard output as JSON (or CSV with ``--format csv``).
With ``--out DIR`` every result is also written to DIR together with a
``manifest.json``; each output file carries the manifest hash, which covers
everything except the timestamp.  Errors are reported as one JSON object on
standard error.

Exit codes: 0 ok, 2 condition failed, 3 inconclusive, 64 usage, 65 data,
70 internal.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import os
import sys
import warnings
from typing import Optional

from . import __version__
from . import config as cfgmod
from .errors import ConfigError, HypothesisError, IntrsmError, RegimeError

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 2, 3
EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 64, 65, 70

# criterion pairings: θ for which the success threshold K t is positive
PAIRING_THETA = {"Ex61": 0.5, "Ex62": 1.5, "Ex63": 0.5, "Ex64": 1.5}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _clean(obj.item())
    if hasattr(obj, "value") and obj.__class__.__module__.startswith("intrsm"):
        return obj.value
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# manifest and output

class Run:
    def __init__(self, args, cfg: dict, flags: dict):
        self.args = args
        self.cfg = cfg
        self.outputs: list = []
        # --threads, --out and --format do not change numeric results
        argv = {k: v for k, v in sorted(vars(args).items()) if k not in ("threads", "out", "format")}
        self.manifest = dict(subcommand=args.command, config_path=args.config, config=cfg,
                             overrides=flags, flags=argv, version=__version__, seed=self.seed)
        self.hash = hashlib.sha256(_dumps(self.manifest).encode()).hexdigest()[:16]

    @property
    def seed(self) -> int:
        if getattr(self.args, "seed", None) is not None:
            return self.args.seed
        return int(self.cfg.get("seed", 0))

    @property
    def threads(self) -> int:
        if getattr(self.args, "threads", None) is not None:
            return self.args.threads
        return int(self.cfg.get("threads", 1))

    def emit(self, name: str, payload, csv_text: Optional[str] = None, text: Optional[str] = None):
        if self.args.format == "csv" and csv_text is not None:
            sys.stdout.write(csv_text)
        else:
            sys.stdout.write(_dumps(payload) + "\n")
        if self.args.out:
            os.makedirs(self.args.out, exist_ok=True)
            path = os.path.join(self.args.out, f"{name}.json")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(_dumps({"manifest_hash": self.hash, "data": payload}) + "\n")
            self.outputs.append(path)
            if csv_text is not None:
                path = os.path.join(self.args.out, f"{name}.csv")
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(f"# manifest_hash={self.hash}\n{csv_text}")
                self.outputs.append(path)
            if text is not None:
                path = os.path.join(self.args.out, f"{name}.md")
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(f"<!-- manifest_hash={self.hash} -->\n{text}")
                self.outputs.append(path)

    def finish(self):
        if not self.args.out:
            return
        man = dict(self.manifest, outputs=self.outputs, manifest_hash=self.hash,
                   timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat())
        with open(os.path.join(self.args.out, "manifest.json"), "w", encoding="utf-8") as fh:
            fh.write(_dumps(man) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_classify(run: Run, spec, witness, name) -> int:
    from .assumptions import Regime, Verdict, check_A1, classify_with_reports
    regime, reports = classify_with_reports(spec)
    a1 = check_A1(spec)
    payload = [a1.to_dict()] + [r.to_dict() for r in reports]
    run.emit("classify", payload)
    sys.stdout.write(f"regime: {regime.value}\n")
    if a1.verdict == Verdict.FAIL:
        return EXIT_FAIL
    return EXIT_INCONCLUSIVE if regime == Regime.BORDERLINE else EXIT_OK


def _decades(text: str):
    from .rates import decade_grid
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError("--u-decades expects lo:hi:step") from None
    if step <= 0 or hi < lo:
        raise UsageError("--u-decades needs hi >= lo and a positive step")
    return decade_grid(lo, hi, step)


def cmd_rate(run: Run, spec, witness, name) -> int:
    from .rates import rate_table
    table = rate_table(spec, witness, log_u_grid=_decades(run.args.u_decades))
    run.emit("rate", json.loads(table.to_json()), table.to_csv())
    return EXIT_OK


def _threshold_text(rec, verdict) -> str:
    cmp_ = verdict.threshold_comparison or {}
    lines = ["threshold comparison",
             f"  success below : {rec.success_below if rec else 'n/a'}",
             f"  failure above : {rec.failure_above if rec else 'n/a'}",
             f"  predicted     : {cmp_.get('predicted', 'n/a')}",
             f"  numeric       : {verdict.verdict.value}",
             f"  consistent    : {cmp_.get('consistent', 'n/a')}"]
    return "\n".join(lines) + "\n"


def cmd_orlicz(run: Run, spec, witness, name) -> int:
    from .errors import NoMatchError
    from .orlicz import OrliczOutcome, YoungFunction, analytic_thresholds, classify_orlicz
    try:
        phi = YoungFunction.parse(run.args.phi)
    except (IndexError, ValueError) as exc:
        raise UsageError(f"--phi: {exc}") from None
    verdict = classify_orlicz(spec, witness, phi)
    try:
        rec = analytic_thresholds(spec, phi.family)
    except NoMatchError:
        rec = None
    text = _threshold_text(rec, verdict)
    run.emit("orlicz", verdict.to_dict(), text=text)
    sys.stderr.write(text)
    return EXIT_INCONCLUSIVE if verdict.verdict == OrliczOutcome.INCONCLUSIVE else EXIT_OK


def _vector(text: str):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse vector {text!r}") from None


def cmd_gamma(run: Run, spec, witness, name) -> int:
    from .kernelbound import gamma_kernel
    a = run.args
    est = gamma_kernel(spec, a.tau, _vector(a.x), _vector(a.y), a.method, samples=a.samples,
                       seed=run.seed, threads=run.threads)
    run.emit("gamma", est.to_dict())
    return EXIT_OK


def cmd_verify(run: Run, spec, witness, name) -> int:
    from .assumptions import Regime, classify_regime
    from .asymptotics import Lemma, lemma_table
    lemma = Lemma(run.args.lemma)
    if lemma != Lemma.CONSTANTS and classify_regime(spec) == Regime.BORDERLINE:
        raise RegimeError("asymptotic tables need a classified regime")
    table = lemma_table(spec, lemma, witness, _decades(run.args.u_decades))
    run.emit(f"verify_{lemma.value}", table.to_dict(), table.to_csv())
    return EXIT_OK if table.passed else EXIT_FAIL


def cmd_mc(run: Run, spec, witness, name) -> int:
    from .montecarlo import MCConfig, feynman_kac_groundstate, tail_probe, verify_A2_profile
    a = run.args
    cfg = MCConfig(spec, seed=run.seed, n_paths=a.paths, n_steps=a.steps, t=a.t,
                   threads=run.threads)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if a.experiment == "a2":
            res = verify_A2_profile(cfg)
        elif a.experiment == "groundstate":
            res = feynman_kac_groundstate(cfg)
        else:
            res = tail_probe(cfg, a.h, witness=witness)
    for w in caught:
        res.diagnostics.setdefault("warnings", []).append(f"{w.category.__name__}: {w.message}")
    run.emit(f"mc_{a.experiment}", dict(config=cfg.to_dict(), result=res.to_dict()), res.to_csv())
    return EXIT_OK if res.passed else EXIT_FAIL


def example_report(name: str) -> tuple:
    """(JSON-ready dict, markdown) reproducing one catalog pairing."""
    from .assumptions import classify_regime
    from .asymptotics import border_rate_table
    from .catalog import example
    from .orlicz import YoungFunction, analytic_thresholds, criterion_a, criterion_b
    from .rates import decade_grid, derive_constants

    theta = PAIRING_THETA[name]
    ex = example(name, theta=theta)
    k, kt, c6 = derive_constants(ex.spec)
    regimes = {str(th): classify_regime(example(name, theta=th).spec).value for th in (0.5, 1.5)}
    border = border_rate_table(ex.spec, decade_grid(10, 60, 10))
    rec = analytic_thresholds(ex.spec, ex.young_family)
    lo = YoungFunction(ex.young_family, c=0.5 * rec.success_below, theta=theta)
    hi = YoungFunction(ex.young_family, c=2.0 * rec.failure_above, theta=theta)
    va = criterion_a(ex.spec, lo)
    vb = criterion_b(ex.spec, ex.witness, hi)
    report = dict(example=name, theta=theta, constants=dict(K=k, K_tilde=kt, C6=c6),
                  regimes=regimes, border_rates=border.to_dict(), thresholds=rec.to_dict(),
                  criterion_a=dict(c=lo.c, **va.to_dict()),
                  criterion_b=dict(c=hi.c, **vb.to_dict()))
    small = None
    if name in ("Ex62", "Ex64"):
        s_ex = example(name, theta=0.5)
        small = criterion_a(s_ex.spec, YoungFunction(ex.young_family, c=1.0, theta=0.5))
        report["small_theta_criterion_a"] = small.to_dict()

    md = [f"# {name} (theta = {theta})", "", "## Constants",
          f"- K = {k!r}", f"- K_tilde = {kt!r}", f"- C6 = {c6!r}", "", "## Regime"]
    md += [f"- theta = {th}: {v}" for th, v in regimes.items()]
    md += ["", "## Border rate g(alpha_t(u)) / closed form", "", "| log10 u | ratio |", "|---|---|"]
    md += [f"| {r[0]:.0f} | {r[1]:.6f} |" for r in border.rows]
    md += ["", "## Orlicz range",
           f"- success threshold: c < {rec.success_below!r}",
           f"- failure threshold: c > {rec.failure_above!r}",
           f"- criterion (a) at c = {lo.c!r}: {va.verdict.value}",
           f"- criterion (b) at c = {hi.c!r}: {vb.verdict.value}"]
    if small is not None:
        md.append(f"- theta = 0.5: criterion (a) gives no range information ({small.note})")
    return report, "\n".join(md) + "\n"


def cmd_examples(run: Run, spec, witness, name) -> int:
    from .catalog import NAMES
    a = run.args
    if a.all or a.which in (None, "All"):
        names = list(NAMES)
    else:
        names = [a.which]
    bundle, md = {}, []
    for n in names:
        rep, text = example_report(n)
        bundle[n] = rep
        md.append(text)
    run.emit("examples", bundle, text="\n".join(md))
    return EXIT_OK


COMMANDS = {"classify": cmd_classify, "rate": cmd_rate, "orlicz": cmd_orlicz, "gamma": cmd_gamma,
            "verify": cmd_verify, "mc": cmd_mc, "examples": cmd_examples}


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", default=None, help="JSON model config")
    g.add_argument("--out", default=None, help="directory for output files")
    g.add_argument("--format", choices=["csv", "json"], default="json")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--threads", type=int, default=None)
    g.add_argument("--example", default=None, help="catalog pairing (Ex61..Ex64)")
    g.add_argument("--theta", type=float, default=None)

    p = _Parser(prog="intrsm", description=__doc__.split("\n")[0], parents=[common])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("classify", parents=[common], help="regime classification")
    s = sub.add_parser("rate", parents=[common], help="rate table")
    s.add_argument("--u-decades", default="10:60:10")
    s.add_argument("--t", type=float, default=None)
    s = sub.add_parser("orlicz", parents=[common], help="Orlicz range verdict")
    s.add_argument("--phi", required=True, help="family,c,theta (e.g. ExpLog,0.01,0.5)")
    s.add_argument("--t", type=float, default=None)
    s = sub.add_parser("gamma", parents=[common], help="Γ(τ, x, y)")
    s.add_argument("--tau", type=float, required=True)
    s.add_argument("--x", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--method", choices=["Quadrature", "MonteCarlo"], default="Quadrature")
    s.add_argument("--samples", type=int, default=200_000)
    s = sub.add_parser("verify", parents=[common], help="asymptotic convergence tables")
    s.add_argument("--lemma", choices=["L42a", "L42b", "L53", "Kconst", "BorderRates"],
                   required=True)
    s.add_argument("--u-decades", default="10:60:10")
    s = sub.add_parser("mc", parents=[common], help="Monte Carlo experiments")
    s.add_argument("--experiment", choices=["a2", "groundstate", "tail"], required=True)
    s.add_argument("--paths", type=int, default=100_000)
    s.add_argument("--steps", type=int, default=20)
    s.add_argument("--t", type=float, default=None)
    s.add_argument("--h", choices=["WitnessH", "IndicatorFar", "One"], default="WitnessH")
    s = sub.add_parser("examples", parents=[common], help="reproduce the catalog pairings")
    s.add_argument("which", nargs="?", choices=["Ex61", "Ex62", "Ex63", "Ex64", "All"])
    s.add_argument("--all", action="store_true")
    return p


def _flag_overrides(args) -> dict:
    over: dict = {}
    if args.example:
        over["example"] = args.example
    if args.theta is not None:
        over.setdefault("potential", {})["theta"] = args.theta
    if getattr(args, "t", None) is not None and args.command != "mc":
        over["t"] = args.t
    return over


def _error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be positive")
        flags = _flag_overrides(args)
        if args.command == "examples":
            cfg = cfgmod.merge(cfgmod.env_overrides(), flags)
            spec = witness = name = None
        else:
            if not (args.config or args.example or os.environ.get("INTRSM_EXAMPLE")):
                flags.setdefault("example", "Ex61")
            cfg = cfgmod.load(args.config, flags)
            spec, witness, name = cfgmod.build(cfg)
        run = Run(args, cfg, flags)
        code = COMMANDS[args.command](run, spec, witness, name)
        run.finish()
        return code
    except UsageError as exc:
        return _error("usage", str(exc), EXIT_USAGE)
    except ConfigError as exc:
        return _error("ConfigError", str(exc), EXIT_USAGE)
    except (RegimeError, HypothesisError) as exc:
        return _error(type(exc).__name__, str(exc), EXIT_FAIL)
    except IntrsmError as exc:
        return _error(type(exc).__name__, str(exc), EXIT_DATA)
    except Exception as exc:  # noqa: BLE001
        return _error("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
