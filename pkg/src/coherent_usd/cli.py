"""Command-line frontend.

Exit codes: 0 ok, 1 usage error, 2 I/O error, 3 validation failure.
The default seed may be set with the COHERENT_USD_SEED environment variable;
an explicit --seed always wins.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import montecarlo, qkd, validation
from .errors import ParameterError
from .montecarlo import SCHEMA_VERSION
from .strategies import Scheme

SEED_ENV = "COHERENT_USD_SEED"

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        d = json.loads(text)
        return cls(d["command"], d.get("params", {}), d.get("schema_version", SCHEMA_VERSION))


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _report(cfg: RunConfig, results: dict, checks: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": asdict(cfg),
        "results": results,
        "checks": checks,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _text(d: dict, indent: int = 0) -> str:
    lines = []
    for k, v in d.items():
        if isinstance(v, dict):
            lines.append(" " * indent + f"{k}:")
            lines.append(_text(v, indent + 2))
        else:
            lines.append(" " * indent + f"{k}: {v}")
    return "\n".join(lines)


def _emit(text: str, out: str | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)


def _format_report(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2)
    body = {k: report[k] for k in ("results", "checks")}
    return _text(body) + f"\ntimestamp: {report['timestamp']}"


# ---------------------------------------------------------------------------
# commands


def cmd_curves(p: dict) -> int:
    if p["mu_min"] >= p["mu_max"]:
        raise UsageError("--mu-min must be below --mu-max")
    if p["points"] < 2:
        raise UsageError("--points must be >= 2")
    grid = [float(x) for x in np.linspace(p["mu_min"], p["mu_max"], p["points"])]
    table = montecarlo.sweep(p["n"], p["schemes"], grid, eta=p["eta"], M=p["M"],
                             trials=p["trials"], seed=p["seed"])
    _emit(table.to_csv() if p["format"] == "csv" else table.to_json(), p["out"])
    return EXIT_OK


def cmd_simulate(p: dict) -> int:
    cfg = RunConfig("simulate", p)
    est = montecarlo.estimate(p["scheme"], p["n"], p["mu"], eta=p["eta"], M=p["M"],
                              trials=p["trials"], seed=p["seed"])
    analytic = montecarlo.analytic_value(p["scheme"], p["n"], p["eta"] * p["mu"])
    cmp = montecarlo.compare_to_analytic(est, analytic, 5.0 / p["M"])
    results = {
        "p_hat": est.p_hat,
        "stderr": est.stderr,
        "successes": est.successes,
        "trials": est.trials,
        "analytic": analytic,
        "z_score": cmp.z_score,
    }
    checks = {"agreement": {"passed": cmp.passed, "band": cmp.band}}
    _emit(_format_report(_report(cfg, results, checks), p["format"]), p["out"])
    return EXIT_OK


def cmd_qkd(p: dict) -> int:
    cfg = RunConfig("qkd", p)
    stats = qkd.run_session(p["pulses"], p["mu"], eta=p["eta"], M=p["M"], seed=p["seed"],
                            basis_rule=p["basis_rule"])
    checks = {"zero_qber": {"passed": stats.errors == 0}}
    _emit(_format_report(_report(cfg, stats.to_dict(), checks), p["format"]), p["out"])
    return EXIT_OK


def cmd_validate(p: dict) -> int:
    cfg = RunConfig("validate", p)
    checks = validation.run_profile(p["profile"])
    ok = all(c.passed for c in checks)
    if p["format"] == "json":
        report = _report(cfg, {"passed": ok, "n_checks": len(checks)},
                         {c.name: c.to_dict() for c in checks})
        _emit(json.dumps(report, indent=2), p["out"])
    else:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name:34s} {c.detail}  ({c.seconds:.2f}s)"
                 for c in checks]
        lines.append(f"{'PASSED' if ok else 'FAILED'}: {sum(c.passed for c in checks)}/{len(checks)} checks")
        _emit("\n".join(lines), p["out"])
    return EXIT_OK if ok else EXIT_VALIDATION


COMMANDS = {"curves": cmd_curves, "simulate": cmd_simulate, "qkd": cmd_qkd, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="coherent-usd", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(s, formats, default_format):
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--format", choices=formats, default=default_format)
        s.add_argument("--out", default="-", help="output path, '-' for stdout")
        s.add_argument("--save-config", default=None, help="write the run configuration here")

    s = sub.add_parser("curves", help="tabulate success probabilities against mu")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--mu-min", type=float, default=0.0)
    s.add_argument("--mu-max", type=float, default=3.0)
    s.add_argument("--points", type=int, default=61)
    s.add_argument("--eta", type=float, default=1.0)
    s.add_argument("--M", type=int, default=1000)
    s.add_argument("--trials", type=int, default=0, help="Monte Carlo trials per point (0: analytic only)")
    s.add_argument("--schemes", nargs="*", default=["simple", "feedback"], choices=["simple", "feedback"])
    common(s, ["csv", "json"], "csv")

    s = sub.add_parser("simulate", help="estimate one receiver's success rate")
    s.add_argument("--scheme", choices=[x.value for x in Scheme], required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--eta", type=float, default=1.0)
    s.add_argument("--M", type=int, default=1000)
    s.add_argument("--trials", type=int, default=100_000)
    common(s, ["json", "text"], "json")

    s = sub.add_parser("qkd", help="BB84 session with the four-step receiver")
    s.add_argument("--pulses", type=int, default=100_000)
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--eta", type=float, default=1.0)
    s.add_argument("--M", type=int, default=1000)
    s.add_argument("--basis-rule", choices=["random", "fixed"], default="random")
    common(s, ["json", "text"], "json")

    s = sub.add_parser("validate", help="run the oracle and invariant checks")
    s.add_argument("--profile", choices=["quick", "full"], default="quick")
    s.add_argument("--format", choices=["text", "json"], default="text")
    s.add_argument("--out", default="-")
    s.add_argument("--save-config", default=None)

    s = sub.add_parser("replay", help="re-run a saved configuration")
    s.add_argument("config")
    return ap


_NON_PARAMS = {"command", "save_config"}


def run_config(cfg: RunConfig) -> int:
    if cfg.command not in COMMANDS:
        raise UsageError(f"unknown command {cfg.command!r} in config")
    return COMMANDS[cfg.command](dict(cfg.params))


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "replay":
            with open(args.config, encoding="utf-8") as fh:
                cfg = RunConfig.from_json(fh.read())
            return run_config(cfg)
        params = {k: v for k, v in vars(args).items() if k not in _NON_PARAMS}
        if "seed" in params and params["seed"] is None:
            params["seed"] = _default_seed()
        cfg = RunConfig(args.command, params)
        if args.save_config:
            with open(args.save_config, "w", encoding="utf-8") as fh:
                fh.write(cfg.to_json() + "\n")
        return run_config(cfg)
    except UsageError as exc:
        print(f"coherent-usd: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"coherent-usd: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"coherent-usd: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
