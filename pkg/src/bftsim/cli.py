"""Command-line harness: ``bftsim run | batch | check | dump-config``.

Every command prints one JSON document on stdout and exits with the codes
documented in :mod:`bftsim.scenario`.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from . import checks
from .errors import ConfigError
from .reference import check_equivalence
from .scenario import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VERDICT,
    SCENARIOS,
    ScenarioConfig,
    resolve,
    run_batch,
    run_scenario,
)
from .trace import Trace


def _parse_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def _pairs(items, what: str) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"{what} must look like KEY=VALUE, got {item!r}")
        out[key] = _parse_value(value)
    return out


def _seed_range(text: str) -> list[int]:
    start, sep, stop = text.partition(":")
    try:
        return [int(start), int(stop)] if sep else [0, int(start)]
    except ValueError:
        raise ConfigError(f"seed range must be START:STOP or COUNT, got {text!r}") from None


def _scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", nargs="?", help="bundled scenario name or JSON config file")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--mode", choices=["MAOBt", "MOBtt", "randomized"])
    p.add_argument("--protocol")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="protocol parameter")
    p.add_argument("--inputs", help="JSON list of inputs for p1..pn")
    p.add_argument("--byz", action="append", metavar="ID=STRATEGY",
                   help="make ID Byzantine; STRATEGY is a name or a JSON object")
    p.add_argument("--seed", type=int)
    p.add_argument("--fairness-bound", type=int)
    p.add_argument("--coin")
    p.add_argument("--trace", help="trace output path ({seed} is substituted)")


def build_config(args: argparse.Namespace) -> ScenarioConfig:
    cfg = resolve(args.scenario)
    changes: dict = {}
    for key in ("n", "t", "mode", "protocol", "seed", "fairness_bound", "coin", "trace"):
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    if args.param:
        changes["params"] = {**cfg.params, **_pairs(args.param, "--param")}
    if args.inputs is not None:
        changes["inputs"] = _parse_value(args.inputs)
    if args.byz:
        changes["adversary"] = _pairs(args.byz, "--byz")
    if getattr(args, "seeds", None):
        changes["seeds"] = _seed_range(args.seeds)
    if changes:
        try:
            cfg = cfg.replace(**changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=False, default=str)
    sys.stdout.write("\n")


def cmd_run(args) -> int:
    result = run_scenario(build_config(args))
    _emit(result.summary)
    return result.exit_code


def cmd_batch(args) -> int:
    cfg = build_config(args)
    result = run_batch(cfg, workers=args.workers, negative_control=args.negative_control)
    _emit(result.summary)
    return result.exit_code


def cmd_check(args) -> int:
    try:
        trace = Trace.load(args.trace_file)
        header = trace.header
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read trace {args.trace_file}: {exc}") from exc
    mode = args.mode or header["mode"]
    verdict = check_equivalence(trace, mode, verbose=args.verbose)
    props = checks.run_all(trace) if trace.quiescent else {}
    violations = {k: len(v) for k, v in props.items()}
    ok = verdict.ok and not any(violations.values())
    doc = {"trace": args.trace_file, "trace_digest": trace.digest(), **verdict.to_dict(),
           "violations": violations}
    if not args.verbose:
        doc.pop("run", None)
    doc["exit_code"] = EXIT_OK if ok else EXIT_VERDICT
    _emit(doc)
    if not verdict.ok:
        print(verdict.report(), file=sys.stderr)
    return doc["exit_code"]


def cmd_dump_config(args) -> int:
    if args.list:
        _emit({"scenarios": sorted(SCENARIOS)})
        return EXIT_OK
    _emit(resolve(args.scenario).to_dict())
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bftsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one seeded scenario and check it")
    _scenario_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run a range of seeds and aggregate")
    _scenario_args(p)
    p.add_argument("--seeds", help="START:STOP or COUNT")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--negative-control", action="store_true",
                   help="add one run with a corrupted trace; the batch must then fail")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("check", help="re-verify an existing JSON-lines trace")
    p.add_argument("trace_file")
    p.add_argument("--mode", choices=["MAOBt", "MOBtt", "randomized"])
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("dump-config", help="print a scenario with all defaults filled in")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--list", action="store_true", help="list bundled scenarios")
    p.set_defaults(func=cmd_dump_config)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit({"exit_code": EXIT_CONFIG, "status": "config-error", "error": str(exc)})
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
