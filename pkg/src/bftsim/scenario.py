"""Scenario configuration, single runs and seed batches.

A scenario is one JSON object (see :class:`ScenarioConfig`); every field has
a default, printable with ``bftsim dump-config``.  Runs map to stable exit
codes:

====  =====================================================
0     run quiescent, verdict pass, no property violations
2     configuration error
3     equivalence verdict failed or a property was violated
4     run did not reach quiescence (or a correct processor had no output)
5     run aborted (protocol panic or coin provider failure)
====  =====================================================
"""

from __future__ import annotations

import dataclasses
import json
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from . import checks
from .adversary import AdversarySpec, make_strategy
from .coin import make_provider
from .engine import Simulation
from .errors import ConfigError, NonQuiescent, RunAborted
from .model import Mode, SystemConfig, validate_config
from .network import SlowSenders
from .protocols import EQUIVOCATION_INPUT, build_spec
from .reference import check_equivalence, corrupt_trace
from .trace import Trace

EXIT_OK, EXIT_CONFIG, EXIT_VERDICT, EXIT_NONQUIESCENT, EXIT_ABORTED = 0, 2, 3, 4, 5
STATUS = {
    EXIT_OK: "pass",
    EXIT_CONFIG: "config-error",
    EXIT_VERDICT: "verdict-fail",
    EXIT_NONQUIESCENT: "non-quiescent",
    EXIT_ABORTED: "aborted",
}


@dataclass
class ScenarioConfig:
    name: str = "custom"
    n: int = 4
    t: int = 1
    mode: str = "MOBtt"
    protocol: str = "flooding"
    params: dict = field(default_factory=dict)
    inputs: Optional[list] = None  # input of p1..pn; None picks a protocol default
    adversary: dict = field(default_factory=dict)  # "id" -> strategy name or {"name": ..., ...}
    seed: int = 0
    seeds: Optional[list] = None  # [start, stop) used by batch runs
    fairness_bound: Optional[int] = None  # None means 64 n^2
    max_picks: Optional[int] = None
    coin: str = "ideal-dealer"
    slow_senders: list = field(default_factory=list)  # scheduler bias against these senders
    trace: Optional[str] = None  # trace output path; "{seed}" is substituted

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown scenario keys {unknown}")
        cfg = cls(**data)
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path: "str | Path") -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ScenarioConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.check()
        return cfg

    # -- validation and construction --------------------------------------------------

    def check(self) -> None:
        for key in ("n", "t", "seed"):
            if type(getattr(self, key)) is not int:
                raise ConfigError(f"{key} must be an integer")
        try:
            mode = Mode.parse(self.mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        validate_config(self.system(), mode)
        byz = self.byzantine_ids()
        if len(byz) > self.t:
            raise ConfigError(f"{len(byz)} Byzantine processors exceed t={self.t}")
        if self.inputs is not None and len(self.inputs) != self.n:
            raise ConfigError(f"inputs lists {len(self.inputs)} values for n={self.n}")
        if self.seeds is not None and (len(self.seeds) != 2 or self.seeds[0] > self.seeds[1]):
            raise ConfigError("seeds must be [start, stop)")
        build_spec(self.protocol, self.params, self.system())

    def system(self) -> SystemConfig:
        return SystemConfig(self.n, self.t)

    def byzantine_ids(self) -> list[int]:
        try:
            ids = sorted(int(p) for p in self.adversary)
        except ValueError as exc:
            raise ConfigError(f"adversary keys must be processor ids: {exc}") from exc
        for p in ids:
            if not 1 <= p <= self.n:
                raise ConfigError(f"Byzantine id {p} outside 1..{self.n}")
        return ids

    def input_values(self) -> dict[int, Any]:
        if self.inputs is not None:
            return {i: v for i, v in enumerate(self.inputs, start=1)}
        return {i: default_input(self.protocol, i, self.n) for i in range(1, self.n + 1)}

    def build(self, seed: Optional[int] = None) -> Simulation:
        seed = self.seed if seed is None else seed
        cfg = self.system()
        spec = build_spec(self.protocol, self.params, cfg)
        inputs = self.input_values()
        strategies = {}
        for key, desc in self.adversary.items():
            p = int(key)
            desc = {"name": desc} if isinstance(desc, str) else dict(desc)
            if desc.get("name") == "equivocator" and "alt_input" not in desc:
                desc["alt_input"] = equivocation_input(self.protocol, inputs[p])
            strategies[p] = make_strategy(desc)
        bias = SlowSenders(self.slow_senders) if self.slow_senders else None
        coins = make_provider(self.coin, seed) if spec.uses_coin else None
        return Simulation(
            cfg, spec, inputs, self.mode, AdversarySpec(strategies, bias), seed,
            self.fairness_bound, coins, self.max_picks, meta={"scenario": self.name},
        )


def default_input(protocol: str, i: int, n: int) -> Any:
    if protocol == "approx-agreement":
        return 0.0 if i <= n // 2 else 1.0
    if protocol == "ben-or":
        return i % 2
    return i


def equivocation_input(protocol: str, own: Any) -> Any:
    alt = EQUIVOCATION_INPUT.get(protocol)
    if protocol == "ben-or":
        return 1 - own
    return alt if alt is not None else own


# -- bundled scenarios ---------------------------------------------------------------

_FLOOD = {"protocol": "flooding", "params": {"rounds": 2}}

SCENARIOS: dict[str, dict] = {
    "fault-free-n4": {**_FLOOD, "n": 4, "t": 1},
    "fault-free-n4-maobt": {**_FLOOD, "n": 4, "t": 1, "mode": "MAOBt"},
    "silent-n4": {**_FLOOD, "n": 4, "t": 1, "adversary": {"4": "silent"}},
    "crash-n4": {**_FLOOD, "n": 4, "t": 1, "adversary": {"4": "crash-after"}},
    "equivocator-n4": {**_FLOOD, "n": 4, "t": 1, "adversary": {"4": "equivocator"}},
    "fake-accept-set-n4": {**_FLOOD, "n": 4, "t": 1, "adversary": {"4": "fake-accept-set"}},
    "equivocator-n7": {**_FLOOD, "n": 7, "t": 2, "adversary": {"6": "equivocator", "7": "equivocator"}},
    "approx-n4": {
        "protocol": "approx-agreement", "params": {"epsilon": 0.01, "rounds": 10},
        "n": 4, "t": 1, "inputs": [0.0, 0.0, 1.0, 1.0], "adversary": {"4": "equivocator"},
    },
    "ben-or-n5": {
        "protocol": "ben-or", "n": 5, "t": 1, "mode": "randomized",
        "inputs": [0, 1, 0, 1, 1], "adversary": {"5": "equivocator"},
    },
}


def bundled(name: str) -> ScenarioConfig:
    try:
        data = SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; bundled: {sorted(SCENARIOS)}") from None
    return ScenarioConfig.from_dict({"name": name, **json.loads(json.dumps(data))})


def resolve(target: Optional[str]) -> ScenarioConfig:
    """A bundled scenario name, a JSON file path, or (None) the defaults."""
    if target is None:
        return ScenarioConfig()
    if target in SCENARIOS:
        return bundled(target)
    if Path(target).is_file():
        return ScenarioConfig.load(target)
    raise ConfigError(f"{target!r} is neither a bundled scenario nor a file")


# -- running -------------------------------------------------------------------------


@dataclass
class ScenarioResult:
    exit_code: int
    summary: dict
    trace: Optional[Trace] = None

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK


def _trace_path(cfg: ScenarioConfig, seed: int, override: Optional[str]) -> Optional[str]:
    pattern = override or cfg.trace
    return pattern.replace("{seed}", str(seed)) if pattern else None


def evaluate(trace: Trace) -> tuple[int, dict]:
    """Equivalence verdict plus property checks for a finished trace."""
    verdict = check_equivalence(trace)
    props = checks.run_all(trace)
    violations = {k: len(v) for k, v in props.items()}
    details = {k: v[:5] for k, v in props.items() if v}
    ok = verdict.ok and not any(violations.values())
    report = {"verdict": {"ok": verdict.ok, "mode": verdict.mode, "reason": verdict.reason,
                          "compared_states": verdict.compared},
              "violations": violations}
    if verdict.divergence:
        report["verdict"]["divergence"] = verdict.divergence
    if details:
        report["violation_details"] = details
    return (EXIT_OK if ok else EXIT_VERDICT), report


def run_scenario(
    cfg: ScenarioConfig,
    seed: Optional[int] = None,
    trace_path: Optional[str] = None,
    corrupt: bool = False,
    keep_trace: bool = True,
) -> ScenarioResult:
    """Run one seed of ``cfg``, write its trace if asked, check it, summarize it.

    ``corrupt`` flips one replica digest before checking (negative control).
    """
    seed = cfg.seed if seed is None else seed
    summary: dict = {"scenario": cfg.name, "seed": seed, "n": cfg.n, "t": cfg.t,
                     "mode": Mode.parse(cfg.mode).value, "protocol": cfg.protocol}
    try:
        sim = cfg.build(seed)
    except ConfigError as exc:
        summary.update(exit_code=EXIT_CONFIG, status=STATUS[EXIT_CONFIG], error=str(exc))
        return ScenarioResult(EXIT_CONFIG, summary)
    code = EXIT_OK
    try:
        run = sim.run()
        summary["outputs"] = {str(p): v for p, v in sorted(run.outputs.items())}
    except NonQuiescent as exc:
        code, summary["error"] = EXIT_NONQUIESCENT, str(exc)
    except RunAborted as exc:
        code, summary["error"] = EXIT_ABORTED, str(exc)
    trace = sim.trace
    if corrupt:
        trace = corrupt_trace(trace, seed)
        summary["negative_control"] = True
    path = _trace_path(cfg, seed, trace_path)
    if path:
        trace.write(path)
        summary["trace_path"] = path
    if code == EXIT_OK:
        code, report = evaluate(trace)
        summary.update(report)
    footer = trace.footer or {}
    summary["picks"] = footer.get("picks")
    summary["blocked"] = footer.get("blocked")
    summary["events"] = dict(sorted(Counter(e["ev"] for e in trace.events).items()))
    summary["trace_digest"] = trace.digest()
    summary["exit_code"] = code
    summary["status"] = STATUS[code]
    return ScenarioResult(code, summary, trace if keep_trace else None)


def _batch_one(args) -> dict:
    cfg_dict, seed, corrupt, trace_path = args
    cfg = ScenarioConfig.from_dict(cfg_dict)
    return run_scenario(cfg, seed, trace_path, corrupt=corrupt, keep_trace=False).summary


def run_batch(
    cfg: ScenarioConfig,
    seeds: Optional[Iterable[int]] = None,
    workers: int = 1,
    negative_control: bool = False,
    trace_path: Optional[str] = None,
) -> ScenarioResult:
    """Run every seed independently and aggregate verdicts and violation counts.

    With ``negative_control`` one extra run (a copy of the first seed with a
    flipped digest) joins the batch; the aggregate must then report failure.
    """
    if seeds is None:
        seeds = range(*cfg.seeds) if cfg.seeds else range(cfg.seed, cfg.seed + 1)
    seeds = list(seeds)
    jobs = [(cfg.to_dict(), s, False, trace_path) for s in seeds]
    if negative_control and seeds:
        jobs.append((cfg.to_dict(), seeds[0], True, None))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            summaries = list(pool.map(_batch_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        summaries = [_batch_one(job) for job in jobs]

    status = Counter(s["status"] for s in summaries)
    violations: Counter = Counter()
    for s in summaries:
        violations.update(s.get("violations", {}))
    failures = [
        {k: s.get(k) for k in ("seed", "status", "error", "verdict", "negative_control") if k in s}
        for s in summaries if s["exit_code"] != EXIT_OK
    ]
    code = max((s["exit_code"] for s in summaries), default=EXIT_OK)
    report = {
        "scenario": cfg.name,
        "runs": len(summaries),
        "passed": status.get("pass", 0),
        "failed": len(summaries) - status.get("pass", 0),
        "status": dict(sorted(status.items())),
        "violations": dict(sorted(violations.items())),
        "failures": failures[:20],
        "exit_code": code,
    }
    return ScenarioResult(code, report)
