"""Synchronous reference executors and the equivalence oracle.

A :class:`MobRun` describes a lock-step synchronous run: the inputs the
adversary installed (at most ``f`` of them altered) and, per round, which
``(sender, receiver)`` messages it removed.  Model budgets:

* MOBfm -- at most ``f`` altered inputs; each round the removed messages come
  from at most ``m`` senders (MOBtt is ``f = m = t``);
* MAOBt -- at most ``t`` altered inputs; each round no receiver loses more
  than ``t`` incoming messages.

:func:`extract_run` reads such a run out of an asynchronous trace,
:func:`execute_sync` replays it without any of the asynchronous machinery,
and :func:`check_equivalence` compares the replay with what the trace
recorded.  The executor shares nothing with the engine except the protocol
contract in :mod:`bftsim.model`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import ExtractionFailure, InvalidRun, SimError
from .model import (
    Mode,
    ProtocolSpec,
    Step,
    SystemConfig,
    canonical_json,
    start_protocol,
    state_digest,
    step_protocol,
)
from .protocols import build_spec
from .trace import Trace

MOBTT, MAOBT = "MOBtt", "MAOBt"


class _Absent:
    """Input of a processor whose round-1 broadcast was never accepted."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ABSENT"


ABSENT = _Absent()


@dataclass
class MobRun:
    n: int
    t: int
    rounds: int
    original_inputs: dict  # processor -> input the scenario gave it
    altered_inputs: dict  # processor -> installed input, or ABSENT
    drops: dict = field(default_factory=dict)  # round -> frozenset of (sender, receiver)
    coins: dict = field(default_factory=dict)  # (round, processor) -> bit

    @property
    def ids(self) -> range:
        return range(1, self.n + 1)

    def alteration_set(self) -> set:
        return {
            p for p in self.ids
            if self.altered_inputs.get(p, ABSENT) is ABSENT
            or canonical_json(self.altered_inputs[p]) != canonical_json(self.original_inputs[p])
        }

    def dropped_senders(self, r: int) -> set:
        return {s for s, _ in self.drops.get(r, ())}

    def incoming_drops(self, r: int) -> dict:
        counts: dict = {}
        for _, q in self.drops.get(r, ()):
            counts[q] = counts.get(q, 0) + 1
        return counts

    def to_dict(self) -> dict:
        def enc(v):
            return "ABSENT" if v is ABSENT else v
        return {
            "n": self.n,
            "t": self.t,
            "rounds": self.rounds,
            "original_inputs": {str(p): v for p, v in sorted(self.original_inputs.items())},
            "altered_inputs": {str(p): enc(self.altered_inputs.get(p, ABSENT)) for p in self.ids},
            "alterations": sorted(self.alteration_set()),
            "drops": {str(r): sorted(map(list, d)) for r, d in sorted(self.drops.items())},
        }


def validate_run(run: MobRun, model: str = MOBTT, f: Optional[int] = None, m: Optional[int] = None) -> None:
    """Raise :class:`InvalidRun` if ``run`` exceeds the adversary budget of ``model``.

    ``model`` is ``"MOBtt"``, ``"MAOBt"`` or ``"MOBfm"`` (with explicit ``f`` and ``m``).
    """
    if model == MOBTT:
        f = m = run.t
    elif model == MAOBT:
        f = run.t
    elif model == "MOBfm":
        if f is None or m is None:
            raise ValueError("MOBfm needs explicit f and m")
    else:
        raise ValueError(f"unknown model {model!r}")
    altered = run.alteration_set()
    if len(altered) > f:
        raise InvalidRun(f"{len(altered)} altered inputs {sorted(altered)} exceed f={f}")
    for r in sorted(run.drops):
        if not 1 <= r <= run.rounds:
            raise InvalidRun(f"drops listed for round {r} outside 1..{run.rounds}")
        for s, q in run.drops[r]:
            if not (1 <= s <= run.n and 1 <= q <= run.n):
                raise InvalidRun(f"round {r}: drop ({s}, {q}) names an unknown processor")
        if model == MAOBT:
            worst = max(run.incoming_drops(r).items(), key=lambda kv: kv[1], default=(None, 0))
            if worst[1] > run.t:
                raise InvalidRun(f"round {r}: receiver p{worst[0]} loses {worst[1]} > t={run.t} messages")
        else:
            senders = run.dropped_senders(r)
            if len(senders) > m:
                raise InvalidRun(f"round {r}: dropped-sender set {sorted(senders)} exceeds m={m}")


@dataclass
class SyncResult:
    states: dict  # (processor, round) -> Step
    outputs: dict  # processor -> output


def execute_sync(spec: ProtocolSpec, run: MobRun, model: Optional[str] = None) -> SyncResult:
    """Lock-step execution of ``spec`` under ``run``.

    Round ``r`` delivers every round-``r`` message not listed in ``drops[r]``.
    A processor with an ABSENT input takes no steps and sends nothing.  When
    ``model`` is given the run is validated against it first.
    """
    if model is not None:
        validate_run(run, model)
    cfg = SystemConfig(run.n, run.t)
    live = [p for p in run.ids if run.altered_inputs.get(p, ABSENT) is not ABSENT]
    states: dict = {}
    for p in live:
        states[(p, 1)] = start_protocol(spec, run.altered_inputs[p], p, cfg)
    for r in range(1, spec.rounds + 1):
        removed = run.drops.get(r, frozenset())
        for q in live:
            inbox = {}
            for p in live:
                if (p, q) in removed:
                    continue
                sent = states[(p, r)].outbox
                if q in sent:
                    inbox[p] = sent[q]
            coin = run.coins.get((r + 1, q), 0) if spec.uses_coin else None
            states[(q, r + 1)] = step_protocol(spec, inbox, states[(q, r)].state, r + 1, coin)
    final = spec.rounds + 1
    return SyncResult(states, {p: states[(p, final)].output for p in live})


# -- extraction -------------------------------------------------------------------


def _spec_from(trace: Trace) -> ProtocolSpec:
    h = trace.header
    return build_spec(h["protocol"], h.get("params"), SystemConfig(h["n"], h["t"]))


def extract_run(trace: Trace, mode: "str | Mode | None" = None, spec: Optional[ProtocolSpec] = None) -> MobRun:
    """Read the synchronous run an asynchronous trace simulated.

    Inputs are the values accepted through round-1 broadcasts; processor
    ``p_i``'s round-``r`` receive set is the set it broadcast in round
    ``r + 1``, so ``(q, p_i)`` is dropped in round ``r`` exactly when ``q`` is
    missing from it.  Processors whose input nobody accepted get ABSENT; a
    replica that stopped advancing receives everything from then on (its
    later states feed nobody).
    """
    if not trace.quiescent:
        raise ExtractionFailure("trace is not quiescent")
    h = trace.header
    n, t = h["n"], h["t"]
    spec = spec or _spec_from(trace)
    rounds = spec.rounds
    correct = trace.correct()
    correct_set = set(correct)

    accepted: dict = {}  # (r, s) -> value, agreed by all correct processors
    for e in trace.of("accept"):
        if e["p"] not in correct_set:
            continue
        key = (e["r"], e["s"])
        v = e["v"] if e["r"] == 1 else tuple(e["v"])
        if accepted.setdefault(key, v) != v:
            raise ExtractionFailure(f"correct processors accepted different values for {key}")

    originals = {int(p): v for p, v in h["inputs"].items()}
    altered: dict = {}
    for p in range(1, n + 1):
        if (1, p) in accepted:
            try:
                altered[p] = spec.decode_input(accepted[(1, p)])
            except Exception as exc:
                raise ExtractionFailure(f"accepted input of p{p} does not decode: {exc!r}") from exc
        else:
            altered[p] = ABSENT

    drops: dict = {}
    for r in range(1, rounds + 1):
        removed = set()
        for p in range(1, n + 1):
            pi = accepted.get((r + 1, p))
            if pi is None:
                if p in correct_set:
                    raise ExtractionFailure(f"correct p{p} has no accepted round-{r + 1} broadcast")
                continue
            if p in correct_set and len(pi) < n - t:
                raise ExtractionFailure(f"p{p} broadcast {len(pi)} < n - t senders for round {r}")
            removed.update((q, p) for q in range(1, n + 1) if q not in pi)
        drops[r] = frozenset(removed)

    coins: dict = {}
    for e in trace.of("coin"):
        if e["p"] in correct_set:
            coins.setdefault((e["r"], e["i"]), e["bit"])
    return MobRun(n, t, rounds, originals, altered, drops, coins)


# -- equivalence ------------------------------------------------------------------


@dataclass
class Verdict:
    ok: bool
    mode: str
    reason: str = ""
    divergence: Optional[dict] = None
    run: Optional[MobRun] = None
    compared: int = 0

    def to_dict(self) -> dict:
        out = {"ok": self.ok, "mode": self.mode, "reason": self.reason, "compared_states": self.compared}
        if self.divergence:
            out["divergence"] = self.divergence
        if self.run is not None:
            out["run"] = self.run.to_dict()
        return out

    def report(self) -> str:
        if self.ok:
            return f"PASS ({self.mode}): {self.compared} replica states and all outputs reproduced"
        lines = [f"FAIL ({self.mode}): {self.reason}"]
        for k, v in (self.divergence or {}).items():
            lines.append(f"  {k}: {v}")
        return "\n".join(lines)


def model_for(mode: "str | Mode") -> str:
    return MAOBT if Mode.parse(mode) is Mode.MAOBT else MOBTT


def check_equivalence(
    trace: Trace,
    mode: "str | Mode | None" = None,
    spec: Optional[ProtocolSpec] = None,
    verbose: bool = False,
) -> Verdict:
    """Pass iff the trace extracts to a model-valid run whose synchronous
    replay reproduces every correct processor's output and every replica
    digest it recorded."""
    try:
        mode = Mode.parse(mode or trace.header["mode"])
    except (ValueError, KeyError) as exc:
        return Verdict(False, str(mode), f"unreadable trace: {exc}")
    label = mode.value
    try:
        spec = spec or _spec_from(trace)
        run = extract_run(trace, mode, spec)
    except SimError as exc:
        return Verdict(False, label, f"extraction failed: {exc}")
    model = model_for(mode)
    try:
        validate_run(run, model)
    except InvalidRun as exc:
        return Verdict(False, label, f"extracted run is not {model}-valid: {exc}", run=run)
    try:
        replay = execute_sync(spec, run)
    except SimError as exc:
        return Verdict(False, label, f"synchronous replay failed: {exc}", run=run)

    correct = set(trace.correct())
    compared = 0
    digests: dict = {}
    outputs_seen = set()
    for e in trace.events:
        kind = e["ev"]
        if kind in ("sm-start", "sm-step") and e["p"] in correct:
            key = (e["i"], e["r"])
            step = replay.states.get(key)
            if step is None:
                return Verdict(False, label, "replay has no state for a recorded replica step",
                               {"processor": e["p"], "replica": key[0], "round": key[1]}, run, compared)
            if key not in digests:
                digests[key] = state_digest(spec, step)
            compared += 1
            if digests[key] != e["digest"]:
                div = {"processor": e["p"], "replica": key[0], "round": key[1],
                       "recorded": e["digest"], "replayed": digests[key]}
                if verbose:
                    div["replayed_state"] = spec.encode_state(step.state)
                    div["replayed_output"] = step.output
                return Verdict(False, label, "replica digest differs from synchronous replay", div, run, compared)
        elif kind == "output" and e["p"] in correct:
            p = e["p"]
            outputs_seen.add(p)
            want = replay.outputs.get(p)
            if canonical_json(want) != canonical_json(e["value"]):
                return Verdict(False, label, "output differs from synchronous replay",
                               {"processor": p, "recorded": e["value"], "replayed": want}, run, compared)
    missing = sorted(correct - outputs_seen)
    if missing:
        return Verdict(False, label, f"correct processors {missing} recorded no output", run=run, compared=compared)
    return Verdict(True, label, run=run, compared=compared)


def corrupt_trace(trace: Trace, index: int = 0) -> Trace:
    """Copy of ``trace`` with one correct processor's replica digest flipped (negative control)."""
    copy = trace.copy()
    correct = set(copy.correct())
    steps = [e for e in copy.events if e["ev"] in ("sm-start", "sm-step") and e["p"] in correct]
    target = steps[index % len(steps)]
    d = target["digest"]
    target["digest"] = ("0" if d[0] != "0" else "1") + d[1:]
    return copy
