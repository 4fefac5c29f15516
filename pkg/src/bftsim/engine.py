"""Replicated-state-machine simulation of a round-based protocol.

Every processor keeps a replica ``SM_i`` of every processor's protocol state.
It co_sends its input in round 1 and, for every later round, only the set of
processors whose previous-round messages it accepted.  Replicas advance when
such a set is accepted: the messages ``p_i`` must have received are read off
the senders' replicas, never off the wire.

Modes:

* ``MAOBt``      broadcast ``accept[r]`` as soon as it has n - t members
                 including the processor itself;
* ``MOBtt``      first converge ``accept[r]`` through the common-core exchange;
* ``randomized`` as MOBtt, and every replica step also consumes a shared coin.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Optional

from . import wire
from .adversary import AdversarySpec, StrategyContext, strategy_seed
from .coin import CoinProvider, sim_coin
from .common_core import CommonCore
from .cosend import AcceptEvent, CoSendLayer, Effects
from .errors import (
    ConfigError,
    MissingSnapshot,
    NonQuiescent,
    ProtocolPanic,
    ProviderUnavailable,
    RunAborted,
)
from .model import (
    Mode,
    ProtocolSpec,
    Step,
    SystemConfig,
    start_protocol,
    state_digest,
    step_protocol,
    validate_config,
)
from .network import Network, Schedule, default_fairness_bound
from .trace import SCHEMA_VERSION, Trace

COLLECT, CORE = "collect", "core"


class Processor:
    """The simulation protocol run by one processor ``me``."""

    def __init__(
        self,
        me: int,
        cfg: SystemConfig,
        spec: ProtocolSpec,
        mode: Mode,
        value: Any,
        net: Network,
        trace: Trace,
        coins: Optional[CoinProvider] = None,
    ):
        self.me = me
        self.cfg = cfg
        self.n = cfg.n
        self.quorum = cfg.n - cfg.t
        self.spec = spec
        self.mode = mode
        self.value = value
        self.net = net
        self.emit = trace.append
        self.coins = coins

        self.pending: dict[tuple, Any] = {}  # M: (r, i) -> accepted, unprocessed value
        self.processed: set = set()  # M-bar: processed (r, i)
        self.accept: dict[int, set] = defaultdict(set)
        self.snapshots: dict[tuple, Step] = {}  # (i, r) -> replica snapshot
        self.broadcast_sets: dict[int, tuple] = {}  # r -> pi sent with co_send(r + 1)
        self.round = 1
        self.phase = COLLECT
        self.output: Any = None
        self.halted = False

        self.cosend = CoSendLayer(
            me, cfg.n, cfg.t, spec.final_round, processed=self.processed, validate=self._validate
        )
        self.core = CommonCore(cfg.n, cfg.t)

    # -- transport -------------------------------------------------------------

    def _validate(self, r: int, s: int, v) -> Optional[str]:
        # Pure in (r, s, v): every correct processor rejects the same candidates.
        if r == 1:
            try:
                self.spec.decode_input(v)
            except Exception:
                return "malformed-input"
            return None
        if len(v) < self.quorum:
            return "set-too-small"
        if s not in v:
            return "sender-not-in-set"
        return None

    def _broadcast(self, payload: str) -> None:
        submit = self.net.submit
        me = self.me
        for q in range(1, self.n + 1):
            submit(me, q, payload)

    def _apply(self, effects: Effects) -> None:
        for payload in effects.broadcasts:
            self._broadcast(payload)
        for ev in effects.accepts:
            self._on_accept(ev)

    def _on_accept(self, ev: AcceptEvent) -> None:
        key = (ev.r, ev.s)
        if key in self.pending or key in self.processed:
            raise AssertionError(f"p{self.me}: second accept for {key}")
        self.pending[key] = ev.v
        self.emit({"ev": "accept", "p": self.me, "r": ev.r, "s": ev.s,
                   "v": ev.v if ev.r == 1 else list(ev.v)})

    def _co_send(self, r: int, v) -> None:
        self.emit({"ev": "broadcast", "p": self.me, "r": r, "v": v if r == 1 else list(v)})
        self._apply(self.cosend.co_send_init(r, v))

    def start(self) -> None:
        self._co_send(1, self.spec.encode_input(self.value))
        self._settle()

    def on_envelope(self, src: int, payload: str) -> None:
        msg = wire.decode(payload, self.n)
        if msg is None:
            self.cosend.diagnostics["malformed"] += 1
            return
        if msg.kind == wire.CC:
            if msg.r <= self.spec.rounds:
                self.core.receive(src, msg.r, msg.step, msg.v)
            else:
                self.cosend.diagnostics["round-out-of-range"] += 1
        else:
            self._apply(self.cosend.on_transport(src, msg))
        self._settle()

    # -- background processing -------------------------------------------------

    def _settle(self) -> None:
        while True:
            while self.pending:
                for key in sorted(self.pending):
                    self._process(key[0], key[1], self.pending.pop(key))
                for ev in self.cosend.resolve_causal_waits():
                    self._on_accept(ev)
            if not self._advance():
                return

    def _process(self, r: int, i: int, v) -> None:
        spec = self.spec
        if r == 1:
            step = start_protocol(spec, spec.decode_input(v), i, self.cfg)
            kind = "sm-start"
        else:
            snaps = self.snapshots
            prev = snaps.get((i, r - 1))
            if prev is None:
                raise MissingSnapshot(f"p{self.me}: SM_{i}[{r - 1}] missing while processing round {r}")
            inbox = {}
            for j in v:
                sj = snaps.get((j, r - 1))
                if sj is None:
                    raise MissingSnapshot(f"p{self.me}: SM_{j}[{r - 1}] missing for <{r}, p{i}>")
                out = sj.outbox
                if i in out:
                    inbox[j] = out[i]
            coin = None
            if spec.uses_coin:
                coin = sim_coin(self.coins, r, i)
                self.emit({"ev": "coin", "p": self.me, "r": r, "i": i, "bit": coin})
            step = step_protocol(spec, inbox, prev.state, r, coin)
            kind = "sm-step"
        self.snapshots[(i, r)] = step
        self.processed.add((r, i))
        self.accept[r].add(i)
        self.emit({"ev": kind, "p": self.me, "i": i, "r": r, "digest": state_digest(spec, step)})
        if i == self.me and r == spec.final_round:
            self.halted = True
            self.output = step.output
            self.emit({"ev": "output", "p": self.me, "value": step.output})

    # -- round loop ---------------------------------------------------------------

    def _advance(self) -> bool:
        if self.halted or self.round > self.spec.rounds:
            return False
        r = self.round
        acc = self.accept[r]
        if self.phase == COLLECT:
            if len(acc) < self.quorum or self.me not in acc:
                return False
            if not self.mode.uses_core:
                self._finish_round(r, frozenset(acc))
                return True
            sent = self.core.begin(r, acc)
            self.emit({"ev": "cc-invoke", "p": self.me, "r": r, "set": sorted(sent)})
            self.emit({"ev": "cc-send", "p": self.me, "r": r, "step": 1, "set": sorted(sent)})
            self.phase = CORE
            self._broadcast(wire.core(r, 1, sent))
        step2, result = self.core.poll(r, acc)
        st = self.core.exchanges[r]
        if step2 is not None:
            self.emit({"ev": "cc-wait", "p": self.me, "r": r, "step": 1, "from": st.eligible[1]})
            self.emit({"ev": "cc-send", "p": self.me, "r": r, "step": 2, "set": sorted(step2)})
            self._broadcast(wire.core(r, 2, step2))
        if result is None:
            return step2 is not None
        self.emit({"ev": "cc-wait", "p": self.me, "r": r, "step": 2, "from": st.eligible[2]})
        self.emit({"ev": "cc-return", "p": self.me, "r": r, "set": sorted(result)})
        self._finish_round(r, result)
        return True

    def _finish_round(self, r: int, pi: frozenset) -> None:
        ids = tuple(sorted(pi))
        self.broadcast_sets[r] = ids
        self.round = r + 1
        self.phase = COLLECT
        self.emit({"ev": "round-advance", "p": self.me, "r": r + 1})
        self._co_send(r + 1, ids)


@dataclass
class RunResult:
    trace: Trace
    outputs: dict  # correct processor -> output
    picks: int
    processors: dict = field(repr=False, default_factory=dict)

    @property
    def quiescent(self) -> bool:
        return self.trace.quiescent


class Simulation:
    """One seeded asynchronous run of ``spec`` under ``adversary``."""

    def __init__(
        self,
        cfg: SystemConfig,
        spec: ProtocolSpec,
        inputs: dict,
        mode: "Mode | str" = Mode.MOBTT,
        adversary: Optional[AdversarySpec] = None,
        seed: int = 0,
        fairness_bound: Optional[int] = None,
        coins: Optional[CoinProvider] = None,
        max_picks: Optional[int] = None,
        meta: Optional[dict] = None,
    ):
        self.mode = Mode.parse(mode)
        validate_config(cfg, self.mode)
        adversary = adversary or AdversarySpec()
        adversary.validate(cfg.n, cfg.t)
        if sorted(inputs) != list(cfg.ids):
            raise ConfigError(f"need one input per processor 1..{cfg.n}")
        if spec.uses_coin and coins is None:
            raise ConfigError(f"protocol {spec.name} uses coins but no coin provider is configured")
        if spec.uses_coin and self.mode is not Mode.RANDOMIZED:
            raise ConfigError(f"protocol {spec.name} uses coins; run it in randomized mode")
        self.cfg, self.spec, self.inputs, self.seed = cfg, spec, dict(inputs), seed
        self.adversary = adversary
        self.fairness_bound = fairness_bound or default_fairness_bound(cfg.n)
        self.max_picks = max_picks or 200 * self.fairness_bound * (spec.rounds + 1)
        self.trace = Trace()

        strategies = {}
        for p, strat in sorted(adversary.strategies.items()):
            ctx = StrategyContext(
                me=p, n=cfg.n, t=cfg.t, rounds=spec.rounds,
                rng=random.Random(strategy_seed(seed, p)),
                own_input=spec.encode_input(inputs[p]),
                encode_input=spec.encode_input,
            )
            strategies[p] = strat.bind(ctx)
        self.net = Network(
            cfg.n, Schedule(seed, self.fairness_bound), strategies, adversary.bias, self.trace
        )
        self.trace.append({
            "ev": "run-start",
            "schema": SCHEMA_VERSION,
            "n": cfg.n,
            "t": cfg.t,
            "mode": self.mode.value,
            "protocol": spec.name,
            "params": dict(spec.params),
            "inputs": {str(p): inputs[p] for p in cfg.ids},
            "byzantine": sorted(adversary.byzantine),
            "strategies": adversary.describe(),
            "seed": seed,
            "fairness_bound": self.fairness_bound,
            "coin": getattr(coins, "name", None) if spec.uses_coin else None,
            **({"meta": meta} if meta else {}),
        })
        self.processors = {
            p: Processor(p, cfg, spec, self.mode, inputs[p], self.net, self.trace, coins)
            for p in cfg.ids
        }

    @property
    def correct(self) -> list[int]:
        return [p for p in self.cfg.ids if p not in self.adversary.byzantine]

    def run(self) -> RunResult:
        try:
            for p in self.cfg.ids:
                self.processors[p].start()
            deliver = self.net.deliver_next
            procs = self.processors
            budget = self.max_picks
            while True:
                env = deliver()
                if env is None:
                    break
                procs[env.dst].on_envelope(env.src, env.payload)
                if self.net.picks >= budget and self.net.pending:
                    self._finish(False)
                    raise NonQuiescent(f"scheduler budget of {budget} picks exhausted")
        except (ProtocolPanic, ProviderUnavailable) as exc:
            self._finish(False, aborted=str(exc))
            raise RunAborted(str(exc)) from exc
        self._finish(True)
        missing = [p for p in self.correct if not self.processors[p].halted]
        if missing:
            raise NonQuiescent(f"quiescent but correct processors {missing} produced no output")
        return RunResult(
            self.trace,
            {p: self.processors[p].output for p in self.correct},
            self.net.picks,
            self.processors,
        )

    def _finish(self, quiescent: bool, aborted: Optional[str] = None) -> None:
        diag: dict = {}
        for p in self.cfg.ids:
            for k, v in self.processors[p].cosend.diagnostics.items():
                diag[k] = diag.get(k, 0) + v
        blocked = {
            str(p): [[inst.r, inst.s] for inst in self.processors[p].cosend.blocked()]
            for p in self.correct
        }
        end = {
            "ev": "run-end",
            "quiescent": quiescent,
            "picks": self.net.picks,
            "envelopes": self.net.seq,
            "max_fair_wait": self.net.max_fair_wait,
            "diagnostics": dict(sorted(diag.items())),
            "blocked": blocked,
        }
        if aborted:
            end["aborted"] = aborted
        self.trace.append(end)


def run_simulation(*args, **kwargs) -> RunResult:
    return Simulation(*args, **kwargs).run()


@dataclass
class Outputs:
    outputs: dict  # correct processor -> output
    digests: dict  # (i, r) -> {correct processor: digest}


def extract_outputs(run: "RunResult | Trace") -> Outputs:
    """Per-processor outputs and per-replica digests of a quiescent run."""
    trace = run.trace if isinstance(run, RunResult) else run
    if not len(trace) or not trace.quiescent:
        raise NonQuiescent("run not quiescent")
    correct = set(trace.correct())
    outputs: dict = {}
    digests: dict = {}
    for e in trace.of("output", "sm-start", "sm-step"):
        p = e["p"]
        if p not in correct:
            continue
        if e["ev"] == "output":
            outputs[p] = e["value"]
        else:
            digests.setdefault((e["i"], e["r"]), {})[p] = e["digest"]
    return Outputs(outputs, digests)
