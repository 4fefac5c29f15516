"""Causally ordered reliable broadcast (co_send).

One :class:`CoSendInstance` per (round, sender) runs the two-phase echo
protocol: a direct init from the sender triggers this processor's single m1;
``n - t`` matching m1 echoes or ``t + 1`` matching m2 echoes trigger its
single m2; ``2t + 1`` matching m2 echoes make the value a candidate.  A
round-``r > 1`` candidate is a set of ids and is accepted only once every
claimed ``(r - 1, q)`` has been processed locally.

The layer never touches the network: every call returns the payloads to
broadcast and the accept events produced, and the caller applies them.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import wire
from .errors import DuplicateInstance, PreconditionError
from .wire import Value


@dataclass(frozen=True)
class AcceptEvent:
    r: int
    s: int
    v: Value


@dataclass
class Effects:
    broadcasts: list = field(default_factory=list)
    accepts: list = field(default_factory=list)

    def __iadd__(self, other: "Effects") -> "Effects":
        self.broadcasts.extend(other.broadcasts)
        self.accepts.extend(other.accepts)
        return self


class CoSendInstance:
    __slots__ = (
        "r", "s", "got_init", "m1_sent", "m2_sent", "m1", "m2",
        "m1_from", "m2_from", "candidate", "accepted", "missing", "rejected",
    )

    def __init__(self, r: int, s: int):
        self.r = r
        self.s = s
        self.got_init = False
        self.m1_sent: Optional[Value] = None
        self.m2_sent: Optional[Value] = None
        self.m1: dict = {}  # value -> set of echoing ids
        self.m2: dict = {}
        self.m1_from: set = set()
        self.m2_from: set = set()
        self.candidate: Optional[Value] = None
        self.accepted: Optional[Value] = None
        self.missing: frozenset = frozenset()
        self.rejected: Optional[str] = None

    @property
    def key(self) -> tuple:
        return (self.r, self.s)

    @property
    def waiting(self) -> bool:
        return self.candidate is not None and self.accepted is None and self.rejected is None

    def __repr__(self) -> str:
        return f"CoSendInstance(r={self.r}, s={self.s}, accepted={self.accepted!r})"


Validator = Callable[[int, int, Value], Optional[str]]


def _accept_any(r, s, v):
    return None


class CoSendLayer:
    """All co_send instances seen by processor ``me``.

    ``processed`` is the live set of processed ``(round, sender)`` pairs (the
    engine's M-bar).  ``validate(r, s, v)`` returns a rejection reason or None;
    it must be a pure function of its arguments so that every correct
    processor rejects the same candidates.
    """

    def __init__(
        self,
        me: int,
        n: int,
        t: int,
        max_round: int,
        processed: Optional[set] = None,
        validate: Validator = _accept_any,
    ):
        self.me = me
        self.n = n
        self.t = t
        self.max_round = max_round
        self.processed = processed if processed is not None else set()
        self.validate = validate
        self.instances: dict[tuple, CoSendInstance] = {}
        self.waiting: dict[tuple, CoSendInstance] = {}
        self.diagnostics: Counter = Counter()
        self._own: set = set()

    def instance(self, r: int, s: int) -> CoSendInstance:
        inst = self.instances.get((r, s))
        if inst is None:
            inst = self.instances[(r, s)] = CoSendInstance(r, s)
        return inst

    def accepted(self, r: int, s: int) -> Optional[Value]:
        inst = self.instances.get((r, s))
        return None if inst is None else inst.accepted

    def co_send_init(self, r: int, v: Value) -> Effects:
        """Start this processor's own instance for round ``r`` with value ``v``."""
        if (r, self.me) in self._own:
            raise DuplicateInstance(f"co_send({r}, p{self.me}) already invoked")
        if not 1 <= r <= self.max_round:
            raise PreconditionError(f"round {r} outside 1..{self.max_round}")
        self._own.add((r, self.me))
        inst = self.instance(r, self.me)
        out = Effects(broadcasts=[wire.cosend(wire.INIT, r, self.me, v)])
        self._candidate(inst, v, out)
        return out

    def on_transport(self, src: int, msg: wire.WireMessage) -> Effects:
        out = Effects()
        if not 1 <= msg.r <= self.max_round:
            self.diagnostics["round-out-of-range"] += 1
            return out
        inst = self.instance(msg.r, msg.s)
        v = msg.v
        kind = msg.kind
        if kind == wire.INIT:
            if src != msg.s:
                self.diagnostics["init-not-from-sender"] += 1
            elif inst.got_init:
                self.diagnostics["duplicate-init"] += 1
            else:
                inst.got_init = True
                if inst.m1_sent is None:
                    inst.m1_sent = v
                    out.broadcasts.append(wire.cosend(wire.M1, msg.r, msg.s, v))
            return out
        if kind == wire.M1:
            if src in inst.m1_from:
                self.diagnostics["duplicate-m1"] += 1
                return out
            inst.m1_from.add(src)
            echoes = inst.m1.setdefault(v, set())
        else:
            if src in inst.m2_from:
                self.diagnostics["duplicate-m2"] += 1
                return out
            inst.m2_from.add(src)
            echoes = inst.m2.setdefault(v, set())
        echoes.add(src)

        if inst.m2_sent is None:
            if len(inst.m1.get(v, ())) >= self.n - self.t or len(inst.m2.get(v, ())) >= self.t + 1:
                inst.m2_sent = v
                out.broadcasts.append(wire.cosend(wire.M2, msg.r, msg.s, v))
        if inst.candidate is None and len(inst.m2.get(v, ())) >= 2 * self.t + 1:
            if msg.s == self.me and (msg.r, self.me) in self._own:
                inst.candidate = v  # already self-accepted at init
                if v != inst.accepted:
                    self.diagnostics["own-value-overridden"] += 1
            else:
                self._candidate(inst, v, out)
        return out

    def _candidate(self, inst: CoSendInstance, v: Value, out: Effects) -> None:
        inst.candidate = v
        reason = self.validate(inst.r, inst.s, v)
        if reason is not None:
            inst.rejected = reason
            self.diagnostics[f"rejected:{reason}"] += 1
            return
        if inst.r > 1:
            processed = self.processed
            prev = inst.r - 1
            missing = frozenset(q for q in v if (prev, q) not in processed)
            if missing:
                inst.missing = missing
                self.waiting[inst.key] = inst
                return
        inst.accepted = v
        out.accepts.append(AcceptEvent(inst.r, inst.s, v))

    def resolve_causal_waits(self) -> list[AcceptEvent]:
        """Accept every waiting instance whose causal predecessors are now processed."""
        if not self.waiting:
            return []
        events = []
        processed = self.processed
        for key in sorted(self.waiting):
            inst = self.waiting[key]
            prev = inst.r - 1
            inst.missing = frozenset(q for q in inst.missing if (prev, q) not in processed)
            if not inst.missing:
                del self.waiting[key]
                inst.accepted = inst.candidate
                events.append(AcceptEvent(inst.r, inst.s, inst.candidate))
        return events

    def blocked(self) -> list[CoSendInstance]:
        return [self.waiting[k] for k in sorted(self.waiting)]
