"""Byzantine strategy scripts and the adversary description.

A Byzantine processor runs the honest engine; its strategy sits between the
engine and the network and rewrites what actually leaves the processor.
Strategies are stateful and bound to one processor per run.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from . import wire
from .errors import ConfigError


@dataclass
class StrategyContext:
    me: int
    n: int
    t: int
    rounds: int
    rng: random.Random
    own_input: str  # protocol-encoded honest input
    encode_input: Callable[[Any], str]


class Strategy:
    name = "honest"

    def bind(self, ctx: StrategyContext) -> "Strategy":
        self.ctx = ctx
        return self

    def outgoing(self, dst: int, payload: str) -> list[tuple[int, str]]:
        return [(dst, payload)]

    def describe(self) -> dict:
        return {"name": self.name}


class Silent(Strategy):
    name = "silent"

    def outgoing(self, dst, payload):
        return []


class CrashAfter(Strategy):
    """Behaves honestly for ``k`` envelopes, then stops sending forever.

    With ``k=None`` the crash point is drawn from the run's seed.
    """

    name = "crash-after"

    def __init__(self, k: Optional[int] = None):
        self.k = k
        self.sent = 0

    def bind(self, ctx):
        super().bind(ctx)
        if self.k is None:
            self.k = ctx.rng.randrange(3 * ctx.n * ctx.n)
        return self

    def outgoing(self, dst, payload):
        if self.sent >= self.k:
            return []
        self.sent += 1
        return [(dst, payload)]

    def describe(self):
        return {"name": self.name, "k": self.k}


class Equivocator(Strategy):
    """Sends conflicting variants to the two halves of the processor set.

    Its own round-1 init goes out with the honest input to ``honest_to``
    (default: ids ``<= n // 2``) and with ``alt_input`` to the rest; every m1/m2 echo and common-core set it
    emits is likewise split.  Its own later-round inits stay honest.
    """

    name = "equivocator"

    def __init__(self, alt_input: Any = None, honest_to: Optional[list] = None):
        self.alt_input = alt_input
        self.honest_to = honest_to

    def bind(self, ctx):
        super().bind(ctx)
        self._alt = ctx.encode_input(self.alt_input)
        honest = self.honest_to if self.honest_to is not None else range(1, ctx.n // 2 + 1)
        self._honest = frozenset(honest)
        return self

    def _variant(self, msg: wire.WireMessage):
        if msg.r == 1:
            return self._alt if msg.v != self._alt else self.ctx.own_input
        flipped = set(msg.v) ^ {self.ctx.n}
        return tuple(sorted(flipped or {1}))

    def outgoing(self, dst, payload):
        if dst in self._honest:
            return [(dst, payload)]
        msg = wire.decode(payload, self.ctx.n)
        if msg is None:
            return [(dst, payload)]
        if msg.kind == wire.CC:
            return [(dst, wire.core(msg.r, msg.step, range(1, self.ctx.n + 1)))]
        if msg.kind == wire.INIT:
            if msg.r == 1:
                return [(dst, wire.cosend(wire.INIT, 1, msg.s, self._alt))]
            return [(dst, payload)]
        return [(dst, wire.cosend(msg.kind, msg.r, msg.s, self._variant(msg)))]

    def describe(self):
        out = {"name": self.name, "alt_input": self.alt_input}
        if self.honest_to is not None:
            out["honest_to"] = sorted(self.honest_to)
        return out


class FakeAcceptSet(Strategy):
    """Claims to have heard from a sender that never sent.

    The processor withholds its own co_send init for ``withhold_round`` and
    then, in the next round, claims every processor (itself included) as a
    round-``withhold_round`` sender.  Correct processors can never satisfy the
    causal wait, so its replica stays blocked everywhere.
    """

    name = "fake-accept-set"

    def __init__(self, withhold_round: int = 2):
        if withhold_round < 1:
            raise ConfigError("withhold_round must be >= 1")
        self.withhold_round = withhold_round

    def outgoing(self, dst, payload):
        msg = wire.decode(payload, self.ctx.n)
        if msg is None or msg.kind != wire.INIT or msg.s != self.ctx.me:
            return [(dst, payload)]
        if msg.r == self.withhold_round:
            return []
        if msg.r == self.withhold_round + 1:
            return [(dst, wire.cosend(wire.INIT, msg.r, msg.s, range(1, self.ctx.n + 1)))]
        return [(dst, payload)]

    def describe(self):
        return {"name": self.name, "withhold_round": self.withhold_round}


class Custom(Strategy):
    """Escape hatch: ``fn(ctx, dst, payload) -> [(dst, payload), ...]``."""

    name = "custom"

    def __init__(self, fn: Callable[[StrategyContext, int, str], list], label: str = "custom"):
        self.fn = fn
        self.label = label

    def outgoing(self, dst, payload):
        return list(self.fn(self.ctx, dst, payload))

    def describe(self):
        return {"name": self.name, "label": self.label}


STRATEGIES = {
    "silent": Silent,
    "crash-after": CrashAfter,
    "equivocator": Equivocator,
    "fake-accept-set": FakeAcceptSet,
}


def make_strategy(desc: "Mapping[str, Any] | str | Strategy") -> Strategy:
    if isinstance(desc, Strategy):
        return desc
    if isinstance(desc, str):
        desc = {"name": desc}
    desc = dict(desc)
    name = desc.pop("name", None)
    if name not in STRATEGIES:
        raise ConfigError(f"unknown strategy {name!r}; choose from {sorted(STRATEGIES)}")
    try:
        return STRATEGIES[name](**desc)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for strategy {name!r}: {exc}") from exc


@dataclass
class AdversarySpec:
    """Which processors are Byzantine, how they behave, and scheduler bias."""

    strategies: dict[int, Strategy] = field(default_factory=dict)
    bias: Optional[Callable] = None

    @property
    def byzantine(self) -> frozenset:
        return frozenset(self.strategies)

    def validate(self, n: int, t: int) -> None:
        if len(self.strategies) > t:
            raise ConfigError(f"{len(self.strategies)} Byzantine processors exceed t={t}")
        for p in self.strategies:
            if not 1 <= p <= n:
                raise ConfigError(f"Byzantine id {p} outside 1..{n}")

    def describe(self) -> dict:
        return {str(p): s.describe() for p, s in sorted(self.strategies.items())}


def strategy_seed(seed: int, p: int) -> int:
    return (seed * 1_000_003 + p) & 0xFFFFFFFFFFFFFFFF
