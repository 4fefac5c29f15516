"""Seed-driven asynchronous network with authenticated point-to-point channels.

Delivery order is chosen by a seeded RNG over the whole pending pool (no
per-channel FIFO).  An envelope between two correct processors that has
waited ``fairness_bound`` picks is delivered before anything else, oldest
first.  Byzantine sources pass every outgoing envelope through their
strategy, which may drop, duplicate or rewrite payloads; the ``src`` stamp is
always set here and cannot be forged.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

from .trace import Trace


def default_fairness_bound(n: int) -> int:
    return 64 * n * n


class Envelope:
    __slots__ = ("src", "dst", "payload", "seq", "born", "slot", "fair", "done")

    def __init__(self, src: int, dst: int, payload: str, seq: int, born: int, fair: bool):
        self.src = src
        self.dst = dst
        self.payload = payload
        self.seq = seq
        self.born = born
        self.fair = fair
        self.slot = -1
        self.done = False

    def __repr__(self) -> str:
        return f"Envelope(#{self.seq} p{self.src}->p{self.dst} {self.payload})"


@dataclass(frozen=True)
class Schedule:
    seed: int
    fairness_bound: int

    def __post_init__(self):
        if self.fairness_bound < 1:
            raise ValueError("fairness bound must be >= 1")


class Network:
    def __init__(
        self,
        n: int,
        schedule: Schedule,
        byzantine: Optional[Mapping[int, object]] = None,
        bias: Optional[Callable[[Envelope], float]] = None,
        trace: Optional[Trace] = None,
    ):
        self.n = n
        self.schedule = schedule
        self.byzantine = dict(byzantine or {})
        self.bias = bias
        self.trace = trace if trace is not None else Trace()
        self._rng = random.Random(schedule.seed)
        self._pool: list[Envelope] = []
        self._fifo: deque[Envelope] = deque()  # correct-to-correct, submission order
        self.seq = 0
        self.picks = 0
        self.max_fair_wait = 0

    @property
    def pending(self) -> int:
        return len(self._pool)

    def submit(self, src: int, dst: int, payload: str) -> None:
        strategy = self.byzantine.get(src)
        if strategy is None:
            self._enqueue(src, dst, payload, dst not in self.byzantine)
            return
        for d, p in strategy.outgoing(dst, payload):
            if 1 <= d <= self.n:
                self._enqueue(src, d, p, False)

    def _enqueue(self, src: int, dst: int, payload: str, fair: bool) -> None:
        self.seq += 1
        env = Envelope(src, dst, payload, self.seq, self.picks, fair)
        env.slot = len(self._pool)
        self._pool.append(env)
        if fair:
            self._fifo.append(env)
        self.trace.append({"ev": "submit", "seq": env.seq, "src": src, "dst": dst, "msg": payload})

    def _overdue(self) -> Optional[Envelope]:
        fifo = self._fifo
        while fifo and fifo[0].done:
            fifo.popleft()
        if fifo and self.picks - fifo[0].born >= self.schedule.fairness_bound:
            return fifo[0]
        return None

    def deliver_next(self) -> Optional[Envelope]:
        """Remove and return the next envelope, or None when the pool is empty."""
        pool = self._pool
        if not pool:
            return None
        env = self._overdue()
        forced = env is not None
        if env is None:
            if self.bias is None:
                env = pool[self._rng.randrange(len(pool))]
            else:
                env = self._rng.choices(pool, weights=[self.bias(e) for e in pool])[0]
        last = pool.pop()
        if last is not env:
            last.slot = env.slot
            pool[env.slot] = last
        env.done = True
        if env.fair:
            self.max_fair_wait = max(self.max_fair_wait, self.picks - env.born)
        self.picks += 1
        event = {"ev": "deliver", "seq": env.seq, "src": env.src, "dst": env.dst, "pick": self.picks}
        if forced:
            event["forced"] = True
        self.trace.append(event)
        return env


class SlowSenders:
    """Scheduler bias: envelopes from ``senders`` are ``1/slowdown`` as likely to be picked."""

    def __init__(self, senders, slowdown: float = 20.0):
        self.senders = frozenset(senders)
        self.weight = 1.0 / slowdown

    def __call__(self, env: Envelope) -> float:
        return self.weight if env.src in self.senders else 1.0
