"""Two-step gather converging accept sets onto a shared core of n - t ids.

Step 1: send the current ``accept[r]`` to everyone, then wait until ``n - t``
received step-1 sets are subsets of the (still growing) local ``accept[r]``.
Step 2: the same with the then-current set.  Return ``accept[r]``.

Sets that arrive early and are not yet subsets are kept; eligibility is
re-evaluated on every poll because ``accept[r]`` only grows.  A processor's
own set, delivered back to it through the network, counts like any other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


@dataclass
class CoreExchangeState:
    r: int
    step: int = 1
    invoked_with: frozenset = frozenset()
    sent: dict = field(default_factory=dict)  # step -> frozenset sent
    eligible: dict = field(default_factory=dict)  # step -> senders counted when the wait cleared
    result: Optional[frozenset] = None


class CommonCore:
    """Common-core bookkeeping of one processor, across all rounds."""

    def __init__(self, n: int, t: int):
        self.n = n
        self.t = t
        self.received: dict[tuple, dict[int, frozenset]] = {}  # (r, step) -> sender -> set
        self.exchanges: dict[int, CoreExchangeState] = {}
        self.ignored = 0

    def receive(self, src: int, r: int, step: int, ids) -> bool:
        """Record ``src``'s step set for round ``r``; only the first one counts."""
        box = self.received.setdefault((r, step), {})
        if src in box:
            self.ignored += 1
            return False
        box[src] = frozenset(ids)
        return True

    def begin(self, r: int, accept) -> frozenset:
        """Invoke the exchange for round ``r``; returns the step-1 set to broadcast."""
        if r in self.exchanges:
            raise ValueError(f"common core for round {r} already invoked")
        current = frozenset(accept)
        self.exchanges[r] = CoreExchangeState(r, 1, current, {1: current})
        return current

    def _eligible(self, r: int, step: int, accept) -> list[int]:
        box = self.received.get((r, step), {})
        return sorted(j for j, ids in box.items() if ids <= accept)

    def poll(self, r: int, accept) -> tuple[Optional[frozenset], Optional[frozenset]]:
        """Advance round ``r``'s exchange against the live ``accept`` set.

        Returns ``(step2_set_to_send, result)``; either may be None.
        """
        st = self.exchanges[r]
        quorum = self.n - self.t
        to_send = None
        if st.step == 1:
            ok = self._eligible(r, 1, accept)
            if len(ok) < quorum:
                return None, None
            st.eligible[1] = ok
            st.step = 2
            to_send = st.sent[2] = frozenset(accept)
        if st.step == 2:
            ok = self._eligible(r, 2, accept)
            if len(ok) < quorum:
                return to_send, None
            st.eligible[2] = ok
            st.step = 3
            st.result = frozenset(accept)
        return to_send, st.result

    def result(self, r: int) -> Optional[frozenset]:
        st = self.exchanges.get(r)
        return None if st is None else st.result


def run_exchange(n: int, t: int, accept_sets: dict[int, set], order=None) -> dict[int, frozenset]:
    """Run one round of the exchange among ``accept_sets.keys()`` with static sets.

    A synchronous-delivery helper for small demos and tests: every
    participant's messages reach every participant, in ``order`` (default:
    id order).  Returns each participant's output.
    """
    order = list(order or sorted(accept_sets))
    cores = {p: CommonCore(n, t) for p in accept_sets}
    outbox = []
    for p in order:
        outbox.append((p, 1, cores[p].begin(0, accept_sets[p])))
    results: dict[int, frozenset] = {}
    while outbox:
        batch, outbox = outbox, []
        for src, step, ids in batch:
            for q in order:
                cores[q].receive(src, 0, step, ids)
        for p in order:
            if p in results:
                continue
            send2, res = cores[p].poll(0, accept_sets[p])
            if send2 is not None:
                outbox.append((p, 2, send2))
            if res is not None:
                results[p] = res
    return results
