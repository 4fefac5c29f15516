"""Shared vocabulary: system parameters, protocol contract, round messages.

A protocol is a deterministic transition function.  Processor ids are the
integers ``1..n``.  A replica's life is a sequence of :class:`Step` values
indexed by round:

* round 1 is produced by ``spec.start(input, me, cfg)``; its outbox holds the
  messages sent in round 1;
* round ``r`` (``2 <= r <= R + 1``) is produced by
  ``spec.transition(inbox, previous_state, r)`` where ``inbox`` maps each
  sender to the payload it sent this replica in round ``r - 1``; its outbox
  holds the round-``r`` messages;
* the step at round ``R + 1`` is final and must carry an output.

A sender that sends nothing to ``q`` simply has no ``q`` key in its outbox.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from .errors import PreconditionError, ProtocolPanic, ResilienceViolation


class Mode(str, enum.Enum):
    MAOBT = "MAOBt"
    MOBTT = "MOBtt"
    RANDOMIZED = "randomized"

    @property
    def uses_core(self) -> bool:
        return self is not Mode.MAOBT

    @property
    def resilience(self) -> str:
        return "randomized" if self is Mode.RANDOMIZED else "deterministic"

    @classmethod
    def parse(cls, value: "str | Mode") -> "Mode":
        if isinstance(value, Mode):
            return value
        for mode in cls:
            if mode.value.lower() == str(value).lower():
                return mode
        raise ValueError(f"unknown mode {value!r}")


@dataclass(frozen=True)
class SystemConfig:
    n: int
    t: int

    @property
    def quorum(self) -> int:
        return self.n - self.t

    @property
    def ids(self) -> range:
        return range(1, self.n + 1)


def validate_config(cfg: SystemConfig, mode: str = "deterministic") -> None:
    """Raise :class:`ResilienceViolation` unless ``cfg`` suits ``mode``.

    ``mode`` is ``"deterministic"`` (needs n > 3t) or ``"randomized"``
    (needs n > 4t); a :class:`Mode` is also accepted.
    """
    if isinstance(mode, Mode):
        mode = mode.resilience
    if cfg.n < 1 or cfg.t < 0:
        raise ResilienceViolation(f"need n >= 1 and t >= 0, got n={cfg.n}, t={cfg.t}")
    if mode == "deterministic":
        if not cfg.n > 3 * cfg.t:
            raise ResilienceViolation(f"n > 3t violated: {cfg.n} <= {3 * cfg.t}")
    elif mode == "randomized":
        if not cfg.n > 4 * cfg.t:
            raise ResilienceViolation(f"n > 4t violated: {cfg.n} <= {4 * cfg.t}")
    else:
        raise ValueError(f"unknown resilience mode {mode!r}")


@dataclass(frozen=True)
class RoundMessage:
    round: int
    sender: int
    receiver: int
    payload: Any


@dataclass(frozen=True)
class Step:
    """One replica snapshot: protocol state, what it sends this round, output."""

    state: Any
    outbox: Mapping[int, Any] = field(default_factory=dict)
    output: Any = None

    def messages(self, round: int, sender: int) -> list[RoundMessage]:
        return [RoundMessage(round, sender, q, m) for q, m in sorted(self.outbox.items())]


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True)
class ProtocolSpec:
    """A deterministic round-based protocol.

    ``start(input, me, cfg) -> Step`` and ``transition(inbox, state, r) -> Step``
    (``transition(inbox, state, r, coin)`` when ``uses_coin``) must be pure.
    ``encode_state`` maps a state to a JSON-compatible value used for digests.
    """

    name: str
    rounds: int
    start: Callable[..., Step]
    transition: Callable[..., Step]
    uses_coin: bool = False
    encode_input: Callable[[Any], str] = canonical_json
    decode_input: Callable[[str], Any] = json.loads
    encode_state: Callable[[Any], Any] = lambda s: s
    params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def final_round(self) -> int:
        return self.rounds + 1


def _checked(spec: ProtocolSpec, result: Any, r: int) -> Step:
    if not isinstance(result, Step):
        raise ProtocolPanic(f"{spec.name}: round {r} returned {type(result).__name__}, not Step")
    if r == spec.final_round and result.output is None:
        raise ProtocolPanic(f"{spec.name}: final round {r} produced no output")
    return result


def start_protocol(spec: ProtocolSpec, value: Any, me: int, cfg: SystemConfig) -> Step:
    """Round-1 step of replica ``me`` started from input ``value``."""
    try:
        result = spec.start(value, me, cfg)
    except ProtocolPanic:
        raise
    except Exception as exc:
        raise ProtocolPanic(f"{spec.name}: start failed for p{me}: {exc!r}") from exc
    return _checked(spec, result, 1)


def step_protocol(
    spec: ProtocolSpec,
    inbox: Mapping[int, Any],
    state: Any,
    r: int,
    coin: Optional[int] = None,
) -> Step:
    """Evaluate the transition for round ``r`` (2 <= r <= R + 1).

    ``state`` is the replica's round ``r - 1`` state.  Asking for a round past
    the final one means the state has already halted.
    """
    if r < 2:
        raise PreconditionError(f"transition rounds start at 2, got {r}")
    if r > spec.final_round:
        raise PreconditionError(f"state halted after round {spec.final_round}; no round {r}")
    if spec.uses_coin and coin is None:
        raise PreconditionError(f"{spec.name} needs a coin at round {r}")
    try:
        if spec.uses_coin:
            result = spec.transition(inbox, state, r, coin)
        else:
            result = spec.transition(inbox, state, r)
    except (ProtocolPanic, PreconditionError):
        raise
    except Exception as exc:
        raise ProtocolPanic(f"{spec.name}: transition failed at round {r}: {exc!r}") from exc
    return _checked(spec, result, r)


def state_digest(spec: ProtocolSpec, step: Step) -> str:
    """Stable hash of a snapshot's canonical encoding (state plus output)."""
    blob = canonical_json([spec.encode_state(step.state), step.output])
    return hashlib.blake2b(blob.encode(), digest_size=12).hexdigest()


def is_finite_number(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)
