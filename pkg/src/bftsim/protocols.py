"""Bundled protocols: full-information flooding, scalar approximate agreement,
and a coin-using Ben-Or-style binary consensus."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .errors import ConfigError, PreconditionError, ProtocolPanic
from .model import ProtocolSpec, Step, SystemConfig, canonical_json, is_finite_number


def _to_all(n: int, payload: Any) -> dict[int, Any]:
    return {q: payload for q in range(1, n + 1)}


# -- flooding -----------------------------------------------------------------


@dataclass(frozen=True)
class FloodState:
    me: int
    n: int
    known: tuple  # sorted (processor id, input) pairs


def flooding_spec(rounds: int = 1) -> ProtocolSpec:
    """Every round, broadcast every input heard of so far; output the collection."""
    if rounds < 1:
        raise PreconditionError("flooding needs at least one round")
    final = rounds + 1

    def start(value, me, cfg: SystemConfig):
        known = ((me, value),)
        return Step(FloodState(me, cfg.n, known), _to_all(cfg.n, known))

    def transition(inbox, state: FloodState, r):
        merged = dict(state.known)
        for sender in sorted(inbox):
            for pid, value in inbox[sender]:
                merged.setdefault(pid, value)
        known = tuple(sorted(merged.items()))
        new = FloodState(state.me, state.n, known)
        if r == final:
            return Step(new, {}, output=[[pid, v] for pid, v in known])
        return Step(new, _to_all(state.n, known))

    return ProtocolSpec(
        name="flooding",
        rounds=rounds,
        start=start,
        transition=transition,
        encode_state=lambda s: {"me": s.me, "known": [[p, v] for p, v in s.known]},
        params={"rounds": rounds},
    )


# -- approximate agreement --------------------------------------------------------


@dataclass(frozen=True)
class ApproxAgreementState:
    me: int
    n: int
    value: float
    round: int
    halted: bool = False
    output: Optional[float] = None


def trimmed_midpoint(values, t: int) -> float:
    """Drop the ``t`` lowest and ``t`` highest values; midpoint of what is left."""
    vals = sorted(values)
    if len(vals) < 2 * t + 1:
        raise ProtocolPanic(f"cannot trim {t} from each side of {len(vals)} values")
    kept = vals[t: len(vals) - t]
    return kept[0] / 2 + kept[-1] / 2  # no overflow near the float limit


def rounds_for(spread: float, epsilon: float) -> int:
    return max(1, math.ceil(math.log2(spread / epsilon))) if spread > epsilon else 1


def _decode_scalar(text: str) -> float:
    value = json.loads(text)
    if not is_finite_number(value):
        raise ValueError(f"not a finite scalar: {text!r}")
    return float(value)


def approx_agreement_spec(epsilon: float, t: int, rounds: Optional[int] = None, spread: float = 1.0) -> ProtocolSpec:
    """Trim-and-midpoint epsilon-agreement on scalars.

    Each round a replica broadcasts its value; on receiving at least ``n - t``
    values it discards the ``t`` lowest and ``t`` highest and moves to the
    midpoint of the rest.  The spread of correct values at least halves per
    round whenever every pair of receivers shares ``n - t`` senders, so
    ``rounds`` defaults to ``ceil(log2(spread / epsilon))``.
    """
    if not epsilon > 0:
        raise PreconditionError("epsilon must be positive")
    if rounds is None:
        rounds = rounds_for(spread, epsilon)
    if rounds < 1:
        raise PreconditionError("approximate agreement needs at least one round")
    final = rounds + 1

    def start(value, me, cfg: SystemConfig):
        value = float(value)
        return Step(ApproxAgreementState(me, cfg.n, value, 1), _to_all(cfg.n, value))

    def transition(inbox, state: ApproxAgreementState, r):
        if len(inbox) < state.n - t:
            raise ProtocolPanic(f"p{state.me} round {r}: {len(inbox)} values < n - t")
        value = trimmed_midpoint(inbox.values(), t)
        if r == final:
            return Step(ApproxAgreementState(state.me, state.n, value, r, True, value), {}, output=value)
        return Step(ApproxAgreementState(state.me, state.n, value, r), _to_all(state.n, value))

    return ProtocolSpec(
        name="approx-agreement",
        rounds=rounds,
        start=start,
        transition=transition,
        encode_input=lambda v: canonical_json(float(v)) if is_finite_number(v) else canonical_json(v),
        decode_input=_decode_scalar,
        encode_state=lambda s: {"me": s.me, "value": s.value, "round": s.round, "halted": s.halted},
        params={"epsilon": epsilon, "t": t, "rounds": rounds, "spread": spread},
    )


# -- Ben-Or-style consensus ---------------------------------------------------------

REPORT, PROPOSE = "report", "propose"


@dataclass(frozen=True)
class BenOrState:
    me: int
    n: int
    t: int
    x: int
    decided: Optional[int] = None
    proposal: Optional[int] = None


def _decode_bit(text: str) -> int:
    value = json.loads(text)
    if type(value) is not int or value not in (0, 1):
        raise ValueError(f"not a bit: {text!r}")
    return value


def ben_or_style_spec(phases: int = 16) -> ProtocolSpec:
    """Binary consensus in two-round phases; ties fall back to the replica's coin.

    Odd rounds carry reports of the current bit.  A replica that sees more
    than ``n / 2`` reports of ``v`` proposes ``v`` (else proposes nothing).
    Even rounds carry proposals: ``t + 1`` proposals of ``v`` decide ``v``,
    any proposal of ``v`` adopts it, and no proposal adopts the coin.  Decided
    replicas keep participating; the output is the decision, or the current
    bit if the last phase ended undecided.  Validity needs n > 4t.
    """
    if phases < 1:
        raise PreconditionError("need at least one phase")
    rounds = 2 * phases
    final = rounds + 1

    def start(value, me, cfg: SystemConfig):
        return Step(BenOrState(me, cfg.n, cfg.t, value), _to_all(cfg.n, (REPORT, value)))

    def transition(inbox, state: BenOrState, r, coin):
        n, t = state.n, state.t
        if (r - 1) % 2 == 1:
            reports = [m[1] for m in inbox.values() if m[0] == REPORT]
            proposal = None
            for v in (0, 1):
                if 2 * reports.count(v) > n:
                    proposal = v
            new = BenOrState(state.me, n, t, state.x, state.decided, proposal)
            return Step(new, _to_all(n, (PROPOSE, proposal)))
        proposals = [m[1] for m in inbox.values() if m[0] == PROPOSE and m[1] is not None]
        decided = state.decided
        strong = [v for v in (0, 1) if proposals.count(v) >= t + 1]
        if strong:
            x = strong[0]
            if decided is None:
                decided = x
        elif proposals:
            x = min(proposals)
        else:
            x = coin
        new = BenOrState(state.me, n, t, x, decided, None)
        if r == final:
            return Step(new, {}, output=decided if decided is not None else x)
        return Step(new, _to_all(n, (REPORT, x)))

    return ProtocolSpec(
        name="ben-or",
        rounds=rounds,
        start=start,
        transition=transition,
        uses_coin=True,
        decode_input=_decode_bit,
        encode_state=lambda s: {"me": s.me, "x": s.x, "decided": s.decided, "proposal": s.proposal},
        params={"phases": phases},
    )


# -- registry -------------------------------------------------------------------

def _flooding(params: dict, cfg: SystemConfig) -> ProtocolSpec:
    return flooding_spec(int(params.get("rounds", 2)))


def _approx(params: dict, cfg: SystemConfig) -> ProtocolSpec:
    return approx_agreement_spec(
        float(params.get("epsilon", 0.01)),
        int(params.get("t", cfg.t)),
        params.get("rounds"),
        float(params.get("spread", 1.0)),
    )


def _ben_or(params: dict, cfg: SystemConfig) -> ProtocolSpec:
    return ben_or_style_spec(int(params.get("phases", 16)))


PROTOCOLS: dict[str, Callable[[dict, SystemConfig], ProtocolSpec]] = {
    "flooding": _flooding,
    "approx-agreement": _approx,
    "ben-or": _ben_or,
}

# Default alternative input an equivocating processor sends to half the network.
EQUIVOCATION_INPUT = {"flooding": 99, "approx-agreement": 7.5, "ben-or": None}


def build_spec(name: str, params: Optional[dict], cfg: SystemConfig) -> ProtocolSpec:
    try:
        factory = PROTOCOLS[name]
    except KeyError:
        raise ConfigError(f"unknown protocol {name!r}; choose from {sorted(PROTOCOLS)}") from None
    try:
        return factory(dict(params or {}), cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for protocol {name!r}: {exc}") from exc
