"""Post-run property checks over a recorded trace.

Every checker takes a quiescent :class:`~bftsim.trace.Trace` and returns a
list of human-readable violations; an empty list means the property held.
Only correct processors' events are judged.
"""

from __future__ import annotations

import json
from collections import defaultdict
from itertools import combinations
from typing import Callable

from .trace import Trace
from . import wire


def _correct(trace: Trace) -> set:
    return set(trace.correct())


def _accepts(trace: Trace, correct: set) -> dict:
    """processor -> list of (r, s, value) in acceptance order."""
    out: dict = defaultdict(list)
    for e in trace.of("accept"):
        if e["p"] in correct:
            v = e["v"] if e["r"] == 1 else tuple(e["v"])
            out[e["p"]].append((e["r"], e["s"], v))
    return out


# -- co_send -----------------------------------------------------------------------


def check_no_equivocation(trace: Trace) -> list[str]:
    """No two correct processors accept different values for the same (r, s)."""
    correct = _correct(trace)
    seen: dict = {}
    bad = []
    for p, events in _accepts(trace, correct).items():
        for r, s, v in events:
            first = seen.setdefault((r, s), (p, v))
            if first[1] != v:
                bad.append(f"<{r}, p{s}>: p{first[0]} accepted {first[1]!r}, p{p} accepted {v!r}")
    return bad


def check_co1(trace: Trace) -> list[str]:
    """A correct sender's broadcasts are accepted by every correct processor, in send order."""
    correct = _correct(trace)
    sent: dict = defaultdict(dict)
    for e in trace.of("broadcast"):
        if e["p"] in correct:
            sent[e["p"]][e["r"]] = e["v"] if e["r"] == 1 else tuple(e["v"])
    bad = []
    for p, events in _accepts(trace, correct).items():
        last: dict = {}
        got: dict = defaultdict(dict)
        for r, s, v in events:
            if s not in correct:
                continue
            if r <= last.get(s, 0):
                bad.append(f"p{p} accepted <{r}, p{s}> after round {last[s]}")
            last[s] = r
            got[s][r] = v
        for s in correct:
            for r, v in sent[s].items():
                if r not in got[s]:
                    bad.append(f"p{p} never accepted correct p{s}'s round-{r} broadcast")
                elif got[s][r] != v:
                    bad.append(f"p{p} accepted {got[s][r]!r} for <{r}, p{s}>, p{s} sent {v!r}")
    return bad


def check_co2(trace: Trace) -> list[str]:
    """Accepting <r, s, v> for r > 1 comes after accepting <r - 1, q> for every q in v."""
    correct = _correct(trace)
    bad = []
    for p, events in _accepts(trace, correct).items():
        have = set()
        for r, s, v in events:
            if r > 1:
                missing = [q for q in v if (r - 1, q) not in have]
                if missing:
                    bad.append(f"p{p} accepted <{r}, p{s}> before <{r - 1}, q> for q in {missing}")
            have.add((r, s))
    return bad


def check_co3(trace: Trace) -> list[str]:
    """At quiescence every instance is accepted by all correct processors or by none."""
    correct = _correct(trace)
    holders: dict = defaultdict(set)
    for p, events in _accepts(trace, correct).items():
        for r, s, _ in events:
            holders[(r, s)].add(p)
    bad = []
    for key in sorted(holders):
        if holders[key] != correct:
            lacking = sorted(correct - holders[key])
            bad.append(f"<{key[0]}, p{key[1]}> accepted by {sorted(holders[key])} but not {lacking}")
    return bad


def check_self_membership(trace: Trace) -> list[str]:
    """A correct processor includes itself in every accept set it broadcasts."""
    correct = _correct(trace)
    return [
        f"p{e['p']} broadcast round-{e['r']} set {e['v']} without itself"
        for e in trace.of("broadcast")
        if e["p"] in correct and e["r"] > 1 and e["p"] not in e["v"]
    ]


# -- common core ---------------------------------------------------------------------


def _core_tables(trace: Trace, correct: set):
    invoked, returned = defaultdict(dict), defaultdict(dict)
    sent = defaultdict(lambda: defaultdict(dict))  # r -> step -> p -> set
    for e in trace.of("cc-invoke", "cc-return", "cc-send"):
        if e["p"] not in correct:
            continue
        if e["ev"] == "cc-invoke":
            invoked[e["r"]][e["p"]] = frozenset(e["set"])
        elif e["ev"] == "cc-return":
            returned[e["r"]][e["p"]] = frozenset(e["set"])
        else:
            sent[e["r"]][e["step"]][e["p"]] = frozenset(e["set"])
    return invoked, returned, sent


def check_common_core(trace: Trace) -> dict[str, list[str]]:
    """Validity, commonality, termination and the pigeonhole witness, per round.

    Returns violations keyed by property name.
    """
    h = trace.header
    n, t = h["n"], h["t"]
    correct = _correct(trace)
    invoked, returned, sent = _core_tables(trace, correct)
    out = {"validity": [], "commonality": [], "termination": [], "witness": []}
    rounds = sorted(set(invoked) | set(returned))
    for r in rounds:
        for p in sorted(correct):
            if p not in invoked[r]:
                out["termination"].append(f"round {r}: p{p} never invoked the exchange")
            elif p not in returned[r]:
                out["termination"].append(f"round {r}: p{p} never returned")
            elif not invoked[r][p] <= returned[r][p]:
                out["validity"].append(f"round {r}: p{p} returned {sorted(returned[r][p])} "
                                       f"missing part of {sorted(invoked[r][p])}")
        outs = list(returned[r].values())
        if outs:
            common = frozenset.intersection(*outs)
            if len(common) < n - t:
                out["commonality"].append(f"round {r}: common part {sorted(common)} has < {n - t} ids")
        step1, step2 = sent[r][1], sent[r][2]
        witnesses = [
            p for p, s1 in step1.items()
            if sum(1 for s2 in step2.values() if s1 <= s2) >= t + 1
        ]
        if not witnesses:
            out["witness"].append(f"round {r}: no correct step-1 set lies in t + 1 correct step-2 sets")
    return out


# -- replicas, transport, coins ----------------------------------------------------------


def check_replica_agreement(trace: Trace) -> list[str]:
    """All correct processors that computed SM_i[r] computed the same digest."""
    correct = _correct(trace)
    seen: dict = {}
    bad = []
    for e in trace.of("sm-start", "sm-step"):
        if e["p"] not in correct:
            continue
        key = (e["i"], e["r"])
        first = seen.setdefault(key, (e["p"], e["digest"]))
        if first[1] != e["digest"]:
            bad.append(f"SM_{key[0]}[{key[1]}]: p{first[0]} has {first[1]}, p{e['p']} has {e['digest']}")
    return bad


def _is_id_list(v, n: int) -> bool:
    return isinstance(v, list) and all(type(q) is int and 1 <= q <= n for q in v)


def check_value_free(trace: Trace, include_byzantine: bool = False) -> list[str]:
    """Past round 1, every submitted payload carries only tags and processor-id sets."""
    n = trace.header["n"]
    senders = None if include_byzantine else _correct(trace)
    allowed = {"k", "r", "s", "v", "step"}
    verdicts: dict = {}  # payload -> problem or None; broadcasts repeat payloads
    bad = []
    for e in trace.of("submit"):
        if senders is not None and e["src"] not in senders:
            continue
        raw = e["msg"]
        if raw not in verdicts:
            verdicts[raw] = _payload_problem(raw, n, allowed)
        problem = verdicts[raw]
        if problem:
            bad.append(f"seq {e['seq']}: {problem}")
    return bad


def _payload_problem(raw, n: int, allowed: set):
    try:
        msg = json.loads(raw)
    except (TypeError, ValueError):
        return "payload is not JSON"
    if not isinstance(msg, dict) or set(msg) - allowed:
        return f"unexpected payload shape {raw!r}"
    if msg.get("k") in (wire.INIT, wire.M1, wire.M2) and msg.get("r") == 1:
        return None  # round-1 broadcasts carry the input, by design
    if not _is_id_list(msg.get("v"), n):
        return f"value leak {raw!r}"
    return None


def check_coin_agreement(trace: Trace) -> list[str]:
    """One coin bit per (round, replica) across correct processors."""
    correct = _correct(trace)
    seen: dict = {}
    bad = []
    for e in trace.of("coin"):
        if e["p"] not in correct:
            continue
        key = (e["r"], e["i"])
        first = seen.setdefault(key, (e["p"], e["bit"]))
        if first[1] != e["bit"]:
            bad.append(f"coin({key[0]}, p{key[1]}): p{first[0]} drew {first[1]}, p{e['p']} drew {e['bit']}")
    return bad


def check_outputs_present(trace: Trace) -> list[str]:
    correct = _correct(trace)
    got = {e["p"] for e in trace.of("output")}
    return [f"correct p{p} produced no output" for p in sorted(correct - got)]


COSEND_CHECKS: dict[str, Callable[[Trace], list[str]]] = {
    "CO1": check_co1,
    "CO2": check_co2,
    "CO3": check_co3,
    "no-equivocation": check_no_equivocation,
}


def run_all(trace: Trace) -> dict[str, list[str]]:
    """Every applicable property, keyed by name."""
    results = {name: fn(trace) for name, fn in COSEND_CHECKS.items()}
    results["self-membership"] = check_self_membership(trace)
    results["replica-agreement"] = check_replica_agreement(trace)
    results["value-free"] = check_value_free(trace)
    results["outputs"] = check_outputs_present(trace)
    if any(True for _ in trace.of("cc-invoke")):
        for name, bad in check_common_core(trace).items():
            results[f"core-{name}"] = bad
    if any(True for _ in trace.of("coin")):
        results["coin-agreement"] = check_coin_agreement(trace)
    return results


def violation_counts(results: dict[str, list[str]]) -> dict[str, int]:
    return {k: len(v) for k, v in results.items()}


def pairwise_within(values, eps: float) -> bool:
    return all(abs(a - b) <= eps for a, b in combinations(values, 2))
