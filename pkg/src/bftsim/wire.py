"""Byte-exact transport encodings.

Every envelope payload is a compact, key-sorted JSON object:

    co_send:      {"k":"init"|"m1"|"m2","r":<round>,"s":<sender>,"v":<value>}
    common core:  {"k":"cc","r":<round>,"step":1|2,"v":[<id>, ...]}

For co_send round 1, ``v`` is the protocol-encoded input string.  For every
later round, and for common core, ``v`` is a sorted list of processor ids.
Byzantine scripts may put anything on the wire; :func:`decode` returns None
for anything that does not parse into this shape.
"""

from __future__ import annotations

import json
from functools import lru_cache
from dataclasses import dataclass
from typing import Optional, Union

INIT, M1, M2, CC = "init", "m1", "m2", "cc"
COSEND_KINDS = frozenset((INIT, M1, M2))

Value = Union[str, tuple]


@dataclass(frozen=True)
class WireMessage:
    kind: str
    r: int
    s: int  # sender of the co_send instance; 0 for common-core messages
    v: Value  # input string (round 1) or sorted tuple of ids
    step: int = 0


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def cosend(kind: str, r: int, s: int, v: Value) -> str:
    return _dump({"k": kind, "r": r, "s": s, "v": v if isinstance(v, str) else list(v)})


def core(r: int, step: int, ids) -> str:
    return _dump({"k": CC, "r": r, "step": step, "v": sorted(ids)})


def _is_int(x) -> bool:
    return type(x) is int


def id_set(raw, n: int) -> Optional[tuple]:
    """Normalize a claimed id list to a sorted duplicate-free tuple, or None."""
    if not isinstance(raw, list):
        return None
    for q in raw:
        if not _is_int(q) or q < 1 or q > n:
            return None
    return tuple(sorted(set(raw)))


def decode(payload: str, n: int) -> Optional[WireMessage]:
    """Parse a payload; None for anything malformed.  Results are shared (immutable)."""
    if not isinstance(payload, str):
        return None
    return _decode(payload, n)


@lru_cache(maxsize=1 << 16)
def _decode(payload: str, n: int) -> Optional[WireMessage]:
    try:
        obj = json.loads(payload)
    except (TypeError, ValueError):
        return None
    if not isinstance(obj, dict):
        return None
    kind, r = obj.get("k"), obj.get("r")
    if not _is_int(r) or r < 1:
        return None
    raw = obj.get("v")
    if kind in COSEND_KINDS:
        s = obj.get("s")
        if not _is_int(s) or s < 1 or s > n:
            return None
        if r == 1:
            if not isinstance(raw, str):
                return None
            return WireMessage(kind, r, s, raw)
        ids = id_set(raw, n)
        return None if ids is None else WireMessage(kind, r, s, ids)
    if kind == CC:
        step = obj.get("step")
        ids = id_set(raw, n)
        if step not in (1, 2) or not _is_int(step) or ids is None:
            return None
        return WireMessage(kind, r, 0, ids, step)
    return None
