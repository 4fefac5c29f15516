"""Shared coins for replica steps of randomized protocols.

A provider returns one bit per (round, processor) key and every correct
processor asking for the same key gets the same bit.  Bits are drawn when a
replica step is processed but are keyed, so processing order cannot skew
them.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, runtime_checkable

from .errors import ProviderUnavailable


@runtime_checkable
class CoinProvider(Protocol):
    def coin(self, r: int, i: int) -> int: ...


class IdealDealer:
    """Trusted common coin derived from a master seed, out of the adversary's reach."""

    name = "ideal-dealer"

    def __init__(self, seed: int):
        self.seed = seed

    def coin(self, r: int, i: int) -> int:
        h = hashlib.blake2b(f"{self.seed}:{r}:{i}".encode(), digest_size=8).digest()
        return h[0] & 1


class AmpcCoinProvider:
    """Placeholder for a coin computed by asynchronous multi-party computation (n > 4t).

    Not implemented; every request raises :class:`ProviderUnavailable`.
    """

    name = "ampc"

    def coin(self, r: int, i: int) -> int:
        raise ProviderUnavailable("AMPC coin provider is not implemented")


def sim_coin(provider: CoinProvider, r: int, i: int) -> int:
    """The agreed coin for replica ``i``'s step at round ``r``."""
    if provider is None:
        raise ProviderUnavailable("no coin provider configured")
    try:
        bit = provider.coin(r, i)
    except ProviderUnavailable:
        raise
    except Exception as exc:
        raise ProviderUnavailable(f"coin provider failed for ({r}, p{i}): {exc!r}") from exc
    if bit not in (0, 1) or isinstance(bit, bool):
        raise ProviderUnavailable(f"coin provider returned non-bit {bit!r}")
    return bit


PROVIDERS = {"ideal-dealer": IdealDealer, "ampc": AmpcCoinProvider}


def make_provider(name: str, seed: int) -> CoinProvider:
    if name == "ideal-dealer":
        return IdealDealer(seed)
    if name == "ampc":
        return AmpcCoinProvider()
    raise ValueError(f"unknown coin provider {name!r}")
