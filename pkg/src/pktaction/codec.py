"""Plug point for a learned or lossy model between lifting and compiling.

The roundtrip command passes actions through an :class:`ActionCodec`; the
identity codec gives the oracle path.
"""

from __future__ import annotations

from typing import Any, Protocol, Sequence

from .lift import ActionRecord


class ActionCodec(Protocol):
    name: str

    def encode(self, actions: Sequence[ActionRecord]) -> Any: ...

    def decode(self, latent: Any) -> list[ActionRecord]: ...


class IdentityCodec:
    name = "identity"

    def encode(self, actions: Sequence[ActionRecord]) -> list[ActionRecord]:
        return list(actions)

    def decode(self, latent: list[ActionRecord]) -> list[ActionRecord]:
        return list(latent)
