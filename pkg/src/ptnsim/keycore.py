"""Bit-level key algebra for elementary and parallel trusted-node relay.

Keys are immutable bitstrings. Bit index 0 is the first bit emitted by the
generating session and maps to the most significant bit of byte 0 when
serialized; hex text pads the final byte with zero bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ArityMismatch,
    CorrespondenceError,
    EmptyDerivation,
    EmptyKey,
    LengthMismatch,
    MissingKey,
)

__all__ = [
    "KeyMaterial",
    "ParityRecord",
    "xor",
    "compute_parity",
    "recover_peer_key",
    "derive_final_key",
    "derive_matched_final_key",
    "recover_final_peer_key",
]


@dataclass(frozen=True)
class KeyMaterial:
    """An ordered bitstring.

    ``value`` packs the bits into an integer with bit 0 as the most
    significant of ``length`` bits. ``origin`` is provenance metadata and is
    ignored by equality.
    """

    value: int
    length: int
    origin: str = field(default="derived", compare=False)

    def __post_init__(self):
        if self.length < 0:
            raise ValueError(f"negative key length {self.length}")
        if self.value < 0 or self.value >> self.length:
            raise ValueError(f"value does not fit in {self.length} bits")

    @classmethod
    def from_bits(cls, bits: Iterable[int], origin: str = "derived") -> "KeyMaterial":
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8)
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        n = int(arr.size)
        if n == 0:
            return cls(0, 0, origin)
        packed = np.packbits(arr).tobytes()
        value = int.from_bytes(packed, "big") >> (len(packed) * 8 - n)
        return cls(value, n, origin)

    @classmethod
    def from_hex(cls, text: str, length: int, origin: str = "derived") -> "KeyMaterial":
        raw = bytes.fromhex(text)
        if len(raw) * 8 < length or len(raw) != (length + 7) // 8:
            raise LengthMismatch(f"hex holds {len(raw) * 8} bits, expected {length}")
        if length == 0:
            return cls(0, 0, origin)
        return cls(int.from_bytes(raw, "big") >> (len(raw) * 8 - length), length, origin)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator, origin: str = "derived") -> "KeyMaterial":
        return cls.from_bits(rng.integers(0, 2, size=length, dtype=np.uint8), origin)

    @classmethod
    def zeros(cls, length: int) -> "KeyMaterial":
        return cls(0, length)

    @property
    def bits(self) -> np.ndarray:
        if self.length == 0:
            return np.zeros(0, dtype=np.uint8)
        nbytes = (self.length + 7) // 8
        raw = (self.value << (nbytes * 8 - self.length)).to_bytes(nbytes, "big")
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[: self.length]

    def to_hex(self) -> str:
        nbytes = (self.length + 7) // 8
        return (self.value << (nbytes * 8 - self.length)).to_bytes(nbytes, "big").hex()

    def truncate(self, n: int) -> "KeyMaterial":
        """First ``n`` bits; a no-op when ``n >= length``."""
        if n >= self.length:
            return self
        if n < 0:
            raise ValueError("negative truncation length")
        return KeyMaterial(self.value >> (self.length - n), n, self.origin)

    def with_origin(self, origin: str) -> "KeyMaterial":
        return KeyMaterial(self.value, self.length, origin)

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> int:
        if i < 0:
            i += self.length
        if not 0 <= i < self.length:
            raise IndexError(i)
        return (self.value >> (self.length - 1 - i)) & 1

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""


@dataclass(frozen=True)
class ParityRecord:
    """A broadcast parity announcement from one satellite for one OGS pair."""

    satellite_id: str
    ogs_a_id: str
    ogs_b_id: str
    session_a_id: str
    session_b_id: str
    parity: KeyMaterial

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.satellite_id, self.session_a_id, self.session_b_id)

    def to_dict(self) -> dict:
        return {
            "satellite_id": self.satellite_id,
            "ogs_a_id": self.ogs_a_id,
            "ogs_b_id": self.ogs_b_id,
            "session_a_id": self.session_a_id,
            "session_b_id": self.session_b_id,
            "length_bits": self.parity.length,
            "parity_hex": self.parity.to_hex(),
        }

    def to_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ParityRecord":
        parity = KeyMaterial.from_hex(d["parity_hex"], int(d["length_bits"]), origin="parity")
        return cls(
            str(d["satellite_id"]),
            str(d["ogs_a_id"]),
            str(d["ogs_b_id"]),
            str(d["session_a_id"]),
            str(d["session_b_id"]),
            parity,
        )

    @classmethod
    def from_line(cls, line: str) -> "ParityRecord":
        return cls.from_dict(json.loads(line))


def xor(a: KeyMaterial, b: KeyMaterial) -> KeyMaterial:
    if a.length != b.length:
        raise LengthMismatch(f"cannot xor keys of length {a.length} and {b.length}")
    return KeyMaterial(a.value ^ b.value, a.length)


def compute_parity(
    k_a: KeyMaterial | None,
    k_b: KeyMaterial | None,
    *,
    satellite_id: str = "C",
    ogs_a_id: str = "A",
    ogs_b_id: str = "B",
    session_a_id: str | None = None,
    session_b_id: str | None = None,
) -> ParityRecord:
    """Parity of two session keys held by one satellite.

    Keys of unequal length are truncated to the shorter one first.
    """
    if k_a is None or k_b is None:
        missing = ogs_a_id if k_a is None else ogs_b_id
        raise MissingKey(f"satellite {satellite_id} holds no key for {missing}")
    n = min(k_a.length, k_b.length)
    if n == 0:
        raise EmptyKey(f"matched key length is zero on satellite {satellite_id}")
    parity = xor(k_a.truncate(n), k_b.truncate(n)).with_origin("parity")
    return ParityRecord(
        satellite_id,
        ogs_a_id,
        ogs_b_id,
        session_a_id if session_a_id is not None else k_a.origin,
        session_b_id if session_b_id is not None else k_b.origin,
        parity,
    )


def recover_peer_key(own: KeyMaterial, parity: ParityRecord) -> KeyMaterial:
    n = parity.parity.length
    if own.length < n:
        raise LengthMismatch(f"own key has {own.length} bits, parity has {n}")
    return xor(own.truncate(n), parity.parity)


def derive_final_key(sub_keys: Sequence[KeyMaterial]) -> KeyMaterial:
    """XOR of all sub-keys after truncating each to the shortest."""
    if not sub_keys:
        raise EmptyDerivation("no sub-keys to derive from")
    if len(sub_keys) == 1:
        return sub_keys[0]
    n = min(k.length for k in sub_keys)
    return reduce(xor, (k.truncate(n) for k in sub_keys))


def _check_correspondence(n_keys, parities, satellite_ids):
    if n_keys != len(parities):
        raise ArityMismatch(f"{n_keys} sub-keys but {len(parities)} parities")
    if satellite_ids is not None:
        if len(satellite_ids) != n_keys:
            raise ArityMismatch(f"{n_keys} sub-keys but {len(satellite_ids)} satellite ids")
        for i, (sid, rec) in enumerate(zip(satellite_ids, parities)):
            if sid != rec.satellite_id:
                raise CorrespondenceError(
                    f"position {i}: sub-key from {sid!r} paired with parity from {rec.satellite_id!r}"
                )


def derive_matched_final_key(
    own_sub_keys: Sequence[KeyMaterial],
    parities: Sequence[ParityRecord],
    satellite_ids: Sequence[str] | None = None,
) -> KeyMaterial:
    """Final key of one party once every parity is known.

    Each sub-key is cut to its satellite's parity length before the fold, so
    both parties fold over the same bit positions even when their raw session
    keys differ in length.
    """
    if not own_sub_keys:
        raise EmptyDerivation("no sub-keys to derive from")
    _check_correspondence(len(own_sub_keys), parities, satellite_ids)
    cut = []
    for k, rec in zip(own_sub_keys, parities):
        if k.length < rec.parity.length:
            raise LengthMismatch(
                f"sub-key has {k.length} bits, parity from {rec.satellite_id} has {rec.parity.length}"
            )
        cut.append(k.truncate(rec.parity.length))
    return derive_final_key(cut)


def recover_final_peer_key(
    own_sub_keys: Sequence[KeyMaterial],
    parities: Sequence[ParityRecord],
    satellite_ids: Sequence[str] | None = None,
) -> KeyMaterial:
    """Peer's final key from own sub-keys and all announced parities.

    ``parities[i]`` must come from the satellite that produced
    ``own_sub_keys[i]``; pass ``satellite_ids`` to have that checked.
    """
    if not own_sub_keys:
        raise EmptyDerivation("no sub-keys to derive from")
    _check_correspondence(len(own_sub_keys), parities, satellite_ids)
    n = min(min(k.length for k in own_sub_keys), min(p.parity.length for p in parities))
    own_final = derive_final_key([k.truncate(n) for k in own_sub_keys])
    parity_fold = derive_final_key([p.parity.truncate(n) for p in parities])
    return xor(own_final, parity_fold)
