"""Eavesdropper knowledge under per-satellite compromise.

A compromised satellite leaks both sub-keys it holds; parities are public.
``conditional_key_distribution`` is an exhaustive oracle for small keys:
it counts, over every sub-key assignment consistent with Eve's view, how
often each final-key value occurs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import TooLargeForOracle, UnknownSatellite
from .keycore import KeyMaterial, ParityRecord

MAX_ORACLE_SATELLITES = 4
MAX_ORACLE_KEY_BITS = 8
_CHUNK = 1 << 22


class Verdict(str, Enum):
    SECURE = "SECURE"
    BROKEN = "BROKEN"


@dataclass(frozen=True)
class AdversaryModel:
    compromised: frozenset[str] = frozenset()
    observes_parities: bool = True

    def __post_init__(self):
        object.__setattr__(self, "compromised", frozenset(self.compromised))

    def check(self, satellite_ids: Iterable[str]) -> None:
        unknown = sorted(self.compromised - set(satellite_ids))
        if unknown:
            raise UnknownSatellite(f"compromised satellites not in scenario: {', '.join(unknown)}")


@dataclass(frozen=True)
class EveView:
    known_sub_keys: Mapping[str, tuple[KeyMaterial, KeyMaterial]]
    parities: tuple[ParityRecord, ...]


def eve_view(model: AdversaryModel, transcripts, parities: Sequence[ParityRecord], satellite_ids=None) -> EveView:
    """Collect what Eve holds: every parity plus both sub-keys of each compromised satellite.

    Sub-keys are the satellite-side keys of the sessions each parity
    references. ``satellite_ids`` defaults to every satellite seen in the
    transcripts or parities.
    """
    by_session = {t.session_id: t for t in transcripts}
    if satellite_ids is None:
        satellite_ids = {t.satellite_id for t in transcripts} | {p.satellite_id for p in parities}
    model.check(satellite_ids)
    known = {}
    for rec in parities:
        if rec.satellite_id in model.compromised:
            known[rec.satellite_id] = (by_session[rec.session_a_id].key_sat, by_session[rec.session_b_id].key_sat)
    return EveView(known, tuple(parities))


@dataclass(frozen=True)
class KeyDistribution:
    """Counts of each final-key value; index v is the key whose bits read v MSB-first."""

    counts: np.ndarray
    key_len: int

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.total

    def is_uniform(self) -> bool:
        return bool(np.all(self.counts == self.counts[0]) and self.counts[0] > 0)

    def is_point_mass(self) -> bool:
        return int(np.count_nonzero(self.counts)) == 1

    def entropy(self) -> float:
        p = self.probabilities
        p = p[p > 0]
        return float(-(p * np.log2(p)).sum()) + 0.0

    def support(self) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.counts)]

    def table(self) -> list[dict]:
        return [
            {"final_key": format(v, f"0{self.key_len}b"), "count": int(c), "probability": float(c) / self.total}
            for v, c in enumerate(self.counts)
        ]


def _xor_counts(base: int, n_free: int, key_len: int) -> np.ndarray:
    """Histogram of ``base ^ v_1 ^ ... ^ v_n_free`` over all (2**key_len)**n_free tuples."""
    size = 1 << key_len
    values = np.arange(size, dtype=np.int64)
    counts = np.zeros(size, dtype=np.int64)
    partial = np.array([base], dtype=np.int64)
    # Expand all but the last free key explicitly; the last one is swept value by value.
    for _ in range(max(n_free - 1, 0)):
        partial = (partial[:, None] ^ values[None, :]).ravel()
    if n_free == 0:
        counts += np.bincount(partial, minlength=size)
        return counts
    if partial.size * size <= _CHUNK:
        counts += np.bincount((partial[:, None] ^ values[None, :]).ravel(), minlength=size)
    else:
        for v in range(size):
            counts += np.bincount(partial ^ v, minlength=size)
    return counts


def conditional_key_distribution(view: EveView, n: int, key_len: int) -> KeyDistribution:
    """Distribution of Bob's final key (XOR of all k_B) given Eve's view.

    Only the first ``key_len`` bits of every key are considered. For an
    uncompromised satellite every k_B value is consistent with its parity
    (k_A is then fixed to k_B ^ parity), so the enumeration visits exactly
    the assignments matching the view.
    """
    if n > MAX_ORACLE_SATELLITES or key_len > MAX_ORACLE_KEY_BITS:
        raise TooLargeForOracle(
            f"n={n}, key_len={key_len} exceeds the oracle bound "
            f"(n <= {MAX_ORACLE_SATELLITES}, key_len <= {MAX_ORACLE_KEY_BITS})"
        )
    if len(view.parities) != n:
        raise ValueError(f"view carries {len(view.parities)} parities, expected {n}")
    if key_len < 1:
        raise ValueError("key_len must be >= 1")
    base = 0
    free = 0
    for rec in view.parities:
        p = rec.parity.truncate(key_len)
        if p.length < key_len:
            raise ValueError(f"parity from {rec.satellite_id} has only {p.length} bits")
        if rec.satellite_id in view.known_sub_keys:
            k_a, k_b = (k.truncate(key_len) for k in view.known_sub_keys[rec.satellite_id])
            if k_a.value ^ k_b.value != p.value:
                raise ValueError(f"known sub-keys of {rec.satellite_id} contradict its parity")
            base ^= k_b.value
        else:
            free += 1
    return KeyDistribution(_xor_counts(base, free, key_len), key_len)


def security_verdict(model: AdversaryModel, satellite_ids: Iterable[str]) -> Verdict:
    """BROKEN exactly when every satellite contributing to the final key is compromised."""
    sats = set(satellite_ids)
    if sats and sats <= model.compromised:
        return Verdict.BROKEN
    return Verdict.SECURE


def oracle_verdict(dist: KeyDistribution) -> Verdict:
    return Verdict.SECURE if dist.is_uniform() else Verdict.BROKEN


def conditional_entropy(view: EveView, n: int, key_len: int) -> float:
    return conditional_key_distribution(view, n, key_len).entropy()


__all__ = [
    "AdversaryModel",
    "EveView",
    "KeyDistribution",
    "Verdict",
    "eve_view",
    "conditional_key_distribution",
    "conditional_entropy",
    "security_verdict",
    "oracle_verdict",
]
