"""Toy BB84 session between one satellite and one OGS.

The pipeline is: pulses -> detections -> sifting -> QBER sampling -> abort
check -> block-parity reconciliation -> key verification -> Toeplitz
privacy amplification. Key rate uses the asymptotic bound 1 - 2 h2(Q) with
explicit subtraction of every disclosed bit; there are no finite-key terms.

Randomness comes from numpy's PCG64 bit generator seeded per session; that
generator identity is recorded in every transcript as ``prng``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import ChannelParams, LinkOutcome, link_outcome_probabilities
from .errors import InsufficientSample, LengthMismatch
from .keycore import KeyMaterial
from .orbitpass import PassWindow

PRNG_NAME = "numpy.random.PCG64"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


@dataclass(frozen=True)
class ProtocolProfile:
    pulse_rate: float = 1e4
    qber_abort_threshold: float = 0.11
    sample_fraction: float = 0.1
    reconciliation_block: int = 8
    # Length of an optional universal-hash tag compared after reconciliation.
    # Off by default: a failed tag aborts the session, which makes long noisy
    # sessions worth less on average than short ones.
    verify_bits: int = 0

    def violations(self, prefix: str = "ProtocolProfile") -> list[str]:
        out = []
        if not self.pulse_rate > 0:
            out.append(f"{prefix}.pulse_rate: must be > 0, got {self.pulse_rate}")
        if not 0 < self.sample_fraction < 1:
            out.append(f"{prefix}.sample_fraction: must lie in (0, 1), got {self.sample_fraction}")
        if not 0 < self.qber_abort_threshold < 0.5:
            out.append(f"{prefix}.qber_abort_threshold: must lie in (0, 0.5), got {self.qber_abort_threshold}")
        if not (isinstance(self.reconciliation_block, int) and self.reconciliation_block >= 1):
            out.append(f"{prefix}.reconciliation_block: must be an integer >= 1, got {self.reconciliation_block}")
        if not (isinstance(self.verify_bits, int) and self.verify_bits >= 0):
            out.append(f"{prefix}.verify_bits: must be a non-negative integer, got {self.verify_bits}")
        return out


class SessionStatus(str, Enum):
    OK = "OK"
    ABORT_QBER = "ABORT_QBER"
    ABORT_EMPTY = "ABORT_EMPTY"
    ABORT_VERIFY = "ABORT_VERIFY"


_EMPTY = KeyMaterial(0, 0)


@dataclass(frozen=True)
class SessionTranscript:
    session_id: str
    satellite_id: str
    ogs_id: str
    pulses_sent: int
    detections: int
    sifted_bits: int
    measured_qber: float
    leaked_bits: int
    final_bits: int
    status: SessionStatus
    key_ogs: KeyMaterial = _EMPTY
    key_sat: KeyMaterial = _EMPTY
    seed: int = 0
    t_start: float = 0.0
    t_end: float = 0.0
    prng: str = PRNG_NAME

    @property
    def ok(self) -> bool:
        return self.status is SessionStatus.OK

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "satellite_id": self.satellite_id,
            "ogs_id": self.ogs_id,
            "t_start": round(self.t_start, 3),
            "t_end": round(self.t_end, 3),
            "pulses_sent": self.pulses_sent,
            "detections": self.detections,
            "sifted_bits": self.sifted_bits,
            "measured_qber": round(self.measured_qber, 6),
            "leaked_bits": self.leaked_bits,
            "final_bits": self.final_bits,
            "status": self.status.value,
            "key_ogs_hex": self.key_ogs.to_hex(),
            "key_sat_hex": self.key_sat.to_hex(),
            "seed": self.seed,
            "prng": self.prng,
        }

    def to_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SessionTranscript":
        n = int(d["final_bits"]) if d["status"] == "OK" else 0
        return cls(
            session_id=d["session_id"],
            satellite_id=d["satellite_id"],
            ogs_id=d["ogs_id"],
            pulses_sent=int(d["pulses_sent"]),
            detections=int(d["detections"]),
            sifted_bits=int(d["sifted_bits"]),
            measured_qber=float(d["measured_qber"]),
            leaked_bits=int(d["leaked_bits"]),
            final_bits=int(d["final_bits"]),
            status=SessionStatus(d["status"]),
            key_ogs=KeyMaterial.from_hex(d["key_ogs_hex"], n, d["session_id"]),
            key_sat=KeyMaterial.from_hex(d["key_sat_hex"], n, d["session_id"]),
            seed=int(d["seed"]),
            t_start=float(d["t_start"]),
            t_end=float(d["t_end"]),
            prng=d.get("prng", PRNG_NAME),
        )


def sift(tx_bases, rx_bases, rx_bits) -> tuple[np.ndarray, np.ndarray]:
    """Positions where preparation and measurement bases agree, and Bob's bits there."""
    tx_bases, rx_bases, rx_bits = (np.asarray(x) for x in (tx_bases, rx_bases, rx_bits))
    if not len(tx_bases) == len(rx_bases) == len(rx_bits):
        raise LengthMismatch(
            f"bases/bits lengths differ: {len(tx_bases)}, {len(rx_bases)}, {len(rx_bits)}"
        )
    keep = np.flatnonzero(tx_bases == rx_bases)
    return keep, rx_bits[keep]


def estimate_qber(sifted_a, sifted_b, sample_fraction: float, seed: int):
    """Disclose a random sample, return ``(qber, remaining_positions)``."""
    a, b = np.asarray(sifted_a), np.asarray(sifted_b)
    if len(a) != len(b):
        raise LengthMismatch(f"sifted strings have lengths {len(a)} and {len(b)}")
    k = int(len(a) * sample_fraction)
    if k == 0:
        raise InsufficientSample(
            f"sample_fraction={sample_fraction} of {len(a)} sifted bits leaves an empty sample"
        )
    sample = make_rng(seed).choice(len(a), size=k, replace=False)
    qber = float(np.count_nonzero(a[sample] != b[sample])) / k
    remaining = np.setdiff1d(np.arange(len(a)), sample)
    return qber, remaining


def reconcile(key_a, key_b, block: int):
    """Compare block parities; drop every block whose parities differ.

    Returns ``((kept_a, kept_b), leaked_bits)``. Blocks holding an even number
    of errors pass unnoticed.
    """
    a = np.asarray(key_a, dtype=np.uint8)
    b = np.asarray(key_b, dtype=np.uint8)
    if len(a) != len(b):
        raise LengthMismatch(f"keys have lengths {len(a)} and {len(b)}")
    n = len(a)
    nblocks = -(-n // block)
    if n == 0:
        return (a, b), 0
    starts = np.arange(0, n, block)
    pa = np.add.reduceat(a, starts) & 1
    pb = np.add.reduceat(b, starts) & 1
    keep_block = pa == pb
    keep = np.repeat(keep_block, np.diff(np.append(starts, n)))
    return (a[keep], b[keep]), nblocks


def toeplitz_hash(bits, out_len: int, seed: int) -> np.ndarray:
    """Multiply ``bits`` by a seeded binary Toeplitz matrix of shape (out_len, len(bits)) over GF(2).

    Entry (i, j) is ``s[i - j + n - 1]`` for a uniformly random seed string
    ``s`` of length ``out_len + n - 1`` drawn from PCG64(seed).
    """
    x = np.asarray(bits, dtype=np.uint8)
    n = len(x)
    if out_len <= 0 or n == 0:
        return np.zeros(0, dtype=np.uint8)
    s = make_rng(seed).integers(0, 2, size=out_len + n - 1, dtype=np.uint8)
    # Row i over reversed x is the window s[i : i + n]; pack s so that the
    # window lands in the low n bits after shifting right by i.
    s_int = int.from_bytes(np.packbits(s[::-1], bitorder="big").tobytes(), "big") >> (-len(s) % 8)
    x_rev = int.from_bytes(np.packbits(x, bitorder="big").tobytes(), "big") >> (-n % 8)
    # x_rev now has bit k (from LSB) = x[n - 1 - k]; s_int has bit p = s[p].
    mask = (1 << n) - 1
    out = np.empty(out_len, dtype=np.uint8)
    for i in range(out_len):
        out[i] = (((s_int >> i) & mask) & x_rev).bit_count() & 1
    return out


def privacy_amplify(key: KeyMaterial, qber: float, leaked_bits: int, seed: int) -> KeyMaterial:
    if key.length == 0:
        raise ValueError("privacy amplification needs a non-empty key")
    m = math.floor(key.length * (1 - 2 * binary_entropy(qber))) - leaked_bits
    if m <= 0:
        return KeyMaterial(0, 0, key.origin)
    return KeyMaterial.from_bits(toeplitz_hash(key.bits, m, seed), key.origin)


def _aborted(base: dict, status: SessionStatus, **counts) -> SessionTranscript:
    fields_ = dict(detections=0, sifted_bits=0, measured_qber=0.0, leaked_bits=0)
    fields_.update(counts)
    return SessionTranscript(**base, **fields_, final_bits=0, status=status)


def run_session(
    profile: ProtocolProfile,
    channel: ChannelParams | LinkOutcome,
    window: PassWindow,
    seed: int,
    session_id: str | None = None,
) -> SessionTranscript:
    """Simulate one session; the result depends only on the arguments.

    ``key_ogs`` is Bob's (the ground station's) key, ``key_sat`` Alice's
    (the satellite's) copy. Aborts are reported through ``status``.
    """
    link = channel if isinstance(channel, LinkOutcome) else link_outcome_probabilities(channel)
    if window.duration <= 0:
        raise ValueError(f"pass window duration must be positive, got {window.duration}")
    if session_id is None:
        session_id = f"{window.satellite_id}:{window.ogs_id}:{window.index}"

    ss = np.random.SeedSequence(seed)
    child = [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(4)]
    rng = make_rng(child[0])

    pulses = int(window.duration * profile.pulse_rate)
    base = dict(
        session_id=session_id,
        satellite_id=window.satellite_id,
        ogs_id=window.ogs_id,
        pulses_sent=pulses,
        seed=seed,
        t_start=window.t_start,
        t_end=window.t_end,
    )
    p_click = min(1.0, max(0.0, link.p_signal_click))
    detections = int(rng.binomial(pulses, p_click)) if pulses else 0
    if detections == 0:
        return _aborted(base, SessionStatus.ABORT_EMPTY)

    tx_bits = rng.integers(0, 2, detections, dtype=np.uint8)
    tx_bases = rng.integers(0, 2, detections, dtype=np.uint8)
    rx_bases = rng.integers(0, 2, detections, dtype=np.uint8)
    flips = (rng.random(detections) < link.p_error).astype(np.uint8)
    coin = rng.integers(0, 2, detections, dtype=np.uint8)
    rx_bits = np.where(tx_bases == rx_bases, tx_bits ^ flips, coin)

    keep, key_b = sift(tx_bases, rx_bases, rx_bits)
    key_a = tx_bits[keep]
    sifted = len(keep)
    try:
        qber, remaining = estimate_qber(key_a, key_b, profile.sample_fraction, child[1])
    except InsufficientSample:
        return _aborted(base, SessionStatus.ABORT_EMPTY, detections=detections, sifted_bits=sifted)
    if qber > profile.qber_abort_threshold:
        return _aborted(
            base, SessionStatus.ABORT_QBER, detections=detections, sifted_bits=sifted, measured_qber=qber
        )

    (rec_a, rec_b), leaked = reconcile(key_a[remaining], key_b[remaining], profile.reconciliation_block)
    counts = dict(detections=detections, sifted_bits=sifted, measured_qber=qber)
    if len(rec_a) == 0:
        return _aborted(base, SessionStatus.ABORT_EMPTY, leaked_bits=leaked, **counts)
    if profile.verify_bits:
        leaked += profile.verify_bits
        tag_a = toeplitz_hash(rec_a, profile.verify_bits, child[2])
        tag_b = toeplitz_hash(rec_b, profile.verify_bits, child[2])
        if not np.array_equal(tag_a, tag_b):
            return _aborted(base, SessionStatus.ABORT_VERIFY, leaked_bits=leaked, **counts)

    sat_key = privacy_amplify(KeyMaterial.from_bits(rec_a), qber, leaked, child[3])
    ogs_key = privacy_amplify(KeyMaterial.from_bits(rec_b), qber, leaked, child[3])
    if sat_key.length == 0:
        return _aborted(base, SessionStatus.ABORT_EMPTY, leaked_bits=leaked, **counts)
    return SessionTranscript(
        **base,
        **counts,
        leaked_bits=leaked,
        final_bits=sat_key.length,
        status=SessionStatus.OK,
        key_ogs=ogs_key.with_origin(session_id),
        key_sat=sat_key.with_origin(session_id),
    )
