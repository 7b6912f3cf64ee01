"""Discrete-event orchestration of the parallel trusted-node relay.

Each satellite runs a QKD session on every pass over either ground station
of the pair under test, keeps the first successful key per station, and
broadcasts their parity once it holds both. Each station derives its final
key after every satellite has either broadcast or run out of passes.

Session seeds hash (master_seed, satellite, station, window index), so the
key material does not depend on the order in which passes happen.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from .adversary import Verdict, security_verdict
from .channel import ChannelParams
from .keycore import KeyMaterial, ParityRecord, compute_parity, derive_matched_final_key, recover_final_peer_key
from .ogscompat import check_compatibility
from .orbitpass import PassWindow, find_passes, slant_range_km
from .qkdsession import PRNG_NAME, SessionTranscript, run_session
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)


class EventKind(int, Enum):
    # Value is the tie-break rank for events at the same instant.
    PASS_START = 0
    SESSION_DONE = 1
    PARITY_BROADCAST = 2
    DERIVE = 3


@dataclass(frozen=True, order=True)
class SimEvent:
    time_s: float
    kind: EventKind
    node_id: str
    tiebreak: tuple = ()
    payload: object = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {"time_s": round(self.time_s, 3), "kind": self.kind.name, "node_id": self.node_id}


class Role(str, Enum):
    OGS = "OGS"
    SATELLITE = "SATELLITE"


@dataclass
class NodeState:
    node_id: str
    role: Role
    key_pool: dict[str, list[KeyMaterial]] = field(default_factory=dict)
    received_parities: list[ParityRecord] = field(default_factory=list)
    derived_keys: list[KeyMaterial] = field(default_factory=list)

    def store(self, peer_id: str, key: KeyMaterial) -> None:
        self.key_pool.setdefault(peer_id, []).append(key)


@dataclass
class Schedule:
    events: list[SimEvent]
    windows: list[PassWindow]
    status: str = "OK"
    warnings: list[str] = field(default_factory=list)
    incompatible: frozenset = frozenset()

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)


def session_seed(master_seed: int, satellite_id: str, ogs_id: str, window_index: int) -> int:
    digest = hashlib.sha256(f"{master_seed}|{satellite_id}|{ogs_id}|{window_index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _pass_event(w: PassWindow) -> SimEvent:
    return SimEvent(w.t_start, EventKind.PASS_START, w.satellite_id, (w.ogs_id, w.index), w)


def build_schedule(config: ScenarioConfig) -> Schedule:
    """One PASS_START per pass window of a compatible (satellite, station) pair."""
    windows: list[PassWindow] = []
    warnings: list[str] = []
    incompatible = set()
    for sat in config.satellites:
        for ogs_id in config.pair_under_test:
            ogs = config.ground_station(ogs_id)
            report = check_compatibility(ogs.spec, sat.spec)
            if not report.overall:
                warnings.append(f"{sat.id} incompatible with {ogs_id}: {report.to_dict()}")
                incompatible.add((sat.id, ogs_id))
                continue
            windows += find_passes(sat.orbit, ogs.site, 0.0, config.horizon_s, config.scan_step_s,
                                   satellite_id=sat.id, ogs_id=ogs_id)
    events = sorted(_pass_event(w) for w in windows)
    status = "OK"
    if not events:
        status = "EMPTY_SCHEDULE"
        warnings.append("no pass of any compatible satellite within the horizon")
    for w in warnings:
        log.warning(w)
    return Schedule(events, sorted(windows, key=lambda w: (w.t_start, w.satellite_id, w.ogs_id)),
                    status, warnings, frozenset(incompatible))


def reorder_schedule(schedule: Schedule, first_ogs: str) -> Schedule:
    """Move every satellite's passes over ``first_ogs`` ahead of its other passes.

    Each satellite keeps its original set of start times; windows keep their
    duration, peak elevation and index, and passes over one station keep
    their relative order.
    """
    by_sat: dict[str, list[PassWindow]] = {}
    for w in schedule.windows:
        by_sat.setdefault(w.satellite_id, []).append(w)
    moved = []
    for sat_id, ws in by_sat.items():
        slots = sorted(w.t_start for w in ws)
        ordered = sorted(ws, key=lambda w: (w.ogs_id != first_ogs, w.t_start))
        for t, w in zip(slots, ordered):
            moved.append(replace(w, t_start=t, t_end=t + w.duration))
    events = sorted(_pass_event(w) for w in moved)
    return Schedule(events, sorted(moved, key=lambda w: (w.t_start, w.satellite_id, w.ogs_id)),
                    schedule.status, list(schedule.warnings), schedule.incompatible)


@dataclass
class SimulationReport:
    scenario: str
    master_seed: int
    status: str
    pair: tuple[str, str]
    participating: list[str]
    dropped: dict[str, str]
    final_keys: dict[str, KeyMaterial]
    recovered_keys: dict[str, KeyMaterial]
    keys_agree: bool
    time_to_final_key: float | None
    transcripts: list[SessionTranscript]
    parities: list[ParityRecord]
    verdict: Verdict
    compromised: list[str]
    events: list[SimEvent]
    nodes: dict[str, NodeState]
    schedule_status: str = "OK"

    @property
    def n_effective(self) -> int:
        return len(self.participating)

    @property
    def final_key_bits(self) -> int:
        keys = list(self.final_keys.values())
        return keys[0].length if keys else 0

    @property
    def total_session_bits(self) -> int:
        return sum(t.final_bits for t in self.transcripts if t.ok)

    def to_dict(self) -> dict:
        a, b = self.pair
        return {
            "scenario": self.scenario,
            "master_seed": self.master_seed,
            "prng": PRNG_NAME,
            "status": self.status,
            "schedule_status": self.schedule_status,
            "pair_under_test": [a, b],
            "n_effective": self.n_effective,
            "participating_satellites": self.participating,
            "dropped_satellites": dict(sorted(self.dropped.items())),
            "final_key_bits": self.final_key_bits,
            "total_session_bits": self.total_session_bits,
            "final_keys": {k: v.to_hex() for k, v in sorted(self.final_keys.items())},
            "recovered_peer_keys": {k: v.to_hex() for k, v in sorted(self.recovered_keys.items())},
            "keys_agree": self.keys_agree,
            "time_to_final_key_s": None if self.time_to_final_key is None else round(self.time_to_final_key, 3),
            "adversary": {"compromised": self.compromised, "verdict": self.verdict.value},
            "parities": [p.to_dict() for p in self.parities],
            "sessions": [t.to_dict() for t in self.transcripts],
            "events": [e.to_dict() for e in self.events],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def sessions_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["session_id", "satellite_id", "ogs_id", "t_start", "sifted_bits", "qber", "final_bits", "status"])
        for t in self.transcripts:
            w.writerow([t.session_id, t.satellite_id, t.ogs_id, f"{t.t_start:.3f}", t.sifted_bits,
                        f"{t.measured_qber:.6f}", t.final_bits, t.status.value])
        return buf.getvalue()

    def key_store_rows(self) -> list[dict]:
        rows = []
        for node_id in sorted(self.nodes):
            for peer_id, keys in sorted(self.nodes[node_id].key_pool.items()):
                for k in keys:
                    rows.append({"node_id": node_id, "peer_id": peer_id, "session_id": k.origin,
                                 "length_bits": k.length, "key_hex": k.to_hex()})
        return rows


def _session_channel(config: ScenarioConfig, w: PassWindow) -> ChannelParams:
    params = config.channel_for(w.satellite_id, w.ogs_id)
    if config.channel_geometry == "pass":
        el = w.max_elevation_deg
        params = params.with_geometry(slant_range_km(w.altitude_km, el), 90.0 - el)
    return params


class _Run:
    def __init__(self, config: ScenarioConfig, schedule: Schedule):
        self.config = config
        self.incompatible = schedule.incompatible
        self.a, self.b = config.pair_under_test
        self.queue: list[SimEvent] = list(schedule.events)
        heapq.heapify(self.queue)
        self.log: list[SimEvent] = []
        self.nodes = {s: NodeState(s, Role.SATELLITE) for s in config.satellite_ids}
        self.nodes.update({o: NodeState(o, Role.OGS) for o in (self.a, self.b)})
        self.pending = {(s, o): 0 for s in config.satellite_ids for o in (self.a, self.b)}
        for e in schedule.events:
            self.pending[e.node_id, e.tiebreak[0]] += 1
        # First successful transcript per (satellite, ogs).
        self.chosen: dict[tuple[str, str], SessionTranscript] = {}
        self.transcripts: list[SessionTranscript] = []
        self.parities: dict[str, ParityRecord] = {}
        self.dropped: dict[str, str] = {}
        self.derive_time: float | None = None
        self.final: dict[str, KeyMaterial] = {}
        self.recovered: dict[str, KeyMaterial] = {}

    def push(self, ev: SimEvent):
        heapq.heappush(self.queue, ev)

    def run(self):
        self._check_resolution(0.0)
        while self.queue:
            ev = heapq.heappop(self.queue)
            self.log.append(ev)
            getattr(self, f"_on_{ev.kind.name.lower()}")(ev)

    def _on_pass_start(self, ev: SimEvent):
        w: PassWindow = ev.payload
        profile = self.config.satellite(w.satellite_id).protocol
        seed = session_seed(self.config.master_seed, w.satellite_id, w.ogs_id, w.index)
        t = run_session(profile, _session_channel(self.config, w), w, seed)
        self.push(SimEvent(w.t_end, EventKind.SESSION_DONE, w.satellite_id, (w.ogs_id, w.index), t))

    def _on_session_done(self, ev: SimEvent):
        t: SessionTranscript = ev.payload
        self.transcripts.append(t)
        self.pending[t.satellite_id, t.ogs_id] -= 1
        if t.ok:
            self.nodes[t.satellite_id].store(t.ogs_id, t.key_sat)
            self.nodes[t.ogs_id].store(t.satellite_id, t.key_ogs)
            self.chosen.setdefault((t.satellite_id, t.ogs_id), t)
        sat = t.satellite_id
        ta, tb = self.chosen.get((sat, self.a)), self.chosen.get((sat, self.b))
        if ta and tb and sat not in self.parities:
            rec = compute_parity(ta.key_sat, tb.key_sat, satellite_id=sat, ogs_a_id=self.a, ogs_b_id=self.b,
                                 session_a_id=ta.session_id, session_b_id=tb.session_id)
            self.parities[sat] = rec
            self.push(SimEvent(ev.time_s, EventKind.PARITY_BROADCAST, sat, (), rec))
        self._check_resolution(ev.time_s)

    def _on_parity_broadcast(self, ev: SimEvent):
        for o in (self.a, self.b):
            self.nodes[o].received_parities.append(ev.payload)
        self._check_resolution(ev.time_s)

    def _check_resolution(self, now: float):
        if self.derive_time is not None:
            return
        for sat in self.config.satellite_ids:
            if sat in self.parities or sat in self.dropped:
                continue
            for o in (self.a, self.b):
                if (sat, o) not in self.chosen and self.pending[sat, o] == 0:
                    had = any(t.satellite_id == sat and t.ogs_id == o for t in self.transcripts)
                    if (sat, o) in self.incompatible:
                        self.dropped[sat] = f"incompatible with {o}"
                    elif had:
                        self.dropped[sat] = f"no successful session with {o}"
                    else:
                        self.dropped[sat] = f"no pass over {o}"
                    break
        resolved = all(s in self.dropped or s in self.parities for s in self.config.satellite_ids)
        broadcast_done = all(
            any(p is self.parities[s] for p in self.nodes[self.a].received_parities) for s in self.parities
        )
        if resolved and broadcast_done:
            self.derive_time = now
            if self.parities:
                for o in (self.a, self.b):
                    self.push(SimEvent(now, EventKind.DERIVE, o))

    def _on_derive(self, ev: SimEvent):
        o = ev.node_id
        sats = sorted(self.parities)
        own = [self.chosen[s, o].key_ogs for s in sats]
        recs = [self.parities[s] for s in sats]
        final = derive_matched_final_key(own, recs, sats)
        self.final[o] = final
        self.recovered[o] = recover_final_peer_key(own, recs, sats)
        self.nodes[o].derived_keys.append(final)


def run(config: ScenarioConfig, schedule: Schedule | None = None) -> SimulationReport:
    """Simulate the scenario; pass ``schedule`` to replay a modified pass plan."""
    if schedule is None:
        schedule = build_schedule(config)
    r = _Run(config, schedule)
    r.run()
    a, b = r.a, r.b
    participating = sorted(r.parities)
    if not participating:
        status, agree = "NO_KEY", False
    else:
        agree = r.recovered[a] == r.final[b] and r.recovered[b] == r.final[a]
        status = "OK" if agree else "KEY_MISMATCH"
    verdict = security_verdict(config.adversary, participating)
    return SimulationReport(
        scenario=config.name,
        master_seed=config.master_seed,
        status=status,
        pair=(a, b),
        participating=participating,
        dropped=r.dropped,
        final_keys=r.final,
        recovered_keys=r.recovered,
        keys_agree=agree,
        time_to_final_key=r.derive_time if participating else None,
        transcripts=r.transcripts,
        parities=[r.parities[s] for s in participating],
        verdict=verdict,
        compromised=sorted(config.adversary.compromised),
        events=r.log,
        nodes=r.nodes,
        schedule_status=schedule.status,
    )


@dataclass(frozen=True)
class MetricRow:
    name: str
    value: object

    def __iter__(self):
        return iter((self.name, self.value))


def report_metrics(report: SimulationReport) -> list[MetricRow]:
    rows = [
        MetricRow("status", report.status),
        MetricRow("sessions_attempted", len(report.transcripts)),
        MetricRow("sessions_succeeded", sum(t.ok for t in report.transcripts)),
        MetricRow("sifted_bits_total", sum(t.sifted_bits for t in report.transcripts)),
        MetricRow("session_final_bits_total", report.total_session_bits),
        MetricRow("final_key_bits", report.final_key_bits),
        MetricRow("time_to_final_key_s", report.time_to_final_key),
        MetricRow("time_to_final_key_flag", "absent" if report.time_to_final_key is None else "ok"),
        MetricRow("n_effective", report.n_effective),
        MetricRow("n_configured", report.n_effective + len(report.dropped)),
        MetricRow("adversary_verdict", report.verdict.value),
    ]
    for t in report.transcripts:
        rows.append(MetricRow(f"session[{t.session_id}].sifted_bits", t.sifted_bits))
        rows.append(MetricRow(f"session[{t.session_id}].final_bits", t.final_bits))
    return rows


def metrics_text(rows: Sequence[MetricRow]) -> str:
    width = max(len(r.name) for r in rows)
    return "".join(f"{r.name.ljust(width)}  {'-' if r.value is None else r.value}\n" for r in rows)


def _replicate_one(args):
    config, seed = args
    return run(replace(config, master_seed=seed)).to_dict()


def run_replications(config: ScenarioConfig, seeds: Iterable[int], max_workers: int | None = None) -> list[dict]:
    """Independent runs over ``seeds``, in parallel processes; results follow ``seeds`` order."""
    jobs = [(config, s) for s in seeds]
    if max_workers == 1:
        return [_replicate_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_replicate_one, jobs))
