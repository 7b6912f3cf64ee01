"""Can a ground station serve a satellite?

Three checks: the quantum wavelength falls in the OGS receive band, some
pointing-error sensor covers the downlink beacon, and any uplink beacon the
satellite needs is available within a +/-2 nm filter tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

UPLINK_MATCH_TOLERANCE_NM = 2.0
SI_BAND_NM = (400.0, 1000.0)
INGAAS_BAND_NM = (900.0, 1700.0)
QUANTUM_BAND_NM = (750.0, 850.0)
WAVELENGTH_RANGE_NM = (400.0, 1700.0)


def _in_band(wl: float, band: Sequence[float]) -> bool:
    return band[0] <= wl <= band[1]


@dataclass(frozen=True)
class PointingSensor:
    name: str
    band: tuple[float, float]


@dataclass(frozen=True)
class OgsSpec:
    quantum_rx_band: tuple[float, float] = QUANTUM_BAND_NM
    pointing_sensors: tuple[PointingSensor, ...] = (
        PointingSensor("Si", SI_BAND_NM),
        PointingSensor("InGaAs", INGAAS_BAND_NM),
    )
    uplink_beacons: tuple[float, ...] = ()

    def violations(self, prefix: str = "OgsSpec") -> list[str]:
        out = []
        lo, hi = self.quantum_rx_band
        if not lo < hi:
            out.append(f"{prefix}.quantum_rx_band: low {lo} must be below high {hi}")
        if not self.pointing_sensors:
            out.append(f"{prefix}.pointing_sensors: at least one sensor is required")
        for i, s in enumerate(self.pointing_sensors):
            if not s.band[0] < s.band[1]:
                out.append(f"{prefix}.pointing_sensors[{i}].band: low {s.band[0]} must be below high {s.band[1]}")
        return out


@dataclass(frozen=True)
class SatSpec:
    name: str
    quantum_wavelength_nm: float
    downlink_beacon_nm: float
    requires_uplink_beacon: bool = False
    uplink_beacon_nm: float | None = None

    def violations(self, prefix: str = "SatSpec") -> list[str]:
        out = []
        lo, hi = WAVELENGTH_RANGE_NM
        for name in ("quantum_wavelength_nm", "downlink_beacon_nm", "uplink_beacon_nm"):
            v = getattr(self, name)
            if v is not None and not lo <= v <= hi:
                out.append(f"{prefix}.{name}: must lie in [{lo:g}, {hi:g}] nm, got {v}")
        if self.requires_uplink_beacon and self.uplink_beacon_nm is None:
            out.append(f"{prefix}.uplink_beacon_nm: required when requires_uplink_beacon is true")
        return out


@dataclass(frozen=True)
class CompatibilityReport:
    quantum_ok: bool
    beacon_ok: bool
    uplink_ok: bool
    beacon_sensor: str | None = None

    @property
    def overall(self) -> bool:
        return self.quantum_ok and self.beacon_ok and self.uplink_ok

    def to_dict(self) -> dict:
        return {
            "quantum_ok": self.quantum_ok,
            "beacon_ok": self.beacon_ok,
            "uplink_ok": self.uplink_ok,
            "overall": self.overall,
            "beacon_sensor": self.beacon_sensor,
        }


def check_compatibility(ogs: OgsSpec, sat: SatSpec) -> CompatibilityReport:
    quantum_ok = _in_band(sat.quantum_wavelength_nm, ogs.quantum_rx_band)
    sensor = next((s.name for s in ogs.pointing_sensors if _in_band(sat.downlink_beacon_nm, s.band)), None)
    if not sat.requires_uplink_beacon:
        uplink_ok = True
    else:
        uplink_ok = any(
            abs(wl - sat.uplink_beacon_nm) <= UPLINK_MATCH_TOLERANCE_NM for wl in ogs.uplink_beacons
        )
    return CompatibilityReport(quantum_ok, sensor is not None, uplink_ok, sensor)


@dataclass
class FleetMatrix:
    ogs_ids: list[str]
    sat_ids: list[str]
    reports: dict[tuple[str, str], CompatibilityReport] = field(default_factory=dict)

    def __getitem__(self, key: tuple[str, str]) -> CompatibilityReport:
        return self.reports[key]

    def to_dict(self) -> dict:
        return {
            "ogs": self.ogs_ids,
            "satellites": self.sat_ids,
            "matrix": [
                {"ogs_id": o, "satellite_id": s, **self.reports[o, s].to_dict()}
                for o in self.ogs_ids
                for s in self.sat_ids
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        """Aligned table: rows are OGSs, columns satellites; failing checks are spelled out."""

        def cell(r: CompatibilityReport) -> str:
            if r.overall:
                return "ok"
            failed = [n for n, ok in (("quantum", r.quantum_ok), ("beacon", r.beacon_ok), ("uplink", r.uplink_ok)) if not ok]
            return "FAIL(" + ",".join(failed) + ")"

        rows = [["ogs \\ sat", *self.sat_ids]]
        rows += [[o, *(cell(self.reports[o, s]) for s in self.sat_ids)] for o in self.ogs_ids]
        widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
        return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def fleet_matrix(ogs_list, sat_list) -> FleetMatrix:
    """``ogs_list`` and ``sat_list`` hold ``(id, spec)`` pairs."""
    if not ogs_list or not sat_list:
        raise ValueError("fleet_matrix needs at least one OGS and one satellite")
    m = FleetMatrix([o for o, _ in ogs_list], [s for s, _ in sat_list])
    for oid, ogs in ogs_list:
        for sid, sat in sat_list:
            m.reports[oid, sid] = check_compatibility(ogs, sat)
    return m
