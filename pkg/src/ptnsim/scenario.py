"""Scenario documents: schema, validation and (de)serialization.

A scenario is a YAML mapping; see README.md for the schema. Validation
collects every violation instead of stopping at the first one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .adversary import AdversaryModel
from .channel import ChannelParams
from .errors import ScenarioError
from .ogscompat import OgsSpec, PointingSensor, SatSpec
from .orbitpass import DEFAULT_SCAN_STEP_S, GroundSite, OrbitSpec
from .qkdsession import ProtocolProfile

GEOMETRY_MODES = ("pass", "fixed")


@dataclass(frozen=True)
class SatelliteConfig:
    id: str
    orbit: OrbitSpec
    spec: SatSpec
    protocol: ProtocolProfile = ProtocolProfile()


@dataclass(frozen=True)
class OgsConfig:
    id: str
    site: GroundSite
    spec: OgsSpec = OgsSpec()


@dataclass(frozen=True)
class ChannelOverride:
    """Channel parameters for sessions matching ``satellite_id``/``ogs_id`` (None matches any)."""

    satellite_id: str | None
    ogs_id: str | None
    params: ChannelParams

    def matches(self, sat_id: str, ogs_id: str) -> bool:
        return self.satellite_id in (None, sat_id) and self.ogs_id in (None, ogs_id)


@dataclass(frozen=True)
class ScenarioConfig:
    satellites: tuple[SatelliteConfig, ...]
    ogs: tuple[OgsConfig, ...]
    pair_under_test: tuple[str, str]
    horizon_s: float
    master_seed: int = 0
    name: str = "scenario"
    channel: ChannelParams = ChannelParams()
    channel_overrides: tuple[ChannelOverride, ...] = ()
    # "pass": range and zenith angle come from each pass's peak elevation; "fixed": from `channel`.
    channel_geometry: str = "pass"
    adversary: AdversaryModel = AdversaryModel()
    scan_step_s: float = DEFAULT_SCAN_STEP_S

    def satellite(self, sat_id: str) -> SatelliteConfig:
        return next(s for s in self.satellites if s.id == sat_id)

    def ground_station(self, ogs_id: str) -> OgsConfig:
        return next(o for o in self.ogs if o.id == ogs_id)

    @property
    def satellite_ids(self) -> list[str]:
        return [s.id for s in self.satellites]

    def channel_for(self, sat_id: str, ogs_id: str) -> ChannelParams:
        params = self.channel
        for ov in self.channel_overrides:
            if ov.matches(sat_id, ogs_id):
                params = ov.params
        return params

    def with_overrides(self, *, master_seed=None, horizon_s=None, compromised=None) -> "ScenarioConfig":
        cfg = self
        if master_seed is not None:
            cfg = replace(cfg, master_seed=int(master_seed))
        if horizon_s is not None:
            cfg = replace(cfg, horizon_s=float(horizon_s))
        if compromised is not None:
            cfg = replace(cfg, adversary=AdversaryModel(frozenset(compromised)))
        return cfg


# --- validation -----------------------------------------------------------


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def add(self, path: str, msg: str):
        self.errors.append(f"{path}: {msg}" if path else msg)

    def mapping(self, value, path) -> dict | None:
        if not isinstance(value, dict):
            self.add(path, f"expected a mapping, got {type(value).__name__}")
            return None
        return value

    def seq(self, value, path) -> list | None:
        if not isinstance(value, (list, tuple)):
            self.add(path, f"expected a list, got {type(value).__name__}")
            return None
        return list(value)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _take(c: _Collector, data: dict, path: str, type_name: str, spec: dict[str, tuple],
          partial: bool = False) -> dict | None:
    """Pull typed fields out of ``data``.

    ``spec`` maps field name to ``(kind, required)`` with kind one of
    "number", "int", "str", "bool", "band", "numbers" or "any". Returns None
    on any problem unless ``partial``, which keeps the fields that passed.
    """
    out = {}
    ok = True
    # Unknown fields are reported but do not block checking the known ones.
    for key in data:
        if key not in spec:
            c.add(path, f"{type_name}: unknown field {key!r}")
    for key, (kind, required) in spec.items():
        where = f"{path}.{key}" if path else key
        if key not in data or data[key] is None:
            if required:
                c.add(where, f"{type_name}.{key} is required")
                ok = False
            continue
        v = data[key]
        good = {
            "number": _is_number(v),
            "int": isinstance(v, int) and not isinstance(v, bool),
            "str": isinstance(v, str) and v != "",
            "bool": isinstance(v, bool),
            "band": isinstance(v, (list, tuple)) and len(v) == 2 and all(_is_number(x) for x in v),
            "numbers": isinstance(v, (list, tuple)) and all(_is_number(x) for x in v),
            "any": True,
        }[kind]
        if not good:
            c.add(where, f"{type_name}.{key} must be {kind}, got {v!r}")
            ok = False
            continue
        if kind == "number":
            v = float(v)
        elif kind == "band":
            v = (float(v[0]), float(v[1]))
        elif kind == "numbers":
            v = tuple(float(x) for x in v)
        out[key] = v
    return out if ok or partial else None


_NUM = ("number", False)
_NUM_REQ = ("number", True)


def _channel(c, data, path, base: ChannelParams) -> ChannelParams | None:
    data = c.mapping(data, path)
    if data is None:
        return None
    got = _take(c, data, path, "ChannelParams", {f.name: _NUM for f in fields(ChannelParams)})
    if got is None:
        return None
    params = replace(base, **got)
    for v in params.violations():
        c.add(path, v)
    return params


def _satellite(c, data, path) -> SatelliteConfig | None:
    data = c.mapping(data, path)
    if data is None:
        return None
    top = _take(c, data, path, "satellite", {"id": ("str", True), "orbit": ("any", True),
                                              "spec": ("any", True), "protocol": ("any", False)})
    if top is None:
        return None
    sid = top["id"]
    result = [None, None, ProtocolProfile()]

    orbit_d = c.mapping(top["orbit"], f"{path}.orbit")
    if orbit_d is not None:
        o = _take(c, orbit_d, f"{path}.orbit", "OrbitSpec", {
            "altitude_km": _NUM_REQ, "inclination_deg": _NUM, "raan_deg": _NUM,
            "initial_phase_deg": _NUM, "epoch": _NUM,
        })
        if o is not None:
            orbit = OrbitSpec(**o)
            errs = orbit.violations()
            for v in errs:
                c.add(f"{path}.orbit", v)
            result[0] = None if errs else orbit

    spec_d = c.mapping(top["spec"], f"{path}.spec")
    if spec_d is not None:
        s = _take(c, spec_d, f"{path}.spec", "SatSpec", {
            "name": ("str", False), "quantum_wavelength_nm": _NUM_REQ, "downlink_beacon_nm": _NUM_REQ,
            "requires_uplink_beacon": ("bool", False), "uplink_beacon_nm": _NUM,
        })
        if s is not None:
            s.setdefault("name", sid)
            spec = SatSpec(**s)
            errs = spec.violations()
            for v in errs:
                c.add(f"{path}.spec", v)
            result[1] = None if errs else spec

    if "protocol" in top:
        prot_d = c.mapping(top["protocol"], f"{path}.protocol")
        if prot_d is not None:
            p = _take(c, prot_d, f"{path}.protocol", "ProtocolProfile", {
                "pulse_rate": _NUM, "qber_abort_threshold": _NUM, "sample_fraction": _NUM,
                "reconciliation_block": ("int", False), "verify_bits": ("int", False),
            })
            if p is None:
                result[2] = None
            else:
                prof = ProtocolProfile(**p)
                errs = prof.violations()
                for v in errs:
                    c.add(f"{path}.protocol", v)
                result[2] = None if errs else prof
    if any(r is None for r in result):
        return None
    return SatelliteConfig(sid, *result)


def _ogs(c, data, path) -> OgsConfig | None:
    data = c.mapping(data, path)
    if data is None:
        return None
    top = _take(c, data, path, "ogs", {"id": ("str", True), "site": ("any", True), "spec": ("any", False)})
    if top is None:
        return None
    site = spec = None
    site_d = c.mapping(top["site"], f"{path}.site")
    if site_d is not None:
        s = _take(c, site_d, f"{path}.site", "GroundSite", {
            "latitude_deg": _NUM_REQ, "longitude_deg": _NUM_REQ, "min_elevation_deg": _NUM,
        })
        if s is not None:
            site = GroundSite(**s)
            errs = site.violations()
            for v in errs:
                c.add(f"{path}.site", v)
            site = None if errs else site
    spec = OgsSpec()
    if "spec" in top:
        spec_d = c.mapping(top["spec"], f"{path}.spec")
        spec = None
        if spec_d is not None:
            s = _take(c, spec_d, f"{path}.spec", "OgsSpec", {
                "quantum_rx_band": ("band", False), "pointing_sensors": ("any", False),
                "uplink_beacons": ("numbers", False),
            })
            if s is not None:
                if "pointing_sensors" in s:
                    sensors = []
                    raw = c.seq(s["pointing_sensors"], f"{path}.spec.pointing_sensors") or []
                    for i, item in enumerate(raw):
                        where = f"{path}.spec.pointing_sensors[{i}]"
                        item = c.mapping(item, where)
                        if item is None:
                            continue
                        d = _take(c, item, where, "PointingSensor", {"name": ("str", True), "band": ("band", True)})
                        if d is not None:
                            sensors.append(PointingSensor(d["name"], d["band"]))
                    s["pointing_sensors"] = tuple(sensors)
                spec = OgsSpec(**s)
                errs = spec.violations()
                for v in errs:
                    c.add(f"{path}.spec", v)
                spec = None if errs else spec
    if site is None or spec is None:
        return None
    return OgsConfig(top["id"], site, spec)


def _raw_ids(items) -> list[str]:
    if not isinstance(items, (list, tuple)):
        return []
    return [d["id"] for d in items if isinstance(d, dict) and isinstance(d.get("id"), str)]


def validate_scenario(document: Any) -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed document, applying defaults.

    Raises ScenarioError listing every violation found.
    """
    c = _Collector()
    doc = c.mapping(document, "")
    if doc is None:
        raise ScenarioError(c.errors)
    top = _take(c, doc, "", "ScenarioConfig", {
        "name": ("str", False), "master_seed": ("int", False), "horizon_s": _NUM_REQ,
        "scan_step_s": _NUM, "pair_under_test": ("any", True), "channel": ("any", False),
        "channel_overrides": ("any", False), "channel_geometry": ("str", False),
        "satellites": ("any", True), "ogs": ("any", True), "adversary": ("any", False),
    }, partial=True)

    sats = []
    for i, item in enumerate(c.seq(top.get("satellites", []), "satellites") or []):
        sats.append(_satellite(c, item, f"satellites[{i}]"))
    if "satellites" in top and not sats:
        c.add("satellites", "ScenarioConfig.satellites needs at least one satellite")
    ogs = []
    for i, item in enumerate(c.seq(top.get("ogs", []), "ogs") or []):
        ogs.append(_ogs(c, item, f"ogs[{i}]"))
    if "ogs" in top and len(ogs) < 1:
        c.add("ogs", "ScenarioConfig.ogs needs at least one ground station")

    # Ids come from the raw entries so an otherwise invalid entry still counts as known.
    sat_ids = _raw_ids(top.get("satellites"))
    ogs_ids = _raw_ids(top.get("ogs"))
    for kind, ids in (("satellite", sat_ids), ("ogs", ogs_ids)):
        dup = sorted({x for x in ids if ids.count(x) > 1})
        if dup:
            c.add(f"{kind} ids", f"duplicate ids: {', '.join(dup)}")

    horizon = top.get("horizon_s")
    if horizon is not None and not horizon > 0:
        c.add("horizon_s", f"ScenarioConfig.horizon_s must be > 0, got {horizon}")
    step = top.get("scan_step_s", DEFAULT_SCAN_STEP_S)
    if not step > 0:
        c.add("scan_step_s", f"ScenarioConfig.scan_step_s must be > 0, got {step}")
    geometry = top.get("channel_geometry", "pass")
    if geometry not in GEOMETRY_MODES:
        c.add("channel_geometry", f"must be one of {GEOMETRY_MODES}, got {geometry!r}")

    pair = None
    if "pair_under_test" in top:
        raw = top["pair_under_test"]
        if not (isinstance(raw, (list, tuple)) and len(raw) == 2 and all(isinstance(x, str) for x in raw)):
            c.add("pair_under_test", f"ScenarioConfig.pair_under_test must be two OGS ids, got {raw!r}")
        else:
            pair = (raw[0], raw[1])
            for x in pair:
                if x not in ogs_ids:
                    c.add("pair_under_test", f"unknown OGS id {x!r}")
            if pair[0] == pair[1]:
                c.add("pair_under_test", "the two OGS ids must differ")

    channel = ChannelParams()
    if "channel" in top:
        channel = _channel(c, top["channel"], "channel", ChannelParams())
    overrides = []
    if "channel_overrides" in top:
        for i, item in enumerate(c.seq(top["channel_overrides"], "channel_overrides") or []):
            where = f"channel_overrides[{i}]"
            item = c.mapping(item, where)
            if item is None:
                continue
            d = _take(c, item, where, "ChannelOverride", {
                "satellite": ("str", False), "ogs": ("str", False), "params": ("any", True),
            })
            if d is None:
                continue
            if d.get("satellite") is not None and d["satellite"] not in sat_ids:
                c.add(where, f"unknown satellite id {d['satellite']!r}")
            if d.get("ogs") is not None and d["ogs"] not in ogs_ids:
                c.add(where, f"unknown OGS id {d['ogs']!r}")
            params = _channel(c, d["params"], f"{where}.params", channel or ChannelParams())
            if params is not None:
                overrides.append(ChannelOverride(d.get("satellite"), d.get("ogs"), params))

    adversary = AdversaryModel()
    if "adversary" in top:
        adv = c.mapping(top["adversary"], "adversary")
        if adv is not None:
            d = _take(c, adv, "adversary", "AdversaryModel", {"compromised": ("any", False)})
            if d is not None:
                comp = d.get("compromised", [])
                if not (isinstance(comp, (list, tuple)) and all(isinstance(x, str) for x in comp)):
                    c.add("adversary.compromised", f"must be a list of satellite ids, got {comp!r}")
                else:
                    for x in comp:
                        if x not in sat_ids:
                            c.add("adversary.compromised", f"unknown satellite id {x!r}")
                    adversary = AdversaryModel(frozenset(comp))

    if c.errors:
        raise ScenarioError(c.errors)
    return ScenarioConfig(
        satellites=tuple(sats),
        ogs=tuple(ogs),
        pair_under_test=pair,
        horizon_s=float(horizon),
        master_seed=top.get("master_seed", 0),
        name=top.get("name", "scenario"),
        channel=channel,
        channel_overrides=tuple(overrides),
        channel_geometry=geometry,
        adversary=adversary,
        scan_step_s=float(step),
    )


# --- serialization --------------------------------------------------------


def serialize(config: ScenarioConfig) -> dict:
    """Plain-data form of ``config``; ``validate_scenario(serialize(c)) == c``."""

    def sat(s: SatelliteConfig):
        spec = asdict(s.spec)
        if spec["uplink_beacon_nm"] is None:
            del spec["uplink_beacon_nm"]
        return {"id": s.id, "orbit": asdict(s.orbit), "spec": spec, "protocol": asdict(s.protocol)}

    def ogs(o: OgsConfig):
        return {
            "id": o.id,
            "site": asdict(o.site),
            "spec": {
                "quantum_rx_band": list(o.spec.quantum_rx_band),
                "pointing_sensors": [{"name": p.name, "band": list(p.band)} for p in o.spec.pointing_sensors],
                "uplink_beacons": list(o.spec.uplink_beacons),
            },
        }

    overrides = []
    for ov in config.channel_overrides:
        d = {"params": asdict(ov.params)}
        if ov.satellite_id is not None:
            d["satellite"] = ov.satellite_id
        if ov.ogs_id is not None:
            d["ogs"] = ov.ogs_id
        overrides.append(d)
    return {
        "name": config.name,
        "master_seed": config.master_seed,
        "horizon_s": config.horizon_s,
        "scan_step_s": config.scan_step_s,
        "pair_under_test": list(config.pair_under_test),
        "channel_geometry": config.channel_geometry,
        "channel": asdict(config.channel),
        "channel_overrides": overrides,
        "satellites": [sat(s) for s in config.satellites],
        "ogs": [ogs(o) for o in config.ogs],
        "adversary": {"compromised": sorted(config.adversary.compromised)},
    }


def dump_scenario(config: ScenarioConfig) -> str:
    return yaml.safe_dump(serialize(config), sort_keys=False)


def shipped_scenarios() -> list[str]:
    root = resources.files("ptnsim") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_scenario_text(ref: str | Path) -> str:
    """Text of a scenario file, or of a shipped scenario given by name."""
    path = Path(ref)
    if path.is_file():
        return path.read_text()
    name = str(ref)
    name = name[:-5] if name.endswith(".yaml") else name
    shipped = resources.files("ptnsim") / "scenarios" / f"{name}.yaml"
    if "/" not in name and shipped.is_file():
        return shipped.read_text()
    raise FileNotFoundError(f"scenario {str(ref)!r} is neither a file nor a shipped scenario")


def load_scenario(ref: str | Path) -> ScenarioConfig:
    text = read_scenario_text(ref)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"{ref}: not valid YAML ({exc})"]) from exc
    return validate_scenario(doc)
