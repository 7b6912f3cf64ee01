"""Circular-orbit visibility over a spherical, rotating Earth.

Frames: the inertial frame coincides with the Earth-fixed frame at t=0
(Greenwich meridian on the x axis); the Earth turns at the sidereal rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGeometry, InvalidOrbit

EARTH_RADIUS_KM = 6371.0
MU_EARTH = 398600.4418  # km^3 / s^2
SIDEREAL_DAY_S = 86164.0905
EARTH_ROTATION_RAD_S = 2 * math.pi / SIDEREAL_DAY_S
# Conventional geostationary altitude, quoted above the 6378 km equatorial radius.
GEO_ALTITUDE_KM = 35786.0

DEFAULT_SCAN_STEP_S = 10.0
REFINE_TOLERANCE_S = 0.1


@dataclass(frozen=True)
class OrbitSpec:
    altitude_km: float
    inclination_deg: float = 0.0
    raan_deg: float = 0.0
    initial_phase_deg: float = 0.0
    epoch: float = 0.0

    def violations(self, prefix: str = "OrbitSpec") -> list[str]:
        out = []
        if not self.altitude_km > 0:
            out.append(f"{prefix}.altitude_km: must be > 0, got {self.altitude_km}")
        if not 0 <= self.inclination_deg <= 180:
            out.append(f"{prefix}.inclination_deg: must lie in [0, 180], got {self.inclination_deg}")
        if not -360 <= self.raan_deg <= 360:
            out.append(f"{prefix}.raan_deg: must lie in [-360, 360], got {self.raan_deg}")
        if not -360 <= self.initial_phase_deg <= 360:
            out.append(f"{prefix}.initial_phase_deg: must lie in [-360, 360], got {self.initial_phase_deg}")
        return out


@dataclass(frozen=True)
class GroundSite:
    latitude_deg: float
    longitude_deg: float
    min_elevation_deg: float = 10.0

    def violations(self, prefix: str = "GroundSite") -> list[str]:
        out = []
        if not abs(self.latitude_deg) <= 90:
            out.append(f"{prefix}.latitude_deg: |lat| must be <= 90, got {self.latitude_deg}")
        if not abs(self.longitude_deg) <= 180:
            out.append(f"{prefix}.longitude_deg: |lon| must be <= 180, got {self.longitude_deg}")
        if not 0 <= self.min_elevation_deg < 90:
            out.append(f"{prefix}.min_elevation_deg: must lie in [0, 90), got {self.min_elevation_deg}")
        return out

    def position(self) -> np.ndarray:
        lat, lon = math.radians(self.latitude_deg), math.radians(self.longitude_deg)
        return EARTH_RADIUS_KM * np.array(
            [math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)]
        )


@dataclass(frozen=True)
class PassWindow:
    satellite_id: str
    ogs_id: str
    t_start: float
    t_end: float
    max_elevation_deg: float
    index: int = 0
    altitude_km: float = 0.0

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def to_dict(self) -> dict:
        return {
            "satellite_id": self.satellite_id,
            "ogs_id": self.ogs_id,
            "index": self.index,
            "t_start": round(self.t_start, 3),
            "t_end": round(self.t_end, 3),
            "max_elevation_deg": round(self.max_elevation_deg, 4),
        }


def orbital_period(altitude_km: float) -> float:
    if not altitude_km > 0:
        raise InvalidOrbit(f"altitude_km must be positive, got {altitude_km}")
    return 2 * math.pi * math.sqrt((EARTH_RADIUS_KM + altitude_km) ** 3 / MU_EARTH)


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def propagate_inertial(orbit: OrbitSpec, t) -> np.ndarray:
    """Inertial position(s) in km; ``t`` may be a scalar or 1-D array."""
    t = np.asarray(t, dtype=float)
    r = EARTH_RADIUS_KM + orbit.altitude_km
    n = 2 * math.pi / orbital_period(orbit.altitude_km)
    u = math.radians(orbit.initial_phase_deg) + n * (t - orbit.epoch)
    in_plane = np.stack([r * np.cos(u), r * np.sin(u), np.zeros_like(u)], axis=-1)
    rot = _rot_z(math.radians(orbit.raan_deg)) @ _rot_x(math.radians(orbit.inclination_deg))
    return in_plane @ rot.T


def propagate(orbit: OrbitSpec, t) -> np.ndarray:
    """Earth-fixed position(s) in km."""
    t = np.asarray(t, dtype=float)
    eci = propagate_inertial(orbit, t)
    theta = EARTH_ROTATION_RAD_S * t
    c, s = np.cos(theta), np.sin(theta)
    x, y, z = eci[..., 0], eci[..., 1], eci[..., 2]
    return np.stack([c * x + s * y, -s * x + c * y, z], axis=-1)


def elevation(site: GroundSite, sat_pos) -> np.ndarray | float:
    """Elevation in degrees of Earth-fixed ``sat_pos`` (one point or an (N, 3) array)."""
    p = np.asarray(sat_pos, dtype=float)
    g = site.position()
    up = g / np.linalg.norm(g)
    rho = p - g
    sin_el = (rho @ up) / np.linalg.norm(rho, axis=-1)
    el = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
    return float(el) if el.ndim == 0 else el


def _elev_at(orbit, site, t):
    return elevation(site, propagate(orbit, t))


def _bisect(orbit, site, lo, hi, rising: bool) -> float:
    mask = site.min_elevation_deg
    while hi - lo > REFINE_TOLERANCE_S:
        mid = 0.5 * (lo + hi)
        above = _elev_at(orbit, site, mid) >= mask
        if above == rising:
            hi = mid
        else:
            lo = mid
    # Return the visible side of the bracket.
    return hi if rising else lo


def _golden_max(orbit, site, a, b, tol=0.05) -> float:
    inv = (math.sqrt(5) - 1) / 2
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = _elev_at(orbit, site, c), _elev_at(orbit, site, d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = _elev_at(orbit, site, c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = _elev_at(orbit, site, d)
    return max(fc, fd, _elev_at(orbit, site, a), _elev_at(orbit, site, b))


def find_passes(
    orbit: OrbitSpec,
    site: GroundSite,
    t0: float,
    t1: float,
    step: float = DEFAULT_SCAN_STEP_S,
    satellite_id: str = "",
    ogs_id: str = "",
) -> list[PassWindow]:
    """Maximal windows in [t0, t1] with elevation at or above the site mask.

    A coarse scan at ``step`` seconds brackets each crossing, then bisection
    narrows it to 0.1 s. Passes shorter than ``step`` can be missed.
    """
    if not t0 < t1:
        raise ValueError(f"t0={t0} must precede t1={t1}")
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    ts = np.arange(t0, t1, step)
    if ts[-1] < t1:
        ts = np.append(ts, t1)
    visible = _elev_at(orbit, site, ts) >= site.min_elevation_deg

    windows = []
    i, n = 0, len(ts)
    while i < n:
        if not visible[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and visible[j + 1]:
            j += 1
        start = t0 if i == 0 else _bisect(orbit, site, ts[i - 1], ts[i], rising=True)
        end = t1 if j == n - 1 else _bisect(orbit, site, ts[j], ts[j + 1], rising=False)
        if end > start:
            max_el = _golden_max(orbit, site, start, end)
            windows.append(
                PassWindow(satellite_id, ogs_id, float(start), float(end), float(max_el),
                           index=len(windows), altitude_km=orbit.altitude_km)
            )
        i = j + 1
    return windows


def slant_range_km(altitude_km: float, elevation_deg: float) -> float:
    r = EARTH_RADIUS_KM + altitude_km
    e = math.radians(elevation_deg)
    return math.sqrt(r**2 - (EARTH_RADIUS_KM * math.cos(e)) ** 2) - EARTH_RADIUS_KM * math.sin(e)


def max_simultaneous_separation(altitude_km: float, min_elevation_deg: float) -> float:
    """Largest ground separation (km) of two sites that can both see one satellite.

    Twice the Earth-central angle between the sub-satellite point and a site
    seeing the satellite exactly at the elevation mask.
    """
    if not altitude_km > 0 or min_elevation_deg < 0:
        raise InvalidGeometry(
            f"altitude_km={altitude_km} must be positive and min_elevation_deg={min_elevation_deg} non-negative"
        )
    eps = math.radians(min_elevation_deg)
    arg = EARTH_RADIUS_KM / (EARTH_RADIUS_KM + altitude_km) * math.cos(eps)
    if not -1 <= arg <= 1:
        raise InvalidGeometry(f"arccos argument {arg} out of range")
    psi = max(math.acos(arg) - eps, 0.0)
    return 2 * EARTH_RADIUS_KM * psi
