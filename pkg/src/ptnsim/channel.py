"""Toy free-space optical downlink budget.

Geometric loss uses a uniform spot of full-angle divergence; atmospheric
loss uses a Rayleigh optical depth scaling as wavelength^-4 with a
plane-parallel air mass. Absolute accuracy is not a goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import NamedTuple

from .errors import BelowHorizon, InvalidChannel

RAYLEIGH_TAU0 = 0.25
RAYLEIGH_LAMBDA0_NM = 550.0
WAVELENGTH_RANGE_NM = (400.0, 1700.0)


@dataclass(frozen=True)
class ChannelParams:
    wavelength_nm: float = 785.0
    divergence_urad: float = 10.0
    rx_aperture_m: float = 0.7
    range_km: float = 800.0
    zenith_angle_deg: float = 30.0
    detector_efficiency: float = 0.5
    intrinsic_error: float = 0.0
    background_click_prob: float = 0.0

    def violations(self, prefix: str = "ChannelParams") -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                out.append(f"{prefix}.{f.name}: must be a finite number, got {v!r}")
            elif v < 0:
                out.append(f"{prefix}.{f.name}: must be non-negative, got {v}")
        for name in ("detector_efficiency", "intrinsic_error", "background_click_prob"):
            v = getattr(self, name)
            if isinstance(v, (int, float)) and not 0 <= v <= 1:
                out.append(f"{prefix}.{name}: must lie in [0, 1], got {v}")
        lo, hi = WAVELENGTH_RANGE_NM
        if isinstance(self.wavelength_nm, (int, float)) and not lo <= self.wavelength_nm <= hi:
            out.append(f"{prefix}.wavelength_nm: must lie in [{lo:g}, {hi:g}] nm, got {self.wavelength_nm}")
        return out

    def with_geometry(self, range_km: float, zenith_angle_deg: float) -> "ChannelParams":
        return replace(self, range_km=range_km, zenith_angle_deg=zenith_angle_deg)


class LinkOutcome(NamedTuple):
    p_signal_click: float
    p_error: float


def geometric_transmittance(params: ChannelParams) -> float:
    if params.range_km <= 0 or params.divergence_urad <= 0:
        raise InvalidChannel(
            f"range_km={params.range_km} and divergence_urad={params.divergence_urad} must be positive"
        )
    spot_m = params.range_km * 1e3 * params.divergence_urad * 1e-6
    return min(1.0, (params.rx_aperture_m / spot_m) ** 2)


def atmospheric_transmittance(wavelength_nm: float, zenith_angle_deg: float) -> float:
    if zenith_angle_deg >= 90:
        raise BelowHorizon(f"zenith angle {zenith_angle_deg} deg is at or below the horizon")
    tau = RAYLEIGH_TAU0 * (RAYLEIGH_LAMBDA0_NM / wavelength_nm) ** 4
    return math.exp(-tau / math.cos(math.radians(zenith_angle_deg)))


def link_outcome_probabilities(params: ChannelParams) -> LinkOutcome:
    """Return ``(p_signal_click, p_error)`` per pulse.

    ``p_error`` is the error probability of a registered click: signal clicks
    err at ``intrinsic_error``, background clicks are coin flips.
    """
    p_signal = (
        geometric_transmittance(params)
        * atmospheric_transmittance(params.wavelength_nm, params.zenith_angle_deg)
        * params.detector_efficiency
    )
    bg = params.background_click_prob
    total = p_signal + bg
    if total == 0:
        return LinkOutcome(0.0, params.intrinsic_error)
    # Mix by the background share rather than scaling bg, which underflows for subnormal bg.
    share = bg / total
    p_error = params.intrinsic_error + (0.5 - params.intrinsic_error) * share
    return LinkOutcome(p_signal, p_error)
