"""Coverage geometry: power-to-range conversion, the forwarding lens,
and the Poisson law for the number of nodes inside it.

The forwarding lens is the intersection of the sender's coverage disk
with the disk centred on the destination whose radius is the
sender-to-destination distance; only nodes inside it make forward
progress and qualify as relays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .linkmodel import ChannelParams

__all__ = [
    "Lens",
    "DensityContext",
    "GeometryDegeneracy",
    "transmission_range",
    "candidate_relay_area",
    "dsa_half_angle",
    "relay_degree_pmf",
]


class GeometryDegeneracy(ValueError):
    """Raised where the two coverage circles have no intersection chord."""


@dataclass(frozen=True, slots=True)
class DensityContext:
    """Spatial density of deployed nodes, in nodes per square metre."""

    rho: float

    def __post_init__(self) -> None:
        if self.rho <= 0:
            raise ValueError("node density must be positive")


@dataclass(frozen=True, slots=True)
class Lens:
    """A computed forwarding lens: sender range, hop distance, area."""

    r_s: float
    d_sd: float
    area: float

    @classmethod
    def of(cls, r_s: float, d_sd: float) -> "Lens":
        return cls(r_s=r_s, d_sd=d_sd, area=candidate_relay_area(r_s, d_sd))


def transmission_range(p_ts: float, ch: ChannelParams) -> float:
    """Distance at which the mean received power equals the reception threshold.

    Strictly increasing in transmit power: range scales as
    ``p_ts ** (1 / eta)``.
    """
    if p_ts <= 0:
        raise ValueError("transmit power must be positive")
    if ch.p_thresh <= ch.p_n:
        raise ValueError("p_thresh must exceed p_n (channel misconfigured)")
    return (ch.k * ch.alpha_sq * p_ts / (ch.p_thresh - ch.p_n)) ** (1.0 / ch.eta)


def dsa_half_angle(r_s: float, d_sd: float) -> float:
    """Half-angle at the sender subtended by the lens intersection chord.

    Defined only for a genuine partial overlap (0 < r_s < 2 * d_sd).
    """
    if d_sd <= 0:
        raise ValueError("sender-destination distance must be positive")
    if r_s <= 0:
        raise ValueError("transmission range must be positive")
    if r_s >= 2.0 * d_sd:
        raise GeometryDegeneracy(
            "sender range contains the destination disk; no intersection chord"
        )
    return math.acos(r_s / (2.0 * d_sd))


def candidate_relay_area(r_s: float, d_sd: float) -> float:
    """Exact area of the forwarding lens.

    Intersection of circles C(sender, r_s) and C(destination, d_sd)
    whose centres are d_sd apart.  Degenerate cases clamp: zero range
    gives zero area, and r_s >= 2 * d_sd contains the whole destination
    disk (area pi * d_sd**2).
    """
    if r_s < 0:
        raise ValueError("transmission range must be non-negative")
    if d_sd <= 0:
        raise ValueError("sender-destination distance must be positive")
    if r_s == 0:
        return 0.0
    if r_s >= 2.0 * d_sd:
        return math.pi * d_sd**2
    # Two circular segments on either side of the chord.  d1 is the
    # distance from the sender to the chord along the centre line.
    d = d_sd
    d1 = (r_s * r_s) / (2.0 * d)
    d2 = d - d1
    cos1 = min(1.0, max(-1.0, d1 / r_s))
    cos2 = min(1.0, max(-1.0, d2 / d_sd))
    seg1 = r_s * r_s * math.acos(cos1) - d1 * math.sqrt(max(0.0, r_s * r_s - d1 * d1))
    seg2 = d_sd * d_sd * math.acos(cos2) - d2 * math.sqrt(max(0.0, d_sd * d_sd - d2 * d2))
    return seg1 + seg2


def relay_degree_pmf(
    p_ts: float,
    d_sd: float,
    n_rel: int,
    dc: DensityContext,
    ch: ChannelParams,
) -> float:
    """Probability of finding exactly ``n_rel`` nodes in the forwarding lens.

    Poisson with mean ``rho * lens_area``; evaluated in log space so
    large counts (hundreds) do not overflow.
    """
    if n_rel < 0:
        raise ValueError("relay degree must be non-negative")
    lam = dc.rho * candidate_relay_area(transmission_range(p_ts, ch), d_sd)
    if lam == 0.0:
        return 1.0 if n_rel == 0 else 0.0
    if n_rel == 0:
        return math.exp(-lam)
    return math.exp(n_rel * math.log(lam) - lam - math.lgamma(n_rel + 1))
