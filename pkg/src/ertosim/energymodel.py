"""Expected one-hop energy cost between a sender and its candidate set.

The cost couples the per-attempt radio spend (reception draw for each
listening candidate plus the transmit draw) with the retransmission
expectation implied by the candidate-set delivery probability.  The
squared delivery term in the denominator is intentional and drives the
optimizer's ordering; the simulator accounts empirical energy
independently, charging actual attempts once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .linkmodel import pdr_sc

__all__ = [
    "RadioParams",
    "NoReachableCandidate",
    "default_radio_params",
    "expected_attempts",
    "expected_energy_cost",
]


class NoReachableCandidate(ValueError):
    """Raised when every candidate has zero delivery probability."""


@dataclass(frozen=True, slots=True)
class RadioParams:
    """Radio power grid and energy accounting constants.

    ``e_r`` is the receive power draw, ``xi`` scales the transmit power
    into a power draw, and ``delta`` (packet airtime) is always
    ``packet_bits / bitrate``.
    """

    p_min: float = 0.1
    p_max: float = 0.8
    power_step: float = 0.01
    e_r: float = 0.05
    xi: float = 1.0
    packet_bits: int = 1024
    bitrate: float = 15000.0

    def __post_init__(self) -> None:
        if not 0 < self.p_min <= self.p_max:
            raise ValueError("power bounds must satisfy 0 < p_min <= p_max")
        if self.power_step <= 0:
            raise ValueError("power_step must be positive")
        if self.e_r <= 0:
            raise ValueError("e_r must be positive")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.packet_bits <= 0 or self.bitrate <= 0:
            raise ValueError("packet_bits and bitrate must be positive")

    @property
    def delta(self) -> float:
        """Packet airtime in seconds."""
        return self.packet_bits / self.bitrate


def default_radio_params() -> RadioParams:
    return RadioParams()


def expected_attempts(p_list: Sequence[float]) -> float:
    """Mean number of broadcasts until at least one candidate receives.

    Geometric expectation 1 / pdr_sc; always at least 1.
    """
    pdr = pdr_sc(p_list)
    if pdr == 0.0:
        raise NoReachableCandidate("candidate set has zero delivery probability")
    return 1.0 / pdr


def expected_energy_cost(
    p_ts: float,
    n_rel: int,
    p_list: Sequence[float],
    rp: RadioParams,
) -> float:
    """Expected one-hop energy cost for a sender and ``n_rel`` candidates."""
    if p_ts <= 0:
        raise ValueError("transmit power must be positive")
    if n_rel != len(p_list):
        raise ValueError("n_rel must match the candidate probability list length")
    pdr = pdr_sc(p_list)
    if pdr == 0.0:
        raise NoReachableCandidate("candidate set has zero delivery probability")
    return (n_rel * rp.e_r + rp.xi * p_ts) * rp.delta / (pdr * pdr)
