"""Seeded synthetic optimization contexts for debugging and validation.

Builds a single-sender scenario: candidates scattered inside the
maximum-power forwarding lens, a few static interferers nearby, link
estimates evaluated at every grid power level.  Deterministic per seed.
"""

from __future__ import annotations

import numpy as np

from .energymodel import RadioParams
from .geometry import transmission_range
from .linkmodel import ChannelParams, Interferer, pdr_sn
from .pareto import DecisionGrid, OptimizationContext

__all__ = ["make_context"]


def make_context(
    seed: int,
    *,
    d_sd: float = 300.0,
    rho: float = 1e-4,
    n_candidates: int = 20,
    n_interferers: int = 3,
    max_degree: int | None = None,
    ch: ChannelParams | None = None,
    rp: RadioParams | None = None,
) -> OptimizationContext:
    """A reproducible sender-to-destination optimization scenario."""
    ch = ch or ChannelParams()
    rp = rp or RadioParams()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    r_max = transmission_range(rp.p_max, ch)
    dest = np.array([d_sd, 0.0])

    # Rejection-sample candidate positions inside the max-power lens.
    cands = []
    while len(cands) < n_candidates:
        pt = (rng.random(2) * 2.0 - 1.0) * r_max
        if np.hypot(*pt) <= r_max and np.hypot(*(pt - dest)) < d_sd:
            cands.append(pt)
    cands = np.array(cands)

    interferers = []
    for _ in range(n_interferers):
        pos = (rng.random(2) * 2.0 - 1.0) * (2.0 * r_max)
        power = rp.p_min + float(rng.random()) * (rp.p_max - rp.p_min)
        interferers.append((pos, power))

    grid = DecisionGrid.from_radio(rp, max_degree=max_degree or n_candidates)
    links: dict[float, tuple[float, ...]] = {}
    for level in grid.power_levels:
        r_level = transmission_range(level, ch)
        probs = []
        for pt in cands:
            d_sc = float(np.hypot(*pt))
            if d_sc > r_level:
                continue
            itf = [
                Interferer(power=p, distance_to_receiver=float(np.hypot(*(pos - pt))))
                for pos, p in interferers
            ]
            p_i = pdr_sn(level, d_sc, itf, ch)
            if p_i > 0.0:
                probs.append(p_i)
        links[level] = tuple(probs)

    return OptimizationContext(
        d_sd=d_sd, rho=rho, neighbor_links=links, ch=ch, rp=rp, grid=grid
    )
