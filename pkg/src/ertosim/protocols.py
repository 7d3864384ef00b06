"""Forwarding strategies: power-adaptive opportunistic routing and the
fixed-power / energy-argmin baselines, all behind one decision surface.

A strategy looks at an oracle network view and answers, for one queued
packet, which transmit power to use and which prioritized candidate set
to broadcast to.  Candidates are always the alive in-range neighbors
strictly closer to the destination, ordered by ascending ETX; the
strategies differ in how they pick the power and in whether their link
estimates account for interference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .energymodel import RadioParams
from .geometry import transmission_range
from .linkmodel import ChannelParams, q_function, reception_prob, sinr_success_prob_arrays
from .pareto import (
    DecisionGrid,
    EAParams,
    NoFeasibleTopology,
    OptimizationContext,
    ParetoSolution,
    adjust_power,
    optimal_feasible_set,
    pareto_front_evolutionary,
    pareto_front_exhaustive,
)

__all__ = [
    "RoutingVoid",
    "Candidate",
    "CandidateSet",
    "RoutingDecision",
    "NetView",
    "candidate_set",
    "opportunistic_relay",
    "build_optimization_context",
    "erto_decide",
    "exor_decide",
    "tcor_decide",
    "eeor_decide",
    "ErtoStrategy",
    "ExorStrategy",
    "TcorStrategy",
    "EeorStrategy",
    "make_strategy",
    "STRATEGY_NAMES",
]

STRATEGY_NAMES = ("erto", "exor", "tcor", "eeor")


class _LinkTable:
    """Per-link reception-and-noise rows over the power grid.

    Positions never move, so the threshold and noise terms of a
    (sender, candidate) pair are fixed for a whole run; only the
    interference product has to be recomputed when estimates shift.
    """

    def __init__(self) -> None:
        self._rows: dict[tuple[int, int], np.ndarray] = {}

    def reception_noise(
        self, sender: int, cand: int, d_sc: float, levels: np.ndarray, ch: ChannelParams
    ) -> np.ndarray:
        row = self._rows.get((sender, cand))
        if row is None:
            q_args = (ch.p_thresh * d_sc**ch.eta) / (levels * ch.k * ch.alpha_sq) / ch.sigma
            recep = np.array([q_function(arg) for arg in q_args])
            noise = np.exp(-ch.beta * ch.p_n * d_sc**ch.eta / (levels * ch.k))
            row = recep * noise
            self._rows[(sender, cand)] = row
        return row


class _LocalScope:
    """Cache keys that only change when a decision's inputs can change.

    A death on the far side of the network cannot alter a sender's
    candidate geometry, so keys carry the count of alive nodes within
    twice the maximum range of the sender (deaths are monotone, making
    the count a safe staleness token) plus the destination's aliveness.
    """

    def __init__(self) -> None:
        self._masks: dict[int, np.ndarray] = {}

    def key(self, sender: int, destination: int, view: "NetView") -> tuple:
        mask = self._masks.get(sender)
        if mask is None:
            ch = view.ch
            reach = 2.0 * (
                ch.k * ch.alpha_sq * view.rp.p_max / (ch.p_thresh - ch.p_n)
            ) ** (1.0 / ch.eta)
            mask = view.dist[sender] <= reach
            self._masks[sender] = mask
        local_alive = int(np.count_nonzero(view.alive & mask))
        return (local_alive, bool(view.alive[destination]))


class RoutingVoid(RuntimeError):
    """No usable relay exists towards the destination; the packet drops."""


class Candidate(NamedTuple):
    node: int
    p_i: float
    etx: float


@dataclass(frozen=True, slots=True)
class CandidateSet:
    """Prioritized relay set of one sender towards one destination."""

    sender: int
    members: tuple[Candidate, ...]

    def __post_init__(self) -> None:
        etxs = [m.etx for m in self.members]
        if any(b < a for a, b in zip(etxs, etxs[1:])):
            raise ValueError("members must be ordered by ascending etx")

    def ids(self) -> tuple[int, ...]:
        return tuple(m.node for m in self.members)


@dataclass(frozen=True, slots=True)
class RoutingDecision:
    """One hop's chosen transmit power and prioritized candidates."""

    tx_power: float
    candidate_set: CandidateSet
    adjusted: bool
    fallback: bool = False


@dataclass
class NetView:
    """Oracle view of the network state handed to strategies.

    ``epoch`` advances whenever the interference environment changes
    (a death or a traffic source changing power); ``alive_epoch``
    advances on deaths only.  Strategies key their caches on these.
    """

    positions: np.ndarray
    alive: np.ndarray
    tx_power: np.ndarray
    dist: np.ndarray
    sources: np.ndarray
    ch: ChannelParams
    rp: RadioParams
    rho: float
    epoch: int = 0
    alive_epoch: int = 0
    ambient: float | None = None
    duty: float = 0.0

    def ambient_power(self) -> float:
        """Ambient interferer power level (published by the engine with
        hysteresis; computed from the current mean when standalone)."""
        if self.ambient is not None:
            return self.ambient
        alive_powers = self.tx_power[self.alive]
        if len(alive_powers) == 0:
            return self.rp.p_min
        return round(round(float(np.mean(alive_powers)) / 0.05) * 0.05, 9)

    def duty_cycle(self) -> float:
        """Published fraction of nodes transmitting per slot."""
        return self.duty

    def estimated_interferers(self, receiver: int, sender: int) -> tuple[np.ndarray, np.ndarray]:
        """Powers and distances of the nodes expected to interfere at a receiver.

        Every alive node whose coverage reaches the receiver counts as a
        potential interferer, taken at the network's ambient power level;
        their duty cycle is applied separately.  The sender and the
        receiver itself are excluded.
        """
        amb = self.ambient_power()
        ch = self.ch
        r_amb = (ch.k * ch.alpha_sq * amb / (ch.p_thresh - ch.p_n)) ** (1.0 / ch.eta)
        dists = self.dist[:, receiver]
        mask = self.alive & (dists <= r_amb)
        mask[sender] = False
        mask[receiver] = False
        d = dists[mask]
        return np.full(len(d), amb), d


_EMPTY = np.empty(0, dtype=float)
_MISS = object()


def _estimated_link_prob(
    view: NetView, sender: int, cand: int, dist: float, p_ts: float, *, interference_aware: bool
) -> float:
    """Estimated delivery probability of one link at a given power.

    Interference-aware estimates marginalize each potential interferer
    over the network's measured duty cycle; baselines use the bare
    reception-threshold term only.
    """
    base = reception_prob(p_ts, dist, view.ch)
    if not interference_aware:
        return base
    ch = view.ch
    noise = math.exp(-ch.beta * ch.p_n * dist**ch.eta / (p_ts * ch.k))
    duty = view.duty_cycle()
    powers, dists = view.estimated_interferers(cand, sender)
    if len(powers) == 0 or duty == 0.0:
        return base * noise
    t = ch.beta * powers / (ch.g * p_ts * (dists / dist) ** ch.eta)
    factors = (1.0 + (1.0 - duty) * t) / (1.0 + t)
    return base * noise * float(np.prod(factors))


def candidate_set(
    sender: int,
    destination: int,
    view: NetView,
    *,
    tx_power: float | None = None,
    interference_aware: bool = True,
) -> CandidateSet:
    """All alive in-range neighbors strictly closer to the destination.

    Members carry their estimated delivery probability and ETX and are
    ordered by ascending ETX (ties by node id).  Zero-probability
    neighbors are filtered out; an empty result raises RoutingVoid.
    """
    if sender == destination:
        raise ValueError("sender and destination must differ")
    if not view.alive[sender]:
        raise ValueError("sender is not alive")
    power = float(view.tx_power[sender]) if tx_power is None else tx_power
    r_s = transmission_range(power, view.ch)
    d_sd = view.dist[sender, destination]
    members = []
    for node in range(len(view.alive)):
        if node == sender or not view.alive[node]:
            continue
        d_sc = view.dist[sender, node]
        if d_sc > r_s or view.dist[node, destination] >= d_sd:
            continue
        p_i = _estimated_link_prob(
            view, sender, node, d_sc, power, interference_aware=interference_aware
        )
        if p_i <= 0.0:
            continue
        members.append(Candidate(node=node, p_i=p_i, etx=1.0 / p_i))
    if not members:
        raise RoutingVoid(f"node {sender} has no relay towards {destination}")
    members.sort(key=lambda m: (m.etx, m.node))
    return CandidateSet(sender=sender, members=tuple(members))


def opportunistic_relay(
    candidates: CandidateSet, reception_outcomes: Sequence[bool]
) -> int | None:
    """Highest-priority member that received, or None if all failed."""
    if len(reception_outcomes) != len(candidates.members):
        raise ValueError("outcomes must align with the ordered member list")
    for member, ok in zip(candidates.members, reception_outcomes):
        if ok:
            return member.node
    return None


def build_optimization_context(
    sender: int,
    destination: int,
    view: NetView,
    link_table: _LinkTable | None = None,
) -> OptimizationContext:
    """Assemble the optimization inputs a sender holds for one destination.

    The degree range is bounded by the sender's neighbor count at its
    current power.  Link estimates at every grid power level are
    interference-aware.  Raises NoFeasibleTopology when the sender has
    no neighbors at all at its current power.
    """
    ch, rp = view.ch, view.rp
    d_sd = float(view.dist[sender, destination])
    current_power = float(view.tx_power[sender])
    r_cur = transmission_range(current_power, ch)
    others = np.flatnonzero(view.alive)
    others = others[others != sender]
    n_neighbors = int(np.count_nonzero(view.dist[sender, others] <= r_cur))
    if n_neighbors == 0:
        raise NoFeasibleTopology(f"node {sender} has no neighbors at its current power")
    grid = DecisionGrid.from_radio(rp, max_degree=n_neighbors)
    levels = np.asarray(grid.power_levels)
    if link_table is None:
        link_table = _LinkTable()

    closer = others[view.dist[others, destination] < d_sd]
    dists = view.dist[sender, closer]
    ranges = (ch.k * ch.alpha_sq * levels / (ch.p_thresh - ch.p_n)) ** (1.0 / ch.eta)
    duty = view.duty_cycle()
    links: dict[float, list[float]] = {lvl: [] for lvl in grid.power_levels}
    for cand, d_sc in zip(closer, dists):
        if d_sc > ranges[-1]:
            continue
        base = link_table.reception_noise(sender, int(cand), float(d_sc), levels, ch)
        powers, idists = view.estimated_interferers(int(cand), sender)
        if len(powers) and duty > 0.0:
            weights = ch.beta * powers * (d_sc / idists) ** ch.eta / ch.g
            t = weights[:, None] / levels
            interf = np.prod((1.0 + (1.0 - duty) * t) / (1.0 + t), axis=0)
            p_i = base * interf
        else:
            p_i = base
        start = int(np.searchsorted(ranges, d_sc))
        for li in range(start, len(levels)):
            p = p_i[li]
            if p > 0.0:
                links[grid.power_levels[li]].append(float(p))

    return OptimizationContext(
        d_sd=d_sd,
        rho=view.rho,
        neighbor_links={lvl: tuple(ps) for lvl, ps in links.items()},
        ch=ch,
        rp=rp,
        grid=grid,
    )


class ErtoStrategy:
    """Interference-aware topology control with front-membership checks.

    Recomputes the Pareto front only when the cached context goes stale
    (an epoch change or a power change); adjusts power only when the
    current pair has fallen off the front.
    """

    name = "erto"

    def __init__(
        self,
        *,
        solver: str = "exhaustive",
        ea: EAParams | None = None,
        ea_base_seed: int = 0,
        pmd_tolerance: float = 0.5,
    ) -> None:
        if solver not in ("exhaustive", "evolutionary"):
            raise ValueError(f"unknown solver {solver!r}")
        self.solver = solver
        self.ea = ea or EAParams()
        self.ea_base_seed = ea_base_seed
        # The reduced feasible set keeps every front member whose degree
        # probability sits on the near-maximal plateau; a plateau (rather
        # than an exact-tie test) is what makes the median selection a
        # real choice instead of a singleton.
        self.pmd_tolerance = pmd_tolerance
        self._fronts: dict = {}
        self._decisions: dict = {}
        self._ctl_degree: dict[tuple[int, int], int] = {}
        self._scope = _LocalScope()
        self._links = _LinkTable()

    def decide(self, sender: int, destination: int, view: NetView) -> RoutingDecision:
        current_p = float(view.tx_power[sender])
        local = self._scope.key(sender, destination, view)
        key = (sender, destination, local, view.ambient_power(), view.duty_cycle(), current_p)
        cached = self._decisions.get(key, _MISS)
        if cached is not _MISS:
            if cached is None:
                raise RoutingVoid(f"node {sender} has no relay towards {destination}")
            return cached
        try:
            decision = self._decide_uncached(sender, destination, view, current_p)
        except RoutingVoid:
            self._decisions[key] = None
            raise
        self._decisions[key] = decision
        return decision

    def _decide_uncached(
        self, sender: int, destination: int, view: NetView, current_p: float
    ) -> RoutingDecision:
        rp = view.rp
        try:
            front, feasible, realized = self._front_for(sender, destination, view, current_p)
        except NoFeasibleTopology:
            members = candidate_set(
                sender, destination, view, tx_power=rp.p_max, interference_aware=True
            )
            return RoutingDecision(
                tx_power=rp.p_max,
                candidate_set=members,
                adjusted=abs(rp.p_max - current_p) > 1e-12,
                fallback=True,
            )
        current_n = self._ctl_degree.get((sender, destination), realized)
        grid_half_step = rp.power_step / 2.0
        target = adjust_power(
            current_p, current_n, front, feasible, power_tolerance=grid_half_step
        )
        if target is None:
            power = current_p
            adjusted = False
            self._ctl_degree.setdefault((sender, destination), current_n)
        else:
            power = target.p_ts
            adjusted = abs(power - current_p) > 1e-12
            self._ctl_degree[(sender, destination)] = target.n_rel
        members = candidate_set(
            sender, destination, view, tx_power=power, interference_aware=True
        )
        return RoutingDecision(tx_power=power, candidate_set=members, adjusted=adjusted)

    def _front_for(self, sender: int, destination: int, view: NetView, current_p: float):
        local = self._scope.key(sender, destination, view)
        key = (sender, destination, local, view.ambient_power(), view.duty_cycle(), round(current_p, 9))
        hit = self._fronts.get(key)
        if hit is not None:
            return hit
        ctx = build_optimization_context(sender, destination, view, link_table=self._links)
        if self.solver == "evolutionary":
            seed_seq = np.random.SeedSequence(
                (self.ea_base_seed, sender, destination, local[0], int(local[1]))
            )
            ea = EAParams(
                population=self.ea.population,
                generations=self.ea.generations,
                crossover_rate=self.ea.crossover_rate,
                mutation_rate=self.ea.mutation_rate,
                seed=int(seed_seq.generate_state(1)[0]),
            )
            front = pareto_front_evolutionary(ctx, ea)
        else:
            front = pareto_front_exhaustive(ctx)
        feasible = optimal_feasible_set(front, tolerance=self.pmd_tolerance)
        realized = len(ctx.neighbor_links.get(self._nearest_level(ctx, current_p), ()))
        result = (front, feasible, realized)
        self._fronts[key] = result
        return result

    @staticmethod
    def _nearest_level(ctx: OptimizationContext, power: float) -> float:
        return min(ctx.grid.power_levels, key=lambda lvl: abs(lvl - power))


class ExorStrategy:
    """Fixed-power opportunistic forwarding, priorities by plain ETX."""

    name = "exor"

    def __init__(self, fixed_power: float) -> None:
        self.fixed_power = fixed_power
        self._cache: dict = {}
        self._scope = _LocalScope()

    def decide(self, sender: int, destination: int, view: NetView) -> RoutingDecision:
        key = (sender, destination, self._scope.key(sender, destination, view))
        hit = self._cache.get(key, _MISS)
        if hit is _MISS:
            try:
                hit = candidate_set(
                    sender,
                    destination,
                    view,
                    tx_power=self.fixed_power,
                    interference_aware=False,
                )
            except RoutingVoid:
                self._cache[key] = None
                raise
            self._cache[key] = hit
        elif hit is None:
            raise RoutingVoid(f"node {sender} has no relay towards {destination}")
        return RoutingDecision(tx_power=self.fixed_power, candidate_set=hit, adjusted=False)


def _grid_levels(rp: RadioParams) -> tuple[float, ...]:
    n = int((rp.p_max - rp.p_min) / rp.power_step + 1e-9) + 1
    return tuple(rp.p_min + i * rp.power_step for i in range(n))


def _interference_free_prefix_costs(
    view: NetView, sender: int, destination: int
) -> list[tuple[float, list[float]]]:
    """Per grid level, the descending interference-free candidate probabilities."""
    ch = view.ch
    d_sd = view.dist[sender, destination]
    others = np.flatnonzero(view.alive)
    others = others[others != sender]
    closer = others[view.dist[others, destination] < d_sd]
    dists = view.dist[sender, closer]
    out = []
    for lvl in _grid_levels(view.rp):
        r_lvl = transmission_range(lvl, ch)
        probs = [
            reception_prob(lvl, float(d), ch) for d in dists[dists <= r_lvl]
        ]
        probs = sorted((p for p in probs if p > 0.0), reverse=True)
        out.append((lvl, probs))
    return out


class TcorStrategy:
    """Power-control baseline: minimize full-set expected energy cost.

    Link estimates ignore interference; the chosen power's whole lens
    population forms the candidate set.
    """

    name = "tcor"

    def __init__(self) -> None:
        self._cache: dict = {}
        self._scope = _LocalScope()

    def decide(self, sender: int, destination: int, view: NetView) -> RoutingDecision:
        key = (sender, destination, self._scope.key(sender, destination, view))
        hit = self._cache.get(key, _MISS)
        if hit is _MISS:
            rp = view.rp
            best = None
            for lvl, probs in _interference_free_prefix_costs(view, sender, destination):
                if not probs:
                    continue
                miss = 1.0
                for p in probs:
                    miss *= 1.0 - p
                pdr = 1.0 - miss
                if pdr == 0.0:
                    continue
                cost = (len(probs) * rp.e_r + rp.xi * lvl) * rp.delta / (pdr * pdr)
                if best is None or cost < best[0]:
                    best = (cost, lvl)
            if best is None:
                self._cache[key] = None
                raise RoutingVoid(f"node {sender} has no relay towards {destination}")
            hit = (
                best[1],
                candidate_set(
                    sender, destination, view, tx_power=best[1], interference_aware=False
                ),
            )
            self._cache[key] = hit
        elif hit is None:
            raise RoutingVoid(f"node {sender} has no relay towards {destination}")
        power, members = hit
        adjusted = abs(power - float(view.tx_power[sender])) > 1e-12
        return RoutingDecision(tx_power=power, candidate_set=members, adjusted=adjusted)


class EeorStrategy:
    """Power-control baseline: per-power best energy-ordered candidate prefix.

    Scans powers ascending; at each power candidates are taken in
    energetic-cost order and the cheapest prefix is kept; the overall
    cheapest (power, prefix) pair wins.
    """

    name = "eeor"

    def __init__(self) -> None:
        self._cache: dict = {}
        self._scope = _LocalScope()

    def decide(self, sender: int, destination: int, view: NetView) -> RoutingDecision:
        key = (sender, destination, self._scope.key(sender, destination, view))
        hit = self._cache.get(key, _MISS)
        if hit is _MISS:
            rp = view.rp
            best = None
            for lvl, probs in _interference_free_prefix_costs(view, sender, destination):
                miss = 1.0
                for k, p in enumerate(probs, start=1):
                    miss *= 1.0 - p
                    pdr = 1.0 - miss
                    if pdr == 0.0:
                        continue
                    cost = (k * rp.e_r + rp.xi * lvl) * rp.delta / (pdr * pdr)
                    if best is None or cost < best[0]:
                        best = (cost, lvl, k)
            if best is None:
                self._cache[key] = None
                raise RoutingVoid(f"node {sender} has no relay towards {destination}")
            _, power, k = best
            full = candidate_set(
                sender, destination, view, tx_power=power, interference_aware=False
            )
            members = CandidateSet(sender=sender, members=full.members[:k])
            hit = (power, members)
            self._cache[key] = hit
        elif hit is None:
            raise RoutingVoid(f"node {sender} has no relay towards {destination}")
        power, members = hit
        adjusted = abs(power - float(view.tx_power[sender])) > 1e-12
        return RoutingDecision(tx_power=power, candidate_set=members, adjusted=adjusted)


def make_strategy(
    name: str,
    *,
    initial_power: float,
    erto_solver: str = "exhaustive",
    ea: EAParams | None = None,
    ea_base_seed: int = 0,
):
    """Construct a routing strategy by its config name."""
    if name == "erto":
        return ErtoStrategy(solver=erto_solver, ea=ea, ea_base_seed=ea_base_seed)
    if name == "exor":
        return ExorStrategy(fixed_power=initial_power)
    if name == "tcor":
        return TcorStrategy()
    if name == "eeor":
        return EeorStrategy()
    raise ValueError(f"unknown strategy {name!r}; expected one of {STRATEGY_NAMES}")


def erto_decide(
    sender: int,
    destination: int,
    net_view: NetView,
    *,
    solver: str = "evolutionary",
    ea: EAParams | None = None,
    pmd_tolerance: float = 0.5,
) -> RoutingDecision:
    """One-shot topology-control decision (stateless convenience form)."""
    return ErtoStrategy(solver=solver, ea=ea, pmd_tolerance=pmd_tolerance).decide(
        sender, destination, net_view
    )


def exor_decide(sender: int, destination: int, net_view: NetView) -> RoutingDecision:
    return ExorStrategy(fixed_power=net_view.rp.p_min).decide(sender, destination, net_view)


def tcor_decide(sender: int, destination: int, net_view: NetView) -> RoutingDecision:
    return TcorStrategy().decide(sender, destination, net_view)


def eeor_decide(sender: int, destination: int, net_view: NetView) -> RoutingDecision:
    return EeorStrategy().decide(sender, destination, net_view)
