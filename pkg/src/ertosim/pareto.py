"""Three-objective topology control over a (power, relay degree) grid.

Each grid point is scored on candidate-set delivery probability, the
probability of actually observing that relay degree at that power, and
the expected one-hop energy cost.  The non-dominated set is computed
either exactly (the grid is always small enough to enumerate) or with a
seeded elitist evolutionary search validated against the exact front.

Selection from the front follows two rules: first restrict to the
solutions whose degree probability is maximal, then pick the median of
that set by delivery probability, with a variance comparison breaking
the even-cardinality case.
"""

from __future__ import annotations

import math
import statistics
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .energymodel import RadioParams
from .geometry import DensityContext, candidate_relay_area, relay_degree_pmf, transmission_range
from .linkmodel import ChannelParams, pdr_sc

__all__ = [
    "DecisionGrid",
    "ParetoSolution",
    "OptimizationContext",
    "EAParams",
    "NoFeasibleTopology",
    "objective_vector",
    "enumerate_solutions",
    "pareto_front_exhaustive",
    "pareto_front_evolutionary",
    "optimal_feasible_set",
    "balanced_select",
    "adjust_power",
]

PMD_TOLERANCE = 1e-9


class NoFeasibleTopology(RuntimeError):
    """Raised when no grid point has at least one reachable candidate."""


@dataclass(frozen=True, slots=True)
class ParetoSolution:
    """A (power, degree) decision with its three objective values."""

    p_ts: float
    n_rel: int
    pdr_sc: float
    p_md: float
    cost: float

    def objectives(self) -> tuple[float, float, float]:
        """Minimization view: (-pdr_sc, -p_md, cost)."""
        return (-self.pdr_sc, -self.p_md, self.cost)


@dataclass(frozen=True, slots=True)
class DecisionGrid:
    """Discrete decision space: power levels and degrees 1..max_degree."""

    power_levels: tuple[float, ...]
    max_degree: int

    def __post_init__(self) -> None:
        if not self.power_levels:
            raise ValueError("power grid must be non-empty")
        if any(b <= a for a, b in zip(self.power_levels, self.power_levels[1:])):
            raise ValueError("power levels must be strictly increasing")
        if self.max_degree < 1:
            raise ValueError("degree range must be non-empty")

    @classmethod
    def from_radio(cls, rp: RadioParams, max_degree: int) -> "DecisionGrid":
        n = int((rp.p_max - rp.p_min) / rp.power_step + 1e-9) + 1
        levels = tuple(rp.p_min + i * rp.power_step for i in range(n))
        return cls(power_levels=levels, max_degree=max_degree)

    @property
    def half_step(self) -> float:
        if len(self.power_levels) == 1:
            return 0.0
        return (self.power_levels[1] - self.power_levels[0]) / 2.0


@dataclass(frozen=True)
class OptimizationContext:
    """Everything a sender knows when optimizing towards one destination.

    ``neighbor_links`` maps every grid power level to the estimated
    delivery probabilities of the in-lens candidates reachable at that
    power; lists are normalised to descending order on construction.
    """

    d_sd: float
    rho: float
    neighbor_links: Mapping[float, tuple[float, ...]]
    ch: ChannelParams
    rp: RadioParams
    grid: DecisionGrid

    def __post_init__(self) -> None:
        links = {}
        for level in self.grid.power_levels:
            if level not in self.neighbor_links:
                raise ValueError(f"neighbor_links missing grid level {level!r}")
            links[level] = tuple(sorted(self.neighbor_links[level], reverse=True))
        object.__setattr__(self, "neighbor_links", links)


@dataclass(frozen=True, slots=True)
class EAParams:
    """Evolutionary solver settings; defaults are the validated ones."""

    population: int = 100
    generations: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    seed: int = 0


def objective_vector(
    p_ts: float, n_rel: int, ctx: OptimizationContext
) -> tuple[float, float, float] | None:
    """Objectives (-pdr_sc, -p_md, cost) at one grid point.

    Uses the ``n_rel`` best candidates reachable at ``p_ts``; with fewer
    candidates available it evaluates all of them, and with none the
    point is infeasible (returns None).
    """
    if p_ts not in ctx.neighbor_links:
        raise ValueError(f"power {p_ts!r} is not a grid level")
    if not 1 <= n_rel <= ctx.grid.max_degree:
        raise ValueError(f"degree {n_rel} outside grid range")
    probs = ctx.neighbor_links[p_ts]
    if not probs:
        return None
    chosen = sorted(probs, reverse=True)[: min(n_rel, len(probs))]
    pdr = pdr_sc(chosen)
    if pdr == 0.0:
        return None
    p_md = relay_degree_pmf(p_ts, ctx.d_sd, n_rel, DensityContext(ctx.rho), ctx.ch)
    cost = (len(chosen) * ctx.rp.e_r + ctx.rp.xi * p_ts) * ctx.rp.delta / (pdr * pdr)
    return (-pdr, -p_md, cost)


def _solution_table(ctx: OptimizationContext) -> dict[tuple[int, int], ParetoSolution]:
    """All feasible grid points, keyed by (power index, degree).

    Incremental evaluation per power level; arithmetic matches
    :func:`objective_vector` operation for operation so both paths
    produce bit-identical objective values.
    """
    table: dict[tuple[int, int], ParetoSolution] = {}
    dc = DensityContext(ctx.rho)
    for pi, level in enumerate(ctx.grid.power_levels):
        probs = ctx.neighbor_links[level]
        if not probs:
            continue
        lam = ctx.rho * candidate_relay_area(transmission_range(level, ctx.ch), ctx.d_sd)
        miss = 1.0
        avail = len(probs)
        for n in range(1, ctx.grid.max_degree + 1):
            if n <= avail:
                miss *= 1.0 - probs[n - 1]
            pdr = 1.0 - miss
            if pdr == 0.0:
                continue
            if lam == 0.0:
                p_md = 0.0
            else:
                p_md = math.exp(n * math.log(lam) - lam - math.lgamma(n + 1))
            k = min(n, avail)
            cost = (k * ctx.rp.e_r + ctx.rp.xi * level) * ctx.rp.delta / (pdr * pdr)
            table[(pi, n)] = ParetoSolution(
                p_ts=level, n_rel=n, pdr_sc=pdr, p_md=p_md, cost=cost
            )
    return table


def enumerate_solutions(ctx: OptimizationContext) -> list[ParetoSolution]:
    """Every feasible grid point in deterministic (power, degree) order."""
    table = _solution_table(ctx)
    return [table[key] for key in sorted(table)]


def _non_dominated(solutions: Iterable[ParetoSolution]) -> list[ParetoSolution]:
    """Exact non-dominated subset under component-wise minimization.

    Sweep in ascending f1 order keeping a 2D staircase of the minimal
    (f2, f3) pairs seen so far; a point is dominated exactly when some
    staircase entry is component-wise <= its (f2, f3) (f1 strictness is
    guaranteed by processing equal-f1 groups together).
    """
    order = sorted(solutions, key=lambda s: s.objectives())
    front: list[ParetoSolution] = []
    stairs_f2: list[float] = []
    stairs_f3: list[float] = []

    def dominated_by_stairs(f2: float, f3: float) -> bool:
        idx = bisect_right(stairs_f2, f2)
        return idx > 0 and stairs_f3[idx - 1] <= f3

    i = 0
    while i < len(order):
        f1 = order[i].objectives()[0]
        j = i
        group: list[ParetoSolution] = []
        while j < len(order) and order[j].objectives()[0] == f1:
            s = order[j]
            if not dominated_by_stairs(s.objectives()[1], s.objectives()[2]):
                group.append(s)
            j += 1
        # Within an equal-f1 group, dominance needs strictness in f2/f3.
        survivors = []
        for a in group:
            _, a2, a3 = a.objectives()
            dominated = False
            for b in group:
                if b is a:
                    continue
                _, b2, b3 = b.objectives()
                if b2 <= a2 and b3 <= a3 and (b2 < a2 or b3 < a3):
                    dominated = True
                    break
            if not dominated:
                survivors.append(a)
        front.extend(survivors)
        for s in survivors:
            _, f2, f3 = s.objectives()
            idx = bisect_right(stairs_f2, f2)
            if idx > 0 and stairs_f3[idx - 1] <= f3:
                continue
            while idx < len(stairs_f2) and stairs_f3[idx] >= f3:
                del stairs_f2[idx]
                del stairs_f3[idx]
            stairs_f2.insert(idx, f2)
            stairs_f3.insert(idx, f3)
        i = j
    return front


def pareto_front_exhaustive(ctx: OptimizationContext) -> set[ParetoSolution]:
    """Exact Pareto front over every feasible grid point."""
    table = _solution_table(ctx)
    if not table:
        raise NoFeasibleTopology("no grid point has a reachable candidate")
    return set(_non_dominated(table.values()))


def _pairwise_ranks(objs: np.ndarray) -> np.ndarray:
    """Non-domination rank (0 = best) of each row of an (m, 3) array."""
    le = (objs[:, None, :] <= objs[None, :, :]).all(axis=-1)
    lt = (objs[:, None, :] < objs[None, :, :]).any(axis=-1)
    dom = le & lt
    ranks = np.full(len(objs), -1, dtype=int)
    remaining = np.ones(len(objs), dtype=bool)
    rank = 0
    while remaining.any():
        counts = (dom & remaining[:, None]).sum(axis=0)
        frontier = remaining & (counts == 0)
        ranks[frontier] = rank
        remaining &= ~frontier
        rank += 1
    return ranks


def _crowding(objs: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    crowd = np.zeros(len(objs))
    for r in np.unique(ranks):
        idx = np.flatnonzero(ranks == r)
        if len(idx) <= 2:
            crowd[idx] = np.inf
            continue
        for m in range(objs.shape[1]):
            vals = objs[idx, m]
            order = np.argsort(vals, kind="stable")
            span = vals[order[-1]] - vals[order[0]]
            crowd[idx[order[0]]] = np.inf
            crowd[idx[order[-1]]] = np.inf
            if span > 0:
                gaps = (vals[order[2:]] - vals[order[:-2]]) / span
                crowd[idx[order[1:-1]]] += gaps
    return crowd


def pareto_front_evolutionary(
    ctx: OptimizationContext, ea: EAParams | None = None
) -> set[ParetoSolution]:
    """Seeded elitist evolutionary front search over the decision grid.

    Standard non-dominated sorting with crowding-distance tie-breaks and
    binary tournaments; an archive of every feasible non-dominated point
    encountered is kept so the returned set is mutually non-dominated
    and reproducible for a fixed seed.
    """
    ea = ea or EAParams()
    table = _solution_table(ctx)
    if not table:
        raise NoFeasibleTopology("no grid point has a reachable candidate")
    n_levels = len(ctx.grid.power_levels)
    n_degrees = ctx.grid.max_degree
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(ea.seed)))

    worst = (np.inf, np.inf, np.inf)

    def genotype_objs(genes: np.ndarray) -> np.ndarray:
        rows = []
        for pi, n in genes:
            sol = table.get((int(pi), int(n)))
            rows.append(sol.objectives() if sol is not None else worst)
        return np.asarray(rows, dtype=float)

    archive: dict[tuple[int, int], ParetoSolution] = {}

    def record(genes: np.ndarray) -> None:
        for pi, n in genes:
            sol = table.get((int(pi), int(n)))
            if sol is not None:
                archive[(int(pi), int(n))] = sol

    pop = np.column_stack(
        [
            rng.integers(0, n_levels, size=ea.population),
            rng.integers(1, n_degrees + 1, size=ea.population),
        ]
    )
    record(pop)
    pop_objs = genotype_objs(pop)
    seen = {(int(pi), int(n)) for pi, n in pop}

    for _ in range(ea.generations):
        ranks = _pairwise_ranks(pop_objs)
        crowd = _crowding(pop_objs, ranks)
        # Binary tournaments pick each offspring's two parents.
        picks = rng.integers(0, ea.population, size=(ea.population, 2))
        better = np.where(
            (ranks[picks[:, 0]] < ranks[picks[:, 1]])
            | (
                (ranks[picks[:, 0]] == ranks[picks[:, 1]])
                & (crowd[picks[:, 0]] >= crowd[picks[:, 1]])
            ),
            picks[:, 0],
            picks[:, 1],
        )
        offspring = pop[better].copy()
        # One-point crossover on the (power index, degree) pair swaps the
        # degree gene between consecutive offspring.
        for a in range(0, ea.population - 1, 2):
            if rng.random() < ea.crossover_rate:
                offspring[a, 1], offspring[a + 1, 1] = offspring[a + 1, 1], offspring[a, 1]
        mutate = rng.random(offspring.shape) < ea.mutation_rate
        new_pi = rng.integers(0, n_levels, size=ea.population)
        new_n = rng.integers(1, n_degrees + 1, size=ea.population)
        offspring[:, 0] = np.where(mutate[:, 0], new_pi, offspring[:, 0])
        offspring[:, 1] = np.where(mutate[:, 1], new_n, offspring[:, 1])
        # Re-evaluating an already-seen genotype teaches nothing on a
        # finite grid; spend the duplicate's evaluation on a fresh draw.
        for idx in range(ea.population):
            g = (int(offspring[idx, 0]), int(offspring[idx, 1]))
            if g in seen:
                offspring[idx, 0] = rng.integers(0, n_levels)
                offspring[idx, 1] = rng.integers(1, n_degrees + 1)
                g = (int(offspring[idx, 0]), int(offspring[idx, 1]))
            seen.add(g)
        record(offspring)
        off_objs = genotype_objs(offspring)

        combined = np.vstack([pop, offspring])
        combined_objs = np.vstack([pop_objs, off_objs])
        ranks = _pairwise_ranks(combined_objs)
        crowd = _crowding(combined_objs, ranks)
        order = np.lexsort((np.arange(len(combined)), -crowd, ranks))
        keep = order[: ea.population]
        pop = combined[keep]
        pop_objs = combined_objs[keep]

    return set(_non_dominated(archive.values()))


def optimal_feasible_set(
    front: Iterable[ParetoSolution], *, tolerance: float = PMD_TOLERANCE
) -> set[ParetoSolution]:
    """Front members whose degree probability ties the maximum."""
    members = list(front)
    if not members:
        raise ValueError("front must be non-empty")
    top = max(s.p_md for s in members)
    threshold = top - tolerance * abs(top)
    return {s for s in members if s.p_md >= threshold}


def _sorted_feasible(feasible: Iterable[ParetoSolution]) -> list[ParetoSolution]:
    return sorted(feasible, key=lambda s: (s.pdr_sc, s.cost, s.p_ts))


def balanced_select(
    feasible: Iterable[ParetoSolution], *, normalize_variance: bool = False
) -> ParetoSolution:
    """Median-by-delivery-probability choice from the reduced set.

    Odd cardinality takes the middle element.  Even cardinality compares
    the variances of the delivery and cost columns: the column that
    varies more decides between the two middle elements, favouring the
    higher delivery probability or the lower cost respectively.
    ``normalize_variance`` rescales both columns to [0, 1] before the
    comparison (off by default).
    """
    sols = _sorted_feasible(feasible)
    if not sols:
        raise ValueError("feasible set must be non-empty")
    m = len(sols)
    if m % 2 == 1:
        return sols[(m + 1) // 2 - 1]
    pdr_col = [s.pdr_sc for s in sols]
    cost_col = [s.cost for s in sols]
    if normalize_variance:
        pdr_col = _rescale(pdr_col)
        cost_col = _rescale(cost_col)
    v_pdr = statistics.pvariance(pdr_col)
    v_cost = statistics.pvariance(cost_col)
    lo = sols[m // 2 - 1]
    hi = sols[m // 2]
    if v_pdr > v_cost:
        return lo if lo.pdr_sc > hi.pdr_sc else hi
    if v_pdr < v_cost:
        return hi if lo.cost > hi.cost else lo
    return lo


def _rescale(column: list[float]) -> list[float]:
    lo, hi = min(column), max(column)
    span = hi - lo
    if span == 0:
        return [0.0 for _ in column]
    return [(x - lo) / span for x in column]


def adjust_power(
    current_p: float,
    current_n: int,
    front: Iterable[ParetoSolution],
    feasible: Iterable[ParetoSolution],
    *,
    power_tolerance: float = 0.005,
) -> ParetoSolution | None:
    """Decide whether the current (power, degree) pair needs adjusting.

    Returns None (keep) when the pair already sits on the front, power
    matched within ``power_tolerance``; otherwise returns the balanced
    choice from the reduced feasible set.
    """
    for s in front:
        if s.n_rel == current_n and abs(s.p_ts - current_p) <= power_tolerance:
            return None
    return balanced_select(feasible)
