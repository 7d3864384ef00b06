"""Seeded slot-synchronous packet simulator.

Time advances in slots of one packet airtime.  Every alive node with a
ready head-of-queue packet broadcasts once per slot; all transmissions
sharing a slot interfere with each other, and each candidate's
reception is a Bernoulli draw at the realized SINR-and-threshold
probability.  Energy is charged per actual transmit and per successful
reception, so the empirical energy account is independent of the
expected-cost model used by the optimizers.

Randomness discipline: one master seed feeds four named substreams
(placement, traffic, per-hop draws, optimizer), so a change in one
subsystem's draw count can never perturb another's sequence.  A run is
a pure function of its config.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from itertools import count
from typing import Callable, Sequence

import numpy as np

from .energymodel import RadioParams
from .geometry import transmission_range
from .linkmodel import ChannelParams, Interferer, reception_prob, sinr_success_prob_arrays
from .pareto import EAParams
from .protocols import (
    STRATEGY_NAMES,
    CandidateSet,
    NetView,
    RoutingVoid,
    make_strategy,
    opportunistic_relay,
)

__all__ = [
    "NodeState",
    "SimConfig",
    "RunMetrics",
    "EventQueue",
    "Flow",
    "Packet",
    "HopOutcome",
    "place_nodes",
    "generate_traffic",
    "interferer_set",
    "attempt_hop",
    "run",
    "metric_pdr",
    "metric_delay",
    "metric_throughput",
    "metric_residual",
]

_READY_EPS = 1e-12


@dataclass(slots=True)
class NodeState:
    """Mutable per-node simulation state."""

    id: int
    position: tuple[float, float]
    energy: float
    tx_power: float
    alive: bool = True


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one simulation run."""

    area: tuple[float, float] = (1000.0, 1000.0)
    node_count: int = 100
    cbr_pairs: int = 30
    cbr_rate: float = 2.0
    sim_time: float = 300.0
    seed: int = 1
    strategy: str = "erto"
    channel: ChannelParams = field(default_factory=ChannelParams)
    radio: RadioParams = field(default_factory=RadioParams)
    initial_energy: float = 5.0
    initial_power: float = 0.1
    retransmission_limit: int = 7
    coordination_delay: float = 0.0
    erto_solver: str = "exhaustive"
    ea: EAParams = field(default_factory=EAParams)

    def __post_init__(self) -> None:
        if self.area[0] <= 0 or self.area[1] <= 0:
            raise ValueError("deployment area must have positive extent")
        if self.node_count < 2:
            raise ValueError("node_count must be at least 2")
        if self.cbr_pairs < 1:
            raise ValueError("cbr_pairs must be at least 1")
        if self.cbr_rate <= 0:
            raise ValueError("cbr_rate must be positive")
        if self.sim_time <= 0:
            raise ValueError("sim_time must be positive")
        if self.strategy not in STRATEGY_NAMES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.initial_energy <= 0:
            raise ValueError("initial_energy must be positive")
        if not self.radio.p_min <= self.initial_power <= self.radio.p_max:
            raise ValueError("initial_power must lie within the radio power bounds")
        if self.retransmission_limit < 1:
            raise ValueError("retransmission_limit must be at least 1")
        if self.coordination_delay < 0:
            raise ValueError("coordination_delay must be non-negative")
        if self.erto_solver not in ("exhaustive", "evolutionary"):
            raise ValueError(f"unknown erto_solver {self.erto_solver!r}")


@dataclass(frozen=True)
class RunMetrics:
    """End-of-run totals and ratios."""

    pdr: float
    mean_delay: float
    throughput: float
    residual_energy_ratio: float
    power_adjustments: int
    drops_by_cause: dict[str, int]
    generated: int
    delivered: int
    total_sends: int
    topology_fallbacks: int
    charged_tx_energy: float
    charged_rx_energy: float


class EventQueue:
    """Time-ordered event heap with deterministic FIFO tie-breaking."""

    def __init__(self) -> None:
        self._heap: list[tuple[float, int, object]] = []
        self._seq = count()
        self._last_time = -math.inf

    def push(self, time: float, payload: object) -> None:
        heapq.heappush(self._heap, (time, next(self._seq), payload))

    def pop(self) -> tuple[float, object]:
        time, _, payload = heapq.heappop(self._heap)
        if time < self._last_time:
            raise AssertionError("event queue delivered events out of order")
        self._last_time = time
        return time, payload

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


@dataclass(frozen=True, slots=True)
class Flow:
    """One CBR conversation between two distinct endpoints."""

    src: int
    dst: int


@dataclass(slots=True)
class Packet:
    flow: int
    seq: int
    gen_time: float
    dst: int
    hops: int = 0
    attempts: int = 0
    ready_time: float = 0.0


@dataclass(frozen=True, slots=True)
class HopOutcome:
    """Result of one broadcast: who received, and what that means."""

    received: tuple[int, ...]
    delivered: bool
    forwarder: int | None


def _substreams(seed: int) -> tuple[np.random.SeedSequence, ...]:
    """Named child streams: placement, traffic, hop draws, optimizer."""
    return tuple(np.random.SeedSequence(seed).spawn(4))


def place_nodes(cfg: SimConfig) -> list[NodeState]:
    """Scatter nodes i.i.d. uniformly over the deployment area."""
    placement_ss = _substreams(cfg.seed)[0]
    rng = np.random.Generator(np.random.PCG64(placement_ss))
    coords = rng.random((cfg.node_count, 2)) * np.asarray(cfg.area)
    return [
        NodeState(
            id=i,
            position=(float(x), float(y)),
            energy=cfg.initial_energy,
            tx_power=cfg.initial_power,
        )
        for i, (x, y) in enumerate(coords)
    ]


def generate_traffic(cfg: SimConfig) -> list[Flow]:
    """Draw the CBR conversation pairs; endpoints are always distinct."""
    traffic_ss = _substreams(cfg.seed)[1]
    rng = np.random.Generator(np.random.PCG64(traffic_ss))
    flows = []
    for _ in range(cfg.cbr_pairs):
        src = int(rng.integers(0, cfg.node_count))
        dst = (src + 1 + int(rng.integers(0, cfg.node_count - 1))) % cfg.node_count
        flows.append(Flow(src=src, dst=dst))
    return flows


def emission_times(cfg: SimConfig) -> list[float]:
    """Per-flow packet emission times: (i + 1) / rate up to sim_time."""
    n = int(cfg.cbr_rate * cfg.sim_time + 1e-9)
    return [(i + 1) / cfg.cbr_rate for i in range(n)]


def interferer_set(
    receiver: NodeState,
    transmitting: Sequence[NodeState],
    sender: NodeState,
    ch: ChannelParams,
) -> list[Interferer]:
    """Concurrent transmitters whose coverage reaches the receiver.

    The sender itself is excluded, as is the receiver (a node busy
    transmitting cannot simultaneously be receiving).
    """
    out = []
    for t in transmitting:
        if t.id == sender.id or t.id == receiver.id:
            continue
        d = math.dist(t.position, receiver.position)
        if d <= transmission_range(t.tx_power, ch):
            out.append(Interferer(power=t.tx_power, distance_to_receiver=d))
    return out


def attempt_hop(
    candidates: CandidateSet,
    probs: Sequence[float],
    destination: int,
    rng: np.random.Generator,
) -> HopOutcome:
    """Draw one Bernoulli per candidate and resolve the forwarder.

    ``probs`` aligns with the ordered member list and holds the realized
    per-candidate delivery probabilities; entries of exactly zero
    consume no randomness.  Delivery to the destination short-circuits
    any relay priority.
    """
    if len(probs) != len(candidates.members):
        raise ValueError("probs must align with the ordered member list")
    outcomes = []
    for p in probs:
        if p <= 0.0:
            outcomes.append(False)
        else:
            outcomes.append(bool(rng.random() < p))
    received = tuple(m.node for m, ok in zip(candidates.members, outcomes) if ok)
    delivered = destination in received
    forwarder = opportunistic_relay(candidates, outcomes)
    return HopOutcome(received=received, delivered=delivered, forwarder=forwarder)


def metric_pdr(delivered: int, generated: int) -> float:
    return delivered / generated if generated else 0.0


def metric_delay(total_delay: float, delivered: int) -> float:
    return total_delay / delivered if delivered else 0.0


def metric_throughput(delivered: int, total_sends: int) -> float:
    return delivered / total_sends if total_sends else 0.0


def metric_residual(energies: Sequence[float], initial_energy: float) -> float:
    if not len(energies):
        return 0.0
    return float(np.mean([max(0.0, e) / initial_energy for e in energies]))


class Simulation:
    """One seeded run; see the module docstring for the slot model."""

    def __init__(self, cfg: SimConfig, trace: Callable[..., None] | None = None):
        self.cfg = cfg
        self.trace = trace
        ss = _substreams(cfg.seed)
        self.rng_hops = np.random.Generator(np.random.PCG64(ss[2]))
        opt_seed = int(ss[3].generate_state(1)[0])

        self.nodes = place_nodes(cfg)
        self.positions = np.array([n.position for n in self.nodes])
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        self.dist = np.hypot(diff[..., 0], diff[..., 1])
        self.alive = np.ones(cfg.node_count, dtype=bool)
        self.energy = np.full(cfg.node_count, float(cfg.initial_energy))

        levels = _grid_levels(cfg.radio)
        p0 = min(levels, key=lambda lvl: abs(lvl - cfg.initial_power))
        self.tx_power = np.full(cfg.node_count, p0)

        self.flows = generate_traffic(cfg)
        self.sources = np.unique([f.src for f in self.flows])
        self.source_set = set(int(s) for s in self.sources)

        self.view = NetView(
            positions=self.positions,
            alive=self.alive,
            tx_power=self.tx_power,
            dist=self.dist,
            sources=self.sources,
            ch=cfg.channel,
            rp=cfg.radio,
            rho=cfg.node_count / (cfg.area[0] * cfg.area[1]),
        )
        # Ambient power and duty cycle are published to strategies with
        # hysteresis so estimate caches do not flap at quantization edges.
        self._power_sum = float(p0) * cfg.node_count
        self._raw_activity = 0.0
        self.view.ambient = round(round(p0 / 0.05) * 0.05, 9)
        self.view.duty = 0.0
        self.strategy = make_strategy(
            cfg.strategy,
            initial_power=p0,
            erto_solver=cfg.erto_solver,
            ea=cfg.ea,
            ea_base_seed=opt_seed,
        )
        self.queues: list[deque[Packet]] = [deque() for _ in range(cfg.node_count)]

        self.generated = 0
        self.delivered = 0
        self.total_delay = 0.0
        self.total_sends = 0
        self.adjustments = 0
        self.fallbacks = 0
        self.drops: dict[str, int] = {}
        self.charged_tx = 0.0
        self.charged_rx = 0.0

    # -- bookkeeping -------------------------------------------------

    def _drop(self, pkt: Packet, cause: str) -> None:
        self.drops[cause] = self.drops.get(cause, 0) + 1
        if self.trace:
            self.trace("drop", pkt.flow, pkt.seq, cause)

    def _die(self, nid: int) -> None:
        self.alive[nid] = False
        self.nodes[nid].alive = False
        self.view.alive_epoch += 1
        self.view.epoch += 1
        self._power_sum -= float(self.tx_power[nid])
        self._publish_ambient()
        while self.queues[nid]:
            self._drop(self.queues[nid].popleft(), "energy")

    def _apply_power(self, nid: int, power: float, adjusted: bool) -> None:
        if adjusted:
            self.adjustments += 1
        if power != self.tx_power[nid]:
            self._power_sum += power - float(self.tx_power[nid])
            self.tx_power[nid] = power
            self.nodes[nid].tx_power = power
            if nid in self.source_set:
                self.view.epoch += 1
            self._publish_ambient()

    def _publish_ambient(self) -> None:
        alive_count = int(np.count_nonzero(self.alive))
        raw = self._power_sum / alive_count if alive_count else self.cfg.radio.p_min
        if abs(raw - self.view.ambient) >= 0.075:
            self.view.ambient = round(round(raw / 0.05) * 0.05, 9)

    def _publish_duty(self, frac: float) -> None:
        self._raw_activity = 0.9 * self._raw_activity + 0.1 * frac
        if abs(self._raw_activity - self.view.duty) >= 0.15:
            self.view.duty = round(round(self._raw_activity / 0.1) * 0.1, 9)

    # -- slot processing ----------------------------------------------

    def _collect_transmissions(self, t: float):
        txs = []
        for nid in range(self.cfg.node_count):
            if not self.alive[nid]:
                continue
            queue = self.queues[nid]
            decision = None
            pkt = None
            while queue:
                head = queue[0]
                if head.ready_time > t + _READY_EPS:
                    break
                try:
                    decision = self.strategy.decide(nid, head.dst, self.view)
                except RoutingVoid:
                    self._drop(queue.popleft(), "void")
                    continue
                pkt = head
                break
            if decision is None or pkt is None:
                continue
            if decision.fallback:
                self.fallbacks += 1
            self._apply_power(nid, decision.tx_power, decision.adjusted)
            tx_cost = self.cfg.radio.xi * decision.tx_power * self.cfg.radio.delta
            if self.energy[nid] < tx_cost:
                self._die(nid)
                continue
            queue.popleft()
            txs.append((nid, pkt, decision))
        return txs

    def _realized_probs(
        self,
        sender: int,
        decision,
        tx_ids: np.ndarray,
        tx_powers: np.ndarray,
        tx_ranges: np.ndarray,
        tx_set: set[int],
        rx_cost: float,
    ) -> list[float]:
        """Per-member realized delivery probability (0 for ineligible)."""
        ch = self.cfg.channel
        probs = []
        for m in decision.candidate_set.members:
            c = m.node
            if c in tx_set or not self.alive[c] or self.energy[c] < rx_cost:
                probs.append(0.0)
                continue
            d_sc = self.dist[sender, c]
            cover = (self.dist[tx_ids, c] <= tx_ranges) & (tx_ids != sender)
            p = reception_prob(decision.tx_power, d_sc, ch) * sinr_success_prob_arrays(
                decision.tx_power, d_sc, tx_powers[cover], self.dist[tx_ids[cover], c], ch
            )
            probs.append(p)
        return probs

    def _process_slot(self, t: float) -> None:
        txs = self._collect_transmissions(t)
        # Smoothed fraction of nodes transmitting per slot; strategies
        # read it as the estimated interferer duty cycle.
        alive_count = int(np.count_nonzero(self.alive))
        self._publish_duty(len(txs) / alive_count if alive_count else 0.0)
        if not txs:
            return
        slot_end = t + self.cfg.radio.delta
        rp = self.cfg.radio
        ch = self.cfg.channel
        rx_cost = rp.e_r * rp.delta

        tx_ids = np.array([nid for nid, _, _ in txs])
        tx_powers = np.array([dec.tx_power for _, _, dec in txs])
        tx_ranges = (
            ch.k * ch.alpha_sq * tx_powers / (ch.p_thresh - ch.p_n)
        ) ** (1.0 / ch.eta)
        tx_set = set(int(i) for i in tx_ids)

        for nid, _, dec in txs:
            cost = rp.xi * dec.tx_power * rp.delta
            self.energy[nid] -= cost
            self.nodes[nid].energy = self.energy[nid]
            self.charged_tx += cost
            self.total_sends += 1

        for nid, pkt, dec in txs:
            probs = self._realized_probs(
                nid, dec, tx_ids, tx_powers, tx_ranges, tx_set, rx_cost
            )
            outcome = attempt_hop(dec.candidate_set, probs, pkt.dst, self.rng_hops)
            survivors = []
            for c in outcome.received:
                self.energy[c] -= rx_cost
                self.nodes[c].energy = self.energy[c]
                self.charged_rx += rx_cost
                if self.energy[c] <= 0.0 and self.alive[c]:
                    self._die(c)
                    if c == pkt.dst:
                        survivors.append(c)
                else:
                    survivors.append(c)
            if pkt.dst in survivors:
                self.delivered += 1
                self.total_delay += slot_end + self.cfg.coordination_delay - pkt.gen_time
                if self.trace:
                    self.trace("deliver", pkt.flow, pkt.seq, slot_end, pkt.hops + 1)
                continue
            forwarder = next((c for c in survivors if self.alive[c]), None)
            if forwarder is not None:
                pkt.hops += 1
                pkt.attempts = 0
                pkt.ready_time = slot_end + self.cfg.coordination_delay
                self.queues[forwarder].append(pkt)
                if self.trace:
                    self.trace("hop", pkt.flow, pkt.seq, nid, forwarder, slot_end)
                continue
            pkt.attempts += 1
            if pkt.attempts >= self.cfg.retransmission_limit:
                self._drop(pkt, "retx_limit")
            elif self.alive[nid]:
                self.queues[nid].appendleft(pkt)
            else:
                self._drop(pkt, "energy")

    # -- run ----------------------------------------------------------

    def execute(self) -> RunMetrics:
        cfg = self.cfg
        events = EventQueue()
        times = emission_times(cfg)
        for f_idx, flow in enumerate(self.flows):
            for seq, t in enumerate(times):
                events.push(t, ("gen", f_idx, seq))
        n_slots = int(cfg.sim_time / cfg.radio.delta + 1e-9)
        for k in range(n_slots):
            events.push(k * cfg.radio.delta, ("slot", k))

        while events:
            t, payload = events.pop()
            if payload[0] == "gen":
                _, f_idx, seq = payload
                flow = self.flows[f_idx]
                self.generated += 1
                if self.trace:
                    self.trace("gen", f_idx, seq, t)
                if not self.alive[flow.src]:
                    self._drop(Packet(flow=f_idx, seq=seq, gen_time=t, dst=flow.dst), "source_dead")
                else:
                    self.queues[flow.src].append(
                        Packet(flow=f_idx, seq=seq, gen_time=t, dst=flow.dst)
                    )
            else:
                self._process_slot(t)

        for queue in self.queues:
            while queue:
                self._drop(queue.popleft(), "sim_end")

        return RunMetrics(
            pdr=metric_pdr(self.delivered, self.generated),
            mean_delay=metric_delay(self.total_delay, self.delivered),
            throughput=metric_throughput(self.delivered, self.total_sends),
            residual_energy_ratio=metric_residual(self.energy, cfg.initial_energy),
            power_adjustments=self.adjustments,
            drops_by_cause=dict(sorted(self.drops.items())),
            generated=self.generated,
            delivered=self.delivered,
            total_sends=self.total_sends,
            topology_fallbacks=self.fallbacks,
            charged_tx_energy=self.charged_tx,
            charged_rx_energy=self.charged_rx,
        )


def _grid_levels(rp: RadioParams) -> tuple[float, ...]:
    n = int((rp.p_max - rp.p_min) / rp.power_step + 1e-9) + 1
    return tuple(rp.p_min + i * rp.power_step for i in range(n))


def run(cfg: SimConfig, trace: Callable[..., None] | None = None) -> RunMetrics:
    """Execute one seeded run; bit-identical metrics for identical configs."""
    return Simulation(cfg, trace=trace).execute()
