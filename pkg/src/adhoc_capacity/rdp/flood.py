"""Slotted RREQ flooding.

A node that first receives an RREQ in one RDP slot rebroadcasts it in the
next one, at most once. Nodes sending in a slot cannot listen; a listener
keeps the one RREQ the capture rule hands it. ``FloodEngine`` runs any
number of floods over shared RDP slots and is also driven slot by slot by
the simulator's flooded success mode.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .. import rng
from ..config import NetworkConfig
from ..errors import DomainError, InvalidConfigError
from ..network.mac import FloodState, capture_round
from ..network.topology import NodePlacement, reception_radius

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["slot", "rdp_id", "origin", "transmitters", "first_receptions"]


@dataclass(frozen=True)
class RdpOutcome:
    """Result of one flood.

    ``f`` is the fraction of the other n - 1 nodes that ever received the
    RREQ and ``first_receptions_per_slot[k]`` the receptions in the k-th
    slot of the flood, which starts at absolute RDP slot ``start_slot``.
    """

    rdp_id: int
    origin: int
    f: float
    slots_used: int
    first_receptions_per_slot: Tuple[int, ...]
    start_slot: int = 0

    @property
    def receivers(self) -> int:
        return int(sum(self.first_receptions_per_slot))


@dataclass(frozen=True)
class FloodStats:
    mean_f: float
    median_f: float
    nbar_r: float
    gamma_hat: float
    chat: float
    floods: int


class _Flood:
    __slots__ = ("rdp_id", "origin", "start", "budget", "queued", "receivers", "counts", "touched")

    def __init__(self, rdp_id, origin, start, budget):
        self.rdp_id = rdp_id
        self.origin = origin
        self.start = start
        self.budget = budget
        self.queued = 1
        self.receivers = 0
        self.counts = []
        self.touched = [origin]


class FloodEngine:
    """Shared RDP slots for concurrent floods.

    Parameters
    ----------
    placement : NodePlacement
        Node positions.
    config : NetworkConfig
        Supplies the reception area and the trace switch.
    slot_budget : int, optional
        Slots after which an unfinished flood is closed, defaults to
        ``config.flood_slot_budget``.
    keep_history : bool
        Keep the seen and forwarded sets of closed floods. Long runs turn
        this off so the sets only hold running floods.
    """

    def __init__(
        self,
        placement: NodePlacement,
        config: NetworkConfig,
        slot_budget: Optional[int] = None,
        keep_history: bool = True,
    ):
        if placement.n < 2:
            raise DomainError(f"flooding needs n >= 2 nodes, got {placement.n}")
        budget = config.flood_slot_budget if slot_budget is None else slot_budget
        if budget < 1:
            raise InvalidConfigError(f"slot_budget must be >= 1, got {budget}")

        self.n = placement.n
        self.positions = placement.positions
        self.radius = reception_radius(config)
        self.budget = int(budget)
        self.trace = config.trace_floods
        self.keep_history = keep_history
        self.state = FloodState(self.n)
        self.slot = 0
        self.active: Dict[int, _Flood] = {}
        self.trace_rows: List[dict] = []
        self.first_receptions_total = 0
        self.slots_stepped = 0
        self._ids = itertools.count()
        self._queued_nodes = set()

    def initiate(self, origin: int, rdp_id: Optional[int] = None) -> int:
        """Queue a new RREQ at ``origin``; it is broadcast in the next step."""
        if not 0 <= origin < self.n:
            raise DomainError(f"origin {origin} is not a node of this network")
        rdp_id = next(self._ids) if rdp_id is None else rdp_id
        if rdp_id in self.active:
            raise DomainError(f"RDP {rdp_id} is already running")
        self.active[rdp_id] = _Flood(rdp_id, origin, self.slot, self.budget)
        self.state.seen[origin].add(rdp_id)
        self.state.pending[origin].append(rdp_id)
        self._queued_nodes.add(origin)
        return rdp_id

    @property
    def busy(self) -> bool:
        return bool(self.active)

    def _next_payload(self, node: int) -> Optional[int]:
        queue = self.state.pending[node]
        while queue:
            rdp_id = queue.popleft()
            if rdp_id in self.active:
                return rdp_id
        return None

    def step(self) -> List[RdpOutcome]:
        """Run one RDP slot; return the floods closed by it."""
        state = self.state
        sending = {}
        for node in sorted(self._queued_nodes):
            rdp_id = self._next_payload(node)
            if rdp_id is not None:
                sending[node] = rdp_id
            if not state.pending[node]:
                self._queued_nodes.discard(node)

        for node, rdp_id in sending.items():
            if rdp_id in state.forwarded[node]:
                raise RuntimeError(f"node {node} would forward RDP {rdp_id} twice")
            state.forwarded[node].add(rdp_id)
            self.active[rdp_id].queued -= 1
        state.transmitting = set(sending)

        transmitters = np.fromiter(sorted(sending), dtype=int, count=len(sending))
        listeners = np.setdiff1d(np.arange(self.n), transmitters)
        winners = capture_round(transmitters, listeners, self.positions, self.radius)

        fresh = dict.fromkeys(self.active, 0)
        for listener, winner in zip(listeners[winners >= 0], winners[winners >= 0]):
            rdp_id = sending[int(winner)]
            if rdp_id in state.seen[listener]:
                continue
            state.seen[listener].add(rdp_id)
            state.pending[listener].append(rdp_id)
            self._queued_nodes.add(int(listener))
            flood = self.active[rdp_id]
            flood.queued += 1
            flood.receivers += 1
            flood.touched.append(int(listener))
            fresh[rdp_id] += 1

        total = sum(fresh.values())
        self.first_receptions_total += total
        self.slots_stepped += 1
        logger.debug("RDP slot %d: %d senders, %d first receptions",
                     self.slot, len(sending), total)

        if self.trace:
            senders_per_flood = dict.fromkeys(self.active, 0)
            for rdp_id in sending.values():
                senders_per_flood[rdp_id] += 1
            for rdp_id, flood in self.active.items():
                self.trace_rows.append({
                    "slot": self.slot,
                    "rdp_id": rdp_id,
                    "origin": flood.origin,
                    "transmitters": senders_per_flood[rdp_id],
                    "first_receptions": fresh[rdp_id],
                })

        closed = []
        for rdp_id, flood in list(self.active.items()):
            flood.counts.append(fresh[rdp_id])
            if flood.queued == 0 or len(flood.counts) >= flood.budget:
                closed.append(self._close(flood))
        self.slot += 1
        return closed

    def _close(self, flood: _Flood) -> RdpOutcome:
        del self.active[flood.rdp_id]
        if not self.keep_history:
            for node in flood.touched:
                self.state.seen[node].discard(flood.rdp_id)
                self.state.forwarded[node].discard(flood.rdp_id)
        if flood.queued:
            logger.debug("RDP %d hit the slot budget with %d broadcasts pending",
                         flood.rdp_id, flood.queued)
        return RdpOutcome(
            rdp_id=flood.rdp_id,
            origin=flood.origin,
            f=flood.receivers / (self.n - 1),
            slots_used=len(flood.counts),
            first_receptions_per_slot=tuple(flood.counts),
            start_slot=flood.start,
        )

    def run_until_idle(self) -> List[RdpOutcome]:
        outcomes = []
        while self.active:
            outcomes.extend(self.step())
        return sorted(outcomes, key=lambda o: o.rdp_id)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.trace_rows, columns=TRACE_COLUMNS)


def run_flood(
    origin: int,
    placement: NodePlacement,
    config: NetworkConfig,
    slot_budget: Optional[int] = None,
) -> RdpOutcome:
    """Flood one RREQ from ``origin`` until it dies out or the budget ends."""
    engine = FloodEngine(placement, config, slot_budget)
    engine.initiate(origin)
    (outcome,) = engine.run_until_idle()
    return outcome


def run_concurrent_floods(
    origins: Sequence[int],
    placement: NodePlacement,
    config: NetworkConfig,
    slot_budget: Optional[int] = None,
    engine: Optional[FloodEngine] = None,
) -> Tuple[List[RdpOutcome], FloodStats]:
    """Start one flood per origin in the same slot and run them together.

    A node with several pending RREQs sends the oldest first, one per slot.
    """
    origins = list(origins)
    if not origins:
        raise DomainError("need at least one origin")
    engine = engine or FloodEngine(placement, config, slot_budget)
    for origin in origins:
        engine.initiate(int(origin))
    outcomes = engine.run_until_idle()
    return outcomes, flood_stats(outcomes, placement.n)


def flood_stats(outcomes: Iterable[RdpOutcome], n: int) -> FloodStats:
    """Reach statistics of a set of floods.

    ``nbar_r`` averages the first receptions of all floods over the RDP
    slots in which at least one of them was running.
    """
    outcomes = list(outcomes)
    if not outcomes:
        raise DomainError("flood_stats needs at least one outcome")
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")

    reach = np.array([o.f for o in outcomes])
    mean_f = float(reach.mean())
    median_f = float(np.median(reach))

    running = set()
    for o in outcomes:
        running.update(range(o.start_slot, o.start_slot + o.slots_used))
    received = sum(o.receivers for o in outcomes)
    nbar_r = received / len(running) if running else 0.0

    gamma_hat = median_f / mean_f if mean_f > 0 else float("nan")
    return FloodStats(
        mean_f=mean_f,
        median_f=median_f,
        nbar_r=float(nbar_r),
        gamma_hat=float(gamma_hat),
        chat=float(nbar_r / n),
        floods=len(outcomes),
    )


@dataclass(frozen=True)
class ReachCalibration:
    """Single-flood reach and saturated first receptions of one placement."""

    f_single: float
    nbar_r: float
    gamma_hat: float
    single: FloodStats
    loaded: FloodStats


def calibrate_reach(placement: NodePlacement, config: NetworkConfig) -> ReachCalibration:
    """Measure what the analytic success mode needs from real floods.

    ``f_single`` is the mean reach of ``calibration_floods`` isolated floods.
    ``nbar_r`` is the first receptions per RDP slot when a fraction
    ``calibration_origin_fraction`` of the nodes flood at once.
    """
    gen = rng.stream(config.seed, rng.CALIBRATION)
    n = placement.n
    singles = [
        run_flood(int(origin), placement, config)
        for origin in gen.integers(0, n, size=config.calibration_floods)
    ]
    single = flood_stats(singles, n)

    k = max(1, int(round(config.calibration_origin_fraction * n)))
    origins = gen.choice(n, size=min(k, n), replace=False)
    _, loaded = run_concurrent_floods(origins, placement, config)

    logger.info(
        "reach calibration n=%d: single f=%.3f, loaded n_r=%.2f over %d origins",
        n, single.mean_f, loaded.nbar_r, len(origins),
    )
    return ReachCalibration(
        f_single=single.mean_f,
        nbar_r=loaded.nbar_r,
        gamma_hat=single.gamma_hat,
        single=single,
        loaded=loaded,
    )


def outcomes_frame(outcomes: Iterable[RdpOutcome]) -> pd.DataFrame:
    rows = [
        {
            "rdp_id": o.rdp_id,
            "origin": o.origin,
            "f": o.f,
            "slots_used": o.slots_used,
            "receivers": o.receivers,
            "start_slot": o.start_slot,
        }
        for o in outcomes
    ]
    return pd.DataFrame(rows, columns=["rdp_id", "origin", "f", "slots_used",
                                       "receivers", "start_slot"])
