"""End to end slotted simulation under Scheme A.

Slots are either RDP slots or data slots. The control plane runs the D/N
state machine of every node and the route discoveries in RDP slots, once
per run, and records an activity log. The data plane replays that log:
sources in state D generate packets at an offered rate and cells forward
them hop by hop in their schedule color. Throughput is the highest offered
rate whose packets still arrive, found by bisection over replays of the
same log.
"""
import logging
import math
from abc import ABC, abstractmethod
from collections import defaultdict, deque
from dataclasses import asdict, dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np

from . import rng
from .config import NetworkConfig
from .errors import DomainError, InvalidConfigError
from .network.mac import OK, OUT_OF_RANGE, Schedule, color_schedule, data_slot_success
from .network.routing import DestinationPool, Route, build_route, route_hops
from .network.topology import Grid, NodePlacement, build_grid, place_nodes
from .rdp.analysis import g_eval, mean_reach
from .rdp.flood import FloodEngine, ReachCalibration, calibrate_reach

logger = logging.getLogger(__name__)

D = "D"
N = "N"

MIN_HORIZON = 1000

METRIC_COLUMNS = [
    "n",
    "seed",
    "throughput_per_node",
    "xi_measured",
    "tau_measured",
    "active_fraction",
    "lambda_measured",
    "q_measured",
]


def is_rdp_slot(t: int, theta: float) -> bool:
    """Slot t carries route discovery iff floor((t + 1) theta) > floor(t theta)."""
    return math.floor((t + 1) * theta) > math.floor(t * theta)


def active_fraction(tau: float, xi: float) -> float:
    """Share of time a node spends in state D, tau / (tau + xi)."""
    if tau < 0 or xi < 0:
        raise DomainError(f"tau and xi must be >= 0, got tau={tau}, xi={xi}")
    if tau + xi == 0:
        raise DomainError("tau + xi must be > 0")
    return tau / (tau + xi)


@dataclass
class NodeState:
    """Control state of one node.

    ``d_until`` is the slot at which the current D period ends (the D timer
    as an absolute slot). ``in_flight`` is set while a discovery of the node
    is unresolved.
    """

    mode: str = D
    dest: int = -1
    route: Optional[Route] = None
    d_until: int = 0
    in_flight: bool = False
    since: int = 0

    def problems(self) -> List[str]:
        out = []
        if self.mode == D and (self.route is None or self.dest < 0):
            out.append("node in D without a route")
        if self.mode == N and self.route is not None:
            out.append("node in N still holds a route")
        if self.mode == D and self.in_flight:
            out.append("node in D with a discovery in flight")
        return out


@dataclass(frozen=True)
class Period:
    node: int
    mode: str
    start: int
    end: int
    route: Optional[Route] = None
    complete: bool = True


@dataclass(frozen=True)
class Attempt:
    """One discovery, initiated in RDP slot ``slot`` and resolved in ``resolved``."""

    slot: int
    resolved: int
    node: int
    f: float
    success: bool


@dataclass
class ControlLog:
    """Everything the data plane and the metrics need from the control plane."""

    n: int
    horizon: int
    warmup: int
    periods: List[Period] = field(default_factory=list)
    attempts: List[Attempt] = field(default_factory=list)
    initiations: int = 0
    nbar_r: float = float("nan")

    @property
    def window(self) -> int:
        return self.horizon - self.warmup

    def timelines(self) -> Dict[int, List[Period]]:
        out = defaultdict(list)
        for p in sorted(self.periods, key=lambda p: (p.node, p.start, p.end)):
            out[p.node].append(p)
        return out


def timeline_problems(log: ControlLog) -> List[str]:
    """Every node must alternate D and N without gaps."""
    problems = []
    for node, periods in log.timelines().items():
        for a, b in zip(periods, periods[1:]):
            if a.mode == b.mode:
                problems.append(f"node {node}: two {a.mode} periods in a row at {b.start}")
            if a.end != b.start:
                problems.append(f"node {node}: gap between slots {a.end} and {b.start}")
    return problems


class DiscoveryArbiter(ABC):
    """Decides which route discoveries succeed, one RDP slot at a time."""

    mode: str

    def __init__(
        self,
        placement: NodePlacement,
        config: NetworkConfig,
        gen: np.random.Generator,
    ):
        self.n = placement.n
        self.config = config
        self.gen = gen

    @abstractmethod
    def rdp_slot(self, t: int, initiators: Sequence[int]) -> List[Tuple[int, int, float, bool]]:
        """(node, initiation slot, reach, success) for every discovery resolved
        in slot t."""
        raise NotImplementedError("Must be implemented by subclass")

    @property
    @abstractmethod
    def nbar_r(self) -> float:
        raise NotImplementedError("Must be implemented by subclass")

    def _succeeds(self, f: float) -> bool:
        return bool(self.gen.random() < g_eval(self.config.gmodel, f, self.n))


class AnalyticArbiter(DiscoveryArbiter):
    """Success ~ Bernoulli(G(f)) with f the calibrated mean reach under the
    current RDP load, min(f_single, n_r / (lambda_rdp (n - 1)))."""

    mode = "analytic"
    smoothing = 0.05

    def __init__(self, placement, config, gen, calibration: Optional[ReachCalibration] = None):
        super().__init__(placement, config, gen)
        self.calibration = calibration or calibrate_reach(placement, config)
        self.load = 0.0

    @property
    def nbar_r(self) -> float:
        return self.calibration.nbar_r

    def reach(self) -> float:
        f_single = self.calibration.f_single
        if self.load <= 0 or self.nbar_r <= 0:
            return f_single
        return min(f_single, mean_reach(self.nbar_r, self.load, self.n))

    def rdp_slot(self, t, initiators):
        self.load += self.smoothing * (len(initiators) - self.load)
        if not initiators:
            return []
        f = self.reach()
        return [(node, t, f, self._succeeds(f)) for node in initiators]


class FloodedArbiter(DiscoveryArbiter):
    """Every discovery is a real flood; success ~ Bernoulli(G(f)) at closure."""

    mode = "flooded"

    def __init__(self, placement, config, gen, calibration=None):
        super().__init__(placement, config, gen)
        self.engine = FloodEngine(placement, config, keep_history=False)
        self.origin_of: Dict[int, Tuple[int, int]] = {}

    @property
    def nbar_r(self) -> float:
        if not self.engine.slots_stepped:
            return float("nan")
        return self.engine.first_receptions_total / self.engine.slots_stepped

    def rdp_slot(self, t, initiators):
        for node in initiators:
            self.origin_of[self.engine.initiate(node)] = (node, t)
        if not self.engine.busy:
            return []
        return [
            self.origin_of.pop(o.rdp_id) + (o.f, self._succeeds(o.f))
            for o in self.engine.step()
        ]


def success_mode(config: NetworkConfig) -> Type[DiscoveryArbiter]:
    """Arbiter class for ``config.success_mode`` (analytic or flooded)."""
    modes = {cls.mode: cls for cls in DiscoveryArbiter.__subclasses__()}
    try:
        return modes[config.success_mode]
    except KeyError:
        msg = f"Unknown success mode {config.success_mode!r}."
        msg += f" Expected one of {sorted(modes)}"
        raise InvalidConfigError(msg)


def _effective_tau(config: NetworkConfig) -> float:
    tau = config.tau
    if tau < 1:
        logger.warning("tau(%d) = %.3g slots is below one slot, using 1", config.n, tau)
        return 1.0
    return tau


def run_control_plane(
    placement: NodePlacement,
    grid: Grid,
    config: NetworkConfig,
    horizon: int,
    calibration: Optional[ReachCalibration] = None,
) -> ControlLog:
    """Run the D/N machine of every node for ``horizon`` slots.

    Every node starts in D with a route to its first destination. A D
    period lasts a geometric number of slots with mean tau(n); at its end
    the node enters N and draws a new destination. Discoveries go out in
    RDP slots only: an idle node in N initiates in an RDP slot with
    probability nu times the slots of N it spent since its last chance, so
    attempts arrive at rate nu per slot and an N period lasts 1 / (nu Q')
    slots on average. A successful discovery puts the node back in D from
    the following slot.
    """
    n = placement.n
    gen = rng.stream(config.seed, rng.CONTROL)
    pool = DestinationPool(n, rng.stream(config.seed, rng.DESTINATIONS))
    tau = _effective_tau(config)
    arbiter = success_mode(config)(placement, config, gen, calibration=calibration)
    if config.nu * math.ceil(1.0 / config.theta) > 1:
        logger.warning(
            "nu=%.3g is above one attempt per RDP slot at theta=%.3g;"
            " N periods will outlast 1 / (nu Q')", config.nu, config.theta,
        )

    log = ControlLog(n=n, horizon=horizon, warmup=int(config.warmup_fraction * horizon))
    ends = defaultdict(list)
    searching = np.zeros(n, dtype=bool)
    idle = np.zeros(n, dtype=bool)
    window_start = np.zeros(n, dtype=np.int64)

    def enter_d(node, t):
        state = states[node]
        state.mode = D
        state.dest = pool[node]
        state.route = build_route(node, state.dest, grid)
        state.d_until = t + int(gen.geometric(1.0 / tau))
        state.in_flight = False
        state.since = t
        searching[node] = idle[node] = False
        ends[state.d_until].append(node)

    def reopen(node, t):
        states[node].in_flight = False
        window_start[node] = t
        idle[node] = True

    states = [NodeState(dest=pool[i]) for i in range(n)]
    for node in range(n):
        enter_d(node, 0)

    for t in range(horizon):
        for node in ends.pop(t, ()):
            state = states[node]
            log.periods.append(Period(node, D, state.since, t, state.route))
            state.mode = N
            state.route = None
            state.since = t
            searching[node] = True
            state.dest = pool.redraw(node, searching)
            reopen(node, t)

        if not is_rdp_slot(t, config.theta):
            continue

        waiting = np.flatnonzero(idle)
        initiators = []
        if waiting.size and config.nu > 0:
            chance = np.minimum(1.0, config.nu * (t + 1 - window_start[waiting]))
            initiators = waiting[gen.random(waiting.size) < chance].tolist()
        window_start[waiting] = t + 1
        for node in initiators:
            states[node].in_flight = True
            idle[node] = False
        if t >= log.warmup:
            log.initiations += len(initiators)

        for node, started, f, ok in arbiter.rdp_slot(t, initiators):
            log.attempts.append(Attempt(started, t, node, f, ok))
            if ok:
                log.periods.append(Period(node, N, states[node].since, t + 1))
                enter_d(node, t + 1)
            else:
                reopen(node, t + 1)

    for node, state in enumerate(states):
        if state.since < horizon:
            log.periods.append(
                Period(node, state.mode, state.since, horizon, state.route, complete=False)
            )
    log.nbar_r = arbiter.nbar_r
    logger.debug("control plane n=%d: %d periods, %d discoveries",
                 n, len(log.periods), len(log.attempts))
    return log


@dataclass
class DataResult:
    rate: float
    generated: int = 0
    delivered: int = 0
    collisions: int = 0
    lost: int = 0

    @property
    def delivery_ratio(self) -> float:
        if self.generated == 0:
            return 1.0
        return self.delivered / self.generated


class _Path:
    __slots__ = ("cells", "hops", "broken")

    def __init__(self, route: Route, grid: Grid):
        self.cells = route.cells
        self.hops = route_hops(route, grid)
        self.broken = any(s < 0 or r < 0 for s, r in self.hops)


class _Packet:
    __slots__ = ("path", "hop", "measured")

    def __init__(self, path, measured):
        self.path = path
        self.hop = 0
        self.measured = measured


class _RelayQueue:
    """Packets waiting at one cell: a FIFO per route, routes served in turn."""

    __slots__ = ("flows", "turn")

    def __init__(self):
        self.flows: Dict[_Path, Deque[_Packet]] = {}
        self.turn: Deque[_Path] = deque()

    def __bool__(self):
        return bool(self.turn)

    def push(self, pkt: _Packet, front: bool = False):
        flow = self.flows.get(pkt.path)
        if flow is None:
            flow = self.flows[pkt.path] = deque()
            self.turn.append(pkt.path)
        if front:
            flow.appendleft(pkt)
        else:
            flow.append(pkt)

    def pop(self) -> _Packet:
        path = self.turn.popleft()
        flow = self.flows[path]
        pkt = flow.popleft()
        if flow:
            self.turn.append(path)
        else:
            del self.flows[path]
        return pkt


def replay_data_plane(
    log: ControlLog,
    placement: NodePlacement,
    grid: Grid,
    schedule: Schedule,
    config: NetworkConfig,
    rate: float,
) -> DataResult:
    """Carry traffic at ``rate`` packets per data slot per active source.

    Each cell keeps a FIFO per route and, whenever its color is active,
    forwards the head packet of the next route in turn one hop. A packet
    that collides goes back to the head of its route queue.
    Packets generated in the measured window count; a drain phase after
    the horizon lets them arrive.
    """
    gen = rng.stream(config.seed, rng.TRAFFIC)
    result = DataResult(rate=rate)
    starts = defaultdict(list)
    stops = defaultdict(list)
    for p in log.periods:
        if p.mode == D and p.end > p.start:
            starts[p.start].append(p)
            stops[p.end].append(p)

    queues = [_RelayQueue() for _ in range(grid.n_cells)]
    active: Dict[int, _Path] = {}
    broken = 0
    data_slot = 0
    drain = int(config.drain_fraction * log.horizon)

    for t in range(log.horizon + drain):
        if t < log.horizon:
            for p in stops.pop(t, ()):
                active.pop(p.node, None)
            for p in starts.pop(t, ()):
                path = _Path(p.route, grid)
                broken += path.broken
                active[p.node] = path
            if is_rdp_slot(t, config.theta):
                continue
            if active:
                measured = t >= log.warmup
                nodes = list(active)
                for k in np.flatnonzero(gen.random(len(nodes)) < rate):
                    path = active[nodes[k]]
                    result.generated += measured
                    if path.broken:
                        result.lost += measured
                        continue
                    queues[path.cells[0]].push(_Packet(path, measured))

        heads = [(c, queues[c].pop()) for c in schedule.active_cells(data_slot) if queues[c]]
        data_slot += 1
        if not heads:
            continue
        pairs = [pkt.path.hops[pkt.hop] for _, pkt in heads]
        status = data_slot_success(pairs, placement, config, grid.r)
        for (cell, pkt), pair in zip(heads, pairs):
            outcome = status[pair]
            if outcome == OK:
                pkt.hop += 1
                if pkt.hop == len(pkt.path.hops):
                    result.delivered += pkt.measured
                else:
                    queues[pkt.path.cells[pkt.hop]].push(pkt)
            elif outcome == OUT_OF_RANGE:
                result.lost += pkt.measured
            else:
                result.collisions += 1
                queues[cell].push(pkt, front=True)

    if broken:
        logger.warning("%d routes cross an empty cell; their packets are lost", broken)
    return result


def sustained_throughput(
    log: ControlLog,
    placement: NodePlacement,
    grid: Grid,
    schedule: Schedule,
    config: NetworkConfig,
) -> DataResult:
    """Highest offered rate delivering at least ``delivery_target`` of its
    packets, by geometric bisection between ``rate_floor`` and 1."""

    def probe(rate):
        res = replay_data_plane(log, placement, grid, schedule, config, rate)
        logger.debug("offered rate %.4g: delivery ratio %.3f", rate, res.delivery_ratio)
        return res

    target = config.delivery_target
    top = probe(1.0)
    if top.delivery_ratio >= target:
        return top
    best = probe(config.rate_floor)
    if best.delivery_ratio < target:
        logger.warning(
            "rate floor %.3g already misses the delivery target (ratio %.3f, n=%d)",
            config.rate_floor, best.delivery_ratio, config.n,
        )
        return best

    lo, hi = config.rate_floor, 1.0
    for _ in range(config.rate_bisection_steps):
        mid = math.sqrt(lo * hi)
        res = probe(mid)
        if res.delivery_ratio >= target:
            lo, best = mid, res
        else:
            hi = mid
    return best


@dataclass(frozen=True)
class Metrics:
    n: int
    seed: int
    throughput_per_node: float
    xi_measured: float
    tau_measured: float
    active_fraction: float
    lambda_measured: float
    q_measured: float
    delivered_bits: float
    offered_rate: float
    delivery_ratio: float
    nbar_r: float
    mean_reach: float
    gamma_hat: float
    schedule_period: int
    data_collisions: int

    def to_row(self) -> dict:
        return asdict(self)


def _renewal_mean(time_in_state: float, exits: int) -> float:
    if exits:
        return time_in_state / exits
    return math.inf if time_in_state > 0 else math.nan


def summarize(log: ControlLog, data: DataResult, config: NetworkConfig,
              schedule: Schedule) -> Metrics:
    lo, hi = log.warmup, log.horizon
    time_in = {D: 0, N: 0}
    exits = {D: 0, N: 0}
    for p in log.periods:
        time_in[p.mode] += max(0, min(p.end, hi) - max(p.start, lo))
        if p.complete and lo < p.end <= hi:
            exits[p.mode] += 1

    attempts = [a for a in log.attempts if a.slot >= lo]
    reach = np.array([a.f for a in attempts])
    mean_f = float(reach.mean()) if len(reach) else math.nan
    window = log.window

    return Metrics(
        n=log.n,
        seed=config.seed,
        throughput_per_node=config.w * data.delivered / (log.n * window),
        xi_measured=_renewal_mean(time_in[N], exits[N]),
        tau_measured=_renewal_mean(time_in[D], exits[D]),
        active_fraction=time_in[D] / (log.n * window),
        lambda_measured=log.initiations / window,
        q_measured=(sum(a.success for a in attempts) / len(attempts)
                    if attempts else math.nan),
        delivered_bits=data.delivered * config.s_rreq,
        offered_rate=data.rate,
        delivery_ratio=data.delivery_ratio,
        nbar_r=float(log.nbar_r),
        mean_reach=mean_f,
        gamma_hat=float(np.median(reach) / mean_f) if mean_f and mean_f > 0 else math.nan,
        schedule_period=schedule.period,
        data_collisions=data.collisions,
    )


def run_simulation(
    config: NetworkConfig,
    horizon_slots: int,
    calibration: Optional[ReachCalibration] = None,
) -> Metrics:
    """Simulate one network for ``horizon_slots`` slots and measure it.

    Parameters
    ----------
    config : NetworkConfig
        The network, including the success mode and G model.
    horizon_slots : int
        Slots to simulate, at least 1000; the first ``warmup_fraction`` are
        not measured.
    calibration : ReachCalibration, optional
        Reach table for the analytic success mode, measured from this
        placement when omitted.
    """
    if horizon_slots < MIN_HORIZON:
        raise InvalidConfigError(f"horizon must be >= {MIN_HORIZON} slots, got {horizon_slots}")
    if config.n < 2:
        raise InvalidConfigError(f"a network needs n >= 2 nodes, got {config.n}")

    placement = place_nodes(config)
    grid = build_grid(placement, config)
    schedule = color_schedule(grid.interference)
    log = run_control_plane(placement, grid, config, horizon_slots, calibration)
    data = sustained_throughput(log, placement, grid, schedule, config)
    metrics = summarize(log, data, config, schedule)
    logger.info(
        "n=%d seed=%d: T=%.4g xi=%.4g tau=%.4g active=%.3f",
        config.n, config.seed, metrics.throughput_per_node, metrics.xi_measured,
        metrics.tau_measured, metrics.active_fraction,
    )
    return metrics
