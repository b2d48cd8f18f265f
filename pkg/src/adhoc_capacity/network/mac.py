"""Channel access: the periodic cell schedule for data slots, the protocol
model check for data transmissions and the capture rule for RREQ slots."""
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Hashable, Iterable, List, Mapping, Optional, Set, Tuple

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree

from ..config import NetworkConfig
from ..errors import DomainError
from .topology import NodePlacement, reception_radius

logger = logging.getLogger(__name__)

OK = "ok"
COLLISION = "collision"
OUT_OF_RANGE = "out_of_range"

# candidates fetched per listener when resolving capture ties
_CAPTURE_K = 4


@dataclass(frozen=True)
class Schedule:
    """Cell colors; cell c may send in data slot t iff colors[c] == t % period."""

    colors: np.ndarray
    period: int

    def active_cells(self, data_slot: int) -> np.ndarray:
        return np.flatnonzero(self.colors == data_slot % self.period)


@dataclass
class FloodState:
    """Mutable RREQ state of every node during RDP slots.

    ``pending[i]`` holds the RREQ ids node i will broadcast, oldest first;
    ``seen[i]`` the ids it has received or originated; ``forwarded[i]``
    the ids it has already broadcast. ``transmitting`` is the set of nodes
    sending in the current slot, everyone else listens.
    """

    n: int
    pending: List[Deque[int]] = field(default_factory=list)
    seen: List[Set[int]] = field(default_factory=list)
    forwarded: List[Set[int]] = field(default_factory=list)
    transmitting: Set[int] = field(default_factory=set)

    def __post_init__(self):
        if not self.pending:
            self.pending = [deque() for _ in range(self.n)]
            self.seen = [set() for _ in range(self.n)]
            self.forwarded = [set() for _ in range(self.n)]

    @property
    def listening(self) -> Set[int]:
        return set(range(self.n)) - self.transmitting

    def problems(self) -> List[str]:
        out = []
        if any(not 0 <= i < self.n for i in self.transmitting):
            out.append("transmitting set holds unknown nodes")
        for node, queue in enumerate(self.pending):
            if len(set(queue)) != len(queue):
                out.append(f"node {node} queued the same RREQ twice")
            if self.forwarded[node] & set(queue):
                out.append(f"node {node} queued an RREQ it already forwarded")
        return out


def _in_index_order(graph, colors):
    return iter(sorted(graph))


def lattice_side(interference: Mapping[int, Iterable[int]]) -> Optional[int]:
    """Side k of the periodic k x k lattice coloring of a square grid.

    k is one more than the largest Chebyshev offset between interfering
    cells. None when the cells do not form a square grid or the grid is too
    small to hold the whole interference reach.
    """
    m = math.isqrt(len(interference))
    if m == 0 or m * m != len(interference):
        return None
    reach = 0
    for cell, nbrs in interference.items():
        y, x = divmod(cell, m)
        for other in nbrs:
            oy, ox = divmod(other, m)
            reach = max(reach, abs(ox - x), abs(oy - y))
    if reach >= m - 1:
        return None
    return reach + 1


def color_schedule(interference: Mapping[int, Iterable[int]]) -> Schedule:
    """Proper coloring of the interference graph.

    Cell (x, y) of an m x m grid gets color (y mod k) k + (x mod k) once the
    grid is wider than the interference reach, so the period k^2 no longer
    depends on n. Smaller grids are colored greedily in cell-index order.
    """
    graph = nx.Graph()
    graph.add_nodes_from(interference)
    for cell, nbrs in interference.items():
        for other in nbrs:
            if cell not in interference.get(other, ()):
                msg = f"interference is not symmetric: {cell} -> {other}"
                msg += f" but not {other} -> {cell}"
                raise DomainError(msg)
            graph.add_edge(cell, other)

    n_cells = len(interference)
    k = lattice_side(interference)
    if k is not None:
        y, x = np.divmod(np.arange(n_cells), math.isqrt(n_cells))
        colors = (y % k) * k + (x % k)
        period = k * k
    else:
        coloring = nx.greedy_color(graph, strategy=_in_index_order)
        colors = np.array([coloring[c] for c in range(n_cells)], dtype=int)
        period = int(colors.max()) + 1 if n_cells else 1
    logger.debug("schedule period %d over %d cells (lattice side %s)", period, n_cells, k)
    return Schedule(colors=colors, period=period)


def data_slot_success(
    transmissions: Iterable[Tuple[int, int]],
    placement: NodePlacement,
    config: NetworkConfig,
    r: float,
) -> Dict[Tuple[int, int], str]:
    """Protocol model outcome of every (sender, receiver) pair of one slot.

    A pair succeeds iff the receiver is within ``r`` of its sender and every
    other sender is at least ``(1 + delta) r`` away from the receiver.
    """
    pairs = list(transmissions)
    if not pairs:
        return {}
    pos = placement.positions
    senders = np.array([s for s, _ in pairs], dtype=int)
    receivers = np.array([d for _, d in pairs], dtype=int)
    guard = (1.0 + config.delta) * r

    tree = cKDTree(pos[senders])
    near = tree.query_ball_point(pos[receivers], guard)

    out = {}
    for idx, (sender, receiver) in enumerate(pairs):
        if np.linalg.norm(pos[sender] - pos[receiver]) > r:
            out[(sender, receiver)] = OUT_OF_RANGE
            continue
        blockers = [
            k for k in near[idx]
            if senders[k] != sender
            and np.linalg.norm(pos[senders[k]] - pos[receiver]) < guard
        ]
        out[(sender, receiver)] = COLLISION if blockers else OK
    return out


def capture_winner(
    receiver: int,
    transmitters: Iterable[int],
    placement: NodePlacement,
    config: NetworkConfig,
) -> Optional[int]:
    """Transmitter whose RREQ the receiver captures, or None.

    Candidates are transmitters inside the reception disk; the nearest one
    has the highest SINR under any decreasing path loss with equal powers.
    Exact distance ties go to the lower node index.
    """
    nodes = sorted(set(int(t) for t in transmitters))
    if receiver in nodes:
        raise DomainError(f"node {receiver} is transmitting and cannot listen")
    if not nodes:
        return None
    pos = placement.positions
    dists = np.linalg.norm(pos[nodes] - pos[receiver], axis=1)
    radius = reception_radius(config)
    inside = dists <= radius
    if not inside.any():
        return None
    # argmin returns the first minimum and nodes are sorted
    best = np.argmin(np.where(inside, dists, math.inf))
    return nodes[int(best)]


def capture_receive(
    receiver: int,
    transmitters: Mapping[int, Hashable],
    placement: NodePlacement,
    config: NetworkConfig,
) -> Optional[Hashable]:
    """RREQ id captured by ``receiver`` from ``transmitters`` (node -> RREQ id)."""
    winner = capture_winner(receiver, transmitters.keys(), placement, config)
    return None if winner is None else transmitters[winner]


def capture_round(
    transmitters: np.ndarray,
    listeners: np.ndarray,
    positions: np.ndarray,
    radius: float,
) -> np.ndarray:
    """Winning transmitter for every listener of one slot (-1: nothing heard).

    Same rule as ``capture_winner``, resolved for all listeners at once.
    """
    transmitters = np.asarray(transmitters, dtype=int)
    listeners = np.asarray(listeners, dtype=int)
    winners = np.full(len(listeners), -1, dtype=int)
    if len(transmitters) == 0 or len(listeners) == 0:
        return winners

    k = min(_CAPTURE_K, len(transmitters))
    tree = cKDTree(positions[transmitters])
    bound = radius if math.isinf(radius) else radius * (1 + 1e-12)
    dists, idx = tree.query(positions[listeners], k=k, distance_upper_bound=bound)
    dists = dists.reshape(len(listeners), k)
    idx = idx.reshape(len(listeners), k)

    heard = np.isfinite(dists[:, 0]) & (dists[:, 0] <= radius)
    if not heard.any():
        return winners
    safe_idx = np.where(idx < len(transmitters), idx, 0)
    nodes = np.where(np.isfinite(dists), transmitters[safe_idx], np.iinfo(int).max)
    tied = dists == dists[:, :1]
    choice = np.where(tied, nodes, np.iinfo(int).max).min(axis=1)
    winners[heard] = choice[heard]
    return winners


def path_gain(distance, alpha: float = 3.0):
    """Received power for unit transmit power, ``d ** -alpha``."""
    d = np.maximum(np.asarray(distance, dtype=float), 1e-12)
    return d ** -alpha
