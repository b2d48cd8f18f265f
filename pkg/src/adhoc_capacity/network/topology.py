"""Node placement on the unit square and the cell tessellation.

Cells are addressed either by ``(x, y)`` coordinates or by the flat index
``y * m + x``. A point on the boundary between two cells belongs to the
lower-index cell; coordinate 1.0 falls in the last cell.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import networkx as nx
import numpy as np
from scipy import stats

from .. import rng
from ..config import NetworkConfig
from ..errors import DomainError, InvalidConfigError

logger = logging.getLogger(__name__)

# r(n) = sqrt(5) * side: the farthest two points of edge-adjacent cells
RANGE_FACTOR = math.sqrt(5.0)


@dataclass(frozen=True)
class NodePlacement:
    positions: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class Grid:
    """Square tessellation of the unit square.

    Attributes
    ----------
    m : int
        Cells per side.
    side : float
        Cell side, ``1 / m``.
    cell_of : np.ndarray
        Flat cell index of every node.
    members : list of np.ndarray
        Node indices in every cell, ascending.
    interference : dict
        Flat cell index -> tuple of interfering neighbor cells.
    r : float
        Transmission range used for data hops.
    """

    m: int
    side: float
    cell_of: np.ndarray
    members: List[np.ndarray]
    interference: Dict[int, Tuple[int, ...]]
    r: float

    @property
    def n_cells(self) -> int:
        return self.m * self.m

    def coords(self, cell: int) -> Tuple[int, int]:
        return cell % self.m, cell // self.m

    def index(self, x: int, y: int) -> int:
        return y * self.m + x

    def relay(self, cell: int) -> int:
        """Lowest-index node of the cell, -1 for an empty cell."""
        members = self.members[cell]
        return int(members[0]) if len(members) else -1

    def empty_cells(self) -> List[int]:
        return [c for c, mem in enumerate(self.members) if len(mem) == 0]

    def interference_graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_cells))
        graph.add_edges_from(
            (a, b) for a, nbrs in self.interference.items() for b in nbrs if a < b
        )
        return graph

    def max_degree(self) -> int:
        return max((len(v) for v in self.interference.values()), default=0)


def place_nodes(config: NetworkConfig) -> NodePlacement:
    """Drop ``config.n`` nodes i.i.d. uniformly on the unit square."""
    if config.n < 1:
        raise InvalidConfigError(f"n must be >= 1, got {config.n}")
    positions = rng.stream(config.seed, rng.PLACEMENT).random((config.n, 2))
    return NodePlacement(positions=positions, seed=config.seed)


def cell_side(n: int) -> float:
    """g(n) = sqrt(2 ln n / n), the smallest admissible cell side."""
    if n < 2:
        raise DomainError(f"cell side needs n >= 2, got {n}")
    return math.sqrt(2.0 * math.log(n) / n)


def connectivity_radius(n: int) -> float:
    """sqrt(ln n / (pi n)), below which the network is disconnected w.h.p."""
    if n < 2:
        raise DomainError(f"connectivity radius needs n >= 2, got {n}")
    return math.sqrt(math.log(n) / (math.pi * n))


def cells_per_side(n: int) -> int:
    if n < 2:
        return 1
    return max(1, int(math.floor(1.0 / cell_side(n))))


def reception_radius(config: NetworkConfig) -> float:
    """Radius of the RREQ reception disk of area a(n); infinite when a(n) = 1."""
    area = config.reception_area
    if area >= 1.0:
        return math.inf
    return math.sqrt(area / math.pi)


def locate(positions: np.ndarray, m: int) -> np.ndarray:
    """Flat cell index of every position; upper edges go to the lower cell."""
    xy = np.clip(np.ceil(np.asarray(positions) * m).astype(int) - 1, 0, m - 1)
    return xy[:, 1] * m + xy[:, 0]


def build_grid(placement: NodePlacement, config: NetworkConfig) -> Grid:
    """Tessellate into ``m = max(1, floor(1 / g(n)))`` cells per side."""
    n = placement.n
    m = cells_per_side(n)
    side = 1.0 / m
    r = RANGE_FACTOR * side
    if n >= 2 and r < connectivity_radius(n):
        msg = f"transmission range {r:.4g} is below the connectivity radius"
        msg += f" {connectivity_radius(n):.4g} for n={n}"
        raise DomainError(msg)

    cell_of = locate(placement.positions, m)
    order = np.argsort(cell_of, kind="stable")
    bounds = np.searchsorted(cell_of[order], np.arange(m * m + 1))
    members = [order[bounds[c] : bounds[c + 1]] for c in range(m * m)]

    grid = Grid(m=m, side=side, cell_of=cell_of, members=members,
                interference={}, r=r)
    grid = dataclasses.replace(grid, interference=interfering_neighbors(grid, config))

    empty = grid.empty_cells()
    if empty:
        logger.warning("%d of %d cells are empty (n=%d)", len(empty), m * m, n)
    logger.debug("grid m=%d side=%.4g r=%.4g max degree=%d", m, side, r,
                 grid.max_degree())
    return grid


def interference_offsets(m: int, side: float, r: float, delta: float):
    """Cell offsets (dx, dy) whose closed squares come closer than (2 + delta) r."""
    reach = (2.0 + delta) * r
    offsets = []
    for dx in range(-(m - 1), m):
        for dy in range(-(m - 1), m):
            if dx == 0 and dy == 0:
                continue
            gap_x = max(0, abs(dx) - 1) * side
            gap_y = max(0, abs(dy) - 1) * side
            if math.hypot(gap_x, gap_y) < reach:
                offsets.append((dx, dy))
    return offsets


def interfering_neighbors(grid: Grid, config: NetworkConfig) -> Dict[int, Tuple[int, ...]]:
    """Adjacency between cells with a pair of points within (2 + delta) r.

    The relation only depends on the cell offset, so it is symmetric and
    its degree does not grow with n.
    """
    m = grid.m
    offsets = interference_offsets(m, grid.side, grid.r, config.delta)
    adjacency = {}
    for cell in range(m * m):
        x, y = grid.coords(cell)
        nbrs = [
            (y + dy) * m + (x + dx)
            for dx, dy in offsets
            if 0 <= x + dx < m and 0 <= y + dy < m
        ]
        adjacency[cell] = tuple(sorted(nbrs))
    return adjacency


def empty_cell_bound(n: int) -> float:
    """Upper bound 1 / (2 n ln n) on the probability that some cell is empty."""
    if n < 2:
        raise DomainError(f"empty cell bound needs n >= 2, got {n}")
    return 1.0 / (2.0 * n * math.log(n))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95):
    if trials <= 0:
        raise DomainError("need at least one trial")
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    p = successes / trials
    denom = 1 + z ** 2 / trials
    center = (p + z ** 2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z ** 2 / (4 * trials ** 2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def empty_cell_frequency(n: int, trials: int, seed: int = 0, chunk: int = 2000):
    """Monte Carlo frequency of placements leaving at least one cell empty.

    Returns
    -------
    freq, (low, high) : float, tuple
        Observed frequency and its 95% Wilson interval.
    """
    if n < 2:
        raise DomainError(f"needs n >= 2, got {n}")
    m = cells_per_side(n)
    gen = rng.stream(seed, rng.PLACEMENT, n)
    hits = 0
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        pts = gen.random((size, n, 2))
        cells = locate(pts.reshape(-1, 2), m).reshape(size, n)
        offset = (np.arange(size) * m * m)[:, None]
        counts = np.bincount((cells + offset).ravel(), minlength=size * m * m)
        hits += int(np.any(counts.reshape(size, m * m) == 0, axis=1).sum())
        done += size
    freq = hits / trials
    logger.info("empty cell frequency %.3g over %d placements (n=%d)", freq, trials, n)
    return freq, wilson_interval(hits, trials)
