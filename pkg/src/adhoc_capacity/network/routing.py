"""L-shaped cell routes and per cell route loads.

A route runs horizontally along the source's row to the destination's
column, then vertically to the destination's cell. Every cell on the
path relays through its lowest-index node.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import InvalidConfigError, InvalidRouteError
from .topology import Grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Route:
    src: int
    dst: int
    cells: Tuple[int, ...]

    def __len__(self):
        return len(self.cells)


@dataclass(frozen=True)
class CellLoads:
    """N_i, the number of routes crossing each cell, and its extremes
    relative to sqrt(n ln n)."""

    counts: np.ndarray
    n: int
    max_ratio: float
    min_ratio: float


def _run(start: int, stop: int) -> range:
    step = 1 if stop >= start else -1
    return range(start, stop + step, step)


def build_route(src: int, dst: int, grid: Grid) -> Route:
    """Horizontal run to the destination column, then a vertical run."""
    if src == dst:
        raise InvalidRouteError(f"source and destination are both node {src}")
    xs, ys = grid.coords(int(grid.cell_of[src]))
    xd, yd = grid.coords(int(grid.cell_of[dst]))

    cells = [grid.index(x, ys) for x in _run(xs, xd)]
    cells += [grid.index(xd, y) for y in _run(ys, yd)][1:]
    return Route(src=int(src), dst=int(dst), cells=tuple(cells))


def route_problems(route: Route, grid: Grid) -> List[str]:
    """Empty list when the route is a valid L-shaped cell path."""
    problems = []
    cells = route.cells
    if not cells:
        return ["route has no cells"]
    if cells[0] != grid.cell_of[route.src]:
        problems.append("first cell does not contain the source")
    if cells[-1] != grid.cell_of[route.dst]:
        problems.append("last cell does not contain the destination")

    coords = [grid.coords(c) for c in cells]
    turned = False
    for (x0, y0), (x1, y1) in zip(coords, coords[1:]):
        if abs(x1 - x0) + abs(y1 - y0) != 1:
            problems.append(f"cells ({x0},{y0}) and ({x1},{y1}) are not edge-adjacent")
        if x1 == x0:
            turned = True
        elif turned:
            problems.append("horizontal step after the vertical run")
    return problems


def route_hops(route: Route, grid: Grid) -> List[Tuple[int, int]]:
    """(sender, receiver) node pairs, one per cell of the route.

    The source sends from the first cell, each following cell's relay
    forwards, and the final hop delivers to the destination inside its
    own cell. A hop touching an empty cell has -1 as its node.
    """
    senders = [route.src] + [grid.relay(c) for c in route.cells[1:]]
    receivers = [grid.relay(c) for c in route.cells[1:]] + [route.dst]
    hops = list(zip(senders, receivers))
    if len(hops) > 1 and hops[-1][0] == route.dst:
        # the destination is its cell's relay and was reached one hop early
        hops.pop()
    return hops


def assign_destinations(n: int, gen: np.random.Generator) -> np.ndarray:
    """Uniformly random derangement: ``dest[i] != i`` and no node is the
    destination of two sources."""
    if n < 2:
        raise InvalidConfigError(f"destinations need n >= 2, got {n}")
    while True:
        perm = gen.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def cell_loads(routes: Iterable[Route], grid: Grid) -> CellLoads:
    counts = np.zeros(grid.n_cells, dtype=int)
    for route in routes:
        np.add.at(counts, list(route.cells), 1)
    n = len(grid.cell_of)
    if n >= 2:
        scale = math.sqrt(n * math.log(n))
        max_ratio = counts.max() / scale
        min_ratio = counts.min() / scale
    else:
        max_ratio = min_ratio = float("nan")
    return CellLoads(counts=counts, n=n, max_ratio=float(max_ratio),
                     min_ratio=float(min_ratio))


def loads_frame(loads: CellLoads, grid: Grid) -> pd.DataFrame:
    cells = np.arange(grid.n_cells)
    return pd.DataFrame(
        {"cell_x": cells % grid.m, "cell_y": cells // grid.m, "N_i": loads.counts}
    )


def random_pairing_loads(grid: Grid, gen: np.random.Generator) -> CellLoads:
    """Loads of one full random pairing, every node a source."""
    n = len(grid.cell_of)
    dest = assign_destinations(n, gen)
    return cell_loads((build_route(i, int(d), grid) for i, d in enumerate(dest)), grid)


class DestinationPool:
    """Current destination of every source, kept injective and fixed-point free.

    A source entering state N redraws its destination uniformly among the
    nodes whose holder is another source also in state N, and swaps
    destinations with that holder. Sources in state D never see their
    destination change.
    """

    def __init__(self, n: int, gen: np.random.Generator):
        self.gen = gen
        self.dest = assign_destinations(n, gen)
        self.holder = np.empty(n, dtype=int)
        self.holder[self.dest] = np.arange(n)

    def __getitem__(self, src: int) -> int:
        return int(self.dest[src])

    def redraw(self, src: int, searching: Sequence[bool]) -> int:
        """New destination for ``src``; ``searching[k]`` is True for state N."""
        searching = np.asarray(searching, dtype=bool)
        old = self.dest[src]
        holders = self.holder
        # the partner takes over the old destination, so it must not be old itself
        candidates = np.flatnonzero(
            searching[holders]
            & (holders != src)
            & (np.arange(len(holders)) != src)
            & (holders != old)
        )
        if len(candidates) == 0:
            return int(old)
        new = int(self.gen.choice(candidates))
        partner = holders[new]
        self.dest[src], self.dest[partner] = new, old
        self.holder[new], self.holder[old] = src, partner
        return new
