import math

import numpy as np
import pytest

from adhoc_capacity import rng
from adhoc_capacity.analysis import fit_exponent
from adhoc_capacity.config import NetworkConfig
from adhoc_capacity.errors import InvalidConfigError, InvalidRouteError
from adhoc_capacity.network.routing import (
    DestinationPool,
    Route,
    assign_destinations,
    build_route,
    cell_loads,
    loads_frame,
    random_pairing_loads,
    route_hops,
    route_problems,
)
from adhoc_capacity.network.topology import (
    RANGE_FACTOR,
    Grid,
    build_grid,
    locate,
    place_nodes,
)


@pytest.fixture
def centers_grid():
    """3x3 grid with node y * 3 + x at the center of cell (x, y), plus a
    second node in cell (0, 0)."""
    m = 3
    positions = [((x + 0.5) / m, (y + 0.5) / m) for y in range(m) for x in range(m)]
    positions.append((0.1, 0.1))
    cell_of = locate(np.array(positions), m)
    members = [np.flatnonzero(cell_of == c) for c in range(m * m)]
    return Grid(m=m, side=1 / m, cell_of=cell_of, members=members, interference={},
                r=RANGE_FACTOR / m)


@pytest.fixture(scope="module")
def grid_4096():
    config = NetworkConfig(n=4096, seed=11)
    return build_grid(place_nodes(config), config)


def test_route_inside_one_cell(centers_grid):
    route = build_route(0, 9, centers_grid)
    assert route.cells == (0,)
    assert route_hops(route, centers_grid) == [(0, 9)]


def test_horizontal_route(centers_grid):
    assert build_route(3, 5, centers_grid).cells == (3, 4, 5)


def test_l_shaped_route(centers_grid):
    route = build_route(0, 8, centers_grid)
    assert route.cells == (0, 1, 2, 5, 8)
    assert route_problems(route, centers_grid) == []
    # node 8 relays its own cell, so it is reached by the last forward
    assert route_hops(route, centers_grid) == [(0, 1), (1, 2), (2, 5), (5, 8)]


def test_route_back_to_a_non_relay(centers_grid):
    route = build_route(4, 9, centers_grid)
    assert route.cells == (4, 3, 0)
    assert route_hops(route, centers_grid) == [(4, 3), (3, 0), (0, 9)]


def test_route_to_self_is_invalid(centers_grid):
    with pytest.raises(InvalidRouteError):
        build_route(4, 4, centers_grid)


def test_route_problems_catch_bad_paths(centers_grid):
    assert route_problems(Route(0, 8, (0, 4, 8)), centers_grid)
    assert route_problems(Route(0, 8, (0, 3, 4, 5, 8)), centers_grid)
    assert route_problems(Route(0, 8, ()), centers_grid) == ["route has no cells"]


def test_random_routes_are_l_shaped(grid_4096):
    gen = rng.stream(1, 99)
    for src, dst in gen.integers(0, 4096, size=(500, 2)):
        if src == dst:
            continue
        assert route_problems(build_route(src, dst, grid_4096), grid_4096) == []


def test_two_nodes_swap_destinations():
    np.testing.assert_array_equal(assign_destinations(2, rng.stream(0, 1)), [1, 0])


def test_destinations_form_a_derangement():
    dest = assign_destinations(1000, rng.stream(5, 1))
    assert not np.any(dest == np.arange(1000))
    assert len(set(dest)) == 1000


def test_destinations_need_two_nodes():
    with pytest.raises(InvalidConfigError):
        assign_destinations(1, rng.stream(0, 1))


def test_no_routes_no_load(centers_grid):
    loads = cell_loads([], centers_grid)
    assert loads.counts.sum() == 0


def test_loads_count_route_cells(centers_grid):
    routes = [build_route(0, 8, centers_grid), build_route(3, 5, centers_grid)]
    loads = cell_loads(routes, centers_grid)
    assert loads.counts.sum() == sum(len(r) for r in routes)
    assert list(loads.counts) == [1, 1, 1, 1, 1, 2, 0, 0, 1]


def test_random_pairing_loads_scale_like_sqrt_n_log_n(grid_4096):
    loads = random_pairing_loads(grid_4096, rng.stream(2, 1))
    assert 0.3 <= loads.max_ratio <= 10
    assert loads.min_ratio > 0
    frame = loads_frame(loads, grid_4096)
    assert list(frame.columns) == ["cell_x", "cell_y", "N_i"]
    assert frame["N_i"].sum() == loads.counts.sum()


class TestDestinationPool:
    @pytest.fixture
    def pool(self):
        return DestinationPool(10, rng.stream(4, 1))

    def check(self, pool):
        assert not np.any(pool.dest == np.arange(10))
        assert len(set(pool.dest)) == 10
        np.testing.assert_array_equal(pool.holder[pool.dest], np.arange(10))

    def test_redraws_keep_a_derangement(self, pool):
        gen = rng.stream(4, 2)
        for _ in range(200):
            src = int(gen.integers(10))
            pool.redraw(src, gen.random(10) < 0.5)
            self.check(pool)

    def test_only_searching_sources_are_touched(self, pool):
        searching = np.zeros(10, dtype=bool)
        searching[[3, 7]] = True
        before = pool.dest.copy()
        pool.redraw(3, searching)
        untouched = [i for i in range(10) if i not in (3, 7)]
        np.testing.assert_array_equal(pool.dest[untouched], before[untouched])
        self.check(pool)

    def test_nobody_else_searching_keeps_the_destination(self, pool):
        searching = np.zeros(10, dtype=bool)
        searching[3] = True
        old = pool[3]
        assert pool.redraw(3, searching) == old


@pytest.fixture(scope="module")
def sweep_loads():
    loads = {}
    for n in (256, 1024, 4096, 16384):
        config = NetworkConfig(n=n, seed=n)
        grid = build_grid(place_nodes(config), config)
        loads[n] = random_pairing_loads(grid, rng.stream(n, 1))
    return loads


def test_peak_load_ratio_stays_bounded_across_sizes(sweep_loads):
    ratios = [loads.max_ratio for loads in sweep_loads.values()]
    assert max(ratios) / min(ratios) < 4
    assert fit_exponent(
        [(n, loads.max_ratio) for n, loads in sweep_loads.items()]
    ).slope < 0.15


def test_least_loaded_cell_grows_like_log_n(sweep_loads):
    # corner cells only see routes that start, end or turn there: about
    # 3 n / m^2 of them, which is of order ln n rather than sqrt(n ln n)
    for n, loads in sweep_loads.items():
        assert loads.min_ratio > 0
        assert 2 <= loads.counts.min() / math.log(n) <= 16
