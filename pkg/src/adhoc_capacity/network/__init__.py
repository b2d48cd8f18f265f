"""Placement, cell routing and channel access."""
from .mac import Schedule, capture_receive, color_schedule, data_slot_success
from .routing import Route, assign_destinations, build_route, cell_loads
from .topology import Grid, NodePlacement, build_grid, cell_side, place_nodes

__all__ = [
    "Grid",
    "NodePlacement",
    "Route",
    "Schedule",
    "assign_destinations",
    "build_grid",
    "build_route",
    "capture_receive",
    "cell_loads",
    "cell_side",
    "color_schedule",
    "data_slot_success",
    "place_nodes",
]
