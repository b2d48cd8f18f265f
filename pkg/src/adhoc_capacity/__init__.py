"""Route discovery and throughput capacity of random ad hoc networks.

Slotted Monte Carlo simulation plus the analytic toolkit (success
functions, arrival-rate fixed point, scaling references) used to check
how per node throughput scales with the number of nodes when route
discovery competes with data for the channel.
"""

__version__ = "0.1"
