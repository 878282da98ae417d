"""Capelin: trace-driven capacity planning for virtualized datacenters.

Evaluates portfolios of what-if scenarios (topologies, workloads,
allocation policies, operational phenomena) through discrete-event
simulation and reports comparable VM- and host-level metrics.
"""

__version__ = "0.1.0"
