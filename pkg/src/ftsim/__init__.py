"""Discrete-event simulator for Real-Life Fat-Trees with restricted adaptive routing."""

from .engine import MetricsSeries, SimConfig, run
from .errors import AuditError, ConfigError, FlowControlError, RoutingError, TopologyError
from .queuing import QueueScheme, map_to_vc, mapping_table
from .routing import RoutingConfig, candidate_ports, dmodk_up_port, restricted_path_selection
from .switch import SwitchConfig
from .topology import RLFT, RLFTParams, SwitchPosition, build_rlft, destinations_per_port, enumerate_shortest_paths
from .traffic import TrafficPattern, named_pattern

__all__ = [
    "AuditError",
    "ConfigError",
    "FlowControlError",
    "MetricsSeries",
    "QueueScheme",
    "RLFT",
    "RLFTParams",
    "RoutingConfig",
    "RoutingError",
    "SimConfig",
    "SwitchConfig",
    "SwitchPosition",
    "TopologyError",
    "TrafficPattern",
    "build_rlft",
    "candidate_ports",
    "destinations_per_port",
    "dmodk_up_port",
    "enumerate_shortest_paths",
    "map_to_vc",
    "mapping_table",
    "named_pattern",
    "restricted_path_selection",
    "run",
]
