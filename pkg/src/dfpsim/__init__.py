"""Deterministic discrete-event simulator for Dragonfly+ interconnects."""

from .config import NetworkConfig, load_network, parse_network
from .errors import (
    AccountingError,
    AllocationError,
    ArgumentError,
    ConfigError,
    DfpsimError,
    InvariantError,
    OrderingError,
    QueryError,
    RoutingError,
)
from .routing import RoutingConfig, choose_port, enumerate_candidates
from .simcore import Engine, get_engine
from .topology import MINI_PARAMS, FULL_PARAMS, TopologyParams, build_topology, validate

__version__ = "0.1.0"

__all__ = [
    "AccountingError",
    "AllocationError",
    "ArgumentError",
    "ConfigError",
    "DfpsimError",
    "Engine",
    "InvariantError",
    "MINI_PARAMS",
    "NetworkConfig",
    "OrderingError",
    "FULL_PARAMS",
    "QueryError",
    "RoutingConfig",
    "RoutingError",
    "TopologyParams",
    "build_topology",
    "choose_port",
    "enumerate_candidates",
    "get_engine",
    "load_network",
    "parse_network",
    "validate",
]
