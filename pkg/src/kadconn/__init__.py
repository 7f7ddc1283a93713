"""Vertex connectivity of simulated Kademlia overlays."""

from .analysis import ConnectivityReport, ResilienceBound, analyze_snapshot, resilience_bound, snapshot_to_graph
from .flowgraph import ConnectivityResult, DiGraph, FlowNetwork, even_transform, vertex_connectivity_graph
from .kademlia import KademliaParams, RoutingTable
from .simulator import ChurnSpec, ScenarioConfig
from .snapshot import Snapshot

__all__ = [
    "ChurnSpec",
    "ConnectivityReport",
    "ConnectivityResult",
    "DiGraph",
    "FlowNetwork",
    "KademliaParams",
    "ResilienceBound",
    "RoutingTable",
    "ScenarioConfig",
    "Snapshot",
    "analyze_snapshot",
    "even_transform",
    "resilience_bound",
    "snapshot_to_graph",
    "vertex_connectivity_graph",
]

__version__ = "0.1.0"
