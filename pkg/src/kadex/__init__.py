"""Knowledge-adaptation lifecycle simulator for off-grid ecological monitoring."""

from .cache import CapacityConfig, CapacityMetric, enforce_eviction, usage
from .perception import Activation, ObservationRecord, activate, ingest_stream
from .power import BatteryState, PowerConfig, energy_budget, lolp, step_battery
from .scheduler import Adaptive, AlwaysOn, FixedWindow, InsightQueue, select_k, transmit
from .sim import Scenario, compare, load_scenario, run
from .skg import (
    Edge, EdgeKind, GraphError, KnowledgeGraph, KnowledgePatch, Node, NodeKind,
    integrate_patch, load_graph, load_patch,
)
from .trigger import (
    entity_distribution, evaluate, structural_entropy, support_scores,
)

__version__ = "0.1.0"
