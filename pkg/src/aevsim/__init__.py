"""Deterministic dispatch-and-routing simulator for autonomous emergency
vehicles, scheduled as mixed-criticality real-time tasks."""

from .analogy import (
    AlterPriority,
    AssignNewDeadline,
    AssignPreemption,
    AssignTask,
    ActivatePreemption,
    Criticality,
    DeadlinePolicy,
    DispatchVehicle,
    EmergencyRequest,
    ExtendTarget,
    HoldRequest,
    MCTask,
    Mode,
    QueueTask,
    Reprioritize,
    Vehicle,
    deadline_for,
    from_decision,
    to_task,
)
from .errors import (
    DanglingNodeReference,
    DuplicateId,
    InvalidField,
    InvalidParameter,
    InvalidScenario,
    MalformedDocument,
    NoCandidateVehicle,
    NoRoute,
    OutOfRangeValue,
    SimulatorError,
    UnknownEdge,
    UnknownRequest,
)
from .kernel import Scenario, Trace, load_scenario, load_scenario_file, response_time, run
from .metrics import ComplianceReport, compliance, disturbance_total, mortality_delta
from .network import (
    BLOCKED,
    EMPTY_OVERLAY,
    Edge,
    NetworkOverlay,
    Node,
    RoadNetwork,
    SignalPlan,
    TrafficState,
    apply_update,
    is_blocked,
    load_network,
    load_network_file,
    traversal_time,
)
from .preemption import DisturbanceCost, PreemptionConfig, PreemptionLevel
from .router import Route, fastest_route, k_routes, route_eta
from .scheduler import ActiveService, MonitorContext, admit, monitor, priority_order

__version__ = "0.1.0"
