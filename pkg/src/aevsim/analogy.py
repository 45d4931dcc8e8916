"""Mapping layer between the traffic domain and the scheduling domain.

Emergency requests become deadline-carrying tasks whose execution-time
budgets are route ETAs: a task's budget matrix ranges over candidate
(vehicle, route, pre-emption level) triples, and the scheduler's output
vocabulary is mapped back to traffic commands by inverse functions.
"""

from dataclasses import dataclass, field
from enum import IntEnum

from . import preemption, router
from .errors import InvalidField, NoCandidateVehicle, NoRoute
from .network import BLOCKED, EMPTY_OVERLAY, NetworkOverlay, RoadNetwork, TrafficState, is_blocked
from .preemption import PreemptionConfig, PreemptionLevel


class Mode(IntEnum):
    """Service mode: E0 = normal trip, E1 = emergency response."""
    E0 = 0
    E1 = 1


class Criticality(IntEnum):
    """C3/C2 are the life-threatening (purple/red) classes, C1 the orange
    class, C0 non-critical normal service."""
    C0 = 0
    C1 = 1
    C2 = 2
    C3 = 3


VEHICLE_KINDS = ("normal_av", "ambulance", "fire", "police")
SPECIALIZED_KINDS = frozenset(("ambulance", "fire", "police"))
VEHICLE_STATUSES = ("idle", "en_route", "serving")


@dataclass
class Vehicle:
    id: str
    kind: str
    node: str | None = None
    edge_position: tuple[str, float] | None = None  # (edge id, fraction in [0,1))
    status: str = "idle"

    def __post_init__(self):
        if self.kind not in VEHICLE_KINDS:
            raise InvalidField(f"vehicle[{self.id}].kind", f"unknown kind {self.kind!r}")
        if (self.node is None) == (self.edge_position is None):
            raise InvalidField(f"vehicle[{self.id}]",
                               "location must be a node or an edge position, not both")


@dataclass(frozen=True)
class EmergencyRequest:
    id: str
    release_time_s: float
    mode: Mode
    criticality: Criticality
    pickup_node: str
    destination_node: str | None = None
    requested_vehicle_kind: str | None = None

    def __post_init__(self):
        if self.mode == Mode.E0 and self.criticality != Criticality.C0:
            raise InvalidField(f"request[{self.id}]", "normal mode implies criticality C0")
        if self.criticality >= Criticality.C1 and self.mode != Mode.E1:
            raise InvalidField(f"request[{self.id}]",
                               "criticality C1 and above requires emergency mode")


# Contractual response-time targets per country, as (fraction, seconds) pairs
# for the life-threatening classes.
_PRESET_TARGETS = {
    "nz": ((0.5, 480.0), (0.95, 1200.0)),
    "uk": ((0.75, 480.0),),
    "usa": ((0.90, 539.0),),
    "au": ((0.5, 600.0),),
    "hk": ((0.92, 720.0),),
}

POLICY_PRESETS = tuple(sorted(_PRESET_TARGETS))


@dataclass(frozen=True)
class DeadlinePolicy:
    """Per-criticality deadlines (None = unbounded) and percentile targets."""

    deadlines: dict
    targets: dict
    eta_safety_margin: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        for crit, deadline in self.deadlines.items():
            if deadline is not None and deadline <= 0:
                raise InvalidField(f"policy.deadlines[{crit.name}]", "must be positive")
        for crit, pairs in self.targets.items():
            seconds = [s for _, s in pairs]
            if seconds != sorted(seconds):
                raise InvalidField(f"policy.targets[{crit.name}]",
                                   "pairs must be sorted by seconds")
            for fraction, s in pairs:
                if not (0 < fraction <= 1):
                    raise InvalidField(f"policy.targets[{crit.name}]",
                                       f"fraction {fraction} outside (0, 1]")
                if s <= 0:
                    raise InvalidField(f"policy.targets[{crit.name}]",
                                       f"target seconds {s} not positive")
        if self.eta_safety_margin < 1.0:
            raise InvalidField("policy.eta_safety_margin", "must be >= 1")

    @classmethod
    def preset(cls, name: str) -> "DeadlinePolicy":
        try:
            pairs = _PRESET_TARGETS[name]
        except KeyError:
            raise InvalidField("policy", f"unknown preset {name!r}; "
                               f"choose from {', '.join(POLICY_PRESETS)}") from None
        # Life-threatening classes are held to the tightest pair, the orange
        # class to the loosest; non-critical service is best-effort.
        tight = min(s for _, s in pairs)
        loose = max(s for _, s in pairs)
        return cls(
            deadlines={Criticality.C3: tight, Criticality.C2: tight,
                       Criticality.C1: loose, Criticality.C0: None},
            targets={Criticality.C3: tuple(pairs), Criticality.C2: tuple(pairs),
                     Criticality.C1: (), Criticality.C0: ()},
            name=name,
        )

    @classmethod
    def default(cls) -> "DeadlinePolicy":
        return cls.preset("nz")


def deadline_for(criticality: Criticality, policy: DeadlinePolicy) -> float | None:
    """Relative deadline in seconds, or None for best-effort classes."""
    return policy.deadlines.get(criticality)


def compatible_kinds(request: EmergencyRequest) -> frozenset:
    if request.requested_vehicle_kind is not None:
        return frozenset((request.requested_vehicle_kind,))
    if request.criticality >= Criticality.C2:
        return SPECIALIZED_KINDS
    if request.criticality == Criticality.C1:
        return SPECIALIZED_KINDS | {"normal_av"}
    return frozenset(("normal_av",))


@dataclass
class MCTask:
    """Scheduling image of a request: release, criticality-dependent deadline,
    and the ETA budget matrix over (vehicle, route index, pre-emption level)."""

    task_id: str
    request: EmergencyRequest
    release_s: float
    criticality: Criticality
    deadline_s: float | None                      # relative to release
    levels: tuple[PreemptionLevel, ...]
    candidates: dict                              # vehicle id -> tuple of edge tuples
    eta_s: dict                                   # (vid, route idx, level) -> seconds
    disturbance: dict                             # (vid, route idx, level) -> veh-s
    eta_safety_margin: float = 1.0

    @property
    def absolute_deadline_s(self) -> float:
        if self.deadline_s is None:
            return float("inf")
        return self.release_s + self.deadline_s


def _start_point(vehicle: Vehicle, net, state, overlay, now_s: float):
    """Node and time from which a vehicle can begin a fresh route."""
    if vehicle.node is not None:
        return vehicle.node, now_s
    edge_id, fraction = vehicle.edge_position
    edge = net.edge(edge_id)
    full = router.route_eta(net, (edge_id,), now_s, state, overlay)
    if is_blocked(full):
        return edge.to_node, BLOCKED
    return edge.to_node, now_s + (1.0 - fraction) * full


def to_task(request: EmergencyRequest, fleet, net: RoadNetwork, state: TrafficState,
            overlay: NetworkOverlay, policy: DeadlinePolicy,
            k_routes_per_vehicle: int = 3, now_s: float | None = None,
            config: PreemptionConfig = PreemptionConfig(),
            reserved_vehicle_ids: frozenset = frozenset()) -> MCTask:
    """Build the scheduling task for a request.

    Candidate routes are discovered per pre-emption level (higher levels can
    unblock edges) and every candidate is then costed at every level, so the
    budget matrix is non-increasing along the ladder.  Normal-mode requests
    are pinned to P0.
    """
    if now_s is None:
        now_s = request.release_time_s
    if request.mode == Mode.E0 and request.destination_node is None:
        raise InvalidField(f"request[{request.id}]", "normal-mode trips need a destination")

    kinds = compatible_kinds(request)
    hold_back = reserved_vehicle_ids if request.criticality <= Criticality.C1 else frozenset()
    candidates_vehicles = [v for v in fleet
                           if v.status == "idle" and v.kind in kinds
                           and v.id not in hold_back]
    if not candidates_vehicles:
        raise NoCandidateVehicle(f"no idle compatible vehicle for {request.id}")

    levels = ((PreemptionLevel.P0,) if request.mode == Mode.E0 else config.levels())

    candidates: dict = {}
    eta: dict = {}
    disturbance: dict = {}
    any_finite = False
    for vehicle in sorted(candidates_vehicles, key=lambda v: v.id):
        start_node, start_s = _start_point(vehicle, net, state, overlay, now_s)
        if is_blocked(start_s):
            continue
        routes: list[tuple[str, ...]] = []
        seen = set()
        for level in levels:
            search = overlay.merge(preemption.search_overlay(level, net, state, config))
            try:
                discovered = router.k_routes(net, state, search, start_node,
                                             request.pickup_node, start_s,
                                             k_routes_per_vehicle)
            except NoRoute:
                continue
            for route in discovered:
                key = route.edges
                if key not in seen:
                    seen.add(key)
                    routes.append(route.edges)
        if not routes:
            continue
        candidates[vehicle.id] = tuple(routes)
        for ridx, edges in enumerate(routes):
            for level in levels:
                level_overlay, cost = preemption.apply(level, edges, net, state,
                                                       start_s, config)
                value = router.route_eta(net, edges, start_s, state,
                                         overlay.merge(level_overlay))
                if is_blocked(value):
                    eta[(vehicle.id, ridx, level)] = BLOCKED
                    disturbance[(vehicle.id, ridx, level)] = cost.vehicle_seconds
                    continue
                eta[(vehicle.id, ridx, level)] = (start_s - now_s) + value
                disturbance[(vehicle.id, ridx, level)] = cost.vehicle_seconds
                any_finite = True

    if not candidates or not any_finite:
        raise NoRoute(f"no finite-ETA route for {request.id} at any pre-emption level")

    return MCTask(
        task_id=request.id,
        request=request,
        release_s=request.release_time_s,
        criticality=request.criticality,
        deadline_s=deadline_for(request.criticality, policy),
        levels=levels,
        candidates=candidates,
        eta_s=eta,
        disturbance=disturbance,
        eta_safety_margin=policy.eta_safety_margin,
    )


# --- Scheduling decisions (outputs of the scheduler) ---------------------

@dataclass(frozen=True)
class AssignTask:
    task_id: str
    vehicle_id: str
    route: tuple[str, ...]
    level: PreemptionLevel


@dataclass(frozen=True)
class AssignNewDeadline:
    task_id: str
    new_deadline_s: float   # absolute simulation time


@dataclass(frozen=True)
class QueueTask:
    task_id: str


@dataclass(frozen=True)
class AlterPriority:
    task_id: str
    new_priority: int


@dataclass(frozen=True)
class AssignPreemption:
    task_id: str
    level: PreemptionLevel


ScheduleDecision = (AssignTask | AssignNewDeadline | QueueTask | AlterPriority
                    | AssignPreemption)


# --- Traffic commands (inverse-mapped decisions) --------------------------

@dataclass(frozen=True)
class DispatchVehicle:
    vehicle_id: str
    route: tuple[str, ...]


@dataclass(frozen=True)
class ExtendTarget:
    request_id: str
    new_deadline_s: float


@dataclass(frozen=True)
class HoldRequest:
    request_id: str


@dataclass(frozen=True)
class Reprioritize:
    request_id: str
    priority: int


@dataclass(frozen=True)
class ActivatePreemption:
    request_id: str
    level: PreemptionLevel


TrafficCommand = (DispatchVehicle | ExtendTarget | HoldRequest | Reprioritize
                  | ActivatePreemption)


def from_decision(decision: ScheduleDecision) -> tuple[TrafficCommand, ...]:
    """Total, deterministic inverse mapping of scheduler outputs.

    The first command is the primary image of the decision; an assignment at
    a level above P0 additionally activates pre-emption.
    """
    if isinstance(decision, AssignTask):
        commands: tuple[TrafficCommand, ...] = (
            DispatchVehicle(decision.vehicle_id, decision.route),)
        if decision.level > PreemptionLevel.P0:
            commands += (ActivatePreemption(decision.task_id, decision.level),)
        return commands
    if isinstance(decision, AssignNewDeadline):
        return (ExtendTarget(decision.task_id, decision.new_deadline_s),)
    if isinstance(decision, QueueTask):
        return (HoldRequest(decision.task_id),)
    if isinstance(decision, AlterPriority):
        return (Reprioritize(decision.task_id, decision.new_priority),)
    if isinstance(decision, AssignPreemption):
        return (ActivatePreemption(decision.task_id, decision.level),)
    raise TypeError(f"not a schedule decision: {decision!r}")
