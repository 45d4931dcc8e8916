"""Road network model: static graph, immutable traffic snapshots, overlays,
and the edge traversal-time function all routing is built on.

Traversal time decomposes as drive + queue + signal + pedestrian:

    t_drive  = (length / v_eff) * (1 + ALPHA * congestion^2)
    v_eff    = speed_limit * slope_factor * speed_cap_factor
    t_queue  = 2 s per queued vehicle
    t_signal = wait until the next green window, evaluated at stop-line arrival
    t_ped    = min(10 s, 0.05 s per pedestrian-per-minute)

A halted edge blocks entirely unless a reverse-lane privilege is active.
Reserved-lane privileges bypass the congestion and queue terms (the vehicle
passes the stopped traffic), but only on edges with at least two lanes.
"""

import json
import math
from dataclasses import dataclass, field

from .errors import (
    DanglingNodeReference,
    DuplicateId,
    InvalidField,
    MalformedDocument,
    OutOfRangeValue,
    UnknownEdge,
)

NETWORK_FORMAT = "mcrts-net/1"

BLOCKED = math.inf

CONGESTION_ALPHA = 4.0
QUEUE_HEADWAY_S = 2.0
PED_DELAY_PER_FLOW_S = 0.05
PED_DELAY_CAP_S = 10.0


def is_blocked(seconds: float) -> bool:
    return math.isinf(seconds)


@dataclass(frozen=True)
class SignalPlan:
    cycle_s: float
    green_window: tuple[float, float]  # [start_s, end_s) within the cycle
    offset_s: float = 0.0

    def wait_to_green(self, t_s: float) -> float:
        """Seconds from t_s until the signal is (or next turns) green."""
        start, end = self.green_window
        phase = (t_s - self.offset_s) % self.cycle_s
        if start <= phase < end:
            return 0.0
        return (start - phase) % self.cycle_s

    def red_duration_s(self) -> float:
        start, end = self.green_window
        return self.cycle_s - (end - start)


@dataclass(frozen=True)
class Node:
    id: str
    signalized: bool = False
    signal: SignalPlan | None = None


@dataclass(frozen=True)
class Edge:
    id: str
    from_node: str
    to_node: str
    length_m: float
    lanes: int = 1
    speed_limit_mps: float = 13.9
    slope_factor: float = 1.0
    reverse_twin: str | None = None


class RoadNetwork:
    """Validated static road graph.  Immutable after construction."""

    def __init__(self, nodes: list[Node], edges: list[Edge]):
        self.nodes: dict[str, Node] = {}
        self.edges: dict[str, Edge] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise DuplicateId(f"duplicate node id {node.id!r}")
            _validate_node(node)
            self.nodes[node.id] = node
        for edge in edges:
            if edge.id in self.edges:
                raise DuplicateId(f"duplicate edge id {edge.id!r}")
            _validate_edge(edge, self.nodes)
            self.edges[edge.id] = edge
        for edge in self.edges.values():
            if edge.reverse_twin is not None and edge.reverse_twin not in self.edges:
                raise DanglingNodeReference(
                    f"edge {edge.id!r} names unknown reverse twin {edge.reverse_twin!r}"
                )
        self.out_edges: dict[str, tuple[Edge, ...]] = {n: () for n in self.nodes}
        self.in_edges: dict[str, tuple[Edge, ...]] = {n: () for n in self.nodes}
        # deterministic adjacency order: sorted by edge id
        for edge in sorted(self.edges.values(), key=lambda e: e.id):
            self.out_edges[edge.from_node] += (edge,)
            self.in_edges[edge.to_node] += (edge,)

    def edge(self, edge_id: str) -> Edge:
        try:
            return self.edges[edge_id]
        except KeyError:
            raise UnknownEdge(f"unknown edge {edge_id!r}") from None


def _validate_node(node: Node) -> None:
    if node.signalized != (node.signal is not None):
        raise InvalidField(f"nodes[{node.id}].signal",
                           "signal plan must be present exactly when signalized")
    if node.signal is not None:
        plan = node.signal
        if plan.cycle_s <= 0:
            raise InvalidField(f"nodes[{node.id}].signal.cycle_s", "must be positive")
        start, end = plan.green_window
        if not (0 <= start < end <= plan.cycle_s):
            raise InvalidField(f"nodes[{node.id}].signal.green_window",
                               "must be a nonempty window inside [0, cycle_s)")


def _validate_edge(edge: Edge, nodes: dict[str, Node]) -> None:
    for attr in ("from_node", "to_node"):
        ref = getattr(edge, attr)
        if ref not in nodes:
            raise DanglingNodeReference(f"edge {edge.id!r} references unknown node {ref!r}")
    if edge.from_node == edge.to_node:
        raise InvalidField(f"edges[{edge.id}].to_node", "self loops are not allowed")
    if edge.length_m <= 0:
        raise InvalidField(f"edges[{edge.id}].length_m", "must be positive")
    if not isinstance(edge.lanes, int) or edge.lanes < 1:
        raise InvalidField(f"edges[{edge.id}].lanes", "must be an integer >= 1")
    if edge.speed_limit_mps <= 0:
        raise InvalidField(f"edges[{edge.id}].speed_limit_mps", "must be positive")
    if not (0 < edge.slope_factor <= 1):
        raise InvalidField(f"edges[{edge.id}].slope_factor", "must be in (0, 1]")


def load_network(document) -> RoadNetwork:
    """Build a validated RoadNetwork from a JSON string or parsed dict."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise MalformedDocument("network document must be a JSON object")
    if document.get("format") != NETWORK_FORMAT:
        raise MalformedDocument(
            f"expected format {NETWORK_FORMAT!r}, got {document.get('format')!r}")
    for section in ("nodes", "edges"):
        if not isinstance(document.get(section), list):
            raise MalformedDocument(f"missing or non-array {section!r} section")

    nodes = []
    for i, raw in enumerate(document["nodes"]):
        path = f"nodes[{i}]"
        if not isinstance(raw, dict) or "id" not in raw:
            raise InvalidField(path, "node must be an object with an 'id'")
        signal = None
        if raw.get("signal") is not None:
            s = raw["signal"]
            try:
                signal = SignalPlan(
                    cycle_s=float(s["cycle_s"]),
                    green_window=(float(s["green_window"][0]), float(s["green_window"][1])),
                    offset_s=float(s.get("offset_s", 0.0)),
                )
            except (KeyError, TypeError, ValueError, IndexError) as exc:
                raise InvalidField(f"{path}.signal", f"bad signal plan: {exc}") from None
        nodes.append(Node(id=str(raw["id"]),
                          signalized=bool(raw.get("signalized", signal is not None)),
                          signal=signal))

    edges = []
    for i, raw in enumerate(document["edges"]):
        path = f"edges[{i}]"
        if not isinstance(raw, dict):
            raise InvalidField(path, "edge must be an object")
        try:
            edges.append(Edge(
                id=str(raw["id"]),
                from_node=str(raw["from_node"]),
                to_node=str(raw["to_node"]),
                length_m=float(raw["length_m"]),
                lanes=int(raw.get("lanes", 1)),
                speed_limit_mps=float(raw["speed_limit_mps"]),
                slope_factor=float(raw.get("slope_factor", 1.0)),
                reverse_twin=raw.get("reverse_twin"),
            ))
        except KeyError as exc:
            raise InvalidField(f"{path}.{exc.args[0]}", "missing required field") from None
        except (TypeError, ValueError) as exc:
            raise InvalidField(path, f"bad value: {exc}") from None

    return RoadNetwork(nodes, edges)


def load_network_file(path) -> RoadNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return load_network(fh.read())


@dataclass(frozen=True)
class EdgeTraffic:
    congestion: float = 0.0
    ped_per_min: float = 0.0
    queued_vehicles: int = 0
    halted: bool = False


FREE_FLOW = EdgeTraffic()

_TRAFFIC_FIELDS = ("congestion", "ped_per_min", "queued_vehicles", "halted")


def _check_traffic(edge_id: str, tr: EdgeTraffic) -> None:
    if not (0.0 <= tr.congestion <= 1.0):
        raise OutOfRangeValue(f"{edge_id}: congestion {tr.congestion} outside [0, 1]")
    if tr.ped_per_min < 0:
        raise OutOfRangeValue(f"{edge_id}: ped_per_min {tr.ped_per_min} negative")
    if tr.queued_vehicles < 0:
        raise OutOfRangeValue(f"{edge_id}: queued_vehicles {tr.queued_vehicles} negative")


class TrafficState:
    """Immutable per-edge traffic snapshot.  Updates produce new snapshots."""

    def __init__(self, edge_ids: frozenset, records: dict[str, EdgeTraffic],
                 snapshot_time_s: float):
        for edge_id, tr in records.items():
            if edge_id not in edge_ids:
                raise UnknownEdge(f"unknown edge {edge_id!r} in traffic state")
            _check_traffic(edge_id, tr)
        self.edge_ids = edge_ids
        self._records = dict(records)
        self.snapshot_time_s = snapshot_time_s

    @classmethod
    def free_flow(cls, net: RoadNetwork, t_s: float = 0.0) -> "TrafficState":
        return cls(frozenset(net.edges), {}, t_s)

    def get(self, edge_id: str) -> EdgeTraffic:
        return self._records.get(edge_id, FREE_FLOW)

    def records(self) -> dict[str, EdgeTraffic]:
        return dict(self._records)


def apply_update(state: TrafficState, delta: dict[str, dict], t_s: float) -> TrafficState:
    """Return a new snapshot with `delta` applied at time t_s.

    delta maps edge id to a partial record, e.g. {"e1": {"halted": True}}.
    Out-of-range values are rejected, not clamped.
    """
    if t_s < state.snapshot_time_s:
        raise OutOfRangeValue(
            f"update time {t_s} precedes snapshot time {state.snapshot_time_s}")
    records = state.records()
    for edge_id, changes in delta.items():
        if edge_id not in state.edge_ids:
            raise UnknownEdge(f"unknown edge {edge_id!r} in update")
        current = records.get(edge_id, FREE_FLOW)
        values = {f: getattr(current, f) for f in _TRAFFIC_FIELDS}
        for key, value in changes.items():
            if key not in _TRAFFIC_FIELDS:
                raise OutOfRangeValue(f"{edge_id}: unknown traffic field {key!r}")
            values[key] = value
        updated = EdgeTraffic(
            congestion=float(values["congestion"]),
            ped_per_min=float(values["ped_per_min"]),
            queued_vehicles=int(values["queued_vehicles"]),
            halted=bool(values["halted"]),
        )
        _check_traffic(edge_id, updated)
        records[edge_id] = updated
    return TrafficState(state.edge_ids, records, t_s)


class NetworkOverlay:
    """Temporary network privileges perceived only by the holding vehicle.

    The empty overlay is the identity: traversal times are bit-identical to
    an overlay-free call.
    """

    __slots__ = ("forced_green", "reserved_lane", "speed_cap", "reverse_enabled",
                 "expiry_s")

    def __init__(self, forced_green=(), reserved_lane=(), speed_cap=None,
                 reverse_enabled=(), expiry_s=None):
        self.forced_green = frozenset(forced_green)
        self.reserved_lane = frozenset(reserved_lane)
        self.speed_cap = dict(speed_cap or {})
        self.reverse_enabled = frozenset(reverse_enabled)
        self.expiry_s = dict(expiry_s or {})
        for edge_id, cap in self.speed_cap.items():
            if cap < 1.0:
                raise OutOfRangeValue(f"{edge_id}: speed_cap_factor {cap} below 1")

    def speed_cap_for(self, edge_id: str) -> float:
        return self.speed_cap.get(edge_id, 1.0)

    def is_empty(self) -> bool:
        return not (self.forced_green or self.reserved_lane or self.speed_cap
                    or self.reverse_enabled)

    def touched_edges(self) -> frozenset:
        return (self.forced_green | self.reserved_lane | self.reverse_enabled
                | frozenset(self.speed_cap))

    def without_edge(self, edge_id: str) -> "NetworkOverlay":
        return NetworkOverlay(
            forced_green=self.forced_green - {edge_id},
            reserved_lane=self.reserved_lane - {edge_id},
            speed_cap={e: c for e, c in self.speed_cap.items() if e != edge_id},
            reverse_enabled=self.reverse_enabled - {edge_id},
            expiry_s={e: t for e, t in self.expiry_s.items() if e != edge_id},
        )

    def merge(self, other: "NetworkOverlay") -> "NetworkOverlay":
        caps = dict(self.speed_cap)
        for edge_id, cap in other.speed_cap.items():
            caps[edge_id] = max(cap, caps.get(edge_id, 1.0))
        expiry = dict(self.expiry_s)
        for edge_id, t in other.expiry_s.items():
            expiry[edge_id] = max(t, expiry.get(edge_id, t))
        return NetworkOverlay(
            forced_green=self.forced_green | other.forced_green,
            reserved_lane=self.reserved_lane | other.reserved_lane,
            speed_cap=caps,
            reverse_enabled=self.reverse_enabled | other.reverse_enabled,
            expiry_s=expiry,
        )


EMPTY_OVERLAY = NetworkOverlay()


def traversal_time(net: RoadNetwork, edge_id: str, t_enter_s: float,
                   state: TrafficState, overlay: NetworkOverlay = EMPTY_OVERLAY,
                   ignore_halt: bool = False) -> float:
    """Seconds to traverse `edge_id` entering at t_enter_s, or BLOCKED.

    `ignore_halt` computes the would-be time of a halted edge; it is used for
    conservative recovery-window accounting, never for routing.
    """
    edge = net.edge(edge_id)
    traffic = state.get(edge_id)
    reverse = edge_id in overlay.reverse_enabled
    if traffic.halted and not reverse and not ignore_halt:
        return BLOCKED

    # A reserved lane lets the vehicle pass standing traffic, but only where
    # there is a second lane to pass in.  Reverse-lane running bypasses the
    # blocked lane's congestion and queue outright.
    reserved = edge_id in overlay.reserved_lane and edge.lanes >= 2
    bypass = reserved or reverse

    congestion = 0.0 if bypass else traffic.congestion
    v_eff = edge.speed_limit_mps * edge.slope_factor * overlay.speed_cap_for(edge_id)
    t_drive = (edge.length_m / v_eff) * (1.0 + CONGESTION_ALPHA * congestion * congestion)
    t_queue = 0.0 if bypass else QUEUE_HEADWAY_S * traffic.queued_vehicles

    head = net.nodes[edge.to_node]
    green = edge_id in overlay.forced_green and head.signalized
    t_ped = 0.0 if green else min(PED_DELAY_CAP_S,
                                  PED_DELAY_PER_FLOW_S * traffic.ped_per_min)
    t_signal = 0.0
    if head.signalized and not green:
        stop_line = t_enter_s + t_drive + t_queue + t_ped
        t_signal = head.signal.wait_to_green(stop_line)
    return t_drive + t_queue + t_signal + t_ped
