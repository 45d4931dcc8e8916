"""The ordered pre-emption ladder P0..P4.

Effects are strictly cumulative:

    P0  nothing
    P1  + green wave: forced green at the route's signalized nodes
    P2  + lane reservation on route edges with >= 2 lanes
    P3  + speed-cap raise on route edges
    P4  + reverse-lane running on halted or saturated route edges that have
          a reverse twin

Disturbance is accounted in vehicle-seconds of delay imposed on background
traffic.  Reservation windows are budgeted on the unassisted traversal fold
(halts ignored), which keeps windows finite, conservative, and identical
across ladder levels, so disturbance is non-decreasing in the level by
construction.
"""

from dataclasses import dataclass, replace
from enum import IntEnum

from .network import (
    EMPTY_OVERLAY,
    NetworkOverlay,
    RoadNetwork,
    TrafficState,
    traversal_time,
)


class PreemptionLevel(IntEnum):
    P0 = 0
    P1 = 1
    P2 = 2
    P3 = 3
    P4 = 4


LADDER = tuple(PreemptionLevel)


@dataclass(frozen=True)
class PreemptionConfig:
    speed_cap_factor: float = 1.2
    recovery_time_s: float = 60.0
    green_wave_coeff: float = 1.0
    lane_reserve_coeff: float = 0.5
    reverse_cost_multiplier: float = 2.0
    reverse_congestion_threshold: float = 1.0
    max_level: PreemptionLevel = PreemptionLevel.P4

    def levels(self) -> tuple[PreemptionLevel, ...]:
        return tuple(lv for lv in LADDER if lv <= self.max_level)


@dataclass(frozen=True)
class DisturbanceItem:
    effect: str      # "green_wave" | "lane_reservation" | "reverse_lane"
    where: str       # node id for green waves, edge id otherwise
    vehicle_seconds: float


@dataclass(frozen=True)
class DisturbanceCost:
    vehicle_seconds: float
    items: tuple[DisturbanceItem, ...]


NO_DISTURBANCE = DisturbanceCost(0.0, ())


def _wants_reverse(edge, traffic, config) -> bool:
    if edge.reverse_twin is None:
        return False
    return traffic.halted or traffic.congestion >= config.reverse_congestion_threshold


def apply(level: PreemptionLevel, route_edges, net: RoadNetwork,
          state: TrafficState, t_s: float,
          config: PreemptionConfig = PreemptionConfig()
          ) -> tuple[NetworkOverlay, DisturbanceCost]:
    """Overlay and disturbance for escorting one vehicle along a route.

    The overlay covers exactly the route's edges; inapplicable effects (a
    green wave with no signals, a reservation on a single-lane edge) simply
    contribute nothing.  Per-edge expiry is the budgeted exit time plus the
    recovery time.
    """
    if hasattr(route_edges, "edges"):
        route_edges = route_edges.edges
    route_edges = tuple(route_edges)
    if level == PreemptionLevel.P0 or not route_edges:
        return EMPTY_OVERLAY, NO_DISTURBANCE

    green, reserved, capped, reversed_ = [], [], [], []
    for edge_id in route_edges:
        edge = net.edge(edge_id)
        traffic = state.get(edge_id)
        if level >= PreemptionLevel.P1 and net.nodes[edge.to_node].signalized:
            green.append(edge_id)
        if level >= PreemptionLevel.P2 and edge.lanes >= 2:
            reserved.append(edge_id)
        if level >= PreemptionLevel.P3:
            capped.append(edge_id)
        if level >= PreemptionLevel.P4 and _wants_reverse(edge, traffic, config):
            reversed_.append(edge_id)

    # Budget windows on the unassisted fold so every level sees the same,
    # always-finite exit times.
    exit_s = {}
    t = t_s
    for edge_id in route_edges:
        t += traversal_time(net, edge_id, t, state, ignore_halt=True)
        exit_s[edge_id] = t

    touched = set(green) | set(reserved) | set(capped) | set(reversed_)
    overlay = NetworkOverlay(
        forced_green=green,
        reserved_lane=reserved,
        speed_cap={e: config.speed_cap_factor for e in capped},
        reverse_enabled=reversed_,
        expiry_s={e: exit_s[e] + config.recovery_time_s for e in touched},
    )

    items = []
    for edge_id in green:
        node = net.nodes[net.edge(edge_id).to_node]
        cross_queue = sum(state.get(e.id).queued_vehicles
                          for e in net.in_edges[node.id] if e.id != edge_id)
        cost = config.green_wave_coeff * cross_queue * node.signal.red_duration_s()
        items.append(DisturbanceItem("green_wave", node.id, cost))
    for edge_id in reserved:
        duration = exit_s[edge_id] + config.recovery_time_s - t_s
        cost = state.get(edge_id).queued_vehicles * duration * config.lane_reserve_coeff
        items.append(DisturbanceItem("lane_reservation", edge_id, cost))
    for edge_id in reversed_:
        twin = net.edge(edge_id).reverse_twin
        duration = exit_s[edge_id] + config.recovery_time_s - t_s
        twin_lane_cost = (state.get(twin).queued_vehicles * duration
                          * config.lane_reserve_coeff)
        cost = config.reverse_cost_multiplier * twin_lane_cost
        items.append(DisturbanceItem("reverse_lane", edge_id, cost))

    total = sum(item.vehicle_seconds for item in items)
    return overlay, DisturbanceCost(total, tuple(items))


@dataclass(frozen=True)
class RecoveryEvent:
    edge_id: str
    expiry_s: float


def release(overlay: NetworkOverlay, t_s: float) -> list[RecoveryEvent]:
    """One expiry event per touched edge; never scheduled in the past."""
    events = [RecoveryEvent(edge_id, max(expiry, t_s))
              for edge_id, expiry in overlay.expiry_s.items()]
    events.sort(key=lambda ev: (ev.expiry_s, ev.edge_id))
    return events


def search_overlay(level: PreemptionLevel, net: RoadNetwork, state: TrafficState,
                   config: PreemptionConfig = PreemptionConfig()) -> NetworkOverlay:
    """Overlay granting the level's privileges network-wide, for route search.

    Traversal of an edge depends only on that edge's own flags, so the best
    route under global privileges is exactly the best route when the level is
    afterwards applied to that route alone.
    """
    if level == PreemptionLevel.P0:
        return EMPTY_OVERLAY
    all_edges = list(net.edges)
    reversed_ = [e for e in all_edges
                 if _wants_reverse(net.edges[e], state.get(e), config)]
    return NetworkOverlay(
        forced_green=all_edges if level >= PreemptionLevel.P1 else (),
        reserved_lane=all_edges if level >= PreemptionLevel.P2 else (),
        speed_cap=({e: config.speed_cap_factor for e in all_edges}
                   if level >= PreemptionLevel.P3 else None),
        reverse_enabled=reversed_ if level >= PreemptionLevel.P4 else (),
    )
