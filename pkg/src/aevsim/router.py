"""Time-dependent fastest paths over a frozen traffic snapshot.

The search is a label-setting Dijkstra on arrival times.  It is exact because
snapshots are FIFO: entering an edge later never yields an earlier arrival.
Ties are broken deterministically by edge count, then lexicographic edge ids.

Alternative routes come from a penalty/deviation method: the edges of each
found route are penalised (x1.5) and the search repeated; discovered routes
are then re-costed honestly and sorted.
"""

import heapq
from dataclasses import dataclass

from .errors import InvalidParameter, NoRoute, UnknownEdge
from .network import (
    BLOCKED,
    EMPTY_OVERLAY,
    NetworkOverlay,
    RoadNetwork,
    TrafficState,
    is_blocked,
    traversal_time,
)

# When enabled, every edge relaxation spot-checks the FIFO property that makes
# the label-setting search exact.  Slow; meant for tests.
debug_fifo_checks = False

_FIFO_PROBE_OFFSETS_S = (0.5, 7.5, 31.0)
PENALTY_FACTOR = 1.5


@dataclass(frozen=True)
class Route:
    """A contiguous edge sequence with its arrival profile for one departure.

    arrival_s carries the exact folded arrival; total_eta_s is the documented
    difference form and may differ from (arrival_s - departure) by an ulp.
    """

    edges: tuple[str, ...]
    departure_time_s: float
    entry_times: tuple[float, ...]
    total_eta_s: float
    arrival_s: float

    @property
    def arrival_time_s(self) -> float:
        return self.arrival_s


def _assert_fifo(net, edge_id, t_s, state, overlay):
    base = traversal_time(net, edge_id, t_s, state, overlay)
    for dt in _FIFO_PROBE_OFFSETS_S:
        later = traversal_time(net, edge_id, t_s + dt, state, overlay)
        assert t_s + dt + later >= t_s + base - 1e-9, (
            f"FIFO violated on edge {edge_id} at t={t_s}")


def route_eta(net: RoadNetwork, edges, t0_s: float, state: TrafficState,
              overlay: NetworkOverlay = EMPTY_OVERLAY) -> float:
    """Fold traversal times along an edge sequence; BLOCKED if any edge blocks."""
    if isinstance(edges, Route):
        edges = edges.edges
    t = t0_s
    prev_head = None
    for edge_id in edges:
        edge = net.edge(edge_id)
        if prev_head is not None and edge.from_node != prev_head:
            raise ValueError(f"route not contiguous at edge {edge_id!r}")
        prev_head = edge.to_node
        dt = traversal_time(net, edge_id, t, state, overlay)
        if is_blocked(dt):
            return BLOCKED
        t += dt
    return t - t0_s


def build_route(net: RoadNetwork, edges, t0_s: float, state: TrafficState,
                overlay: NetworkOverlay = EMPTY_OVERLAY) -> Route | None:
    """Construct a Route with per-edge entry times; None if blocked."""
    if isinstance(edges, Route):
        edges = edges.edges
    entries = []
    t = t0_s
    for edge_id in edges:
        entries.append(t)
        dt = traversal_time(net, edge_id, t, state, overlay)
        if is_blocked(dt):
            return None
        t += dt
    return Route(edges=tuple(edges), departure_time_s=t0_s,
                 entry_times=tuple(entries), total_eta_s=t - t0_s, arrival_s=t)


def _search(net, state, overlay, src, dst, t0_s, penalties=None):
    """Label-setting search; returns the winning edge-id tuple or None.

    Heap keys are (arrival, edge count, edge ids) so ties resolve to fewer
    edges, then lexicographically smallest id sequence.  With `penalties`
    the arrival labels use inflated edge times (route discovery only); the
    caller must re-cost results honestly.
    """
    if src == dst:
        return ()
    settled = set()
    heap = [(t0_s, 0, (), src)]
    while heap:
        arrival, n_edges, ids, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == dst:
            return ids
        for edge in net.out_edges[node]:
            if edge.to_node in settled:
                continue
            dt = traversal_time(net, edge.id, arrival, state, overlay)
            if is_blocked(dt):
                continue
            if debug_fifo_checks:
                _assert_fifo(net, edge.id, arrival, state, overlay)
            if penalties:
                dt *= penalties.get(edge.id, 1.0)
            heapq.heappush(heap, (arrival + dt, n_edges + 1, ids + (edge.id,),
                                  edge.to_node))
    return None


def fastest_route(net: RoadNetwork, state: TrafficState, overlay: NetworkOverlay,
                  src: str, dst: str, t0_s: float) -> Route:
    """Route minimising arrival time at dst when departing src at t0_s."""
    if src not in net.nodes or dst not in net.nodes:
        raise ValueError(f"unknown node in query: {src!r} -> {dst!r}")
    ids = _search(net, state, overlay, src, dst, t0_s)
    if ids is None:
        raise NoRoute(f"no route {src!r} -> {dst!r} at t={t0_s}")
    route = build_route(net, ids, t0_s, state, overlay)
    assert route is not None  # search only follows finite edges
    return route


def k_routes(net: RoadNetwork, state: TrafficState, overlay: NetworkOverlay,
             src: str, dst: str, t0_s: float, k: int) -> list[Route]:
    """Up to k edge-set-distinct routes in non-decreasing ETA order.

    The first element always equals fastest_route.  Fewer than k routes are
    returned when penalisation stops discovering new edge sets.
    """
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    first = fastest_route(net, state, overlay, src, dst, t0_s)
    found: dict[frozenset, Route] = {frozenset(first.edges): first}
    penalties: dict[str, float] = {}
    last = first
    attempts = 0
    max_attempts = 2 * k + 4
    while len(found) < k and attempts < max_attempts:
        attempts += 1
        for edge_id in last.edges:
            penalties[edge_id] = penalties.get(edge_id, 1.0) * PENALTY_FACTOR
        ids = _search(net, state, overlay, src, dst, t0_s, penalties)
        if ids is None:
            break
        route = build_route(net, ids, t0_s, state, overlay)
        if route is None:
            break
        key = frozenset(route.edges)
        if key not in found:
            found[key] = route
        last = route
    routes = sorted(found.values(),
                    key=lambda r: (r.total_eta_s, len(r.edges), r.edges))
    return routes[:k]
