"""Shared test utilities: random instance generators and independent oracles.

The oracles here deliberately avoid the library's search code: routes are
checked against exhaustive simple-path enumeration, and admission against
brute-force enumeration of every (vehicle, route, level) triple.
"""

import math
import random

from aevsim.analogy import Criticality, EmergencyRequest, MCTask, Mode
from aevsim.network import (
    EMPTY_OVERLAY,
    Edge,
    Node,
    RoadNetwork,
    SignalPlan,
    TrafficState,
    apply_update,
    is_blocked,
    traversal_time,
)
from aevsim.preemption import PreemptionLevel


def random_network(rng: random.Random, max_nodes: int = 8, max_edges: int = 16,
                   allow_halts: bool = True):
    """Small random network plus a random snapshot (FIFO by construction)."""
    n_nodes = rng.randint(2, max_nodes)
    names = [f"N{i}" for i in range(n_nodes)]
    nodes = []
    for name in names:
        if rng.random() < 0.4:
            cycle = rng.choice([30.0, 60.0, 90.0])
            start = rng.uniform(0.0, cycle / 2)
            end = rng.uniform(start + 1.0, cycle)
            nodes.append(Node(name, signalized=True,
                              signal=SignalPlan(cycle_s=cycle,
                                                green_window=(start, end),
                                                offset_s=rng.uniform(0, cycle))))
        else:
            nodes.append(Node(name))

    # connected backbone (random chain) plus random extra edges
    order = list(names)
    rng.shuffle(order)
    wanted = [(order[i], order[i + 1]) for i in range(len(order) - 1)]
    seen_pairs = set(wanted)
    for _ in range(rng.randint(0, max_edges - len(wanted))):
        a, b = rng.sample(names, 2)
        if (a, b) in seen_pairs:
            continue
        seen_pairs.add((a, b))
        wanted.append((a, b))
    edges = []
    for i, (a, b) in enumerate(wanted):
        edges.append(Edge(
            id=f"E{i}", from_node=a, to_node=b,
            length_m=rng.uniform(100.0, 2000.0),
            lanes=rng.choice([1, 2, 3]),
            speed_limit_mps=rng.choice([8.3, 13.9, 25.0]),
            slope_factor=rng.choice([1.0, 1.0, 0.8, 0.5]),
        ))
    # wire reverse twins for some opposing pairs
    by_pair = {(e.from_node, e.to_node): e for e in edges}
    twinned = []
    for e in edges:
        twin = by_pair.get((e.to_node, e.from_node))
        if twin is not None and rng.random() < 0.6:
            twinned.append(Edge(e.id, e.from_node, e.to_node, e.length_m, e.lanes,
                                e.speed_limit_mps, e.slope_factor, twin.id))
        else:
            twinned.append(e)
    net = RoadNetwork(nodes, twinned)

    delta = {}
    for e in net.edges.values():
        delta[e.id] = {
            "congestion": round(rng.random(), 3),
            "queued_vehicles": rng.randint(0, 6),
            "ped_per_min": round(rng.uniform(0, 40), 1),
            "halted": allow_halts and rng.random() < 0.08,
        }
    state = apply_update(TrafficState.free_flow(net, 0.0), delta, 0.0)
    return net, state


def enumerate_simple_paths(net: RoadNetwork, src: str, dst: str):
    """All simple paths src -> dst as tuples of edge ids (DFS)."""
    paths = []

    def walk(node, visited, edges_so_far):
        if node == dst:
            paths.append(tuple(edges_so_far))
            return
        for edge in net.out_edges[node]:
            if edge.to_node in visited:
                continue
            visited.add(edge.to_node)
            edges_so_far.append(edge.id)
            walk(edge.to_node, visited, edges_so_far)
            edges_so_far.pop()
            visited.remove(edge.to_node)

    walk(src, {src}, [])
    return paths


def fold_arrival(net, edges, t0, state, overlay=EMPTY_OVERLAY):
    """Arrival time folding traversal_time directly (no router involved)."""
    t = t0
    for edge_id in edges:
        dt = traversal_time(net, edge_id, t, state, overlay)
        if is_blocked(dt):
            return math.inf
        t += dt
    return t


def oracle_best(net, state, overlay, src, dst, t0):
    """Exhaustive-enumeration optimum under (arrival, edge count, ids)."""
    best = None
    for path in enumerate_simple_paths(net, src, dst):
        arrival = fold_arrival(net, path, t0, state, overlay)
        if math.isinf(arrival):
            continue
        key = (arrival, len(path), path)
        if best is None or key < best:
            best = key
    return best


def make_task(task_id="t1", criticality=Criticality.C3, deadline_s=480.0,
              release_s=0.0, levels=tuple(PreemptionLevel), candidates=None,
              eta=None, disturbance=None, pickup="B") -> MCTask:
    """Hand-built scheduling task for admission tests."""
    request = EmergencyRequest(id=task_id, release_time_s=release_s, mode=Mode.E1,
                               criticality=criticality, pickup_node=pickup)
    candidates = candidates or {"v1": (("e1",),)}
    eta = eta or {}
    disturbance = disturbance or {key: 0.0 for key in eta}
    for key in eta:
        disturbance.setdefault(key, 0.0)
    return MCTask(task_id=task_id, request=request, release_s=release_s,
                  criticality=criticality, deadline_s=deadline_s, levels=levels,
                  candidates=candidates, eta_s=eta, disturbance=disturbance)


def brute_force_admit_single(task: MCTask, idle_vehicles, now_s: float):
    """Reference disposition for one task: enumerate every (v, r, p).

    Returns ("assign", level, vid, ridx) possibly with ("extend", deadline),
    or ("queue",).
    """
    triples = []
    for vid in task.candidates:
        if vid not in idle_vehicles:
            continue
        for ridx in range(len(task.candidates[vid])):
            for level in task.levels:
                eta = task.eta_s.get((vid, ridx, level))
                if eta is None or math.isinf(eta):
                    continue
                triples.append((level, eta, task.disturbance[(vid, ridx, level)],
                                vid, ridx))
    if not triples:
        return ("queue",)
    feasible = [t for t in triples
                if now_s + task.eta_safety_margin * t[1] <= task.absolute_deadline_s]
    if feasible:
        level, eta, _d, vid, ridx = min(feasible)
        return ("assign", level, vid, ridx, None)
    top = task.levels[-1]
    at_top = [(eta, d, vid, ridx) for (level, eta, d, vid, ridx) in triples
              if level == top]
    eta, _d, vid, ridx = min(at_top)
    return ("assign", top, vid, ridx, now_s + eta)
