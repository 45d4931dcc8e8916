"""Criticality-monotonic admission and runtime deadline monitoring.

Admission assigns each task the feasible (vehicle, route, level) triple that
is lexicographically minimal in (pre-emption level, ETA, disturbance): meet
the deadline with the least interference, and among equals arrive soonest.
Monitoring escalates a running service when its refreshed ETA threatens the
deadline, trying a reroute at the current level before raising it; level
changes are one-way for a service.
"""

from dataclasses import dataclass, field

from . import preemption, router
from .analogy import (
    AssignNewDeadline,
    AssignPreemption,
    AssignTask,
    MCTask,
    QueueTask,
    ScheduleDecision,
)
from .errors import NoRoute
from .network import NetworkOverlay, RoadNetwork, TrafficState
from .preemption import PreemptionConfig, PreemptionLevel
from .router import Route


@dataclass
class ActiveService:
    """A dispatched (vehicle, route, level) assignment being executed."""

    task: MCTask
    vehicle_id: str
    route_edges: tuple[str, ...]
    level: PreemptionLevel
    dispatch_time_s: float
    deadline_abs_s: float               # inf when unbounded
    overlay: NetworkOverlay
    edge_index: int = -1                # -1 before the first edge is entered
    edge_entry_s: float = 0.0
    planned_exit_s: float = 0.0
    last_advised_eta_s: float = 0.0
    stalled_at: str | None = None       # node where motion is blocked
    disturbance_veh_s: float = 0.0
    application_seq: int = 0            # bumps every fresh overlay application

    def raise_level(self, new_level: PreemptionLevel) -> None:
        if new_level < self.level:
            raise ValueError(f"pre-emption level may not decrease "
                             f"({self.level.name} -> {new_level.name})")
        self.level = new_level


def priority_order(tasks, priority_overrides=None) -> list:
    """Deterministic total order: criticality desc, absolute deadline asc,
    id asc.  Overrides substitute the criticality key for named tasks."""
    overrides = priority_overrides or {}

    def key(task):
        rank = overrides.get(task.task_id, int(task.criticality))
        return (-rank, task.absolute_deadline_s, task.task_id)

    return sorted(tasks, key=key)


def _best_at_level(task: MCTask, level, vehicle_ids, require_feasible,
                   now_s: float):
    """Min (eta, disturbance, vehicle, route idx) candidate at one level."""
    margin = task.eta_safety_margin
    best = None
    for vid in vehicle_ids:
        for ridx in range(len(task.candidates[vid])):
            eta = task.eta_s.get((vid, ridx, level))
            if eta is None or eta == float("inf"):
                continue
            if require_feasible and now_s + margin * eta > task.absolute_deadline_s:
                continue
            cand = (eta, task.disturbance[(vid, ridx, level)], vid, ridx)
            if best is None or cand < best:
                best = cand
    return best


def admit(pending, fleet, now_s: float,
          priority_overrides=None) -> list[ScheduleDecision]:
    """Dispose of every released task exactly once.

    Tasks are processed in priority order.  A task whose deadline cannot be
    met even at the top of the ladder is still assigned (to its fastest
    top-level candidate) together with a new deadline; a task with no usable
    vehicle is queued.
    """
    status = {v.id: v.status for v in fleet}
    taken: set[str] = set()
    decisions: list[ScheduleDecision] = []
    for task in priority_order(pending, priority_overrides):
        available = [vid for vid in task.candidates
                     if status.get(vid) == "idle" and vid not in taken]
        if not available:
            decisions.append(QueueTask(task.task_id))
            continue
        chosen = None
        for level in task.levels:
            best = _best_at_level(task, level, available, True, now_s)
            if best is not None:
                chosen = (level, best, False)
                break
        if chosen is None:
            top = task.levels[-1]
            best = _best_at_level(task, top, available, False, now_s)
            if best is None:
                decisions.append(QueueTask(task.task_id))
                continue
            chosen = (top, best, True)
        level, (eta, _dist, vid, ridx), overran = chosen
        decisions.append(AssignTask(task.task_id, vid,
                                    task.candidates[vid][ridx], level))
        if overran:
            decisions.append(AssignNewDeadline(task.task_id, now_s + eta))
        taken.add(vid)
    return decisions


@dataclass(frozen=True)
class MonitorContext:
    """Inputs monitoring needs to look for remedies."""

    net: RoadNetwork
    state: TrafficState
    config: PreemptionConfig
    resume_node: str          # next node where a new route can begin
    resume_time_s: float      # when the vehicle is there
    destination: str


@dataclass(frozen=True)
class MonitorOutcome:
    kind: str                               # no_action | reroute | escalate | predicted_miss
    level: PreemptionLevel
    route: Route | None
    eta_s: float | None                     # from `now`, when a route exists
    decisions: tuple[ScheduleDecision, ...]


def monitor(active: ActiveService, now_s: float, refreshed_eta_s: float,
            ctx: MonitorContext) -> MonitorOutcome:
    """Check a running service against its deadline and pick a remedy.

    Remedies are tried in order: reroute at the current level, then escalate
    one level at a time.  If even the top level cannot make the deadline the
    outcome is a predicted miss carrying the new deadline to assign.
    """
    margin = active.task.eta_safety_margin
    if now_s + margin * refreshed_eta_s <= active.deadline_abs_s:
        return MonitorOutcome("no_action", active.level, None, None, ())

    max_level = active.task.levels[-1]
    best_finite = None                      # (level, route, eta)
    level = active.level
    while True:
        search = preemption.search_overlay(level, ctx.net, ctx.state, ctx.config)
        route = None
        try:
            route = router.fastest_route(ctx.net, ctx.state, search,
                                         ctx.resume_node, ctx.destination,
                                         ctx.resume_time_s)
        except NoRoute:
            pass
        if route is not None:
            eta = route.arrival_time_s - now_s
            if best_finite is None or eta < best_finite[2]:
                best_finite = (level, route, eta)
            if now_s + margin * eta <= active.deadline_abs_s:
                if level == active.level:
                    return MonitorOutcome("reroute", level, route, eta, ())
                return MonitorOutcome(
                    "escalate", level, route, eta,
                    (AssignPreemption(active.task.task_id, level),))
        if level >= max_level:
            break
        level = PreemptionLevel(level + 1)

    if best_finite is None:
        # Nothing drivable at any level; hold position and wait for traffic
        # to change.
        return MonitorOutcome("predicted_miss", active.level, None, None, ())
    level, route, eta = best_finite
    decisions: tuple[ScheduleDecision, ...] = ()
    if level > active.level:
        decisions += (AssignPreemption(active.task.task_id, level),)
    decisions += (AssignNewDeadline(active.task.task_id, now_s + eta),)
    return MonitorOutcome("predicted_miss", level, route, eta, decisions)
