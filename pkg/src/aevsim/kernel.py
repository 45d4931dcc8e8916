"""Deterministic discrete-event simulation engine.

One run executes a scenario to its horizon: request arrivals are mapped to
tasks and admitted, vehicles move edge by edge, traffic evolves through
scripted updates and a counter-seeded congestion random walk, and running
services are re-evaluated on every update plus a periodic tick.  The clock
is integer milliseconds internally; all randomness is keyed by (seed, edge,
tick), so identical (scenario, seed) pairs produce bit-identical traces.
"""

import hashlib
import heapq
import json
from dataclasses import dataclass, field, replace

from . import analogy, preemption, router, scheduler
from .analogy import (
    AssignNewDeadline,
    AssignTask,
    Criticality,
    DeadlinePolicy,
    EmergencyRequest,
    MCTask,
    Mode,
    QueueTask,
    Vehicle,
    from_decision,
)
from .errors import (
    InvalidScenario,
    NoCandidateVehicle,
    NoRoute,
    UnknownRequest,
)
from .network import (
    EMPTY_OVERLAY,
    RoadNetwork,
    TrafficState,
    apply_update,
    is_blocked,
    load_network,
    load_network_file,
    traversal_time,
)
from .preemption import PreemptionConfig, PreemptionLevel
from .rng import counter_uniform, reflect_unit
from .scheduler import ActiveService, MonitorContext, monitor

SCENARIO_FORMAT = "mcrts-scn/1"

VARIANTS = ("mcrts", "no_preemption", "static_route")

EVENT_KINDS = (
    "RequestArrival", "Dispatch", "EdgeEntered", "EdgeExited",
    "ServiceCompleted", "StateUpdate", "Reevaluation", "OverlayExpiry",
    "EscalationApplied", "PredictedMiss",
)

# Rank settles ordering among events scheduled for the same millisecond:
# state changes first, then expiries, arrivals, motion, re-evaluation.
_QUEUE_RANK = {
    "StateUpdate": 0,
    "OverlayExpiry": 1,
    "RequestArrival": 2,
    "EdgeExited": 3,
    "Reevaluation": 4,
}


def _ms(seconds: float) -> int:
    return round(seconds * 1000.0)


def _s(ms: int) -> float:
    return ms / 1000.0


@dataclass(frozen=True)
class SimEvent:
    time_s: float
    seq: int
    kind: str
    payload: dict


@dataclass
class Outcome:
    request_id: str
    criticality: str
    release_s: float
    response_time_s: float | None     # None = unserved at horizon
    deadline_s: float | None          # policy deadline, relative to release
    met: bool
    final_level: str
    disturbance_veh_s: float
    served: bool

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "criticality": self.criticality,
            "release_s": self.release_s,
            "response_time_s": self.response_time_s,
            "deadline_s": self.deadline_s,
            "met": self.met,
            "final_level": self.final_level,
            "disturbance_veh_s": self.disturbance_veh_s,
            "served": self.served,
        }


@dataclass
class Trace:
    records: list
    outcomes: dict
    seed: int
    variant: str
    config_digest: str
    digest: str
    horizon_s: float
    warnings: list


@dataclass(frozen=True)
class BackgroundModel:
    tick_s: float
    congestion_step: float
    seed: int = 0


@dataclass
class Scenario:
    net: RoadNetwork
    fleet: list
    reserved_count: int
    requests: list
    updates: list                  # [(t_s, {edge: {field: value}})], sorted
    background: BackgroundModel | None
    policy: DeadlinePolicy
    preemption_config: PreemptionConfig
    k_routes_per_vehicle: int
    horizon_s: float
    tick_s: float
    raw: dict


def _require(raw: dict, key: str, path: str):
    if key not in raw:
        raise InvalidScenario(f"{path}.{key}", "missing required field")
    return raw[key]


def load_scenario(document, base_dir=None) -> Scenario:
    """Parse and validate a scenario document (dict or JSON text)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise InvalidScenario("$", f"not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise InvalidScenario("$", "scenario must be a JSON object")
    if document.get("format") != SCENARIO_FORMAT:
        raise InvalidScenario("format",
                              f"expected {SCENARIO_FORMAT!r}, got {document.get('format')!r}")

    net_ref = _require(document, "network", "$")
    try:
        if isinstance(net_ref, dict):
            net = load_network(net_ref)
        else:
            path = net_ref
            if base_dir is not None:
                from pathlib import Path
                path = Path(base_dir) / net_ref
            net = load_network_file(path)
    except OSError as exc:
        raise InvalidScenario("network", f"cannot read {net_ref!r}: {exc}") from None
    except Exception as exc:
        raise InvalidScenario("network", str(exc)) from None

    fleet_section = _require(document, "fleet", "$")
    reserved_count = 0
    if isinstance(fleet_section, dict):
        reserved_count = int(fleet_section.get("reserved_count", 0))
        fleet_section = fleet_section.get("vehicles", [])
    fleet = []
    for i, raw in enumerate(fleet_section):
        path = f"fleet[{i}]"
        try:
            vehicle = Vehicle(id=str(raw["id"]), kind=str(raw["kind"]),
                              node=str(raw["node"]))
        except KeyError as exc:
            raise InvalidScenario(f"{path}.{exc.args[0]}", "missing field") from None
        except Exception as exc:
            raise InvalidScenario(path, str(exc)) from None
        if vehicle.node not in net.nodes:
            raise InvalidScenario(f"{path}.node", f"unknown node {vehicle.node!r}")
        if any(v.id == vehicle.id for v in fleet):
            raise InvalidScenario(f"{path}.id", f"duplicate vehicle id {vehicle.id!r}")
        fleet.append(vehicle)

    requests = []
    for i, raw in enumerate(document.get("requests", [])):
        path = f"requests[{i}]"
        try:
            request = EmergencyRequest(
                id=str(raw["id"]),
                release_time_s=float(raw["release_time_s"]),
                mode=Mode[str(raw.get("mode", "E1"))],
                criticality=Criticality[str(raw["criticality"])],
                pickup_node=str(raw["pickup_node"]),
                destination_node=raw.get("destination_node"),
                requested_vehicle_kind=raw.get("requested_vehicle_kind"),
            )
        except KeyError as exc:
            raise InvalidScenario(f"{path}.{exc.args[0]}", "missing or bad field") from None
        except Exception as exc:
            raise InvalidScenario(path, str(exc)) from None
        if request.pickup_node not in net.nodes:
            raise InvalidScenario(f"{path}.pickup_node",
                                  f"unknown node {request.pickup_node!r}")
        if (request.destination_node is not None
                and request.destination_node not in net.nodes):
            raise InvalidScenario(f"{path}.destination_node",
                                  f"unknown node {request.destination_node!r}")
        if request.release_time_s < 0:
            raise InvalidScenario(f"{path}.release_time_s", "must be >= 0")
        if any(r.id == request.id for r in requests):
            raise InvalidScenario(f"{path}.id", f"duplicate request id {request.id!r}")
        requests.append(request)

    updates = []
    probe = TrafficState.free_flow(net, 0.0)
    for i, raw in enumerate(document.get("updates", [])):
        path = f"updates[{i}]"
        try:
            t_s = float(raw["t_s"])
            delta = raw["edges"]
        except KeyError as exc:
            raise InvalidScenario(f"{path}.{exc.args[0]}", "missing field") from None
        if t_s < 0:
            raise InvalidScenario(f"{path}.t_s", "must be >= 0")
        try:
            apply_update(probe, delta, probe.snapshot_time_s)  # static validation
        except Exception as exc:
            raise InvalidScenario(f"{path}.edges", str(exc)) from None
        updates.append((t_s, delta))
    updates.sort(key=lambda item: item[0])

    background = None
    raw_bg = document.get("background")
    if raw_bg:
        tick = float(raw_bg.get("tick_s", document.get("tick_s", 10.0)))
        step = float(raw_bg.get("congestion_step", 0.02))
        if not (0 < step <= 1):
            raise InvalidScenario("background.congestion_step", "must be in (0, 1]")
        if tick <= 0:
            raise InvalidScenario("background.tick_s", "must be positive")
        background = BackgroundModel(tick_s=tick, congestion_step=step,
                                     seed=int(raw_bg.get("seed", 0)))

    policy_raw = document.get("policy", "nz")
    try:
        policy = _parse_policy(policy_raw)
    except Exception as exc:
        raise InvalidScenario("policy", str(exc)) from None

    pre_raw = dict(document.get("preemption", {}))
    k_routes = int(pre_raw.pop("k_routes_per_vehicle", 3))
    if k_routes < 1:
        raise InvalidScenario("preemption.k_routes_per_vehicle", "must be >= 1")
    try:
        config = PreemptionConfig(**pre_raw)
    except TypeError as exc:
        raise InvalidScenario("preemption", str(exc)) from None

    horizon_s = float(_require(document, "horizon_s", "$"))
    if horizon_s <= 0:
        raise InvalidScenario("horizon_s", "must be positive")
    tick_s = float(document.get("tick_s", 10.0))
    if tick_s <= 0:
        raise InvalidScenario("tick_s", "must be positive")

    return Scenario(net=net, fleet=fleet, reserved_count=reserved_count,
                    requests=requests, updates=updates, background=background,
                    policy=policy, preemption_config=config,
                    k_routes_per_vehicle=k_routes, horizon_s=horizon_s,
                    tick_s=tick_s, raw=document)


def load_scenario_file(path) -> Scenario:
    from pathlib import Path
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidScenario(str(path), f"cannot read scenario: {exc}") from None
    return load_scenario(text, base_dir=path.parent)


def _parse_policy(raw) -> DeadlinePolicy:
    if isinstance(raw, str):
        return DeadlinePolicy.preset(raw)
    deadlines = {}
    for name, value in raw.get("deadlines", {}).items():
        deadlines[Criticality[name]] = None if value is None else float(value)
    targets = {}
    for name, pairs in raw.get("targets", {}).items():
        targets[Criticality[name]] = tuple((float(f), float(s)) for f, s in pairs)
    for crit in Criticality:
        deadlines.setdefault(crit, DeadlinePolicy.default().deadlines[crit])
        targets.setdefault(crit, DeadlinePolicy.default().targets[crit])
    return DeadlinePolicy(deadlines=deadlines, targets=targets,
                          eta_safety_margin=float(raw.get("eta_safety_margin", 1.0)),
                          name=str(raw.get("name", "custom")))


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def config_digest(scenario: Scenario) -> str:
    return hashlib.sha256(canonical_json(scenario.raw).encode()).hexdigest()


@dataclass
class _TransportLeg:
    request_id: str
    vehicle_id: str
    route_edges: tuple
    edge_index: int = -1
    planned_exit_s: float = 0.0
    stalled_at: str | None = None


class _Simulation:
    def __init__(self, scenario: Scenario, seed: int, variant: str):
        if variant not in VARIANTS:
            raise InvalidScenario("variant", f"unknown variant {variant!r}")
        self.scn = scenario
        self.net = scenario.net
        self.seed = seed
        self.variant = variant
        self.monitoring = variant != "static_route"
        self.config = scenario.preemption_config
        if variant == "no_preemption":
            self.config = replace(self.config, max_level=PreemptionLevel.P0)
        self.policy = scenario.policy
        self.horizon_ms = _ms(scenario.horizon_s)

        self.now_ms = 0
        self._seq = 0
        self._heap: list = []
        self.records: list = []
        self.state = TrafficState.free_flow(self.net, 0.0)
        self.fleet = [replace_vehicle(v) for v in scenario.fleet]
        self.vehicles = {v.id: v for v in self.fleet}
        self.requests = {r.id: r for r in scenario.requests}
        self.services: dict = {}
        self.transports: dict = {}
        self.queued: list = []
        self.queued_recorded: set = set()
        self._admitting = False
        self._retry_after_admit = False
        self.outcomes: dict = {}
        self.warnings: list = []
        self._reeval_at: set = set()
        self._valid_apps: set = set()
        self._miss_reported: set = set()

        specialized = sorted(v.id for v in self.fleet
                             if v.kind in analogy.SPECIALIZED_KINDS)
        self.reserved_ids = frozenset(specialized[:scenario.reserved_count])

    # -- event machinery ---------------------------------------------------

    def schedule(self, t_ms: int, kind: str, data: dict) -> None:
        assert t_ms >= self.now_ms, "cannot schedule events in the past"
        self._seq += 1
        heapq.heappush(self._heap, (t_ms, _QUEUE_RANK[kind], self._seq, kind, data))

    def emit(self, kind: str, payload: dict) -> dict:
        self._seq += 1
        record = {"time_s": _s(self.now_ms), "seq": self._seq, "kind": kind,
                  "payload": payload}
        self.records.append(record)
        return record

    def _ensure_reevaluation(self, t_ms: int) -> None:
        if t_ms not in self._reeval_at and t_ms <= self.horizon_ms:
            self._reeval_at.add(t_ms)
            self.schedule(t_ms, "Reevaluation", {"source": "update"})

    # -- setup ---------------------------------------------------------------

    def prime(self) -> None:
        for i, (t_s, delta) in enumerate(self.scn.updates):
            self.schedule(_ms(t_s), "StateUpdate",
                          {"source": "script", "index": i, "delta": delta})
        if self.scn.background is not None:
            bg = self.scn.background
            tick = 1
            while _ms(tick * bg.tick_s) <= self.horizon_ms:
                self.schedule(_ms(tick * bg.tick_s), "StateUpdate",
                              {"source": "background", "tick": tick})
                tick += 1
        tick = 1
        while _ms(tick * self.scn.tick_s) <= self.horizon_ms:
            t_ms = _ms(tick * self.scn.tick_s)
            self._reeval_at.add(t_ms)
            self.schedule(t_ms, "Reevaluation", {"source": "tick"})
            tick += 1
        for request in self.scn.requests:
            self.schedule(_ms(request.release_time_s), "RequestArrival",
                          {"request_id": request.id})

    # -- main loop -----------------------------------------------------------

    def run(self) -> None:
        self.prime()
        while self._heap:
            t_ms, _rank, _seq, kind, data = heapq.heappop(self._heap)
            if t_ms > self.horizon_ms:
                break
            self.now_ms = t_ms
            handler = getattr(self, "_on_" + kind)
            handler(data)
            self._check_conservation()
        self._finalize()

    def _check_conservation(self) -> None:
        # A vehicle is never on two assignments, and busy status mirrors
        # membership in exactly one of services or transports.
        active = [s.vehicle_id for s in self.services.values()]
        active += [t.vehicle_id for t in self.transports.values()]
        assert len(active) == len(set(active)), "vehicle double-booked"
        busy = set(active)
        for vehicle in self.fleet:
            assert (vehicle.status != "idle") == (vehicle.id in busy)

    # -- handlers ------------------------------------------------------------

    def _on_StateUpdate(self, data: dict) -> None:
        now_s = _s(self.now_ms)
        if data["source"] == "script":
            delta = data["delta"]
            payload = {"source": "script", "delta": delta}
        else:
            bg = self.scn.background
            tick = data["tick"]
            delta = {}
            for edge_id in sorted(self.net.edges):
                u = counter_uniform(bg.seed, self.seed, "walk", edge_id, tick)
                step = (2.0 * u - 1.0) * bg.congestion_step
                current = self.state.get(edge_id).congestion
                delta[edge_id] = {"congestion": reflect_unit(current + step)}
            payload = {"source": "background", "tick": tick, "edges_changed": len(delta)}
        self.state = apply_update(self.state, delta, now_s)
        self.emit("StateUpdate", payload)
        self._ensure_reevaluation(self.now_ms)

    def _on_RequestArrival(self, data: dict) -> None:
        request = self.requests[data["request_id"]]
        payload = {
            "request_id": request.id,
            "mode": request.mode.name,
            "criticality": request.criticality.name,
            "pickup_node": request.pickup_node,
            "destination_node": request.destination_node,
            "deadline_s": analogy.deadline_for(request.criticality, self.policy),
            "decisions": [],
        }
        record = self.emit("RequestArrival", payload)
        self._try_admit([request.id], arrival_record=record)

    def _on_Reevaluation(self, data: dict) -> None:
        now_s = _s(self.now_ms)
        entries = []
        planned = []
        if self.monitoring:
            for rid in sorted(self.services):
                service = self.services[rid]
                refreshed, resume_node, resume_time = self._refreshed_eta(service, now_s)
                ctx = MonitorContext(net=self.net, state=self.state,
                                     config=self.config, resume_node=resume_node,
                                     resume_time_s=resume_time,
                                     destination=service.task.request.pickup_node)
                outcome = monitor(service, now_s, refreshed, ctx)
                entry = {"request_id": rid, "eta_s": None if is_blocked(refreshed)
                         else refreshed, "outcome": outcome.kind,
                         "disturbance_veh_s": 0.0}
                if outcome.kind != "no_action" and outcome.route is not None:
                    entry["new_route"] = list(outcome.route.edges)
                    entry["new_eta_s"] = outcome.eta_s
                    entry["level"] = outcome.level.name
                entries.append(entry)
                planned.append((service, outcome, entry))
                service.last_advised_eta_s = refreshed
        payload = {"source": data["source"], "services": entries, "admitted": []}
        self.emit("Reevaluation", payload)
        for service, outcome, entry in planned:
            self._apply_outcome(service, outcome, entry)
        self._retry_stalled()
        self._retry_transports()
        if self.queued:
            admitted = self._try_admit(list(self.queued))
            payload["admitted"] = admitted

    def _retry_stalled(self) -> None:
        """Resume services stalled on an edge that has since unblocked.

        Monitoring usually reroutes around a blockage first; this plain retry
        covers the static-route variant and unbounded-deadline services.
        """
        now_s = _s(self.now_ms)
        for rid in sorted(self.services):
            service = self.services[rid]
            if service.stalled_at is None:
                continue
            next_index = service.edge_index + 1
            duration = traversal_time(self.net, service.route_edges[next_index],
                                      now_s, self.state, service.overlay)
            if not is_blocked(duration):
                self._enter_edge(service, next_index)

    def _on_EdgeExited(self, data: dict) -> None:
        rid = data["request_id"]
        if data.get("leg") == "transport":
            leg = self.transports.get(rid)
            if leg is None or leg.edge_index != data["edge_index"]:
                return
            self._transport_exited(leg)
            return
        service = self.services.get(rid)
        if service is None or service.edge_index != data["edge_index"]:
            return  # superseded by a reroute that resumed elsewhere
        edge = self.net.edges[service.route_edges[service.edge_index]]
        vehicle = self.vehicles[service.vehicle_id]
        self._place_at_node(vehicle, edge.to_node)
        self.emit("EdgeExited", {"request_id": rid, "vehicle_id": vehicle.id,
                                 "edge": edge.id, "node": edge.to_node})
        if service.edge_index == len(service.route_edges) - 1:
            self._complete_service(service)
        else:
            self._enter_edge(service, service.edge_index + 1)

    def _on_OverlayExpiry(self, data: dict) -> None:
        key = (data["request_id"], data["app_seq"])
        if key not in self._valid_apps:
            return
        service = self.services.get(data["request_id"])
        if service is not None and service.application_seq == data["app_seq"]:
            service.overlay = service.overlay.without_edge(data["edge"])
        self.emit("OverlayExpiry", {"request_id": data["request_id"],
                                    "edge": data["edge"]})

    # -- admission -----------------------------------------------------------

    def _try_admit(self, request_ids, arrival_record=None) -> list:
        """Build tasks for the given requests and dispatch what admission
        assigns.  Returns the ids that were dispatched.

        A dispatch can complete instantly (vehicle already at the pickup) and
        free its vehicle mid-pass; nested admission attempts are deferred and
        the queue is re-examined once the current pass has applied every
        decision, so no request is ever live and queued at once.
        """
        if self._admitting:
            self._retry_after_admit = True
            return []
        self._admitting = True
        dispatched_all: list = []
        pending = list(request_ids)
        try:
            while True:
                self._retry_after_admit = False
                dispatched_all.extend(self._admit_pass(pending, arrival_record))
                if not (self._retry_after_admit and self.queued):
                    break
                pending = list(self.queued)
                arrival_record = None
        finally:
            self._admitting = False
        return dispatched_all

    def _admit_pass(self, request_ids, arrival_record) -> list:
        now_s = _s(self.now_ms)
        tasks = []
        for rid in sorted(request_ids):
            if rid in self.services or rid in self.outcomes:
                continue
            request = self.requests[rid]
            try:
                task = analogy.to_task(
                    request, self.fleet, self.net, self.state, EMPTY_OVERLAY,
                    self.policy, self.scn.k_routes_per_vehicle, now_s,
                    self.config, self.reserved_ids)
            except (NoCandidateVehicle, NoRoute) as exc:
                self._queue_request(rid, str(exc), arrival_record)
                continue
            tasks.append(task)
        if not tasks:
            return []
        decisions = scheduler.admit(tasks, self.fleet, now_s)
        tasks_by_id = {t.task_id: t for t in tasks}
        dispatched = []
        extended = {d.task_id: d for d in decisions if isinstance(d, AssignNewDeadline)}
        for decision in decisions:
            if isinstance(decision, QueueTask):
                self._queue_request(decision.task_id, "no idle vehicle",
                                    arrival_record)
            elif isinstance(decision, AssignTask):
                self._dispatch(tasks_by_id[decision.task_id], decision,
                               extended.get(decision.task_id))
                dispatched.append(decision.task_id)
        return dispatched

    def _queue_request(self, rid: str, reason: str, arrival_record) -> None:
        # a live or completed request must never re-enter the queue
        if rid in self.services or rid in self.outcomes:
            return
        if rid not in self.queued:
            self.queued.append(rid)
        if rid not in self.queued_recorded:
            self.queued_recorded.add(rid)
            entry = {"decision": "QueueTask", "request_id": rid, "reason": reason,
                     "commands": [_command_name(c) for c in
                                  from_decision(QueueTask(rid))]}
            if arrival_record is not None:
                arrival_record["payload"]["decisions"].append(entry)

    def _dispatch(self, task: MCTask, decision: AssignTask,
                  new_deadline: AssignNewDeadline | None) -> None:
        now_s = _s(self.now_ms)
        if task.task_id in self.queued:
            self.queued.remove(task.task_id)
        vehicle = self.vehicles[decision.vehicle_id]
        overlay, cost = preemption.apply(decision.level, decision.route, self.net,
                                         self.state, now_s, self.config)
        deadline_abs = task.absolute_deadline_s
        if new_deadline is not None:
            deadline_abs = new_deadline.new_deadline_s
        service = ActiveService(
            task=task, vehicle_id=vehicle.id, route_edges=tuple(decision.route),
            level=decision.level, dispatch_time_s=now_s,
            deadline_abs_s=deadline_abs, overlay=overlay,
            disturbance_veh_s=cost.vehicle_seconds)
        self.services[task.task_id] = service
        vehicle.status = "en_route"
        self._register_overlay(service)

        ridx = task.candidates[vehicle.id].index(tuple(decision.route))
        eta = task.eta_s[(vehicle.id, ridx, decision.level)]
        commands = [_command_name(c) for c in from_decision(decision)]
        decisions_payload = [{"decision": "AssignTask", "vehicle_id": vehicle.id,
                              "level": decision.level.name, "commands": commands}]
        if new_deadline is not None:
            decisions_payload.append(
                {"decision": "AssignNewDeadline",
                 "new_deadline_s": new_deadline.new_deadline_s,
                 "commands": [_command_name(c) for c in from_decision(new_deadline)]})
        self.emit("Dispatch", {
            "request_id": task.task_id, "vehicle_id": vehicle.id,
            "route": list(decision.route), "level": decision.level.name,
            "eta_s": eta, "deadline_abs_s": _json_num(deadline_abs),
            "disturbance_veh_s": cost.vehicle_seconds,
            "decisions": decisions_payload,
        })
        if not service.route_edges:
            self._complete_service(service)
        else:
            self._enter_edge(service, 0)

    def _register_overlay(self, service: ActiveService) -> None:
        self._valid_apps.discard((service.task.task_id, service.application_seq))
        service.application_seq += 1
        self._valid_apps.add((service.task.task_id, service.application_seq))
        for ev in preemption.release(service.overlay, _s(self.now_ms)):
            self.schedule(max(_ms(ev.expiry_s), self.now_ms), "OverlayExpiry",
                          {"request_id": service.task.task_id, "edge": ev.edge_id,
                           "app_seq": service.application_seq})

    # -- motion ----------------------------------------------------------------

    def _place_at_node(self, vehicle: Vehicle, node: str) -> None:
        vehicle.node = node
        vehicle.edge_position = None

    def _place_on_edge(self, vehicle: Vehicle, edge_id: str) -> None:
        vehicle.edge_position = (edge_id, 0.0)
        vehicle.node = None

    def _enter_edge(self, service: ActiveService, index: int) -> None:
        now_s = _s(self.now_ms)
        edge_id = service.route_edges[index]
        duration = traversal_time(self.net, edge_id, now_s, self.state,
                                  service.overlay)
        vehicle = self.vehicles[service.vehicle_id]
        if is_blocked(duration):
            at = (self.net.edges[service.route_edges[index - 1]].to_node
                  if index > 0 else vehicle.node)
            service.stalled_at = at
            service.edge_index = index - 1
            return
        service.stalled_at = None
        service.edge_index = index
        service.edge_entry_s = now_s
        service.planned_exit_s = now_s + duration
        self._place_on_edge(vehicle, edge_id)
        self.emit("EdgeEntered", {"request_id": service.task.task_id,
                                  "vehicle_id": vehicle.id, "edge": edge_id,
                                  "duration_s": duration,
                                  "level": service.level.name})
        self.schedule(_ms(service.planned_exit_s), "EdgeExited",
                      {"request_id": service.task.task_id, "edge_index": index})

    def _refreshed_eta(self, service: ActiveService, now_s: float):
        if service.stalled_at is not None:
            resume_node, resume_time = service.stalled_at, now_s
            remaining = service.route_edges[service.edge_index + 1:]
            base = 0.0
        else:
            edge = self.net.edges[service.route_edges[service.edge_index]]
            resume_node, resume_time = edge.to_node, service.planned_exit_s
            remaining = service.route_edges[service.edge_index + 1:]
            base = resume_time - now_s
        rest = router.route_eta(self.net, remaining, resume_time, self.state,
                                service.overlay)
        eta = float("inf") if is_blocked(rest) else base + rest
        return eta, resume_node, resume_time

    def _apply_outcome(self, service: ActiveService, outcome, entry: dict) -> None:
        rid = service.task.task_id
        if outcome.kind == "no_action":
            self._miss_reported.discard(rid)
            return
        if outcome.kind == "predicted_miss" and outcome.route is None:
            if rid not in self._miss_reported:
                self._miss_reported.add(rid)
                self.emit("PredictedMiss", {
                    "request_id": rid, "level": service.level.name,
                    "best_eta_s": None, "new_deadline_abs_s": None})
            return
        self._miss_reported.discard(rid)
        old_level = service.level
        if outcome.level > service.level:
            service.raise_level(outcome.level)
        cost = self._adopt_route(service, outcome.route)
        entry["disturbance_veh_s"] = cost
        if outcome.level > old_level:
            self.emit("EscalationApplied", {
                "request_id": rid, "vehicle_id": service.vehicle_id,
                "from_level": old_level.name, "to_level": outcome.level.name,
                "route": list(service.route_edges), "eta_s": outcome.eta_s,
                "disturbance_veh_s": cost,
                "decisions": [d.__class__.__name__ for d in outcome.decisions]})
        if outcome.kind == "predicted_miss":
            for decision in outcome.decisions:
                if isinstance(decision, AssignNewDeadline):
                    service.deadline_abs_s = decision.new_deadline_s
            self.emit("PredictedMiss", {
                "request_id": rid, "level": service.level.name,
                "best_eta_s": outcome.eta_s,
                "new_deadline_abs_s": _json_num(service.deadline_abs_s)})

    def _adopt_route(self, service: ActiveService, route) -> float:
        """Swap the not-yet-entered tail of the plan and re-apply privileges.
        Returns the disturbance cost of the fresh application."""
        overlay, cost = preemption.apply(service.level, route.edges, self.net,
                                         self.state, route.departure_time_s,
                                         self.config)
        service.overlay = overlay
        service.disturbance_veh_s += cost.vehicle_seconds
        self._register_overlay(service)
        prefix = service.route_edges[:service.edge_index + 1]
        service.route_edges = prefix + tuple(route.edges)
        if service.stalled_at is not None:
            if route.edges:
                self._enter_edge(service, service.edge_index + 1)
            else:
                self._complete_service(service)
        return cost.vehicle_seconds

    # -- completion and transport ---------------------------------------------

    def _complete_service(self, service: ActiveService) -> None:
        now_s = _s(self.now_ms)
        task = service.task
        request = task.request
        response = now_s - request.release_time_s
        met = task.deadline_s is None or response <= task.deadline_s
        self.outcomes[request.id] = Outcome(
            request_id=request.id, criticality=request.criticality.name,
            release_s=request.release_time_s, response_time_s=response,
            deadline_s=task.deadline_s, met=met, final_level=service.level.name,
            disturbance_veh_s=service.disturbance_veh_s, served=True)
        vehicle = self.vehicles[service.vehicle_id]
        self._place_at_node(vehicle, request.pickup_node)
        self.emit("ServiceCompleted", {
            "request_id": request.id, "vehicle_id": vehicle.id,
            "node": request.pickup_node, "response_time_s": response, "met": met,
            "level": service.level.name})
        del self.services[request.id]
        self._miss_reported.discard(request.id)
        if (request.destination_node is not None
                and request.destination_node != request.pickup_node):
            self._begin_transport(request, vehicle)
        else:
            vehicle.status = "idle"
            if self.queued:
                self._try_admit(list(self.queued))

    def _begin_transport(self, request, vehicle) -> None:
        now_s = _s(self.now_ms)
        try:
            route = router.fastest_route(self.net, self.state, EMPTY_OVERLAY,
                                         request.pickup_node,
                                         request.destination_node, now_s)
        except NoRoute:
            self.warnings.append(f"TransportUnroutable: {request.id}")
            vehicle.status = "idle"
            return
        vehicle.status = "serving"
        leg = _TransportLeg(request_id=request.id, vehicle_id=vehicle.id,
                            route_edges=route.edges)
        self.transports[request.id] = leg
        self._transport_enter(leg, 0)

    def _transport_enter(self, leg: _TransportLeg, index: int) -> None:
        now_s = _s(self.now_ms)
        edge_id = leg.route_edges[index]
        duration = traversal_time(self.net, edge_id, now_s, self.state)
        vehicle = self.vehicles[leg.vehicle_id]
        if is_blocked(duration):
            leg.stalled_at = (self.net.edges[leg.route_edges[index - 1]].to_node
                              if index > 0 else vehicle.node)
            leg.edge_index = index - 1
            return
        leg.stalled_at = None
        leg.edge_index = index
        leg.planned_exit_s = now_s + duration
        self._place_on_edge(vehicle, edge_id)
        self.emit("EdgeEntered", {"request_id": leg.request_id,
                                  "vehicle_id": vehicle.id, "edge": edge_id,
                                  "duration_s": duration, "leg": "transport"})
        self.schedule(_ms(leg.planned_exit_s), "EdgeExited",
                      {"request_id": leg.request_id, "edge_index": index,
                       "leg": "transport"})

    def _transport_exited(self, leg: _TransportLeg) -> None:
        edge = self.net.edges[leg.route_edges[leg.edge_index]]
        vehicle = self.vehicles[leg.vehicle_id]
        self._place_at_node(vehicle, edge.to_node)
        self.emit("EdgeExited", {"request_id": leg.request_id,
                                 "vehicle_id": vehicle.id, "edge": edge.id,
                                 "node": edge.to_node, "leg": "transport"})
        if leg.edge_index == len(leg.route_edges) - 1:
            vehicle.status = "idle"
            del self.transports[leg.request_id]
            if self.queued:
                self._try_admit(list(self.queued))
        else:
            self._transport_enter(leg, leg.edge_index + 1)

    def _retry_transports(self) -> None:
        for rid in sorted(self.transports):
            leg = self.transports[rid]
            if leg.stalled_at is None:
                continue
            next_index = leg.edge_index + 1
            duration = traversal_time(self.net, leg.route_edges[next_index],
                                      _s(self.now_ms), self.state)
            if not is_blocked(duration):
                self._transport_enter(leg, next_index)
                continue
            try:
                route = router.fastest_route(self.net, self.state, EMPTY_OVERLAY,
                                             leg.stalled_at,
                                             self.requests[rid].destination_node,
                                             _s(self.now_ms))
            except NoRoute:
                continue
            leg.route_edges = leg.route_edges[:next_index] + route.edges
            self._transport_enter(leg, next_index)

    # -- wrap-up -----------------------------------------------------------------

    def _finalize(self) -> None:
        for request in self.scn.requests:
            if request.id in self.outcomes:
                continue
            deadline = analogy.deadline_for(request.criticality, self.policy)
            service = self.services.get(request.id)
            level = service.level.name if service else "P0"
            disturbance = service.disturbance_veh_s if service else 0.0
            self.outcomes[request.id] = Outcome(
                request_id=request.id, criticality=request.criticality.name,
                release_s=request.release_time_s, response_time_s=None,
                deadline_s=deadline, met=False, final_level=level,
                disturbance_veh_s=disturbance, served=False)
            self.warnings.append(f"HorizonExceeded: {request.id}")


def replace_vehicle(vehicle: Vehicle) -> Vehicle:
    return Vehicle(id=vehicle.id, kind=vehicle.kind, node=vehicle.node,
                   edge_position=vehicle.edge_position, status=vehicle.status)


def _command_name(command) -> str:
    return command.__class__.__name__


def _json_num(value: float):
    if value is None or value == float("inf") or value == float("-inf"):
        return None
    return value


def run(scenario: Scenario, seed: int, variant: str = "mcrts") -> Trace:
    """Execute the scenario deterministically and return its trace."""
    sim = _Simulation(scenario, seed, variant)
    sim.run()
    records = [SimEvent(time_s=r["time_s"], seq=r["seq"], kind=r["kind"],
                        payload=r["payload"]) for r in sim.records]
    lines = [canonical_json({"time_s": r.time_s, "seq": r.seq, "kind": r.kind,
                             "payload": r.payload}) for r in records]
    digest = hashlib.sha256("\n".join(lines).encode()).hexdigest()
    return Trace(records=records, outcomes=sim.outcomes, seed=seed,
                 variant=variant, config_digest=config_digest(scenario),
                 digest=digest, horizon_s=scenario.horizon_s,
                 warnings=sim.warnings)


def response_time(trace: Trace, request_id: str) -> float | None:
    """Response time in seconds, or None when the request went unserved."""
    try:
        outcome = trace.outcomes[request_id]
    except KeyError:
        raise UnknownRequest(f"unknown request {request_id!r}") from None
    return outcome.response_time_s


def trace_lines(trace: Trace):
    """NDJSON lines: one per event, then a summary footer record."""
    for record in trace.records:
        yield canonical_json({"time_s": record.time_s, "seq": record.seq,
                              "kind": record.kind, "payload": record.payload})
    footer = {
        "kind": "summary",
        "seed": trace.seed,
        "variant": trace.variant,
        "config_digest": trace.config_digest,
        "digest": trace.digest,
        "horizon_s": trace.horizon_s,
        "warnings": trace.warnings,
        "outcomes": {rid: trace.outcomes[rid].to_dict()
                     for rid in sorted(trace.outcomes)},
    }
    yield canonical_json(footer)


def write_trace(trace: Trace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in trace_lines(trace):
            fh.write(line + "\n")
