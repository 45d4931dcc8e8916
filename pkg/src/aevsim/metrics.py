"""Compliance and impact analytics over completed traces.

Achieved fractions count unserved requests as misses; the mortality estimate
charges 1% per minute of response delay beyond the contractual deadline of
the life-threatening classes (see report notes).
"""

import math
from dataclasses import dataclass

from .analogy import Criticality, DeadlinePolicy
from .kernel import Trace

MORTALITY_PER_MINUTE = 0.01

REPORT_NOTES = ("mortality model: 1% per minute of response delay beyond the "
                "per-criticality deadline; unserved requests are charged up "
                "to the horizon and count as misses at every target")

CSV_COLUMNS = ("criticality", "count", "target_fraction", "target_s",
               "achieved", "pass")


@dataclass(frozen=True)
class TargetResult:
    fraction: float
    seconds: float
    achieved: float | None      # None when the class is empty
    passed: bool | None

    def to_dict(self) -> dict:
        return {"target_fraction": self.fraction, "target_s": self.seconds,
                "achieved": self.achieved, "pass": self.passed}


@dataclass(frozen=True)
class CriticalityStats:
    criticality: str
    count: int
    served: int
    unserved: int
    p50_s: float | None
    p90_s: float | None
    p95_s: float | None
    targets: tuple

    def to_dict(self) -> dict:
        return {
            "criticality": self.criticality, "count": self.count,
            "served": self.served, "unserved": self.unserved,
            "p50_s": self.p50_s, "p90_s": self.p90_s, "p95_s": self.p95_s,
            "targets": [t.to_dict() for t in self.targets],
        }


@dataclass(frozen=True)
class ComplianceReport:
    per_criticality: tuple
    mortality_delta: float
    disturbance_veh_s: float
    unserved_total: int
    policy_name: str
    notes: str = REPORT_NOTES

    def stats_for(self, criticality) -> CriticalityStats:
        name = criticality.name if isinstance(criticality, Criticality) else criticality
        for stats in self.per_criticality:
            if stats.criticality == name:
                return stats
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy_name,
            "notes": self.notes,
            "criticality_classes": [s.to_dict() for s in self.per_criticality],
            "mortality_delta": self.mortality_delta,
            "disturbance_veh_s": self.disturbance_veh_s,
            "unserved": self.unserved_total,
        }

    def csv_rows(self):
        """Flat rows, one per criticality x target pair, in the documented
        stable order: criticality descending, targets in policy order."""
        rows = [list(CSV_COLUMNS)]
        for stats in self.per_criticality:
            for target in stats.targets:
                achieved = "" if target.achieved is None else f"{target.achieved:.6f}"
                passed = "na" if target.passed is None else str(target.passed).lower()
                rows.append([stats.criticality, str(stats.count),
                             f"{target.fraction:g}", f"{target.seconds:g}",
                             achieved, passed])
        return rows


def _percentile(sorted_values, q: float) -> float | None:
    if not sorted_values:
        return None
    index = max(0, math.ceil(q * len(sorted_values)) - 1)
    return sorted_values[index]


def compliance(trace: Trace, policy: DeadlinePolicy) -> ComplianceReport:
    """Score a trace against the policy's percentile targets."""
    report_stats = []
    for crit in sorted(Criticality, reverse=True):
        outcomes = [o for o in trace.outcomes.values() if o.criticality == crit.name]
        responses = sorted(o.response_time_s for o in outcomes if o.served)
        count = len(outcomes)
        targets = []
        for fraction, seconds in policy.targets.get(crit, ()):
            if count == 0:
                targets.append(TargetResult(fraction, seconds, None, None))
                continue
            within = sum(1 for r in responses if r <= seconds)
            achieved = within / count
            targets.append(TargetResult(fraction, seconds, achieved,
                                        achieved >= fraction))
        report_stats.append(CriticalityStats(
            criticality=crit.name, count=count, served=len(responses),
            unserved=count - len(responses),
            p50_s=_percentile(responses, 0.50),
            p90_s=_percentile(responses, 0.90),
            p95_s=_percentile(responses, 0.95),
            targets=tuple(targets)))
    return ComplianceReport(
        per_criticality=tuple(report_stats),
        mortality_delta=mortality_delta(trace, policy),
        disturbance_veh_s=disturbance_total(trace),
        unserved_total=sum(1 for o in trace.outcomes.values() if not o.served),
        policy_name=policy.name)


def mortality_delta(trace: Trace, policy: DeadlinePolicy,
                    include_orange: bool = False) -> float:
    """Expected fractional mortality increase from late responses.

    Applies to the life-threatening classes (C2/C3); the orange class can be
    opted in.  Delay is counted beyond the contractual deadline, and an
    unserved request is charged as if served at the horizon.
    """
    classes = {Criticality.C2.name, Criticality.C3.name}
    if include_orange:
        classes.add(Criticality.C1.name)
    total = 0.0
    for outcome in trace.outcomes.values():
        if outcome.criticality not in classes or outcome.deadline_s is None:
            continue
        if outcome.served:
            overrun_min = max(0.0, (outcome.response_time_s - outcome.deadline_s) / 60.0)
        else:
            latest = trace.horizon_s - outcome.release_s
            overrun_min = max(0.0, (latest - outcome.deadline_s) / 60.0)
        total += MORTALITY_PER_MINUTE * overrun_min
    return total


def disturbance_total(trace: Trace) -> float:
    """Vehicle-seconds of background delay over every applied overlay.

    Applications appear in Dispatch records and in re-evaluation service
    entries (reroutes and escalations); EscalationApplied records repeat the
    re-evaluation figure and are not counted again.
    """
    total = 0.0
    for record in trace.records:
        if record.kind == "Dispatch":
            total += record.payload["disturbance_veh_s"]
        elif record.kind == "Reevaluation":
            for entry in record.payload["services"]:
                total += entry.get("disturbance_veh_s", 0.0)
    return total
