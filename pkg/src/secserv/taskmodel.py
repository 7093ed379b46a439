"""Domain model for task sets: legacy real-time tasks, sporadic security
monitoring tasks, and the parameters of the budgeted server that hosts them.

All times are milliseconds as plain floats; no integer-tick assumption is
made anywhere in the toolkit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class TaskSetError(ValueError):
    """Raised when a task-set document or value violates the model."""


def _require(cond, path, message):
    if not cond:
        raise TaskSetError(f"{path}: {message}")


@dataclass(frozen=True)
class RtTask:
    """A hard real-time task with implicit deadline (deadline == period)."""

    name: str
    wcet: float
    period: float

    def __post_init__(self):
        path = f"rt task {self.name!r}"
        _require(self.wcet > 0, path, "wcet must be positive")
        _require(self.period > 0, path, "period must be positive")
        _require(self.wcet <= self.period, path, "wcet exceeds period")

    @property
    def deadline(self):
        return self.period

    @property
    def utilization(self):
        return self.wcet / self.period


@dataclass(frozen=True)
class SecTask:
    """A security monitoring task.

    The actual period is a decision variable constrained to
    [t_des, t_max]; ``weight`` expresses the task's criticality in the
    period-adaptation objective.
    """

    name: str
    wcet: float
    t_des: float
    t_max: float
    weight: float
    criticality: str | None = None

    def __post_init__(self):
        path = f"sec task {self.name!r}"
        _require(self.wcet > 0, path, "wcet must be positive")
        _require(self.t_des > 0, path, "t_des must be positive")
        _require(self.t_des <= self.t_max, path, "t_des exceeds t_max")
        _require(self.weight > 0, path, "weight must be positive")


@dataclass(frozen=True)
class ServerParams:
    """Capacity and replenishment period of the lowest-priority server."""

    capacity: float
    period: float

    def __post_init__(self):
        _require(self.capacity > 0, "server", "capacity must be positive")
        _require(self.capacity <= self.period, "server",
                 "capacity exceeds replenishment period")

    @property
    def utilization(self):
        return self.capacity / self.period


@dataclass(frozen=True)
class TaskSet:
    """A validated task set.

    ``rt_tasks`` are stored in rate-monotonic priority order (ascending
    period, ties broken by input order).  ``sec_tasks`` keep their given
    order, which is their fixed-priority order inside the server.
    Instances are immutable and safe to share between threads.
    """

    rt_tasks: tuple = field(default_factory=tuple)
    sec_tasks: tuple = field(default_factory=tuple)

    @property
    def rt_utilization(self):
        return sum(t.utilization for t in self.rt_tasks)

    def sec_task(self, name):
        for t in self.sec_tasks:
            if t.name == name:
                return t
        raise KeyError(name)


def make_taskset(rt_tasks, sec_tasks, sec_order="input"):
    """Validate and assemble a TaskSet.

    RT tasks are sorted rate-monotonically (stable, so equal periods keep
    input order and hence get distinct priorities).  ``sec_order`` is
    "input" (designer-assigned priorities) or "rm_des" to normalize the
    security priorities to rate-monotonic order over the desired periods.
    """
    rt_tasks = sorted(rt_tasks, key=lambda t: t.period)
    sec_tasks = list(sec_tasks)
    if sec_order == "rm_des":
        sec_tasks.sort(key=lambda t: t.t_des)
    elif sec_order != "input":
        raise TaskSetError(f"sec_order: unknown value {sec_order!r}")
    names = set()
    for t in list(rt_tasks) + sec_tasks:
        _require(t.name not in names, f"task {t.name!r}", "duplicate name")
        names.add(t.name)
    return TaskSet(tuple(rt_tasks), tuple(sec_tasks))


_RT_FIELDS = {"name": str, "wcet": (int, float), "period": (int, float)}
_SEC_FIELDS = {"name": str, "wcet": (int, float), "t_des": (int, float),
               "t_max": (int, float), "weight": (int, float)}


def _pick(obj, fields, path):
    _require(isinstance(obj, dict), path, "expected an object")
    out = {}
    for key, typ in fields.items():
        _require(key in obj, f"{path}.{key}", "missing field")
        value = obj[key]
        _require(isinstance(value, typ) and not isinstance(value, bool),
                 f"{path}.{key}", f"expected {typ if typ is str else 'number'}")
        out[key] = value
    return out


def parse_taskset(text, sec_order="input"):
    """Parse and validate a JSON task-set document.

    Schema::

        {"rt_tasks":  [{"name","wcet","period"}, ...],
         "sec_tasks": [{"name","wcet","t_des","t_max","weight",
                        "criticality"?}, ...]}

    Unknown top-level keys (e.g. generator metadata) are ignored.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TaskSetError(f"malformed JSON: {exc}") from None
    _require(isinstance(doc, dict), "$", "expected a JSON object")
    rt = []
    for i, obj in enumerate(doc.get("rt_tasks", []) or []):
        rt.append(RtTask(**_pick(obj, _RT_FIELDS, f"rt_tasks[{i}]")))
    sec = []
    for i, obj in enumerate(doc.get("sec_tasks", []) or []):
        fields = _pick(obj, _SEC_FIELDS, f"sec_tasks[{i}]")
        crit = obj.get("criticality")
        if crit is not None:
            _require(isinstance(crit, str), f"sec_tasks[{i}].criticality",
                     "expected string")
            fields["criticality"] = crit
        sec.append(SecTask(**fields))
    return make_taskset(rt, sec, sec_order=sec_order)


def taskset_to_dict(ts):
    doc = {
        "rt_tasks": [{"name": t.name, "wcet": t.wcet, "period": t.period}
                     for t in ts.rt_tasks],
        "sec_tasks": [],
    }
    for t in ts.sec_tasks:
        obj = {"name": t.name, "wcet": t.wcet, "t_des": t.t_des,
               "t_max": t.t_max, "weight": t.weight}
        if t.criticality is not None:
            obj["criticality"] = t.criticality
        doc["sec_tasks"].append(obj)
    return doc


def serialize_taskset(ts, meta=None):
    """Serialize a TaskSet to JSON; parse_taskset round-trips it."""
    doc = taskset_to_dict(ts)
    if meta:
        doc["_meta"] = meta
    return json.dumps(doc, indent=2) + "\n"


def total_utilization(pairs):
    """Sum of wcet/period over (wcet, period) pairs."""
    return sum(c / t for c, t in pairs)
