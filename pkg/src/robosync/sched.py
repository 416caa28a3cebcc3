"""Task model and scheduling policy: category taxonomy, max-inheritance base
priorities with safety pinning, windowed frequency counters driving adaptive
adjustment, and dispatch selection over a ready queue."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import AbstractSet, Mapping

from .config import SchedulerParams

# Base priority for tasks no behavior uses; keeps dispatch total without
# letting orphan work outrank real behaviors.
UNLINKED_BASE_PRIORITY = 0.05


class TaskCategory(enum.IntEnum):
    """Task roles; the numeric value doubles as the dispatch tie-break rank
    (safety first, then the downstream layers draining toward sensors)."""

    SENSOR_INPUT = 0
    ALGORITHMIC = 1
    BEHAVIORAL = 2
    CONTROL = 3
    SAFETY = 4

    @property
    def label(self) -> str:
        return self.name.lower()


class UnknownBehaviorError(KeyError):
    """A usage map references a behavior with no declared priority."""


@dataclass(slots=True)
class TaskDescriptor:
    """A schedulable unit.  `current_priority` floats between base and 1.0
    under the adaptive policy; safety tasks stay exactly at 1.0."""

    id: str
    category: TaskCategory
    behaviors: frozenset[str]
    base_priority: float
    current_priority: float
    cost_us: int


@dataclass(slots=True)
class FrequencyCounter:
    """Trigger timestamps for one behavior within the current tumbling window."""

    behavior: str
    trigger_timestamps: list[int] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.trigger_timestamps)


@dataclass(frozen=True, slots=True)
class PriorityUpdate:
    """One task's adjustment at a window boundary."""

    task: str
    old: float
    new: float
    f_max: int
    behavior: str | None
    delta: float


@dataclass(frozen=True, slots=True)
class QueueEntry:
    task_id: str
    enqueue_seq: int
    enqueue_t_us: int
    payload: object = None


class ReadyQueue:
    """FIFO-stamped set of runnable work items awaiting dispatch."""

    def __init__(self) -> None:
        self._entries: list[QueueEntry] = []
        self._next_seq = 0

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> tuple[QueueEntry, ...]:
        return tuple(self._entries)

    def push(self, task_id: str, t_us: int, payload: object = None) -> QueueEntry:
        entry = QueueEntry(task_id, self._next_seq, t_us, payload)
        self._next_seq += 1
        self._entries.append(entry)
        return entry

    def remove(self, entry: QueueEntry) -> None:
        self._entries.remove(entry)

    def purge(self, keep_categories: AbstractSet[TaskCategory], tasks: Mapping[str, TaskDescriptor]) -> list[QueueEntry]:
        """Drop every queued entry whose task category is not in `keep_categories`."""
        removed = [e for e in self._entries if tasks[e.task_id].category not in keep_categories]
        self._entries = [e for e in self._entries if tasks[e.task_id].category in keep_categories]
        return removed


def assign_base_priorities(
    behavior_priorities: Mapping[str, float],
    usage: Mapping[str, AbstractSet[str]],
    safety_tasks: AbstractSet[str] = frozenset(),
) -> dict[str, float]:
    """Base priority per task: the max over the behaviors that use it, with
    anything tied to a safety check pinned to 1.0 regardless of other usage."""
    out: dict[str, float] = {}
    for task_id, used in usage.items():
        if task_id in safety_tasks:
            out[task_id] = 1.0
            continue
        unknown = sorted(set(used) - set(behavior_priorities))
        if unknown:
            raise UnknownBehaviorError(f"task {task_id!r} uses unknown behavior {unknown[0]!r}")
        out[task_id] = max((behavior_priorities[b] for b in used), default=UNLINKED_BASE_PRIORITY)
    for task_id in sorted(safety_tasks):
        out.setdefault(task_id, 1.0)
    return out


def record_trigger(counter: FrequencyCounter, t_us: int) -> FrequencyCounter:
    """Count one triggering of the counter's behavior at `t_us`."""
    counter.trigger_timestamps.append(t_us)
    return counter


def adapt_priorities(
    tasks: Mapping[str, TaskDescriptor],
    counters: Mapping[str, FrequencyCounter],
    params: SchedulerParams,
) -> list[PriorityUpdate]:
    """Apply the windowed adjustment at a tumbling-window boundary.

    Every non-safety task is recomputed from its base: the linked behavior
    with the highest trigger count F contributes alpha * F / W (W in seconds),
    capped at p_max.  Counters reset for the next window.  Returns one update
    record per adjusted task, in task insertion order.
    """
    w_seconds = params.window_us / 1e6
    updates: list[PriorityUpdate] = []
    for task in tasks.values():
        if task.category is TaskCategory.SAFETY:
            continue
        best_behavior: str | None = None
        best_f = 0
        for behavior in sorted(task.behaviors):
            counter = counters.get(behavior)
            f = counter.count if counter is not None else 0
            if f > best_f:
                best_f = f
                best_behavior = behavior
        delta = params.alpha * best_f / w_seconds
        new = min(task.base_priority + delta, params.p_max)
        updates.append(PriorityUpdate(task.id, task.current_priority, new, best_f, best_behavior, delta))
        task.current_priority = new
    for counter in counters.values():
        counter.trigger_timestamps.clear()
    return updates


def select_next(queue: ReadyQueue, tasks: Mapping[str, TaskDescriptor]) -> QueueEntry | None:
    """Pop the queue entry to run next: highest current priority, ties broken
    by category rank (safety > control > behavioral > algorithmic > sensor
    input), then FIFO by enqueue sequence.  None when the queue is empty."""
    best: QueueEntry | None = None
    best_key: tuple[float, int, int] | None = None
    for entry in queue.entries():
        task = tasks[entry.task_id]
        key = (task.current_priority, int(task.category), -entry.enqueue_seq)
        if best_key is None or key > best_key:
            best = entry
            best_key = key
    if best is not None:
        queue.remove(best)
    return best
