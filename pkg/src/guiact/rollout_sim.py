"""Discrete-event simulation of asynchronous GRPO rollout with work stealing.

Model
-----
* A global FIFO task queue feeds GPU groups; an idle group pulls one task and
  samples it ``num_generations`` times, one sample after another.
* A finished task becomes a rollout group in its node's result backlog.
* Each node has one gradient worker that consumes rollout groups from its own
  backlog. When it goes idle with a small backlog it may steal a rollout group
  from the peer with the largest backlog; the transfer costs
  ``transfer_latency``.
* Once ``sync_condition`` rollout groups have been processed since the last
  update, a global broadcast pauses rollout. In-flight samples and gradient
  work finish, then a synchronized update of ``update_duration`` consumes all
  processed groups and bumps the policy version. A last partial update
  flushes whatever remains at the end.

Per-sample latency is ``base * exp(spread * z)`` with ``z`` standard normal,
drawn from a stream keyed on ``(seed, task_id)`` only, so schedule changes
(e.g. toggling stealing) never change the work itself.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

EVENT_KINDS = (
    "update_done",
    "inference_complete",
    "gradient_done",
    "steal_transfer",
    "sync_broadcast",
    "steal_request",
    "dispatch",
)
_PRIORITY = {k: i for i, k in enumerate(EVENT_KINDS)}


class InvalidConfig(ValueError):
    pass


class SimulationError(RuntimeError):
    """An internal accounting invariant broke."""


@dataclass(frozen=True)
class LatencyModel:
    base: float = 1.0
    spread: float = 0.25


@dataclass(frozen=True)
class SimConfig:
    nodes: int = 2
    groups_per_node: Tuple[int, ...] = (2, 2)
    num_generations: int = 8
    task_count: int = 64
    latency_model: Tuple[LatencyModel, ...] = (LatencyModel(1.0, 0.25), LatencyModel(3.0, 0.25))
    sync_condition: int = 8
    # None disables stealing.
    steal_trigger: Optional[int] = 0
    transfer_latency: float = 0.1
    grad_time_per_sample: float = 1.0
    update_duration: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        gpn = self.groups_per_node
        if isinstance(gpn, int):
            gpn = (gpn,) * self.nodes
        object.__setattr__(self, "groups_per_node", tuple(gpn))
        lm = self.latency_model
        if isinstance(lm, (LatencyModel, dict)):
            lm = (lm,) * self.nodes
        object.__setattr__(self, "latency_model", tuple(
            m if isinstance(m, LatencyModel) else LatencyModel(**m) for m in lm))
        self.validate()

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise InvalidConfig(msg)

        need(_is_count(self.nodes), "nodes must be >= 1")
        need(len(self.groups_per_node) == self.nodes, "groups_per_node needs one entry per node")
        need(all(_is_count(g) for g in self.groups_per_node), "every node needs >= 1 GPU group")
        need(len(self.latency_model) == self.nodes, "latency_model needs one entry per node")
        need(all(m.base > 0 and m.spread >= 0 for m in self.latency_model), "latency base > 0, spread >= 0")
        need(_is_count(self.num_generations), "num_generations must be >= 1")
        need(_is_count(self.task_count), "task_count must be >= 1")
        need(_is_count(self.sync_condition) and self.sync_condition <= self.task_count,
             "sync_condition must be in [1, task_count]")
        need(self.steal_trigger is None or (isinstance(self.steal_trigger, int) and self.steal_trigger >= 0),
             "steal_trigger must be null or >= 0")
        need(self.transfer_latency >= 0 and self.grad_time_per_sample >= 0 and self.update_duration >= 0,
             "durations must be >= 0")
        need(isinstance(self.seed, int) and not isinstance(self.seed, bool) and self.seed >= 0,
             "seed must be a non-negative integer")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise InvalidConfig(str(e)) from None

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["groups_per_node"] = list(self.groups_per_node)
        d["latency_model"] = [asdict(m) for m in self.latency_model]
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _is_count(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and v >= 1


@dataclass(frozen=True)
class SimEvent:
    virtual_time: float
    kind: str
    payload: Dict[str, Any]


@dataclass
class SimReport:
    total_virtual_time: float
    group_busy: List[float]
    group_idle: List[float]
    utilization: float
    updates_performed: int
    steal_count: int
    samples_completed: int
    tasks_dispatched: int
    groups_consumed: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


# -- policies --------------------------------------------------------------

def work_steal_policy(local_backlog: int, peer_backlogs: Sequence[int],
                      steal_trigger: Optional[int] = 0) -> Optional[int]:
    """Index of the peer to steal from, or None.

    Steal only when the local backlog is at or below the trigger, from the
    fullest peer (lowest index on ties) if it holds more than we do.
    """
    if steal_trigger is None or local_backlog > steal_trigger or not peer_backlogs:
        return None
    best = max(range(len(peer_backlogs)), key=lambda i: (peer_backlogs[i], -i))
    return best if peer_backlogs[best] > local_backlog else None


def sync_check(completed_groups: int, config: SimConfig) -> bool:
    return completed_groups >= config.sync_condition


# -- simulator -------------------------------------------------------------

@dataclass
class _Rollout:
    task_id: int
    home_node: int
    samples: List[Tuple[int, int]] = field(default_factory=list)  # (sample index, policy version)


@dataclass
class _Group:
    gid: int
    node: int
    task: Optional[int] = None
    next_sample: int = 0
    running: bool = False
    started_at: float = 0.0
    busy: float = 0.0
    rollout: Optional[_Rollout] = None


@dataclass
class _Worker:
    node: int
    state: str = "idle"  # idle | computing | awaiting
    current: Optional[_Rollout] = None


class _Sim:
    def __init__(self, config: SimConfig, trace: bool) -> None:
        self.cfg = config
        self.now = 0.0
        self.heap: list = []
        self.seq = 0
        self.trace: Optional[List[SimEvent]] = [] if trace else None

        self.queue: Deque[int] = deque(range(config.task_count))
        self.groups: List[_Group] = []
        for node, n in enumerate(config.groups_per_node):
            for _ in range(n):
                self.groups.append(_Group(len(self.groups), node))
        self.backlog: List[Deque[_Rollout]] = [deque() for _ in range(config.nodes)]
        self.workers = [_Worker(n) for n in range(config.nodes)]
        self._latencies: Dict[int, np.ndarray] = {}

        self.version = 0
        self.paused = False
        self.updating = False
        self.processed: List[_Rollout] = []

        self.samples_completed = 0
        self.tasks_dispatched = 0
        self.rollouts_done = 0
        self.steal_count = 0
        self.updates = 0
        self.consumed_ids: List[int] = []

    # event plumbing
    def push(self, delay: float, kind: str, **payload: Any) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (self.now + delay, _PRIORITY[kind], self.seq, kind, payload))

    def log(self, kind: str, **payload: Any) -> None:
        if self.trace is not None:
            self.trace.append(SimEvent(self.now, kind, payload))

    def latency(self, task: int, sample: int, node: int) -> float:
        z = self._latencies.get(task)
        if z is None:
            rng = np.random.default_rng([self.cfg.seed, task])
            z = self._latencies[task] = rng.standard_normal(self.cfg.num_generations)
        m = self.cfg.latency_model[node]
        return float(m.base * np.exp(m.spread * z[sample]))

    # GPU groups
    def wake_group(self, g: _Group) -> None:
        if self.paused or g.running:
            return
        if g.task is None:
            if not self.queue:
                return
            self.push(0.0, "dispatch", gid=g.gid)
            g.running = True  # reserved until the dispatch event fires
            return
        self.start_sample(g)

    def on_dispatch(self, gid: int) -> None:
        g = self.groups[gid]
        g.running = False
        if self.paused or not self.queue:
            self.maybe_start_update()
            return
        g.task = self.queue.popleft()
        g.next_sample = 0
        g.rollout = _Rollout(g.task, g.node)
        self.tasks_dispatched += 1
        self.log("dispatch", group=gid, node=g.node, task=g.task)
        self.start_sample(g)

    def start_sample(self, g: _Group) -> None:
        g.running = True
        g.started_at = self.now
        g.rollout.samples.append((g.next_sample, self.version))
        self.push(self.latency(g.task, g.next_sample, g.node), "inference_complete",
                  gid=g.gid, task=g.task, sample=g.next_sample, version=self.version)

    def on_inference_complete(self, gid: int, task: int, sample: int, version: int) -> None:
        g = self.groups[gid]
        g.running = False
        g.busy += self.now - g.started_at
        self.samples_completed += 1
        self.log("inference_complete", group=gid, node=g.node, task=task, sample=sample, version=version)
        g.next_sample += 1
        if g.next_sample == self.cfg.num_generations:
            self.backlog[g.node].append(g.rollout)
            self.rollouts_done += 1
            g.task, g.rollout = None, None
            self.wake_worker(g.node)
        self.wake_group(g)
        self.maybe_start_update()

    # gradient workers and stealing
    def wake_worker(self, node: int) -> None:
        w = self.workers[node]
        if self.paused or w.state != "idle":
            return
        local = len(self.backlog[node])
        peers = [p for p in range(self.cfg.nodes) if p != node]
        pick = work_steal_policy(local, [len(self.backlog[p]) for p in peers], self.cfg.steal_trigger)
        if pick is not None:
            w.state = "awaiting"
            self.push(0.0, "steal_request", node=node, victim=peers[pick])
            return
        if local:
            self.start_gradient(w, self.backlog[node].popleft())

    def on_steal_request(self, node: int, victim: int) -> None:
        w = self.workers[node]
        victim_q = self.backlog[victim]
        if not victim_q or len(victim_q) <= len(self.backlog[node]):
            # Peer drained in the meantime; fall back to local work.
            w.state = "idle"
            self._resume_local(node)
            return
        rollout = victim_q.pop()  # newest result; the owner keeps draining from the front
        self.steal_count += 1
        self.log("steal_request", node=node, victim=victim, task=rollout.task_id)
        self.push(self.cfg.transfer_latency, "steal_transfer", node=node, victim=victim, task=rollout.task_id,
                  rollout=rollout)

    def _resume_local(self, node: int) -> None:
        w = self.workers[node]
        if not self.paused and w.state == "idle" and self.backlog[node]:
            self.start_gradient(w, self.backlog[node].popleft())
        self.maybe_finish()
        self.maybe_start_update()

    def on_steal_transfer(self, node: int, victim: int, task: int, rollout: _Rollout) -> None:
        self.log("steal_transfer", node=node, victim=victim, task=task)
        # Committed work: runs even if a pause was broadcast meanwhile.
        self.start_gradient(self.workers[node], rollout)

    def start_gradient(self, w: _Worker, rollout: _Rollout) -> None:
        w.state = "computing"
        w.current = rollout
        self.push(self.cfg.grad_time_per_sample * len(rollout.samples), "gradient_done", node=w.node)

    def on_gradient_done(self, node: int) -> None:
        w = self.workers[node]
        rollout = w.current
        w.state, w.current = "idle", None
        self.processed.append(rollout)
        self.log("gradient_done", node=node, task=rollout.task_id)
        if not self.paused and sync_check(len(self.processed), self.cfg):
            self.push(0.0, "sync_broadcast")
        self.wake_worker(node)
        self.maybe_finish()
        self.maybe_start_update()

    # synchronization
    def on_sync_broadcast(self) -> None:
        if self.paused or not self.processed:
            return
        self.paused = True
        self.log("sync_broadcast", version=self.version + 1, processed=len(self.processed))
        self.maybe_start_update()

    def quiescent(self) -> bool:
        return (all(not g.running for g in self.groups)
                and all(w.state == "idle" for w in self.workers))

    def maybe_start_update(self) -> None:
        if self.paused and not self.updating and self.quiescent():
            self.updating = True
            self.push(self.cfg.update_duration, "update_done")

    def on_update_done(self) -> None:
        self.updating = False
        self.paused = False
        self.version += 1
        self.updates += 1
        ids = [r.task_id for r in self.processed]
        self.consumed_ids.extend(ids)
        self.processed = []
        self.log("update_done", version=self.version, consumed=ids)
        for g in self.groups:
            self.wake_group(g)
        for n in range(self.cfg.nodes):
            self.wake_worker(n)
        self.maybe_finish()

    def maybe_finish(self) -> None:
        """Flush a final partial update once every rollout has been processed."""
        if (self.processed and not self.paused and not self.queue
                and self.rollouts_done == self.tasks_dispatched == self.cfg.task_count
                and not any(self.backlog) and self.quiescent()):
            self.push(0.0, "sync_broadcast")

    def run(self) -> SimReport:
        for g in self.groups:
            self.wake_group(g)
        handlers = {
            "dispatch": self.on_dispatch,
            "inference_complete": self.on_inference_complete,
            "steal_request": self.on_steal_request,
            "steal_transfer": self.on_steal_transfer,
            "gradient_done": self.on_gradient_done,
            "sync_broadcast": self.on_sync_broadcast,
            "update_done": self.on_update_done,
        }
        last = 0.0
        while self.heap:
            t, _, _, kind, payload = heapq.heappop(self.heap)
            if t < last:
                raise SimulationError("event time went backwards")
            self.now = last = t
            handlers[kind](**payload)
        return self.report()

    def report(self) -> SimReport:
        cfg = self.cfg
        n = cfg.num_generations
        if self.samples_completed != self.tasks_dispatched * n or self.tasks_dispatched != cfg.task_count:
            raise SimulationError("sample conservation violated")
        if sorted(self.consumed_ids) != list(range(cfg.task_count)):
            raise SimulationError("rollout groups lost or consumed twice")
        if self.processed or any(self.backlog) or self.paused:
            raise SimulationError("simulation stopped with pending work")
        total = self.now
        busy = [g.busy for g in self.groups]
        idle = [total - b for b in busy]
        denom = sum(busy) + sum(idle)
        return SimReport(
            total_virtual_time=total,
            group_busy=busy,
            group_idle=idle,
            utilization=sum(busy) / denom if denom > 0 else 0.0,
            updates_performed=self.updates,
            steal_count=self.steal_count,
            samples_completed=self.samples_completed,
            tasks_dispatched=self.tasks_dispatched,
            groups_consumed=len(self.consumed_ids),
        )


def run(config: SimConfig) -> SimReport:
    return _Sim(config, trace=False).run()


def run_with_trace(config: SimConfig) -> Tuple[SimReport, List[SimEvent]]:
    sim = _Sim(config, trace=True)
    report = sim.run()
    return report, sim.trace
