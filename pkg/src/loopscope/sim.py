"""Deterministic event-loop simulator.

The model: a single server (the event loop) executes tasks one at a time in
arrival order. An attacker-controlled probe task reschedules itself as soon
as it finishes, after a fixed turnaround, and records its own completion
times. While the loop is otherwise idle the completions tick at
``probe_cost + probe_turnaround``; any victim task that gets in line first
pushes the next completion out by its service time, which is exactly the
signal the analysis stack consumes.

Service rules:

* FIFO (default): tasks run in order of (arrival time, agent, submission
  index). The probe wins arrival ties, which also guarantees probe
  exclusivity: at most one probe is ever queued or running, because the next
  one is only submitted when the previous one completes.
* AccumulateAndServe(T): arrivals are buffered per period [(k-1)T, kT) and the
  whole batch is served from kT on, attacker tasks first. Delays collapse to
  multiples of T, which is the point of the countermeasure.

All arithmetic runs on an integer nanosecond grid. Times given in
microseconds are rounded to nanoseconds once on entry, so simulations are
exactly reproducible, busy-time conservation holds to the nanosecond, and the
fast vectorized path emits bit-identical results to a naive event-by-event
replay. Measurement noise does not exist in the model; disturbances are
injected explicitly through :class:`NoiseSpec`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .traces import DelayTrace
from .util import ns_from_us

TASK_SOURCES = ("attacker", "victim", "noise")

# Service order among same-instant arrivals: the probe (attacker) first,
# then page tasks, then background scavenges.
_RANK = {"attacker": 0, "victim": 1, "noise": 2}


@dataclass
class Task:
    """One unit of work submitted to the loop. Times in microseconds."""

    arrival_us: float
    duration_us: float
    source: str = "victim"

    def __post_init__(self):
        if self.source not in TASK_SOURCES:
            raise ValueError(
                f"unknown task source {self.source!r}, expected one of {TASK_SOURCES}"
            )
        if self.arrival_us < 0:
            raise ValueError(f"task arrival must be non-negative, got {self.arrival_us}")
        if self.duration_us < 0:
            raise ValueError(f"task duration must be non-negative, got {self.duration_us}")


@dataclass
class Workload:
    """A labeled stream of tasks, e.g. one page load or one input sequence."""

    label: str
    tasks: list[Task] = field(default_factory=list)


@dataclass
class LoopConfig:
    """Event loop timing parameters. ``duration_us`` bounds the recording."""

    kind: str
    probe_cost_us: float
    probe_turnaround_us: float
    duration_us: float
    capacity: int = 2_000_000

    @property
    def resolution_us(self) -> float:
        """Idle-loop spacing between probe completions."""
        return self.probe_cost_us + self.probe_turnaround_us


# (kind, probe cost, probe turnaround), microseconds. The split between cost
# and turnaround is a modeling choice; the sum is the observable resolution.
PRESETS = {
    "renderer": ("renderer", 15.0, 10.0),
    "host-worker": ("host-worker", 30.0, 70.0),
    "host-fetch": ("host-fetch", 50.0, 450.0),
}


def loop_preset(name: str, duration_us: float, capacity: int = 2_000_000) -> LoopConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown loop preset {name!r}, expected one of {sorted(PRESETS)}")
    kind, cost, turnaround = PRESETS[name]
    return LoopConfig(
        kind=kind,
        probe_cost_us=cost,
        probe_turnaround_us=turnaround,
        duration_us=duration_us,
        capacity=capacity,
    )


@dataclass
class NoiseSpec:
    """Explicit disturbance model applied inside the simulation.

    ``jitter_std_us`` adds a Gaussian perturbation (truncated below at zero
    total) to every victim and noise task duration. ``scavenge_period_us``
    injects short background tasks at every multiple of the period, standing
    in for garbage collection style activity. The probe itself is never
    jittered; it is the attacker's own code.
    """

    jitter_std_us: float = 0.0
    scavenge_period_us: float | None = None
    scavenge_duration_us: float = 300.0
    seed: int = 0


@dataclass
class AccumulateAndServe:
    """Service policy that buffers arrivals for ``period_us`` and serves each
    batch grouped by agent, attacker first."""

    period_us: float

    def __post_init__(self):
        if self.period_us <= 0:
            raise ValueError(f"accumulation period must be positive, got {self.period_us}")


def _merge_tasks(workloads, noise, duration_ns):
    """Flatten workloads plus scavenge noise into arrival-sorted arrays.

    Returns int64 arrays (arrivals_ns, durations_ns) ordered by
    (arrival, agent rank, submission index), the order a FIFO queue drains
    same-instant arrivals in.
    """
    arrivals, durations, ranks = [], [], []
    for workload in workloads:
        for task in workload.tasks:
            if task.source == "attacker":
                raise ValueError(
                    "attacker work is generated by the probe; workloads may only "
                    "contain victim or noise tasks"
                )
            arrivals.append(ns_from_us(task.arrival_us))
            durations.append(ns_from_us(task.duration_us))
            ranks.append(_RANK[task.source])

    if noise is not None and noise.scavenge_period_us:
        period_ns = ns_from_us(noise.scavenge_period_us)
        if period_ns <= 0:
            raise ValueError("scavenge period must be positive")
        dur_ns = ns_from_us(noise.scavenge_duration_us)
        t = period_ns
        while t <= duration_ns:
            arrivals.append(t)
            durations.append(dur_ns)
            ranks.append(_RANK["noise"])
            t += period_ns

    if not arrivals:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy()

    arrivals = np.asarray(arrivals, dtype=np.int64)
    durations = np.asarray(durations, dtype=np.int64)
    ranks = np.asarray(ranks, dtype=np.int64)
    seqs = np.arange(arrivals.size, dtype=np.int64)
    order = np.lexsort((seqs, ranks, arrivals))
    arrivals = arrivals[order]
    durations = durations[order]

    if noise is not None and noise.jitter_std_us > 0:
        rng = np.random.default_rng(noise.seed)
        jitter = np.round(rng.normal(0.0, noise.jitter_std_us, size=durations.size) * 1000.0)
        durations = np.maximum(durations + jitter.astype(np.int64), 0)

    return arrivals, durations


def _fifo_run(cost_ns, turn_ns, arrivals, durations, duration_ns, capacity):
    """FIFO service. Returns (probe completions ns, truncated flag).

    Stretches with no victim interference are emitted in bulk: once a probe
    completes at c with the queue empty, subsequent completions are exactly
    c + j*(cost+turnaround) until the next foreign arrival, the duration
    limit, or the capacity cap. Integer arithmetic makes the bulk path equal
    to stepping one task at a time.
    """
    cycle = cost_ns + turn_ns
    n = arrivals.size
    chunks = []
    n_out = 0
    free = 0  # when the server finishes its current task
    probe_arrival = 0
    i = 0
    truncated = False

    while True:
        next_victim = int(arrivals[i]) if i < n else None

        if next_victim is not None and next_victim < probe_arrival:
            start = free if free > next_victim else next_victim
            free = start + int(durations[i])
            i += 1
            continue

        # The probe is first in line (it wins ties on arrival).
        start = free if free > probe_arrival else probe_arrival
        completion = start + cost_ns
        if completion > duration_ns:
            break
        if n_out >= capacity:
            truncated = True
            break
        chunks.append(np.array([completion], dtype=np.int64))
        n_out += 1
        free = completion
        probe_arrival = completion + turn_ns

        # Bulk-emit the quiet stretch that follows.
        k_fit = (duration_ns - completion) // cycle
        if next_victim is not None:
            k_clear = (next_victim - turn_ns - completion) // cycle + 1
            if k_clear < k_fit:
                k_fit = k_clear
        k_cap = capacity - n_out
        k = min(k_fit, k_cap)
        if k > 0:
            more = completion + cycle * np.arange(1, k + 1, dtype=np.int64)
            chunks.append(more)
            n_out += int(k)
            completion = int(more[-1])
            free = completion
            probe_arrival = completion + turn_ns

    if n_out >= capacity and not truncated:
        # Decide whether anything was actually cut off.
        while i < n and int(arrivals[i]) < probe_arrival:
            a = int(arrivals[i])
            start = free if free > a else a
            free = start + int(durations[i])
            i += 1
        start = free if free > probe_arrival else probe_arrival
        truncated = start + cost_ns <= duration_ns

    if chunks:
        return np.concatenate(chunks), truncated
    return np.zeros(0, dtype=np.int64), truncated


def _accumulate_run(cost_ns, turn_ns, arrivals, durations, period_ns, duration_ns, capacity):
    """AccumulateAndServe service. Returns (probe completions ns, truncated).

    Arrivals during [(k-1)T, kT) wait until kT, then the whole batch runs with
    the attacker's probe ahead of foreign tasks. An overrunning batch simply
    delays the start of the next one.
    """
    out = []
    free = 0
    probe_arrival = 0
    i = 0
    n = arrivals.size
    truncated = False

    while True:
        next_event = probe_arrival
        if i < n and int(arrivals[i]) < next_event:
            next_event = int(arrivals[i])
        # Jump to the first period boundary that can see this arrival.
        boundary = (next_event // period_ns + 1) * period_ns
        if boundary > duration_ns + period_ns:
            break

        probe_in_batch = probe_arrival < boundary
        start = free if free > boundary else boundary

        if probe_in_batch:
            completion = start + cost_ns
            if completion > duration_ns:
                break
            if len(out) >= capacity:
                truncated = True
                break
            out.append(completion)
            start = completion
            probe_arrival = completion + turn_ns

        while i < n and int(arrivals[i]) < boundary:
            start += int(durations[i])
            i += 1
        free = start

    return np.asarray(out, dtype=np.int64), truncated


def simulate(
    loop: LoopConfig,
    workloads: list[Workload] | None = None,
    noise: NoiseSpec | None = None,
    policy: str | AccumulateAndServe = "fifo",
) -> DelayTrace:
    """Run the probe against the given workloads and return its trace.

    The trace records every probe completion up to ``loop.duration_us``,
    capped at ``loop.capacity`` entries (the ``truncated`` metadata flag is
    set if the cap cut the recording short).
    """
    if loop.duration_us <= 0:
        raise ValueError(
            f"zero-length simulation: duration_us={loop.duration_us} (must be > 0)"
        )
    if loop.probe_cost_us <= 0:
        raise ValueError(f"probe cost must be positive, got {loop.probe_cost_us}")
    if loop.probe_turnaround_us < 0:
        raise ValueError(
            f"probe turnaround must be non-negative, got {loop.probe_turnaround_us}"
        )
    if loop.capacity < 1:
        raise ValueError(f"trace capacity must be at least 1, got {loop.capacity}")

    workloads = list(workloads or [])
    duration_ns = ns_from_us(loop.duration_us)
    cost_ns = ns_from_us(loop.probe_cost_us)
    turn_ns = ns_from_us(loop.probe_turnaround_us)
    arrivals, durations = _merge_tasks(workloads, noise, duration_ns)

    if isinstance(policy, AccumulateAndServe):
        period_ns = ns_from_us(policy.period_us)
        completions, truncated = _accumulate_run(
            cost_ns, turn_ns, arrivals, durations, period_ns, duration_ns, loop.capacity
        )
        policy_name = f"accumulate-and-serve:{policy.period_us}"
    elif policy == "fifo":
        completions, truncated = _fifo_run(
            cost_ns, turn_ns, arrivals, durations, duration_ns, loop.capacity
        )
        policy_name = "fifo"
    else:
        raise ValueError(
            f"unknown service policy {policy!r}, expected 'fifo' or AccumulateAndServe"
        )

    if completions.size == 0:
        raise ValueError(
            "simulation produced no probe completions; increase duration_us "
            f"(got {loop.duration_us} us against a {loop.resolution_us} us loop)"
        )

    label = "+".join(w.label for w in workloads) if workloads else "idle"
    meta = {
        "label": label,
        "loop_kind": loop.kind,
        "resolution_hint": loop.resolution_us,
        "source": "simulated",
        "seed": str(noise.seed) if noise is not None else "",
        "policy": policy_name,
    }
    if truncated:
        meta["truncated"] = True
    return DelayTrace(completions / 1000.0, meta)
