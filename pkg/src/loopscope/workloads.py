"""Victim-side workload generators.

A workload is just a labeled list of tasks; these helpers produce the ones
the experiments need:

* page profiles: a page identity is a fixed set of activity bursts, a visit
  is one random realization of it. Pages differ in where their bursts sit,
  visits of the same page differ in the exact arrivals and service times
  drawn inside those bursts.
* keystrokes: each key press queues two short event listener tasks (the
  down and press handlers) separated by a small gap, long enough apart for a
  fast probe to slip between them.
* mouse movement: a steady drip of tiny handler tasks at the pointer event
  rate.

All times entering :class:`~loopscope.sim.Task` are microseconds; the helper
signatures take milliseconds where the quantities are naturally millisecond
scale (key times, sampling-visible horizons).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .sim import Task, Workload
from .util import atomic_write_text


@dataclass
class Burst:
    """One activity window of a page profile. Times in microseconds."""

    time_us: float
    width_us: float
    count: int
    mean_duration_us: float


@dataclass
class PageProfile:
    """The stable identity of a page: where its work lands on the timeline."""

    label: str
    bursts: list[Burst]

    def to_dict(self) -> dict:
        return {"label": self.label, "bursts": [asdict(b) for b in self.bursts]}

    @classmethod
    def from_dict(cls, data: dict) -> "PageProfile":
        return cls(
            label=str(data["label"]),
            bursts=[Burst(**b) for b in data["bursts"]],
        )


def save_profile(profile: PageProfile, path: str) -> None:
    atomic_write_text(path, json.dumps(profile.to_dict(), indent=2) + "\n")


def load_profile(path: str) -> PageProfile:
    with open(path) as fh:
        return PageProfile.from_dict(json.load(fh))


# Total service time of one burst is drawn from this palette (microseconds).
# Each burst is a tight volley of handler-sized tasks that the loop serves
# back to back, so the probe sees one busy period of roughly the palette
# value. Keeping the palette shared across pages makes the value distribution
# of delays look alike between pages; what separates pages is burst
# placement, not magnitude.
_WORK_PALETTE = (3_600.0, 4_000.0, 4_400.0)

# Bursts sit on a coarse lattice so no two land inside the same few
# milliseconds; their phase within a lattice cell is part of the page
# identity.
_BURST_LATTICE_US = 15_000.0


def random_profile(label: str, seed: int, duration_ms: float = 2000.0) -> PageProfile:
    """Draw a page identity: 12 to 18 task volleys at fixed epochs."""
    rng = np.random.default_rng(seed)
    duration_us = duration_ms * 1000.0
    span_us = duration_us - 100_000.0
    n_slots = max(int(span_us // _BURST_LATTICE_US), 1)
    n_bursts = min(int(rng.integers(12, 19)), n_slots)
    slots = np.sort(rng.choice(n_slots, size=n_bursts, replace=False))
    bursts = []
    for slot in slots:
        time_us = 50_000.0 + float(slot) * _BURST_LATTICE_US + float(rng.uniform(0.0, 2_500.0))
        width_us = float(rng.uniform(250.0, 450.0))
        count = int(rng.integers(2, 5))
        work_us = float(rng.choice(_WORK_PALETTE))
        bursts.append(Burst(time_us, width_us, count, work_us / count))
    return PageProfile(label=label, bursts=bursts)


def random_profiles(n: int, seed: int, duration_ms: float = 2000.0) -> list[PageProfile]:
    root = np.random.SeedSequence(seed)
    children = root.spawn(n)
    return [
        random_profile(f"page-{i:03d}", int(children[i].generate_state(1)[0]), duration_ms)
        for i in range(n)
    ]


def page_load_workload(profile: PageProfile, seed: int) -> Workload:
    """One visit: realize every burst with fresh arrival and duration draws."""
    rng = np.random.default_rng(seed)
    tasks = []
    for burst in profile.bursts:
        offsets = np.sort(rng.uniform(0.0, burst.width_us, size=burst.count))
        # Log-normal service-time spread, clipped tightly so a burst stays
        # close to its nominal work budget.
        factors = np.clip(rng.lognormal(0.0, 0.02, size=burst.count), 0.96, 1.04)
        for off, factor in zip(offsets, factors):
            tasks.append(
                Task(
                    arrival_us=burst.time_us + float(off),
                    duration_us=burst.mean_duration_us * float(factor),
                    source="victim",
                )
            )
    tasks.sort(key=lambda t: t.arrival_us)
    return Workload(label=profile.label, tasks=tasks)


def keystroke_workload(
    key_times_ms,
    listener_ms: float = 2.0,
    keypress_offset_ms: float = 0.5,
) -> Workload:
    """Two listener tasks per key: the down handler at the key time and the
    press handler ``keypress_offset_ms`` later.

    The probe re-arms while the down handler is running and completes once
    between the two handlers, so each key shows up as two back-to-back long
    delays. For that to survive background activity, the offset has to exceed
    the longest background handler: if some other task is holding the loop
    when the key arrives, the probe's next instance only enters the queue
    when that task finishes, and the press event must still arrive after it,
    or both listeners run back to back and fuse into one delay twice the
    listener length. The default clears scavenges and pointer handlers with
    room to spare while staying well inside the detector's band.
    """
    if listener_ms <= 0:
        raise ValueError(f"listener duration must be positive, got {listener_ms}")
    if keypress_offset_ms <= 0:
        raise ValueError(f"keypress offset must be positive, got {keypress_offset_ms}")
    if keypress_offset_ms >= listener_ms:
        raise ValueError(
            "keypress offset must fall inside the down handler's run, got "
            f"offset {keypress_offset_ms} ms vs listener {listener_ms} ms"
        )
    tasks = []
    for t_ms in key_times_ms:
        tasks.append(Task(t_ms * 1000.0, listener_ms * 1000.0, "victim"))
        tasks.append(Task((t_ms + keypress_offset_ms) * 1000.0, listener_ms * 1000.0, "victim"))
    tasks.sort(key=lambda t: t.arrival_us)
    return Workload(label="keystrokes", tasks=tasks)


def mouse_workload(
    start_ms: float,
    end_ms: float,
    period_ms: float = 8.0,
    handler_ms: float = 0.1,
) -> Workload:
    """Pointer-move handlers: one ``handler_ms`` task every ``period_ms``."""
    if end_ms < start_ms:
        raise ValueError(f"mouse window is empty: start={start_ms} end={end_ms}")
    if period_ms <= 0:
        raise ValueError(f"mouse event period must be positive, got {period_ms}")
    times = np.arange(start_ms * 1000.0, end_ms * 1000.0 + 1e-9, period_ms * 1000.0)
    tasks = [Task(float(t), handler_ms * 1000.0, "victim") for t in times]
    return Workload(label="mouse", tasks=tasks)


def save_workload(workload: Workload, path: str) -> None:
    payload = {
        "label": workload.label,
        "tasks": [
            {"arrival_us": t.arrival_us, "duration_us": t.duration_us, "source": t.source}
            for t in workload.tasks
        ],
    }
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_workload(path: str) -> Workload:
    with open(path) as fh:
        data = json.load(fh)
    tasks = [
        Task(
            arrival_us=float(t["arrival_us"]),
            duration_us=float(t["duration_us"]),
            source=str(t.get("source", "victim")),
        )
        for t in data["tasks"]
    ]
    return Workload(label=str(data.get("label", "workload")), tasks=tasks)
