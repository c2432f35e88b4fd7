"""Delay traces: the measurement record shared by the simulator, the analysis
stack and the browser harvester.

A trace is the sequence of completion timestamps of a self-rescheduling probe
task, in microseconds from the start of monitoring. The loop being shared,
every foreign task that runs between two probe dispatches stretches the gap
between consecutive timestamps, so the first differences ("delays") carry the
victim's activity. Everything downstream works on those delays:

* ``sample`` folds them into a fixed-rate time series for shape comparison,
* ``histogram`` summarizes their value distribution for set-style matching,
* ``read_trace``/``write_trace`` define the on-disk interchange format.

File format (version 1)::

    #loopscope-trace v1
    {"label":"...","loop_kind":"renderer",...}
    25
    50.5
    ...

one timestamp per line, decimal microseconds, strictly increasing. Integral
values are written without a decimal point so independent writers can match
the encoding byte for byte.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .util import atomic_write_text, canonical_meta, fmt_number, ns_from_us

TRACE_HEADER = "#loopscope-trace v1"

_META_DEFAULTS = {
    "label": "",
    "loop_kind": "unknown",
    "resolution_hint": 0.0,
    "source": "unknown",
    "seed": "",
}

REDUCERS = ("sum", "avg", "max", "min")


class TraceFormatError(ValueError):
    """A trace file does not conform to the interchange format."""


@dataclass
class DelayTrace:
    """Probe completion timestamps (microseconds) plus provenance metadata."""

    timestamps_us: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = np.asarray(self.timestamps_us, dtype=np.float64)
        if ts.ndim != 1 or ts.size == 0:
            raise ValueError("trace must hold at least one timestamp")
        if not np.all(np.isfinite(ts)):
            raise ValueError("trace timestamps must be finite")
        if ts[0] < 0:
            raise ValueError("trace timestamps must be non-negative")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("trace timestamps must be strictly increasing")
        self.timestamps_us = ts
        merged = dict(_META_DEFAULTS)
        merged.update(self.meta)
        self.meta = merged

    def __len__(self) -> int:
        return int(self.timestamps_us.size)

    @property
    def label(self) -> str:
        return str(self.meta.get("label", ""))

    @property
    def duration_us(self) -> float:
        return float(self.timestamps_us[-1])


def delays(trace: DelayTrace) -> np.ndarray:
    """First differences of the probe timestamps, in microseconds."""
    if len(trace) < 2:
        raise ValueError(
            f"cannot compute delays: trace has {len(trace)} timestamp(s), need at least 2"
        )
    return np.diff(trace.timestamps_us)


@dataclass
class TimeSeries:
    """A delay trace resampled onto a fixed period grid."""

    values: np.ndarray
    p_ms: float
    reducer: str = "sum"
    label: str = ""
    padded: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self) -> int:
        return int(self.values.size)

    def znormalized(self) -> "TimeSeries":
        """Zero-mean unit-variance copy; a constant series maps to all zeros."""
        v = self.values
        std = float(v.std())
        if std == 0.0:
            values = np.zeros_like(v)
        else:
            values = (v - v.mean()) / std
        return TimeSeries(values, self.p_ms, self.reducer, self.label, self.padded)


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def sample(
    trace: DelayTrace,
    p_ms: float,
    reducer: str = "sum",
    duration_ms: float | None = None,
) -> TimeSeries:
    """Reduce a trace's delays into bins of width ``p_ms``.

    Bins are anchored at t=0 and right-closed: a delay belongs to the bin that
    contains its ending timestamp. The series has exactly
    ceil(duration / P) entries. Delays ending after the requested duration are
    dropped; if the trace ends early the remaining bins stay at zero and the
    ``padded`` flag is set. Empty bins are zero for every reducer.
    """
    if reducer not in REDUCERS:
        raise ValueError(f"unknown reducer {reducer!r}, expected one of {REDUCERS}")
    if p_ms <= 0:
        raise ValueError(f"sampling period must be positive, got {p_ms}")
    p_ns = ns_from_us(p_ms * 1000.0)
    end_ns = np.round(trace.timestamps_us * 1000.0).astype(np.int64)
    if duration_ms is None:
        duration_ns = int(end_ns[-1])
    else:
        if duration_ms <= 0:
            raise ValueError(f"duration must be positive, got {duration_ms}")
        duration_ns = ns_from_us(duration_ms * 1000.0)

    n_bins = max(1, _ceil_div(duration_ns, p_ns))
    gaps = delays(trace)
    ends = end_ns[1:]
    keep = ends <= duration_ns
    gaps = gaps[keep]
    ends = ends[keep]
    # Right-closed bins: an end falling exactly on k*P belongs to bin k-1.
    bins = np.ceil(ends / p_ns).astype(np.int64) - 1
    bins = np.clip(bins, 0, None)

    values = np.zeros(n_bins, dtype=np.float64)
    if gaps.size:
        if reducer == "sum":
            values = np.bincount(bins, weights=gaps, minlength=n_bins)
        elif reducer == "avg":
            total = np.bincount(bins, weights=gaps, minlength=n_bins)
            count = np.bincount(bins, minlength=n_bins)
            nz = count > 0
            values[nz] = total[nz] / count[nz]
        elif reducer == "max":
            acc = np.full(n_bins, -np.inf)
            np.maximum.at(acc, bins, gaps)
            values = np.where(np.isfinite(acc), acc, 0.0)
        else:  # min
            acc = np.full(n_bins, np.inf)
            np.minimum.at(acc, bins, gaps)
            values = np.where(np.isfinite(acc), acc, 0.0)

    padded = int(end_ns[-1]) < duration_ns
    return TimeSeries(
        values=values,
        p_ms=float(p_ms),
        reducer=reducer,
        label=trace.label,
        padded=padded,
    )


@dataclass
class Histogram:
    """Delay-value clusters: sorted centers (microseconds) and point counts."""

    centers: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)


def kmeans1d(
    values: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    sample_cap: int | None = None,
):
    """Lloyd's algorithm on scalars with seeded k-means++ initialization.

    Returns (centers, counts, objective_history). Centers are kept sorted, so
    nearest-center assignment reduces to a searchsorted against the midpoints
    between adjacent centers (exact in one dimension). ``sample_cap`` fits the
    centers on a seeded subsample when the input is large; the returned counts
    always cover the full input.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("cannot cluster an empty value set")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    distinct = np.unique(values)
    if k > distinct.size:
        raise ValueError(
            f"k too large: {k} clusters requested for {distinct.size} distinct delay values"
        )

    rng = np.random.default_rng(seed)
    fit_values = values
    if sample_cap is not None and values.size > sample_cap:
        fit_values = rng.choice(values, size=sample_cap, replace=False)
        # The subsample must still support k distinct centers.
        if np.unique(fit_values).size < k:
            fit_values = values

    # k-means++ seeding.
    centers = np.empty(k, dtype=np.float64)
    centers[0] = fit_values[rng.integers(fit_values.size)]
    closest = np.abs(fit_values - centers[0]) ** 2
    for i in range(1, k):
        total = closest.sum()
        if total == 0:
            # All remaining mass sits on chosen centers; pick unused values.
            unused = np.setdiff1d(distinct, centers[:i])
            centers[i] = unused[0]
        else:
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), target))
            centers[i] = fit_values[min(idx, fit_values.size - 1)]
        closest = np.minimum(closest, np.abs(fit_values - centers[i]) ** 2)
    centers = np.sort(centers)

    history = []
    assignment = None
    for _ in range(max_iter):
        boundaries = (centers[1:] + centers[:-1]) / 2.0
        new_assignment = np.searchsorted(boundaries, fit_values)
        inertia = float(((fit_values - centers[new_assignment]) ** 2).sum())
        history.append(inertia)
        if assignment is not None and np.array_equal(assignment, new_assignment):
            break
        assignment = new_assignment
        for j in range(k):
            mask = assignment == j
            if mask.any():
                centers[j] = fit_values[mask].mean()
        centers = np.sort(centers)

    boundaries = (centers[1:] + centers[:-1]) / 2.0
    full_assignment = np.searchsorted(boundaries, values)
    counts = np.bincount(full_assignment, minlength=k)
    return centers, counts, history


def histogram(trace: DelayTrace, k: int, seed: int = 0) -> Histogram:
    """Cluster a trace's delay values into ``k`` groups and count membership."""
    centers, counts, _ = kmeans1d(delays(trace), k, seed=seed)
    return Histogram(centers=centers, counts=counts)


def _serialize_meta(meta: dict) -> str:
    return json.dumps(canonical_meta(meta), sort_keys=True, separators=(",", ":"))


def write_trace(trace: DelayTrace, path: str) -> None:
    lines = [TRACE_HEADER, _serialize_meta(trace.meta)]
    lines.extend(fmt_number(t) for t in trace.timestamps_us)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace(path: str) -> DelayTrace:
    with open(path, "r") as fh:
        raw = fh.read()
    lines = raw.splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        got = lines[0].strip() if lines else "<empty file>"
        raise TraceFormatError(
            f"{path}: line 1: expected header {TRACE_HEADER!r}, got {got!r}"
        )
    if len(lines) < 2:
        raise TraceFormatError(f"{path}: line 2: missing metadata object")
    try:
        meta = json.loads(lines[1])
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"{path}: line 2: invalid metadata JSON: {exc}") from None
    if not isinstance(meta, dict):
        raise TraceFormatError(f"{path}: line 2: metadata must be a JSON object")

    timestamps = []
    previous = -math.inf
    for lineno, line in enumerate(lines[2:], start=3):
        text = line.strip()
        if not text:
            continue
        try:
            value = float(text)
        except ValueError:
            raise TraceFormatError(
                f"{path}: line {lineno}: not a timestamp: {text!r}"
            ) from None
        if not math.isfinite(value):
            raise TraceFormatError(f"{path}: line {lineno}: timestamp must be finite")
        if value < 0:
            raise TraceFormatError(f"{path}: line {lineno}: timestamp must be non-negative")
        if value <= previous:
            raise TraceFormatError(
                f"{path}: line {lineno}: timestamps must be strictly increasing"
            )
        previous = value
        timestamps.append(value)
    if not timestamps:
        raise TraceFormatError(f"{path}: line 3: trace contains no timestamps")
    return DelayTrace(np.asarray(timestamps), meta)


def write_corpus(corpus: dict[str, list[DelayTrace]], directory: str) -> None:
    """Lay traces out as <directory>/<label>/<n>.trace."""
    for label, traces in corpus.items():
        subdir = os.path.join(directory, label)
        os.makedirs(subdir, exist_ok=True)
        for i, trace in enumerate(traces):
            write_trace(trace, os.path.join(subdir, f"{i}.trace"))


def read_corpus(directory: str) -> dict[str, list[DelayTrace]]:
    """Read a <label>/<n>.trace layout back into a label -> traces mapping."""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"corpus directory not found: {directory}")
    corpus: dict[str, list[DelayTrace]] = {}
    for label in sorted(os.listdir(directory)):
        subdir = os.path.join(directory, label)
        if not os.path.isdir(subdir):
            continue
        entries = [f for f in os.listdir(subdir) if f.endswith(".trace")]
        if not entries:
            continue

        def index_of(name: str):
            stem = name[: -len(".trace")]
            return (0, int(stem)) if stem.isdigit() else (1, stem)

        entries.sort(key=index_of)
        corpus[label] = [read_trace(os.path.join(subdir, f)) for f in entries]
    if not corpus:
        raise FileNotFoundError(f"no traces found under {directory}")
    return corpus
