"""Keystroke timing recovery from delay traces.

A key press on the victim page queues two short event listener tasks (the
down and press handlers) back to back, so the probe completion wedged
between them sees a long delay on both sides. The detector flags exactly
those timestamps: both neighboring delays must fall strictly inside an open
band (longer than ordinary dispatch overhead, shorter than heavyweight
work). Requiring the pair is what rejects isolated background pauses, which
produce a single long delay with nothing next to it.

Ground-truth comparison is a greedy one-to-one matching within a tolerance
window; the report carries the count errors and the timing error statistics
that matter for password reconstruction (absolute timestamps for alignment,
inter-key intervals for the actual secret). Detections trail the true key
by roughly one listener duration, a constant that cancels out of the
inter-key statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import NoiseSpec, loop_preset, simulate
from .traces import DelayTrace, delays
from .workloads import keystroke_workload, mouse_workload


def detect_keystrokes(
    trace: DelayTrace,
    low_ms: float = 0.4,
    high_ms: float = 3.0,
) -> np.ndarray:
    """Detected key event times in milliseconds.

    A timestamp t_i is flagged when both d1 = t_i - t_{i-1} and
    d2 = t_{i+1} - t_i lie strictly inside (low_ms, high_ms). Consecutive
    flags within high_ms of each other coalesce to the first, so one key
    press maps to one detection even when more than two listener delays
    qualify.
    """
    if not 0 <= low_ms < high_ms:
        raise ValueError(f"need 0 <= low < high, got low={low_ms} high={high_ms}")
    if len(trace) < 3:
        return np.zeros(0, dtype=np.float64)
    gaps_us = delays(trace)
    low_us, high_us = low_ms * 1000.0, high_ms * 1000.0
    in_band = (gaps_us > low_us) & (gaps_us < high_us)
    flagged = trace.timestamps_us[1:-1][in_band[:-1] & in_band[1:]]
    if flagged.size == 0:
        return np.zeros(0, dtype=np.float64)

    events = [flagged[0]]
    for t in flagged[1:]:
        if t - events[-1] > high_us:
            events.append(t)
    return np.asarray(events) / 1000.0


@dataclass
class DetectionReport:
    n_truth: int
    n_detected: int
    missed: int
    spurious: int
    mean_abs_timestamp_error_ms: float | None
    mean_abs_interkey_error_ms: float | None
    interkey_error_std_ms: float | None

    @property
    def length_correct(self) -> bool:
        return self.n_truth == self.n_detected

    def to_dict(self) -> dict:
        return {
            "n_truth": self.n_truth,
            "n_detected": self.n_detected,
            "length_correct": self.length_correct,
            "missed": self.missed,
            "spurious": self.spurious,
            "mean_abs_timestamp_error_ms": self.mean_abs_timestamp_error_ms,
            "mean_abs_interkey_error_ms": self.mean_abs_interkey_error_ms,
            "interkey_error_std_ms": self.interkey_error_std_ms,
        }


def evaluate_detection(
    detected_ms,
    truth_ms,
    match_window_ms: float = 20.0,
) -> DetectionReport:
    """Match detections to ground truth greedily, one-to-one, within a window.

    Detections are scanned in time order; each takes the nearest unmatched
    true key within ``match_window_ms``. Timestamp errors are computed over
    matched pairs; inter-key errors over consecutive matched true keys, so a
    constant detection latency cancels out of the inter-key statistics.
    """
    detected = np.sort(np.asarray(detected_ms, dtype=np.float64))
    truth = np.sort(np.asarray(truth_ms, dtype=np.float64))
    taken = np.zeros(truth.size, dtype=bool)
    pairs = []  # (truth index, detected time)
    for d in detected:
        best_idx, best_err = -1, match_window_ms
        for t_idx in range(truth.size):
            if taken[t_idx]:
                continue
            err = abs(d - truth[t_idx])
            if err <= best_err:
                if err < best_err or best_idx == -1:
                    best_idx, best_err = t_idx, err
        if best_idx >= 0:
            taken[best_idx] = True
            pairs.append((best_idx, d))

    missed = int(truth.size - len(pairs))
    spurious = int(detected.size - len(pairs))

    ts_err = interkey_err = interkey_std = None
    if pairs:
        pairs.sort(key=lambda p: p[0])
        errors = [abs(d - truth[i]) for i, d in pairs]
        ts_err = float(np.mean(errors))
        if len(pairs) >= 2:
            idx = np.array([i for i, _ in pairs])
            det = np.array([d for _, d in pairs])
            gap_errors = np.diff(det) - np.diff(truth[idx])
            interkey_err = float(np.mean(np.abs(gap_errors)))
            interkey_std = float(np.std(gap_errors))

    return DetectionReport(
        n_truth=int(truth.size),
        n_detected=int(detected.size),
        missed=missed,
        spurious=spurious,
        mean_abs_timestamp_error_ms=ts_err,
        mean_abs_interkey_error_ms=interkey_err,
        interkey_error_std_ms=interkey_std,
    )


def random_password_times(
    rng: np.random.Generator,
    min_len: int = 6,
    max_len: int = 16,
    min_gap_ms: float = 100.0,
    max_gap_ms: float = 300.0,
    start_ms: float = 150.0,
) -> np.ndarray:
    """Key press times for one synthetic password typed at human speed."""
    length = int(rng.integers(min_len, max_len + 1))
    gaps = rng.uniform(min_gap_ms, max_gap_ms, size=length - 1)
    return start_ms + np.concatenate([[0.0], np.cumsum(gaps)])


def password_experiment(
    n_passwords: int,
    seed: int = 0,
    listener_ms: float = 2.0,
    preset: str = "renderer",
    jitter_std_us: float = 10.0,
    with_mouse: bool = True,
    scavenge_period_ms: float | None = 250.0,
    match_window_ms: float = 20.0,
    low_ms: float = 0.4,
    high_ms: float = 3.0,
) -> list[DetectionReport]:
    """Type many synthetic passwords against background activity and score
    the detector on each."""
    reports = []
    for i in range(n_passwords):
        child = np.random.SeedSequence([seed, i])
        rng = np.random.default_rng(child)
        key_times = random_password_times(rng)
        end_ms = float(key_times[-1] + 300.0)
        workloads = [keystroke_workload(key_times, listener_ms=listener_ms)]
        if with_mouse:
            workloads.append(mouse_workload(0.0, end_ms))
        noise = NoiseSpec(
            jitter_std_us=jitter_std_us,
            scavenge_period_us=(
                scavenge_period_ms * 1000.0 if scavenge_period_ms else None
            ),
            seed=int(child.generate_state(1)[0]),
        )
        loop = loop_preset(preset, duration_us=end_ms * 1000.0)
        trace = simulate(loop, workloads, noise)
        detected = detect_keystrokes(trace, low_ms=low_ms, high_ms=high_ms)
        reports.append(evaluate_detection(detected, key_times, match_window_ms))
    return reports


def aggregate_reports(reports: list[DetectionReport]) -> dict:
    """Corpus-level summary of per-password detection reports."""
    n = len(reports)
    ts = [r.mean_abs_timestamp_error_ms for r in reports if r.mean_abs_timestamp_error_ms is not None]
    ik = [r.mean_abs_interkey_error_ms for r in reports if r.mean_abs_interkey_error_ms is not None]
    sd = [r.interkey_error_std_ms for r in reports if r.interkey_error_std_ms is not None]
    return {
        "n_passwords": n,
        "length_correct_percent": 100.0 * sum(r.length_correct for r in reports) / max(1, n),
        "total_missed": sum(r.missed for r in reports),
        "total_spurious": sum(r.spurious for r in reports),
        "mean_abs_timestamp_error_ms": float(np.mean(ts)) if ts else None,
        "mean_abs_interkey_error_ms": float(np.mean(ik)) if ik else None,
        "mean_interkey_error_std_ms": float(np.mean(sd)) if sd else None,
    }
