"""Covert channels over a shared event loop.

Sender and receiver run in different contexts with no direct communication;
the only medium is loop congestion. Time is divided into slots of ``t_b``.
To send a 1 the sender occupies the loop inside the slot, to send a 0 it
stays quiet. The receiver probes the loop continuously and thresholds its
per-slot observation.

Two variants:

* renderer: one blocking task of length ``t_hat`` (< t_b) per 1-slot; the
  receiver checks the largest delay in the slot against a threshold
  (default t_hat / 2).
* host: a train of ``n_requests`` cheap I/O completions spread across the
  1-slot; the receiver counts delays stretched past the loop's idle spacing
  and compares the count to a threshold (default n_requests / 2).

Framing: a leading 1 marks the start (receivers synchronize on it), payload
bytes follow most-significant-bit first, and a NUL byte terminates the
frame. Payload bytes must therefore be non-zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import AccumulateAndServe, LoopConfig, NoiseSpec, Task, Workload, loop_preset, simulate
from .traces import DelayTrace, delays

VARIANTS = ("renderer", "host")


class CovertDecodeError(ValueError):
    """The receiver trace contains no recognizable transmission."""

# Host-variant senders enqueue many request completions; this is each one's
# on-loop service time in microseconds. It must be a sizable fraction of the
# receiver's probe cycle: completions that fit entirely inside the probe's
# turnaround window never delay it, so with N tasks spread over the interval
# the per-dispatch collision probability is roughly duration/spacing and the
# stretched-delay count only clears the N/2 decision threshold when that
# ratio does.
HOST_TASK_US = 350.0

# A delay counts as "stretched" for the host receiver when it exceeds the
# loop's idle spacing by this factor.
HOST_BUSY_FACTOR = 1.05


@dataclass
class ChannelConfig:
    variant: str = "renderer"
    tb_ms: float = 5.0
    that_ms: float = 4.0
    n_requests: int = 350
    threshold: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.tb_ms <= 0:
            raise ValueError(f"bit time must be positive, got {self.tb_ms}")
        if self.variant == "renderer" and not 0 < self.that_ms < self.tb_ms:
            raise ValueError(
                f"blocking time must satisfy 0 < t_hat < t_b, got "
                f"t_hat={self.that_ms} t_b={self.tb_ms}"
            )
        if self.variant == "host" and self.n_requests < 1:
            raise ValueError(f"n_requests must be >= 1, got {self.n_requests}")

    @property
    def effective_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        if self.variant == "renderer":
            return self.that_ms / 2.0
        return self.n_requests / 2.0

    def default_loop(self, duration_us: float) -> LoopConfig:
        name = "renderer" if self.variant == "renderer" else "host-fetch"
        return loop_preset(name, duration_us=duration_us)


def payload_bits(payload: bytes) -> list[int]:
    bits = []
    for byte in payload:
        bits.extend((byte >> shift) & 1 for shift in range(7, -1, -1))
    return bits


def bits_to_bytes(bits) -> bytes:
    out = bytearray()
    for i in range(0, len(bits) - len(bits) % 8, 8):
        byte = 0
        for bit in bits[i : i + 8]:
            byte = (byte << 1) | int(bit)
        out.append(byte)
    return bytes(out)


def frame_bits(payload: bytes) -> list[int]:
    """Leading 1, payload MSB-first, NUL terminator."""
    if any(b == 0 for b in payload):
        raise ValueError(
            "payload contains a zero byte; NUL is reserved as the frame terminator"
        )
    return [1] + payload_bits(payload) + [0] * 8


def encode(payload: bytes, cfg: ChannelConfig) -> Workload:
    """Sender-side task stream realizing the frame on the loop."""
    bits = frame_bits(payload)
    tb_us = cfg.tb_ms * 1000.0
    tasks = []
    for slot, bit in enumerate(bits):
        if not bit:
            continue
        slot_start = slot * tb_us
        if cfg.variant == "renderer":
            tasks.append(Task(slot_start, cfg.that_ms * 1000.0, "victim"))
        else:
            spacing = tb_us / cfg.n_requests
            for j in range(cfg.n_requests):
                tasks.append(Task(slot_start + j * spacing, HOST_TASK_US, "victim"))
    return Workload(label=f"covert-{cfg.variant}", tasks=tasks)


def frame_duration_us(payload: bytes, cfg: ChannelConfig, slack_slots: int = 2) -> float:
    return (len(frame_bits(payload)) + slack_slots) * cfg.tb_ms * 1000.0


def _slot_statistic(cfg: ChannelConfig, slot_gaps_us: np.ndarray, resolution_us: float) -> float:
    if cfg.variant == "renderer":
        return float(slot_gaps_us.max() / 1000.0) if slot_gaps_us.size else 0.0
    busy = slot_gaps_us > resolution_us * HOST_BUSY_FACTOR
    return float(busy.sum())


def decode(trace: DelayTrace, cfg: ChannelConfig) -> bytes:
    """Recover the payload from a receiver trace.

    Synchronizes on the first above-threshold slot statistic, then reads one
    bit per ``t_b`` until a NUL byte or the end of the trace. Returns the
    payload bytes before the terminator; an unterminated frame yields
    whatever full bytes arrived. A trace with no above-threshold activity at
    all raises :class:`CovertDecodeError`.
    """
    gaps_us = delays(trace)
    ends_us = trace.timestamps_us[1:]
    tb_us = cfg.tb_ms * 1000.0
    threshold = cfg.effective_threshold
    resolution_us = float(trace.meta.get("resolution_hint", 0.0)) or 0.0

    if cfg.variant == "renderer":
        marker = gaps_us > threshold * 1000.0
    else:
        marker = gaps_us > resolution_us * HOST_BUSY_FACTOR
    if not marker.any():
        raise CovertDecodeError("no transmission detected")
    first = int(np.argmax(marker))
    origin_us = float(ends_us[first] - gaps_us[first])

    # Right-closed slot assignment relative to the sync slot's start.
    rel = ends_us - origin_us
    keep = rel > 0
    slot_idx = np.ceil(rel[keep] / tb_us).astype(np.int64) - 1
    slot_gaps = gaps_us[keep]
    n_slots = int(slot_idx.max()) + 1 if slot_idx.size else 0

    bits = []
    for slot in range(1, n_slots):
        in_slot = slot_gaps[slot_idx == slot]
        stat = _slot_statistic(cfg, in_slot, resolution_us)
        bits.append(1 if stat > threshold else 0)
        if len(bits) % 8 == 0 and bits[-8:] == [0] * 8:
            return bits_to_bytes(bits[:-8])
    return bits_to_bytes(bits)


@dataclass
class ChannelReport:
    n_sent_bits: int
    n_received_bits: int
    bit_errors: int
    ber: float
    payload_rate_bits_per_s: float

    def to_dict(self) -> dict:
        return {
            "n_sent_bits": self.n_sent_bits,
            "n_received_bits": self.n_received_bits,
            "bit_errors": self.bit_errors,
            "ber": self.ber,
            "payload_rate_bits_per_s": self.payload_rate_bits_per_s,
        }


def channel_metrics(sent: bytes, received: bytes, cfg: ChannelConfig) -> ChannelReport:
    """Bit error rate between sent and received payloads.

    Compared bitwise over the overlapping prefix; missing or extra bits each
    count as errors, and the denominator is the longer of the two, so BER
    stays in [0, 1]. The payload rate is one bit per slot: framing slots are
    constant overhead, not part of the payload.
    """
    sent_bits = payload_bits(sent)
    received_bits = payload_bits(received)
    overlap = min(len(sent_bits), len(received_bits))
    errors = sum(
        1 for i in range(overlap) if sent_bits[i] != received_bits[i]
    ) + abs(len(sent_bits) - len(received_bits))
    denom = max(len(sent_bits), len(received_bits), 1)
    return ChannelReport(
        n_sent_bits=len(sent_bits),
        n_received_bits=len(received_bits),
        bit_errors=int(errors),
        ber=errors / denom,
        payload_rate_bits_per_s=1000.0 / cfg.tb_ms,
    )


@dataclass
class ChannelRun:
    sent: bytes
    received: bytes
    report: ChannelReport
    trace: DelayTrace


def run_channel(
    payload: bytes,
    cfg: ChannelConfig | None = None,
    noise: NoiseSpec | None = None,
    policy: str | AccumulateAndServe = "fifo",
    loop: LoopConfig | None = None,
) -> ChannelRun:
    """Simulate one frame end to end: encode, share the loop, decode."""
    cfg = cfg or ChannelConfig()
    workload = encode(payload, cfg)
    if loop is None:
        loop = cfg.default_loop(frame_duration_us(payload, cfg))
    trace = simulate(loop, [workload], noise, policy=policy)
    try:
        received = decode(trace, cfg)
    except CovertDecodeError:
        # Noise drowned the sync marker: total loss, scored as such.
        received = b""
    return ChannelRun(
        sent=payload,
        received=received,
        report=channel_metrics(payload, received, cfg),
        trace=trace,
    )


def random_payload(n_bytes: int, seed: int = 0) -> bytes:
    """Uniform non-zero bytes (NUL is the terminator and cannot appear)."""
    rng = np.random.default_rng(seed)
    return bytes(int(b) for b in rng.integers(1, 256, size=n_bytes))


def channel_bench(
    cfg: ChannelConfig,
    payload_bytes: int = 16,
    noise_levels_us=(0.0, 1500.0, 3000.0),
    seeds=tuple(range(20)),
    policy: str | AccumulateAndServe = "fifo",
) -> list[dict]:
    """BER as a function of duration jitter, several runs per level."""
    rows = []
    for level in noise_levels_us:
        for seed in seeds:
            payload = random_payload(payload_bytes, seed=seed)
            noise = NoiseSpec(jitter_std_us=level, seed=seed) if level > 0 else None
            run = run_channel(payload, cfg, noise=noise, policy=policy)
            rows.append(
                {
                    "variant": cfg.variant,
                    "tb_ms": cfg.tb_ms,
                    "noise_jitter_us": level,
                    "seed": seed,
                    "ber": run.report.ber,
                    "payload_rate_bits_per_s": run.report.payload_rate_bits_per_s,
                }
            )
    return rows
