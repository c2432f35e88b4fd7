"""Command line interface.

Subcommands cover the full pipeline: simulate traces, build corpora,
classify and tune, run the keystroke experiment, drive the covert channel,
and plot traces. Output files are written atomically (temp file + rename):
a failing run never leaves a partial artifact behind.

Exit codes: 0 on success, 2 on usage errors (argparse), 1 on runtime errors.
``LOOPSCOPE_THREADS`` caps the compiled-kernel thread pool.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import classify as cls
from . import covert as cov
from . import keystroke as ks
from . import traces as tr
from . import workloads as wl
from .dtw import DtwConfig
from .sim import AccumulateAndServe, NoiseSpec, PRESETS, loop_preset, simulate
from .util import atomic_write_text


def _parse_duration_ms(text: str) -> float:
    """Accept '2s', '1500ms', '250000us' or a bare number meaning ms."""
    text = text.strip().lower()
    try:
        if text.endswith("us"):
            return float(text[:-2]) / 1000.0
        if text.endswith("ms"):
            return float(text[:-2])
        if text.endswith("s"):
            return float(text[:-1]) * 1000.0
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"cannot parse duration {text!r}; use e.g. 2s, 1500ms, 250000us"
        ) from None


def _noise_from_args(args) -> NoiseSpec | None:
    jitter = getattr(args, "jitter_us", 0.0) or 0.0
    scavenge = getattr(args, "scavenge_period_ms", None)
    if jitter <= 0 and not scavenge:
        return None
    return NoiseSpec(
        jitter_std_us=jitter,
        scavenge_period_us=scavenge * 1000.0 if scavenge else None,
        seed=getattr(args, "seed", 0),
    )


def _policy_from_args(args):
    if getattr(args, "accumulate_ms", None):
        return AccumulateAndServe(period_us=args.accumulate_ms * 1000.0)
    return "fifo"


def _cmd_simulate(args) -> int:
    loop = loop_preset(args.preset, duration_us=args.duration * 1000.0, capacity=args.capacity)
    workloads = [wl.load_workload(path) for path in args.workload or []]
    trace = simulate(loop, workloads, _noise_from_args(args), policy=_policy_from_args(args))
    tr.write_trace(trace, args.out)
    print(f"wrote {len(trace)} timestamps to {args.out}")
    return 0


def _cmd_corpus(args) -> int:
    profiles = wl.random_profiles(args.pages, seed=args.seed, duration_ms=args.duration)
    corpus = cls.simulate_corpus(
        n_pages=args.pages,
        n_visits=args.visits,
        duration_ms=args.duration,
        preset=args.preset,
        jitter_std_us=args.jitter_us,
        scavenge_period_ms=args.scavenge_period_ms,
        seed=args.seed,
        policy=_policy_from_args(args),
        profiles=profiles,
    )
    tr.write_corpus(corpus, args.out)
    for profile in profiles:
        wl.save_profile(profile, os.path.join(args.out, profile.label, "profile.json"))
    n_traces = sum(len(v) for v in corpus.values())
    print(f"wrote {n_traces} traces for {len(corpus)} pages under {args.out}")
    return 0


def _eval_config_from_args(args) -> cls.EvalConfig:
    if args.config:
        with open(args.config) as fh:
            return cls.EvalConfig.from_dict(json.load(fh))
    return cls.EvalConfig(
        p_ms=args.p_ms,
        trace_duration_ms=args.duration,
        reducer=args.reducer,
        znormalize=args.znormalize,
        folds=args.folds,
        seed=args.seed,
        dtw=DtwConfig(
            step_pattern=args.step_pattern,
            window_type=None if args.window_type == "none" else args.window_type,
            window_size=args.window_size,
        ),
    )


def _cmd_classify(args) -> int:
    corpus = tr.read_corpus(args.corpus)
    cfg = _eval_config_from_args(args)
    if args.histogram:
        report = cls.histogram_classify(
            corpus, n_centers=args.centers, folds=cfg.folds, seed=cfg.seed
        )
    else:
        report = cls.cross_validate(corpus, cfg)
    atomic_write_text(args.out, report.to_json() + "\n")
    if args.csv:
        atomic_write_text(args.csv, report.to_csv())
    for k in report.ks:
        print(f"{k}-match rate: {report.rates[k]:.2f}%")
    return 0


def _cmd_tune(args) -> int:
    corpus = tr.read_corpus(args.corpus)
    result = cls.tune(corpus, rounds=args.rounds, seed=args.seed)
    atomic_write_text(args.out, json.dumps(result.best.to_dict(), indent=2) + "\n")
    if args.table:
        atomic_write_text(args.table, result.to_csv())
    best = result.best
    print(
        f"best: P={best.p_ms}ms duration={best.trace_duration_ms}ms "
        f"{best.dtw.step_pattern}/{best.dtw.window_type}({best.dtw.window_size})"
    )
    return 0


def _cmd_keystroke(args) -> int:
    if args.trace:
        trace = tr.read_trace(args.trace)
        times = ks.detect_keystrokes(trace, low_ms=args.low_ms, high_ms=args.high_ms)
        for t in times:
            print(f"{t:.3f}")
        return 0
    reports = ks.password_experiment(
        n_passwords=args.passwords,
        seed=args.seed,
        jitter_std_us=args.jitter_us,
        with_mouse=not args.no_mouse,
        low_ms=args.low_ms,
        high_ms=args.high_ms,
    )
    summary = ks.aggregate_reports(reports)
    atomic_write_text(
        args.out,
        json.dumps([r.to_dict() for r in reports], indent=2) + "\n",
    )
    if args.csv:
        keys = list(summary)
        csv = ",".join(keys) + "\n" + ",".join(str(summary[k]) for k in keys) + "\n"
        atomic_write_text(args.csv, csv)
    print(
        f"{summary['length_correct_percent']:.1f}% length-correct over "
        f"{summary['n_passwords']} passwords"
    )
    return 0


def _channel_config_from_args(args) -> cov.ChannelConfig:
    kwargs = {"variant": args.variant, "tb_ms": args.tb}
    if args.variant == "renderer":
        kwargs["that_ms"] = args.that if args.that is not None else min(0.8 * args.tb, args.tb - 0.5)
    else:
        kwargs["n_requests"] = args.n
    if args.threshold is not None:
        kwargs["threshold"] = args.threshold
    return cov.ChannelConfig(**kwargs)


def _payload_from_args(args) -> bytes:
    if args.hex:
        return bytes.fromhex(args.hex)
    return args.text.encode("utf-8")


def _cmd_covert(args) -> int:
    cfg = _channel_config_from_args(args)
    if args.mode == "send":
        payload = _payload_from_args(args)
        noise = NoiseSpec(jitter_std_us=args.noise, seed=args.seed) if args.noise else None
        run = cov.run_channel(payload, cfg, noise=noise, policy=_policy_from_args(args))
        tr.write_trace(run.trace, args.out)
        print(f"sent {len(payload)} bytes; receiver saw {run.received!r}; ber={run.report.ber:.4f}")
        return 0
    if args.mode == "recv":
        trace = tr.read_trace(args.trace)
        received = cov.decode(trace, cfg)
        if args.expect_hex:
            report = cov.channel_metrics(bytes.fromhex(args.expect_hex), received, cfg)
            print(f"ber={report.ber:.4f} rate={report.payload_rate_bits_per_s:.1f} bit/s")
        sys.stdout.buffer.write(received)
        sys.stdout.buffer.write(b"\n")
        return 0
    # bench
    rows = cov.channel_bench(
        cfg,
        payload_bytes=args.payload_bytes,
        noise_levels_us=args.noise_levels,
        seeds=tuple(range(args.runs)),
        policy=_policy_from_args(args),
    )
    header = "variant,tb_ms,noise_jitter_us,seed,ber,payload_rate_bits_per_s"
    lines = [header] + [
        f"{r['variant']},{r['tb_ms']},{r['noise_jitter_us']},{r['seed']},"
        f"{r['ber']:.6f},{r['payload_rate_bits_per_s']:.2f}"
        for r in rows
    ]
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    by_level: dict[float, list[float]] = {}
    for r in rows:
        by_level.setdefault(r["noise_jitter_us"], []).append(r["ber"])
    for level in sorted(by_level):
        print(f"jitter {level:.0f}us: mean BER {np.mean(by_level[level]):.4f}")
    return 0


def _cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    trace = tr.read_trace(args.trace)
    fig, ax = plt.subplots(figsize=(10, 4))
    if args.p_ms:
        series = tr.sample(trace, args.p_ms, reducer=args.reducer)
        xs = np.arange(len(series)) * args.p_ms
        ax.plot(xs, series.values / 1000.0, lw=0.8)
        ax.set_xlabel("time (ms)")
        ax.set_ylabel(f"{args.reducer} of delays per {args.p_ms} ms (ms)")
        csv_rows = [
            f"{x},{v}" for x, v in zip(xs, series.values)
        ]
        csv_header = "bin_start_ms,value_us"
    else:
        gaps = tr.delays(trace)
        ends = trace.timestamps_us[1:] / 1000.0
        ax.plot(ends, gaps / 1000.0, lw=0.6)
        ax.set_xlabel("time (ms)")
        ax.set_ylabel("probe delay (ms)")
        csv_rows = [f"{e},{g}" for e, g in zip(ends, gaps)]
        csv_header = "end_ms,delay_us"
    ax.set_title(trace.label or "delay trace")
    fig.tight_layout()

    directory = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".svg")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg")
        os.replace(tmp, args.out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)
    if args.csv:
        atomic_write_text(args.csv, csv_header + "\n" + "\n".join(csv_rows) + "\n")
    print(f"wrote {args.out}")
    return 0


def _add_noise_args(p, default_jitter=0.0):
    p.add_argument("--jitter-us", type=float, default=default_jitter,
                   help="gaussian task-duration jitter, microseconds")
    p.add_argument("--scavenge-period-ms", type=float, default=None,
                   help="inject a background scavenge task at this period")
    p.add_argument("--seed", type=int, default=0)


def _add_policy_args(p):
    p.add_argument("--accumulate-ms", type=float, default=None,
                   help="serve in batches of this period instead of FIFO")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopscope",
        description="Event-loop timing side channel toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a probe trace")
    p.add_argument("--preset", choices=sorted(PRESETS), default="renderer")
    p.add_argument("--duration", type=_parse_duration_ms, required=True,
                   help="recording length (2s, 1500ms, ... ; bare number = ms)")
    p.add_argument("--capacity", type=int, default=2_000_000)
    p.add_argument("--workload", action="append", help="workload JSON file (repeatable)")
    p.add_argument("--out", required=True)
    _add_noise_args(p)
    _add_policy_args(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("corpus", help="simulate a labeled corpus of page visits")
    p.add_argument("--out", required=True)
    p.add_argument("--pages", type=int, default=50)
    p.add_argument("--visits", type=int, default=15)
    p.add_argument("--duration", type=_parse_duration_ms, default=2000.0)
    p.add_argument("--preset", choices=sorted(PRESETS), default="renderer")
    _add_noise_args(p, default_jitter=10.0)
    p.set_defaults(scavenge_period_ms=250.0)
    _add_policy_args(p)
    p.set_defaults(func=_cmd_corpus)

    p = sub.add_parser("classify", help="k-match cross-validation over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="also write per-fold rates as CSV")
    p.add_argument("--config", help="EvalConfig JSON (e.g. from tune)")
    p.add_argument("--p-ms", type=float, default=5.0)
    p.add_argument("--duration", type=_parse_duration_ms, default=2000.0)
    p.add_argument("--reducer", choices=tr.REDUCERS, default="sum")
    p.add_argument("--znormalize", action="store_true")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step-pattern", choices=("symmetric1", "symmetric2", "asymmetric"),
                   default="symmetric1")
    p.add_argument("--window-type", choices=("sakoechiba", "itakura", "none"),
                   default="sakoechiba")
    p.add_argument("--window-size", type=int, default=100)
    p.add_argument("--histogram", action="store_true",
                   help="use the delay-histogram baseline instead of DTW")
    p.add_argument("--centers", type=int, default=8,
                   help="histogram baseline: number of delay clusters")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("tune", help="grid-search sampling and DTW parameters")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="best EvalConfig JSON path")
    p.add_argument("--table", help="full score table CSV path")
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("keystroke", help="keystroke detection experiment")
    p.add_argument("--trace", help="detect on an existing trace instead of simulating")
    p.add_argument("--passwords", type=int, default=100)
    p.add_argument("--out", default="keystroke-reports.json")
    p.add_argument("--csv", help="aggregate summary CSV")
    p.add_argument("--low-ms", type=float, default=0.4)
    p.add_argument("--high-ms", type=float, default=3.0)
    p.add_argument("--no-mouse", action="store_true")
    _add_noise_args(p, default_jitter=10.0)
    p.set_defaults(func=_cmd_keystroke)

    p = sub.add_parser("covert", help="covert channel: send, receive, benchmark")
    p.add_argument("mode", choices=("send", "recv", "bench"))
    p.add_argument("--variant", choices=cov.VARIANTS, default="renderer")
    p.add_argument("--tb", type=float, default=None, help="slot length, ms")
    p.add_argument("--that", type=float, default=None, help="renderer: blocking time, ms")
    p.add_argument("--n", type=int, default=350, help="host: requests per 1-slot")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--text", default="covert channel test")
    p.add_argument("--hex", help="payload as hex instead of --text")
    p.add_argument("--trace", help="recv: trace file to decode")
    p.add_argument("--expect-hex", help="recv: expected payload for BER")
    p.add_argument("--out", default="covert.trace")
    p.add_argument("--noise", type=float, default=0.0, help="duration jitter, us")
    p.add_argument("--noise-levels", type=float, nargs="+",
                   default=(0.0, 1500.0, 3000.0), help="bench: jitter sweep, us")
    p.add_argument("--runs", type=int, default=20, help="bench: seeds per level")
    p.add_argument("--payload-bytes", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    _add_policy_args(p)
    p.set_defaults(func=_cmd_covert)

    p = sub.add_parser("plot", help="render a trace as SVG (optionally CSV)")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument("--csv", help="also dump the plotted values")
    p.add_argument("--p-ms", type=float, default=None,
                   help="plot the sampled series at this period instead of raw delays")
    p.add_argument("--reducer", choices=tr.REDUCERS, default="sum")
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "covert" and args.tb is None:
        args.tb = 5.0 if args.variant == "renderer" else 200.0
    if args.command == "covert" and args.mode == "recv" and not args.trace:
        parser.error("covert recv requires --trace")
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures exit 1, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
