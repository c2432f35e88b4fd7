"""loopscope: timing side channels on shared event loops, end to end.

Simulate a probe sharing an event loop with victim workloads, record its
delay trace, and run the analysis stack on it: page identification by
warping distance over sampled delay series, keystroke timing recovery,
and covert channels, plus the batching countermeasure that defeats them.
"""

from .classify import (
    EvalConfig,
    KMatchReport,
    TuneResult,
    cross_validate,
    histogram_classify,
    k_match,
    simulate_corpus,
    tune,
)
from .covert import (
    ChannelConfig,
    ChannelReport,
    ChannelRun,
    CovertDecodeError,
    channel_bench,
    channel_metrics,
    decode,
    encode,
    run_channel,
)
from .dtw import (
    DtwConfig,
    DtwError,
    brute_force_dtw,
    dtw_cost_matrix,
    dtw_distance,
    window_allows,
)
from .estimators import DelayHistogramFeaturizer, DtwKnnClassifier, TraceSampler
from .keystroke import (
    DetectionReport,
    detect_keystrokes,
    evaluate_detection,
    password_experiment,
)
from .sim import (
    AccumulateAndServe,
    LoopConfig,
    NoiseSpec,
    PRESETS,
    Task,
    Workload,
    loop_preset,
    simulate,
)
from .traces import (
    DelayTrace,
    Histogram,
    TimeSeries,
    delays,
    histogram,
    read_corpus,
    read_trace,
    sample,
    write_corpus,
    write_trace,
)
from .workloads import (
    Burst,
    PageProfile,
    keystroke_workload,
    mouse_workload,
    page_load_workload,
    random_profile,
    random_profiles,
)

__version__ = "0.1.0"

__all__ = [
    "AccumulateAndServe",
    "Burst",
    "ChannelConfig",
    "ChannelReport",
    "ChannelRun",
    "CovertDecodeError",
    "DelayHistogramFeaturizer",
    "DelayTrace",
    "DetectionReport",
    "DtwConfig",
    "DtwError",
    "DtwKnnClassifier",
    "EvalConfig",
    "Histogram",
    "KMatchReport",
    "LoopConfig",
    "NoiseSpec",
    "PRESETS",
    "PageProfile",
    "Task",
    "TimeSeries",
    "TraceSampler",
    "TuneResult",
    "Workload",
    "brute_force_dtw",
    "channel_bench",
    "channel_metrics",
    "cross_validate",
    "decode",
    "delays",
    "detect_keystrokes",
    "dtw_cost_matrix",
    "dtw_distance",
    "encode",
    "evaluate_detection",
    "histogram",
    "histogram_classify",
    "k_match",
    "keystroke_workload",
    "loop_preset",
    "mouse_workload",
    "page_load_workload",
    "password_experiment",
    "random_profile",
    "random_profiles",
    "read_corpus",
    "read_trace",
    "run_channel",
    "sample",
    "simulate",
    "simulate_corpus",
    "tune",
    "window_allows",
    "write_corpus",
    "write_trace",
]
