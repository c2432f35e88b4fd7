import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopscope.traces import (
    REDUCERS,
    TRACE_HEADER,
    DelayTrace,
    TraceFormatError,
    delays,
    histogram,
    kmeans1d,
    read_corpus,
    read_trace,
    sample,
    write_corpus,
    write_trace,
)
from loopscope.util import fmt_number


class TestDelayTrace:
    def test_delays_are_first_differences(self):
        trace = DelayTrace([0.0, 25.0, 75.0, 80.0])
        assert delays(trace).tolist() == [25.0, 50.0, 5.0]

    def test_meta_defaults_merged(self):
        trace = DelayTrace([0.0, 1.0], meta={"label": "x"})
        assert trace.meta["label"] == "x"
        assert trace.meta["loop_kind"] == "unknown"
        assert trace.meta["source"] == "unknown"

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="at least one timestamp"):
            DelayTrace(np.array([]))

    def test_rejects_non_increasing(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            DelayTrace([0.0, 10.0, 10.0])

    def test_rejects_negative_start(self):
        with pytest.raises(ValueError, match="non-negative"):
            DelayTrace([-1.0, 10.0])

    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            DelayTrace([0.0, np.nan])

    def test_single_timestamp_has_no_delays(self):
        trace = DelayTrace([5.0])
        with pytest.raises(ValueError, match="need at least 2"):
            delays(trace)


class TestSample:
    def test_right_closed_bins(self):
        # Delays end at 10 ms and 30 ms. With P=20 ms the first falls in
        # bin 0, the second ends exactly on the 30 ms mark inside bin 1.
        trace = DelayTrace([0.0, 10_000.0, 30_000.0])
        series = sample(trace, p_ms=20.0)
        assert series.values.tolist() == [10_000.0, 20_000.0]
        assert series.padded is False

    def test_end_on_boundary_belongs_to_left_bin(self):
        trace = DelayTrace([0.0, 20_000.0])
        series = sample(trace, p_ms=20.0)
        assert len(series) == 1
        assert series.values.tolist() == [20_000.0]

    def test_reducers(self):
        # Bin 0 holds delays 5000, 4000, 11000; bin 1 holds a single 5000.
        trace = DelayTrace([0.0, 5_000.0, 9_000.0, 20_000.0, 25_000.0])
        expected = {
            "sum": [20_000.0, 5_000.0],
            "avg": [20_000.0 / 3.0, 5_000.0],
            "max": [11_000.0, 5_000.0],
            "min": [4_000.0, 5_000.0],
        }
        for reducer in REDUCERS:
            series = sample(trace, p_ms=20.0, reducer=reducer, duration_ms=40.0)
            assert series.values.tolist() == expected[reducer], reducer

    def test_empty_bins_are_zero(self):
        trace = DelayTrace([0.0, 5_000.0])
        for reducer in REDUCERS:
            series = sample(trace, p_ms=10.0, reducer=reducer, duration_ms=60.0)
            assert len(series) == 6
            assert series.values[1:].tolist() == [0.0] * 5

    def test_short_trace_sets_padded(self):
        trace = DelayTrace([0.0, 5_000.0])
        series = sample(trace, p_ms=10.0, duration_ms=60.0)
        assert series.padded is True

    def test_delays_past_duration_dropped(self):
        trace = DelayTrace([0.0, 5_000.0, 50_000.0])
        series = sample(trace, p_ms=10.0, duration_ms=10.0)
        assert series.values.tolist() == [5_000.0]

    def test_sum_conserves_kept_mass(self):
        rng = np.random.default_rng(7)
        ts = np.cumsum(rng.uniform(10.0, 500.0, size=200))
        trace = DelayTrace(np.concatenate([[0.0], ts]))
        series = sample(trace, p_ms=1.0, duration_ms=trace.duration_us / 1000.0)
        assert series.values.sum() == pytest.approx(trace.duration_us, abs=1e-6)

    def test_unknown_reducer(self):
        trace = DelayTrace([0.0, 10.0])
        with pytest.raises(ValueError, match="unknown reducer"):
            sample(trace, p_ms=1.0, reducer="median")

    def test_bad_period(self):
        trace = DelayTrace([0.0, 10.0])
        with pytest.raises(ValueError, match="must be positive"):
            sample(trace, p_ms=0.0)

    def test_znormalize_constant_series_is_zero(self):
        trace = DelayTrace([0.0, 10_000.0, 20_000.0, 30_000.0])
        series = sample(trace, p_ms=10.0).znormalized()
        assert np.all(series.values == 0.0)

    def test_znormalize_moments(self):
        trace = DelayTrace([0.0, 5_000.0, 9_000.0, 20_000.0, 25_000.0])
        z = sample(trace, p_ms=5.0, duration_ms=25.0).znormalized()
        assert z.values.mean() == pytest.approx(0.0, abs=1e-12)
        assert z.values.std() == pytest.approx(1.0, abs=1e-12)

    @given(
        st.lists(st.floats(min_value=1.0, max_value=1_000.0), min_size=1, max_size=50),
        st.floats(min_value=0.5, max_value=50.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_sum_never_exceeds_duration(self, gaps, p_ms):
        ts = np.concatenate([[0.0], np.cumsum(gaps)])
        trace = DelayTrace(ts)
        series = sample(trace, p_ms=p_ms)
        assert series.values.sum() <= trace.duration_us + 1e-6


class TestKmeans1d:
    def test_two_clear_clusters(self):
        centers, counts, history = kmeans1d(np.array([1.0, 1.0, 1.0, 9.0, 9.0]), k=2, seed=0)
        assert centers.tolist() == [1.0, 9.0]
        assert counts.tolist() == [3, 2]
        assert history == sorted(history, reverse=True)

    def test_objective_never_increases(self):
        rng = np.random.default_rng(3)
        values = np.concatenate([rng.normal(25, 1, 300), rng.normal(500, 20, 100)])
        for seed in range(5):
            _, _, history = kmeans1d(values, k=4, seed=seed)
            assert all(a >= b - 1e-9 for a, b in zip(history, history[1:]))

    def test_centers_sorted_and_counts_cover_input(self):
        rng = np.random.default_rng(11)
        values = rng.uniform(0, 1000, 500)
        centers, counts, _ = kmeans1d(values, k=7, seed=1)
        assert np.all(np.diff(centers) > 0)
        assert counts.sum() == values.size

    def test_deterministic_for_seed(self):
        rng = np.random.default_rng(4)
        values = rng.uniform(0, 100, 200)
        a = kmeans1d(values, k=5, seed=9)
        b = kmeans1d(values, k=5, seed=9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_sample_cap_still_counts_everything(self):
        rng = np.random.default_rng(5)
        values = np.concatenate([rng.normal(10, 0.5, 2000), rng.normal(90, 0.5, 2000)])
        centers, counts, _ = kmeans1d(values, k=2, seed=0, sample_cap=256)
        assert counts.sum() == 4000
        assert abs(centers[0] - 10) < 2 and abs(centers[1] - 90) < 2

    def test_k_exceeding_distinct_values(self):
        with pytest.raises(ValueError, match="k too large: 3 clusters .* 2 distinct"):
            kmeans1d(np.array([1.0, 1.0, 2.0]), k=3)

    def test_empty_input(self):
        with pytest.raises(ValueError, match="empty"):
            kmeans1d(np.array([]), k=1)

    def test_histogram_wrapper(self):
        trace = DelayTrace([0.0, 25.0, 50.0, 550.0, 575.0])
        hist = histogram(trace, k=2)
        assert hist.centers.tolist() == [25.0, 500.0]
        assert hist.counts.tolist() == [3, 1]


class TestTraceIO:
    def test_round_trip(self, tmp_path):
        trace = DelayTrace(
            [0.0, 25.0, 50.5, 76.125],
            meta={"label": "demo", "loop_kind": "renderer", "seed": "7"},
        )
        path = str(tmp_path / "t.trace")
        write_trace(trace, path)
        back = read_trace(path)
        assert np.array_equal(back.timestamps_us, trace.timestamps_us)
        assert back.meta == trace.meta

    def test_write_is_byte_stable(self, tmp_path):
        trace = DelayTrace([0.0, 25.0, 50.5], meta={"label": "x"})
        p1, p2 = str(tmp_path / "a.trace"), str(tmp_path / "b.trace")
        write_trace(trace, p1)
        write_trace(read_trace(p1), p2)
        with open(p1, "rb") as fa, open(p2, "rb") as fb:
            assert fa.read() == fb.read()

    def test_integral_timestamps_have_no_decimal_point(self, tmp_path):
        path = str(tmp_path / "t.trace")
        write_trace(DelayTrace([0.0, 25.0, 50.5]), path)
        lines = open(path).read().splitlines()
        assert lines[0] == TRACE_HEADER
        assert lines[2:] == ["0", "25", "50.5"]

    def test_meta_is_sorted_compact_json(self, tmp_path):
        path = str(tmp_path / "t.trace")
        write_trace(DelayTrace([0.0, 1.0], meta={"label": "z", "seed": "3"}), path)
        meta_line = open(path).read().splitlines()[1]
        assert meta_line == json.dumps(
            json.loads(meta_line), sort_keys=True, separators=(",", ":")
        )

    def test_no_leftover_temp_files(self, tmp_path):
        write_trace(DelayTrace([0.0, 1.0]), str(tmp_path / "t.trace"))
        assert sorted(os.listdir(tmp_path)) == ["t.trace"]

    def test_bad_header(self, tmp_path):
        path = tmp_path / "t.trace"
        path.write_text("#something-else\n{}\n1\n")
        with pytest.raises(TraceFormatError, match="line 1: expected header"):
            read_trace(str(path))

    def test_bad_meta_json(self, tmp_path):
        path = tmp_path / "t.trace"
        path.write_text(f"{TRACE_HEADER}\nnot-json\n1\n")
        with pytest.raises(TraceFormatError, match="line 2: invalid metadata JSON"):
            read_trace(str(path))

    def test_meta_must_be_object(self, tmp_path):
        path = tmp_path / "t.trace"
        path.write_text(f"{TRACE_HEADER}\n[1,2]\n1\n")
        with pytest.raises(TraceFormatError, match="line 2: metadata must be"):
            read_trace(str(path))

    def test_non_numeric_timestamp_reports_line(self, tmp_path):
        path = tmp_path / "t.trace"
        path.write_text(f"{TRACE_HEADER}\n{{}}\n0\n25\nbogus\n")
        with pytest.raises(TraceFormatError, match="line 5: not a timestamp: 'bogus'"):
            read_trace(str(path))

    def test_non_increasing_reports_line(self, tmp_path):
        path = tmp_path / "t.trace"
        path.write_text(f"{TRACE_HEADER}\n{{}}\n0\n25\n25\n")
        with pytest.raises(TraceFormatError, match="line 5: .*strictly increasing"):
            read_trace(str(path))

    def test_empty_body(self, tmp_path):
        path = tmp_path / "t.trace"
        path.write_text(f"{TRACE_HEADER}\n{{}}\n")
        with pytest.raises(TraceFormatError, match="no timestamps"):
            read_trace(str(path))

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "t.trace"
        path.write_text(f"{TRACE_HEADER}\n{{}}\n0\n\n25\n")
        assert read_trace(str(path)).timestamps_us.tolist() == [0.0, 25.0]


class TestCorpusIO:
    def test_round_trip(self, tmp_path):
        corpus = {
            "site-a": [DelayTrace([0.0, 25.0], meta={"label": "site-a"})],
            "site-b": [
                DelayTrace([0.0, 30.0], meta={"label": "site-b"}),
                DelayTrace([0.0, 35.0, 70.0], meta={"label": "site-b"}),
            ],
        }
        write_corpus(corpus, str(tmp_path))
        back = read_corpus(str(tmp_path))
        assert sorted(back) == ["site-a", "site-b"]
        assert len(back["site-b"]) == 2
        assert back["site-b"][1].timestamps_us.tolist() == [0.0, 35.0, 70.0]

    def test_numeric_order_preserved(self, tmp_path):
        label_dir = tmp_path / "p"
        label_dir.mkdir()
        for i in (0, 2, 10, 1):
            write_trace(
                DelayTrace([0.0, float(i + 1)]), str(label_dir / f"{i}.trace")
            )
        back = read_corpus(str(tmp_path))
        firsts = [t.timestamps_us[1] for t in back["p"]]
        assert firsts == [1.0, 2.0, 3.0, 11.0]

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="corpus directory not found"):
            read_corpus(str(tmp_path / "nope"))

    def test_empty_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="no traces found"):
            read_corpus(str(tmp_path))


class TestFmtNumber:
    def test_integral_and_fractional(self):
        assert fmt_number(25.0) == "25"
        assert fmt_number(0.0) == "0"
        assert fmt_number(50.5) == "50.5"

    @given(st.floats(min_value=0, max_value=1e12, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_round_trips(self, x):
        assert float(fmt_number(x)) == x
