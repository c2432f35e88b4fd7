"""Cross-language checks against trace files produced by the browser
harvester (frontend/). The fixtures are committed, so these run without any
frontend toolchain present; frontend/test/fixtures.test.ts regenerates them
and fails if the bytes drift."""

import os

import numpy as np
import pytest

from loopscope.traces import delays, read_trace, write_trace

FIXTURE_DIR = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "frontend", "fixtures"
)

FIXTURES = {
    "postmessage-idle.trace": {"loop_kind": "renderer", "technique": "postMessage"},
    "fetch-idle.trace": {"loop_kind": "host", "technique": "fetch-nonroutable"},
}


def fixture_path(name):
    path = os.path.join(FIXTURE_DIR, name)
    if not os.path.exists(path):
        pytest.fail(f"harvester fixture missing: {path}")
    return path


class TestHarvesterFixtures:
    @pytest.mark.parametrize("name", sorted(FIXTURES))
    def test_parses_as_valid_trace(self, name):
        trace = read_trace(fixture_path(name))
        assert len(trace) >= 2
        assert trace.timestamps_us[0] == 0.0
        assert np.all(np.diff(trace.timestamps_us) > 0)

    @pytest.mark.parametrize("name", sorted(FIXTURES))
    def test_meta_identifies_the_watched_loop(self, name):
        meta = read_trace(fixture_path(name)).meta
        assert meta["loop_kind"] == FIXTURES[name]["loop_kind"]
        assert meta["technique"] == FIXTURES[name]["technique"]
        assert meta["source"] == "harvester"
        # The reader's default keys must all be present in the file itself,
        # otherwise the round-trip below could not be byte-exact.
        for key in ("label", "loop_kind", "resolution_hint", "source", "seed"):
            assert key in meta

    def test_resolution_hint_tracks_the_technique(self):
        pm = read_trace(fixture_path("postmessage-idle.trace"))
        ft = read_trace(fixture_path("fetch-idle.trace"))
        assert pm.meta["resolution_hint"] < ft.meta["resolution_hint"]
        # The hint is the median observed delay, so it should sit inside
        # each trace's delay range.
        for trace in (pm, ft):
            d = delays(trace)
            assert d.min() <= trace.meta["resolution_hint"] <= d.max()

    @pytest.mark.parametrize("name", sorted(FIXTURES))
    def test_round_trip_is_byte_identical(self, name, tmp_path):
        """read + write must reproduce the harvester's bytes exactly: both
        writers claim the same canonical encoding, and this is the proof."""
        src = fixture_path(name)
        trace = read_trace(src)
        out = tmp_path / name
        write_trace(trace, str(out))
        with open(src, "rb") as fh:
            original = fh.read()
        assert out.read_bytes() == original
