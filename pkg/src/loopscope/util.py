"""Small shared helpers: canonical number formatting, atomic writes, thread setup."""

from __future__ import annotations

import os
import tempfile


def ns_from_us(value_us: float) -> int:
    """Convert a microsecond quantity to the integer nanosecond grid.

    All simulation arithmetic runs on integer nanoseconds so that ordering,
    ties and conservation checks are exact. Inputs are rounded to the nearest
    nanosecond once, at the boundary.
    """
    return int(round(float(value_us) * 1000.0))


def us_from_ns(value_ns: int) -> float:
    return value_ns / 1000.0


def fmt_number(x: float) -> str:
    """Canonical decimal rendering used in trace files.

    Integral values are written without a decimal point ("25", not "25.0"),
    everything else uses the shortest representation that round-trips. This
    keeps files produced by other writers (the browser harvester emits the
    same rule) byte-comparable.
    """
    f = float(x)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def canonical_meta(meta: dict) -> dict:
    """Normalize a metadata mapping for serialization: integral floats become ints."""
    out = {}
    for key, value in meta.items():
        if isinstance(value, float) and value.is_integer() and abs(value) < 1e15:
            out[key] = int(value)
        else:
            out[key] = value
    return out


def atomic_write_text(path: str, text: str) -> None:
    """Write a file via a temporary sibling and rename, so readers never see
    a partially written file and a failed run leaves no output behind."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def configure_threads() -> int:
    """Apply LOOPSCOPE_THREADS to the numba thread pool, clamped to what the
    host actually allows. Returns the thread count in effect."""
    import numba

    available = numba.config.NUMBA_NUM_THREADS
    requested = os.environ.get("LOOPSCOPE_THREADS")
    if requested:
        try:
            n = max(1, min(int(requested), available))
        except ValueError:
            raise ValueError(
                f"LOOPSCOPE_THREADS must be an integer, got {requested!r}"
            ) from None
        numba.set_num_threads(n)
        return n
    return available
