"""DVS event-stream preprocessing: load, denoise, downsample, bin, spike-encode.

Events are held in a numpy structured array (``t`` microseconds, ``x``
column, ``y`` row, ``p`` polarity) sorted by timestamp.  All functions are
pure: they return new arrays and never mutate their input.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import SnnDeployError

EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])

# Packed on-disk record: u32 timestamp, u16 x, u16 y, u8 polarity.
_BIN_RECORD = struct.Struct("<IHHB")

DEFAULT_SENSOR_SHAPE = (128, 128)  # (height, width)


class EventFormatError(SnnDeployError):
    """Malformed event file or out-of-bounds event."""


def empty_events() -> np.ndarray:
    return np.empty(0, dtype=EVENT_DTYPE)


def make_events(rows) -> np.ndarray:
    """Build a sorted event array from an iterable of (t, x, y, p) tuples."""
    arr = np.array([tuple(r) for r in rows], dtype=EVENT_DTYPE) if rows else empty_events()
    return arr[np.argsort(arr["t"], kind="stable")]


def _check_bounds(arr: np.ndarray, sensor_shape, where: str) -> None:
    h, w = sensor_shape
    bad_x = arr["x"] >= w
    bad_y = arr["y"] >= h
    if np.any(bad_x) or np.any(bad_y):
        i = int(np.argmax(bad_x | bad_y))
        raise EventFormatError(
            f"{where}: event {i} at ({arr['x'][i]}, {arr['y'][i]}) outside "
            f"{w}x{h} sensor"
        )
    if np.any(arr["p"] > 1):
        i = int(np.argmax(arr["p"] > 1))
        raise EventFormatError(f"{where}: event {i} has polarity {arr['p'][i]}, expected 0/1")


def load_events(path: str, format: str | None = None, sensor_shape=DEFAULT_SENSOR_SHAPE) -> np.ndarray:
    """Load a CSV (``t_us,x,y,p`` per row) or packed-binary event file.

    The format is inferred from the extension (``.csv`` / ``.bin``) unless
    given explicitly.  Events are sorted by timestamp on return.
    """
    if format is None:
        format = "csv" if path.endswith(".csv") else "bin"
    if format == "csv":
        rows = []
        with open(path, newline="") as f:
            for lineno, row in enumerate(csv.reader(f), start=1):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != 4:
                    raise EventFormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
                try:
                    t, x, y, p = (int(v) for v in row)
                except ValueError as e:
                    raise EventFormatError(f"{path}:{lineno}: {e}") from e
                if t < 0 or x < 0 or y < 0:
                    raise EventFormatError(f"{path}:{lineno}: negative field")
                rows.append((t, x, y, p))
        arr = make_events(rows)
    elif format == "bin":
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) % _BIN_RECORD.size:
            raise EventFormatError(f"{path}: size {len(raw)} is not a whole number of records")
        rows = [_BIN_RECORD.unpack_from(raw, off) for off in range(0, len(raw), _BIN_RECORD.size)]
        arr = make_events(rows)
    else:
        raise ValueError(f"unknown event format {format!r}")
    _check_bounds(arr, sensor_shape, path)
    return arr


def save_events(events: np.ndarray, path: str, format: str | None = None) -> None:
    if format is None:
        format = "csv" if path.endswith(".csv") else "bin"
    if format == "csv":
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            for e in events:
                w.writerow([int(e["t"]), int(e["x"]), int(e["y"]), int(e["p"])])
    elif format == "bin":
        with open(path, "wb") as f:
            for e in events:
                f.write(_BIN_RECORD.pack(int(e["t"]), int(e["x"]), int(e["y"]), int(e["p"])))
    else:
        raise ValueError(f"unknown event format {format!r}")


def denoise(events: np.ndarray, spatial_px: int = 1, window_us: int = 1_000_000) -> np.ndarray:
    """Drop events with no *other* event in a space-time neighborhood.

    An event survives iff some other event lies within ``spatial_px``
    Chebyshev pixels and ``window_us`` microseconds.  The event itself
    never counts as its own neighbor, so an isolated event is removed.
    """
    n = len(events)
    if n == 0:
        return events.copy()
    s = spatial_px
    h = int(events["y"].max()) + 1
    w = int(events["x"].max()) + 1
    t = events["t"].astype(np.int64)
    keep = np.zeros(n, dtype=bool)

    # Forward pass: a neighbor at an earlier (or equal) time within the window.
    sentinel = np.int64(-(1 << 62))
    last = np.full((h + 2 * s, w + 2 * s), sentinel, dtype=np.int64)
    for i in range(n):
        y, x = int(events["y"][i]), int(events["x"][i])
        if last[y : y + 2 * s + 1, x : x + 2 * s + 1].max() >= t[i] - window_us:
            keep[i] = True
        last[y + s, x + s] = t[i]

    # Backward pass: a neighbor at a later (or equal) time within the window.
    nxt = np.full((h + 2 * s, w + 2 * s), np.int64((1 << 62)), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        if keep[i]:
            y, x = int(events["y"][i]), int(events["x"][i])
            nxt[y + s, x + s] = t[i]
            continue
        y, x = int(events["y"][i]), int(events["x"][i])
        if nxt[y : y + 2 * s + 1, x : x + 2 * s + 1].min() <= t[i] + window_us:
            keep[i] = True
        nxt[y + s, x + s] = t[i]
    return events[keep]


def downsample(events: np.ndarray, factor: int = 4) -> np.ndarray:
    """Integer spatial downsampling: coordinates divided by ``factor``."""
    if factor <= 0:
        raise ValueError(f"downsample factor must be positive, got {factor}")
    out = events.copy()
    out["x"] = events["x"] // factor
    out["y"] = events["y"] // factor
    return out


@dataclass
class FrameTensor:
    """Per-polarity event-count frames, shape ``(T, 2, H, W)``."""

    frames: np.ndarray
    bin_ms: int

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def bin_frames(events: np.ndarray, bin_ms: int = 1, shape=(2, 32, 32)) -> FrameTensor:
    """Aggregate events into ``bin_ms``-wide count frames.

    Bins are anchored at the first event's timestamp.  Every event lands in
    exactly one bin, so the total count is preserved.
    """
    _, h, w = shape
    if len(events) == 0:
        return FrameTensor(frames=np.zeros((0, 2, h, w), dtype=np.int64), bin_ms=bin_ms)
    _check_bounds(events, (h, w), "bin_frames")
    t = events["t"].astype(np.int64)
    t0 = int(t[0])
    span = int(t[-1]) - t0 + 1
    bin_us = bin_ms * 1000
    num = -(-span // bin_us)  # ceil
    frames = np.zeros((num, 2, h, w), dtype=np.int64)
    k = (t - t0) // bin_us
    np.add.at(frames, (k, events["p"].astype(np.int64), events["y"].astype(np.int64), events["x"].astype(np.int64)), 1)
    return FrameTensor(frames=frames, bin_ms=bin_ms)


@dataclass
class SpikeTrain:
    """Firing timesteps per neuron: ``times[n]`` is a strictly increasing
    int array, all entries below the simulation length."""

    size: int
    times: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.times:
            self.times = [np.empty(0, dtype=np.int64) for _ in range(self.size)]
        assert len(self.times) == self.size

    def total_spikes(self) -> int:
        return sum(len(ts) for ts in self.times)

    def as_pairs(self) -> np.ndarray:
        """All spikes as an ``(n_spikes, 2)`` array of (neuron, timestep)."""
        if self.total_spikes() == 0:
            return np.empty((0, 2), dtype=np.int64)
        pairs = [
            np.stack([np.full(len(ts), n, dtype=np.int64), ts], axis=1)
            for n, ts in enumerate(self.times)
            if len(ts)
        ]
        return np.concatenate(pairs, axis=0)


def frames_to_spikes(f: FrameTensor, max_timesteps: int) -> SpikeTrain:
    """Binarize count frames into one spike per active (neuron, timestep).

    Neuron index is ``p*H*W + y*W + x``.  A cell with any positive count
    yields exactly one spike; only the first ``max_timesteps`` bins are
    used (the hardware delivers at most one input spike per tick).
    """
    t_lim = min(max_timesteps, f.num_frames)
    _, p_ch, h, w = f.frames.shape
    size = p_ch * h * w
    active = f.frames[:t_lim] >= 1
    times: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * size
    k, p, y, x = np.nonzero(active)
    neuron = p * h * w + y * w + x
    order = np.lexsort((k, neuron))
    neuron, k = neuron[order], k[order]
    for n in np.unique(neuron):
        times[int(n)] = k[neuron == n].astype(np.int64)
    return SpikeTrain(size=size, times=list(times))
