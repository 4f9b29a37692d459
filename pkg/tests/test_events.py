import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snndeploy import events
from snndeploy.events import (
    EventFormatError,
    bin_frames,
    denoise,
    downsample,
    frames_to_spikes,
    load_events,
    make_events,
    save_events,
)

from conftest import denoise_oracle


def random_events(rng, n, w=32, h=32, t_max=2_000_000):
    rows = [
        (int(t), int(rng.integers(0, w)), int(rng.integers(0, h)), int(rng.integers(0, 2)))
        for t in sorted(rng.integers(0, t_max, size=n))
    ]
    return make_events(rows)


class TestLoadSave:
    def test_csv_round_trip(self, tmp_path):
        evs = make_events([(1000, 5, 7, 1), (2000, 0, 0, 0)])
        p = str(tmp_path / "e.csv")
        save_events(evs, p)
        got = load_events(p)
        np.testing.assert_array_equal(got, evs)

    def test_bin_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        evs = random_events(rng, 200, w=128, h=128)
        p = str(tmp_path / "e.bin")
        save_events(evs, p)
        np.testing.assert_array_equal(load_events(p), evs)

    def test_out_of_bounds_rejected(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("1000,128,0,1\n")
        with pytest.raises(EventFormatError, match="outside"):
            load_events(str(p))

    def test_malformed_row(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("1000,5\n")
        with pytest.raises(EventFormatError, match="4 fields"):
            load_events(str(p))

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        assert len(load_events(str(p))) == 0

    def test_unsorted_input_is_sorted_on_load(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("2000,1,1,0\n1000,2,2,1\n")
        got = load_events(str(p))
        assert list(got["t"]) == [1000, 2000]


class TestDenoise:
    def test_mutual_neighbors_retained(self):
        evs = make_events([(0, 5, 5, 0), (100, 6, 5, 1)])
        assert len(denoise(evs)) == 2

    def test_isolated_event_removed(self):
        evs = make_events([(0, 5, 5, 0)])
        assert len(denoise(evs)) == 0

    def test_far_apart_in_time_removed(self):
        evs = make_events([(0, 5, 5, 0), (2_000_001, 5, 5, 0)])
        assert len(denoise(evs, window_us=1_000_000)) == 0

    def test_spatially_distant_removed(self):
        evs = make_events([(0, 0, 0, 0), (10, 10, 10, 0)])
        assert len(denoise(evs, spatial_px=1)) == 0

    def test_matches_brute_force_on_random_stream(self):
        rng = np.random.default_rng(11)
        evs = random_events(rng, 200, w=32, h=32, t_max=2_000_000)
        got = denoise(evs, spatial_px=1, window_us=1_000_000)
        want = denoise_oracle(evs, 1, 1_000_000)
        np.testing.assert_array_equal(got, want)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_brute_force_various_windows(self, seed):
        rng = np.random.default_rng(seed)
        evs = random_events(rng, 120, w=8, h=8, t_max=500_000)
        for spatial, window in [(1, 100_000), (2, 50_000), (0, 1_000_000)]:
            got = denoise(evs, spatial_px=spatial, window_us=window)
            want = denoise_oracle(evs, spatial, window)
            np.testing.assert_array_equal(got, want)

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        evs = random_events(rng, 300)
        once = denoise(evs)
        twice = denoise(once)
        np.testing.assert_array_equal(once, twice)

    def test_output_sorted(self):
        rng = np.random.default_rng(6)
        out = denoise(random_events(rng, 300))
        assert np.all(np.diff(out["t"].astype(np.int64)) >= 0)


class TestDownsample:
    def test_boundary(self):
        evs = make_events([(0, 127, 0, 1)])
        out = downsample(evs, 4)
        assert (out["x"][0], out["y"][0]) == (31, 0)

    def test_identity_corner(self):
        evs = make_events([(0, 0, 0, 0)])
        out = downsample(evs, 4)
        assert (out["x"][0], out["y"][0]) == (0, 0)

    def test_exhaustive_range(self):
        evs = make_events([(i, i, i % 128, i % 2) for i in range(128)])
        out = downsample(evs, 4)
        assert out["x"].max() == 31 and out["y"].max() == 31

    def test_bad_factor(self):
        with pytest.raises(ValueError):
            downsample(make_events([(0, 0, 0, 0)]), 0)

    @given(x=st.integers(0, 127), factor=st.integers(1, 16))
    def test_floor_division_law(self, x, factor):
        evs = make_events([(0, x, x, 0)])
        out = downsample(evs, factor)
        assert out["x"][0] == x // factor


class TestBinFrames:
    def test_single_bin(self):
        evs = make_events([(0, 1, 1, 0), (500, 2, 2, 1), (999, 3, 3, 0)])
        f = bin_frames(evs, bin_ms=1, shape=(2, 8, 8))
        assert f.num_frames == 1
        assert f.frames.sum() == 3

    def test_boundary_split(self):
        evs = make_events([(0, 0, 0, 0), (1000, 0, 0, 0)])
        f = bin_frames(evs, bin_ms=1, shape=(2, 4, 4))
        assert f.num_frames == 2
        assert f.frames[0].sum() == 1 and f.frames[1].sum() == 1

    def test_count_conservation_random(self):
        rng = np.random.default_rng(9)
        evs = random_events(rng, 1000, w=16, h=16)
        f = bin_frames(evs, bin_ms=1, shape=(2, 16, 16))
        assert int(f.frames.sum()) == len(evs)

    def test_anchored_at_first_event(self):
        evs = make_events([(123_456, 0, 0, 0), (123_999, 1, 1, 1)])
        f = bin_frames(evs, bin_ms=1, shape=(2, 4, 4))
        assert f.num_frames == 1

    def test_empty(self):
        f = bin_frames(events.empty_events(), bin_ms=1, shape=(2, 4, 4))
        assert f.num_frames == 0

    @given(
        ts=st.lists(st.integers(0, 50_000), min_size=1, max_size=60),
        bin_ms=st.integers(1, 20),
    )
    @settings(max_examples=50, deadline=None)
    def test_conservation_property(self, ts, bin_ms):
        evs = make_events([(t, t % 4, t % 3, t % 2) for t in ts])
        f = bin_frames(evs, bin_ms=bin_ms, shape=(2, 4, 4))
        assert int(f.frames.sum()) == len(ts)

    def test_downsample_then_bin_equals_bin_then_blocksum(self):
        rng = np.random.default_rng(21)
        evs = random_events(rng, 800, w=128, h=128)
        small = bin_frames(downsample(evs, 4), bin_ms=1, shape=(2, 32, 32))
        big = bin_frames(evs, bin_ms=1, shape=(2, 128, 128))
        blocked = big.frames.reshape(big.num_frames, 2, 32, 4, 32, 4).sum(axis=(3, 5))
        np.testing.assert_array_equal(small.frames, blocked)


class TestFramesToSpikes:
    def test_count_binarized(self):
        frames = np.zeros((1, 2, 2, 2), dtype=np.int64)
        frames[0, 1, 0, 1] = 5
        st_ = frames_to_spikes(events.FrameTensor(frames=frames, bin_ms=1), 10)
        assert st_.total_spikes() == 1
        neuron = 1 * 4 + 0 * 2 + 1
        assert list(st_.times[neuron]) == [0]

    def test_all_zero(self):
        frames = np.zeros((3, 2, 2, 2), dtype=np.int64)
        st_ = frames_to_spikes(events.FrameTensor(frames=frames, bin_ms=1), 3)
        assert st_.total_spikes() == 0

    def test_spike_count_equals_nonzero_cells(self):
        rng = np.random.default_rng(13)
        frames = rng.integers(0, 3, size=(20, 2, 4, 4))
        ft = events.FrameTensor(frames=frames, bin_ms=1)
        limit = 12
        st_ = frames_to_spikes(ft, limit)
        assert st_.total_spikes() == int(np.count_nonzero(frames[:limit]))

    def test_indexing_is_bijection(self):
        # one event per cell of one frame -> every neuron fires exactly once
        frames = np.ones((1, 2, 3, 3), dtype=np.int64)
        st_ = frames_to_spikes(events.FrameTensor(frames=frames, bin_ms=1), 1)
        assert all(len(ts) == 1 for ts in st_.times)
        assert st_.size == 2 * 3 * 3
