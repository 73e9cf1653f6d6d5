import numpy as np
import pytest

from tracewarden.config import StreamingConfig
from tracewarden.schedulers import SlidingWindowScheduler, reference_windows, slice_windows


def test_defaults_from_config():
    scheduler = SlidingWindowScheduler.from_config(StreamingConfig())
    assert (scheduler.delta, scheduler.window) == (50, 100)
    assert SlidingWindowScheduler.from_config(None, delta=7).delta == 7


@pytest.mark.parametrize("delta,window", [(0, 10), (5, 0), (-1, -1)])
def test_rejects_non_positive_sizes(delta, window):
    with pytest.raises(ValueError):
        SlidingWindowScheduler(delta=delta, window=window)


def test_first_windows_grow_until_full():
    scheduler = SlidingWindowScheduler(delta=50, window=100)
    assert list(scheduler.windows(250)) == [(1, 50), (1, 100), (51, 150), (101, 200), (151, 250)]


def test_trailing_events_do_not_trigger():
    scheduler = SlidingWindowScheduler(delta=50, window=100)
    assert scheduler.trigger_count(149) == 2
    assert not scheduler.should_trigger(149)
    assert scheduler.should_trigger(150)
    assert not scheduler.should_trigger(0)


def test_window_smaller_than_delta_skips_events():
    scheduler = SlidingWindowScheduler(delta=10, window=4)
    assert list(scheduler.windows(30)) == [(7, 10), (17, 20), (27, 30)]


def test_matches_brute_force_on_random_configs():
    rng = np.random.default_rng(3)
    for _ in range(300):
        n = int(rng.integers(0, 400))
        delta = int(rng.integers(1, 60))
        window = int(rng.integers(1, 120))
        scheduler = SlidingWindowScheduler(delta=delta, window=window)
        windows = list(scheduler.windows(n))
        assert windows == reference_windows(n, delta, window)
        assert len(windows) == scheduler.trigger_count(n) == n // delta
        for start, end in windows:
            assert end - start + 1 == min(window, end)


def test_slice_windows():
    events = list(range(1, 8))
    assert slice_windows(events, delta=3, window=4) == [((1, 3), [1, 2, 3]), ((3, 6), [3, 4, 5, 6])]
