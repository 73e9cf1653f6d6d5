from typing import List, Sequence, Tuple, TypeVar

T = TypeVar("T")


def reference_windows(n: int, delta: int, window: int) -> List[Tuple[int, int]]:
    """
    Brute-force window schedule over a finished stream of `n` events: a window closes at every
    multiple of `delta` and covers the last `min(window, k * delta)` events. Bounds are 1-based
    and inclusive.
    """
    bounds = []
    for end in range(1, n + 1):
        if end % delta == 0:
            bounds.append((max(1, end - window + 1), end))
    return bounds


def slice_windows(events: Sequence[T], delta: int, window: int) -> List[Tuple[Tuple[int, int], Sequence[T]]]:
    return [((start, end), events[start - 1 : end]) for start, end in reference_windows(len(events), delta, window)]
