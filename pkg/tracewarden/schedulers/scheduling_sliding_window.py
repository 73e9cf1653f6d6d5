from typing import Iterator, Optional, Tuple

from ..config import StreamingConfig
from ..utils.logging import get_logger

logger = get_logger(__name__)  # pylint: disable=invalid-name


class SlidingWindowScheduler:
    """
    Every `delta` newly observed events, run detection over the most recent `window` events.
    Event counts are 1-based; window bounds are inclusive.
    """

    def __init__(self, delta: int = 50, window: int = 100):
        if delta < 1:
            raise ValueError(f"delta must be >= 1, got {delta}")
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        if window < delta:
            logger.warning(
                f"window ({window}) is smaller than delta ({delta}); "
                f"{delta - window} events per step are never inspected"
            )
        self.delta = delta
        self.window = window

    @classmethod
    def from_config(cls, config: Optional[StreamingConfig] = None, **kwargs) -> "SlidingWindowScheduler":
        config = config or StreamingConfig()
        return cls(delta=kwargs.get("delta", config.delta), window=kwargs.get("window", config.window))

    def should_trigger(self, events_seen: int) -> bool:
        return events_seen > 0 and events_seen % self.delta == 0

    def window_bounds(self, events_seen: int) -> Tuple[int, int]:
        size = min(self.window, events_seen)
        return (events_seen - size + 1, events_seen)

    def trigger_count(self, n: int) -> int:
        return n // self.delta

    def windows(self, n: int) -> Iterator[Tuple[int, int]]:
        for end in range(self.delta, n + 1, self.delta):
            yield self.window_bounds(end)
