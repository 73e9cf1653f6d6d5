from .scheduler_utils import reference_windows, slice_windows
from .scheduling_sliding_window import SlidingWindowScheduler
