import json
import re
from datetime import datetime, timezone, tzinfo
from functools import lru_cache
from typing import List, Optional, Tuple, Union
from zoneinfo import ZoneInfo

import numpy as np

from ..models.events import EventTrace, EventType, NetworkEvent
from . import logging

logger = logging.get_logger(__name__)

TzLike = Union[str, tzinfo, None]

TRUNCATION_HEADER = "[... {count} earlier events truncated]"

_NEEDS_QUOTES = re.compile(r"[\s\"']")
_ANSWER_KEY = re.compile(r"^answer_ip(\d*)$")


@lru_cache(maxsize=32)
def _zone(name: str) -> tzinfo:
    if name.upper() == "UTC":
        return timezone.utc
    return ZoneInfo(name)


def resolve_tz(tz: TzLike) -> tzinfo:
    if tz is None:
        return timezone.utc
    if isinstance(tz, str):
        return _zone(tz)
    return tz


def format_clock(timestamp: float, tz: TzLike = None) -> str:
    return datetime.fromtimestamp(timestamp, tz=resolve_tz(tz)).strftime("%H:%M:%S")


def format_endpoint(addr: str, port: int) -> str:
    if ":" in addr:
        return f"[{addr}]:{port}"
    return f"{addr}:{port}"


def format_value(value: str) -> str:
    if value == "" or _NEEDS_QUOTES.search(value):
        return json.dumps(value, ensure_ascii=False)
    return value


def format_attr(key: str, value: str) -> str:
    if key == "duration_ms":
        return f"dur={format_value(value)}ms"
    match = _ANSWER_KEY.match(key)
    if match:
        key = "ip" + match.group(1)
    return f"{key}={format_value(value)}"


def _pairs(attrs, skip: Tuple[str, ...] = ()) -> List[str]:
    return [format_attr(k, v) for k, v in attrs if k not in skip]


def summarize_attrs(e: NetworkEvent) -> str:
    """The semantic summary following the protocol column."""
    attrs = e.attr_map
    parts: List[str]
    if e.event_type is EventType.HTTP_REQ and attrs.get("method"):
        target = attrs.get("host", "") + attrs.get("path", "")
        parts = [format_value(attrs["method"])]
        if target:
            parts.append(format_value(target))
        parts += _pairs(e.attrs, skip=("method", "host", "path"))
    elif e.event_type is EventType.ARP_REQ:
        parts = [f"who-has {e.dst}"] + _pairs(e.attrs)
    elif e.event_type is EventType.ARP_REPLY and attrs.get("mac"):
        parts = [f"{e.src} is-at {attrs['mac']}"] + _pairs(e.attrs, skip=("mac",))
    else:
        parts = _pairs(e.attrs)
    return " ".join(parts)


def _line_body(e: NetworkEvent, tz: tzinfo) -> str:
    head = (
        f"{format_clock(e.timestamp, tz)} {e.event_type.value} "
        f"{format_endpoint(e.src, e.sport)}->{format_endpoint(e.dst, e.dport)} {e.transport.value}"
    )
    summary = summarize_attrs(e)
    return f"{head} {summary}" if summary else head


def index_width(count: int) -> int:
    return max(2, len(str(count)))


def serialize_event(e: NetworkEvent, index: int, width: int = 2, tz: TzLike = None) -> str:
    if index < 1:
        raise ValueError(f"index must be >= 1, got {index}")
    if width < len(str(index)):
        raise ValueError(f"width {width} is too narrow for index {index}")
    return f"[{index:0{width}d}] {_line_body(e, resolve_tz(tz))}"


def _kept_count(body_lengths: np.ndarray, budget: int) -> int:
    """Largest k such that the last k events plus the truncation header fit in `budget` characters."""
    total = len(body_lengths)
    if total == 0:
        return 0
    # cost[k-1] = characters for the last k lines without any header
    k = np.arange(1, total + 1)
    widths = np.array([index_width(int(i)) for i in k])
    tail = np.cumsum(body_lengths[::-1])
    cost = tail + k * (widths + 3) + (k - 1)
    if cost[-1] <= budget:
        return total
    header = np.array([len(TRUNCATION_HEADER.format(count=total - i)) + 1 for i in k])
    fits = np.nonzero(cost + header <= budget)[0]
    return int(fits[-1]) + 1 if len(fits) else 0


def serialize_trace(trace: EventTrace, tz: TzLike = None, budget: Optional[int] = None) -> str:
    """
    Render a trace one event per line, indexed from 1.

    When the text would exceed `budget` characters the oldest events are dropped and a truncation
    header takes their place; the survivors are re-indexed from 1.
    """
    if not len(trace):
        return ""
    zone = resolve_tz(tz)
    bodies = [_line_body(e, zone) for e in trace.events]

    kept = len(bodies)
    if budget is not None:
        kept = _kept_count(np.array([len(b) for b in bodies], dtype=np.int64), budget)

    dropped = len(bodies) - kept
    lines = []
    if dropped:
        lines.append(TRUNCATION_HEADER.format(count=dropped))
        logger.info(f"Serialized trace truncated: {dropped} of {len(bodies)} events dropped to fit {budget} chars")
    width = index_width(kept)
    lines += [f"[{i:0{width}d}] {body}" for i, body in enumerate(bodies[dropped:], start=1)]
    return "\n".join(lines)
