import heapq
import io
import json
import os
from dataclasses import replace
from typing import Any, BinaryIO, Iterable, List, Mapping, Optional, Sequence, Union

from ..errors import InvalidRecord, MalformedLine
from ..models.events import (
    DecryptedRecord,
    Direction,
    EventTrace,
    EventType,
    NetworkEvent,
    TraceOrigin,
    Transport,
)
from ..utils.logging import get_logger

logger = get_logger(__name__)  # pylint: disable=invalid-name

FlowLogSource = Union[str, os.PathLike, bytes, bytearray, BinaryIO]


def truncate_utf8(text: str, cap: int) -> str:
    """Cut `text` to at most `cap` encoded bytes without splitting a character."""
    encoded = text.encode("utf-8")
    if len(encoded) <= cap:
        return text
    return encoded[:cap].decode("utf-8", errors="ignore")


def _optional_float(value: Any) -> Optional[float]:
    return None if value is None else float(value)


def record_from_dict(data: Mapping[str, Any], body_excerpt_cap: Optional[int] = None) -> DecryptedRecord:
    try:
        direction = Direction(data["direction"])
        status = data.get("status")
        record = DecryptedRecord(
            timestamp=float(data["ts"]),
            direction=direction,
            client=str(data["client"]),
            server=str(data["server"]),
            server_port=int(data["server_port"]),
            host=str(data.get("host") or ""),
            path=str(data.get("path") or ""),
            method=data.get("method"),
            status=None if status is None else int(status),
            body_excerpt=str(data.get("body_excerpt") or ""),
            duration_ms=_optional_float(data.get("duration_ms")),
        )
    except KeyError as e:
        raise InvalidRecord(f"missing key {e.args[0]!r}") from e
    except (TypeError, ValueError) as e:
        raise InvalidRecord(str(e)) from e
    if body_excerpt_cap is not None and record.body_excerpt:
        capped = truncate_utf8(record.body_excerpt, body_excerpt_cap)
        if capped != record.body_excerpt:
            record = replace(record, body_excerpt=capped)
    return record.validate()


def _read_lines(src: FlowLogSource) -> Iterable[bytes]:
    if isinstance(src, (bytes, bytearray)):
        yield from io.BytesIO(bytes(src))
    elif isinstance(src, (str, os.PathLike)):
        with open(src, "rb") as f:
            yield from f
    else:
        yield from src


def parse_flow_log(
    src: FlowLogSource,
    errors: Optional[List[MalformedLine]] = None,
    body_excerpt_cap: Optional[int] = None,
) -> List[DecryptedRecord]:
    """
    Parse a flow log (UTF-8 JSON lines) into records, in file order.

    A bad line is logged and skipped; pass a list as `errors` to collect the `MalformedLine` errors.
    Blank lines are ignored.
    """
    records: List[DecryptedRecord] = []
    for line_no, raw in enumerate(_read_lines(src), start=1):
        if not raw.strip():
            continue
        try:
            data = json.loads(raw.decode("utf-8"))
            if not isinstance(data, dict):
                raise InvalidRecord(f"expected a JSON object, got {type(data).__name__}")
            records.append(record_from_dict(data, body_excerpt_cap))
        except (UnicodeDecodeError, json.JSONDecodeError, InvalidRecord) as e:
            error = MalformedLine(line_no, str(e))
            logger.warning(f"Skipping flow-log {error}")
            if errors is not None:
                errors.append(error)
    return records


def to_event(r: DecryptedRecord) -> NetworkEvent:
    if r.direction is Direction.REQUEST:
        return NetworkEvent.create(
            r.timestamp,
            EventType.HTTP_REQ,
            r.client,
            r.server,
            0,
            r.server_port,
            Transport.TCP,
            {
                "method": r.method,
                "host": r.host or None,
                "path": r.path or None,
                "body_excerpt": r.body_excerpt or None,
            },
        )
    return NetworkEvent.create(
        r.timestamp,
        EventType.HTTP_RESP,
        r.server,
        r.client,
        r.server_port,
        0,
        Transport.TCP,
        {
            "status": r.status,
            "body_excerpt": r.body_excerpt or None,
            "duration_ms": None if r.duration_ms is None else f"{r.duration_ms:.1f}",
        },
    )


def merge(packet_trace: EventTrace, records: Sequence[DecryptedRecord]) -> EventTrace:
    """
    Insert decrypted records into a packet-derived trace by timestamp.

    Nothing is replaced. On equal timestamps packet-derived events come first; each source keeps
    its own relative order.
    """
    record_events = list(EventTrace.from_events(to_event(r) for r in records).events)
    # heapq.merge takes from the earlier iterable on ties
    merged = heapq.merge(packet_trace.events, record_events, key=lambda e: e.timestamp)
    return EventTrace(
        events=tuple(merged),
        session_id=packet_trace.session_id,
        origin=TraceOrigin.MERGED,
    )


def write_flow_log(records: Iterable[DecryptedRecord], path: Union[str, os.PathLike]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count
