import json
import os
from pathlib import Path
from typing import Iterable, Iterator, Optional, TextIO, Union

from ..models.events import EventTrace, NetworkEvent, TraceOrigin

PathLike = Union[str, os.PathLike]


def event_to_line(e: NetworkEvent) -> str:
    return json.dumps(e.to_dict(), ensure_ascii=False)


def iter_trace_lines(f: Iterable[str]) -> Iterator[NetworkEvent]:
    for line in f:
        line = line.strip()
        if line:
            yield NetworkEvent.from_dict(json.loads(line))


def write_events(events: Iterable[NetworkEvent], f: TextIO) -> int:
    count = 0
    for e in events:
        f.write(event_to_line(e) + "\n")
        count += 1
    return count


def save_trace(trace: EventTrace, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        write_events(trace.events, f)
    return path


def load_trace(
    path: PathLike,
    origin: Union[TraceOrigin, str] = TraceOrigin.PCAP_ONLY,
    session_id: Optional[str] = None,
) -> EventTrace:
    """Read a trace JSON-lines file. The session id defaults to the file stem."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        events = list(iter_trace_lines(f))
    return EventTrace.from_events(
        events,
        session_id=path.stem if session_id is None else session_id,
        origin=origin,
    )


def write_json_lines(records: Iterable[dict], path: PathLike) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_json_lines(path: PathLike) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)
