# Adapted from the mitmproxy FlowReader export loop used for mobile IDS flow processing
import os
from typing import Any, Iterable, Iterator, List, Optional, Union

from ..models.events import DecryptedRecord, Direction
from ..utils.logging import get_logger
from .flows import truncate_utf8

logger = get_logger(__name__)  # pylint: disable=invalid-name


def _body_text(message: Any, cap: int) -> str:
    raw = getattr(message, "raw_content", None)
    if raw is None:
        raw = getattr(message, "content", None) or b""
    if isinstance(raw, bytes):
        # decode at most cap + 4 bytes; truncate_utf8 trims the partial tail
        raw = raw[: cap + 4].decode("utf-8", errors="replace")
    return truncate_utf8(str(raw), cap)


def _peer(conn: Any) -> Optional[tuple]:
    if conn is None:
        return None
    return getattr(conn, "peername", None) or getattr(conn, "address", None)


def flow_to_records(flow: Any, body_cap: int = 512) -> List[DecryptedRecord]:
    """
    One HTTP flow becomes a request record and, when a response was seen, a response record.
    Flows without a start timestamp are skipped.
    """
    request = flow.request
    if request is None or request.timestamp_start is None:
        return []

    client_peer = _peer(flow.client_conn)
    server_peer = _peer(flow.server_conn)
    client = str(client_peer[0]) if client_peer else ""
    server = str(server_peer[0]) if server_peer else str(request.host)
    server_port = int(server_peer[1]) if server_peer else int(request.port)

    records = [
        DecryptedRecord(
            timestamp=float(request.timestamp_start),
            direction=Direction.REQUEST,
            client=client,
            server=server,
            server_port=server_port,
            host=str(getattr(request, "pretty_host", None) or request.host),
            path=str(request.path),
            method=str(request.method),
            body_excerpt=_body_text(request, body_cap),
        ).validate()
    ]

    response = getattr(flow, "response", None)
    if response is not None and response.timestamp_start is not None:
        end = response.timestamp_end or response.timestamp_start
        records.append(
            DecryptedRecord(
                timestamp=float(end),
                direction=Direction.RESPONSE,
                client=client,
                server=server,
                server_port=server_port,
                status=int(response.status_code),
                body_excerpt=_body_text(response, body_cap),
                duration_ms=max(0.0, (float(end) - float(request.timestamp_start)) * 1000.0),
            ).validate()
        )
    return records


def iter_flow_records(flows: Iterable[Any], body_cap: int = 512) -> Iterator[DecryptedRecord]:
    for flow in flows:
        if getattr(flow, "type", "http") != "http":
            continue
        yield from flow_to_records(flow, body_cap)


def convert_mitm_flows(path: Union[str, os.PathLike], body_cap: int = 512) -> List[DecryptedRecord]:
    """Read a mitmproxy native dump and return flow-log records sorted by timestamp."""
    try:
        from mitmproxy.io import FlowReader
    except ImportError as e:
        raise ImportError(
            "Converting mitmproxy dumps requires mitmproxy. Install it with `pip install tracewarden[mitm]`."
        ) from e

    with open(path, "rb") as f:
        records = list(iter_flow_records(FlowReader(f).stream(), body_cap))
    records.sort(key=lambda r: r.timestamp)
    logger.info(f"Converted {len(records)} records from {os.fspath(path)}")
    return records
