import json

import numpy as np
import pytest

from tracewarden.errors import InvalidRecord, MalformedLine
from tracewarden.loaders.flows import (
    merge,
    parse_flow_log,
    record_from_dict,
    to_event,
    truncate_utf8,
    write_flow_log,
)
from tracewarden.models.events import (
    DecryptedRecord,
    Direction,
    EventTrace,
    EventType,
    NetworkEvent,
    TraceOrigin,
    Transport,
)

REQUEST = {
    "ts": 100.0, "direction": "request", "client": "172.25.7.2", "server": "172.66.0.243",
    "server_port": 443, "method": "POST", "host": "api.llm-provider.example", "path": "/v1/chat/completions",
}
RESPONSE = {
    "ts": 100.5, "direction": "response", "client": "172.25.7.2", "server": "172.66.0.243",
    "server_port": 443, "status": 200, "duration_ms": 500.04,
}


def _lines(*rows) -> bytes:
    return b"".join((r if isinstance(r, bytes) else json.dumps(r).encode()) + b"\n" for r in rows)


def test_parse_valid_log():
    records = parse_flow_log(_lines(REQUEST, RESPONSE))
    assert [r.direction for r in records] == [Direction.REQUEST, Direction.RESPONSE]
    assert records[1].status == 200


def test_bad_lines_are_skipped_and_reported():
    errors = []
    src = _lines(REQUEST, b"{not json", {"direction": "response"}, b"", RESPONSE)
    records = parse_flow_log(src, errors=errors)
    assert len(records) == 2
    assert [e.line_no for e in errors] == [2, 3]
    assert all(isinstance(e, MalformedLine) for e in errors)


def test_parse_from_path(tmp_path):
    path = tmp_path / "flows.jsonl"
    path.write_bytes(_lines(REQUEST))
    assert len(parse_flow_log(path)) == 1
    with path.open("rb") as f:
        assert len(parse_flow_log(f)) == 1


def test_request_with_status_is_invalid():
    with pytest.raises(InvalidRecord):
        record_from_dict({**REQUEST, "status": 200})


def test_body_excerpt_cap_respects_utf8():
    assert truncate_utf8("héllo", 2) == "h"
    record = record_from_dict({**REQUEST, "body_excerpt": "é" * 10}, body_excerpt_cap=5)
    assert record.body_excerpt == "éé"


def test_to_event_request_and_response():
    req = to_event(record_from_dict(REQUEST))
    assert (req.event_type, req.src, req.sport, req.dst, req.dport) == (
        EventType.HTTP_REQ, "172.25.7.2", 0, "172.66.0.243", 443,
    )
    assert req.attr("method") == "POST"
    resp = to_event(record_from_dict(RESPONSE))
    assert (resp.event_type, resp.src, resp.sport, resp.dst, resp.dport) == (
        EventType.HTTP_RESP, "172.66.0.243", 443, "172.25.7.2", 0,
    )
    assert resp.attr("duration_ms") == "500.0"


def _packet(ts, tag):
    return NetworkEvent.create(ts, EventType.UDP_DGRAM, tag, "10.0.0.9", 1, 9, Transport.UDP)


def _record(ts, tag):
    return DecryptedRecord(ts, Direction.REQUEST, tag, "10.0.0.9", 443, method="GET")


def test_packets_win_timestamp_ties():
    trace = EventTrace.from_events([_packet(1.0, "p0"), _packet(2.0, "p1")], session_id="s")
    merged = merge(trace, [_record(2.0, "r0"), _record(0.5, "r1")])
    assert [e.src for e in merged] == ["r1", "p0", "p1", "r0"]
    assert merged.origin is TraceOrigin.MERGED
    assert merged.session_id == "s"


def test_merge_empty_sides():
    trace = EventTrace.from_events([_packet(1.0, "p0")])
    assert [e.src for e in merge(trace, [])] == ["p0"]
    assert [e.src for e in merge(EventTrace(), [_record(3.0, "r0")])] == ["r0"]


def test_merge_properties_randomized():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n_e, n_d = int(rng.integers(0, 501)), int(rng.integers(0, 101))
        packets = sorted(float(t) for t in rng.integers(0, 200, n_e))
        records = [float(t) for t in rng.integers(0, 200, n_d)]
        trace = EventTrace.from_events(_packet(t, f"p{i}") for i, t in enumerate(packets))
        merged = merge(trace, [_record(t, f"r{i}") for i, t in enumerate(records)])

        assert len(merged) == n_e + n_d
        assert merged.is_ordered()
        tags = [e.src for e in merged]
        assert [t for t in tags if t.startswith("p")] == [f"p{i}" for i in range(n_e)]
        # records keep timestamp order, stable on ties
        expected_records = [f"r{i}" for i in sorted(range(n_d), key=lambda i: (records[i], i))]
        assert [t for t in tags if t.startswith("r")] == expected_records
        for a, b in zip(merged.events, merged.events[1:]):
            if a.timestamp == b.timestamp:
                assert not (a.src.startswith("r") and b.src.startswith("p"))


def test_write_flow_log_round_trip(tmp_path):
    records = parse_flow_log(_lines(REQUEST, RESPONSE))
    path = tmp_path / "out.jsonl"
    assert write_flow_log(records, path) == 2
    assert parse_flow_log(path) == records
