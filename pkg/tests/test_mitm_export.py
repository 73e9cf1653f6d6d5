from types import SimpleNamespace

import pytest

from tracewarden.loaders.mitm_export import flow_to_records, iter_flow_records
from tracewarden.models.events import Direction


def _flow(response=True, body=b'{"messages": []}', flow_type="http"):
    request = SimpleNamespace(
        timestamp_start=100.0, host="172.66.0.243", pretty_host="api.llm-provider.example", port=443,
        path="/v1/chat/completions", method="POST", raw_content=body,
    )
    reply = SimpleNamespace(timestamp_start=100.2, timestamp_end=100.25, status_code=200, raw_content="ok".encode())
    return SimpleNamespace(
        type=flow_type,
        request=request,
        response=reply if response else None,
        client_conn=SimpleNamespace(peername=("172.25.7.2", 40000)),
        server_conn=SimpleNamespace(peername=("172.66.0.243", 443)),
    )


def test_flow_becomes_request_and_response():
    req, resp = flow_to_records(_flow())
    assert (req.direction, req.host, req.method, req.server_port) == (Direction.REQUEST, "api.llm-provider.example", "POST", 443)
    assert req.client == "172.25.7.2"
    assert resp.direction is Direction.RESPONSE
    assert resp.timestamp == 100.25
    assert resp.duration_ms == pytest.approx(250.0)
    assert resp.body_excerpt == "ok"


def test_body_is_capped():
    req, = flow_to_records(_flow(response=False, body=b"x" * 4096), body_cap=16)
    assert req.body_excerpt == "x" * 16


def test_non_http_and_unstarted_flows_are_skipped():
    unstarted = _flow()
    unstarted.request.timestamp_start = None
    flows = [_flow(flow_type="tcp"), unstarted, _flow(response=False)]
    assert len(list(iter_flow_records(flows))) == 1


def test_missing_server_peer_falls_back_to_request_host():
    flow = _flow(response=False)
    flow.server_conn = None
    req, = flow_to_records(flow)
    assert (req.server, req.server_port) == ("172.66.0.243", 443)
