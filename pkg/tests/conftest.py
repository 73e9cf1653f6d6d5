import pytest

from tracewarden.models.catalog import TechniqueCatalog
from tracewarden.models.events import EventTrace, EventType, NetworkEvent, Transport

# 2024-05-01 12:01:03 UTC
T0 = 1_714_564_863.0


def pytest_addoption(parser):
    parser.addoption("--run-benchmarks", action="store_true", default=False, help="run throughput benchmarks")
    parser.addoption(
        "--run-privileged", action="store_true", default=False, help="run capture tests that need root"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "benchmark: throughput benchmark, needs --run-benchmarks")
    config.addinivalue_line("markers", "privileged: needs root and real capture tools, needs --run-privileged")


def pytest_collection_modifyitems(config, items):
    skip_bench = pytest.mark.skip(reason="needs --run-benchmarks")
    skip_priv = pytest.mark.skip(reason="needs --run-privileged")
    for item in items:
        if "benchmark" in item.keywords and not config.getoption("--run-benchmarks"):
            item.add_marker(skip_bench)
        if "privileged" in item.keywords and not config.getoption("--run-privileged"):
            item.add_marker(skip_priv)


@pytest.fixture
def catalog() -> TechniqueCatalog:
    return TechniqueCatalog.load()


@pytest.fixture
def dns_pair() -> EventTrace:
    query = NetworkEvent.create(
        T0, EventType.DNS_Q, "172.25.7.2", "8.8.8.8", 53122, 53, Transport.UDP, {"qname": "api.example.com"}
    )
    answer = NetworkEvent.create(
        T0 + 0.02, EventType.DNS_A, "8.8.8.8", "172.25.7.2", 53, 53122, Transport.UDP,
        {"answer_ip": "93.184.216.34"},
    )
    return EventTrace.from_events([query, answer], session_id="dns_pair")
