import io
import json

import numpy as np
import pytest

from tracewarden.detectors import Detector, RuleDetector
from tracewarden.errors import BackendUnavailable
from tracewarden.models.catalog import BENIGN, INVALID
from tracewarden.models.events import EventTrace, EventType, NetworkEvent, Transport
from tracewarden.models.verdict import Verdict
from tracewarden.pipelines import AlertAction, StreamingPipeline, StreamSession, alert_action
from tracewarden.schedulers import SlidingWindowScheduler, reference_windows
from tracewarden.synth import synth_technique

from .conftest import T0


class ScriptedDetector(Detector):
    """Returns labels from a script, one per call, and records the traces it was shown."""

    def __init__(self, labels=None, fail_on=()):
        self.labels = list(labels or [])
        self.fail_on = set(fail_on)
        self.seen = []

    def _detect(self, trace, catalog):
        call = len(self.seen)
        self.seen.append(trace)
        if call in self.fail_on:
            raise BackendUnavailable("scripted outage")
        label = self.labels[call] if call < len(self.labels) else BENIGN
        return Verdict(label=label, raw_output=label)


def _events(n, start=T0, step=0.01):
    return [
        NetworkEvent.create(start + i * step, EventType.UDP_DGRAM, "10.0.0.1", "10.0.0.2", 1000 + i, 9999, Transport.UDP)
        for i in range(n)
    ]


def _session(detector, catalog, delta=3, window=5, **kwargs):
    return StreamSession("s", detector, catalog, SlidingWindowScheduler(delta=delta, window=window), **kwargs)


@pytest.mark.parametrize("n,delta,window", [(0, 3, 5), (2, 3, 5), (17, 3, 5), (40, 10, 4), (25, 5, 25), (12, 1, 1)])
def test_windows_equal_brute_force(catalog, n, delta, window):
    detector = ScriptedDetector()
    session = _session(detector, catalog, delta, window)
    events = _events(n)
    verdicts = [v for v in (session.push_event(e) for e in events) if v is not None]

    expected = reference_windows(n, delta, window)
    assert [v.window_ref for v in verdicts] == expected
    assert [tuple(t.events) for t in detector.seen] == [tuple(events[s - 1 : e]) for s, e in expected]
    assert all(t.session_id == "s" for t in detector.seen)

class WindowRecorder(Detector):
    """Keeps only the bounds of each window it is shown."""

    def __init__(self):
        self.bounds = []

    def _detect(self, trace, catalog):
        self.bounds.append((trace.events[0], trace.events[-1], len(trace)))
        return Verdict.benign()


FEED = _events(2000, step=0.001)


def test_windows_equal_brute_force_random_configs(catalog):
    rng = np.random.default_rng(20240611)
    for _ in range(500):
        n = int(rng.integers(0, 2001))
        delta = int(rng.choice([1, 10, 50]))
        window = int(rng.choice([1, 100, 200]))
        detector = WindowRecorder()
        session = _session(detector, catalog, delta, window)
        refs = [v.window_ref for v in (session.push_event(e) for e in FEED[:n]) if v is not None]

        expected = reference_windows(n, delta, window)
        assert refs == expected, (n, delta, window)
        for (first, last, size), (s, e) in zip(detector.bounds, expected):
            assert first is FEED[s - 1] and last is FEED[e - 1] and size == e - s + 1



def test_alert_action():
    assert alert_action(Verdict("Web_Protocols")) is AlertAction.RAISE
    assert alert_action(Verdict.benign()) is AlertAction.IGNORE
    assert alert_action(Verdict.invalid()) is AlertAction.IGNORE


def test_latched_alerts_raise_once_per_technique(catalog):
    raised = []
    detector = ScriptedDetector(["Web_Protocols", "Web_Protocols", "Standard_Encoding", BENIGN])
    session = _session(detector, catalog, delta=2, window=2, on_alert=raised.append)
    for e in _events(8):
        session.push_event(e)
    assert [a.label for a in raised] == ["Web_Protocols", "Standard_Encoding"]
    assert [a.window_ref for a in raised] == [(1, 2), (5, 6)]
    report = session.finalize()
    assert len(report.alerts) == 3
    assert report.aggregate.label == "Web_Protocols"


def test_unlatched_alerts_raise_every_time(catalog):
    raised = []
    detector = ScriptedDetector(["Web_Protocols", "Web_Protocols"])
    session = _session(detector, catalog, delta=2, window=2, latch_alerts=False, on_alert=raised.append)
    for e in _events(4):
        session.push_event(e)
    assert len(raised) == 2


def test_reordering_within_slack(catalog):
    detector = ScriptedDetector()
    session = _session(detector, catalog, delta=3, window=3, reorder_slack_s=0.1)
    a, b, c = _events(3, step=0.05)
    for e in (a, c, b):
        session.push_event(e)
    assert list(detector.seen[0].events) == [a, b, c]
    assert session.late_events == 0


def test_late_event_is_marked_and_appended(catalog):
    detector = ScriptedDetector()
    session = _session(detector, catalog, delta=3, window=3, reorder_slack_s=0.1)
    a, b = _events(2, start=T0 + 10)
    straggler = _events(1, start=T0)[0]
    for e in (a, b, straggler):
        session.push_event(e)
    window = detector.seen[0].events
    assert window[-1].attr("late") == "true"
    assert window[-1].timestamp == straggler.timestamp
    assert session.late_events == 1
    assert session.finalize().late_events == 1


def test_backend_outage_degrades_single_window(catalog):
    detector = ScriptedDetector(["Web_Protocols", "Web_Protocols"], fail_on={0})
    session = _session(detector, catalog, delta=2, window=2)
    for e in _events(4):
        session.push_event(e)
    assert [v.label for v in session.verdicts] == [INVALID, "Web_Protocols"]
    report = session.finalize()
    assert report.invalid_windows == 1
    assert report.aggregate.label == "Web_Protocols"


def test_finalize_without_windows_is_benign(catalog):
    session = _session(ScriptedDetector(), catalog, delta=10, window=10)
    for e in _events(4):
        session.push_event(e)
    report = session.finalize()
    assert report.windows == 0
    assert report.aggregate.label == BENIGN
    assert report.events_seen == 4


def test_finalize_with_only_invalid_windows(catalog):
    session = _session(ScriptedDetector(fail_on={0, 1}), catalog, delta=1, window=1)
    for e in _events(2):
        session.push_event(e)
    report = session.finalize()
    assert report.aggregate.label == INVALID
    counts = report.to_dict()["counts"]
    assert (counts["windows"], counts["invalid_windows"]) == (2, 2)


def _feed_lines(trace, session_id=None):
    for e in trace:
        record = e.to_dict()
        if session_id is not None:
            record["session_id"] = session_id
        yield json.dumps(record)


def test_pipeline_routes_sessions_and_writes_alerts(catalog):
    hostile = synth_technique("Network_Device_Configuration_Dump", 5)
    quiet = EventTrace.from_events(_events(len(hostile)))
    feed = list(_feed_lines(hostile, "agent-a")) + list(_feed_lines(quiet, "agent-b")) + ["", "{not json"]
    sink = io.StringIO()
    pipeline = StreamingPipeline(RuleDetector(), catalog, SlidingWindowScheduler(delta=len(hostile), window=len(hostile)))

    reports = pipeline(feed, sink=sink)

    assert set(reports) == {"agent-a", "agent-b"}
    assert reports["agent-a"].aggregate.label == "Network_Device_Configuration_Dump"
    assert reports["agent-b"].aggregate.label == BENIGN
    alerts = [json.loads(line) for line in sink.getvalue().splitlines()]
    assert [(a["session_id"], a["label"], a["window_ref"]) for a in alerts] == [
        ("agent-a", "Network_Device_Configuration_Dump", [1, len(hostile)])
    ]
    assert pipeline._sink is None


def test_records_without_session_go_to_default(catalog):
    pipeline = StreamingPipeline(ScriptedDetector(), catalog, SlidingWindowScheduler(delta=2, window=2))
    reports = pipeline(_feed_lines(EventTrace.from_events(_events(4))))
    assert list(reports) == ["stream"]
    assert reports["stream"].windows == 2
