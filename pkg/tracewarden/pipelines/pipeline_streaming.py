import json
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Deque, Dict, Iterable, List, Optional, TextIO, Tuple

import numpy as np

from ..config import StreamingConfig
from ..detectors.base import Detector, aggregate_tool_verdict
from ..errors import BackendUnavailable, InvalidEvent
from ..models.catalog import TechniqueCatalog
from ..models.events import EventTrace, NetworkEvent, TraceOrigin
from ..models.verdict import Verdict
from ..schedulers.scheduling_sliding_window import SlidingWindowScheduler
from ..utils.logging import get_logger

logger = get_logger(__name__)  # pylint: disable=invalid-name

DEFAULT_SESSION = "stream"


class AlertAction(str, Enum):
    RAISE = "raise"
    IGNORE = "ignore"


def alert_action(verdict: Verdict) -> AlertAction:
    return AlertAction.RAISE if verdict.is_malicious else AlertAction.IGNORE


@dataclass(frozen=True)
class Alert:
    session_id: str
    window_ref: Tuple[int, int]
    label: str
    timestamp: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "session_id": self.session_id,
            "window_ref": list(self.window_ref),
            "label": self.label,
            "timestamp": self.timestamp,
        }


@dataclass
class SessionReport:
    session_id: str
    verdicts: List[Verdict]
    alerts: List[Verdict]
    aggregate: Verdict
    events_seen: int
    late_events: int
    latency_mean_s: float = 0.0
    latency_max_s: float = 0.0
    latency_total_s: float = 0.0

    @property
    def windows(self) -> int:
        return len(self.verdicts)

    @property
    def invalid_windows(self) -> int:
        return sum(not v.valid for v in self.verdicts)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "session_id": self.session_id,
            "aggregate": self.aggregate.to_dict(),
            "counts": {
                "events_seen": self.events_seen,
                "windows": self.windows,
                "alerts": len(self.alerts),
                "invalid_windows": self.invalid_windows,
                "late_events": self.late_events,
            },
            "latency_s": {
                "mean": self.latency_mean_s,
                "max": self.latency_max_s,
                "total": self.latency_total_s,
            },
            "verdicts": [v.to_dict() for v in self.verdicts],
        }


@dataclass
class StreamSession:
    """
    One monitored session. Events are appended as they are observed; every `delta` events the most
    recent `window` events are handed to the detector as a self-contained trace.
    """

    session_id: str
    detector: Detector
    catalog: TechniqueCatalog
    scheduler: SlidingWindowScheduler = field(default_factory=SlidingWindowScheduler)
    reorder_slack_s: float = 0.1
    latch_alerts: bool = True
    on_alert: Optional[Callable[[Alert], None]] = None

    buffer: Deque[NetworkEvent] = field(default_factory=deque, init=False)
    events_seen: int = field(default=0, init=False)
    late_events: int = field(default=0, init=False)
    verdicts: List[Verdict] = field(default_factory=list, init=False)
    alerts: List[Verdict] = field(default_factory=list, init=False)
    latencies: List[float] = field(default_factory=list, init=False)
    _raised: set = field(default_factory=set, init=False, repr=False)
    _newest: float = field(default=float("-inf"), init=False, repr=False)

    @property
    def delta(self) -> int:
        return self.scheduler.delta

    @property
    def window(self) -> int:
        return self.scheduler.window

    def _insert(self, e: NetworkEvent) -> None:
        if e.timestamp >= self._newest:
            self._newest = e.timestamp
            self.buffer.append(e)
        elif self._newest - e.timestamp <= self.reorder_slack_s:
            # scan from the right for the slot after the last event not newer than e
            position = len(self.buffer)
            while position > 0 and self.buffer[position - 1].timestamp > e.timestamp:
                position -= 1
            self.buffer.insert(position, e)
        else:
            self.late_events += 1
            self.buffer.append(e.with_attrs(late="true"))
        # events before the last `window` can never be part of a later window
        while len(self.buffer) > self.window:
            self.buffer.popleft()

    def push_event(self, e: NetworkEvent) -> Optional[Verdict]:
        """Append one event; returns the window verdict when this event closes a window."""
        self.events_seen += 1
        self._insert(e)
        if not self.scheduler.should_trigger(self.events_seen):
            return None
        return self._run_window()

    def window_trace(self) -> EventTrace:
        size = min(self.window, self.events_seen)
        events = list(self.buffer)[-size:]
        return EventTrace(events=tuple(events), session_id=self.session_id, origin=TraceOrigin.PCAP_ONLY)

    def _run_window(self) -> Verdict:
        window_ref = self.scheduler.window_bounds(self.events_seen)
        trace = self.window_trace()
        start = time.perf_counter()
        try:
            verdict = self.detector.detect(trace, self.catalog)
        except BackendUnavailable as e:
            logger.warning(f"[{self.session_id}] window {window_ref} degraded: {e}")
            verdict = Verdict.invalid(raw_output=f"backend unavailable: {e}")
        self.latencies.append(time.perf_counter() - start)

        verdict = verdict.for_window(window_ref, trace_ref=self.session_id)
        self.verdicts.append(verdict)
        logger.debug(f"[{self.session_id}] window {window_ref} -> {verdict.label}")

        if self.alert_policy(verdict) is AlertAction.RAISE:
            alert = Alert(
                session_id=self.session_id,
                window_ref=window_ref,
                label=verdict.label,
                timestamp=trace.events[-1].timestamp if len(trace) else 0.0,
            )
            logger.warning(f"[{self.session_id}] ALERT {verdict.label} in events {window_ref[0]}-{window_ref[1]}")
            if self.on_alert is not None:
                self.on_alert(alert)
        return verdict

    def alert_policy(self, verdict: Verdict) -> AlertAction:
        """Raise on a malicious window. With latching, a technique already raised in this session is recorded only."""
        action = alert_action(verdict)
        if action is AlertAction.IGNORE:
            return action
        self.alerts.append(verdict)
        if self.latch_alerts and verdict.label in self._raised:
            return AlertAction.IGNORE
        self._raised.add(verdict.label)
        return AlertAction.RAISE

    def finalize(self) -> SessionReport:
        valid = [v for v in self.verdicts if v.valid]
        if not self.verdicts:
            aggregate = Verdict.benign(trace_ref=self.session_id)
        elif not valid:
            aggregate = Verdict.invalid(trace_ref=self.session_id, raw_output="no valid window verdict")
        else:
            aggregate = aggregate_tool_verdict(valid)
        latencies = np.asarray(self.latencies, dtype=float)
        return SessionReport(
            session_id=self.session_id,
            verdicts=list(self.verdicts),
            alerts=list(self.alerts),
            aggregate=aggregate,
            events_seen=self.events_seen,
            late_events=self.late_events,
            latency_mean_s=float(latencies.mean()) if latencies.size else 0.0,
            latency_max_s=float(latencies.max()) if latencies.size else 0.0,
            latency_total_s=float(latencies.sum()),
        )


class StreamingPipeline:
    """Routes a feed of trace-format event records to per-session `StreamSession`s."""

    def __init__(
        self,
        detector: Detector,
        catalog: TechniqueCatalog,
        scheduler: Optional[SlidingWindowScheduler] = None,
        reorder_slack_s: float = 0.1,
        latch_alerts: bool = True,
    ):
        self.detector = detector
        self.catalog = catalog
        self.scheduler = scheduler or SlidingWindowScheduler()
        self.reorder_slack_s = reorder_slack_s
        self.latch_alerts = latch_alerts
        self.sessions: Dict[str, StreamSession] = {}
        self._sink: Optional[TextIO] = None

    @classmethod
    def from_config(
        cls,
        config: StreamingConfig,
        detector: Detector,
        catalog: TechniqueCatalog,
        **kwargs,
    ) -> "StreamingPipeline":
        return cls(
            detector=detector,
            catalog=catalog,
            scheduler=SlidingWindowScheduler.from_config(config, **kwargs),
            reorder_slack_s=config.reorder_slack_s,
            latch_alerts=config.latch_alerts,
        )

    def _write_alert(self, alert: Alert) -> None:
        if self._sink is not None:
            self._sink.write(json.dumps(alert.to_dict()) + "\n")
            self._sink.flush()

    def session(self, session_id: str = DEFAULT_SESSION) -> StreamSession:
        if session_id not in self.sessions:
            self.sessions[session_id] = StreamSession(
                session_id=session_id,
                detector=self.detector,
                catalog=self.catalog,
                scheduler=self.scheduler,
                reorder_slack_s=self.reorder_slack_s,
                latch_alerts=self.latch_alerts,
                on_alert=self._write_alert,
            )
        return self.sessions[session_id]

    def push(self, event: NetworkEvent, session_id: str = DEFAULT_SESSION) -> Optional[Verdict]:
        return self.session(session_id).push_event(event)

    def finalize(self) -> Dict[str, SessionReport]:
        return {sid: s.finalize() for sid, s in self.sessions.items()}

    def __call__(self, feed: Iterable[str], sink: Optional[TextIO] = None) -> Dict[str, SessionReport]:
        r"""
        Consume a line-delimited feed until it ends.

        Args:
            feed (`Iterable[str]`):
                Trace-format JSON records, one per line. An optional `session_id` key selects the session;
                records without one go to `"stream"`.
            sink (`TextIO`, *optional*):
                Where alert records `{session_id, window_ref, label, timestamp}` are written as JSON lines.

        Returns:
            `Dict[str, SessionReport]`: one finalized report per session seen on the feed.
        """
        self._sink = sink
        try:
            for line_no, line in enumerate(feed, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    session_id = str(record.pop("session_id", DEFAULT_SESSION))
                    event = NetworkEvent.from_dict(record)
                except (AttributeError, KeyError, TypeError, ValueError, InvalidEvent) as e:
                    logger.warning(f"Skipping feed line {line_no}: {e}")
                    continue
                self.push(event, session_id)
        finally:
            self._sink = None
        return self.finalize()
