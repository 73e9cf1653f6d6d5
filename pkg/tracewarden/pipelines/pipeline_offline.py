from dataclasses import dataclass
from typing import Optional, Sequence

from ..config import TracewardenConfig
from ..detectors.base import Detector
from ..loaders.flows import FlowLogSource, merge, parse_flow_log
from ..loaders.pcap import CaptureSource, DecodeStats, FilterPolicy, extract_events_with_stats
from ..models.catalog import TechniqueCatalog
from ..models.events import DecryptedRecord, EventTrace
from ..models.verdict import Verdict
from ..utils.logging import get_logger
from ..utils.prompt import build_prompt
from ..utils.render import serialize_trace

logger = get_logger(__name__)  # pylint: disable=invalid-name


@dataclass
class TracePipelineOutput:
    trace: EventTrace
    text: str
    verdict: Verdict
    stats: Optional[DecodeStats] = None

    def prompt(self, catalog: TechniqueCatalog) -> str:
        return build_prompt(catalog, self.text)


class TracePipeline:
    """Capture (plus optional flow log) to trace, serialized text and a verdict, in one call."""

    def __init__(
        self,
        detector: Detector,
        catalog: TechniqueCatalog,
        policy: Optional[FilterPolicy] = None,
        tz: str = "UTC",
        budget: Optional[int] = 120_000,
        body_excerpt_cap: Optional[int] = 512,
    ):
        self.detector = detector
        self.catalog = catalog
        self.policy = policy or FilterPolicy()
        self.tz = tz
        self.budget = budget
        self.body_excerpt_cap = body_excerpt_cap

    @classmethod
    def from_config(
        cls,
        config: TracewardenConfig,
        detector: Detector,
        catalog: TechniqueCatalog,
        policy: Optional[FilterPolicy] = None,
    ) -> "TracePipeline":
        return cls(
            detector=detector,
            catalog=catalog,
            policy=policy,
            tz=config.serializer.tz,
            budget=config.serializer.budget,
            body_excerpt_cap=config.serializer.body_excerpt_cap,
        )

    def build_trace(
        self,
        capture: Optional[CaptureSource] = None,
        flow_log: Optional[FlowLogSource] = None,
        records: Sequence[DecryptedRecord] = (),
        session_id: str = "",
    ):
        stats = None
        if capture is not None:
            trace, stats = extract_events_with_stats(capture, self.policy, session_id=session_id)
        else:
            trace = EventTrace(session_id=session_id)
        records = list(records)
        if flow_log is not None:
            records += parse_flow_log(flow_log, body_excerpt_cap=self.body_excerpt_cap)
        if records or flow_log is not None:
            trace = merge(trace, records)
        return trace, stats

    def __call__(
        self,
        capture: Optional[CaptureSource] = None,
        flow_log: Optional[FlowLogSource] = None,
        trace: Optional[EventTrace] = None,
        session_id: str = "",
    ) -> TracePipelineOutput:
        r"""
        Run the offline path.

        Args:
            capture (`str`, `bytes` or binary stream, *optional*):
                PCAP/PCAPNG capture. Ignored when `trace` is given.
            flow_log (`str`, `bytes` or binary stream, *optional*):
                Decrypted flow log merged into the packet trace.
            trace (`EventTrace`, *optional*):
                A prepared trace; skips extraction and merging.
            session_id (`str`, *optional*):
                Carried into the trace and the verdict's `trace_ref`.

        Returns:
            `TracePipelineOutput`
        """
        stats = None
        if trace is None:
            trace, stats = self.build_trace(capture, flow_log, session_id=session_id)
        text = serialize_trace(trace, tz=self.tz, budget=self.budget)
        verdict = self.detector.detect(trace, self.catalog)
        logger.info(f"Trace {trace.session_id or '<unnamed>'} ({len(trace)} events) -> {verdict.label}")
        return TracePipelineOutput(trace=trace, text=text, verdict=verdict, stats=stats)
