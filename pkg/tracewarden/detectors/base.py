import re
from dataclasses import replace
from typing import List, Optional, Sequence

from ..errors import EmptyCatalog, EmptyInput, InvalidMember
from ..models.catalog import BENIGN, TechniqueCatalog
from ..models.events import EventTrace
from ..models.verdict import Verdict
from ..utils.logging import get_logger

logger = get_logger(__name__)  # pylint: disable=invalid-name

_EDGE_CHARS = " \t\r\n\"'`"
_TRAILING_PUNCT = ".,;:!?"
_NON_WORD = re.compile(r"[^a-z0-9]+")


class Detector:
    """
    Uniform contract for every backend: `detect(trace, catalog)` returns a Verdict labelled benign,
    a catalog name or invalid. Backends implement `_detect`.
    """

    name: str = ""

    def detect(self, trace: EventTrace, catalog: TechniqueCatalog) -> Verdict:
        if not len(catalog):
            raise EmptyCatalog("detection needs at least one technique in the catalog")
        verdict = self._detect(trace, catalog)
        if not verdict.trace_ref and trace.session_id:
            verdict = replace(verdict, trace_ref=trace.session_id)
        return verdict

    def _detect(self, trace: EventTrace, catalog: TechniqueCatalog) -> Verdict:
        raise NotImplementedError

    def detect_many(self, traces: Sequence[EventTrace], catalog: TechniqueCatalog) -> List[Verdict]:
        return [self.detect(trace, catalog) for trace in traces]

    def close(self) -> None:
        pass


def _fold(text: str) -> str:
    return "_".join(t for t in _NON_WORD.split(text.lower()) if t)


def _clean(raw: str) -> str:
    text = raw
    while True:
        stripped = text.strip(_EDGE_CHARS).rstrip(_TRAILING_PUNCT)
        if stripped == text:
            return text
        text = stripped


def _contains_tokens(haystack: List[str], needle: List[str]) -> bool:
    n = len(needle)
    return n > 0 and any(haystack[i : i + n] == needle for i in range(len(haystack) - n + 1))


def normalize_label(raw: str, catalog: TechniqueCatalog) -> Optional[str]:
    """
    Map free-form model output onto `benign` or a catalog name. Returns None when the output names
    nothing, or more than one thing, in the label set.
    """
    folded = _fold(_clean(raw or ""))
    if not folded:
        return None
    if folded == BENIGN:
        return BENIGN

    labels = {BENIGN: BENIGN}
    labels.update({_fold(name): name for name in catalog.names})
    if folded in labels:
        return labels[folded]

    raw_tokens = folded.split("_")
    candidates = set()
    for key, name in labels.items():
        key_tokens = key.split("_")
        # a label mentioned inside a sentence, or a fragment that only one label contains
        if _contains_tokens(raw_tokens, key_tokens) or _contains_tokens(key_tokens, raw_tokens):
            candidates.add(name)
    if len(candidates) == 1:
        return candidates.pop()
    return None


def verdict_from_output(raw: str, catalog: TechniqueCatalog, trace_ref: str = "") -> Verdict:
    label = normalize_label(raw, catalog)
    if label is None:
        logger.debug(f"Output {raw!r} does not name a single label")
        return Verdict.invalid(trace_ref=trace_ref, raw_output=raw)
    return Verdict(label=label, raw_output=raw, trace_ref=trace_ref)


def aggregate_tool_verdict(verdicts: Sequence[Verdict]) -> Verdict:
    """A tool is malicious if any of its traces is; the earliest malicious verdict names the technique."""
    if not verdicts:
        raise EmptyInput("cannot aggregate an empty verdict sequence")
    invalid = [i for i, v in enumerate(verdicts) if not v.valid]
    if invalid:
        raise InvalidMember(f"verdicts at positions {invalid} are invalid")
    for verdict in verdicts:
        if verdict.is_malicious:
            return verdict
    return Verdict.benign(trace_ref=verdicts[0].trace_ref)
