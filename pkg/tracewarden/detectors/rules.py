import re
from collections import Counter
from dataclasses import dataclass, fields
from typing import Any, Callable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import InvalidCatalog
from ..models.catalog import TechniqueCatalog
from ..models.events import EventTrace, EventType, NetworkEvent
from ..models.verdict import Verdict
from ..utils.logging import get_logger
from .base import Detector

logger = get_logger(__name__)  # pylint: disable=invalid-name

# path segment that looks like base64/base32/hex payload
ENCODED_SEGMENT = re.compile(r"^[A-Za-z0-9+=_-]{16,}$")


def shannon_entropy(text: str) -> float:
    """Per-character Shannon entropy in bits."""
    if not text:
        return 0.0
    _, counts = np.unique(np.frombuffer(text.encode("utf-8"), dtype=np.uint8), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def _suffix_match(name: str, suffixes: Sequence[str]) -> bool:
    name = name.lower().rstrip(".")
    return any(name == s or name.endswith("." + s) for s in suffixes)


@dataclass(frozen=True)
class SignatureRule:
    technique: str
    event_type: EventType
    min_count: int = 1
    dport: Optional[int] = None
    method: Optional[str] = None
    qname_entropy_threshold: Optional[float] = None
    qname_min_label_len: Optional[int] = None
    host_allowlist: Optional[Tuple[str, ...]] = None
    payload_size_uniform: bool = False
    encoded_path_pattern: bool = False

    def __post_init__(self):
        if self.min_count < 1:
            raise InvalidCatalog(f"{self.technique}: min_count must be >= 1, got {self.min_count}")
        if self.host_allowlist is not None:
            object.__setattr__(self, "host_allowlist", tuple(h.lower() for h in self.host_allowlist))

    @classmethod
    def from_signature(cls, technique: str, signature: Mapping[str, Any]) -> "SignatureRule":
        known = {f.name for f in fields(cls)} - {"technique"}
        unknown = sorted(set(signature) - known)
        if unknown:
            raise InvalidCatalog(f"{technique}: unknown signature keys {unknown}")
        if "event_type" not in signature:
            raise InvalidCatalog(f"{technique}: signature needs an event_type")
        try:
            event_type = EventType(signature["event_type"])
        except ValueError as e:
            raise InvalidCatalog(f"{technique}: unknown event_type {signature['event_type']!r}") from e
        params = dict(signature)
        params["event_type"] = event_type
        if params.get("host_allowlist") is not None:
            params["host_allowlist"] = tuple(params["host_allowlist"])
        return cls(technique=technique, **params)

    def _filters(self) -> List[Callable[[NetworkEvent], bool]]:
        checks: List[Callable[[NetworkEvent], bool]] = [lambda e: e.event_type is self.event_type]
        if self.dport is not None:
            checks.append(lambda e: e.dport == self.dport)
        if self.method is not None:
            checks.append(lambda e: (e.attr("method") or "").upper() == self.method.upper())
        if self.qname_min_label_len is not None or self.qname_entropy_threshold is not None:
            checks.append(self._qname_matches)
        if self.host_allowlist is not None:
            checks.append(self._outside_allowlist)
        if self.encoded_path_pattern:
            checks.append(
                lambda e: any(ENCODED_SEGMENT.match(seg) for seg in (e.attr("path") or "").split("/"))
            )
        return checks

    def _qname_matches(self, e: NetworkEvent) -> bool:
        label = (e.attr("qname") or "").split(".")[0]
        if self.qname_min_label_len is not None and len(label) < self.qname_min_label_len:
            return False
        if self.qname_entropy_threshold is not None and shannon_entropy(label) < self.qname_entropy_threshold:
            return False
        return True

    def _outside_allowlist(self, e: NetworkEvent) -> bool:
        host = (e.attr("host") or "").split(":")[0]
        if host and _suffix_match(host, self.host_allowlist):
            return False
        return e.dst.lower() not in self.host_allowlist

    def count(self, trace: EventTrace) -> int:
        checks = self._filters()
        matched = [e for e in trace.events if all(check(e) for check in checks)]
        if not self.payload_size_uniform:
            return len(matched)
        groups = Counter((e.dst, e.attr("payload_len")) for e in matched)
        return max(groups.values(), default=0)

    def matches(self, trace: EventTrace) -> bool:
        return self.count(trace) >= self.min_count


def rules_from_catalog(catalog: TechniqueCatalog) -> List[SignatureRule]:
    """Rules in catalog order. Techniques without a signature get no rule."""
    return [SignatureRule.from_signature(t.name, t.signature) for t in catalog if t.signature]


def rule_detect(trace: EventTrace, rules: Sequence[SignatureRule]) -> Verdict:
    for rule in rules:
        if rule.matches(trace):
            return Verdict(label=rule.technique, raw_output=f"rule:{rule.technique}", trace_ref=trace.session_id)
    return Verdict.benign(trace_ref=trace.session_id, raw_output="rule:benign")


class RuleDetector(Detector):
    """Deterministic signature detector. A pure function of (trace, catalog)."""

    name = "rules"

    def __init__(self, rules: Optional[Sequence[SignatureRule]] = None):
        self._rules = list(rules) if rules is not None else None
        self._cache: Tuple[Optional[TechniqueCatalog], List[SignatureRule]] = (None, [])

    @classmethod
    def from_catalog(cls, catalog: TechniqueCatalog) -> "RuleDetector":
        return cls(rules_from_catalog(catalog))

    def rules_for(self, catalog: TechniqueCatalog) -> List[SignatureRule]:
        if self._rules is not None:
            return [r for r in self._rules if r.technique in catalog]
        cached_catalog, cached_rules = self._cache
        if cached_catalog is not catalog:
            cached_rules = rules_from_catalog(catalog)
            self._cache = (catalog, cached_rules)
        return cached_rules

    def _detect(self, trace: EventTrace, catalog: TechniqueCatalog) -> Verdict:
        return rule_detect(trace, self.rules_for(catalog))
