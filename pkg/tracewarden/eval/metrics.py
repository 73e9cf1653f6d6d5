import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..detectors.base import aggregate_tool_verdict
from ..errors import EmptyGroup, NonPositiveBaseline
from ..models.catalog import BENIGN, TechniqueCatalog
from ..models.verdict import Verdict

LabeledVerdict = Tuple[str, Verdict]


def _ratio(num: float, den: float) -> float:
    # zero-division yields 0
    return float(num) / float(den) if den else 0.0


def _f1(precision: float, recall: float) -> float:
    return _ratio(2.0 * precision * recall, precision + recall)


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def fpr(self) -> float:
        return _ratio(self.fp, self.fp + self.tn)

    @property
    def f1(self) -> float:
        return _f1(self.precision, self.recall)


@dataclass
class EvalReport:
    confusion: Confusion
    n_total: int
    n_valid: int
    per_technique_f1: Dict[str, float] = field(default_factory=dict)
    absent_techniques: List[str] = field(default_factory=list)
    overhead_pct: Optional[float] = None

    @property
    def precision(self) -> float:
        return self.confusion.precision

    @property
    def recall(self) -> float:
        return self.confusion.recall

    @property
    def f1(self) -> float:
        return self.confusion.f1

    @property
    def fpr(self) -> float:
        return self.confusion.fpr

    @property
    def success_rate(self) -> float:
        return _ratio(self.n_valid, self.n_total)

    def to_dict(self) -> Dict[str, object]:
        return {
            "fpr": self.fpr,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "success_rate": self.success_rate,
            "confusion": asdict(self.confusion),
            "per_technique_f1": dict(self.per_technique_f1),
            "absent_techniques": list(self.absent_techniques),
            "overhead_pct": self.overhead_pct,
            "n_total": self.n_total,
            "n_valid": self.n_valid,
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def format_table(self) -> str:
        rows = [
            ("FPR", f"{self.fpr:.4f}"),
            ("F1", f"{self.f1:.4f}"),
            ("Precision", f"{self.precision:.4f}"),
            ("Recall", f"{self.recall:.4f}"),
            ("Success rate", f"{self.success_rate:.4f} ({self.n_valid}/{self.n_total})"),
            (
                "Confusion",
                f"tp={self.confusion.tp} fp={self.confusion.fp} fn={self.confusion.fn} tn={self.confusion.tn}",
            ),
        ]
        if self.overhead_pct is not None:
            rows.append(("Overhead", f"{self.overhead_pct:.2f}%"))
        for name, score in self.per_technique_f1.items():
            suffix = " (absent)" if name in self.absent_techniques else ""
            rows.append((f"F1 {name}", f"{score:.4f}{suffix}"))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)


def _is_malicious_truth(label: str) -> bool:
    return label != BENIGN


def confusion_of(pairs: Sequence[LabeledVerdict]) -> Confusion:
    """Binary confusion over valid verdicts only."""
    valid = [(truth, v) for truth, v in pairs if v.valid]
    if not valid:
        return Confusion()
    truth = np.array([_is_malicious_truth(t) for t, _ in valid])
    pred = np.array([v.is_malicious for _, v in valid])
    return Confusion(
        tp=int(np.sum(truth & pred)),
        fp=int(np.sum(~truth & pred)),
        fn=int(np.sum(truth & ~pred)),
        tn=int(np.sum(~truth & ~pred)),
    )


def binary_metrics(pairs: Sequence[LabeledVerdict]) -> EvalReport:
    """
    Benign vs. malicious. Invalid verdicts stay out of the confusion counts and only lower
    `success_rate`.
    """
    n_valid = sum(v.valid for _, v in pairs)
    return EvalReport(confusion=confusion_of(pairs), n_total=len(pairs), n_valid=n_valid)


def _technique_names(pairs: Sequence[LabeledVerdict], catalog: Optional[TechniqueCatalog]) -> List[str]:
    if catalog is not None:
        return list(catalog.names)
    seen = {t for t, _ in pairs} | {v.label for _, v in pairs if v.is_malicious}
    return sorted(seen - {BENIGN})


def per_technique_f1(
    pairs: Sequence[LabeledVerdict],
    catalog: Optional[TechniqueCatalog] = None,
) -> Dict[str, float]:
    """One-vs-rest F1 per technique, exact label match, over valid verdicts."""
    valid = [(t, v.label) for t, v in pairs if v.valid]
    scores = {}
    for name in _technique_names(pairs, catalog):
        tp = sum(t == name and p == name for t, p in valid)
        fp = sum(t != name and p == name for t, p in valid)
        fn = sum(t == name and p != name for t, p in valid)
        scores[name] = _f1(_ratio(tp, tp + fp), _ratio(tp, tp + fn))
    return scores


def absent_techniques(
    pairs: Sequence[LabeledVerdict],
    catalog: Optional[TechniqueCatalog] = None,
) -> List[str]:
    present = {t for t, _ in pairs} | {v.label for _, v in pairs if v.valid}
    return [name for name in _technique_names(pairs, catalog) if name not in present]


def evaluate(
    pairs: Sequence[LabeledVerdict],
    catalog: Optional[TechniqueCatalog] = None,
    overhead_pct: Optional[float] = None,
) -> EvalReport:
    report = binary_metrics(pairs)
    report.per_technique_f1 = per_technique_f1(pairs, catalog)
    report.absent_techniques = absent_techniques(pairs, catalog)
    report.overhead_pct = overhead_pct
    return report


def group_verdict(verdicts: Sequence[Verdict]) -> Verdict:
    """
    Tool-level verdict. All-valid groups use `aggregate_tool_verdict`; otherwise a valid malicious
    member still makes the tool malicious, and anything else is invalid.
    """
    if all(v.valid for v in verdicts):
        return aggregate_tool_verdict(verdicts)
    for verdict in verdicts:
        if verdict.is_malicious:
            return verdict
    return Verdict.invalid(trace_ref=verdicts[0].trace_ref, raw_output="group has invalid members")


def group_truth(truths: Sequence[str]) -> str:
    return next((t for t in truths if _is_malicious_truth(t)), BENIGN)


def tool_level_eval(
    groups: Mapping[str, Sequence[LabeledVerdict]],
    catalog: Optional[TechniqueCatalog] = None,
) -> EvalReport:
    """A tool is malicious if any of its traces is, both for truth and for prediction."""
    tool_pairs = []
    for tool_id, members in groups.items():
        if not members:
            raise EmptyGroup(f"tool {tool_id!r} has no traces")
        truth = group_truth([t for t, _ in members])
        tool_pairs.append((truth, group_verdict([v for _, v in members])))
    return evaluate(tool_pairs, catalog)


def measure_overhead(baseline_runs: Sequence[float], pipeline_runs: Sequence[float]) -> float:
    """Percent of extra wall time the pipeline adds over the baseline, on means."""
    if not len(baseline_runs) or not len(pipeline_runs):
        raise ValueError("both baseline and pipeline runs must be non-empty")
    baseline = float(np.mean(np.asarray(baseline_runs, dtype=float)))
    if baseline <= 0:
        raise NonPositiveBaseline(f"baseline mean must be > 0, got {baseline}")
    pipeline = float(np.mean(np.asarray(pipeline_runs, dtype=float)))
    return 100.0 * (pipeline - baseline) / baseline
