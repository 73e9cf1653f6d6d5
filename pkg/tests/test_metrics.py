import itertools

import numpy as np
import pytest

from tracewarden.errors import EmptyGroup, NonPositiveBaseline
from tracewarden.eval import binary_metrics, evaluate, measure_overhead, per_technique_f1, tool_level_eval
from tracewarden.models.catalog import BENIGN
from tracewarden.models.verdict import Verdict

TECHNIQUES = ["Standard_Encoding", "Web_Protocols"]


def _reference(pairs):
    tp = fp = fn = tn = 0
    for truth, verdict in pairs:
        if verdict.label == "invalid":
            continue
        actual = truth != BENIGN
        predicted = verdict.label != BENIGN
        tp += actual and predicted
        fp += not actual and predicted
        fn += actual and not predicted
        tn += not actual and not predicted
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    return (tp, fp, fn, tn), f1, fpr


def test_matches_reference_on_random_labelings():
    rng = np.random.default_rng(11)
    labels = [BENIGN, *TECHNIQUES]
    for _ in range(1000):
        n = int(rng.integers(0, 40))
        truths = rng.choice(labels, size=n)
        preds = rng.choice(labels + ["invalid"], size=n)
        pairs = [(str(t), Verdict(str(p))) for t, p in zip(truths, preds)]
        report = binary_metrics(pairs)
        counts, f1, fpr = _reference(pairs)
        c = report.confusion
        assert (c.tp, c.fp, c.fn, c.tn) == counts
        assert report.f1 == pytest.approx(f1, abs=1e-12)
        assert report.fpr == pytest.approx(fpr, abs=1e-12)
        assert 0.0 <= report.f1 <= 1.0
        assert report.n_valid == sum(p != "invalid" for p in preds)


def test_hand_computed_example():
    pairs = (
        [("Web_Protocols", Verdict("Web_Protocols"))] * 9
        + [("Web_Protocols", Verdict.benign())]
        + [(BENIGN, Verdict("Standard_Encoding"))]
        + [(BENIGN, Verdict.benign())] * 89
    )
    report = binary_metrics(pairs)
    c = report.confusion
    assert (c.tp, c.fp, c.fn, c.tn) == (9, 1, 1, 89)
    assert abs(report.f1 - 0.9) < 1e-9
    assert abs(report.fpr - 1 / 90) < 1e-9
    assert report.success_rate == 1.0


def test_invalid_verdicts_only_lower_success_rate():
    pairs = [("Web_Protocols", Verdict("Web_Protocols")), (BENIGN, Verdict.invalid()), (BENIGN, Verdict.benign())]
    report = binary_metrics(pairs)
    assert report.confusion.total == 2
    assert report.success_rate == pytest.approx(2 / 3)
    assert report.f1 == 1.0


def test_empty_input_is_all_zero():
    report = binary_metrics([])
    assert (report.f1, report.fpr, report.success_rate) == (0.0, 0.0, 0.0)


def test_per_technique_f1_and_absent(catalog):
    pairs = [
        ("Web_Protocols", Verdict("Web_Protocols")),
        ("Web_Protocols", Verdict("Standard_Encoding")),
        ("Standard_Encoding", Verdict("Standard_Encoding")),
        (BENIGN, Verdict.benign()),
    ]
    scores = per_technique_f1(pairs, catalog)
    assert list(scores) == catalog.names
    assert scores["Web_Protocols"] == pytest.approx(2 / 3)
    assert scores["Standard_Encoding"] == pytest.approx(2 / 3)
    report = evaluate(pairs, catalog)
    assert report.absent_techniques == ["Network_Device_Configuration_Dump", "Traffic_Signaling"]
    assert report.per_technique_f1["Traffic_Signaling"] == 0.0
    assert "(absent)" in report.format_table()


def test_tool_level_any_rule():
    groups = {
        "tool-a": [(BENIGN, Verdict.benign()), ("Web_Protocols", Verdict("Web_Protocols"))],
        "tool-b": [(BENIGN, Verdict.benign()), (BENIGN, Verdict.benign())],
        "tool-c": [(BENIGN, Verdict.invalid()), (BENIGN, Verdict.benign())],
        "tool-d": [(BENIGN, Verdict.invalid()), (BENIGN, Verdict("Standard_Encoding"))],
    }
    report = tool_level_eval(groups)
    c = report.confusion
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 0, 1)
    assert (report.n_total, report.n_valid) == (4, 3)


def test_tool_level_matches_trace_level_for_singletons():
    pairs = [(t, Verdict(p)) for t, p in itertools.product([BENIGN, "Web_Protocols"], [BENIGN, "Web_Protocols"])]
    groups = {str(i): [pair] for i, pair in enumerate(pairs)}
    assert tool_level_eval(groups).confusion == binary_metrics(pairs).confusion


def test_empty_group():
    with pytest.raises(EmptyGroup):
        tool_level_eval({"tool-x": []})


def test_overhead():
    assert measure_overhead([10.0, 10.0], [11.0, 11.0]) == pytest.approx(10.0)
    assert measure_overhead([2.0], [1.0]) == pytest.approx(-50.0)
    with pytest.raises(NonPositiveBaseline):
        measure_overhead([0.0, 0.0], [1.0])
    with pytest.raises(ValueError):
        measure_overhead([], [1.0])


def test_report_json_keys():
    report = evaluate([(BENIGN, Verdict.benign())], overhead_pct=1.5)
    data = report.to_dict()
    assert {"fpr", "f1", "precision", "recall", "success_rate", "overhead_pct"} <= set(data)
    assert "Overhead" in report.format_table()
