import os
from collections import OrderedDict
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Union

from ..config import SerializerConfig
from ..detectors.base import normalize_label
from ..errors import MissingTraceFile
from ..models.catalog import TechniqueCatalog
from ..models.events import TraceOrigin
from ..models.verdict import Verdict
from ..synth.corpus import CorpusManifest, ManifestEntry
from ..utils.logging import get_logger
from ..utils.prompt import build_prompt
from ..utils.render import serialize_trace
from ..utils.saving import load_trace, read_json_lines, write_json_lines
from .metrics import EvalReport, LabeledVerdict, evaluate, tool_level_eval

logger = get_logger(__name__)  # pylint: disable=invalid-name


def _check_files(manifest: CorpusManifest) -> None:
    for entry in manifest.entries:
        if not manifest.path_of(entry).is_file():
            raise MissingTraceFile(f"trace file listed in the manifest is missing: {entry.file}")


def export_supervised_pairs(
    manifest: CorpusManifest,
    out_path: Union[str, os.PathLike],
    serializer: Optional[SerializerConfig] = None,
    catalog: Optional[TechniqueCatalog] = None,
) -> int:
    """
    Write `{input, label}` JSON lines in manifest order. With a catalog, `input` is the full
    detection prompt instead of the bare trace text.
    """
    serializer = serializer or SerializerConfig()
    _check_files(manifest)

    def rows():
        for entry in manifest.entries:
            trace = load_trace(manifest.path_of(entry), origin=TraceOrigin.SYNTHETIC)
            text = serialize_trace(trace, tz=serializer.tz, budget=serializer.budget)
            yield {"input": build_prompt(catalog, text) if catalog is not None else text, "label": entry.label}

    count = write_json_lines(rows(), out_path)
    logger.info(f"Exported {count} supervised pairs to {os.fspath(out_path)}")
    return count


def normalize_prediction(verdict: Verdict, catalog: TechniqueCatalog) -> Verdict:
    """Fold a stored label onto `benign` or a catalog name; anything else becomes invalid."""
    if not verdict.valid:
        return verdict
    label = normalize_label(verdict.label, catalog)
    if label is None:
        return Verdict.invalid(
            trace_ref=verdict.trace_ref,
            raw_output=verdict.raw_output or verdict.label,
            window_ref=verdict.window_ref,
        )
    return verdict if label == verdict.label else replace(verdict, label=label)


def load_predictions(path: Union[str, os.PathLike], catalog: Optional[TechniqueCatalog] = None) -> Dict[str, Verdict]:
    """Read prediction rows keyed by trace file. Labels are normalized against `catalog` (default: packaged)."""
    catalog = catalog if catalog is not None else TechniqueCatalog.load()
    predictions: Dict[str, Verdict] = {}
    for row in read_json_lines(path):
        verdict = normalize_prediction(Verdict.from_dict(row), catalog)
        predictions[str(row["file"])] = verdict
    invalid = sum(not v.valid for v in predictions.values())
    if invalid:
        logger.info(f"{invalid} of {len(predictions)} predictions do not name a catalog label")
    return predictions


def join_predictions(manifest: CorpusManifest, predictions: Dict[str, Verdict]) -> "OrderedDict[str, List[LabeledVerdict]]":
    """Group (truth, verdict) pairs by tool. A manifest file without a prediction counts as invalid."""
    groups: "OrderedDict[str, List[LabeledVerdict]]" = OrderedDict()
    known = set()
    for entry in manifest.entries:
        known.add(entry.file)
        verdict = predictions.get(entry.file)
        if verdict is None:
            verdict = Verdict.invalid(trace_ref=Path(entry.file).stem, raw_output="no prediction")
        groups.setdefault(entry.group, []).append((entry.label, verdict))
    stray = sorted(set(predictions) - known)
    if stray:
        logger.warning(f"Ignoring {len(stray)} predictions for files not in the manifest, e.g. {stray[0]}")
    return groups


def evaluate_predictions(
    manifest: CorpusManifest,
    predictions: Union[str, os.PathLike, Dict[str, Verdict]],
    catalog: Optional[TechniqueCatalog] = None,
    tool_level: bool = False,
) -> EvalReport:
    labels = catalog if catalog is not None else TechniqueCatalog.load()
    if isinstance(predictions, dict):
        predictions = {f: normalize_prediction(v, labels) for f, v in predictions.items()}
    else:
        predictions = load_predictions(predictions, labels)
    groups = join_predictions(manifest, predictions)
    if tool_level:
        return tool_level_eval(groups, catalog)
    return evaluate([pair for members in groups.values() for pair in members], catalog)


def prediction_row(entry: ManifestEntry, verdict: Verdict) -> Dict[str, object]:
    return {"file": entry.file, "label": verdict.label, "raw_output": verdict.raw_output, "valid": verdict.valid}
