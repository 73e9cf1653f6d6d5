from .export import evaluate_predictions, export_supervised_pairs, load_predictions, prediction_row
from .metrics import (
    Confusion,
    EvalReport,
    absent_techniques,
    binary_metrics,
    evaluate,
    measure_overhead,
    per_technique_f1,
    tool_level_eval,
)
