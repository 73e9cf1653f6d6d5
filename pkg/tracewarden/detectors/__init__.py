from .base import Detector, aggregate_tool_verdict, normalize_label, verdict_from_output
from .remote import RemoteDetector
from .rules import RuleDetector, SignatureRule, rule_detect, rules_from_catalog, shannon_entropy
