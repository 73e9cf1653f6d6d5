from dataclasses import dataclass, replace
from typing import Any, Dict, Mapping, Optional, Tuple

from .catalog import BENIGN, INVALID

WindowRef = Tuple[int, int]


@dataclass(frozen=True)
class Verdict:
    label: str
    raw_output: str = ""
    trace_ref: str = ""
    window_ref: Optional[WindowRef] = None

    @property
    def valid(self) -> bool:
        return self.label != INVALID

    @property
    def is_malicious(self) -> bool:
        return self.label not in (BENIGN, INVALID)

    @classmethod
    def benign(cls, trace_ref: str = "", raw_output: str = BENIGN, **kwargs) -> "Verdict":
        return cls(label=BENIGN, raw_output=raw_output, trace_ref=trace_ref, **kwargs)

    @classmethod
    def invalid(cls, trace_ref: str = "", raw_output: str = "", **kwargs) -> "Verdict":
        return cls(label=INVALID, raw_output=raw_output, trace_ref=trace_ref, **kwargs)

    def for_window(self, window_ref: WindowRef, trace_ref: Optional[str] = None) -> "Verdict":
        return replace(
            self,
            window_ref=window_ref,
            trace_ref=self.trace_ref if trace_ref is None else trace_ref,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "valid": self.valid,
            "raw_output": self.raw_output,
            "trace_ref": self.trace_ref,
            "window_ref": list(self.window_ref) if self.window_ref else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Verdict":
        window = data.get("window_ref")
        label = str(data.get("label", INVALID))
        if data.get("valid") is False:
            label = INVALID
        return cls(
            label=label,
            raw_output=str(data.get("raw_output", "")),
            trace_ref=str(data.get("trace_ref", "")),
            window_ref=(int(window[0]), int(window[1])) if window else None,
        )
