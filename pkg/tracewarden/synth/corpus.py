import json
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from ..config import SynthConfig
from ..errors import UnknownTechnique
from ..models.catalog import BENIGN
from ..utils import logging
from ..utils.saving import save_trace
from .generators import DEFAULT_INTENSITY, GENERATORS, SynthProfile, synth_trace

logger = logging.get_logger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class CorpusEntry:
    label: str
    count: int
    seed: int = 0
    intensity: Optional[int] = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"{self.label}: count must be >= 1, got {self.count}")

    def to_dict(self) -> Dict[str, Any]:
        data = {"label": self.label, "count": self.count, "seed": self.seed}
        if self.intensity is not None:
            data["intensity"] = self.intensity
        return data


@dataclass(frozen=True)
class CorpusSpec:
    entries: List[CorpusEntry]
    n_tool_calls: int = 1

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CorpusSpec":
        entries = [
            CorpusEntry(
                label=str(e["label"]),
                count=int(e.get("count", 1)),
                seed=int(e.get("seed", 0)),
                intensity=None if e.get("intensity") is None else int(e["intensity"]),
            )
            for e in data.get("entries", [])
        ]
        profile = data.get("profile") or {}
        return cls(entries=entries, n_tool_calls=int(profile.get("n_tool_calls", 1)))

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "CorpusSpec":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "profile": {"n_tool_calls": self.n_tool_calls},
        }

    @property
    def total(self) -> int:
        return sum(e.count for e in self.entries)


@dataclass(frozen=True)
class ManifestEntry:
    file: str
    label: str
    seed: int
    intensity: Optional[int] = None
    n_tool_calls: int = 1
    tool_id: Optional[str] = None

    @property
    def group(self) -> str:
        return self.tool_id or self.file

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if self.tool_id is None:
            data.pop("tool_id")
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ManifestEntry":
        return cls(
            file=str(data["file"]),
            label=str(data["label"]),
            seed=int(data.get("seed", 0)),
            intensity=None if data.get("intensity") is None else int(data["intensity"]),
            n_tool_calls=int(data.get("n_tool_calls", 1)),
            tool_id=data.get("tool_id"),
        )


@dataclass
class CorpusManifest:
    """Dataset manifest: one row per trace file, in generation order. Paths are relative to `root`."""

    entries: List[ManifestEntry] = field(default_factory=list)
    root: Path = field(default_factory=Path)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "CorpusManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        with path.open("r", encoding="utf-8") as f:
            rows = json.load(f)
        if not isinstance(rows, list):
            raise ValueError(f"{path}: manifest must be a JSON array")
        return cls(entries=[ManifestEntry.from_dict(r) for r in rows], root=path.parent)

    def save(self, path: Optional[Union[str, os.PathLike]] = None) -> Path:
        path = Path(path) if path is not None else self.root / MANIFEST_NAME
        with path.open("w", encoding="utf-8") as f:
            json.dump([e.to_dict() for e in self.entries], f, indent=2)
            f.write("\n")
        return path

    def path_of(self, entry: ManifestEntry) -> Path:
        return self.root / entry.file

    def __len__(self) -> int:
        return len(self.entries)

    def to_spec(self) -> CorpusSpec:
        """Recover the corpus spec: consecutive rows of one label with consecutive seeds form one entry."""
        entries: List[CorpusEntry] = []
        n_tool_calls = self.entries[0].n_tool_calls if self.entries else 1
        run: Optional[ManifestEntry] = None
        count = 0
        for row in self.entries:
            if (
                run is not None
                and row.label == run.label
                and row.intensity == run.intensity
                and row.seed == run.seed + count
            ):
                count += 1
                continue
            if run is not None:
                entries.append(CorpusEntry(run.label, count, run.seed, run.intensity))
            run, count = row, 1
        if run is not None:
            entries.append(CorpusEntry(run.label, count, run.seed, run.intensity))
        return CorpusSpec(entries=entries, n_tool_calls=n_tool_calls)


def synth_corpus(
    spec: CorpusSpec,
    out_dir: Union[str, os.PathLike],
    config: Optional[SynthConfig] = None,
) -> CorpusManifest:
    """
    Write one JSON-lines trace per (entry, seed) plus `manifest.json`. Seeds run from
    `entry.seed` to `entry.seed + count - 1`; file names are `<label>_<index>.jsonl`.
    """
    for entry in spec.entries:
        if entry.label != BENIGN and entry.label not in GENERATORS:
            raise UnknownTechnique(f"no generator registered for technique {entry.label!r}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    profile = SynthProfile.from_config(config, n_tool_calls=spec.n_tool_calls)
    manifest = CorpusManifest(root=out_dir)
    index: Dict[str, int] = defaultdict(int)

    with logging.tqdm(total=spec.total, desc="synthesizing", unit="trace") as progress:
        for entry in spec.entries:
            intensity = entry.intensity
            if intensity is None and entry.label != BENIGN:
                intensity = DEFAULT_INTENSITY[entry.label]
            for seed in range(entry.seed, entry.seed + entry.count):
                name = f"{entry.label}_{index[entry.label]:04d}.jsonl"
                index[entry.label] += 1
                trace = synth_trace(entry.label, seed, intensity, profile, session_id=Path(name).stem)
                save_trace(trace, out_dir / name)
                manifest.entries.append(
                    ManifestEntry(
                        file=name,
                        label=entry.label,
                        seed=seed,
                        intensity=intensity,
                        n_tool_calls=spec.n_tool_calls,
                    )
                )
                progress.update(1)

    manifest.save()
    logger.info(f"Wrote {len(manifest)} traces and {MANIFEST_NAME} to {out_dir}")
    return manifest
