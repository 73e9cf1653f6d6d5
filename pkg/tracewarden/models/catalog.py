from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from ..errors import InvalidCatalog, UnknownTechnique
from ..loaders.config_file import JsonFileMixin

BENIGN = "benign"
INVALID = "invalid"


@dataclass(frozen=True)
class Technique:
    name: str
    mitre_id: str
    description: str
    signature: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "mitre_id": self.mitre_id,
            "description": self.description,
            "signature": dict(self.signature),
        }


@dataclass(frozen=True)
class TechniqueCatalog(JsonFileMixin):
    """The technique label set. File order defines the order techniques appear in prompts and rule evaluation."""

    techniques: Tuple[Technique, ...] = ()

    default_file_name = "techniques.json"

    def __post_init__(self):
        names = [t.name for t in self.techniques]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise InvalidCatalog(f"duplicate technique names: {', '.join(duplicates)}")
        for name in names:
            if not name or name.lower() in (BENIGN, INVALID) or any(c.isspace() for c in name):
                raise InvalidCatalog(f"technique name {name!r} is not a valid identifier")

    @classmethod
    def _from_json(cls, data: Any, **kwargs) -> "TechniqueCatalog":
        if not isinstance(data, list):
            raise InvalidCatalog("catalog file must hold a top-level JSON array")
        techniques = []
        for i, entry in enumerate(data):
            try:
                techniques.append(
                    Technique(
                        name=str(entry["name"]),
                        mitre_id=str(entry.get("mitre_id", "")),
                        description=str(entry.get("description", "")),
                        signature=dict(entry.get("signature") or {}),
                    )
                )
            except (KeyError, TypeError, AttributeError) as e:
                raise InvalidCatalog(f"catalog entry {i} is malformed: {e}") from e
        return cls(techniques=tuple(techniques))

    def _to_json(self) -> List[Dict[str, Any]]:
        return [t.to_dict() for t in self.techniques]

    @property
    def names(self) -> List[str]:
        return [t.name for t in self.techniques]

    def __len__(self) -> int:
        return len(self.techniques)

    def __iter__(self) -> Iterator[Technique]:
        return iter(self.techniques)

    def __contains__(self, name: object) -> bool:
        return any(t.name == name for t in self.techniques)

    def get(self, name: str) -> Technique:
        for technique in self.techniques:
            if technique.name == name:
                return technique
        raise UnknownTechnique(f"technique {name!r} is not in the catalog")

    def extend(self, extra: Sequence[Technique]) -> "TechniqueCatalog":
        """Operator additions go after the shipped entries."""
        return TechniqueCatalog(techniques=self.techniques + tuple(extra))

    def subset(self, names: Optional[Sequence[str]]) -> "TechniqueCatalog":
        if not names:
            return self
        return TechniqueCatalog(techniques=tuple(self.get(n) for n in names))
