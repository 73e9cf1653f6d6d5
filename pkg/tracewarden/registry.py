from typing import Dict, Optional, Type

from .config import TracewardenConfig
from .detectors import Detector, RemoteDetector, RuleDetector
from .loaders.pcap import FilterPolicy
from .models.catalog import TechniqueCatalog

DETECTORS: Dict[str, Type[Detector]] = {
    "rules": RuleDetector,
    "remote": RemoteDetector,
}


def build_detector(name: str, config: TracewardenConfig) -> Detector:
    if name not in DETECTORS:
        raise ValueError(f"unknown detector backend {name!r}; choose from {', '.join(DETECTORS)}")
    if name == "remote":
        return RemoteDetector.from_config(config.remote, config.serializer)
    return RuleDetector()


def load_catalog(config: TracewardenConfig, path: Optional[str] = None) -> TechniqueCatalog:
    return TechniqueCatalog.load(path or config.paths.catalog)


def load_filter_policy(config: TracewardenConfig, path: Optional[str] = None) -> FilterPolicy:
    return FilterPolicy.load(path or config.paths.filter_policy)
