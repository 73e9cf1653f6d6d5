import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

from omegaconf import DictConfig, OmegaConf

from .loaders.config_file import packaged_config_path
from .utils.logging import get_logger

logger = get_logger(__name__)  # pylint: disable=invalid-name


@dataclass
class SerializerConfig:
    tz: str = "UTC"
    # ~32K tokens of context
    budget: int = 120_000
    body_excerpt_cap: int = 512


@dataclass
class StreamingConfig:
    delta: int = 50
    window: int = 100
    reorder_slack_s: float = 0.1
    latch_alerts: bool = True


@dataclass
class RemoteConfig:
    url: str = ""
    api_key: str = ""
    model: str = ""
    timeout_s: float = 60.0
    retries: int = 3
    backoff_factor: float = 0.5
    max_workers: int = 4


@dataclass
class CaptureConfig:
    proxy_addr: str = "127.0.0.1:8080"
    interface: str = "any"
    pcap_path: str = "capture.pcap"
    flow_log_path: str = "flows.mitm"
    block_udp_443: bool = True
    proxy_probe_timeout_s: float = 2.0
    startup_grace_s: float = 0.5
    stop_timeout_s: float = 5.0
    capture_command: List[str] = field(
        default_factory=lambda: ["tcpdump", "-i", "{interface}", "-U", "-w", "{pcap_path}"]
    )
    firewall_add_command: List[str] = field(
        default_factory=lambda: [
            "iptables", "-I", "OUTPUT", "-p", "udp", "--dport", "443",
            "-m", "comment", "--comment", "{rule_id}", "-j", "DROP",
        ]
    )
    firewall_del_command: List[str] = field(
        default_factory=lambda: [
            "iptables", "-D", "OUTPUT", "-p", "udp", "--dport", "443",
            "-m", "comment", "--comment", "{rule_id}", "-j", "DROP",
        ]
    )
    template_vars: Dict[str, str] = field(default_factory=dict)


@dataclass
class EndpointConfig:
    host: str = "api.llm-provider.example"
    ip: str = "172.66.0.243"


@dataclass
class SynthConfig:
    canary_addr: str = "192.0.2.1"
    agent_addr: str = "172.25.7.2"
    resolver_addr: str = "8.8.8.8"
    endpoints: List[EndpointConfig] = field(default_factory=lambda: [EndpointConfig()])


@dataclass
class PathsConfig:
    catalog: Optional[str] = None
    filter_policy: Optional[str] = None


@dataclass
class TracewardenConfig:
    serializer: SerializerConfig = field(default_factory=SerializerConfig)
    streaming: StreamingConfig = field(default_factory=StreamingConfig)
    remote: RemoteConfig = field(default_factory=RemoteConfig)
    capture: CaptureConfig = field(default_factory=CaptureConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


def load_config(
    path: Optional[Union[str, os.PathLike, Sequence[Union[str, os.PathLike]]]] = None,
    overrides: Sequence[str] = (),
) -> TracewardenConfig:
    """
    Layered configuration: dataclass schema <- packaged default.yaml <- user YAML(s) <- dotlist overrides.

    `path` may list several YAML files; later files win. `${oc.env:...}` interpolations are resolved
    here, so remote credentials may come from the environment.
    """
    if path is None:
        paths = []
    elif isinstance(path, (str, os.PathLike)):
        paths = [path]
    else:
        paths = list(path)

    schema = OmegaConf.structured(TracewardenConfig)
    layers = [schema, OmegaConf.load(packaged_config_path("default.yaml"))]
    for p in paths:
        layers.append(OmegaConf.load(p))
        logger.info(f"Loaded configuration from {os.fspath(p)}")
    if overrides:
        layers.append(OmegaConf.from_dotlist(list(overrides)))
    merged: DictConfig = OmegaConf.merge(*layers)
    return OmegaConf.to_object(merged)


def to_yaml(cfg: TracewardenConfig) -> str:
    return OmegaConf.to_yaml(OmegaConf.structured(cfg))
