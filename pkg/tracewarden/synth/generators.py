import zlib
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..config import EndpointConfig, SynthConfig
from ..errors import UnknownTechnique
from ..models.catalog import BENIGN
from ..models.events import EventTrace, EventType, NetworkEvent, TraceOrigin, Transport
from ..utils.logging import get_logger

logger = get_logger(__name__)  # pylint: disable=invalid-name

# 2024-05-01 12:00:00 UTC
EPOCH = 1_714_564_800.0

CHAT_PATH = "/v1/chat/completions"
BASE64URL = np.array(list("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_"))

# simulated lab addresses
TOOL_ADDR = "172.25.24.12"
DEVICE_ADDR = "172.25.24.3"
DEVICE_MAC = "02:42:ac:19:18:03"
SIGNAL_ADDR = "198.51.100.23"
EXFIL_DOMAIN = "exfil-sink.example"
EXFIL_ADDR = "203.0.113.50"
EXFIL_RESOLVED = "203.0.113.53"
CANARY_PAYLOAD = 56

DEFAULT_INTENSITY = {
    "Network_Device_Configuration_Dump": 20,
    "Standard_Encoding": 8,
    "Traffic_Signaling": 8,
    "Web_Protocols": 5,
}


@dataclass
class SynthProfile:
    n_tool_calls: int = 1
    endpoints: Sequence[EndpointConfig] = field(default_factory=lambda: [EndpointConfig()])
    agent_addr: str = "172.25.7.2"
    resolver_addr: str = "8.8.8.8"
    canary_addr: str = "192.0.2.1"

    def __post_init__(self):
        if self.n_tool_calls < 0:
            raise ValueError(f"n_tool_calls must be >= 0, got {self.n_tool_calls}")
        if not self.endpoints:
            raise ValueError("a synthesis profile needs at least one model endpoint")

    @classmethod
    def from_config(cls, config: Optional[SynthConfig] = None, n_tool_calls: int = 1) -> "SynthProfile":
        config = config or SynthConfig()
        return cls(
            n_tool_calls=n_tool_calls,
            endpoints=list(config.endpoints),
            agent_addr=config.agent_addr,
            resolver_addr=config.resolver_addr,
            canary_addr=config.canary_addr,
        )


class TraceBuilder:
    """Appends events on a jittered clock. Consecutive events are 5-50 ms apart."""

    def __init__(self, rng: np.random.Generator, start: float = EPOCH):
        self.rng = rng
        self.clock = start
        self.events: List[NetworkEvent] = []

    def next_time(self) -> float:
        return self.clock + float(self.rng.uniform(0.005, 0.050))

    def ephemeral_port(self) -> int:
        return int(self.rng.integers(32768, 61000))

    def emit(
        self,
        event_type: EventType,
        src: str,
        dst: str,
        sport: int = 0,
        dport: int = 0,
        transport: Transport = Transport.NONE,
        at: Optional[float] = None,
        **attrs: object,
    ) -> NetworkEvent:
        self.clock = self.next_time() if at is None else at
        event = NetworkEvent.create(self.clock, event_type, src, dst, sport, dport, transport, attrs)
        self.events.append(event)
        return event

    def build(self, session_id: str = "") -> EventTrace:
        return EventTrace.from_events(self.events, session_id=session_id, origin=TraceOrigin.SYNTHETIC)


Generator = Callable[[TraceBuilder, SynthProfile, int], None]


def _tool_call(
    b: TraceBuilder,
    profile: SynthProfile,
    endpoint: EndpointConfig,
    during_execution: Optional[Callable[[], None]] = None,
) -> None:
    agent = profile.agent_addr
    dns_port = b.ephemeral_port()
    b.emit(EventType.DNS_Q, agent, profile.resolver_addr, dns_port, 53, Transport.UDP, qname=endpoint.host)
    b.emit(EventType.DNS_A, profile.resolver_addr, agent, 53, dns_port, Transport.UDP, answer_ip=endpoint.ip)
    tls_port = b.ephemeral_port()
    b.emit(EventType.TCP_CONN, agent, endpoint.ip, tls_port, 443, Transport.TCP, tcp_flags="S")
    b.emit(EventType.TLS_CH, agent, endpoint.ip, tls_port, 443, Transport.TCP, sni=endpoint.host)
    request = b.emit(
        EventType.HTTP_REQ, agent, endpoint.ip, 0, 443, Transport.TCP,
        method="POST", host=endpoint.host, path=CHAT_PATH,
    )
    if during_execution is not None:
        during_execution()
    response_ts = b.next_time()
    b.emit(
        EventType.HTTP_RESP, endpoint.ip, agent, 443, 0, Transport.TCP, at=response_ts,
        status=200, duration_ms=f"{(response_ts - request.timestamp) * 1000.0:.1f}",
    )


def _envelope(b: TraceBuilder, profile: SynthProfile, block: Optional[Callable[[], None]] = None) -> None:
    calls = profile.n_tool_calls
    for i in range(calls):
        endpoint = profile.endpoints[i % len(profile.endpoints)]
        _tool_call(b, profile, endpoint, block if i == calls - 1 else None)
    if calls == 0 and block is not None:
        block()


def config_dump_events(b: TraceBuilder, profile: SynthProfile, intensity: int) -> None:
    for _ in range(intensity):
        sport = b.ephemeral_port()
        b.emit(
            EventType.SNMP_REQ, TOOL_ADDR, DEVICE_ADDR, sport, 161, Transport.UDP,
            payload_len=int(b.rng.integers(40, 64)),
        )
        b.emit(
            EventType.SNMP_RESP, DEVICE_ADDR, TOOL_ADDR, 161, sport, Transport.UDP,
            payload_len=int(b.rng.integers(64, 400)),
        )
    b.emit(EventType.ARP_REQ, TOOL_ADDR, DEVICE_ADDR, transport=Transport.ARP)
    b.emit(EventType.ARP_REPLY, DEVICE_ADDR, TOOL_ADDR, transport=Transport.ARP, mac=DEVICE_MAC)


def encoded_label(rng: np.random.Generator, low: int = 20, high: int = 33) -> str:
    # distinct characters keep the label's entropy at log2(len) bits/char
    length = int(rng.integers(low, high))
    return "".join(rng.choice(BASE64URL, size=length, replace=False))


def dns_encoding_events(b: TraceBuilder, profile: SynthProfile, intensity: int) -> None:
    agent = profile.agent_addr
    for i in range(intensity):
        sport = b.ephemeral_port()
        qname = f"{encoded_label(b.rng)}.{i}.t.{EXFIL_DOMAIN}"
        b.emit(EventType.DNS_Q, agent, profile.resolver_addr, sport, 53, Transport.UDP, qname=qname)
        b.emit(EventType.DNS_A, profile.resolver_addr, agent, 53, sport, Transport.UDP, answer_ip=EXFIL_RESOLVED)


def signaling_events(b: TraceBuilder, profile: SynthProfile, intensity: int) -> None:
    size = int(b.rng.choice([32, 48, 64, 100]))
    for _ in range(intensity):
        b.emit(EventType.ICMP_ECHO_REQ, profile.agent_addr, SIGNAL_ADDR, transport=Transport.ICMP, payload_len=size)
        b.emit(EventType.ICMP_ECHO_REPLY, SIGNAL_ADDR, profile.agent_addr, transport=Transport.ICMP, payload_len=size)


def web_protocol_events(b: TraceBuilder, profile: SynthProfile, intensity: int) -> None:
    host = f"collect.{EXFIL_DOMAIN}"
    for _ in range(intensity):
        sport = b.ephemeral_port()
        b.emit(EventType.TCP_CONN, profile.agent_addr, EXFIL_ADDR, sport, 80, Transport.TCP, tcp_flags="S")
        b.emit(
            EventType.HTTP_REQ, profile.agent_addr, EXFIL_ADDR, sport, 80, Transport.TCP,
            method="POST", host=host, path=f"/upload/{encoded_label(b.rng, 24, 40)}",
        )
        b.emit(EventType.HTTP_RESP, EXFIL_ADDR, profile.agent_addr, 80, sport, Transport.TCP, status=200)


GENERATORS: Dict[str, Generator] = {
    "Network_Device_Configuration_Dump": config_dump_events,
    "Standard_Encoding": dns_encoding_events,
    "Traffic_Signaling": signaling_events,
    "Web_Protocols": web_protocol_events,
}


def register_generator(technique: str, generator: Generator, default_intensity: int = 5) -> None:
    if technique == BENIGN:
        raise ValueError("the benign template is built in and cannot be replaced")
    GENERATORS[technique] = generator
    DEFAULT_INTENSITY.setdefault(technique, default_intensity)


def generator_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(label.encode("utf-8"))])


def synth_benign(seed: int, profile: Optional[SynthProfile] = None, session_id: str = "") -> EventTrace:
    profile = profile or SynthProfile()
    b = TraceBuilder(generator_rng(seed, BENIGN))
    _envelope(b, profile)
    return b.build(session_id)


def _canary(b: TraceBuilder, profile: SynthProfile) -> None:
    b.emit(
        EventType.ICMP_ECHO_REQ, profile.agent_addr, profile.canary_addr,
        transport=Transport.ICMP, payload_len=CANARY_PAYLOAD,
    )
    b.emit(
        EventType.ICMP_ECHO_REPLY, profile.canary_addr, profile.agent_addr,
        transport=Transport.ICMP, payload_len=CANARY_PAYLOAD,
    )


def synth_technique(
    technique: str,
    seed: int,
    intensity: Optional[int] = None,
    profile: Optional[SynthProfile] = None,
    session_id: str = "",
) -> EventTrace:
    """
    A benign envelope whose last tool call performs `technique` between its model request and
    response, followed by the canary echo.
    """
    if technique not in GENERATORS:
        raise UnknownTechnique(f"no generator registered for technique {technique!r}")
    intensity = DEFAULT_INTENSITY[technique] if intensity is None else intensity
    if intensity < 0:
        raise ValueError(f"intensity must be >= 0, got {intensity}")
    profile = profile or SynthProfile()
    b = TraceBuilder(generator_rng(seed, technique))
    generator = GENERATORS[technique]
    _envelope(b, profile, lambda: generator(b, profile, intensity))
    _canary(b, profile)
    return b.build(session_id)


def synth_trace(
    label: str,
    seed: int,
    intensity: Optional[int] = None,
    profile: Optional[SynthProfile] = None,
    session_id: str = "",
) -> EventTrace:
    if label == BENIGN:
        return synth_benign(seed, profile, session_id=session_id)
    return synth_technique(label, seed, intensity, profile, session_id=session_id)


def verify_attack_activation(trace: EventTrace, canary_addr: str = "192.0.2.1") -> bool:
    return any(e.event_type is EventType.ICMP_ECHO_REQ and e.dst == canary_addr for e in trace.events)
