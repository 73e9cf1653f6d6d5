from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Iterable, Iterator, Mapping, Optional, Sequence, Tuple, Union

from ..errors import (
    DuplicateAttrKey,
    InvalidEvent,
    InvalidPort,
    InvalidRecord,
    TypeTransportMismatch,
)

# Recognised attribute keys, in canonical rendering order. Anything else follows
# lexicographically.
ATTR_KEYS = (
    "qname",
    "answer_ip",
    "sni",
    "method",
    "host",
    "path",
    "status",
    "pkt_len",
    "payload_len",
    "tcp_flags",
    "ttl",
    "icmp_type",
    "body_excerpt",
    "duration_ms",
)
_ATTR_RANK = {key: i for i, key in enumerate(ATTR_KEYS)}

AttrItems = Tuple[Tuple[str, str], ...]
AttrInput = Union[Mapping[str, object], Iterable[Tuple[str, object]], None]


class Transport(str, Enum):
    TCP = "TCP"
    UDP = "UDP"
    ICMP = "ICMP"
    ARP = "ARP"
    NONE = "NONE"


class EventCategory(str, Enum):
    RESOLUTION = "resolution"
    TRANSPORT = "transport"
    APPLICATION = "application"
    SIGNALING = "signaling"
    LINK = "link"
    SERVICE = "service"


class EventType(str, Enum):
    DNS_Q = "DNS_Q"
    DNS_A = "DNS_A"
    TLS_CH = "TLS_CH"
    HTTP_REQ = "HTTP_REQ"
    HTTP_RESP = "HTTP_RESP"
    ICMP_ECHO_REQ = "ICMP_ECHO_REQ"
    ICMP_ECHO_REPLY = "ICMP_ECHO_REPLY"
    ICMP_OTHER = "ICMP_OTHER"
    ARP_REQ = "ARP_REQ"
    ARP_REPLY = "ARP_REPLY"
    SNMP_REQ = "SNMP_REQ"
    SNMP_RESP = "SNMP_RESP"
    SMTP_CONN = "SMTP_CONN"
    FTP_CONN = "FTP_CONN"
    SSH_CONN = "SSH_CONN"
    SMB_CONN = "SMB_CONN"
    RDP_CONN = "RDP_CONN"
    DB_CONN = "DB_CONN"
    TCP_CONN = "TCP_CONN"
    UDP_DGRAM = "UDP_DGRAM"
    OTHER = "OTHER"

    @property
    def category(self) -> EventCategory:
        return _CATEGORIES[self]

    @property
    def allowed_transports(self) -> Tuple[Transport, ...]:
        return _ALLOWED_TRANSPORTS.get(self, tuple(Transport))

    @classmethod
    def parse(cls, name: str) -> "EventType":
        """Closed vocabulary: unknown names fold to OTHER."""
        try:
            return cls(name)
        except ValueError:
            return cls.OTHER


_CATEGORIES = {
    EventType.DNS_Q: EventCategory.RESOLUTION,
    EventType.DNS_A: EventCategory.RESOLUTION,
    EventType.TLS_CH: EventCategory.TRANSPORT,
    EventType.TCP_CONN: EventCategory.TRANSPORT,
    EventType.UDP_DGRAM: EventCategory.TRANSPORT,
    EventType.OTHER: EventCategory.TRANSPORT,
    EventType.HTTP_REQ: EventCategory.APPLICATION,
    EventType.HTTP_RESP: EventCategory.APPLICATION,
    EventType.ICMP_ECHO_REQ: EventCategory.SIGNALING,
    EventType.ICMP_ECHO_REPLY: EventCategory.SIGNALING,
    EventType.ICMP_OTHER: EventCategory.SIGNALING,
    EventType.ARP_REQ: EventCategory.LINK,
    EventType.ARP_REPLY: EventCategory.LINK,
    EventType.SNMP_REQ: EventCategory.SERVICE,
    EventType.SNMP_RESP: EventCategory.SERVICE,
    EventType.SMTP_CONN: EventCategory.SERVICE,
    EventType.FTP_CONN: EventCategory.SERVICE,
    EventType.SSH_CONN: EventCategory.SERVICE,
    EventType.SMB_CONN: EventCategory.SERVICE,
    EventType.RDP_CONN: EventCategory.SERVICE,
    EventType.DB_CONN: EventCategory.SERVICE,
}

_TCP = (Transport.TCP,)
_ALLOWED_TRANSPORTS = {
    EventType.DNS_Q: (Transport.UDP, Transport.TCP),
    EventType.DNS_A: (Transport.UDP, Transport.TCP),
    EventType.TLS_CH: _TCP,
    EventType.TCP_CONN: _TCP,
    EventType.UDP_DGRAM: (Transport.UDP,),
    EventType.HTTP_REQ: _TCP,
    EventType.HTTP_RESP: _TCP,
    EventType.ICMP_ECHO_REQ: (Transport.ICMP,),
    EventType.ICMP_ECHO_REPLY: (Transport.ICMP,),
    EventType.ICMP_OTHER: (Transport.ICMP,),
    EventType.ARP_REQ: (Transport.ARP,),
    EventType.ARP_REPLY: (Transport.ARP,),
    EventType.SNMP_REQ: (Transport.UDP,),
    EventType.SNMP_RESP: (Transport.UDP,),
    EventType.SMTP_CONN: _TCP,
    EventType.FTP_CONN: _TCP,
    EventType.SSH_CONN: _TCP,
    EventType.SMB_CONN: _TCP,
    EventType.RDP_CONN: _TCP,
    EventType.DB_CONN: _TCP,
}


def attr_sort_key(key: str) -> Tuple[int, str]:
    return (_ATTR_RANK.get(key, len(ATTR_KEYS)), key)


def canonical_attrs(attrs: AttrInput) -> AttrItems:
    """
    Normalise an attribute mapping (or sequence of pairs) into the canonical ordered tuple.

    Values are flattened to text; `None` values are dropped. A key repeated inside a pair
    sequence raises `DuplicateAttrKey`.
    """
    if attrs is None:
        return ()
    items = attrs.items() if isinstance(attrs, Mapping) else attrs
    seen: Dict[str, str] = {}
    for key, value in items:
        if key in seen:
            raise DuplicateAttrKey(f"attribute key {key!r} appears more than once")
        if value is None:
            continue
        seen[str(key)] = value if isinstance(value, str) else _flatten(value)
    return tuple(sorted(seen.items(), key=lambda kv: attr_sort_key(kv[0])))


def _flatten(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, bytes):
        return value.decode("utf-8", errors="replace")
    return str(value)


def round_timestamp(ts: float) -> float:
    return round(float(ts), 6)


@dataclass(frozen=True)
class NetworkEvent:
    timestamp: float
    event_type: EventType
    src: str
    dst: str
    sport: int = 0
    dport: int = 0
    transport: Transport = Transport.NONE
    attrs: AttrItems = ()

    @classmethod
    def create(
        cls,
        timestamp: float,
        event_type: Union[EventType, str],
        src: str,
        dst: str,
        sport: int = 0,
        dport: int = 0,
        transport: Union[Transport, str] = Transport.NONE,
        attrs: AttrInput = None,
        validate: bool = True,
    ) -> "NetworkEvent":
        event = cls(
            timestamp=round_timestamp(timestamp),
            event_type=event_type if isinstance(event_type, EventType) else EventType.parse(event_type),
            src=str(src),
            dst=str(dst),
            sport=int(sport),
            dport=int(dport),
            transport=Transport(transport),
            attrs=canonical_attrs(attrs),
        )
        if validate:
            validate_event(event)
        return event

    def attr(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.attrs:
            if k == key:
                return v
        return default

    @property
    def attr_map(self) -> Dict[str, str]:
        return dict(self.attrs)

    def with_attrs(self, **extra: object) -> "NetworkEvent":
        merged = dict(self.attrs)
        merged.update(extra)
        return replace(self, attrs=canonical_attrs(merged))

    def to_dict(self) -> Dict[str, object]:
        return {
            "timestamp": self.timestamp,
            "event_type": self.event_type.value,
            "src": self.src,
            "dst": self.dst,
            "sport": self.sport,
            "dport": self.dport,
            "transport": self.transport.value,
            "attrs": dict(self.attrs),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "NetworkEvent":
        return cls.create(
            timestamp=float(data["timestamp"]),
            event_type=str(data["event_type"]),
            src=str(data.get("src", "")),
            dst=str(data.get("dst", "")),
            sport=int(data.get("sport", 0) or 0),
            dport=int(data.get("dport", 0) or 0),
            transport=str(data.get("transport", "NONE")),
            attrs=data.get("attrs") or {},
        )


def validate_event(e: NetworkEvent) -> None:
    """Raise the error naming the first violated NetworkEvent constraint; return None otherwise."""
    if e.timestamp < 0:
        raise InvalidEvent(f"timestamp must be >= 0, got {e.timestamp}")
    for name, port in (("sport", e.sport), ("dport", e.dport)):
        if not 0 <= port <= 65535:
            raise InvalidPort(f"{name}={port} outside 0-65535")
    if e.transport not in e.event_type.allowed_transports:
        allowed = ", ".join(t.value for t in e.event_type.allowed_transports)
        raise TypeTransportMismatch(
            f"{e.event_type.value} requires transport in {{{allowed}}}, got {e.transport.value}"
        )
    keys = [k for k, _ in e.attrs]
    if len(keys) != len(set(keys)):
        raise DuplicateAttrKey(f"duplicate attribute keys in {keys}")


def compare_events(a: NetworkEvent, rank_a: int, b: NetworkEvent, rank_b: int) -> int:
    """Total order: timestamp first, insertion rank on ties. Returns -1, 0 or 1."""
    key_a = (a.timestamp, rank_a)
    key_b = (b.timestamp, rank_b)
    if key_a < key_b:
        return -1
    if key_a > key_b:
        return 1
    return 0


class TraceOrigin(str, Enum):
    PCAP_ONLY = "pcap_only"
    MERGED = "merged"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class EventTrace:
    events: Tuple[NetworkEvent, ...] = ()
    session_id: str = ""
    origin: TraceOrigin = TraceOrigin.PCAP_ONLY

    @classmethod
    def from_events(
        cls,
        events: Iterable[NetworkEvent],
        session_id: str = "",
        origin: Union[TraceOrigin, str] = TraceOrigin.PCAP_ONLY,
    ) -> "EventTrace":
        # insertion rank is the input position; a stable sort keeps it on timestamp ties
        ranked = list(events)
        ordered = sorted(range(len(ranked)), key=lambda i: (ranked[i].timestamp, i))
        return cls(
            events=tuple(ranked[i] for i in ordered),
            session_id=session_id,
            origin=TraceOrigin(origin),
        )

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[NetworkEvent]:
        return iter(self.events)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return replace(self, events=self.events[index])
        return self.events[index]

    def is_ordered(self) -> bool:
        return all(
            self.events[i].timestamp <= self.events[i + 1].timestamp
            for i in range(len(self.events) - 1)
        )

    def with_events(self, events: Sequence[NetworkEvent]) -> "EventTrace":
        return replace(self, events=tuple(events))


class Direction(str, Enum):
    REQUEST = "request"
    RESPONSE = "response"


@dataclass(frozen=True)
class DecryptedRecord:
    timestamp: float
    direction: Direction
    client: str
    server: str
    server_port: int
    host: str = ""
    path: str = ""
    method: Optional[str] = None
    status: Optional[int] = None
    body_excerpt: str = ""
    duration_ms: Optional[float] = None

    def validate(self) -> "DecryptedRecord":
        if self.timestamp < 0:
            raise InvalidRecord(f"timestamp must be >= 0, got {self.timestamp}")
        if not 0 <= self.server_port <= 65535:
            raise InvalidRecord(f"server_port={self.server_port} outside 0-65535")
        if self.direction is Direction.REQUEST:
            if not self.method:
                raise InvalidRecord("request record needs a method")
            if self.status is not None:
                raise InvalidRecord("request record must not carry a status")
        else:
            if self.status is None or not 100 <= self.status <= 599:
                raise InvalidRecord(f"response status must be in 100-599, got {self.status}")
            if self.duration_ms is not None and self.duration_ms < 0:
                raise InvalidRecord(f"duration_ms must be >= 0, got {self.duration_ms}")
        return self

    def to_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {
            "ts": self.timestamp,
            "direction": self.direction.value,
            "client": self.client,
            "server": self.server,
            "server_port": self.server_port,
        }
        if self.direction is Direction.REQUEST:
            data.update(method=self.method, host=self.host, path=self.path)
        else:
            data["status"] = self.status
            if self.duration_ms is not None:
                data["duration_ms"] = self.duration_ms
        if self.body_excerpt:
            data["body_excerpt"] = self.body_excerpt
        return data
