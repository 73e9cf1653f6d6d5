import io
import ipaddress
import os
import struct
from dataclasses import dataclass, field
from typing import Any, BinaryIO, Dict, Iterator, List, Optional, Set, Tuple, Union

from scapy.error import Scapy_Exception
from scapy.layers.dns import DNS
from scapy.layers.http import HTTPRequest, HTTPResponse
from scapy.layers.inet import ICMP, IP, TCP, UDP
from scapy.layers.inet6 import ICMPv6EchoReply, ICMPv6EchoRequest, IPv6
from scapy.layers.l2 import ARP
from scapy.layers.tls.extensions import TLS_Ext_ServerName
from scapy.layers.tls.handshake import TLSClientHello
from scapy.layers.tls.record import TLS
from scapy.packet import Packet
from scapy.utils import PcapReader

from ..errors import MalformedCapture
from ..models.events import EventTrace, EventType, NetworkEvent, TraceOrigin, Transport
from ..utils.logging import get_logger
from .config_file import JsonFileMixin

logger = get_logger(__name__)  # pylint: disable=invalid-name

SERVICE_PORTS = {
    25: EventType.SMTP_CONN,
    587: EventType.SMTP_CONN,
    21: EventType.FTP_CONN,
    22: EventType.SSH_CONN,
    445: EventType.SMB_CONN,
    139: EventType.SMB_CONN,
    3389: EventType.RDP_CONN,
}
DB_PORTS = frozenset({3306, 5432, 27017, 6379, 1433})
SNMP_PORTS = frozenset({161, 162})

HTTP_METHODS = (b"GET ", b"POST ", b"PUT ", b"DELETE ", b"HEAD ", b"OPTIONS ", b"PATCH ", b"CONNECT ")

CaptureSource = Union[str, os.PathLike, bytes, bytearray, BinaryIO]


@dataclass(frozen=True)
class FilterPolicy(JsonFileMixin):
    denied_qname_suffixes: Tuple[str, ...] = ()
    denied_hosts: Tuple[str, ...] = ()
    denied_port_pairs: Tuple[Tuple[str, int], ...] = ()
    drop_proxy_internal: bool = False
    drop_bare_tcp_segments: bool = False

    default_file_name = "filter_policy.json"

    def __post_init__(self):
        suffixes = tuple(s.strip().lower().lstrip(".") for s in self.denied_qname_suffixes if s.strip())
        object.__setattr__(self, "denied_qname_suffixes", suffixes)
        object.__setattr__(self, "denied_hosts", tuple(self.denied_hosts))
        object.__setattr__(
            self, "denied_port_pairs", tuple((str(a), int(p)) for a, p in self.denied_port_pairs)
        )

    @classmethod
    def _from_json(cls, data: Any, **kwargs) -> "FilterPolicy":
        return cls(
            denied_qname_suffixes=tuple(data.get("denied_qname_suffixes", ())),
            denied_hosts=tuple(data.get("denied_hosts", ())),
            denied_port_pairs=tuple(tuple(p) for p in data.get("denied_port_pairs", ())),
            drop_proxy_internal=bool(data.get("drop_proxy_internal", False)),
            drop_bare_tcp_segments=bool(data.get("drop_bare_tcp_segments", False)),
        )

    def _to_json(self) -> Dict[str, Any]:
        return {
            "denied_qname_suffixes": list(self.denied_qname_suffixes),
            "denied_hosts": list(self.denied_hosts),
            "denied_port_pairs": [[a, p] for a, p in self.denied_port_pairs],
            "drop_proxy_internal": self.drop_proxy_internal,
            "drop_bare_tcp_segments": self.drop_bare_tcp_segments,
        }

    @property
    def is_empty(self) -> bool:
        return not (
            self.denied_qname_suffixes
            or self.denied_hosts
            or self.denied_port_pairs
            or self.drop_proxy_internal
            or self.drop_bare_tcp_segments
        )


@dataclass
class PacketSummary:
    """What the decoder learned about one captured frame; `map_packet` turns it into an event."""

    timestamp: float
    src: str = ""
    dst: str = ""
    sport: int = 0
    dport: int = 0
    transport: Transport = Transport.NONE
    pkt_len: int = 0
    payload_len: int = 0
    ttl: Optional[int] = None
    tcp_flags: Optional[str] = None
    repeated_syn: bool = False
    truncated: bool = False
    # protocol decodes
    dns_response: Optional[bool] = None
    dns_qname: Optional[str] = None
    dns_answers: List[str] = field(default_factory=list)
    tls_client_hello: bool = False
    tls_sni: Optional[str] = None
    http_method: Optional[str] = None
    http_host: Optional[str] = None
    http_path: Optional[str] = None
    http_status: Optional[int] = None
    icmp_type: Optional[int] = None
    icmp_echo: Optional[str] = None  # "request" | "reply"
    arp_op: Optional[int] = None
    arp_hwsrc: Optional[str] = None


@dataclass
class DecodeStats:
    packets: int = 0
    events: int = 0
    truncated: int = 0
    filtered: int = 0


def is_opening_syn(flags: Optional[str]) -> bool:
    """SYN without ACK or RST; ECN setup bits (E, C) do not matter."""
    return bool(flags) and "S" in flags and "A" not in flags and "R" not in flags


def _text(value: Any) -> str:
    if isinstance(value, bytes):
        return value.decode("utf-8", errors="replace")
    return str(value)


def _first_question(dns: DNS):
    qd = dns.qd
    if isinstance(qd, list):
        return qd[0] if qd else None
    return qd


def _answers(dns: DNS) -> List[Any]:
    an = dns.an
    if an is None:
        return []
    if isinstance(an, list):
        return an
    return [an[i] for i in range(dns.ancount or 0)]


def _decode_dns(summary: PacketSummary, dns: DNS) -> None:
    summary.dns_response = bool(dns.qr)
    question = _first_question(dns)
    if question is not None:
        summary.dns_qname = _text(question.qname).rstrip(".")
    for rr in _answers(dns):
        if getattr(rr, "type", None) in (1, 28) and getattr(rr, "rdata", None) is not None:
            summary.dns_answers.append(_text(rr.rdata))


def _decode_tls(summary: PacketSummary, payload: bytes) -> None:
    # record type 22 (handshake), handshake type 1 (client hello)
    if len(payload) < 6 or payload[0] != 0x16 or payload[1] != 0x03 or payload[5] != 0x01:
        return
    record = TLS(payload)
    if not record.haslayer(TLSClientHello):
        return
    summary.tls_client_hello = True
    for ext in record[TLSClientHello].ext or []:
        if isinstance(ext, TLS_Ext_ServerName) and ext.servernames:
            summary.tls_sni = _text(ext.servernames[0].servername)
            break


def _decode_http(summary: PacketSummary, payload: bytes) -> None:
    if payload.startswith(HTTP_METHODS):
        request = HTTPRequest(payload)
        summary.http_method = _text(request.Method or b"")
        summary.http_path = _text(request.Path or b"")
        summary.http_host = _text(request.Host) if request.Host else None
    elif payload.startswith(b"HTTP/"):
        response = HTTPResponse(payload)
        try:
            summary.http_status = int(response.Status_Code)
        except (TypeError, ValueError):
            summary.http_status = None


def summarize_packet(pkt: Packet, seen_syns: Optional[Set[Tuple[str, int, str, int]]] = None) -> PacketSummary:
    """
    Decode one scapy packet. `seen_syns` carries connection state across a capture so that SYN
    retransmissions are not counted as new connections.
    """
    summary = PacketSummary(timestamp=float(pkt.time), pkt_len=len(pkt))
    wirelen = getattr(pkt, "wirelen", None)
    if wirelen and wirelen > len(pkt):
        summary.truncated = True

    if pkt.haslayer(ARP):
        arp = pkt[ARP]
        summary.transport = Transport.ARP
        summary.src, summary.dst = str(arp.psrc), str(arp.pdst)
        summary.arp_op = int(arp.op)
        summary.arp_hwsrc = str(arp.hwsrc)
        return summary

    if pkt.haslayer(IP):
        ip = pkt[IP]
        summary.src, summary.dst, summary.ttl = str(ip.src), str(ip.dst), int(ip.ttl)
    elif pkt.haslayer(IPv6):
        ip6 = pkt[IPv6]
        summary.src, summary.dst, summary.ttl = str(ip6.src), str(ip6.dst), int(ip6.hlim)
    else:
        return summary

    if pkt.haslayer(TCP):
        tcp = pkt[TCP]
        payload = bytes(tcp.payload)
        summary.transport = Transport.TCP
        summary.sport, summary.dport = int(tcp.sport), int(tcp.dport)
        summary.tcp_flags = str(tcp.flags)
        summary.payload_len = len(payload)
        if is_opening_syn(summary.tcp_flags) and seen_syns is not None:
            key = (summary.src, summary.sport, summary.dst, summary.dport)
            summary.repeated_syn = key in seen_syns
            seen_syns.add(key)
        if pkt.haslayer(DNS) and 53 in (summary.sport, summary.dport):
            _decode_dns(summary, pkt[DNS])
        elif payload:
            _decode_tls(summary, payload)
            if not summary.tls_client_hello:
                _decode_http(summary, payload)
        return summary

    if pkt.haslayer(UDP):
        udp = pkt[UDP]
        summary.transport = Transport.UDP
        summary.sport, summary.dport = int(udp.sport), int(udp.dport)
        summary.payload_len = len(bytes(udp.payload))
        if pkt.haslayer(DNS) and 53 in (summary.sport, summary.dport):
            _decode_dns(summary, pkt[DNS])
        return summary

    if pkt.haslayer(ICMP):
        icmp = pkt[ICMP]
        summary.transport = Transport.ICMP
        summary.icmp_type = int(icmp.type)
        summary.payload_len = len(bytes(icmp.payload))
        if summary.icmp_type == 8:
            summary.icmp_echo = "request"
        elif summary.icmp_type == 0:
            summary.icmp_echo = "reply"
        return summary

    for layer, kind, icmp_type in ((ICMPv6EchoRequest, "request", 128), (ICMPv6EchoReply, "reply", 129)):
        if pkt.haslayer(layer):
            summary.transport = Transport.ICMP
            summary.icmp_type = icmp_type
            summary.icmp_echo = kind
            summary.payload_len = len(bytes(pkt[layer].data or b""))
            return summary

    icmp6_type = _icmpv6_type(pkt)
    if icmp6_type is not None:
        summary.transport = Transport.ICMP
        summary.icmp_type = icmp6_type

    return summary


def _icmpv6_type(pkt: Packet) -> Optional[int]:
    # follow the next-header chain through any extension headers to ICMPv6 (58)
    layer = pkt.getlayer(IPv6)
    while layer is not None and hasattr(layer, "nh"):
        if layer.nh == 58:
            message = bytes(layer.payload)
            return message[0] if message else None
        layer = layer.payload or None
    return None


def _other(summary: PacketSummary) -> NetworkEvent:
    attrs: Dict[str, object] = {"pkt_len": summary.pkt_len, "tcp_flags": summary.tcp_flags}
    if summary.icmp_type is not None:
        attrs["icmp_type"] = summary.icmp_type
    if summary.truncated:
        attrs["truncated"] = "true"
    return NetworkEvent.create(
        summary.timestamp,
        EventType.OTHER,
        summary.src,
        summary.dst,
        summary.sport,
        summary.dport,
        summary.transport,
        attrs,
        validate=False,
    )


def _tcp_event_type(summary: PacketSummary) -> Optional[EventType]:
    if summary.dns_qname is not None or summary.dns_response is not None:
        return EventType.DNS_A if summary.dns_response else EventType.DNS_Q
    if summary.tls_client_hello:
        return EventType.TLS_CH
    if summary.http_method:
        return EventType.HTTP_REQ
    if summary.http_status is not None:
        return EventType.HTTP_RESP
    if is_opening_syn(summary.tcp_flags) and not summary.repeated_syn:
        if summary.dport in SERVICE_PORTS:
            return SERVICE_PORTS[summary.dport]
        if summary.dport in DB_PORTS:
            return EventType.DB_CONN
        return EventType.TCP_CONN
    return None


def _udp_event_type(summary: PacketSummary) -> EventType:
    if summary.dns_response is not None:
        return EventType.DNS_A if summary.dns_response else EventType.DNS_Q
    if summary.dport in SNMP_PORTS:
        return EventType.SNMP_REQ
    if summary.sport in SNMP_PORTS:
        return EventType.SNMP_RESP
    return EventType.UDP_DGRAM


def map_packet(summary: PacketSummary) -> NetworkEvent:
    """Total, deterministic mapping from a decoded packet to one event. Unknown shapes become OTHER."""
    attrs: Dict[str, object] = {}
    event_type: Optional[EventType] = None

    if summary.transport is Transport.ARP:
        if summary.arp_op in (1, 2):
            event_type = EventType.ARP_REQ if summary.arp_op == 1 else EventType.ARP_REPLY
            if event_type is EventType.ARP_REPLY:
                attrs["mac"] = summary.arp_hwsrc
    elif summary.transport is Transport.ICMP:
        if summary.icmp_echo == "request":
            event_type = EventType.ICMP_ECHO_REQ
        elif summary.icmp_echo == "reply":
            event_type = EventType.ICMP_ECHO_REPLY
        elif summary.icmp_type is not None:
            event_type = EventType.ICMP_OTHER
            attrs["icmp_type"] = summary.icmp_type
        if event_type in (EventType.ICMP_ECHO_REQ, EventType.ICMP_ECHO_REPLY):
            attrs["payload_len"] = summary.payload_len
    elif summary.transport is Transport.TCP:
        event_type = _tcp_event_type(summary)
    elif summary.transport is Transport.UDP:
        event_type = _udp_event_type(summary)
        if event_type in (EventType.SNMP_REQ, EventType.SNMP_RESP, EventType.UDP_DGRAM):
            attrs["payload_len"] = summary.payload_len

    if event_type is None:
        return _other(summary)

    if event_type is EventType.DNS_Q:
        attrs["qname"] = summary.dns_qname
    elif event_type is EventType.DNS_A:
        for i, answer in enumerate(summary.dns_answers[:3]):
            attrs["answer_ip" if i == 0 else f"answer_ip{i + 1}"] = answer
        if not summary.dns_answers and summary.dns_qname:
            attrs["qname"] = summary.dns_qname
    elif event_type is EventType.TLS_CH:
        attrs["sni"] = summary.tls_sni
    elif event_type is EventType.HTTP_REQ:
        attrs.update(method=summary.http_method, host=summary.http_host, path=summary.http_path)
    elif event_type is EventType.HTTP_RESP:
        attrs["status"] = summary.http_status
    elif is_opening_syn(summary.tcp_flags):
        attrs["tcp_flags"] = summary.tcp_flags
    if summary.truncated:
        attrs["truncated"] = "true"

    return NetworkEvent.create(
        summary.timestamp,
        event_type,
        summary.src,
        summary.dst,
        summary.sport,
        summary.dport,
        summary.transport,
        attrs,
        validate=False,
    )


def _truncated_event(timestamp: float, pkt_len: int, reason: str) -> NetworkEvent:
    return NetworkEvent.create(
        timestamp,
        EventType.OTHER,
        "",
        "",
        attrs={"pkt_len": pkt_len, "truncated": "true", "error": reason},
        validate=False,
    )


def _is_loopback(addr: str) -> bool:
    try:
        return ipaddress.ip_address(addr).is_loopback
    except ValueError:
        return False


def _suffix_match(name: Optional[str], suffixes: Tuple[str, ...]) -> bool:
    if not name:
        return False
    name = name.lower().rstrip(".")
    return any(name == s or name.endswith("." + s) for s in suffixes)


def _is_bare_segment(e: NetworkEvent) -> bool:
    return e.event_type is EventType.OTHER and e.transport is Transport.TCP and e.attr("truncated") is None


def apply_filter(trace: EventTrace, policy: FilterPolicy) -> EventTrace:
    """Drop background noise. Survivors keep their relative order; applying twice equals applying once."""
    if policy.is_empty:
        return trace

    denied_hosts = set(policy.denied_hosts)
    denied_pairs = set(policy.denied_port_pairs)
    dropped_queries: Set[Tuple[str, int, str, int]] = set()
    kept: List[NetworkEvent] = []

    for e in trace.events:
        drop = False
        if policy.denied_qname_suffixes and any(
            _suffix_match(e.attr(key), policy.denied_qname_suffixes) for key in ("qname", "sni", "host")
        ):
            drop = True
        elif e.src in denied_hosts or e.dst in denied_hosts:
            drop = True
        elif (e.dst, e.dport) in denied_pairs or (e.src, e.sport) in denied_pairs:
            drop = True
        elif policy.drop_proxy_internal and _is_loopback(e.src) and _is_loopback(e.dst):
            drop = True
        elif policy.drop_bare_tcp_segments and _is_bare_segment(e):
            drop = True
        elif e.event_type is EventType.DNS_A and (e.dst, e.dport, e.src, e.sport) in dropped_queries:
            # answer to a query dropped above
            drop = True

        if drop:
            if e.event_type is EventType.DNS_Q:
                dropped_queries.add((e.src, e.sport, e.dst, e.dport))
            continue
        kept.append(e)

    return trace.with_events(kept)


def _open_capture(capture: CaptureSource):
    if isinstance(capture, (bytes, bytearray)):
        capture = io.BytesIO(bytes(capture))
    elif isinstance(capture, os.PathLike):
        capture = os.fspath(capture)
    try:
        return PcapReader(capture)
    except (Scapy_Exception, EOFError, OSError, ValueError) as e:
        if isinstance(e, FileNotFoundError):
            raise
        raise MalformedCapture(f"unreadable capture header: {e}") from e


def _reader_offset(reader) -> Optional[int]:
    try:
        return reader.f.tell()
    except (AttributeError, OSError, ValueError):
        return None


def _iter_records(reader) -> Iterator[Tuple[Optional[Packet], str]]:
    """
    Yield `(packet, "")` per record, or `(None, reason)` for a damaged record the reader could
    step over. Stops at EOF, or when a damaged record leaves the reader where it was.
    """
    while True:
        offset = _reader_offset(reader)
        try:
            pkt = reader.read_packet()
        except EOFError:
            return
        except (Scapy_Exception, ValueError, OSError, struct.error) as e:
            after = _reader_offset(reader)
            if offset is None or after is None or after <= offset:
                logger.warning(f"Stopped reading capture at a damaged record: {e}")
                return
            logger.warning(f"Skipped a damaged capture record at byte {offset}: {e}")
            yield None, type(e).__name__
            continue
        if pkt is None:
            return
        yield pkt, ""


def extract_events_with_stats(
    capture: CaptureSource,
    policy: Optional[FilterPolicy] = None,
    session_id: str = "",
) -> Tuple[EventTrace, DecodeStats]:
    policy = policy or FilterPolicy()
    stats = DecodeStats()
    events: List[NetworkEvent] = []
    seen_syns: Set[Tuple[str, int, str, int]] = set()

    reader = _open_capture(capture)
    try:
        last_ts = 0.0
        for pkt, damage in _iter_records(reader):
            stats.packets += 1
            if pkt is None:
                events.append(_truncated_event(last_ts, 0, damage))
                stats.truncated += 1
                continue
            last_ts = float(pkt.time)
            try:
                event = map_packet(summarize_packet(pkt, seen_syns))
            except Exception as e:  # a dissector bug must not lose the packet
                logger.debug(f"Packet {stats.packets} failed to decode: {e!r}")
                event = _truncated_event(float(pkt.time), len(pkt), type(e).__name__)
            if event.attr("truncated") is not None:
                stats.truncated += 1
            events.append(event)
    finally:
        reader.close()

    trace = EventTrace.from_events(events, session_id=session_id, origin=TraceOrigin.PCAP_ONLY)
    filtered = apply_filter(trace, policy)
    stats.filtered = len(trace) - len(filtered)
    stats.events = len(filtered)
    logger.info(
        f"Decoded {stats.packets} packets into {stats.events} events "
        f"({stats.filtered} filtered, {stats.truncated} truncated)"
    )
    return filtered, stats


def extract_events(
    capture: CaptureSource,
    policy: Optional[FilterPolicy] = None,
    session_id: str = "",
) -> EventTrace:
    trace, _ = extract_events_with_stats(capture, policy, session_id=session_id)
    return trace
