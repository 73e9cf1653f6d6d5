import numpy as np
import pytest

from tracewarden.config import EndpointConfig, SynthConfig
from tracewarden.errors import UnknownTechnique
from tracewarden.models.catalog import BENIGN
from tracewarden.models.events import EventType, TraceOrigin, Transport
from tracewarden.synth import (
    DEFAULT_INTENSITY,
    GENERATORS,
    SynthProfile,
    register_generator,
    synth_benign,
    synth_technique,
    synth_trace,
    verify_attack_activation,
)

ENVELOPE = [EventType.DNS_Q, EventType.DNS_A, EventType.TCP_CONN, EventType.TLS_CH, EventType.HTTP_REQ, EventType.HTTP_RESP]


def test_benign_template():
    trace = synth_benign(0, session_id="b0")
    assert [e.event_type for e in trace] == ENVELOPE
    assert trace.origin is TraceOrigin.SYNTHETIC
    assert trace.session_id == "b0"
    assert trace[4].attr("path") == "/v1/chat/completions"


def test_same_seed_same_trace():
    for label in [BENIGN, *GENERATORS]:
        assert synth_trace(label, 42) == synth_trace(label, 42)


def test_seed_and_label_select_independent_streams():
    assert synth_benign(1) != synth_benign(2)
    benign = synth_benign(1)
    technique = synth_technique("Web_Protocols", 1)
    assert benign[0].timestamp != technique[0].timestamp


@pytest.mark.parametrize("technique", sorted(GENERATORS))
def test_canary_fires_for_every_technique(technique):
    trace = synth_technique(technique, 9)
    assert verify_attack_activation(trace)
    assert trace[-1].event_type is EventType.ICMP_ECHO_REPLY
    assert trace[-1].attr("payload_len") == "56"


def test_benign_traces_never_touch_the_canary():
    assert not any(verify_attack_activation(synth_benign(seed)) for seed in range(50))


def test_technique_runs_inside_the_model_call():
    trace = synth_technique("Network_Device_Configuration_Dump", 4)
    types = [e.event_type for e in trace]
    request = types.index(EventType.HTTP_REQ)
    response = types.index(EventType.HTTP_RESP)
    assert all(t is EventType.SNMP_REQ or t is EventType.SNMP_RESP for t in types[request + 1 : request + 41])
    assert types[response - 2 : response] == [EventType.ARP_REQ, EventType.ARP_REPLY]


def test_intensity_controls_volume():
    default = synth_technique("Network_Device_Configuration_Dump", 0)
    assert sum(e.event_type is EventType.SNMP_REQ for e in default) == DEFAULT_INTENSITY["Network_Device_Configuration_Dump"]
    quiet = synth_technique("Network_Device_Configuration_Dump", 0, intensity=0)
    assert not any(e.event_type is EventType.SNMP_REQ for e in quiet)
    assert verify_attack_activation(quiet)
    with pytest.raises(ValueError):
        synth_technique("Traffic_Signaling", 0, intensity=-1)


def test_clock_gaps_stay_in_range():
    for label in [BENIGN, *GENERATORS]:
        ts = np.array([e.timestamp for e in synth_trace(label, 5)])
        gaps = np.diff(ts)
        assert np.all(gaps >= 0.005 - 1e-9)
        assert np.all(gaps <= 0.050 + 1e-9)


def test_encoded_labels_are_high_entropy():
    trace = synth_technique("Standard_Encoding", 2)
    exfil = [e.attr("qname") for e in trace if e.event_type is EventType.DNS_Q and "exfil" in e.attr("qname")]
    assert len(exfil) == DEFAULT_INTENSITY["Standard_Encoding"]
    assert all(len(q.split(".")[0]) >= 20 for q in exfil)


def test_profile_cycles_endpoints():
    endpoints = [EndpointConfig("a.llm.example", "10.1.0.1"), EndpointConfig("b.llm.example", "10.1.0.2")]
    profile = SynthProfile(n_tool_calls=3, endpoints=endpoints)
    trace = synth_benign(0, profile)
    assert len(trace) == 18
    assert [e.attr("sni") for e in trace if e.event_type is EventType.TLS_CH] == ["a.llm.example", "b.llm.example", "a.llm.example"]


def test_profile_from_config():
    profile = SynthProfile.from_config(SynthConfig(agent_addr="10.9.0.2"), n_tool_calls=2)
    assert profile.agent_addr == "10.9.0.2"
    assert profile.n_tool_calls == 2
    with pytest.raises(ValueError):
        SynthProfile(n_tool_calls=-1)
    with pytest.raises(ValueError):
        SynthProfile(endpoints=[])


def test_zero_tool_calls():
    assert len(synth_benign(0, SynthProfile(n_tool_calls=0))) == 0
    trace = synth_technique("Traffic_Signaling", 0, profile=SynthProfile(n_tool_calls=0))
    assert verify_attack_activation(trace)
    assert trace[0].event_type is EventType.ICMP_ECHO_REQ


def test_unknown_technique():
    with pytest.raises(UnknownTechnique):
        synth_technique("Port_Knocking", 0)


def test_register_generator(monkeypatch):
    monkeypatch.setitem(GENERATORS, "Custom_Beacon", None)
    monkeypatch.setitem(DEFAULT_INTENSITY, "Custom_Beacon", 2)

    def beacon(b, profile, intensity):
        for _ in range(intensity):
            b.emit(EventType.UDP_DGRAM, profile.agent_addr, "198.51.100.7", 40000, 9999, Transport.UDP)

    register_generator("Custom_Beacon", beacon)
    trace = synth_technique("Custom_Beacon", 0)
    assert sum(e.event_type is EventType.UDP_DGRAM for e in trace) == 2
    with pytest.raises(ValueError):
        register_generator(BENIGN, beacon)
