import json

import pytest
from scapy.layers.inet import IP, UDP
from scapy.layers.l2 import Ether
from scapy.packet import Raw
from scapy.utils import wrpcap

from tracewarden.cli import main
from tracewarden.utils import logging


@pytest.fixture
def restore_logging():
    yield
    logging.set_verbosity_warning()
    logging.enable_explicit_format()
    logging.enable_progress_bar()


def test_verbosity_round_trip(restore_logging):
    logging.set_verbosity_debug()
    assert logging.get_verbosity() == logging.DEBUG
    logging.set_verbosity_error()
    assert logging.get_verbosity() == logging.ERROR


def test_json_file_handler(tmp_path, restore_logging):
    path = tmp_path / "run.log"
    handler = logging.add_file_handler(str(path), json_lines=True)
    try:
        logging.get_logger("tracewarden.test").warning("disk almost full", extra={"fields": {"free_mb": 12}})
    finally:
        logging.remove_handler(handler)
    record = json.loads(path.read_text(encoding="utf-8").splitlines()[-1])
    assert record["level"] == "warning"
    assert record["logger"] == "tracewarden.test"
    assert record["msg"] == "disk almost full"
    assert record["free_mb"] == 12


def test_cli_log_file(tmp_path, capsys, restore_logging):
    pcap = tmp_path / "a.pcap"
    wrpcap(str(pcap), [Ether(src="02:00:00:00:00:01", dst="02:00:00:00:00:02") / IP(src="10.0.0.1", dst="10.0.0.2") / UDP(sport=40000, dport=9999) / Raw(b"x")])
    log = tmp_path / "cli.log"
    code = main(["-v", "--log-file", str(log), "--log-json", "extract", str(pcap), "-o", str(tmp_path / "a.jsonl")])
    capsys.readouterr()
    assert code == 0
    messages = [json.loads(line)["msg"] for line in log.read_text(encoding="utf-8").splitlines()]
    assert any(m.startswith("Decoded 1 packets") for m in messages)


def test_quiet_disables_progress_bars(tmp_path, capsys, restore_logging):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"entries": [{"label": "benign", "count": 1}]}), encoding="utf-8")
    assert main(["-q", "synth", "--spec", str(spec), "-o", str(tmp_path / "c")]) == 0
    capsys.readouterr()
    assert not logging.is_progress_bar_enabled()
