from pathlib import Path

import pytest

from tracewarden.errors import EmptyCatalog
from tracewarden.models.catalog import Technique, TechniqueCatalog
from tracewarden.utils.prompt import PROMPT_TEMPLATE, build_prompt
from tracewarden.utils.render import serialize_trace

FIXTURES = Path(__file__).parent / "fixtures"


def test_prompt_matches_golden(catalog, dns_pair):
    two = catalog.subset(["Network_Device_Configuration_Dump", "Standard_Encoding"])
    prompt = build_prompt(two, serialize_trace(dns_pair))
    assert prompt == (FIXTURES / "prompt_two_techniques.txt").read_text(encoding="utf-8")


def test_every_name_and_context_once(catalog, dns_pair):
    context = serialize_trace(dns_pair)
    prompt = build_prompt(catalog, context)
    assert prompt.count(context) == 1
    section = prompt.split("TECHNIQUES:\n", 1)[1].split("\n\nNETWORK TRAFFIC:", 1)[0]
    for name in catalog.names:
        assert section.count(f"- {name}: ") == 1


def test_empty_context_is_legal(catalog):
    prompt = build_prompt(catalog, "")
    assert "NETWORK TRAFFIC:\n\n\nInstructions:" in prompt


def test_braces_in_context_stay_literal(catalog):
    prompt = build_prompt(catalog, 'path="/{id}"')
    assert 'path="/{id}"' in prompt


def test_placeholders_in_substituted_text_stay_literal():
    odd = TechniqueCatalog(techniques=(Technique("Odd", "T0000", "mentions {context} and {techniques_str}"),))
    prompt = build_prompt(odd, "trace says {techniques_str}")
    assert "- Odd: mentions {context} and {techniques_str}\n" in prompt
    assert "NETWORK TRAFFIC:\ntrace says {techniques_str}\n" in prompt
    assert prompt.count("trace says") == 1


def test_backslashes_in_context_are_kept(catalog):
    assert "C:\\temp\\1" in build_prompt(catalog, "C:\\temp\\1")


def test_order_follows_catalog(catalog):
    reversed_catalog = catalog.subset(list(reversed(catalog.names)))
    a = build_prompt(catalog, "x").splitlines()
    b = build_prompt(reversed_catalog, "x").splitlines()
    assert sorted(a) == sorted(b)
    assert a != b


def test_empty_catalog():
    with pytest.raises(EmptyCatalog):
        build_prompt(TechniqueCatalog(), "x")


def test_template_instruction_wording():
    assert 'Only return the EXACT technique name from the list, or "benign" if no attack detected.' in PROMPT_TEMPLATE
