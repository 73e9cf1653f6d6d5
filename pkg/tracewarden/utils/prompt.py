import re
from typing import TYPE_CHECKING

from ..errors import EmptyCatalog

if TYPE_CHECKING:
    from ..models.catalog import TechniqueCatalog

PROMPT_TEMPLATE = """You are a cybersecurity analyst detecting specific attack techniques from network traffic patterns.

TECHNIQUES:
{techniques_str}

NETWORK TRAFFIC:
{context}

Instructions:
1. Match the observed behavior to ONE specific technique from the list above.
2. Only return the EXACT technique name from the list, or "benign" if no attack detected. Nothing else should be returned.
"""

_PLACEHOLDER = re.compile(r"\{(techniques_str|context)\}")


def format_techniques(catalog: "TechniqueCatalog") -> str:
    return "\n".join(f"- {t.name}: {t.description}" for t in catalog.techniques)


def build_prompt(catalog: "TechniqueCatalog", context: str) -> str:
    if not len(catalog.techniques):
        raise EmptyCatalog("cannot build a detection prompt from an empty technique catalog")
    values = {"techniques_str": format_techniques(catalog), "context": context}
    # one pass over the template; substituted text is never rescanned
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], PROMPT_TEMPLATE)
