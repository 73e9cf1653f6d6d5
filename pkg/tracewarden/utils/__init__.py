from .logging import get_logger
from .prompt import PROMPT_TEMPLATE, build_prompt
