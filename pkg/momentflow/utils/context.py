"""Run context for momentflow commands"""
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

DEFAULT_ELEMENT_BUDGET = 2 ** 26
DEFAULT_MC_CHUNK = 5000
HANDLER_NAME = 'momentflow-stderr'


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")
    if value < 1:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


@dataclass
class RunContext:
    """Context object for CLI commands"""
    debug: bool = False
    threads: Optional[int] = None
    element_budget: Optional[int] = None
    mc_chunk: Optional[int] = None
    _configured: bool = field(default=False, repr=False)

    def __post_init__(self):
        # Explicit values win over the environment
        if self.threads is None:
            self.threads = _env_int('MOMENTFLOW_THREADS', 1)
        if self.element_budget is None:
            self.element_budget = _env_int('MOMENTFLOW_ELEMENT_BUDGET', DEFAULT_ELEMENT_BUDGET)
        if self.mc_chunk is None:
            self.mc_chunk = _env_int('MOMENTFLOW_MC_CHUNK', DEFAULT_MC_CHUNK)

    def configure_logging(self):
        """Route the momentflow logger to the current stderr"""
        if self._configured:
            return
        logger = logging.getLogger('momentflow')
        logger.setLevel(logging.DEBUG if self.debug else logging.WARNING)
        # Replace any handler bound to an earlier stderr
        for old in [h for h in logger.handlers if h.get_name() == HANDLER_NAME]:
            logger.removeHandler(old)
        handler = logging.StreamHandler(sys.stderr)
        handler.set_name(HANDLER_NAME)
        handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
        logger.addHandler(handler)
        self._configured = True
