"""Give-and-take file exchange: schedulers, probability bounds, and Monte Carlo harness."""
from .core import (
    ExchangeEvent,
    FileSet,
    GTViolation,
    Instance,
    Schedule,
    achievable_universe,
    apply_schedule,
    exchange,
    gt_satisfied,
    satisfied_count,
)

__all__ = [
    "ExchangeEvent",
    "FileSet",
    "GTViolation",
    "Instance",
    "Schedule",
    "achievable_universe",
    "apply_schedule",
    "exchange",
    "gt_satisfied",
    "satisfied_count",
]
__version__ = "0.1.0"
