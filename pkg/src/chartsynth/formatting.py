"""Number and value rendering shared across the toolkit.

Two renderers exist on purpose: chart files and linearized tables must
round-trip exactly (`format_value`), while answer strings are clipped to
two decimals (`format_number`). Mixing them up breaks either the
serialization round-trip or answer consistency between the template
pipeline and the executor.
"""

from __future__ import annotations

import math


def format_value(x: float) -> str:
    """Exact text form of a finite float, without a trailing ".0".

    Uses the shortest repr, so ``float(format_value(x)) == x`` always
    holds. "1.0" renders as "1", "2.5" stays "2.5".
    """
    if not math.isfinite(x):
        raise ValueError(f"cannot render non-finite value {x!r}")
    text = repr(float(x))
    if text.endswith(".0"):
        text = text[:-2]
    return text


def format_number(x: float) -> str:
    """Answer-grade rendering: at most two decimals, trailing zeros trimmed."""
    if not math.isfinite(x):
        raise ValueError(f"cannot render non-finite value {x!r}")
    text = f"{x:.2f}"
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if text in ("-0", ""):
        text = "0"
    return text


def bool_text(flag: bool) -> str:
    return "Yes" if flag else "No"
