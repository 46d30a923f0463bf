"""Bit-exact emulation of an AMA5-based approximate floating-point multiplier.

Includes a small CNN engine that runs on it and the experiments that probe
its effect on adversarial robustness.
"""

from .adders import AdderKind, CellRoles, Word, array_multiply, full_add_ama5, full_add_exact, ripple_add
from .floatmul import (
    AX_FPM,
    BFLOAT16,
    EXACT_FPM,
    NATIVE,
    Backend,
    FloatParts,
    MultiplierConfig,
    bf16_multiply,
    bf16_truncate,
    compose,
    decompose,
    fpm_multiply,
    multiply,
    reference_multiply,
)

__version__ = "0.1.0"

__all__ = [
    "AX_FPM",
    "BFLOAT16",
    "EXACT_FPM",
    "NATIVE",
    "AdderKind",
    "Backend",
    "CellRoles",
    "FloatParts",
    "MultiplierConfig",
    "Word",
    "array_multiply",
    "bf16_multiply",
    "bf16_truncate",
    "compose",
    "decompose",
    "fpm_multiply",
    "full_add_ama5",
    "full_add_exact",
    "multiply",
    "reference_multiply",
    "ripple_add",
]
