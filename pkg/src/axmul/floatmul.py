"""Single-precision multiplier datapath with a pluggable mantissa multiplier.

All multiply functions accept scalars or numpy arrays and return float32
(0-d arrays come back as ``np.float32``).  Subnormal operands and results are
flushed to signed zero on the emulated datapath; rounding is to nearest even.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .adders import DEFAULT_ROLES, AdderKind, CellRoles, array_multiply_packed

QNAN_BITS = 0x7FC00000
INF_BITS = 0x7F800000
FRAC_BITS = 23
FRAC_MASK = (1 << FRAC_BITS) - 1
HIDDEN_BIT = 1 << FRAC_BITS
BIAS = 127
SIGNIFICAND_WIDTH = 24


class Backend(enum.Enum):
    NATIVE = "exact"          # platform IEEE multiply
    EXACT_FPM = "exact-fpm"   # emulated datapath, exact adders
    AX_FPM = "ama5"           # emulated datapath, AMA5 adders
    BFLOAT16 = "bf16"


@dataclass(frozen=True)
class MultiplierConfig:
    backend: Backend = Backend.NATIVE
    roles: CellRoles = field(default=DEFAULT_ROLES)

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))

    @property
    def adder(self) -> AdderKind:
        return AdderKind.AMA5 if self.backend is Backend.AX_FPM else AdderKind.EXACT

    @property
    def name(self) -> str:
        if self.backend is Backend.AX_FPM and self.roles != DEFAULT_ROLES:
            return f"{self.backend.value}[{self.roles}]"
        return self.backend.value

    def to_dict(self) -> dict:
        return {"backend": self.backend.value, "roles": str(self.roles)}

    @classmethod
    def parse(cls, backend: str, roles: str | None = None) -> "MultiplierConfig":
        r = CellRoles.parse(roles) if roles else DEFAULT_ROLES
        return cls(Backend(backend), r)


NATIVE = MultiplierConfig(Backend.NATIVE)
EXACT_FPM = MultiplierConfig(Backend.EXACT_FPM)
AX_FPM = MultiplierConfig(Backend.AX_FPM)
BFLOAT16 = MultiplierConfig(Backend.BFLOAT16)


class FloatParts(NamedTuple):
    sign: int
    biased_exponent: int
    fraction: int


def to_bits(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float32).view(np.uint32)


def from_bits(bits):
    out = np.asarray(bits, dtype=np.uint32).view(np.float32)
    return out[()] if out.ndim == 0 else out


def decompose(x) -> FloatParts:
    bits = int(to_bits(x))
    return FloatParts(bits >> 31, (bits >> FRAC_BITS) & 0xFF, bits & FRAC_MASK)


def compose(p: FloatParts) -> np.float32:
    sign, exp, frac = p
    if sign not in (0, 1) or not 0 <= exp <= 255 or not 0 <= frac <= FRAC_MASK:
        raise ValueError(f"field out of range: {p}")
    return from_bits(np.uint32((sign << 31) | (exp << FRAC_BITS) | frac))


def reference_multiply(x, y):
    """Correctly rounded IEEE binary32 product (platform arithmetic)."""
    out = np.multiply(np.asarray(x, dtype=np.float32), np.asarray(y, dtype=np.float32))
    return out[()] if np.ndim(out) == 0 else out


def fpm_multiply(x, y, cfg: MultiplierConfig = EXACT_FPM):
    """Emulated binary32 multiply: exact exponent adder, configurable mantissa array."""
    if cfg.backend not in (Backend.EXACT_FPM, Backend.AX_FPM):
        raise ValueError(f"fpm_multiply needs an emulated backend, got {cfg.backend.value}")
    bx, by = np.broadcast_arrays(to_bits(x), to_bits(y))
    bx = bx.astype(np.int64)
    by = by.astype(np.int64)
    sign = ((bx ^ by) >> 31) & 1
    ex = (bx >> FRAC_BITS) & 0xFF
    ey = (by >> FRAC_BITS) & 0xFF
    fx = bx & FRAC_MASK
    fy = by & FRAC_MASK

    nan = ((ex == 255) & (fx != 0)) | ((ey == 255) & (fy != 0))
    inf = ((ex == 255) | (ey == 255)) & ~nan
    # zeros and subnormals both read as zero (flush-to-zero on input)
    zero = (ex == 0) | (ey == 0)
    inf_times_zero = inf & zero
    normal = ~(nan | inf | zero)

    ma = np.where(normal, fx | HIDDEN_BIT, 0).astype(np.uint64)
    mb = np.where(normal, fy | HIDDEN_BIT, 0).astype(np.uint64)
    prod = array_multiply_packed(ma, mb, SIGNIFICAND_WIDTH, cfg.adder, cfg.roles).astype(np.int64)

    top = (prod >> 47) & 1
    shift = FRAC_BITS + top
    frac = (prod >> shift) & FRAC_MASK
    guard = (prod >> (shift - 1)) & 1
    sticky = (prod & ((np.int64(1) << (shift - 1)) - 1)) != 0
    round_up = (guard == 1) & (sticky | ((frac & 1) == 1))
    frac = frac + round_up
    carry = frac >> FRAC_BITS
    frac = frac & FRAC_MASK
    exp = ex + ey - BIAS + top + carry

    overflow = exp >= 255
    underflow = exp <= 0
    bits = (sign << 31) | (np.clip(exp, 0, 255) << FRAC_BITS) | frac
    bits = np.where(overflow, (sign << 31) | INF_BITS, bits)
    bits = np.where(underflow, sign << 31, bits)

    bits = np.where(zero, sign << 31, bits)
    bits = np.where(inf, (sign << 31) | INF_BITS, bits)
    bits = np.where(nan | inf_times_zero, QNAN_BITS, bits)
    return from_bits(bits.astype(np.uint32))


def bf16_truncate(x):
    """Drop the low 16 bits of the binary32 pattern."""
    return from_bits(to_bits(x) & np.uint32(0xFFFF0000))


def bf16_round(x):
    """Round binary32 values to the nearest bfloat16 value, ties to even."""
    bits = to_bits(x).astype(np.uint64)
    lsb = (bits >> np.uint64(16)) & np.uint64(1)
    rounded = ((bits + np.uint64(0x7FFF) + lsb) & np.uint64(0xFFFF0000)).astype(np.uint32)
    nan = np.isnan(np.asarray(x, dtype=np.float32))
    rounded = np.where(nan, np.uint32(QNAN_BITS), rounded)
    return from_bits(rounded)


def bf16_multiply(x, y):
    """Bfloat16 multiply: truncate operands, exact product, round the result."""
    tx = np.asarray(bf16_truncate(x), dtype=np.float64)
    ty = np.asarray(bf16_truncate(y), dtype=np.float64)
    # 8-bit significands: the float64 product is exact, and so is the float32
    # cast whenever the result is a normal binary32 number.
    with np.errstate(over="ignore", invalid="ignore"):
        prod = (tx * ty).astype(np.float32)
    return bf16_round(prod)


def multiply(x, y, cfg: MultiplierConfig = NATIVE):
    """Dispatch an elementwise binary32 multiply to the configured backend."""
    if cfg.backend is Backend.NATIVE:
        return reference_multiply(x, y)
    if cfg.backend is Backend.BFLOAT16:
        return bf16_multiply(x, y)
    return fpm_multiply(x, y, cfg)
