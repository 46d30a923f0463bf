"""Gate-level full adders and the carry-save array multiplier.

Two evaluations of the same array are provided:

* :func:`array_multiply` / :func:`array_multiply_cells` walk the array one
  adder cell at a time.  Bits may be Python ints or numpy integer arrays, so
  the cell walk doubles as a vectorized exhaustive checker.
* :func:`array_multiply_packed` evaluates a whole row of cells at once with
  word-wide bitwise operations.  Each cell only sees its own bit position, so
  this is bit-for-bit the same circuit; it is the fast path used by the
  floating-point datapath.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import permutations

import numpy as np

MAX_ARRAY_WIDTH = 32


class AdderKind(enum.Enum):
    EXACT = "exact"
    AMA5 = "ama5"


# Cell signals and adder ports.
SIGNALS = ("pp", "sum", "carry")
PORTS = ("a", "b", "cin")


@dataclass(frozen=True)
class CellRoles:
    """Which array signal drives which adder port.

    ``CellRoles("pp", "sum", "carry")`` (the default) feeds the partial
    product bit into A, the running sum into B and the running carry into Cin.
    """

    a: str = "pp"
    b: str = "sum"
    cin: str = "carry"

    def __post_init__(self):
        if sorted((self.a, self.b, self.cin)) != sorted(SIGNALS):
            raise ValueError(
                f"cell roles must be a permutation of {SIGNALS}, "
                f"got {(self.a, self.b, self.cin)}")

    @classmethod
    def parse(cls, text: str) -> "CellRoles":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated roles, got {text!r}")
        return cls(*parts)

    def route(self, pp, s, c):
        """Return the (A, B, Cin) port values for the given cell signals."""
        by_name = {"pp": pp, "sum": s, "carry": c}
        return by_name[self.a], by_name[self.b], by_name[self.cin]

    def __str__(self):
        return f"{self.a},{self.b},{self.cin}"


DEFAULT_ROLES = CellRoles()
ALL_ROLES = tuple(CellRoles(*p) for p in permutations(SIGNALS))


@dataclass(frozen=True)
class Word:
    """Fixed-width unsigned bit vector."""

    width: int
    value: int

    def __post_init__(self):
        if not 1 <= self.width <= 64:
            raise ValueError(f"word width must be in 1..64, got {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise ValueError(f"value {self.value} does not fit in {self.width} bits")

    def bit(self, k: int) -> int:
        return (self.value >> k) & 1

    def bits(self) -> list[int]:
        return [self.bit(k) for k in range(self.width)]

    @classmethod
    def from_bits(cls, bits) -> "Word":
        return cls(len(bits), sum(int(b) << k for k, b in enumerate(bits)))


def full_add_exact(a, b, cin):
    s = a ^ b ^ cin
    cout = (a & b) | (cin & (a ^ b))
    return s, cout


def full_add_ama5(a, b, cin):
    # Two buffers: Sum follows B, Cout follows A; the carry-in is not connected.
    return b, a


_CELLS = {
    AdderKind.EXACT: full_add_exact,
    AdderKind.AMA5: full_add_ama5,
}


def full_adder(kind: AdderKind):
    return _CELLS[AdderKind(kind)]


def ripple_add(x: Word, y: Word, adder: AdderKind = AdderKind.EXACT) -> tuple[Word, int]:
    """Ripple-carry add of two equal-width words; returns (sum, carry_out)."""
    if x.width != y.width:
        raise ValueError(f"width mismatch: {x.width} vs {y.width}")
    cell = full_adder(adder)
    carry = 0
    out = []
    for k in range(x.width):
        s, carry = cell(x.bit(k), y.bit(k), carry)
        out.append(s)
    return Word.from_bits(out), carry


def _ripple_cells(xs, ys, cell):
    carry = 0
    out = []
    for xk, yk in zip(xs, ys):
        s, carry = cell(xk, yk, carry)
        out.append(s)
    return out, carry


def array_multiply_cells(a, b, width: int, adder=AdderKind.EXACT, roles: CellRoles = DEFAULT_ROLES):
    """Cell-by-cell evaluation of the ``width`` x ``width`` carry-save array.

    ``a`` and ``b`` may be ints or unsigned numpy arrays; the return value has
    the same kind and holds the 2*width-bit product.
    """
    if not 1 <= width <= MAX_ARRAY_WIDTH:
        raise ValueError(f"array width must be in 1..{MAX_ARRAY_WIDTH}, got {width}")
    cell = full_adder(adder)
    n = 2 * width
    as_array = isinstance(a, np.ndarray) or isinstance(b, np.ndarray)
    if as_array:
        a = np.asarray(a, dtype=np.uint64)
        b = np.asarray(b, dtype=np.uint64)
        one = np.uint64(1)
        a_bits = [(a >> np.uint64(j)) & one for j in range(width)]
        b_bits = [(b >> np.uint64(j)) & one for j in range(width)]
        zero = np.zeros(np.broadcast(a, b).shape, dtype=np.uint64)
    else:
        a_bits = [(a >> j) & 1 for j in range(width)]
        b_bits = [(b >> j) & 1 for j in range(width)]
        zero = 0

    def row(i):
        # R_i[k] = a[k - i] AND b[i]
        return [a_bits[k - i] & b_bits[i] if 0 <= k - i < width else zero for k in range(n)]

    s = row(0)
    c = [zero] * n
    for i in range(1, width):
        r = row(i)
        new_s = [zero] * n
        new_c = [zero] * n
        for k in range(n):
            pa, pb, pc = roles.route(r[k], s[k], c[k])
            sk, ck = cell(pa, pb, pc)
            new_s[k] = sk
            if k + 1 < n:
                new_c[k + 1] = ck
        s, c = new_s, new_c

    merged, _ = _ripple_cells(s, c, cell)
    if as_array:
        out = zero.copy()
        for k, bit in enumerate(merged):
            out |= bit << np.uint64(k)
        return out
    return sum(bit << k for k, bit in enumerate(merged))


def array_multiply(a: Word, b: Word, adder=AdderKind.EXACT, roles: CellRoles = DEFAULT_ROLES) -> Word:
    """Multiply two W-bit words on the carry-save array; returns a 2W-bit Word."""
    if a.width != b.width:
        raise ValueError(f"width mismatch: {a.width} vs {b.width}")
    if a.width > MAX_ARRAY_WIDTH:
        raise ValueError(f"array width {a.width} exceeds {MAX_ARRAY_WIDTH}")
    value = array_multiply_cells(a.value, b.value, a.width, adder, roles)
    return Word(2 * a.width, value)


def array_multiply_packed(a, b, width: int, adder=AdderKind.EXACT, roles: CellRoles = DEFAULT_ROLES):
    """Row-parallel evaluation of the same array over uint64 arrays.

    Every cell at position k only combines bit k of its three inputs, so one
    bitwise expression over a 2W-bit word evaluates a whole row of cells.
    """
    if not 1 <= width <= MAX_ARRAY_WIDTH:
        raise ValueError(f"array width must be in 1..{MAX_ARRAY_WIDTH}, got {width}")
    adder = AdderKind(adder)
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    mask = np.uint64((1 << (2 * width)) - 1)
    one = np.uint64(1)

    def row(i):
        bit = (b >> np.uint64(i)) & one
        return (a * bit) << np.uint64(i)

    s = row(0)
    c = np.zeros_like(s)
    for i in range(1, width):
        pa, pb, pc = roles.route(row(i), s, c)
        if adder is AdderKind.EXACT:
            s_new = pa ^ pb ^ pc
            cout = (pa & pb) | (pc & (pa ^ pb))
        else:
            s_new, cout = pb, pa
        s = s_new
        c = (cout << one) & mask

    if adder is AdderKind.EXACT:
        return (s + c) & mask
    # AMA5 merge row: every sum bit is its B input, which is the carry vector.
    return c & mask
