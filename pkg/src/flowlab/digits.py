"""Exact digit streams for reals in (0, 1), base 2 and base 4.

Every double is a dyadic rational, so floating point cannot decide
membership in the dyadic exceptional set; that decision has to live at the
digit level.  A :class:`DigitStream` stores an explicit digit prefix plus a
tail declaration: terminating zeros, a repeating block, or unspecified
beyond the stored depth.  Operations that need digits an ``unknown`` tail
cannot supply raise :class:`InsufficientDigitsError` instead of padding.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd, lcm
from typing import Iterable

DEFAULT_DEPTH = 60

TAIL_ZEROS = "zeros"
TAIL_REPEAT = "repeat"
TAIL_UNKNOWN = "unknown"


class InsufficientDigitsError(ValueError):
    """Raised when a stream with an unspecified tail runs out of digits."""


_STRING_RE = re.compile(
    r"^0\.(?P<prefix>[0-9]*)"
    r"(?:\((?:rep=)?(?P<block>[0-9]+)\))?"
    r"(?P<ellipsis>\.\.\.)?$"
)


@dataclass(frozen=True)
class DigitStream:
    """A base-2 or base-4 expansion ``0.d1 d2 d3 ...`` of a real in (0, 1).

    ``digits`` is the explicit prefix (most significant first).  The tail is
    one of ``zeros`` (terminating), ``repeat`` (the ``block`` repeats
    forever after the prefix) or ``unknown`` (nothing known past the
    prefix).
    """

    base: int
    digits: tuple[int, ...]
    tail: str = TAIL_ZEROS
    block: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.base not in (2, 4):
            raise ValueError(f"base must be 2 or 4, got {self.base}")
        if self.tail not in (TAIL_ZEROS, TAIL_REPEAT, TAIL_UNKNOWN):
            raise ValueError(f"unknown tail kind {self.tail!r}")
        if self.tail == TAIL_REPEAT and not self.block:
            raise ValueError("repeating tail needs a nonempty block")
        if self.tail != TAIL_REPEAT and self.block:
            raise ValueError("block only allowed with a repeating tail")
        for d in (*self.digits, *self.block):
            if not 0 <= d < self.base:
                raise ValueError(f"digit {d} out of range for base {self.base}")

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_fraction(cls, value: Fraction | int, base: int = 2) -> "DigitStream":
        """Exact expansion of a rational in (0, 1); detects the cycle."""
        q = Fraction(value)
        if not 0 < q < 1:
            raise ValueError(f"value must lie in (0,1), got {q}")
        digits: list[int] = []
        seen: dict[Fraction, int] = {}
        rem = q
        while rem != 0:
            if rem in seen:
                start = seen[rem]
                return cls(base, tuple(digits[:start]), TAIL_REPEAT,
                           tuple(digits[start:]))
            seen[rem] = len(digits)
            rem *= base
            d = int(rem)
            digits.append(d)
            rem -= d
        return cls(base, tuple(digits), TAIL_ZEROS)

    @classmethod
    def from_float(cls, x: float) -> "DigitStream":
        """Exact binary expansion of a double in (0, 1) (always terminating)."""
        if not 0.0 < x < 1.0:
            raise ValueError(f"value must lie in (0,1), got {x}")
        return cls.from_fraction(Fraction(x), base=2)

    @classmethod
    def from_float_generic(cls, x: float, depth: int = DEFAULT_DEPTH
                           ) -> "DigitStream":
        """Leading ``depth`` bits of a double, tail left unspecified.

        Use this when the double is a finite-precision measurement of a
        generic real: the exact expansion of any double terminates, which
        would wrongly classify every input as dyadic.
        """
        if not 0.0 < x < 1.0:
            raise ValueError(f"value must lie in (0,1), got {x}")
        bits = []
        frac = Fraction(x)
        for _ in range(depth):
            frac *= 2
            d = int(frac)
            bits.append(d)
            frac -= d
        return cls(2, tuple(bits), TAIL_UNKNOWN)

    @classmethod
    def from_string(cls, text: str, base: int = 2) -> "DigitStream":
        """Parse ``0.0110``, ``0.01(rep=10)`` or ``0.(0110)`` forms."""
        m = _STRING_RE.match(text.strip())
        if m is None:
            raise ValueError(f"cannot parse digit string {text!r}")
        prefix = tuple(int(c) for c in m.group("prefix"))
        block = m.group("block")
        if block is not None:
            return cls(base, prefix, TAIL_REPEAT, tuple(int(c) for c in block))
        if m.group("ellipsis"):
            return cls(base, prefix, TAIL_UNKNOWN)
        return cls(base, prefix, TAIL_ZEROS)

    # -- digit access ------------------------------------------------------

    def digit(self, i: int) -> int:
        """Digit at 0-based position ``i``."""
        if i < 0:
            raise IndexError(i)
        n = len(self.digits)
        if i < n:
            return self.digits[i]
        if self.tail == TAIL_ZEROS:
            return 0
        if self.tail == TAIL_REPEAT:
            return self.block[(i - n) % len(self.block)]
        raise InsufficientDigitsError(
            f"digit {i + 1} requested but only {n} known (unknown tail)")

    def prefix(self, n: int) -> tuple[int, ...]:
        return tuple(self.digit(i) for i in range(n))

    def known_depth(self) -> int | None:
        """Number of determined digits, or None if infinitely many."""
        return len(self.digits) if self.tail == TAIL_UNKNOWN else None

    # -- values ------------------------------------------------------------

    def value(self, depth: int) -> Fraction:
        """Value of the stream truncated after ``depth`` digits."""
        acc = 0
        for i in range(depth):
            acc = acc * self.base + self.digit(i)
        return Fraction(acc, self.base**depth)

    def exact_value(self) -> Fraction:
        """Exact represented value; requires a known tail."""
        if self.tail == TAIL_UNKNOWN:
            raise InsufficientDigitsError("exact value of an unknown tail")
        n = len(self.digits)
        head = self.value(n)
        if self.tail == TAIL_ZEROS:
            return head
        l = len(self.block)
        blockval = 0
        for d in self.block:
            blockval = blockval * self.base + d
        return head + Fraction(blockval, self.base**l - 1) / self.base**n

    def to_float(self, depth: int = DEFAULT_DEPTH) -> float:
        return float(self.value(depth))

    # -- formatting ---------------------------------------------------------

    def __str__(self) -> str:
        head = "0." + "".join(str(d) for d in self.digits)
        if self.tail == TAIL_REPEAT:
            return head + "(rep=" + "".join(str(d) for d in self.block) + ")"
        if self.tail == TAIL_UNKNOWN:
            return head + "..."
        return head


def _require_base2(x: DigitStream) -> DigitStream:
    return x if x.base == 2 else base4_to_base2(x)


def in_Z(x: DigitStream) -> bool:
    """Whether ``x`` is a dyadic rational (0, 1, or j/2^i).

    At the digit level: the tail is eventually the constant 0 or the
    constant ``base-1`` digit.  Undecidable for unknown tails.
    """
    s = _require_base2(x)
    if s.tail == TAIL_UNKNOWN:
        raise InsufficientDigitsError("Z-membership undecidable at this depth")
    if s.tail == TAIL_ZEROS:
        return True
    return len(set(s.block)) == 1 and s.block[0] in (0, s.base - 1)


def dyadic_level(x: DigitStream) -> int:
    """Smallest i with x = j/2^i; requires ``in_Z(x)``."""
    if not in_Z(x):
        raise ValueError("not a dyadic rational")
    q = _require_base2(x).exact_value()
    return q.denominator.bit_length() - 1


def _subsequence_stream(x: DigitStream, start: int, step: int,
                        depth: int) -> DigitStream:
    """Stream whose digits are x's digits at positions start, start+step, ..."""
    if x.tail == TAIL_UNKNOWN:
        avail = (len(x.digits) - 1 - start) // step + 1
        if avail < depth:
            raise InsufficientDigitsError(
                f"need {depth} digits of the subsequence, have {avail}")
        return DigitStream(x.base,
                           tuple(x.digit(start + step * k) for k in range(depth)),
                           TAIL_UNKNOWN)
    if x.tail == TAIL_ZEROS:
        nd = max(depth, (len(x.digits) - start) // step + 1)
        return DigitStream(x.base,
                           tuple(x.digit(start + step * k) for k in range(nd)),
                           TAIL_ZEROS)
    # Repeating tail: stepping through a period-L sequence is eventually
    # periodic with period L / gcd(L, step).
    l = len(x.block)
    lout = l // gcd(l, step)
    nd = max(depth, (len(x.digits) - start) // step + 2)
    digits = tuple(x.digit(start + step * k) for k in range(nd))
    block = tuple(x.digit(start + step * (nd + k)) for k in range(lout))
    return DigitStream(x.base, digits, TAIL_REPEAT, block)


def deinterleave(x: DigitStream, depth: int) -> tuple[DigitStream, DigitStream]:
    """Split a base-2 stream into its odd-position and even-position bits.

    Returns (b1 b3 b5 ..., b2 b4 b6 ...), each carrying at least ``depth``
    digits and an exact tail whenever x's tail is known.
    """
    if x.base != 2:
        raise ValueError("deinterleave expects a base-2 stream")
    odd = _subsequence_stream(x, 0, 2, depth)
    even = _subsequence_stream(x, 1, 2, depth)
    return odd, even


def interleave(a: DigitStream, b: DigitStream, depth: int) -> DigitStream:
    """Inverse of :func:`deinterleave`: a's bits to odd positions, b's to even."""
    if a.base != 2 or b.base != 2:
        raise ValueError("interleave expects base-2 streams")
    if a.tail == TAIL_UNKNOWN or b.tail == TAIL_UNKNOWN:
        na = len(a.digits) if a.tail == TAIL_UNKNOWN else depth
        nb = len(b.digits) if b.tail == TAIL_UNKNOWN else depth
        n = min(na, nb)
        if n < depth:
            raise InsufficientDigitsError(
                f"need {depth} digits per input, have {n}")
        bits: list[int] = []
        for k in range(n):
            bits += [a.digit(k), b.digit(k)]
        return DigitStream(2, tuple(bits), TAIL_UNKNOWN)
    if a.tail == TAIL_ZEROS and b.tail == TAIL_ZEROS:
        n = max(depth, len(a.digits), len(b.digits))
        bits = []
        for k in range(n):
            bits += [a.digit(k), b.digit(k)]
        return DigitStream(2, tuple(bits), TAIL_ZEROS)
    la = len(a.block) if a.tail == TAIL_REPEAT else 1
    lb = len(b.block) if b.tail == TAIL_REPEAT else 1
    lout = 2 * lcm(la, lb)
    n = max(depth, len(a.digits) + la, len(b.digits) + lb)
    bits = []
    for k in range(n):
        bits += [a.digit(k), b.digit(k)]
    block = []
    for k in range(n, n + lout // 2):
        block += [a.digit(k), b.digit(k)]
    return DigitStream(2, tuple(bits), TAIL_REPEAT, tuple(block))


def base4_to_base2(x: DigitStream) -> DigitStream:
    """Value-preserving base-4 -> base-2 conversion, digit -> two bits."""
    if x.base != 4:
        raise ValueError("expected a base-4 stream")

    def bits(ds: Iterable[int]) -> tuple[int, ...]:
        out: list[int] = []
        for d in ds:
            out += [d >> 1, d & 1]
        return tuple(out)

    if x.tail == TAIL_REPEAT:
        return DigitStream(2, bits(x.digits), TAIL_REPEAT, bits(x.block))
    return DigitStream(2, bits(x.digits), x.tail)


def base2_to_base4(x: DigitStream) -> DigitStream:
    """Value-preserving base-2 -> base-4 conversion, bit pair -> digit."""
    if x.base != 2:
        raise ValueError("expected a base-2 stream")
    if x.tail == TAIL_UNKNOWN:
        n = len(x.digits) // 2
        digits = tuple(2 * x.digit(2 * k) + x.digit(2 * k + 1) for k in range(n))
        return DigitStream(4, digits, TAIL_UNKNOWN)
    if x.tail == TAIL_ZEROS:
        n = (len(x.digits) + 1) // 2
        digits = tuple(2 * x.digit(2 * k) + x.digit(2 * k + 1) for k in range(n))
        return DigitStream(4, digits, TAIL_ZEROS)
    # Align the repeating region on an even bit boundary and use a block of
    # even length (doubling an odd block keeps the value).
    l = len(x.block)
    n = len(x.digits)
    start = n + (n % 2)
    lout = l if l % 2 == 0 else 2 * l
    digits = tuple(2 * x.digit(2 * k) + x.digit(2 * k + 1)
                   for k in range(start // 2))
    block = tuple(2 * x.digit(start + 2 * k) + x.digit(start + 2 * k + 1)
                  for k in range(lout // 2))
    return DigitStream(4, digits, TAIL_REPEAT, block)


def has_degenerate_interleave_tail(x: DigitStream) -> bool:
    """Whether either bit-parity subsequence of ``x`` is eventually constant.

    On such points the de-interleaving map sends the fiber to the boundary
    of the unit square even when ``x`` itself is not dyadic (e.g. 1/3 with
    bits 010101... has constant odd and even subsequences), so they are
    excluded from bijectivity statements.
    """
    s = _require_base2(x)
    odd, even = deinterleave(s, 1)
    return in_Z(odd) or in_Z(even)
