"""Bit-level primitives for the Unaligned Packed Encoding Rules (X.691, unaligned variant).

Only the pieces needed by the frozen message subset are provided: constrained
whole numbers, enumerations, fixed-size octet strings, the general length
determinant, size-constrained SEQUENCE OF counts and the optional-component
presence bitmap.
"""

from __future__ import annotations

__all__ = [
    "BitReader",
    "BitWriter",
    "EndOfData",
    "bits_for_range",
]


class EndOfData(EOFError):
    """Raised when a read runs past the end of the bit stream."""


def bits_for_range(lower: int, upper: int) -> int:
    """Number of bits for a constrained whole number in ``lower..upper``."""
    if upper < lower:
        raise ValueError(f"empty range {lower}..{upper}")
    return (upper - lower).bit_length()


class BitWriter:
    """Accumulates a big-endian bit string."""

    __slots__ = ("_acc", "_nbits")

    def __init__(self) -> None:
        self._acc = 0
        self._nbits = 0

    def __len__(self) -> int:
        return self._nbits

    def write_bits(self, value: int, nbits: int) -> None:
        if nbits == 0:
            return
        if value < 0 or value >> nbits:
            raise ValueError(f"{value} does not fit in {nbits} bits")
        self._acc = (self._acc << nbits) | value
        self._nbits += nbits

    def write_bit(self, flag: bool) -> None:
        self.write_bits(1 if flag else 0, 1)

    def write_constrained(self, value: int, lower: int, upper: int) -> None:
        if not lower <= value <= upper:
            raise ValueError(f"{value} outside {lower}..{upper}")
        self.write_bits(value - lower, bits_for_range(lower, upper))

    def write_enum(self, index: int, count: int) -> None:
        self.write_constrained(index, 0, count - 1)

    def write_octets(self, data: bytes) -> None:
        """Fixed-size octet string: the octets themselves, no length."""
        if data:
            self.write_bits(int.from_bytes(data, "big"), 8 * len(data))

    def write_length(self, n: int) -> None:
        """Unconstrained length determinant (single fragment only)."""
        if n < 0:
            raise ValueError("negative length")
        if n < 128:
            self.write_bits(n, 8)
        elif n < 16384:
            self.write_bits(0b10 << 14 | n, 16)
        else:
            raise ValueError("fragmented lengths (>= 16384) are not supported")

    def write_count(self, n: int, lower: int, upper: int | None) -> None:
        """Element count of a SEQUENCE OF with ``SIZE(lower..upper)``.

        ``upper=None`` means no upper bound, which falls back to the general
        length determinant.
        """
        if upper is None or upper >= 65536:
            if n < lower:
                raise ValueError(f"count {n} below {lower}")
            self.write_length(n)
        elif lower != upper:
            self.write_constrained(n, lower, upper)
        elif n != lower:
            raise ValueError(f"count {n} != fixed size {lower}")

    def write_presence(self, flags: list[bool]) -> None:
        """Presence bitmap for OPTIONAL/DEFAULT components, in declaration order."""
        for flag in flags:
            self.write_bit(flag)

    def to_bytes(self) -> bytes:
        """Complete encoding: zero-padded to whole octets, never empty."""
        if self._nbits == 0:
            return b"\x00"
        pad = -self._nbits % 8
        return (self._acc << pad).to_bytes((self._nbits + pad) // 8, "big")


class BitReader:
    """Reads a big-endian bit string produced by :class:`BitWriter`."""

    __slots__ = ("_value", "_total", "_pos")

    def __init__(self, data: bytes) -> None:
        self._value = int.from_bytes(data, "big")
        self._total = 8 * len(data)
        self._pos = 0

    @property
    def position(self) -> int:
        return self._pos

    @property
    def remaining(self) -> int:
        return self._total - self._pos

    def read_bits(self, nbits: int) -> int:
        if nbits == 0:
            return 0
        if nbits > self._total - self._pos:
            raise EndOfData(f"need {nbits} bits at offset {self._pos}, {self.remaining} left")
        self._pos += nbits
        shift = self._total - self._pos
        return (self._value >> shift) & ((1 << nbits) - 1)

    def read_bit(self) -> bool:
        return bool(self.read_bits(1))

    def read_constrained(self, lower: int, upper: int) -> int:
        """Returns the raw value, which may exceed ``upper`` for non-power-of-two ranges."""
        return lower + self.read_bits(bits_for_range(lower, upper))

    def read_enum(self, count: int) -> int:
        return self.read_constrained(0, count - 1)

    def read_octets(self, n: int) -> bytes:
        return self.read_bits(8 * n).to_bytes(n, "big") if n else b""

    def read_length(self) -> int:
        if not self.read_bit():
            return self.read_bits(7)
        if not self.read_bit():
            return self.read_bits(14)
        raise ValueError("fragmented lengths (>= 16384) are not supported")

    def read_count(self, lower: int, upper: int | None) -> int:
        if upper is None or upper >= 65536:
            return self.read_length()
        if lower != upper:
            return self.read_constrained(lower, upper)
        return lower

    def read_presence(self, n: int) -> list[bool]:
        return [self.read_bit() for _ in range(n)]

    def padding_is_canonical(self) -> bool:
        """True when only zero padding (< 8 bits) is left, or the whole input
        is the single zero octet of an empty encoding."""
        rest = self.remaining
        if rest >= 8 and not (self._total == 8 and self._pos == 0):
            return False
        return self._value & ((1 << rest) - 1) == 0
