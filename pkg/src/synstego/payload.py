"""Bit payload <-> color sequence codec, three bits per color."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

from .errors import InvalidBits, InvalidPayloadLen

BITS_PER_COLOR = 3


class Color(IntEnum):
    """Palette color; the integer value is the 3-bit big-endian code."""

    RED = 0
    YELLOW = 1
    GREEN = 2
    BLUE = 3
    PURPLE = 4
    BROWN = 5
    BLACK = 6
    WHITE = 7

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def code(self) -> str:
        return format(int(self), "03b")

    @classmethod
    def parse(cls, value: "str | int | Color") -> "Color":
        if isinstance(value, Color):
            return value
        if isinstance(value, int):
            return cls(value)
        try:
            return cls[value.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown color {value!r}") from None

    def __str__(self) -> str:
        return self.label


PALETTE: tuple[Color, ...] = tuple(Color)
COLOR_NAMES: tuple[str, ...] = tuple(c.label for c in PALETTE)


@dataclass(frozen=True)
class BitString:
    bits: tuple[int, ...] = ()

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise InvalidBits("bits must be 0 or 1")

    @classmethod
    def from_str(cls, text: str) -> "BitString":
        if any(ch not in "01" for ch in text):
            raise InvalidBits(f"not a bitstring: {text!r}")
        return cls(tuple(int(ch) for ch in text))

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitString":
        return cls(tuple(int(b) for b in bits))

    @property
    def length(self) -> int:
        return len(self.bits)

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join(map(str, self.bits))


@dataclass(frozen=True)
class ColorSequence:
    colors: tuple[Color, ...]
    payload_len: int

    def __post_init__(self):
        object.__setattr__(self, "colors", tuple(Color.parse(c) for c in self.colors))

    def is_consistent(self) -> bool:
        return self.payload_len >= 0 and 0 <= BITS_PER_COLOR * len(self.colors) - self.payload_len <= 2

    def names(self) -> list[str]:
        return [c.label for c in self.colors]


def bits_to_colors(payload: BitString | str) -> ColorSequence:
    """Chunk ``payload`` into big-endian triples, zero-padding the tail."""
    if isinstance(payload, str):
        payload = BitString.from_str(payload)
    bits = list(payload.bits)
    bits += [0] * (-len(bits) % BITS_PER_COLOR)
    colors = tuple(
        Color(bits[i] << 2 | bits[i + 1] << 1 | bits[i + 2])
        for i in range(0, len(bits), BITS_PER_COLOR)
    )
    return ColorSequence(colors, len(payload))


def colors_to_bits(seq: ColorSequence) -> BitString:
    if not seq.is_consistent():
        raise InvalidPayloadLen(
            f"payload_len={seq.payload_len} incompatible with {len(seq.colors)} colors"
        )
    bits: list[int] = []
    for color in seq.colors:
        v = int(color)
        bits += [(v >> 2) & 1, (v >> 1) & 1, v & 1]
    return BitString(tuple(bits[: seq.payload_len]))


def parse_colors(names: Sequence[str | int | Color]) -> list[Color]:
    return [Color.parse(n) for n in names]
