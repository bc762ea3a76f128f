"""OILU numeral system: digits as subsets of a square ring's sides.

O is the closed ring (0), I a single side (1), L two adjacent sides and U
three sides. The remaining digits are quarter-turn (counter-clockwise)
rotations of L and U, so one CCW turn acts on digits as the permutation
(2 4 6 8)(3 5 7 9), fixing 0 and 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Iterator

from .errors import InvalidDigit, InvalidPattern


class Side(IntEnum):
    """Ring side, numbered in clockwise order."""

    TOP = 0
    RIGHT = 1
    BOTTOM = 2
    LEFT = 3

    @property
    def letter(self) -> str:
        return self.name[0]


SidePattern = frozenset  # frozenset[Side]

T, R, B, L = Side.TOP, Side.RIGHT, Side.BOTTOM, Side.LEFT

# Glyph convention: L = bottom+left, U = open top, I = bottom.
_DIGIT_PATTERNS: dict[int, frozenset[Side]] = {
    0: frozenset({T, R, B, L}),
    1: frozenset({B}),
    2: frozenset({B, L}),
    4: frozenset({R, B}),
    6: frozenset({T, R}),
    8: frozenset({L, T}),
    3: frozenset({L, B, R}),
    5: frozenset({B, R, T}),
    7: frozenset({R, T, L}),
    9: frozenset({T, L, B}),
}

_PATTERN_DIGITS: dict[frozenset[Side], int] = {p: d for d, p in _DIGIT_PATTERNS.items()}
for _s in Side:
    _PATTERN_DIGITS[frozenset({_s})] = 1

MAX_RINGS = 8


def pattern_mask(p: Iterable[Side]) -> int:
    """4-bit mask, bit 3 = TOP ... bit 0 = LEFT (reads as 'TRBL')."""
    return sum(1 << (3 - int(s)) for s in set(p))


def mask_to_pattern(mask: int) -> frozenset[Side]:
    if not 0 <= mask < 16:
        raise InvalidPattern(f"mask {mask} outside 4 bits")
    return frozenset(s for s in Side if mask & (1 << (3 - int(s))))


def pattern_str(p: Iterable[Side]) -> str:
    """Compact text form, e.g. 'BL' for {BOTTOM, LEFT}; '-' when empty."""
    return "".join(s.letter for s in sorted(set(p))) or "-"


def is_valid_pattern(p: Iterable[Side]) -> bool:
    p = frozenset(p)
    if not p:
        return False
    if len(p) == 2:
        a, b = sorted(p)
        return (b - a) % 2 == 1
    return True


def _check_digit(d: int) -> int:
    if isinstance(d, bool) or not isinstance(d, int) or not 0 <= d <= 9:
        raise InvalidDigit(f"digit must be an integer in [0, 9], got {d!r}")
    return d


def digit_to_pattern(d: int) -> frozenset[Side]:
    return _DIGIT_PATTERNS[_check_digit(d)]


def pattern_to_digit(p: Iterable[Side]) -> int:
    p = frozenset(Side(s) for s in p)
    if not is_valid_pattern(p):
        raise InvalidPattern(f"side set {pattern_str(p)!r} is not an OILU glyph")
    return _PATTERN_DIGITS[p]


def rotate_pattern_ccw(p: Iterable[Side], quarter_turns: int = 1) -> frozenset[Side]:
    # RIGHT->TOP, TOP->LEFT, LEFT->BOTTOM, BOTTOM->RIGHT
    k = quarter_turns % 4
    return frozenset(Side((int(s) - k) % 4) for s in p)


_CCW_STEP = {0: 0, 1: 1, 2: 4, 4: 6, 6: 8, 8: 2, 3: 5, 5: 7, 7: 9, 9: 3}


def rotate_digit(d: int, quarter_turns: int = 1) -> int:
    d = _check_digit(d)
    for _ in range(quarter_turns % 4):
        d = _CCW_STEP[d]
    return d


@dataclass(frozen=True)
class OiluNumber:
    """Digit string read from the outermost ring inwards."""

    digits: tuple[int, ...]

    def __post_init__(self) -> None:
        digits = tuple(self.digits)
        if not digits:
            raise InvalidDigit("an OILU number needs at least one digit")
        for d in digits:
            _check_digit(d)
        object.__setattr__(self, "digits", digits)

    @classmethod
    def parse(cls, text: str | int | "OiluNumber") -> "OiluNumber":
        if isinstance(text, OiluNumber):
            return text
        s = str(text).strip()
        if not s or not s.isascii() or not s.isdigit():
            raise InvalidDigit(f"not a decimal digit string: {text!r}")
        return cls(tuple(int(c) for c in s))

    def __str__(self) -> str:
        return "".join(map(str, self.digits))

    def __len__(self) -> int:
        return len(self.digits)

    def __iter__(self) -> Iterator[int]:
        return iter(self.digits)

    def rotated(self, quarter_turns: int) -> "OiluNumber":
        return OiluNumber(tuple(rotate_digit(d, quarter_turns) for d in self.digits))

    def patterns(self) -> list[frozenset[Side]]:
        return [digit_to_pattern(d) for d in self.digits]


@dataclass(frozen=True)
class FacetGroup:
    """The four readings of one marker, indexed by CCW quarter turns."""

    values: tuple[OiluNumber, OiluNumber, OiluNumber, OiluNumber]

    def __getitem__(self, k: int) -> OiluNumber:
        return self.values[k % 4]

    def __iter__(self) -> Iterator[OiluNumber]:
        return iter(self.values)

    def as_set(self) -> set[str]:
        return {str(v) for v in self.values}

    def strings(self) -> list[str]:
        return [str(v) for v in self.values]


def facet_values(n: OiluNumber | str | int) -> FacetGroup:
    n = OiluNumber.parse(n)
    return FacetGroup(tuple(n.rotated(k) for k in range(4)))  # type: ignore[arg-type]
