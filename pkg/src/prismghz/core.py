"""Shared vocabulary: outcomes, hidden 6-tuples, discrete settings and observables.

Slot order of a hidden tuple is fixed everywhere::

    (A(pi/2), A(0), B(pi/2), B(0), C(pi/2), C(0))
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple


class ParseError(ValueError):
    """Malformed tuple text."""


class Outcome(enum.Enum):
    MINUS = "-"
    DEFECTIVE = "D"
    PLUS = "+"

    @property
    def value_int(self) -> int:
        if self is Outcome.DEFECTIVE:
            raise ValueError("a defective slot has no numeric value")
        return 1 if self is Outcome.PLUS else -1

    @property
    def fires(self) -> bool:
        return self is not Outcome.DEFECTIVE

    @property
    def code(self) -> int:
        """+1 / -1 / 0 encoding used in CSV logs."""
        return {Outcome.PLUS: 1, Outcome.MINUS: -1, Outcome.DEFECTIVE: 0}[self]

    @classmethod
    def from_code(cls, code: int) -> "Outcome":
        return {1: cls.PLUS, -1: cls.MINUS, 0: cls.DEFECTIVE}[int(code)]

    @classmethod
    def from_sign(cls, sign: int) -> "Outcome":
        if sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {sign}")
        return cls.PLUS if sign == 1 else cls.MINUS


PLUS, MINUS, DEFECTIVE = Outcome.PLUS, Outcome.MINUS, Outcome.DEFECTIVE

# canonical sort rank: '-' < 'D' < '+'
_RANK = {MINUS: 0, DEFECTIVE: 1, PLUS: 2}
_SYMBOLS = {"+": PLUS, "-": MINUS, "−": MINUS, "D": DEFECTIVE}

STATIONS = ("A", "B", "C")
HALF_PI = "pi/2"
ZERO = "0"
ANGLES = (HALF_PI, ZERO)
ANGLE_RADIANS = {HALF_PI: math.pi / 2, ZERO: 0.0}


def slot_index(station: int, angle: str) -> int:
    """Index into a hidden tuple for ``station`` (0..2) measured at ``angle``."""
    if angle not in ANGLE_RADIANS:
        raise ValueError(f"unknown discrete angle {angle!r}")
    return 2 * station + (0 if angle == HALF_PI else 1)


@dataclass(frozen=True, order=False)
class HiddenTuple:
    slots: tuple[Outcome, ...]

    def __post_init__(self):
        if len(self.slots) != 6:
            raise ValueError(f"hidden tuple needs 6 slots, got {len(self.slots)}")

    def __getitem__(self, i: int) -> Outcome:
        return self.slots[i]

    def __iter__(self) -> Iterator[Outcome]:
        return iter(self.slots)

    def __str__(self) -> str:
        return format_tuple(self)

    def sort_key(self) -> tuple[int, ...]:
        return tuple(_RANK[o] for o in self.slots)

    def __lt__(self, other: "HiddenTuple") -> bool:
        return self.sort_key() < other.sort_key()

    def response(self, station: int, angle: str) -> Outcome:
        return self.slots[slot_index(station, angle)]

    def n_defective(self) -> int:
        return sum(o is DEFECTIVE for o in self.slots)


class DiscreteSetting(NamedTuple):
    """Angles (pi/2 or 0) at stations A, B, C."""

    x: str
    y: str
    z: str

    def angles(self) -> tuple[str, str, str]:
        return (self.x, self.y, self.z)

    def radians(self) -> tuple[float, float, float]:
        return tuple(ANGLE_RADIANS[a] for a in self)

    def phase_sum(self) -> float:
        return sum(self.radians())

    def n_half_pi(self) -> int:
        """Number of stations at pi/2; the phase sum is this times pi/2."""
        return sum(a == HALF_PI for a in self)

    def slots(self) -> tuple[int, int, int]:
        return tuple(slot_index(i, a) for i, a in enumerate(self))

    @property
    def label(self) -> str:
        return ",".join(self)

    @classmethod
    def parse(cls, text: str) -> "DiscreteSetting":
        parts = [p.strip() for p in text.strip().strip("()").split(",")]
        if len(parts) != 3:
            raise ValueError(f"setting needs three angles, got {text!r}")
        norm = []
        for p in parts:
            p = p.replace("π", "pi").replace(" ", "")
            if p in ("pi/2", "90"):
                norm.append(HALF_PI)
            elif p in ("0", "0.0"):
                norm.append(ZERO)
            else:
                raise ValueError(f"discrete angle must be pi/2 or 0, got {p!r}")
        return cls(*norm)


ALL_SETTINGS: tuple[DiscreteSetting, ...] = tuple(
    DiscreteSetting(*a) for a in itertools.product(ANGLES, repeat=3)
)


class OutcomeSign(NamedTuple):
    i: int
    j: int
    k: int

    @property
    def parity(self) -> int:
        return self.i * self.j * self.k

    @property
    def label(self) -> str:
        return "".join("+" if s > 0 else "-" for s in self)


ALL_SIGNS: tuple[OutcomeSign, ...] = tuple(
    OutcomeSign(*s) for s in itertools.product((1, -1), repeat=3)
)


@dataclass(frozen=True)
class ProductObservable:
    name: str
    setting: DiscreteSetting
    required_value: int


OMEGAS: tuple[ProductObservable, ...] = (
    ProductObservable("Omega1", DiscreteSetting(HALF_PI, ZERO, ZERO), 1),
    ProductObservable("Omega2", DiscreteSetting(ZERO, HALF_PI, ZERO), 1),
    ProductObservable("Omega3", DiscreteSetting(ZERO, ZERO, HALF_PI), 1),
    ProductObservable("Omega4", DiscreteSetting(HALF_PI, HALF_PI, HALF_PI), -1),
)


def parse_tuple(text: str) -> HiddenTuple:
    """Parse ``"(+-D-++)"``-style text; whitespace is ignored, Unicode minus accepted."""
    body = "".join(text.split())
    if body.startswith("(") and body.endswith(")"):
        body = body[1:-1]
    if len(body) != 6:
        raise ParseError(f"expected 6 symbols, got {len(body)} in {text!r}")
    slots = []
    for pos, ch in enumerate(body):
        try:
            slots.append(_SYMBOLS[ch])
        except KeyError:
            raise ParseError(f"illegal symbol {ch!r} at position {pos} in {text!r}") from None
    return HiddenTuple(tuple(slots))


def format_tuple(t: HiddenTuple) -> str:
    return "".join(o.value for o in t.slots)
