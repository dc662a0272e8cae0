"""Exhaustive enumeration of {+, -, D}^6 and the GHZ constraint filter."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .core import (
    ALL_SETTINGS,
    DEFECTIVE,
    MINUS,
    OMEGAS,
    PLUS,
    DiscreteSetting,
    HiddenTuple,
    format_tuple,
    parse_tuple,
)

# symbols in canonical order so that product() yields sorted tuples
_CANONICAL = (MINUS, DEFECTIVE, PLUS)


@dataclass(frozen=True)
class Partition:
    total: int
    allowed: int
    by_coincidence_count: dict[int, int] = field(default_factory=dict)

    def summary(self) -> str:
        parts = [f"total={self.total}", f"allowed={self.allowed}"]
        parts += [f"c{k}={v}" for k, v in sorted(self.by_coincidence_count.items())]
        return " ".join(parts)


@lru_cache(maxsize=1)
def _all() -> tuple[HiddenTuple, ...]:
    return tuple(HiddenTuple(s) for s in itertools.product(_CANONICAL, repeat=6))


def enumerate_all() -> list[HiddenTuple]:
    """All 729 tuples in canonical order ('-' < 'D' < '+', leftmost slot major)."""
    return list(_all())


def _fires(t: HiddenTuple, setting: DiscreteSetting) -> bool:
    return all(t[i] is not DEFECTIVE for i in setting.slots())


def _product(t: HiddenTuple, setting: DiscreteSetting) -> int:
    p = 1
    for i in setting.slots():
        p *= t[i].value_int
    return p


def satisfies_ghz_constraints(t: HiddenTuple) -> bool:
    """True unless some Omega setting fires on all three stations with the wrong product."""
    for obs in OMEGAS:
        if _fires(t, obs.setting) and _product(t, obs.setting) != obs.required_value:
            return False
    return True


def coincidence_setup_count(t: HiddenTuple) -> int:
    """How many of the 8 discrete settings give a triple detection for ``t``."""
    return sum(_fires(t, s) for s in ALL_SETTINGS)


def allowed_tuples() -> list[HiddenTuple]:
    return [t for t in _all() if satisfies_ghz_constraints(t)]


def classify_allowed() -> Partition:
    allowed = allowed_tuples()
    counts = Counter(coincidence_setup_count(t) for t in allowed)
    return Partition(total=len(_all()), allowed=len(allowed), by_coincidence_count=dict(sorted(counts.items())))


def build_lambda48() -> list[HiddenTuple]:
    """Allowed tuples firing in exactly four settings, canonically sorted."""
    return sorted(t for t in allowed_tuples() if coincidence_setup_count(t) == 4)


def load_table1() -> list[HiddenTuple]:
    """The golden 48-row fixture, one tuple per line."""
    text = resources.files("prismghz").joinpath("data/table1.txt").read_text(encoding="ascii")
    return [parse_tuple(line) for line in text.splitlines() if line.strip()]


def compare_with_table1(generated: list[HiddenTuple] | None = None) -> list[str]:
    """Line-by-line diff against the fixture; empty list means identical."""
    if generated is None:
        generated = build_lambda48()
    golden = load_table1()
    diffs = []
    for i in range(max(len(golden), len(generated))):
        g = format_tuple(golden[i]) if i < len(golden) else "<missing>"
        n = format_tuple(generated[i]) if i < len(generated) else "<missing>"
        if g != n:
            diffs.append(f"lambda{i + 1}: table={g} generated={n}")
    return diffs


__all__ = [
    "Partition",
    "enumerate_all",
    "satisfies_ghz_constraints",
    "coincidence_setup_count",
    "allowed_tuples",
    "classify_allowed",
    "build_lambda48",
    "load_table1",
    "compare_with_table1",
]
