"""Exact-rational probability calculus on a finite prism model.

All probabilities are :class:`fractions.Fraction` so identities such as
24/48 = 1/2 are checked as equalities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .core import (
    ALL_SIGNS,
    ALL_SETTINGS,
    DEFECTIVE,
    OMEGAS,
    DiscreteSetting,
    HiddenTuple,
    Outcome,
    OutcomeSign,
    format_tuple,
    slot_index,
)
from .enumerator import allowed_tuples, build_lambda48


class UndefinedConditionalError(ZeroDivisionError):
    """Conditioning event has zero weight."""


NON_DEFECTIVE = "nonD"


@dataclass(frozen=True)
class DiscreteModel:
    tuples: tuple[HiddenTuple, ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.tuples) != len(self.weights):
            raise ValueError("tuples and weights differ in length")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if sum(self.weights, Fraction(0)) != 1:
            raise ValueError("weights must sum to exactly 1")

    @classmethod
    def uniform(cls, tuples: Sequence[HiddenTuple]) -> "DiscreteModel":
        w = Fraction(1, len(tuples))
        return cls(tuple(tuples), (w,) * len(tuples))

    @classmethod
    def point_mass(cls, tuples: Sequence[HiddenTuple], index: int) -> "DiscreteModel":
        weights = [Fraction(0)] * len(tuples)
        weights[index] = Fraction(1)
        return cls(tuple(tuples), tuple(weights))

    def __len__(self) -> int:
        return len(self.tuples)

    def weight(self, indices: Iterable[int]) -> Fraction:
        return sum((self.weights[i] for i in indices), Fraction(0))


def default_model() -> DiscreteModel:
    """Uniform 1/48 model on the 48-tuple space."""
    return DiscreteModel.uniform(build_lambda48())


def allowed_uniform_model() -> DiscreteModel:
    return DiscreteModel.uniform(allowed_tuples())


@dataclass(frozen=True)
class EventCondition:
    """Per-station requirement ``(angle, required)``; ``required`` is an Outcome or ``"nonD"``."""

    requirements: Mapping[int, tuple[str, object]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.requirements:
            raise ValueError("event condition needs at least one requirement")
        for station, (angle, req) in self.requirements.items():
            if station not in (0, 1, 2):
                raise ValueError(f"bad station {station}")
            slot_index(station, angle)
            if not (isinstance(req, Outcome) and req is not DEFECTIVE) and req != NON_DEFECTIVE:
                raise ValueError(f"requirement must be Plus, Minus or non-defective, got {req!r}")

    @classmethod
    def of(cls, **kw) -> "EventCondition":
        """``EventCondition.of(A=("pi/2", PLUS), C=("0", MINUS))``."""
        names = {"A": 0, "B": 1, "C": 2}
        return cls({names[k]: v for k, v in kw.items()})

    @classmethod
    def outcome(cls, setting: DiscreteSetting, signs: OutcomeSign) -> "EventCondition":
        return cls({s: (a, Outcome.from_sign(v)) for s, (a, v) in enumerate(zip(setting, signs))})

    def matches(self, t: HiddenTuple) -> bool:
        for station, (angle, req) in self.requirements.items():
            o = t[slot_index(station, angle)]
            if req == NON_DEFECTIVE:
                if o is DEFECTIVE:
                    return False
            elif o is not req:
                return False
        return True


def event_subset(model: DiscreteModel, cond: EventCondition) -> list[int]:
    """Indices (0-based) of tuples satisfying every requirement."""
    return [i for i, t in enumerate(model.tuples) if cond.matches(t)]


def triple_subset(model: DiscreteModel, setting: DiscreteSetting) -> list[int]:
    slots = setting.slots()
    return [i for i, t in enumerate(model.tuples) if all(t[s] is not DEFECTIVE for s in slots)]


def conditional_probability(model: DiscreteModel, cond: EventCondition, setting: DiscreteSetting) -> Fraction:
    for station, (angle, _) in cond.requirements.items():
        if setting[station] != angle:
            raise ValueError(f"condition angle {angle} disagrees with setting at station {station}")
    triple = triple_subset(model, setting)
    denom = model.weight(triple)
    if denom == 0:
        raise UndefinedConditionalError(f"zero-weight triple subset at setting {setting.label}")
    return model.weight(i for i in triple if cond.matches(model.tuples[i])) / denom


def quantum_conditional(setting: DiscreteSetting, signs: OutcomeSign) -> Fraction:
    """(1 + ijk sin(x+y+z))/8 with the sine evaluated exactly on multiples of pi/2."""
    sine = (0, 1, 0, -1)[setting.n_half_pi() % 4]
    return Fraction(1 + signs.parity * sine, 8)


def product_expectation(model: DiscreteModel, setting: DiscreteSetting) -> Fraction:
    triple = triple_subset(model, setting)
    denom = model.weight(triple)
    if denom == 0:
        raise UndefinedConditionalError(f"zero-weight triple subset at setting {setting.label}")
    num = Fraction(0)
    for i in triple:
        t = model.tuples[i]
        p = 1
        for s in setting.slots():
            p *= t[s].value_int
        num += p * model.weights[i]
    return num / denom


def triple_efficiency(model: DiscreteModel, setting: DiscreteSetting) -> Fraction:
    return model.weight(triple_subset(model, setting))


@dataclass(frozen=True)
class CaseResult:
    setting: DiscreteSetting
    signs: OutcomeSign
    model_value: Fraction | None
    quantum_value: Fraction

    @property
    def match(self) -> bool:
        return self.model_value == self.quantum_value

    def line(self) -> str:
        mv = "undefined" if self.model_value is None else str(self.model_value)
        return f"{self.setting.label}\t{self.signs.label}\t{mv}\t{self.quantum_value}\t{'ok' if self.match else 'MISMATCH'}"


@dataclass(frozen=True)
class VerificationReport:
    cases: tuple[CaseResult, ...]

    @property
    def n_match(self) -> int:
        return sum(c.match for c in self.cases)

    @property
    def ok(self) -> bool:
        return self.n_match == len(self.cases)

    @property
    def mismatches(self) -> list[CaseResult]:
        return [c for c in self.cases if not c.match]

    def summary(self) -> str:
        exact = "exact" if self.ok else "matched"
        return f"{self.n_match}/{len(self.cases)} {exact}"

    def to_text(self) -> str:
        head = "setting\tsigns\tmodel\tquantum\tmatch"
        return "\n".join([head, *(c.line() for c in self.cases)]) + "\n"


def verify_against_quantum(model: DiscreteModel) -> VerificationReport:
    """Compare all 8 x 8 triple-conditional probabilities with the quantum rule."""
    cases = []
    for s in ALL_SETTINGS:
        for signs in ALL_SIGNS:
            try:
                mv = conditional_probability(model, EventCondition.outcome(s, signs), s)
            except UndefinedConditionalError:
                mv = None
            cases.append(CaseResult(s, signs, mv, quantum_conditional(s, signs)))
    return VerificationReport(tuple(cases))


def single_station_conditionals(model: DiscreteModel) -> dict[tuple[str, int, str], Fraction]:
    """p(station = sign | triple) for every setting, station and sign."""
    out = {}
    for s in ALL_SETTINGS:
        for station in range(3):
            for sign in (1, -1):
                cond = EventCondition({station: (s[station], Outcome.from_sign(sign))})
                out[(s.label, station, "+" if sign > 0 else "-")] = conditional_probability(model, cond, s)
    return out


def omega_expectations(model: DiscreteModel) -> tuple[Fraction, Fraction, Fraction, Fraction]:
    return tuple(product_expectation(model, o.setting) for o in OMEGAS)


@dataclass(frozen=True)
class InequalityReport:
    statistic: Fraction | float
    lower: int = -2
    upper: int = 2
    epsilon_needed: Fraction = Fraction(1, 2)

    @property
    def satisfied(self) -> bool:
        return self.lower <= self.statistic <= self.upper


def dbs_inequality(e1, e2, e3, e4) -> InequalityReport:
    """First de Barros-Suppes inequality, -2 <= E1 + E2 + E3 - E4 <= 2."""
    for e in (e1, e2, e3, e4):
        if not -1 <= e <= 1:
            raise ValueError(f"expectation {e} outside [-1, 1]")
    return InequalityReport(statistic=e1 + e2 + e3 - e4)


def epsilon_reduced(eps) -> tuple:
    """Expectations with perfect correlations reduced by ``eps``."""
    return (1 - eps, 1 - eps, 1 - eps, -1 + eps)


def describe(model: DiscreteModel, indices: Iterable[int]) -> list[str]:
    return [format_tuple(model.tuples[i]) for i in indices]


__all__ = [
    "DiscreteModel",
    "EventCondition",
    "InequalityReport",
    "NON_DEFECTIVE",
    "UndefinedConditionalError",
    "VerificationReport",
    "allowed_uniform_model",
    "conditional_probability",
    "dbs_inequality",
    "default_model",
    "epsilon_reduced",
    "event_subset",
    "omega_expectations",
    "product_expectation",
    "quantum_conditional",
    "single_station_conditionals",
    "triple_efficiency",
    "triple_subset",
    "verify_against_quantum",
]
