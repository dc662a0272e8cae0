"""Event-by-event Monte Carlo of a GHZ run on a prism model.

Randomness is counter based: trials are grouped in fixed blocks of
``BLOCK`` and block ``b`` draws from ``Philox(key=(seed, b))``.  Every trial
uses one fixed-width row of uniforms, so its numbers depend on
(seed, trial_id) only and the result is independent of the worker count.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .continuous import (
    TWO_PI,
    ContinuousSettings,
    DensitySolution,
    DomainError,
)
from .core import (
    ALL_SETTINGS,
    ALL_SIGNS,
    OMEGAS,
    DiscreteSetting,
    HiddenTuple,
    Outcome,
)
from .discrete import DiscreteModel, dbs_inequality

BLOCK = 1 << 16
N_UNIFORMS = 18

# columns of the per-trial uniform row
_U_SCHED = 0
_U_HIDDEN = 1  # discrete tuple choice / continuous cell choice
_U_CELL = 2
_U_X, _U_Y = 3, 4
_U_PARITY, _U_REGION = 5, 6
_U_KEEP = 7  # 7, 8, 9
_U_DARK = 10  # 10, 11, 12
_U_DARKSIGN = 13
_U_TRIGGER = 14
_U_ANGLES = 15  # 15, 16, 17

SIGN_LABELS = tuple(s.label for s in ALL_SIGNS)
_SIGN_INDEX = {s: n for n, s in enumerate(ALL_SIGNS)}

EVEN_REGIONS = np.array([(1, 1, 1), (-1, -1, 1), (-1, 1, -1), (1, -1, -1)], dtype=np.int8)
ODD_REGIONS = -EVEN_REGIONS


class ConfigError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorModel:
    detector_efficiency: float = 1.0
    dark_count_prob: float = 0.0
    trigger_enabled: bool = False
    trigger_efficiency: float = 1.0

    def __post_init__(self):
        for name in ("detector_efficiency", "dark_count_prob", "trigger_efficiency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    settings: tuple[float, float, float]
    ideal: tuple[Outcome, Outcome, Outcome]
    observed: tuple[Outcome, Outcome, Outcome]
    dark_flags: tuple[bool, bool, bool]
    trigger_fired: bool
    setting_key: str = ""

    @property
    def triple(self) -> bool:
        return all(o.fires for o in self.observed)


# --- hidden variables -------------------------------------------------------


def _discrete_table(model: DiscreteModel) -> tuple[np.ndarray, np.ndarray]:
    codes = np.array([[o.code for o in t] for t in model.tuples], dtype=np.int8)
    cdf = np.cumsum([float(w) for w in model.weights])
    cdf[-1] = 1.0
    return codes, cdf


def _lookup(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def sample_hidden_indices(model: DiscreteModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized draw of ``size`` tuple indices by inverse CDF."""
    _, cdf = _discrete_table(model)
    return _lookup(cdf, rng.random(size))


def sample_hidden_discrete(model: DiscreteModel, rng: np.random.Generator) -> HiddenTuple:
    return model.tuples[int(sample_hidden_indices(model, rng, 1)[0])]


class _ContinuousSampler:
    """Inverse-CDF sampler for the piecewise-linear densities of a solution."""

    def __init__(self, sol: DensitySolution):
        if not sol.converged:
            raise DomainError("density solution has not converged")
        self.sol = sol
        self.n = sol.grid_n
        self.step = sol.step
        self.even = sol.even_density
        self.odd = sol.odd_density
        rho = self.even + self.odd
        self.rho = rho
        mass = 0.5 * (rho + np.roll(rho, -1))
        self.cdf = np.cumsum(mass) / mass.sum()
        self.cdf[-1] = 1.0

    def draw(self, u: np.ndarray):
        """Map uniform columns to (region signs, x, y, z, w)."""
        cell = np.searchsorted(self.cdf, u[:, _U_HIDDEN], side="right")
        cell = np.minimum(cell, self.n - 1)
        a = self.rho[cell]
        b = self.rho[(cell + 1) % self.n]
        v = u[:, _U_CELL]
        # inverse CDF of the linear density a + (b - a) t on [0, 1]
        root = np.sqrt(a * a + (b - a) * (a + b) * v)
        denom = a + root
        t = np.where(denom > 0, v * (a + b) / np.where(denom > 0, denom, 1.0), v)
        t = np.clip(t, 0.0, 1.0)
        w = (cell + t) * self.step
        ge = (1 - t) * self.even[cell] + t * self.even[(cell + 1) % self.n]
        go = (1 - t) * self.odd[cell] + t * self.odd[(cell + 1) % self.n]
        p_even = np.where(ge + go > 0, ge / np.where(ge + go > 0, ge + go, 1.0), 0.5)
        even = u[:, _U_PARITY] < p_even
        k = np.minimum((u[:, _U_REGION] * 4).astype(int), 3)
        signs = np.where(even[:, None], EVEN_REGIONS[k], ODD_REGIONS[k])
        x = u[:, _U_X] * TWO_PI
        y = u[:, _U_Y] * TWO_PI
        z = np.mod(w - x - y, TWO_PI)
        return signs, x, y, z, w


def sample_hidden_continuous(sol: DensitySolution, rng: np.random.Generator):
    """One hidden point: (region signs, x, y, z)."""
    signs, x, y, z, _ = _ContinuousSampler(sol).draw(rng.random((1, N_UNIFORMS)))
    return tuple(int(s) for s in signs[0]), float(x[0]), float(y[0]), float(z[0])


def in_window(coord, angle, delta) -> np.ndarray:
    return np.mod(np.asarray(coord) - np.asarray(angle), TWO_PI) <= delta


def station_response(hidden, station: int, angle, delta: float | None = None) -> Outcome:
    """Outcome of ``station`` (0, 1, 2) for a discrete tuple or a continuous point.

    Discrete: ``angle`` is "pi/2" or "0" and the slot value is returned.
    Continuous: ``hidden`` is (signs, x, y, z) and ``angle`` a window angle.
    """
    if isinstance(hidden, HiddenTuple):
        return hidden.response(station, angle)
    signs, *coords = hidden
    if delta is None:
        raise ValueError("continuous response needs the window width")
    if in_window(coords[station], float(angle) % TWO_PI, delta):
        return Outcome.from_sign(int(signs[station]))
    return Outcome.DEFECTIVE


# --- error model ------------------------------------------------------------


def _apply_errors(ideal: np.ndarray, em: ErrorModel, u: np.ndarray):
    """Vectorized detector loss, dark counts and trigger on int8 codes (+1/-1/0)."""
    keep = u[:, _U_KEEP : _U_KEEP + 3] < em.detector_efficiency
    observed = np.where(keep, ideal, 0).astype(np.int8)
    dark = (observed == 0) & (u[:, _U_DARK : _U_DARK + 3] < em.dark_count_prob)
    # one uniform gives three independent sign bits
    bits = (u[:, _U_DARKSIGN] * 8).astype(int)
    dark_sign = np.stack([np.where((bits >> i) & 1, 1, -1) for i in range(3)], axis=1).astype(np.int8)
    observed = np.where(dark, dark_sign, observed).astype(np.int8)
    if em.trigger_enabled:
        trigger = u[:, _U_TRIGGER] < em.trigger_efficiency
    else:
        trigger = np.zeros(len(u), dtype=bool)
    return observed, dark, trigger


def apply_error_model(ideal: Sequence[Outcome], em: ErrorModel, rng: np.random.Generator):
    """Returns (observed outcomes, dark flags, trigger fired) for one trial."""
    codes = np.array([[o.code for o in ideal]], dtype=np.int8)
    obs, dark, trig = _apply_errors(codes, em, rng.random((1, N_UNIFORMS)))
    return (
        tuple(Outcome.from_code(c) for c in obs[0]),
        tuple(bool(d) for d in dark[0]),
        bool(trig[0]),
    )


# --- configuration ----------------------------------------------------------

SCHEDULES = ("cycle8", "random8", "fixed", "uniform")


@dataclass
class ExperimentConfig:
    source: str = "discrete"
    schedule: str = "cycle8"
    setting: DiscreteSetting | None = None
    angles: ContinuousSettings | None = None
    error: ErrorModel = field(default_factory=ErrorModel)
    n_trials: int = 1_000_000
    seed: int = 0
    bins: int = 16
    model: DiscreteModel | None = None
    solution: DensitySolution | None = None

    def validate(self) -> "ExperimentConfig":
        if self.source not in ("discrete", "continuous"):
            raise ConfigError(f"unknown source {self.source!r}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.n_trials <= 0:
            raise ConfigError("N must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.source == "discrete":
            if self.model is None:
                raise ConfigError("discrete source needs a model")
            if self.schedule == "uniform" or self.angles is not None:
                raise ConfigError("the discrete model only admits the 8 discrete settings")
        else:
            if self.solution is None:
                raise ConfigError("continuous source needs a density solution")
            if not self.solution.converged:
                raise ConfigError("continuous source needs a converged solution")
        if self.schedule == "fixed" and (self.setting is None) == (self.angles is None):
            raise ConfigError("fixed schedule needs exactly one of setting= or angles=")
        if self.schedule != "fixed" and (self.setting is not None or self.angles is not None):
            raise ConfigError("setting=/angles= only apply to the fixed schedule")
        if self.bins < 1:
            raise ConfigError("bins must be positive")
        return self

    @property
    def selection(self) -> str:
        return "fourfold" if self.error.trigger_enabled else "triple"


# --- statistics -------------------------------------------------------------


@dataclass
class SettingCounts:
    """Integer counters for one setting (or angle bin)."""

    n_emitted: int = 0
    n_triple: int = 0
    n_fourfold: int = 0
    triple: list[int] = field(default_factory=lambda: [0] * 8)
    fourfold: list[int] = field(default_factory=lambda: [0] * 8)
    w: float | None = None

    def merge(self, other: "SettingCounts") -> None:
        self.n_emitted += other.n_emitted
        self.n_triple += other.n_triple
        self.n_fourfold += other.n_fourfold
        self.triple = [a + b for a, b in zip(self.triple, other.triple)]
        self.fourfold = [a + b for a, b in zip(self.fourfold, other.fourfold)]
        if self.w is None:
            self.w = other.w


@dataclass
class CoincidenceStats:
    selection: str
    per_setting: dict[str, SettingCounts]

    @property
    def n_emitted(self) -> int:
        return sum(c.n_emitted for c in self.per_setting.values())

    def selected_counts(self, key: str) -> list[int]:
        c = self.per_setting[key]
        return c.fourfold if self.selection == "fourfold" else c.triple

    def n_selected(self, key: str | None = None) -> int:
        if key is None:
            return sum(self.n_selected(k) for k in self.per_setting)
        c = self.per_setting[key]
        return c.n_fourfold if self.selection == "fourfold" else c.n_triple

    @property
    def n_triple(self) -> int:
        return sum(c.n_triple for c in self.per_setting.values())

    def conditional(self, key: str) -> dict[str, float]:
        n = self.n_selected(key)
        if n == 0:
            raise InsufficientDataError(f"no post-selected trials at setting {key}")
        return {lab: cnt / n for lab, cnt in zip(SIGN_LABELS, self.selected_counts(key))}

    def expectation(self, key: str) -> float:
        n = self.n_selected(key)
        if n == 0:
            raise InsufficientDataError(f"no post-selected trials at setting {key}")
        return sum(s.parity * c for s, c in zip(ALL_SIGNS, self.selected_counts(key))) / n

    def omega_expectations(self) -> dict[str, float | None]:
        return {o.name: (self.expectation(o.setting.label) if o.setting.label in self.per_setting else None) for o in OMEGAS}

    @property
    def epsilon(self) -> float | None:
        e = self.omega_expectations()
        if any(e[o.name] is None for o in OMEGAS[:3]):
            return None
        return 1.0 - (e["Omega1"] + e["Omega2"] + e["Omega3"]) / 3.0

    @property
    def dbs_statistic(self) -> float | None:
        e = self.omega_expectations()
        if any(v is None for v in e.values()):
            return None
        return dbs_inequality(*e.values()).statistic

    def merge(self, other: "CoincidenceStats") -> None:
        for k, c in other.per_setting.items():
            self.per_setting.setdefault(k, SettingCounts()).merge(c)

    def to_dict(self) -> dict:
        settings = {}
        for key in sorted(self.per_setting):
            c = self.per_setting[key]
            n = self.n_selected(key)
            settings[key] = {
                "w": c.w,
                "n_emitted": c.n_emitted,
                "n_triple": c.n_triple,
                "n_fourfold": c.n_fourfold,
                "counts_triple": dict(zip(SIGN_LABELS, c.triple)),
                "counts_fourfold": dict(zip(SIGN_LABELS, c.fourfold)),
                "conditional": self.conditional(key) if n else None,
                "product_expectation": self.expectation(key) if n else None,
            }
        return {
            "selection": self.selection,
            "n_emitted": self.n_emitted,
            "n_triple": self.n_triple,
            "n_selected": self.n_selected(),
            "omega_expectations": self.omega_expectations(),
            "epsilon": self.epsilon,
            "dbs_statistic": self.dbs_statistic,
            "settings": settings,
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8", newline="\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "CoincidenceStats":
        per = {}
        for key, s in doc["settings"].items():
            per[key] = SettingCounts(
                n_emitted=s["n_emitted"],
                n_triple=s["n_triple"],
                n_fourfold=s["n_fourfold"],
                triple=[s["counts_triple"][lab] for lab in SIGN_LABELS],
                fourfold=[s["counts_fourfold"][lab] for lab in SIGN_LABELS],
                w=s.get("w"),
            )
        return cls(doc["selection"], per)

    @classmethod
    def load(cls, path) -> "CoincidenceStats":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _sign_index(codes: np.ndarray) -> np.ndarray:
    """Index into ALL_SIGNS for rows of +1/-1 codes (ALL_SIGNS is product((1,-1), repeat=3))."""
    return ((codes[:, 0] < 0) * 4 + (codes[:, 1] < 0) * 2 + (codes[:, 2] < 0)).astype(int)


def estimate_stats(records: Iterable[TrialRecord], selection: str = "triple") -> CoincidenceStats:
    """Count post-selected outcomes per setting from individual records."""
    per: dict[str, SettingCounts] = {}
    n = 0
    for r in records:
        n += 1
        c = per.setdefault(r.setting_key, SettingCounts(w=math.fsum(r.settings) % TWO_PI))
        c.n_emitted += 1
        if r.triple:
            idx = _SIGN_INDEX[tuple(o.value_int for o in r.observed)]
            c.n_triple += 1
            c.triple[idx] += 1
            if r.trigger_fired:
                c.n_fourfold += 1
                c.fourfold[idx] += 1
    if n == 0:
        raise InsufficientDataError("no trial records")
    stats = CoincidenceStats(selection, per)
    empty = [k for k in per if stats.n_selected(k) == 0]
    if empty:
        raise InsufficientDataError(f"no post-selected trials at settings: {', '.join(sorted(empty))}")
    return stats


# --- the run ----------------------------------------------------------------


@dataclass
class _Block:
    trial_ids: np.ndarray
    angles: np.ndarray
    keys: np.ndarray
    key_labels: list[str]
    key_w: list[float]
    ideal: np.ndarray
    observed: np.ndarray
    dark: np.ndarray
    trigger: np.ndarray


class Experiment:
    def __init__(self, config: ExperimentConfig):
        self.config = config.validate()
        c = self.config
        if c.source == "discrete":
            self._codes, self._cdf = _discrete_table(c.model)
        else:
            self._sampler = _ContinuousSampler(c.solution)
        # settings table for discrete schedules
        if c.schedule in ("cycle8", "random8"):
            self._settings = list(ALL_SETTINGS)
        elif c.schedule == "fixed" and c.setting is not None:
            self._settings = [c.setting]
        else:
            self._settings = []

    @property
    def n_blocks(self) -> int:
        return -(-self.config.n_trials // BLOCK)

    def _uniforms(self, block: int, size: int) -> np.ndarray:
        gen = np.random.Generator(np.random.Philox(key=[self.config.seed, block]))
        return gen.random((BLOCK, N_UNIFORMS))[:size]

    def _labels(self):
        c = self.config
        if self._settings:
            labels = [s.label for s in self._settings]
            ws = []
            for s in self._settings:
                if c.source == "continuous":
                    ws.append(ContinuousSettings.from_phases(*s.radians()).total)
                else:
                    ws.append(s.phase_sum())
            return labels, ws
        if c.schedule == "fixed":
            a = c.angles
            return [f"{a.alpha:.9f},{a.beta:.9f},{a.gamma:.9f}"], [a.total]
        width = TWO_PI / c.bins
        return [f"wbin{k:03d}" for k in range(c.bins)], [(k + 0.5) * width for k in range(c.bins)]

    def run_block(self, block: int) -> _Block:
        c = self.config
        start = block * BLOCK
        size = min(BLOCK, c.n_trials - start)
        u = self._uniforms(block, size)
        ids = np.arange(start, start + size, dtype=np.int64)
        labels, ws = self._labels()

        if c.schedule == "cycle8":
            sidx = ids % 8
        elif c.schedule == "random8":
            sidx = np.minimum((u[:, _U_SCHED] * 8).astype(int), 7)
        else:
            sidx = np.zeros(size, dtype=int)

        if c.source == "discrete":
            lam = _lookup(self._cdf, u[:, _U_HIDDEN])
            slot_table = np.array([s.slots() for s in self._settings])
            slots = slot_table[sidx]
            ideal = np.take_along_axis(self._codes[lam], slots, axis=1)
            angles = np.array([s.radians() for s in self._settings])[sidx]
            keys = sidx
        else:
            signs, x, y, z, _ = self._sampler.draw(u)
            if self._settings:
                angles = np.array([ContinuousSettings.from_phases(*s.radians()) for s in self._settings])[sidx]
                keys = sidx
            elif c.schedule == "fixed":
                angles = np.tile(np.array(c.angles), (size, 1))
                keys = np.zeros(size, dtype=int)
            else:
                angles = u[:, _U_ANGLES : _U_ANGLES + 3] * TWO_PI
                keys = np.minimum((np.mod(angles.sum(axis=1), TWO_PI) / (TWO_PI / c.bins)).astype(int), c.bins - 1)
            coords = np.stack([x, y, z], axis=1)
            fire = np.mod(coords - angles, TWO_PI) <= self.config.solution.delta
            ideal = np.where(fire, signs, 0).astype(np.int8)

        observed, dark, trigger = _apply_errors(ideal.astype(np.int8), c.error, u)
        return _Block(ids, angles, keys, labels, ws, ideal.astype(np.int8), observed, dark, trigger)

    @staticmethod
    def count_block(b: _Block, selection: str) -> CoincidenceStats:
        per = {}
        triple = np.all(b.observed != 0, axis=1)
        four = triple & b.trigger
        sidx = _sign_index(b.observed)
        for k, label in enumerate(b.key_labels):
            m = b.keys == k
            n_em = int(m.sum())
            if n_em == 0:
                continue
            tri = np.bincount(sidx[m & triple], minlength=8)
            ff = np.bincount(sidx[m & four], minlength=8)
            per[label] = SettingCounts(
                n_emitted=n_em,
                n_triple=int(tri.sum()),
                n_fourfold=int(ff.sum()),
                triple=[int(v) for v in tri],
                fourfold=[int(v) for v in ff],
                w=float(b.key_w[k]),
            )
        return CoincidenceStats(selection, per)

    @staticmethod
    def block_records(b: _Block) -> Iterator[TrialRecord]:
        for n in range(len(b.trial_ids)):
            yield TrialRecord(
                trial_id=int(b.trial_ids[n]),
                settings=tuple(float(a) for a in b.angles[n]),
                ideal=tuple(Outcome.from_code(v) for v in b.ideal[n]),
                observed=tuple(Outcome.from_code(v) for v in b.observed[n]),
                dark_flags=tuple(bool(v) for v in b.dark[n]),
                trigger_fired=bool(b.trigger[n]),
                setting_key=b.key_labels[b.keys[n]],
            )

    def records(self) -> Iterator[TrialRecord]:
        for block in range(self.n_blocks):
            yield from self.block_records(self.run_block(block))

    def run(self, workers: int = 1, log=None) -> CoincidenceStats:
        """Run all trials; ``log`` is an optional text stream or path for the trial CSV."""
        stats = CoincidenceStats(self.config.selection, {})
        sink = None
        close = False
        if log is not None:
            if isinstance(log, (str, Path)):
                sink = open(log, "w", encoding="ascii", newline="\n")
                close = True
            else:
                sink = log
            sink.write(LOG_HEADER + "\n")
        try:
            if workers <= 1:
                results = map(self.run_block, range(self.n_blocks))
                pool = None
            else:
                pool = ThreadPoolExecutor(max_workers=workers)
                results = pool.map(self.run_block, range(self.n_blocks))
            for b in results:  # in block order
                stats.merge(self.count_block(b, self.config.selection))
                if sink is not None:
                    _write_block(sink, b)
            if pool is not None:
                pool.shutdown()
        finally:
            if close:
                sink.close()
        return stats


LOG_HEADER = "trial_id,alpha,beta,gamma,a_ideal,b_ideal,c_ideal,a_obs,b_obs,c_obs,dark_a,dark_b,dark_c,trigger"


def _write_block(sink, b: _Block) -> None:
    buf = io.StringIO()
    for n in range(len(b.trial_ids)):
        a = [float(v) for v in b.angles[n]]
        i, o, d = b.ideal[n], b.observed[n], b.dark[n]
        buf.write(
            f"{b.trial_ids[n]},{a[0]!r},{a[1]!r},{a[2]!r},{i[0]},{i[1]},{i[2]},{o[0]},{o[1]},{o[2]},"
            f"{int(d[0])},{int(d[1])},{int(d[2])},{int(b.trigger[n])}\n"
        )
    sink.write(buf.getvalue())


def run_experiment(config: ExperimentConfig, workers: int = 1, log=None) -> CoincidenceStats:
    return Experiment(config).run(workers=workers, log=log)


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n else math.inf
