"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 verification
failure, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import continuous as cm
from . import discrete as dm
from .core import ALL_SETTINGS, DiscreteSetting, format_tuple
from .enumerator import build_lambda48, classify_allowed, compare_with_table1
from .simulator import (
    CoincidenceStats,
    ConfigError,
    ErrorModel,
    ExperimentConfig,
    InsufficientDataError,
    run_experiment,
)

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_SOLVER = 0, 1, 2, 3

_PI_RE = re.compile(r"^([+-]?[0-9.eE+-]*)\*?pi(?:([/*])([0-9.eE+-]+))?$")


def parse_angle(text: str) -> float:
    """Radians, with "pi" literals: ``0.3pi``, ``pi/3``, ``0.9*pi/3``, ``1.2``."""
    s = text.strip().replace("π", "pi").replace(" ", "")
    m = _PI_RE.match(s)
    if not m:
        try:
            return float(s)
        except ValueError:
            raise ValueError(f"cannot parse angle {text!r}") from None
    coef, op, num = m.groups()
    c = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
    val = c * math.pi
    if op == "/":
        val /= float(num)
    elif op == "*":
        val *= float(num)
    return val


@dataclass
class SimulationConfig:
    """Parsed ``key=value`` simulation file."""

    source: str = ""
    schedule: str = "cycle8"
    setting: DiscreteSetting | None = None
    angles: tuple[float, float, float] | None = None
    d: float = 1.0
    dark: float = 0.0
    trigger: bool = False
    trigger_eff: float = 1.0
    N: int = 1_000_000
    seed: int = 0
    model: str = "48"
    delta: float = 0.9 * math.pi / 3
    grid: int = 1024
    tol: float = 1e-3
    solution: Path | None = None
    bins: int = 16
    log: bool = True
    extra: dict = field(default_factory=dict)

    def error_model(self) -> ErrorModel:
        return ErrorModel(self.d, self.dark, self.trigger, self.trigger_eff)

    def build(self, solution: cm.DensitySolution | None = None) -> ExperimentConfig:
        model = None
        if self.source == "discrete":
            model = dm.default_model() if self.model == "48" else dm.allowed_uniform_model()
        elif solution is None:
            if self.solution is not None:
                solution = cm.DensitySolution.load(self.solution)
            else:
                solution = cm.solve_densities(self.delta, self.grid, self.tol)
        return ExperimentConfig(
            source=self.source,
            schedule=self.schedule,
            setting=self.setting,
            angles=cm.ContinuousSettings.of(*self.angles) if self.angles else None,
            error=self.error_model(),
            n_trials=self.N,
            seed=self.seed,
            bins=self.bins,
            model=model,
            solution=solution,
        ).validate()


def _onoff(v: str) -> bool:
    if v.lower() in ("on", "true", "yes", "1"):
        return True
    if v.lower() in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {v!r}")


def _prob(v: str) -> float:
    p = float(v)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return p


def _count(v: str) -> int:
    n = int(float(v)) if re.fullmatch(r"[0-9.]+[eE][0-9]+", v) else int(v)
    if n < 0:
        raise ValueError("negative count")
    return n


def _choice(*options):
    def parse(v: str) -> str:
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v

    return parse


_PARSERS = {
    "source": _choice("discrete", "continuous"),
    "schedule": _choice("cycle8", "random8", "fixed", "uniform"),
    "setting": DiscreteSetting.parse,
    "angles": lambda v: tuple(parse_angle(a) for a in _split3(v)),
    "d": _prob,
    "dark": _prob,
    "trigger": _onoff,
    "trigger_eff": _prob,
    "N": _count,
    "seed": _count,
    "model": _choice("48", "409"),
    "delta": parse_angle,
    "grid": _count,
    "tol": float,
    "solution": Path,
    "bins": _count,
    "log": _onoff,
}


def _split3(v: str) -> list[str]:
    parts = v.strip().strip("()").split(",")
    if len(parts) != 3:
        raise ValueError("expected three comma-separated angles")
    return parts


def load_config(path) -> SimulationConfig:
    """Read a ``key=value`` file; ``#`` starts a comment."""
    path = Path(path)
    cfg = SimulationConfig()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            parsed = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
        if key == "solution" and not parsed.is_absolute():
            parsed = path.parent / parsed
        setattr(cfg, key, parsed)
    if not cfg.source:
        raise ConfigError(f"{path}: missing required key 'source'")
    if cfg.N == 0:
        raise ConfigError(f"{path}: N must be positive")
    return cfg


# --- subcommands ------------------------------------------------------------


def cmd_enumerate(args) -> int:
    part = classify_allowed()
    print(part.summary())
    if args.counts:
        return EXIT_OK
    lam = build_lambda48()
    diffs = compare_with_table1(lam)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = [f"lambda{i + 1}\t{format_tuple(t)}" for i, t in enumerate(lam)]
    lines.append("identical to the reference table" if not diffs else "DIFFERS from the reference table")
    lines.extend(diffs)
    (outdir / "table1_comparison.txt").write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")
    print("lambda48: identical to the reference table" if not diffs else f"lambda48: {len(diffs)} rows differ from the reference table")
    return EXIT_OK if not diffs else EXIT_VERIFY


def cmd_verify(args) -> int:
    model = dm.default_model() if args.model == "48" else dm.allowed_uniform_model()
    report = dm.verify_against_quantum(model)
    checks = {"conditionals": report.ok}
    singles = dm.single_station_conditionals(model)
    checks["single-station = 1/2"] = all(v == Fraction(1, 2) for v in singles.values())
    effs = [dm.triple_efficiency(model, s) for s in ALL_SETTINGS]
    checks["triple efficiency = 1/2"] = all(e == Fraction(1, 2) for e in effs)
    omegas = dm.omega_expectations(model)
    checks["E(Omega) = (1, 1, 1, -1)"] = omegas == (1, 1, 1, -1)
    ineq = dm.dbs_inequality(*omegas)
    checks["dbs statistic = 4"] = ineq.statistic == 4 and not ineq.satisfied

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "verification.tsv").write_text(report.to_text(), encoding="ascii", newline="\n")
    print(report.summary())
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"dbs statistic {ineq.statistic} (bounds [-2, 2], satisfied={ineq.satisfied})")
    return EXIT_OK if all(checks.values()) else EXIT_VERIFY


def cmd_solve(args) -> int:
    try:
        sol = cm.solve_densities(parse_angle(args.delta), args.grid, args.tol, args.max_iter)
    except cm.DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except cm.SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    sol.save(outdir / "solution.json")
    cm.write_solution_curves(sol, outdir)
    print(f"delta={sol.delta!r} grid_n={sol.grid_n} residual={sol.residual:.3e} single_efficiency={sol.single_efficiency:.6f}")
    return EXIT_OK


def cmd_curve(args) -> int:
    sol = cm.DensitySolution.load(args.solution)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cm.write_triple_curve(sol, out, args.points)
    w, p = cm.triple_efficiency_curve(sol, args.points)
    i = int(p.argmin())
    print(f"min p_triple={p[i]:.6e} at w={w[i]:.6f}; omega^3={sol.single_efficiency ** 3:.6e}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
        exp = cfg.build()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except cm.SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    log = outdir / "trials.csv" if cfg.log else None
    stats = run_experiment(exp, workers=args.workers, log=log)
    stats.save(outdir / "stats.json")
    print(f"emitted={stats.n_emitted} selected={stats.n_selected()} ({stats.selection})")
    return EXIT_OK


def format_report(stats: CoincidenceStats) -> str:
    lines = [f"post-selection: {stats.selection}", f"emitted: {stats.n_emitted}", f"selected: {stats.n_selected()}"]
    for key in sorted(stats.per_setting):
        c = stats.per_setting[key]
        n = stats.n_selected(key)
        rate = n / c.n_emitted if c.n_emitted else float("nan")
        line = f"  [{key}] emitted={c.n_emitted} selected={n} rate={rate:.6f}"
        if n:
            line += f" E={stats.expectation(key):+.6f}"
        lines.append(line)
    for name, e in stats.omega_expectations().items():
        lines.append(f"E({name}) = {'n/a' if e is None else f'{e:+.6f}'}")
    eps, dbs = stats.epsilon, stats.dbs_statistic
    lines.append(f"epsilon = {'n/a' if eps is None else f'{eps:.6f}'}")
    if dbs is not None:
        lines.append(f"dbs statistic = {dbs:.6f} ({'within' if -2 <= dbs <= 2 else 'violates'} [-2, 2])")
    return "\n".join(lines)


def cmd_report(args) -> int:
    try:
        stats = CoincidenceStats.load(args.stats)
    except (OSError, KeyError, ValueError) as exc:
        print(f"cannot read stats: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        print(format_report(stats))
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="prismghz", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("enumerate", help="enumerate {+,-,D}^6 and rebuild the 48-tuple space")
    e.add_argument("--counts", action="store_true", help="only print the partition counts")
    e.add_argument("--outdir", default=".")
    e.set_defaults(func=cmd_enumerate)

    v = sub.add_parser("verify", help="exact check of the discrete model against the quantum rule")
    v.add_argument("--model", choices=("48", "409"), default="48")
    v.add_argument("--outdir", default=".")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("solve", help="solve for the continuum densities f and rho")
    s.add_argument("--delta", default="0.9pi/3", help="window width in radians, pi literals allowed")
    s.add_argument("--grid", type=int, default=1024)
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--outdir", default=".")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("curve", help="triple detection efficiency versus alpha+beta+gamma")
    c.add_argument("--solution", required=True)
    c.add_argument("--points", type=int, default=None)
    c.add_argument("--out", default="triple_efficiency.csv")
    c.set_defaults(func=cmd_curve)

    m = sub.add_parser("simulate", help="Monte Carlo run from a key=value config")
    m.add_argument("--config", required=True)
    m.add_argument("--outdir", default=".")
    m.add_argument("--workers", type=int, default=1)
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="summarize a stats file")
    r.add_argument("--stats", required=True)
    r.set_defaults(func=cmd_report)
    return p


def execute(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


def main() -> None:
    sys.exit(execute())


if __name__ == "__main__":
    main()
