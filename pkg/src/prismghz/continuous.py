"""Continuum prism model.

Hidden variables live in eight copies G^{ijk} of the 3-torus [0, 2pi)^3.  The
densities depend on w = x + y + z only::

    parity +1 regions (+++, --+, -+-, +--):  f(w) rho(w)
    parity -1 regions (-++, +-+, ++-, ---):  (1/4 - f(w)) rho(w)

A station with window angle ``a`` fires when its coordinate lies in
[a, a + delta] (mod 2pi).  Integrating any g(x+y+z) over such a window cube
collapses onto a 1-D integral against the triple self-convolution of the
indicator of [0, delta] (a quadratic B-spline, see :func:`window_kernel`).

Window angles relate to interferometer phases by ``alpha = phi + pi/6``; with
this offset the model reproduces p(ijk | triple) = (1 + ijk sin(phi1+phi2+phi3))/8.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * math.pi
MAX_DELTA = math.pi / 3
PHASE_OFFSET = math.pi / 6


class DomainError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message: str, best_residual: float = math.inf):
        super().__init__(f"{message} (best residual {best_residual:.3g})")
        self.best_residual = best_residual


class DegenerateDensityError(ZeroDivisionError):
    pass


def check_delta(delta: float) -> float:
    delta = float(delta)
    if not 0 < delta <= MAX_DELTA * (1 + 1e-12):
        raise DomainError(
            f"window width {delta} outside (0, pi/3]: the zero and quarter bands of f would overlap"
        )
    return delta


class ContinuousSettings(NamedTuple):
    """Window angles (alpha, beta, gamma), reduced mod 2pi."""

    alpha: float
    beta: float
    gamma: float

    @classmethod
    def of(cls, alpha, beta, gamma) -> "ContinuousSettings":
        return cls(*(float(a) % TWO_PI for a in (alpha, beta, gamma)))

    @classmethod
    def from_phases(cls, phi1, phi2, phi3) -> "ContinuousSettings":
        return cls.of(*(phase_to_window_angle(p) for p in (phi1, phi2, phi3)))

    @property
    def total(self) -> float:
        # fsum is correctly rounded, so the result is the same for any angle order
        return math.fsum((self.alpha, self.beta, self.gamma)) % TWO_PI


def phase_to_window_angle(phi: float) -> float:
    return (float(phi) + PHASE_OFFSET) % TWO_PI


def window_kernel(s, delta: float):
    """Triple self-convolution of the indicator of [0, delta].

    Piecewise quadratic on [0, 3 delta], zero elsewhere; integrates to delta**3.
    """
    s = np.asarray(s, dtype=float)
    d = float(delta)
    out = np.zeros_like(s)
    a = (s >= 0) & (s < d)
    b = (s >= d) & (s < 2 * d)
    c = (s >= 2 * d) & (s <= 3 * d)
    out[a] = 0.5 * s[a] ** 2
    out[b] = 0.5 * (-2.0 * s[b] ** 2 + 6.0 * d * s[b] - 3.0 * d * d)
    out[c] = 0.5 * (3.0 * d - s[c]) ** 2
    return out if out.ndim else float(out)


def kernel_integral(g, w0: float, delta: float, order: int = 24) -> float:
    """``int K(s) g(w0 + s) ds`` with Gauss-Legendre on each polynomial piece of K.

    Equals the integral of g(x+y+z) over [a, a+delta] x [b, b+delta] x [c, c+delta]
    whenever a + b + c = w0.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for lo in (0.0, delta, 2 * delta):
        s = lo + 0.5 * delta * (nodes + 1.0)
        # evaluate on the open piece to avoid branch ambiguity at the knots
        total += 0.5 * delta * float(np.sum(weights * window_kernel(s, delta) * g(w0 + s)))
    return total


def target_rhs(w):
    """(1 - cos w)/8: p(+++ | triple) expected at window-angle sum w."""
    return (1.0 - np.cos(w)) / 8.0


def band_masks(w, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Masks of the bands where f is forced to 0 and to 1/4 respectively."""
    w = np.mod(np.asarray(w, dtype=float), TWO_PI)
    eps = 1e-12
    zero = (w <= 3 * delta + eps) | (w >= TWO_PI - eps)
    quarter = (w >= math.pi - eps) & (w <= math.pi + 3 * delta + eps)
    return zero, quarter


@dataclass(frozen=True)
class DensitySolution:
    """f and rho sampled on ``grid_n`` uniform points of one 2pi period.

    ``rho_values`` is absolute: the eight regions together carry measure
    (2pi)^2 * int_0^{2pi} rho(w) dw = 1.
    """

    delta: float
    f_values: np.ndarray
    rho_values: np.ndarray
    residual: float
    tol: float = 1e-3
    meta: dict = field(default_factory=dict)

    @property
    def grid_n(self) -> int:
        return len(self.f_values)

    @property
    def step(self) -> float:
        return TWO_PI / self.grid_n

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.grid_n) * self.step

    @property
    def converged(self) -> bool:
        return self.residual <= self.tol

    @property
    def even_density(self) -> np.ndarray:
        """Density of each parity +1 region, f * rho."""
        return self.f_values * self.rho_values

    @property
    def odd_density(self) -> np.ndarray:
        return (0.25 - self.f_values) * self.rho_values

    @property
    def single_efficiency(self) -> float:
        return single_efficiency(self.delta)

    def total_measure(self) -> float:
        eight = 4 * self.even_density + 4 * self.odd_density
        return TWO_PI**2 * self.step * float(np.sum(eight))

    def to_json(self) -> str:
        doc = {
            "delta": self.delta,
            "grid_n": self.grid_n,
            "tol": self.tol,
            "residual": self.residual,
            "single_efficiency": self.single_efficiency,
            "w": [float(x) for x in self.grid],
            "f": [float(x) for x in self.f_values],
            "rho": [float(x) for x in self.rho_values],
            "meta": self.meta,
        }
        return json.dumps(doc, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8", newline="\n")

    @classmethod
    def from_json(cls, text: str) -> "DensitySolution":
        doc = json.loads(text)
        f = np.asarray(doc["f"], dtype=float)
        if len(f) != doc["grid_n"]:
            raise ValueError("grid_n does not match the number of f values")
        return cls(
            delta=float(doc["delta"]),
            f_values=f,
            rho_values=np.asarray(doc["rho"], dtype=float),
            residual=float(doc["residual"]),
            tol=float(doc.get("tol", 1e-3)),
            meta=doc.get("meta", {}),
        )

    @classmethod
    def load(cls, path) -> "DensitySolution":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _kernel_weights(delta: float, step: float) -> np.ndarray:
    """Trapezoid weights h*K(k h), k = 0..m; K vanishes at both ends of its support."""
    m = int(math.floor(3 * delta / step))
    return step * window_kernel(np.arange(m + 1) * step, delta)


def _window_matrix(delta: float, n: int) -> sp.csr_matrix:
    """Row i maps grid values F to the trapezoid value of int K(s) F(w_i + s) ds."""
    c = _kernel_weights(delta, TWO_PI / n)
    k = np.arange(len(c))
    rows = np.repeat(np.arange(n), len(c))
    cols = (rows + np.tile(k, n)) % n
    return sp.csr_matrix((np.tile(c, n), (rows, cols)), shape=(n, n))


def _periodic_interp(values: np.ndarray, w) -> np.ndarray:
    n = len(values)
    u = np.mod(np.asarray(w, dtype=float), TWO_PI) / (TWO_PI / n)
    j = np.floor(u).astype(int) % n
    t = u - np.floor(u)
    return (1 - t) * values[j] + t * values[(j + 1) % n]


def window_integral(sol: DensitySolution, values: np.ndarray, w0) -> np.ndarray:
    """Kernel-weighted integral of a grid function at arbitrary window sums ``w0``."""
    w0 = np.atleast_1d(np.asarray(w0, dtype=float))
    c = _kernel_weights(sol.delta, sol.step)
    s = np.arange(len(c)) * sol.step
    pts = w0[:, None] + s[None, :]
    return _periodic_interp(values, pts) @ c


def lhs_ratio(sol: DensitySolution, w0):
    """Window average of f weighted by rho: p(+++ | triple) predicted by the solution."""
    num = window_integral(sol, sol.even_density, w0)
    den = window_integral(sol, sol.rho_values, w0)
    if np.any(den <= 0):
        raise DegenerateDensityError("rho vanishes on the whole detection window")
    out = num / den
    return float(out[0]) if np.ndim(w0) == 0 else out


def grid_residual(sol: DensitySolution) -> float:
    """max over grid points of |lhs_ratio - target_rhs|."""
    C = _window_matrix(sol.delta, sol.grid_n)
    den = C @ sol.rho_values
    if np.any(den <= 0):
        raise DegenerateDensityError("rho vanishes on the whole detection window")
    return float(np.max(np.abs(C @ sol.even_density / den - target_rhs(sol.grid))))


def _hat_basis(n: int, stride: int) -> sp.csr_matrix:
    m = n // stride
    rows, cols, vals = [], [], []
    for j in range(m):
        for d in range(-stride + 1, stride):
            rows.append((j * stride + d) % n)
            cols.append(j)
            vals.append(1.0 - abs(d) / stride)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, m))


def solve_densities(
    delta: float,
    grid_n: int = 1024,
    tol: float = 1e-3,
    max_iter: int = 200,
    knot_stride: int = 4,
    margin: float = 0.5,
    f_weight: float = 1e-2,
) -> DensitySolution:
    """Find f, rho with max grid residual of the window-ratio equation <= ``tol``.

    g = f rho and h = (1/4 - f) rho are piecewise linear with nonnegative knot
    values every ``knot_stride`` grid points, so rho >= 0 and 0 <= f <= 1/4 hold
    by construction.  The residual condition is linear in (g, h)::

        |C g - t * 4 C (g + h)| <= margin * tol * 4 C (g + h)

    Among feasible pairs the quadratic program picks rho closest to uniform in
    L2, with a weak pull of f toward the shifted target off the forced bands.
    """
    import cvxpy as cp

    delta = check_delta(delta)
    if grid_n < 256:
        raise ValueError("grid_n must be at least 256")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if grid_n % knot_stride:
        raise ValueError("grid_n must be a multiple of knot_stride")

    n = grid_n
    w = np.arange(n) * (TWO_PI / n)
    t = target_rhs(w)
    zero, quarter = band_masks(w, delta)
    P = _hat_basis(n, knot_stride)
    CP = (_window_matrix(delta, n) @ P).tocsr() / delta**3
    m = P.shape[1]
    zero_knots = np.asarray((P[zero] > 0).sum(axis=0)).ravel() > 0
    quarter_knots = np.asarray((P[quarter] > 0).sum(axis=0)).ravel() > 0
    free = ~(zero_knots | quarter_knots)
    knots_w = np.arange(m) * knot_stride * (TWO_PI / n)
    f_ref = np.clip(target_rhs(knots_w - 1.5 * delta), 0.0, 0.25)

    # normalized scale: mean(rho) = 1 on the grid
    a = cp.Variable(m, nonneg=True)
    b = cp.Variable(m, nonneg=True)
    rho_k = 4 * (a + b)
    num = CP @ a
    den = 4 * (CP @ a + CP @ b)
    slack = margin * tol
    cons = [
        num - cp.multiply(t + slack, den) <= 0,
        cp.multiply(t - slack, den) - num <= 0,
        den >= 1e-6,
        cp.sum(P @ rho_k) == n,
    ]
    if zero_knots.any():
        cons.append(a[zero_knots] == 0)
    if quarter_knots.any():
        cons.append(b[quarter_knots] == 0)
    objective = cp.sum_squares(rho_k - 1) / m
    if f_weight and free.any():
        objective = objective + f_weight * cp.sum_squares(4 * (a[free] - cp.multiply(f_ref[free], rho_k[free]))) / m
    problem = cp.Problem(cp.Minimize(objective), cons)
    try:
        problem.solve(solver=cp.CLARABEL, max_iter=max_iter)
    except cp.error.SolverError as exc:
        raise SolverError(f"quadratic program failed: {exc}") from exc
    if a.value is None or problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise SolverError(f"no solution within {max_iter} iterations, status {problem.status}")

    g = np.clip(P @ a.value, 0.0, None)
    h = np.clip(P @ b.value, 0.0, None)
    g[zero] = 0.0
    h[quarter] = 0.0
    quarter_sum = g + h
    rho = 4.0 * quarter_sum
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(quarter_sum > 0, 0.25 * g / np.where(quarter_sum > 0, quarter_sum, 1.0), np.clip(target_rhs(w - 1.5 * delta), 0, 0.25))
    f = np.clip(f, 0.0, 0.25)
    f[zero] = 0.0
    f[quarter] = 0.25
    rho = rho / (np.mean(rho) * TWO_PI**3)

    sol = DensitySolution(delta, f, rho, residual=math.inf, tol=tol, meta={"grid_n": n, "knot_stride": knot_stride, "status": problem.status})
    residual = grid_residual(sol)
    sol = DensitySolution(delta, f, rho, residual=residual, tol=tol, meta=sol.meta)
    if residual > tol:
        raise SolverError("residual above tolerance", residual)
    return sol


def single_efficiency(delta: float) -> float:
    """p(A_alpha) = delta / 2pi, whatever the densities."""
    return float(delta) / TWO_PI


def triple_efficiency(sol: DensitySolution, w0):
    """p(A and B and C) at window-angle sum ``w0``."""
    out = window_integral(sol, sol.rho_values, w0)
    return float(out[0]) if np.ndim(w0) == 0 else out


def triple_efficiency_curve(sol: DensitySolution, points: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(w, p_triple) over one period; ``points`` defaults to the solution grid."""
    if points is None:
        w = sol.grid
        return w, _window_matrix(sol.delta, sol.grid_n) @ sol.rho_values
    w = np.arange(points) * (TWO_PI / points)
    return w, window_integral(sol, sol.rho_values, w)


def settings_triple_efficiency(sol: DensitySolution, settings: ContinuousSettings) -> float:
    return triple_efficiency(sol, settings.total)


def conditional_prob_continuous(sol: DensitySolution, settings: ContinuousSettings, signs) -> float:
    """p(A=i, B=j, C=k | triple detection) at the given window angles."""
    parity = signs[0] * signs[1] * signs[2]
    w0 = ContinuousSettings.of(*settings).total
    den = window_integral(sol, sol.rho_values, w0)[0]
    if den <= 0:
        raise DegenerateDensityError("zero triple efficiency at these settings")
    region = sol.even_density if parity > 0 else sol.odd_density
    return float(window_integral(sol, region, w0)[0] / den)


def model_conditional(w, parity: int):
    """Closed-form target of the model: (1 - ijk cos w)/8."""
    return (1.0 - parity * np.cos(w)) / 8.0


def single_outcome_probability(sol: DensitySolution, sign: int) -> float:
    """p(A^sign_alpha) by quadrature; the same for every station and angle.

    A station's window fixes one coordinate to a length-delta arc; the other two
    run over the full torus, so each region contributes delta * 2pi * int rho_r dw.
    Regions with the given sign at station A: two even, two odd.
    """
    assert sign in (1, -1)
    per_region = 2 * sol.even_density + 2 * sol.odd_density
    return sol.delta * TWO_PI * sol.step * float(np.sum(per_region))


def forced_band_errors(sol: DensitySolution) -> tuple[float, float]:
    zero, quarter = band_masks(sol.grid, sol.delta)
    return float(np.max(sol.f_values[zero], initial=0.0)), float(np.max(np.abs(sol.f_values[quarter] - 0.25), initial=0.0))


def _csv(path, header: str, columns) -> None:
    lines = [header]
    for row in zip(*columns):
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def write_solution_curves(sol: DensitySolution, outdir) -> dict[str, Path]:
    """f, rho and lhs/rhs curves as CSV files."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    w = sol.grid
    C = _window_matrix(sol.delta, sol.grid_n)
    lhs = (C @ sol.even_density) / (C @ sol.rho_values)
    paths = {"f": outdir / "f.csv", "rho": outdir / "rho.csv", "fit": outdir / "fit.csv"}
    _csv(paths["f"], "w,f", (w, sol.f_values))
    _csv(paths["rho"], "w,rho", (w, sol.rho_values))
    _csv(paths["fit"], "w,lhs,rhs", (w, lhs, target_rhs(w)))
    return paths


def write_triple_curve(sol: DensitySolution, path, points: int | None = None) -> Path:
    w, p = triple_efficiency_curve(sol, points)
    _csv(path, "w,p_triple", (w, p))
    return Path(path)
