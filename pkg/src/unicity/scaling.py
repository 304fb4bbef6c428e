"""How unicity changes with population size, and extrapolation fits."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import (DEFAULT_SAMPLE_SIZE, DEFAULT_SAMPLES, DEFAULT_SEED, SeedLike, Strategy,
                     _rng, child_seed, unicity_curve)
from .tensor import FingerprintTensor, Window

X_UNIT = "millions of users"
X_SCALE = 1e6


class ScheduleError(ValueError):
    pass


class FitError(ArithmeticError):
    """Raised when no start point converges; carries the best attempt."""

    def __init__(self, message, best=None, ss_res=None):
        super().__init__(message)
        self.best = best
        self.ss_res = ss_res


def realizations_for(size: int) -> int:
    """Repeat count per subsample size: 20 up to 500k, 10 below 1M, else 5."""
    if size <= 500_000:
        return 20
    if size < 1_000_000:
        return 10
    return 5


def schedule_for(sizes: Sequence[int], realizations: Optional[int] = None) -> list[tuple[int, int]]:
    return [(int(n), realizations or realizations_for(int(n))) for n in sorted(set(sizes))]


def default_schedule(population: int) -> list[tuple[int, int]]:
    """100k steps up to 1M, then 500k steps, always ending at the population.

    Populations under 100k get ten evenly spaced fractions instead.
    """
    if population < 100_000:
        sizes = [max(1, round(population * f / 10)) for f in range(1, 11)]
    else:
        sizes = list(range(100_000, min(population, 1_000_000) + 1, 100_000))
        sizes += list(range(1_500_000, population + 1, 500_000))
        sizes.append(population)
    return schedule_for(sizes)


@dataclass
class ScalingCurve:
    n_apps: int
    strategy: Strategy
    sizes: list[int]
    values: list[list[float]]
    x_unit: str = X_UNIT

    @property
    def mean(self) -> np.ndarray:
        return np.array([np.mean(v) for v in self.values])

    @property
    def std(self) -> np.ndarray:
        return np.array([np.std(v) for v in self.values])

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.sizes, dtype=float) / X_SCALE

    def as_dict(self) -> dict:
        return {
            "n_apps": self.n_apps,
            "strategy": self.strategy.value,
            "x_unit": self.x_unit,
            "points": [{"population": n, "x": n / X_SCALE, "realizations": len(v),
                        "mean": float(np.mean(v)), "std": float(np.std(v)),
                        "values": [float(a) for a in v]}
                       for n, v in zip(self.sizes, self.values)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingCurve":
        pts = d["points"]
        return cls(int(d["n_apps"]), Strategy(d["strategy"]), [int(p["population"]) for p in pts],
                   [list(p["values"]) for p in pts], d.get("x_unit", X_UNIT))


def realization_seed(seed: SeedLike, size: int, r: int) -> np.random.SeedSequence:
    """Estimator stream for realization ``r`` at subsample ``size``."""
    return child_seed(seed, size, r, 1)


def scaling_curves(tensor: FingerprintTensor, schedule, ns: Sequence[int], strategy: Strategy,
                   s: int = DEFAULT_SAMPLES, sample_size: int = DEFAULT_SAMPLE_SIZE,
                   seed: SeedLike = DEFAULT_SEED, window: Optional[Window] = None,
                   popularity_from: str = "subsample", workers: int = 1) -> list[ScalingCurve]:
    """Unicity against subsampled populations, one curve per n.

    Each realization draws users without replacement from the window
    population, rebuilds popularity and the match index on the subsample,
    and estimates unicity there. ``popularity_from="full"`` ranks items by
    their popularity in the whole window instead.
    """
    window = tensor.check_window(window)
    strategy = Strategy(strategy)
    population = tensor.present_users(window)
    bad = [(n, r) for n, r in schedule if n > len(population) or n < 1 or r < 1]
    if bad:
        raise ScheduleError(f"schedule entries invalid for population {len(population)}: {bad}")
    if popularity_from not in ("subsample", "full"):
        raise ValueError(f"unknown popularity source {popularity_from!r}")
    full_pop = tensor.popularity(window) if popularity_from == "full" else None
    values = {n: [] for n in ns}
    sizes = []
    for size, reps in schedule:
        sizes.append(size)
        per_n = {n: [] for n in ns}
        for r in range(reps):
            rows = _rng(seed, size, r).choice(population, size=size, replace=False)
            sub = tensor.subsample(rows)
            ests = unicity_curve(sub, window, ns, strategy, s, sample_size,
                                 realization_seed(seed, size, r), popularity=full_pop,
                                 workers=workers)
            for n, e in zip(ns, ests):
                per_n[n].append(e.mean)
        for n in ns:
            values[n].append(per_n[n])
    return [ScalingCurve(n, strategy, sizes, values[n]) for n in ns]


def scaling_curve(tensor, schedule, n, strategy, **kw) -> ScalingCurve:
    return scaling_curves(tensor, schedule, [n], strategy, **kw)[0]


class Form(str, enum.Enum):
    POWER_LAW = "power_law"
    STRETCHED_EXP = "stretched_exp"
    EXPONENTIAL = "exponential"
    LINEAR = "linear"


FORMULAS = {
    Form.POWER_LAW: "a*x**gamma + b",
    Form.STRETCHED_EXP: "a*exp(x**gamma) + b",
    Form.EXPONENTIAL: "a*exp(gamma*x) + b",
    Form.LINEAR: "a*x + b",
}

GAMMA_GRID = (0.25, 0.5, 1.0, 2.0, -0.25, -0.5, -1.0, -2.0)


def _basis(form: Form, x: np.ndarray, gamma: float):
    """The nonlinear term g(x; gamma) and its derivative in gamma."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if form is Form.POWER_LAW:
            g = x ** gamma
            return g, g * np.log(x)
        if form is Form.STRETCHED_EXP:
            xg = x ** gamma
            g = np.exp(xg)
            return g, g * xg * np.log(x)
        if form is Form.EXPONENTIAL:
            g = np.exp(gamma * x)
            return g, g * x
    raise ValueError(form)


def evaluate(form: Form, x, a: float, b: float, gamma: Optional[float] = None):
    x = np.asarray(x, dtype=float)
    form = Form(form)
    if form is Form.LINEAR:
        return a * x + b
    return a * _basis(form, x, gamma)[0] + b


@dataclass
class FitResult:
    form: Form
    a: float
    b: float
    gamma: Optional[float]
    pseudo_r2: float
    ss_res: float
    n_points: int
    weighted: bool = False
    x_unit: str = X_UNIT
    iterations: int = 0

    @property
    def is_fit(self) -> bool:
        return math.isfinite(self.pseudo_r2)

    def predict(self, x):
        return evaluate(self.form, x, self.a, self.b, self.gamma)

    def as_dict(self) -> dict:
        return {"form": self.form.value, "formula": FORMULAS[self.form], "a": self.a,
                "b": self.b, "gamma": self.gamma,
                "pseudo_r2": self.pseudo_r2 if self.is_fit else None,
                "not_a_fit": not self.is_fit, "ss_res": self.ss_res,
                "n_points": self.n_points, "weighted": self.weighted, "x_unit": self.x_unit,
                "iterations": self.iterations}

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        r2 = d["pseudo_r2"]
        return cls(Form(d["form"]), float(d["a"]), float(d["b"]),
                   None if d.get("gamma") is None else float(d["gamma"]),
                   -math.inf if r2 is None else float(r2), float(d["ss_res"]),
                   int(d["n_points"]), bool(d.get("weighted", False)),
                   d.get("x_unit", X_UNIT), int(d.get("iterations", 0)))


def _wls_line(g, y, w):
    """Weighted least squares for ``y ~ a*g + b``."""
    sw = np.sqrt(w)
    design = np.column_stack([g, np.ones_like(g)]) * sw[:, None]
    (a, b), *_ = np.linalg.lstsq(design, y * sw, rcond=None)
    return float(a), float(b)


def pseudo_r2(y, yhat, w=None) -> float:
    """``1 - SS_res / SS_tot``; 1 for an exact fit of constant data, else -inf there."""
    y = np.asarray(y, float)
    w = np.ones_like(y) if w is None else np.asarray(w, float)
    with np.errstate(over="ignore", invalid="ignore"):
        ss_res = float(np.sum(w * (y - yhat) ** 2))
        ybar = np.sum(w * y) / np.sum(w)
        ss_tot = float(np.sum(w * (y - ybar) ** 2))
        tiny = 1e-24 * max(float(np.sum(w * y ** 2)), 1e-300)
    if ss_tot <= tiny:
        return 1.0 if ss_res <= tiny else -math.inf
    return 1.0 - ss_res / ss_tot


def _lm(form, x, y, w, gamma0, max_iter, tol):
    """Levenberg-Marquardt on (a, b, gamma) from a closed-form (a, b) start."""
    g, _ = _basis(form, x, gamma0)
    if not np.all(np.isfinite(g)):
        return None
    a, b = _wls_line(g, y, w)
    theta = np.array([a, b, gamma0])

    def residual(th):
        gg, dg = _basis(form, x, th[2])
        return y - (th[0] * gg + th[1]), gg, dg

    r, gg, dg = residual(theta)
    ss = float(np.sum(w * r ** 2))
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jac = np.column_stack([gg, np.ones_like(gg), theta[0] * dg])
        jtj = jac.T @ (jac * w[:, None])
        jtr = jac.T @ (w * r)
        if not np.all(np.isfinite(jtj)):
            break
        improved = False
        while lam < 1e16:
            step_mat = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-300))
            try:
                delta = np.linalg.solve(step_mat, jtr)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = theta + delta
            r_t, gg_t, dg_t = residual(trial)
            ss_t = float(np.sum(w * r_t ** 2))
            if np.isfinite(ss_t) and ss_t <= ss:
                improved = True
                break
            lam *= 10
        if not improved:
            # no downhill step at any damping: a stationary point
            converged = True
            break
        small_step = np.all(np.abs(delta) <= tol * (np.abs(theta) + tol))
        small_gain = (ss - ss_t) <= tol * max(ss, 1e-300)
        theta, r, gg, dg, ss = trial, r_t, gg_t, dg_t, ss_t
        lam = max(lam / 10, 1e-12)
        if small_step or small_gain or ss == 0.0:
            converged = True
            break
    # re-solve a, b exactly at the final gamma
    gg, _ = _basis(form, x, theta[2])
    if np.all(np.isfinite(gg)):
        a, b = _wls_line(gg, y, w)
        r2 = y - (a * gg + b)
        ss2 = float(np.sum(w * r2 ** 2))
        if ss2 <= ss:
            theta[:2], ss = (a, b), ss2
    return theta, ss, converged, it


def fit_points(x, y, form: Form, weights=None, max_iter: int = 500, tol: float = 1e-14
               ) -> FitResult:
    """Least-squares fit of one functional form to ``(x, y)`` points."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    form = Form(form)
    w = np.ones_like(y) if weights is None else np.asarray(weights, float)
    need = 3 if form is Form.LINEAR else 4
    if len(np.unique(x)) < need:
        raise ValueError(f"{form.value} fit needs >= {need} distinct x values")
    if form in (Form.POWER_LAW, Form.STRETCHED_EXP) and (x <= 0).any():
        raise ValueError(f"{form.value} fit needs x > 0")
    if form is Form.LINEAR:
        a, b = _wls_line(x, y, w)
        with np.errstate(over="ignore", invalid="ignore"):
            yhat = a * x + b
            ss = float(np.sum(w * (y - yhat) ** 2))
            r2 = pseudo_r2(y, yhat, w)
        if not np.isfinite([a, b, ss]).all():
            raise FitError(f"{form.value}: non-finite least-squares solution")
        return FitResult(form, a, b, None, r2, ss, len(x), weights is not None)
    best = None
    for g0 in GAMMA_GRID:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = _lm(form, x, y, w, g0, max_iter, tol)
        if out is None:
            continue
        theta, ss, converged, it = out
        if not np.all(np.isfinite(theta)):
            continue
        if best is None or ss < best[1]:
            best = (theta, ss, converged, it)
    if best is None:
        raise FitError(f"{form.value}: no start point produced a finite fit")
    theta, ss, converged, it = best
    result = FitResult(form, float(theta[0]), float(theta[1]), float(theta[2]),
                       pseudo_r2(y, evaluate(form, x, *theta), w), ss, len(x),
                       weights is not None, iterations=it)
    if not converged:
        raise FitError(f"{form.value}: no convergence in {max_iter} iterations",
                       best=result, ss_res=ss)
    return result


def fit_scaling(curve: ScalingCurve, form: Form, weighted: bool = False) -> FitResult:
    """Fit mean unicity against population size (in millions).

    ``weighted`` uses 1/std^2 weights; sizes with zero spread fall back to
    the smallest positive variance so they do not dominate.
    """
    w = None
    if weighted:
        var = curve.std ** 2
        floor = var[var > 0].min() if (var > 0).any() else 1.0
        w = 1.0 / np.where(var > 0, var, floor)
    return fit_points(curve.x, curve.mean, form, w)


def extrapolate(fit: FitResult, x) -> tuple[float, bool]:
    """Predicted unicity at ``x`` (same unit as the fit), clamped to [0, 1]."""
    v = float(fit.predict(float(x)))
    c = min(max(v, 0.0), 1.0)
    return c, c != v


def extrapolation_table(fits: Sequence[FitResult], xs: Sequence[float]) -> list[dict]:
    rows = []
    for f in fits:
        for x in xs:
            v, clamped = extrapolate(f, x)
            rows.append({"form": f.form.value, "x": float(x), "population": float(x) * X_SCALE
                         if f.x_unit == X_UNIT else None, "unicity": v, "clamped": clamped})
    return rows
