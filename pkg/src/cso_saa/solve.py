"""Projected first-order minimization of empirical objectives over the ball.

Two methods: projected gradient with Armijo backtracking (smooth instances,
stops on the gradient-mapping norm) and projected subgradient with step
c/sqrt(t) (nonsmooth instances, tracks the best iterate and stops when the
best value stalls over a window).  Accuracy targets are far below experiment
noise for the smooth case; for nonsmooth objectives the step constant should
be tuned to the expected distance from the start to the minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .saa import SaaObjective
from .sampling import ConditionalDataset, Dataset, IndependentDataset

Array = np.ndarray

PROJECTED_GRADIENT = "projected_gradient"
PROJECTED_SUBGRADIENT = "projected_subgradient"
HUBER1D_CLOSED_FORM = "huber1d_closed_form"
AUTO = "auto"


class SolverError(RuntimeError):
    pass


def project_ball(x: Array, radius: float) -> Array:
    """Euclidean projection onto {x : ||x|| <= radius}; idempotent and
    nonexpansive."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    if norm <= radius:
        return x
    return x * (radius / norm)


@dataclass(frozen=True)
class SolverConfig:
    method: str = AUTO
    max_iters: int = 2000
    tolerance: float = 1e-7
    initial: Optional[tuple[float, ...]] = None
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    step_constant: Optional[float] = None   # subgradient c; default D/sqrt(max_iters)
    stall_window: int = 200
    keep_trace: bool = False

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0 < self.armijo_shrink < 1:
            raise ValueError(f"armijo_shrink must lie in (0,1), got {self.armijo_shrink}")

    @classmethod
    def from_json(cls, obj: Optional[dict]) -> "SolverConfig":
        if obj is None:
            return cls()
        data = dict(obj)
        if data.get("initial") is not None:
            data["initial"] = tuple(float(v) for v in data["initial"])
        return cls(**data)


@dataclass(frozen=True)
class SolveResult:
    x_hat: Array
    value: float
    iterations: int
    reason: str                      # "converged" | "max_iters"
    trace: Optional[Array] = None    # best-value-so-far per iteration


def _start_point(obj: SaaObjective, cfg: SolverConfig) -> Array:
    if cfg.initial is None:
        x0 = np.zeros(obj.problem.dimension)
    else:
        x0 = np.asarray(cfg.initial, dtype=float)
    return project_ball(x0, obj.problem.domain_radius)


def _check_finite(value: float, iteration: int):
    if not math.isfinite(value):
        raise SolverError(f"objective became non-finite at iteration {iteration}")


def solve_saa(obj: SaaObjective, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Minimize the empirical objective over its domain ball.

    ``method="auto"`` picks projected gradient when the outer cost is smooth
    (or the objective is regularized on a smooth instance), projected
    subgradient otherwise.
    """
    method = cfg.method
    if method == AUTO:
        method = PROJECTED_GRADIENT if obj.problem.smooth_outer else PROJECTED_SUBGRADIENT
    if method == HUBER1D_CLOSED_FORM:
        x = np.array([huber1d_closed_form(obj.dataset)])
        x = project_ball(x, obj.problem.domain_radius)
        return SolveResult(x_hat=x, value=obj.value(x), iterations=0, reason="converged")
    if method == PROJECTED_GRADIENT:
        if not obj.problem.smooth_outer:
            raise SolverError(
                f"projected gradient requires a smooth outer cost ({obj.problem.label})")
        return _projected_gradient(obj, cfg)
    if method == PROJECTED_SUBGRADIENT:
        return _projected_subgradient(obj, cfg)
    raise SolverError(f"unknown method: {cfg.method!r}")


def _projected_gradient(obj: SaaObjective, cfg: SolverConfig) -> SolveResult:
    radius = obj.problem.domain_radius
    x = _start_point(obj, cfg)
    fx = obj.value(x)
    _check_finite(fx, 0)
    step = 1.0
    trace = [fx] if cfg.keep_trace else None
    for it in range(1, cfg.max_iters + 1):
        grad = obj.subgradient(x)
        while True:
            x_new = project_ball(x - step * grad, radius)
            f_new = obj.value(x_new)
            _check_finite(f_new, it)
            decrease = float(grad @ (x_new - x))
            if f_new <= fx + cfg.armijo_slope * decrease or step < 1e-18:
                break
            step *= cfg.armijo_shrink
        mapping_norm = float(np.linalg.norm(x - x_new)) / step
        assert float(np.linalg.norm(x_new)) <= radius * (1 + 1e-12)
        x, fx = x_new, f_new
        if trace is not None:
            trace.append(fx)
        if mapping_norm <= cfg.tolerance:
            return SolveResult(x, fx, it, "converged",
                               np.array(trace) if trace is not None else None)
        step /= cfg.armijo_shrink  # let the step grow back between iterations
    return SolveResult(x, fx, cfg.max_iters, "max_iters",
                       np.array(trace) if trace is not None else None)


def _projected_subgradient(obj: SaaObjective, cfg: SolverConfig) -> SolveResult:
    radius = obj.problem.domain_radius
    x = _start_point(obj, cfg)
    best_x = x.copy()
    best_f, grad = obj.value_and_subgradient(x)
    _check_finite(best_f, 0)
    c = cfg.step_constant
    if c is None:
        c = 2.0 * radius / math.sqrt(cfg.max_iters)
    trace = [best_f] if cfg.keep_trace else None
    window_best = best_f
    for it in range(1, cfg.max_iters + 1):
        x = project_ball(x - (c / math.sqrt(it)) * grad, radius)
        fx, grad = obj.value_and_subgradient(x)
        _check_finite(fx, it)
        if fx < best_f:
            best_f = fx
            best_x = x.copy()
        if trace is not None:
            trace.append(best_f)
        if it % cfg.stall_window == 0:
            if window_best - best_f < cfg.tolerance:
                return SolveResult(best_x, best_f, it, "converged",
                                   np.array(trace) if trace is not None else None)
            window_best = best_f
    return SolveResult(best_x, best_f, cfg.max_iters, "max_iters",
                       np.array(trace) if trace is not None else None)


def huber1d_closed_form(dataset: Dataset) -> float:
    """Exact minimizer -eta_bar of the one-dimensional shifted-noise
    empirical objective huber(x + eta_bar, gamma) + (x + eta_bar)^2.

    Valid for a shared inner block or a single-row nested block (the exact
    argmin of an average of shifted objectives is not the grand mean).
    """
    if isinstance(dataset, IndependentDataset):
        inner = dataset.inner
    elif isinstance(dataset, ConditionalDataset):
        if dataset.n != 1:
            raise ValueError(
                "closed-form minimizer needs one outer record or a shared block; "
                f"got {dataset.n} nested rows")
        inner = dataset.inner[0]
    else:
        raise TypeError(f"not a dataset: {dataset!r}")
    if inner.shape[-1] != 1:
        raise ValueError(f"closed form is one-dimensional, got width {inner.shape[-1]}")
    return float(-np.mean(inner[..., 0]))
