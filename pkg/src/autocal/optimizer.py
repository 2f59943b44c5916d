"""Bound-constrained derivative-free minimization.

scipy's trust-region methods do the work: COBYQA (quadratic models, the
default) or COBYLA (linear models). This wrapper adds what the calibration
loop relies on: variables are rescaled by their initial step, every proposal
is projected into the box before the objective sees it, the evaluation budget
is hard, and the full trace is kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import Bounds
from scipy.optimize import minimize as _scipy_minimize

from .errors import InitFailed, InvalidArgument


@dataclass
class OptProblem:
    objective: Callable[[np.ndarray], float]
    lower: Sequence[float]
    upper: Sequence[float]
    x0: Sequence[float]
    step: Sequence[float]
    tol: float = 1e-3  # final trust radius, in units of ``step``
    max_evals: int = 40
    failure_penalty: float = 1e4
    method: str = "cobyqa"

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        self.step = np.broadcast_to(np.asarray(self.step, dtype=float), self.x0.shape).copy()
        if not (self.lower.shape == self.upper.shape == self.x0.shape):
            raise InvalidArgument("bounds and x0 must share one shape")
        if np.any(self.lower >= self.upper):
            raise InvalidArgument("lower bounds must be below upper bounds")
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise InvalidArgument("x0 lies outside the bounds")
        if np.any(self.step <= 0):
            raise InvalidArgument("steps must be positive")
        if self.max_evals < 1:
            raise InvalidArgument("max_evals must be >= 1")
        if self.method.lower() not in ("cobyqa", "cobyla"):
            raise InvalidArgument(f"unknown method {self.method!r}")

    @property
    def dimension(self) -> int:
        return self.x0.size


@dataclass
class OptTrace:
    points: list[np.ndarray] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    reason: str = ""

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.losses))

    @property
    def best_point(self) -> np.ndarray:
        return self.points[self.best_index]

    @property
    def best_loss(self) -> float:
        return float(self.losses[self.best_index])

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.losses))


def minimize(problem: OptProblem) -> OptTrace:
    """Minimize ``problem.objective`` inside its box; returns the evaluation trace."""
    trace = OptTrace()
    lo, hi, x0, step = problem.lower, problem.upper, problem.x0, problem.step

    def evaluate(x: np.ndarray) -> float:
        x = np.clip(x, lo, hi)
        assert np.all(x >= lo) and np.all(x <= hi)
        try:
            loss = float(problem.objective(x.copy()))
        except Exception:
            if not trace.losses:
                raise
            loss = problem.failure_penalty
        if not np.isfinite(loss):
            loss = problem.failure_penalty
        trace.points.append(x)
        trace.losses.append(loss)
        return loss

    try:
        evaluate(x0)
    except Exception as exc:
        raise InitFailed(f"objective failed at the initial point: {exc}") from exc

    if problem.max_evals == 1:
        trace.reason = "budget"
        return trace

    def scaled(u: np.ndarray) -> float:
        if not np.any(u) and len(trace.losses) == 1:
            return trace.losses[0]
        if len(trace.losses) >= problem.max_evals:
            return min(trace.losses)
        return evaluate(x0 + u * step)

    u_lo = (lo - x0) / step
    u_hi = (hi - x0) / step
    method = problem.method.lower()
    if method == "cobyqa":
        options = {"initial_tr_radius": 1.0, "final_tr_radius": problem.tol, "maxfev": problem.max_evals}
    else:
        options = {"rhobeg": 1.0, "tol": problem.tol, "maxiter": problem.max_evals}
    res = _scipy_minimize(
        scaled,
        np.zeros_like(x0),
        method=method.upper(),
        bounds=Bounds(u_lo, u_hi),
        options=options,
    )
    trace.reason = "budget" if len(trace.losses) >= problem.max_evals else f"converged: {res.message}"
    return trace
