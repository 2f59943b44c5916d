"""Curve fits shared by the calibration protocols.

* ``fit_rabi``     -- C + A exp(-tau t) sin(2 pi f t + phi0), weighted
* ``fit_sine``     -- offset + A sin(2 pi f x + phi), with extrema in range
* ``fit_parabola`` -- closed-form quadratic least squares
* ``fit_decay``    -- A p^m, weighted, with standard errors
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateFit, FitFailed, InvalidArgument

N_RABI_PARAMS = 5


def binomial_sigma(p, shots: int) -> np.ndarray:
    """sqrt(p(1-p)/shots), floored at 1/(2 shots)."""
    p = np.asarray(p, dtype=float)
    return np.maximum(np.sqrt(np.clip(p * (1 - p), 0, None) / shots), 1.0 / (2 * shots))


def _wrap(phase: float) -> float:
    """Map to (-pi, pi]."""
    w = (phase + np.pi) % (2 * np.pi) - np.pi
    return np.pi if w == -np.pi else float(w)


def _dominant_frequency(x: np.ndarray, y: np.ndarray, pad: int = 16) -> float:
    """Peak of the discrete spectrum of mean-subtracted, uniformly resampled data."""
    order = np.argsort(x)
    x, y = x[order], y[order]
    dx = np.median(np.diff(x))
    if not dx > 0:
        raise InvalidArgument("abscissa must contain distinct values")
    grid = np.arange(x[0], x[-1] + 0.5 * dx, dx)
    yy = np.interp(grid, x, y) - np.mean(y)
    n = pad * grid.size
    spec = np.abs(np.fft.rfft(yy, n))
    freqs = np.fft.rfftfreq(n, dx)
    spec[0] = 0.0
    return float(freqs[np.argmax(spec)])


def _linear_sine(x, y, f, w=None):
    """Best offset + a sin + b cos at fixed f; returns (offset, amp, phase, weighted ssr)."""
    basis = np.column_stack([np.ones_like(x), np.sin(2 * np.pi * f * x), np.cos(2 * np.pi * f * x)])
    w = np.ones_like(y) if w is None else w
    coef, *_ = np.linalg.lstsq(basis * w[:, None], y * w, rcond=None)
    ssr = float(np.sum(((basis @ coef - y) * w) ** 2))
    off, a, b = coef
    return off, float(np.hypot(a, b)), float(np.arctan2(b, a)), ssr


def _standard_errors(jac: np.ndarray) -> np.ndarray:
    try:
        cov = np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return np.full(jac.shape[1], np.inf)
    return np.sqrt(np.clip(np.diag(cov), 0, None))


# --- Rabi -----------------------------------------------------------------


@dataclass(frozen=True)
class RabiFit:
    c_offset: float
    amplitude: float
    decay: float
    frequency: float
    phase: float
    chi2_ndf: float
    t_x90: float
    n_points: int = 0

    def model(self, t) -> np.ndarray:
        return rabi_model(np.asarray(t, dtype=float), self.c_offset, self.amplitude, self.decay, self.frequency, self.phase)

    def to_dict(self) -> dict:
        return asdict(self)


def rabi_model(t, c, a, tau, f, phi0):
    return c + a * np.exp(-tau * t) * np.sin(2 * np.pi * f * t + phi0)


def x90_length(fit: RabiFit | float) -> float:
    """Quarter of the Rabi period, 1 / (4 f), in ns."""
    f = fit.frequency if isinstance(fit, RabiFit) else float(fit)
    if not f > 0:
        raise InvalidArgument(f"Rabi frequency must be positive, got {f}")
    return 1.0 / (4.0 * f)


def _canonical_rabi(p):
    c, a, tau, f, phi = p
    if f < 0:
        f, phi, a = -f, -phi, -a
    if a < 0:
        a, phi = -a, phi + np.pi
    return np.array([c, a, tau, f, _wrap(phi)])


def fit_rabi(t, p1, sigma, restarts: int = 3) -> RabiFit:
    t = np.asarray(t, dtype=float)
    y = np.asarray(p1, dtype=float)
    s = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    if t.shape != y.shape or t.size < 8:
        raise InvalidArgument("fit_rabi needs at least 8 matching points")
    if np.any(s <= 0):
        raise InvalidArgument("sigma must be positive")
    w = 1.0 / s

    def resid(p):
        return (rabi_model(t, *p) - y) * w

    f0 = _dominant_frequency(t, y)
    if f0 <= 0:
        raise DegenerateFit("no oscillation in the data")
    best = None
    for scale in (1.0, 0.8, 1.25)[: max(1, restarts)]:
        f = f0 * scale
        c, a, phi, _ = _linear_sine(t, y, f, w)
        p0 = np.array([c, a, 0.1 / np.ptp(t), f, phi])
        try:
            res = least_squares(resid, p0, method="lm", x_scale="jac", max_nfev=4000)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if not np.all(np.isfinite(res.x)):
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None or best.status <= 0:
        raise FitFailed("Rabi fit did not converge", residual=np.inf if best is None else 2 * best.cost)
    chi2 = 2.0 * best.cost
    p = _canonical_rabi(best.x)
    se = _standard_errors(best.jac)
    if p[3] <= 0:
        raise DegenerateFit("fitted Rabi frequency is not positive", residual=chi2)
    if not p[1] > max(3.0 * se[1], 1e-9):
        raise DegenerateFit("Rabi amplitude indistinguishable from zero", residual=chi2)
    return RabiFit(
        c_offset=float(p[0]),
        amplitude=float(p[1]),
        decay=float(p[2]),
        frequency=float(p[3]),
        phase=float(p[4]),
        chi2_ndf=float(chi2 / (t.size - N_RABI_PARAMS)),
        t_x90=x90_length(float(p[3])),
        n_points=int(t.size),
    )


# --- sine -----------------------------------------------------------------


@dataclass(frozen=True)
class SineFit:
    offset: float
    amplitude: float
    frequency: float
    phase: float
    arg_min: float
    arg_max: float

    def model(self, x) -> np.ndarray:
        return self.offset + self.amplitude * np.sin(2 * np.pi * self.frequency * np.asarray(x) + self.phase)


def _extremum_in_range(f, phi, lo, hi, target_phase, center):
    """x in [lo, hi] with 2 pi f x + phi = target_phase (mod 2 pi), nearest ``center``."""
    period = 1.0 / f
    x0 = (target_phase - phi) / (2 * np.pi * f)
    n_lo = np.ceil((lo - x0) / period)
    n_hi = np.floor((hi - x0) / period)
    if n_hi < n_lo:
        return None
    cands = x0 + period * np.arange(n_lo, n_hi + 1)
    return float(cands[np.argmin(np.abs(cands - center))])


def fit_sine(x, y, sigma=None, f_max: float | None = None) -> SineFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 6:
        raise InvalidArgument("fit_sine needs at least 6 matching points")
    if np.ptp(y) <= 1e-12 * max(1.0, np.max(np.abs(y))):
        raise FitFailed("flat data carries no sine", residual=0.0)
    w = np.ones_like(y) if sigma is None else 1.0 / np.broadcast_to(np.asarray(sigma, float), y.shape)
    span = np.ptp(x)
    dx = np.min(np.diff(np.unique(x)))
    f_hi = f_max if f_max is not None else 0.5 / dx
    grid = np.linspace(0.25 / span, f_hi, 400)
    scores = [_linear_sine(x, y, f, w)[3] for f in grid]
    f0 = grid[int(np.argmin(scores))]
    c, a, phi, _ = _linear_sine(x, y, f0, w)

    def resid(p):
        return (p[0] + p[1] * np.sin(2 * np.pi * p[2] * x + p[3]) - y) * w

    res = least_squares(resid, [c, a, f0, phi], method="lm", x_scale="jac", max_nfev=4000)
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitFailed("sine fit did not converge", residual=2 * res.cost)
    off, amp, f, ph = res.x
    if f < 0:
        f, ph, amp = -f, -ph, -amp
    if amp < 0:
        amp, ph = -amp, ph + np.pi
    ph = _wrap(ph)
    if amp <= 1e-12 or f <= 0:
        raise FitFailed("sine fit collapsed to a constant", residual=2 * res.cost)
    lo, hi = float(x.min()), float(x.max())
    center = 0.5 * (lo + hi)
    xs = np.array([lo, hi])
    curve = off + amp * np.sin(2 * np.pi * f * xs + ph)
    arg_min = _extremum_in_range(f, ph, lo, hi, -np.pi / 2, center)
    arg_max = _extremum_in_range(f, ph, lo, hi, np.pi / 2, center)
    if arg_min is None:
        arg_min = float(xs[np.argmin(curve)])
    if arg_max is None:
        arg_max = float(xs[np.argmax(curve)])
    return SineFit(float(off), float(amp), float(f), float(ph), arg_min, arg_max)


# --- parabola ---------------------------------------------------------------


@dataclass(frozen=True)
class ParabolaFit:
    vertex_x: float
    vertex_y: float
    curvature: float
    coefficients: tuple[float, float, float]


def fit_parabola(x, y) -> ParabolaFit:
    """Least squares y = a x^2 + b x + c via the normal equations."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or np.unique(x).size < 3:
        raise InvalidArgument("fit_parabola needs at least 3 distinct abscissae")
    design = np.column_stack([x**2, x, np.ones_like(x)])
    gram = design.T @ design
    if np.linalg.cond(gram) > 1e14:
        raise InvalidArgument("singular design matrix")
    a, b, c = np.linalg.solve(gram, design.T @ y)
    if a == 0:
        raise InvalidArgument("data are linear; no vertex")
    vx = -b / (2 * a)
    return ParabolaFit(float(vx), float(c - b * b / (4 * a)), float(a), (float(a), float(b), float(c)))


# --- exponential decay ------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    amplitude: float
    decay: float
    amplitude_se: float
    decay_se: float
    chi2_ndf: float = float("nan")
    clamped: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def fit_decay(m, y, sigma=None) -> DecayFit:
    """Weighted fit of A p^m; standard errors from the Jacobian at the optimum."""
    m = np.asarray(m, dtype=float)
    y = np.asarray(y, dtype=float)
    if m.shape != y.shape or np.unique(m).size < 3:
        raise InvalidArgument("fit_decay needs at least 3 distinct sequence lengths")
    s = np.ones_like(y) if sigma is None else np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    if np.any(s <= 0):
        raise InvalidArgument("sigma must be positive")
    w = 1.0 / s
    pos = y > 0
    if pos.sum() >= 2 and np.unique(m[pos]).size >= 2:
        slope, icpt = np.polyfit(m[pos], np.log(y[pos]), 1, w=np.sqrt(y[pos]))
        p0 = [float(np.exp(icpt)), float(np.clip(np.exp(slope), 0.5, 1.0))]
    else:
        p0 = [float(max(y.max(), 1e-3)), 0.9]

    def resid(p):
        return (p[0] * np.power(p[1], m) - y) * w

    res = least_squares(resid, p0, method="lm", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitFailed("decay fit did not converge", residual=2 * res.cost)
    a, p = res.x
    se = _standard_errors(res.jac)
    dof = max(1, m.size - 2)
    clamped = False
    if p > 1.0:
        if p > 1.0 + 1e-9:
            warnings.warn(f"decay estimate {p:.6f} > 1 clamped to 1", RuntimeWarning, stacklevel=2)
        p, clamped = 1.0, True
    if not p > 0:
        raise FitFailed("decay parameter is not positive", residual=2 * res.cost)
    return DecayFit(float(a), float(p), float(se[0]), float(se[1]), float(2 * res.cost / dof), clamped)
