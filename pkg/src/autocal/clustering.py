"""Gaussian-mixture fits of IQ clouds, BIC model selection and digitization.

The mixture uses full 2x2 covariances, so a k-component model has
``6k - 1`` free parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy.special import logsumexp

from .constants import LossConstants
from .errors import DegenerateData, InvalidArgument, InvalidState

K_RANGE = (1, 2, 3, 4)
N_INIT = 5
MAX_ITER = 300
REL_TOL = 1e-7
SCREEN_ITER = 30
COV_REG = 1e-6

_LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class GmmModel:
    k: int
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: float
    n: int
    n_iter: int = 0
    converged: bool = True
    # labels[j] is the qubit state assigned to component j (k == 2 only)
    labels: tuple[int, ...] | None = None
    ll_history: tuple[float, ...] = field(default=(), repr=False)

    def n_parameters(self) -> int:
        return 6 * self.k - 1

    def responsibilities(self, points) -> np.ndarray:
        log_r = _log_weighted_pdf(np.asarray(points, dtype=float), self.weights, self.means, self.covariances)
        return np.exp(log_r - logsumexp(log_r, axis=1, keepdims=True))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "log_likelihood": self.log_likelihood,
            "n": self.n,
            "labels": list(self.labels) if self.labels is not None else None,
        }


def _log_weighted_pdf(x, weights, means, covs):
    """log(w_j N(x_i | mu_j, S_j)) for all i, j; closed-form 2x2 inverse."""
    a = covs[:, 0, 0]
    b = covs[:, 0, 1]
    c = covs[:, 1, 1]
    det = a * c - b * b
    dx = x[:, 0:1] - means[:, 0]
    dy = x[:, 1:2] - means[:, 1]
    maha = (c * dx * dx - 2 * b * dx * dy + a * dy * dy) / det
    return np.log(weights) - _LOG_2PI - 0.5 * np.log(det) - 0.5 * maha


@numba.njit(cache=True, fastmath=True, error_model="numpy")
def _em_kernel(x, weights, means, covs, reg, max_iter, tol):
    # One pass per iteration: E-step and the sufficient statistics of the
    # following M-step are accumulated together.
    n = x.shape[0]
    k = weights.shape[0]
    history = np.empty(max_iter)
    logp = np.empty(k)
    s0 = np.empty(k)
    s1 = np.empty((k, 2))
    s2 = np.empty((k, 3))
    ll_prev = -np.inf
    converged = False
    it = 0
    ll = -np.inf
    while it < max_iter:
        it += 1
        const = np.empty(k)
        ia = np.empty(k)
        ib = np.empty(k)
        ic = np.empty(k)
        for j in range(k):
            det = covs[j, 0, 0] * covs[j, 1, 1] - covs[j, 0, 1] * covs[j, 0, 1]
            const[j] = np.log(weights[j]) - np.log(2 * np.pi) - 0.5 * np.log(det)
            ia[j] = covs[j, 1, 1] / det
            ib[j] = -covs[j, 0, 1] / det
            ic[j] = covs[j, 0, 0] / det
        s0[:] = 0.0
        s1[:, :] = 0.0
        s2[:, :] = 0.0
        ll = 0.0
        for i in range(n):
            xi = x[i, 0]
            yi = x[i, 1]
            m = -np.inf
            for j in range(k):
                dx = xi - means[j, 0]
                dy = yi - means[j, 1]
                logp[j] = const[j] - 0.5 * (ia[j] * dx * dx + 2 * ib[j] * dx * dy + ic[j] * dy * dy)
                if logp[j] > m:
                    m = logp[j]
            tot = 0.0
            for j in range(k):
                logp[j] = np.exp(logp[j] - m)
                tot += logp[j]
            ll += m + np.log(tot)
            for j in range(k):
                r = logp[j] / tot
                s0[j] += r
                s1[j, 0] += r * xi
                s1[j, 1] += r * yi
                s2[j, 0] += r * xi * xi
                s2[j, 1] += r * xi * yi
                s2[j, 2] += r * yi * yi
        history[it - 1] = ll
        if it > 1 and abs(ll - ll_prev) <= tol * abs(ll_prev):
            converged = True
            break
        ll_prev = ll
        if it == max_iter:
            break
        for j in range(k):
            nk = s0[j] + 1e-12
            mx = s1[j, 0] / nk
            my = s1[j, 1] / nk
            weights[j] = nk / n
            means[j, 0] = mx
            means[j, 1] = my
            covs[j, 0, 0] = s2[j, 0] / nk - mx * mx + reg
            covs[j, 1, 1] = s2[j, 2] / nk - my * my + reg
            covs[j, 0, 1] = s2[j, 1] / nk - mx * my
            covs[j, 1, 0] = covs[j, 0, 1]
    return ll, it, converged, history[:it]


def _m_step(x, resp, reg):
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    means = (resp.T @ x) / nk[:, None]
    covs = np.empty((resp.shape[1], 2, 2))
    for j in range(resp.shape[1]):
        d = x - means[j]
        w = resp[:, j]
        covs[j, 0, 0] = w @ (d[:, 0] * d[:, 0]) / nk[j] + reg
        covs[j, 1, 1] = w @ (d[:, 1] * d[:, 1]) / nk[j] + reg
        covs[j, 0, 1] = covs[j, 1, 0] = w @ (d[:, 0] * d[:, 1]) / nk[j]
    return nk / x.shape[0], means, covs


def _kmeanspp(x, k, rng):
    centers = [x[rng.integers(x.shape[0])]]
    for _ in range(1, k):
        d2 = np.min(((x[:, None, :] - np.asarray(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(x.shape[0])])
        else:
            centers.append(x[rng.choice(x.shape[0], p=d2 / total)])
    return np.asarray(centers)


def _single_gaussian(x):
    mean = x.mean(axis=0)
    d = x - mean
    cov = d.T @ d / x.shape[0]
    det = np.linalg.det(cov)
    if det <= 0:
        raise DegenerateData("points do not span the IQ plane")
    n = x.shape[0]
    ll = -n * _LOG_2PI - 0.5 * n * np.log(det) - n
    return GmmModel(1, np.ones(1), mean[None], cov[None], float(ll), n, n_iter=0, ll_history=(float(ll),))


def _em_init(x, k, rng, reg):
    centers = _kmeanspp(x, k, rng)
    hard = np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    resp = np.zeros((x.shape[0], k))
    resp[np.arange(x.shape[0]), hard] = 1.0
    return _m_step(x, resp, reg)


def gmm_fit(
    points,
    k: int,
    rng_seed: int = 0,
    n_init: int = N_INIT,
    max_iter: int = MAX_ITER,
    tol: float = REL_TOL,
    screen_iter: int | None = None,
) -> GmmModel:
    """EM fit of a k-component full-covariance mixture, best of ``n_init`` k-means++ starts.

    With ``screen_iter`` set, every start runs only that many iterations and
    the best one is then continued to convergence; otherwise each start runs
    to convergence.
    """
    x = np.asarray(points, dtype=float).reshape(-1, 2)
    if k not in K_RANGE:
        raise InvalidArgument(f"k must be in 1..4, got {k}")
    if x.shape[0] < 10 * k:
        raise InvalidArgument(f"need at least {10 * k} points for k={k}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("points must be finite")
    var = x.var(axis=0)
    if k >= 2 and np.all(var == 0):
        raise DegenerateData("all points identical")
    if k == 1:
        return _single_gaussian(x)
    reg = COV_REG * float(var.mean())
    rng = np.random.default_rng(rng_seed)
    first_pass = max_iter if screen_iter is None else min(screen_iter, max_iter)
    best = None
    for _ in range(n_init):
        w, mu, cov = _em_init(x, k, rng, reg)
        ll, it, conv, hist = _em_kernel(x, w, mu, cov, reg, first_pass, tol)
        if best is None or ll > best[3]:
            best = (w, mu, cov, ll, it, conv, list(hist))
    w, mu, cov, ll, it, conv, hist = best
    if not conv and it < max_iter:
        ll, more, conv, tail = _em_kernel(x, w, mu, cov, reg, max_iter - it, tol)
        it += more
        hist += list(tail)
    return GmmModel(k, w, mu, cov, float(ll), x.shape[0], int(it), bool(conv), ll_history=tuple(hist))


def bic(model: GmmModel) -> float:
    """p ln(n) - 2 ln L with p = 6k - 1."""
    if model.n < 2:
        raise InvalidArgument("BIC needs n >= 2")
    return float(model.n_parameters() * np.log(model.n) - 2.0 * model.log_likelihood)


@dataclass(frozen=True)
class ClusterReport:
    bic: dict[int, float]
    delta_bic: dict[int, float]
    gmm2: GmmModel
    models: dict[int, GmmModel] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "bic": {str(k): v for k, v in self.bic.items()},
            "delta_bic": {str(k): v for k, v in self.delta_bic.items()},
            "gmm2": self.gmm2.to_dict(),
        }


def delta_bic(bics: dict[int, float], k: int, constants: LossConstants = LossConstants()) -> float:
    return (bics[k] - bics[2]) / constants.bic_divisor


@dataclass(frozen=True)
class EmSettings:
    n_init: int = N_INIT
    max_iter: int = MAX_ITER
    tol: float = REL_TOL
    screen_iter: int | None = SCREEN_ITER


# Cheaper EM for inner optimization loops: shorter screening of the restarts
# and a looser stopping rule.
FAST_EM = EmSettings(tol=1e-5, screen_iter=12)


def cluster_report(
    points, rng_seed: int = 0, constants: LossConstants = LossConstants(), em: EmSettings = EmSettings()
) -> ClusterReport:
    """Fit k = 1..4 and tabulate BIC_k and delta_BIC(k) for k in {1, 3, 4}."""
    x = np.asarray(points, dtype=float).reshape(-1, 2)
    if x.shape[0] < 40:
        raise InvalidArgument("cluster_report needs at least 40 points")
    models = {
        k: gmm_fit(x, k, rng_seed + k, n_init=em.n_init, max_iter=em.max_iter, tol=em.tol, screen_iter=em.screen_iter)
        for k in K_RANGE
    }
    bics = {k: bic(m) for k, m in models.items()}
    deltas = {k: delta_bic(bics, k, constants) for k in (1, 3, 4)}
    return ClusterReport(bics, deltas, models[2], models)


def label_by_reference(model: GmmModel, ground_ref) -> GmmModel:
    """Label the component nearest ``ground_ref`` as state 0."""
    if model.k != 2:
        raise InvalidArgument("labeling applies to two-component models")
    d = np.linalg.norm(model.means - np.asarray(ground_ref, dtype=float), axis=1)
    zero = int(np.argmin(d))
    labels = [1, 1]
    labels[zero] = 0
    return replace(model, labels=tuple(labels))


def swap_labels(model: GmmModel) -> GmmModel:
    if model.labels is None:
        raise InvalidState("model is not labeled")
    return replace(model, labels=tuple(1 - s for s in model.labels))


def digitize(points, gmm2: GmmModel) -> tuple[np.ndarray, float]:
    """Assign each point to its most responsible component; returns (bits, fraction of ones)."""
    if gmm2.k != 2:
        raise InvalidArgument("digitize needs the k=2 model")
    if gmm2.labels is None:
        raise InvalidState("k=2 model has no cluster-to-state labels")
    resp = gmm2.responsibilities(np.asarray(points, dtype=float).reshape(-1, 2))
    one = gmm2.labels.index(1)
    zero = 1 - one
    bits = (resp[:, one] > resp[:, zero]).astype(int)
    return bits, float(bits.mean()) if bits.size else float("nan")
