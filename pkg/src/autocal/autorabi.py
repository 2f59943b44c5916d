"""Loss-driven joint calibration of qubit frequency, readout frequency and Rabi amplitude.

Each evaluation runs a Rabi width scan, clusters the raw IQ shots for
k = 1..4, digitizes with the k = 2 model, fits the Rabi shape and folds
everything into one chi^2-like loss. The optimizer only sees that loss.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .clustering import FAST_EM, ClusterReport, EmSettings, cluster_report, digitize, label_by_reference
from .constants import AutoRabiDefaults, LossConstants, sigmoid
from .errors import CalibrationError, InitFailed, InvalidArgument
from .fitters import RabiFit, binomial_sigma, fit_rabi
from .optimizer import OptProblem, OptTrace, minimize
from .simdev import QubitBias, SimulatedBackend

log = logging.getLogger(__name__)

DELTA_LABELS = ("sqrt_chi2_ndf", "amplitude", "offset", "t_x90", "bic_k1", "bic_k3", "bic_k4")


@dataclass(frozen=True)
class LossBreakdown:
    delta: tuple[float, ...]
    l_f: float
    l_ac: float
    l_t: float
    l_bic: float
    l_tot: float
    failed: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delta"] = dict(zip(DELTA_LABELS, self.delta))
        return d

    @classmethod
    def sentinel(cls, constants: LossConstants = LossConstants()) -> "LossBreakdown":
        nan = float("nan")
        return cls((nan,) * 7, nan, nan, nan, nan, constants.sentinel_loss, failed=True)


def loss_total(fit: RabiFit, clusters: ClusterReport | dict, constants: LossConstants = LossConstants()) -> LossBreakdown:
    """Sum of squares of the seven-entry deviation vector.

    The BIC entries use sigmoid(-delta_BIC(k)) so that each term vanishes when
    BIC_2 < BIC_k holds by a clear margin and saturates at 1/scale otherwise.
    """
    deltas = clusters.delta_bic if isinstance(clusters, ClusterReport) else clusters
    try:
        d1, d3, d4 = (float(deltas[k]) for k in (1, 3, 4))
    except KeyError as exc:
        raise InvalidArgument(f"cluster report lacks k={exc.args[0]}") from None
    c = constants
    delta = (
        float(np.sqrt(fit.chi2_ndf)),
        (abs(fit.amplitude) - c.amp_target) / c.amp_scale,
        (fit.c_offset - c.offset_target) / c.offset_scale,
        (fit.t_x90 - c.tx90_target_ns) / c.tx90_scale_ns,
        sigmoid(-d1) / c.bic_term_scale,
        sigmoid(-d3) / c.bic_term_scale,
        sigmoid(-d4) / c.bic_term_scale,
    )
    sq = [v * v for v in delta]
    l_f = sq[0]
    l_ac = sq[1] + sq[2]
    l_t = sq[3]
    l_bic = sq[4] + sq[5] + sq[6]
    return LossBreakdown(delta, l_f, l_ac, l_t, l_bic, float(sum(sq)))


@dataclass(frozen=True)
class ScanConfig:
    n_widths: int = AutoRabiDefaults.n_widths
    width_step_ns: int = AutoRabiDefaults.width_step_ns
    shots: int = AutoRabiDefaults.shots
    em: EmSettings = FAST_EM

    @property
    def widths(self) -> np.ndarray:
        return self.width_step_ns * np.arange(1, self.n_widths + 1)


@dataclass
class Evaluation:
    bias: QubitBias
    seed: int
    loss: LossBreakdown
    fit: RabiFit | None = None
    clusters: ClusterReport | None = None
    p1: np.ndarray | None = None
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "bias": self.bias.to_dict(),
            "seed": self.seed,
            "fit": self.fit.to_dict() if self.fit else None,
            "bic": {str(k): v for k, v in self.clusters.bic.items()} if self.clusters else None,
            "delta_bic": {str(k): v for k, v in self.clusters.delta_bic.items()} if self.clusters else None,
            "loss": self.loss.to_dict(),
            "p1": self.p1.tolist() if self.p1 is not None else None,
            "error": self.error,
        }


def measure_ground_reference(backend: SimulatedBackend, bias: QubitBias, shots: int, seed: int, qubit: int = 0) -> np.ndarray:
    """IQ centroid with the drive off; nearest cluster to it is labeled |0>."""
    off = QubitBias(bias.f_q, bias.f_r, 0.0, bias.readout_amp)
    return backend.rabi_scan(off, [0], shots, seed, qubit=qubit).points().mean(axis=0)


def evaluate_bias(
    bias: QubitBias,
    backend: SimulatedBackend,
    scan: ScanConfig = ScanConfig(),
    ground_ref=None,
    seed: int = 0,
    constants: LossConstants = LossConstants(),
    qubit: int = 0,
    archive_dir: Path | None = None,
    tag: str = "",
) -> Evaluation:
    """Scan, cluster, digitize, fit and score one bias point.

    Fit or clustering failures give the sentinel loss instead of raising.
    """
    if ground_ref is None:
        ground_ref = measure_ground_reference(backend, bias, scan.shots, seed + 7919, qubit)
    batch = backend.rabi_scan(bias, scan.widths, scan.shots, seed, qubit=qubit)
    if archive_dir is not None:
        Path(archive_dir).mkdir(parents=True, exist_ok=True)
        batch.save(Path(archive_dir) / f"shots{tag}.json.gz")
    report = None
    p1 = None
    try:
        report = cluster_report(batch.points(), seed, constants, em=scan.em)
        gmm2 = label_by_reference(report.gmm2, ground_ref)
        p1 = np.array([digitize(batch.iq[i], gmm2)[1] for i in range(batch.widths.size)])
        fit = fit_rabi(batch.widths, p1, binomial_sigma(p1, scan.shots))
        loss = loss_total(fit, report, constants)
    except CalibrationError as exc:
        return Evaluation(bias, seed, LossBreakdown.sentinel(constants), None, report, p1, f"{type(exc).__name__}: {exc}")
    return Evaluation(bias, seed, loss, fit, report, p1)


@dataclass
class AutoRabiResult:
    bias: QubitBias
    loss: LossBreakdown
    initial_loss: LossBreakdown
    trace: OptTrace
    evaluations: list[Evaluation]
    ground_ref: np.ndarray
    started: float = 0.0
    finished: float = 0.0

    @property
    def best(self) -> Evaluation:
        return self.evaluations[self.trace.best_index]

    def to_record(self) -> dict:
        return {
            "bias": self.bias.to_dict(),
            "loss": self.loss.to_dict(),
            "initial_loss": self.initial_loss.to_dict(),
            "n_evaluations": len(self.evaluations),
            "termination": self.trace.reason,
            "ground_ref": self.ground_ref.tolist(),
        }


@dataclass(frozen=True)
class Brackets:
    f_q_ghz: float = AutoRabiDefaults.fq_bracket_ghz
    f_r_ghz: float = AutoRabiDefaults.fr_bracket_ghz
    a_r: float = AutoRabiDefaults.amp_bracket


def autorabi(
    initial: QubitBias,
    backend: SimulatedBackend,
    brackets: Brackets = Brackets(),
    budget: int = AutoRabiDefaults.budget,
    seed: int = 0,
    scan: ScanConfig = ScanConfig(),
    constants: LossConstants = LossConstants(),
    qubit: int = 0,
    method: str = "cobyqa",
    fresh_noise: bool = False,
    run_dir: str | Path | None = None,
) -> AutoRabiResult:
    """Minimize the loss over (f_q, f_r, a_r) within ``initial`` +- ``brackets``.

    By default every evaluation reuses the same shot seed, so the optimizer
    sees a loss surface whose shot noise is frozen; ``fresh_noise`` draws new
    shots per evaluation instead.
    """
    started = time.time()
    run_dir = Path(run_dir) if run_dir is not None else None
    ground_ref = measure_ground_reference(backend, initial, scan.shots, seed + 7919, qubit)
    evaluations: list[Evaluation] = []

    def objective(x):
        i = len(evaluations)
        bias = QubitBias(float(x[0]), float(x[1]), float(np.clip(x[2], 0.0, 1.0)), initial.readout_amp)
        eval_seed = seed + 104729 * i if fresh_noise else seed
        ev = evaluate_bias(
            bias, backend, scan, ground_ref, eval_seed, constants, qubit,
            archive_dir=run_dir / "raw" if run_dir else None, tag=f"_{i:03d}",
        )
        evaluations.append(ev)
        log.debug("autorabi eval %d: %s -> %.4g", i, x, ev.loss.l_tot)
        if i == 0 and ev.loss.failed:
            raise InitFailed(f"initial bias gives no usable Rabi oscillation ({ev.error})")
        return ev.loss.l_tot

    x0 = np.array([initial.f_q, initial.f_r, initial.a_r])
    half = np.array([brackets.f_q_ghz, brackets.f_r_ghz, brackets.a_r])
    lower = x0 - half
    upper = x0 + half
    lower[2] = max(lower[2], 0.0)
    upper[2] = min(upper[2], 1.0)
    problem = OptProblem(
        objective, lower, upper, x0, step=half / 2, tol=1e-3, max_evals=budget,
        failure_penalty=constants.sentinel_loss, method=method,
    )
    trace = minimize(problem)
    best = evaluations[trace.best_index]
    result = AutoRabiResult(
        bias=best.bias,
        loss=best.loss,
        initial_loss=evaluations[0].loss,
        trace=trace,
        evaluations=evaluations,
        ground_ref=ground_ref,
        started=started,
        finished=time.time(),
    )
    if run_dir is not None:
        write_archive(result, run_dir)
    return result


def write_archive(result: AutoRabiResult, run_dir: str | Path) -> None:
    """One JSON line per evaluation plus an (iteration, l_tot) CSV."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "evaluations.jsonl", "w") as fh:
        for i, ev in enumerate(result.evaluations):
            fh.write(json.dumps({"iteration": i, **ev.to_record()}) + "\n")
    with open(run_dir / "loss_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "l_tot"])
        for i, ev in enumerate(result.evaluations):
            w.writerow([i, repr(ev.loss.l_tot)])
