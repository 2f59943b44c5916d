"""Gate-level calibration protocols run after autoRabi.

* ``stack_scan``: amplitude fine-tuning by repeating a gate until the
  sequence should be the identity.
* ``cr_tomography`` / ``cr_amplitude_sweep``: pick the cross-resonance
  amplitude that maximizes the Bloch-vector separation |R| of the target.
* ``full_xy_measure`` / ``full_xy_fit`` / ``calibrate_cnot``: extract the four
  single-qubit correction angles that turn the CR pulse into a CNOT from one
  phase sweep of both qubits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from . import qmatrix as qm
from .artifacts import write_csv, write_json
from .constants import CNOT_CONSTRAINT_SUM, ProtocolDefaults
from .errors import BracketFailed, CalibrationFailed, FitFailed, InvalidArgument
from .fitters import SineFit, binomial_sigma, fit_parabola, fit_sine
from .simdev import Gate, SimulatedBackend, cr, measure, vz, x90, x180

STACK_PERIOD = {"X90": 4, "X180": 2}


def _wrap(a):
    """Wrap into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)


@dataclass(frozen=True)
class GateSet:
    """Calibrated single-qubit drive amplitudes, indexed by qubit."""

    x90_amp: tuple[float, ...]
    x180_amp: tuple[float, ...]

    def __post_init__(self):
        if len(self.x90_amp) != len(self.x180_amp):
            raise InvalidArgument("x90_amp and x180_amp must cover the same qubits")

    def x90(self, q: int) -> Gate:
        return x90(q, self.x90_amp[q])

    def x180(self, q: int) -> Gate:
        return x180(q, self.x180_amp[q])

    def rx(self, q: int, theta: float) -> list[Gate]:
        """Rx(theta) from two X90 pulses and three virtual Z rotations."""
        return [vz(q, np.pi / 2), self.x90(q), vz(q, theta + np.pi), self.x90(q), vz(q, np.pi / 2)]

    def to_dict(self) -> dict:
        return {"x90_amp": list(self.x90_amp), "x180_amp": list(self.x180_amp)}

    @classmethod
    def from_dict(cls, d: dict) -> "GateSet":
        return cls(tuple(float(a) for a in d["x90_amp"]), tuple(float(a) for a in d["x180_amp"]))


def _p1(counts: dict[str, int], q: int) -> float:
    total = sum(counts.values())
    return sum(c for k, c in counts.items() if k[q] == "1") / total


# --- gate stacking ------------------------------------------------------------


@dataclass
class StackScan:
    gate: str
    n_stack: int
    qubit: int
    amplitudes: np.ndarray
    p1: np.ndarray
    shots: int
    fit: SineFit
    optimum: float

    @property
    def fringe_spacing(self) -> float:
        """Distance in amplitude between adjacent p1 minima."""
        return 1.0 / self.fit.frequency

    def to_record(self) -> dict:
        return {
            "protocol": "stack_scan",
            "gate": self.gate,
            "n_stack": self.n_stack,
            "qubit": self.qubit,
            "shots": self.shots,
            "amplitudes": self.amplitudes.tolist(),
            "p1": self.p1.tolist(),
            "fit": {k: float(getattr(self.fit, k)) for k in ("offset", "amplitude", "frequency", "phase")},
            "optimum": self.optimum,
        }

    def write(self, out_dir: str | Path, stem: str = "stack_scan") -> None:
        write_json(Path(out_dir) / f"{stem}.json", self.to_record())
        write_csv(Path(out_dir) / f"{stem}.csv", ["amplitude", "p1"], zip(self.amplitudes, self.p1))


def stack_scan(
    gate: str,
    n_stack: int,
    amp_range: tuple[float, float, int],
    backend: SimulatedBackend,
    shots: int = ProtocolDefaults.stack_shots,
    seed: int = 0,
    qubit: int = 0,
) -> StackScan:
    """Repeat ``gate`` ``n_stack`` times per amplitude; the optimum is the fitted p1 minimum.

    ``amp_range`` is ``(low, high, n_points)``.
    """
    gate = gate.upper()
    if gate not in STACK_PERIOD:
        raise InvalidArgument(f"gate must be X90 or X180, got {gate!r}")
    if n_stack < 1 or n_stack % STACK_PERIOD[gate]:
        raise InvalidArgument(f"{gate} stacks must be a positive multiple of {STACK_PERIOD[gate]}")
    lo, hi, n = amp_range
    if not lo < hi or int(n) < 6:
        raise InvalidArgument("amp_range needs low < high and at least 6 points")
    make = x90 if gate == "X90" else x180
    amps = np.linspace(lo, hi, int(n))
    p1 = np.empty(amps.size)
    for i, a in enumerate(amps):
        counts = backend.run_circuit([make(qubit, a)] * n_stack + [measure()], shots, seed, stream=i)
        p1[i] = _p1(counts, qubit)
    # The sine in amplitude has period 4a/N for X90 (2a/N for X180), far above
    # the scan step, so cap the frequency search at a few periods per scan.
    fit = fit_sine(amps, p1, binomial_sigma(p1, shots), f_max=8.0 / (hi - lo))
    return StackScan(gate, n_stack, qubit, amps, p1, shots, fit, fit.arg_min)


# --- cross-resonance amplitude ----------------------------------------------------


def cr_tomography_circuits(amp: float, n_pulses: int, gates: GateSet) -> dict[tuple[int, str], list[Gate]]:
    """The six circuits: control in |0>/|1>, target projected on X, Y, Z."""
    basis = {
        "x": [vz(1, np.pi / 2), gates.x90(1)],  # Ry(-pi/2) up to a trailing Z
        "y": [gates.x90(1)],
        "z": [],
    }
    out = {}
    for c in (0, 1):
        prep = [gates.x180(0)] if c else []
        for axis, rot in basis.items():
            out[(c, axis)] = prep + [cr(amp, n_pulses)] + rot + [measure()]
    return out


@dataclass(frozen=True)
class CrTomography:
    amp: float
    n_pulses: int
    control0: qm.BlochExpectations
    control1: qm.BlochExpectations
    r: float


def cr_tomography(
    amp: float, n_pulses: int, backend: SimulatedBackend, gates: GateSet, shots: int = ProtocolDefaults.cr_shots,
    seed: int = 0, stream: int = 0,
) -> CrTomography:
    """|R| from the target Bloch vectors measured with the control in |0> and in |1>."""
    vecs = {}
    for j, ((c, axis), circ) in enumerate(cr_tomography_circuits(amp, n_pulses, gates).items()):
        counts = backend.run_circuit(circ, shots, seed, n_qubits=2, stream=6 * stream + j)
        vecs[(c, axis)] = 1.0 - 2.0 * _p1(counts, 1)
    e = [qm.BlochExpectations(vecs[(c, "x")], vecs[(c, "y")], vecs[(c, "z")]) for c in (0, 1)]
    return CrTomography(float(amp), int(n_pulses), e[0], e[1], qm.bloch_r_length(e[0], e[1]))


@dataclass
class CrSweep:
    coarse_amplitudes: np.ndarray
    coarse_r: np.ndarray
    fine_amplitudes: np.ndarray
    fine_r: np.ndarray
    n_pulses_coarse: int
    n_pulses_fine: int
    coarse_peak: float
    optimum: float
    curvature: float
    shots: int

    def to_record(self) -> dict:
        return {
            "protocol": "cr_amplitude_sweep",
            "shots": self.shots,
            "n_pulses": [self.n_pulses_coarse, self.n_pulses_fine],
            "coarse": {"amplitudes": self.coarse_amplitudes.tolist(), "r": self.coarse_r.tolist()},
            "fine": {"amplitudes": self.fine_amplitudes.tolist(), "r": self.fine_r.tolist()},
            "coarse_peak": self.coarse_peak,
            "optimum": self.optimum,
            "curvature": self.curvature,
        }

    def write(self, out_dir: str | Path, stem: str = "cr_sweep") -> None:
        write_json(Path(out_dir) / f"{stem}.json", self.to_record())
        rows = [("coarse", self.n_pulses_coarse, a, r) for a, r in zip(self.coarse_amplitudes, self.coarse_r)]
        rows += [("fine", self.n_pulses_fine, a, r) for a, r in zip(self.fine_amplitudes, self.fine_r)]
        write_csv(Path(out_dir) / f"{stem}.csv", ["stage", "n_pulses", "amplitude", "r"], rows)


def _r_curve(amps, n_pulses, backend, gates, shots, seed, stream0):
    return np.array(
        [cr_tomography(a, n_pulses, backend, gates, shots, seed, stream0 + i).r for i, a in enumerate(amps)]
    )


def cr_amplitude_sweep(
    backend: SimulatedBackend,
    gates: GateSet,
    coarse_range: tuple[float, float, int] = ProtocolDefaults.cr_coarse,
    fine_window: tuple[float, int] = (ProtocolDefaults.cr_fine_half_width, ProtocolDefaults.cr_fine_points),
    shots: int = ProtocolDefaults.cr_shots,
    seed: int = 0,
    fine_pulses: int = ProtocolDefaults.cr_fine_pulses,
) -> CrSweep:
    """Coarse 1-pulse |R| sweep, then a parabola over a ``fine_pulses``-pulse sweep.

    With N stacked pulses |R| = |sin(N theta)| peaks at the same per-pulse
    pi/2 amplitude as one pulse, but N times sharper. ``fine_window`` is
    ``(half_width, n_points)`` around the coarse peak; it must stay inside the
    N-pulse central lobe (half-width a_opt / N).
    """
    lo, hi, n = coarse_range
    if not lo < hi or int(n) < 3:
        raise InvalidArgument("coarse_range needs low < high and at least 3 points")
    half, n_fine = fine_window
    if half <= 0 or int(n_fine) < 3:
        raise InvalidArgument("fine_window needs a positive half width and at least 3 points")
    coarse_a = np.linspace(lo, hi, int(n))
    coarse_r = _r_curve(coarse_a, 1, backend, gates, shots, seed, 0)
    k = int(np.argmax(coarse_r))
    if k == 0 or k == coarse_a.size - 1:
        raise BracketFailed(f"|R| peaks at the edge of the coarse range ({coarse_a[k]:.4g}); widen it")
    near = slice(max(0, k - 2), k + 3)
    try:
        peak = fit_parabola(coarse_a[near], coarse_r[near])
        coarse_peak = peak.vertex_x if peak.curvature < 0 and abs(peak.vertex_x - coarse_a[k]) < 2 * np.diff(coarse_a[:2])[0] else coarse_a[k]
    except InvalidArgument:
        coarse_peak = coarse_a[k]
    coarse_peak = float(coarse_peak)
    fine_a = np.linspace(coarse_peak - half, coarse_peak + half, int(n_fine))
    fine_r = _r_curve(fine_a, fine_pulses, backend, gates, shots, seed, coarse_a.size)
    para = fit_parabola(fine_a, fine_r)
    if para.curvature >= 0 or not fine_a[0] <= para.vertex_x <= fine_a[-1]:
        raise BracketFailed(f"fine |R| sweep has no interior maximum (vertex {para.vertex_x:.4g})")
    return CrSweep(
        coarse_a, coarse_r, fine_a, fine_r, 1, fine_pulses, coarse_peak, para.vertex_x, para.curvature, shots
    )


# --- full XY-plane CNOT extraction -------------------------------------------------


def candidate_cnot_gates(cr_amp: float, angles: qm.CnotAngles, gates: GateSet) -> list[Gate]:
    """IX(t4) . ZZ(t1, t2) . CR . IZ(t3) as a pulse list (rightmost acts first)."""
    t1, t2, t3, t4 = angles.as_tuple()
    return [vz(1, t3), cr(cr_amp, 1), vz(0, t1), vz(1, t2), *gates.rx(1, t4)]


@dataclass
class XyCurve:
    phi: np.ndarray
    p00: np.ndarray
    p01: np.ndarray
    p10: np.ndarray
    p11: np.ndarray
    shots: int
    current: qm.CnotAngles = field(default_factory=qm.CnotAngles)
    cr_amp: float = float("nan")

    def __post_init__(self):
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        for name in ("p00", "p01", "p10", "p11"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape != self.phi.shape:
                raise InvalidArgument(f"{name} must match the phi grid")
            setattr(self, name, arr)
        if np.any(np.abs(self.probabilities.sum(axis=1) - 1.0) > 1e-9):
            raise InvalidArgument("outcome probabilities must sum to 1 at every phi")

    @property
    def probabilities(self) -> np.ndarray:
        """(n_phi, 4) array ordered 00, 01, 10, 11 (control bit first)."""
        return np.column_stack([self.p00, self.p01, self.p10, self.p11])

    def to_record(self) -> dict:
        return {
            "phi": self.phi.tolist(),
            "p00": self.p00.tolist(),
            "p01": self.p01.tolist(),
            "p10": self.p10.tolist(),
            "p11": self.p11.tolist(),
            "shots": self.shots,
            "current": self.current.to_dict(),
            "cr_amp": self.cr_amp,
        }

    def write_csv(self, path: str | Path) -> None:
        write_csv(path, ["phi", "p00", "p01", "p10", "p11"], self.probabilities_rows())

    def probabilities_rows(self):
        return [(f, *p) for f, p in zip(self.phi, self.probabilities)]


def full_xy_measure(
    backend: SimulatedBackend,
    gates: GateSet,
    cr_amp: float,
    current: qm.CnotAngles = qm.CnotAngles(),
    angles_count: int = ProtocolDefaults.xy_points,
    shots: int = ProtocolDefaults.xy_shots,
    seed: int = 0,
) -> XyCurve:
    """X90 on both, candidate CNOT, virtual Z(phi) on both, X90 on both, joint readout."""
    if angles_count < 1:
        raise InvalidArgument("angles_count must be >= 1")
    phi = 2 * np.pi * np.arange(angles_count) / angles_count
    body = [gates.x90(0), gates.x90(1), *candidate_cnot_gates(cr_amp, current, gates)]
    probs = np.empty((angles_count, 4))
    for i, f in enumerate(phi):
        circ = body + [vz(0, f), vz(1, f), gates.x90(0), gates.x90(1), measure()]
        counts = backend.run_circuit(circ, shots, seed, n_qubits=2, stream=i)
        probs[i] = [counts[k] / shots for k in ("00", "01", "10", "11")]
    return XyCurve(phi, *probs.T, shots=shots, current=current, cr_amp=float(cr_amp))


_X90_PAIR = qm.tensor(qm.rot_x(np.pi / 2), qm.rot_x(np.pi / 2))
_PSI_PREP = _X90_PAIR @ qm.basis_state(0, 4)


def xy_model(phi, fit_angles, readout_error=(0.0, 0.0)) -> np.ndarray:
    """Ideal-gate prediction of the four outcome probabilities for a CR described by ``fit_angles``."""
    u = qm.cr_from_cnot(fit_angles)
    psi = u @ _PSI_PREP
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    # Rz(phi) x Rz(phi) is diagonal: phases (-phi, 0, 0, +phi) up to a global phase.
    phase = np.exp(1j * np.outer(phi, [-1.0, 0.0, 0.0, 1.0]))
    out = (phase * psi[None, :]) @ _X90_PAIR.T
    probs = np.abs(out) ** 2
    e0, e1 = readout_error
    conf = np.kron([[1 - e0, e0], [e0, 1 - e0]], [[1 - e1, e1], [e1, 1 - e1]])
    return probs @ conf.T


def _canonical_fit_angles(t1: float, t2: float, t4: float) -> qm.CnotAngles:
    """One representative of the angle sets that predict identical XY curves.

    theta4 -> pi - theta4 leaves the curves unchanged (they only see
    equatorial projections of the target), so theta4 is folded into
    (-pi/2, pi/2]. Of the two remaining solutions, which differ by a global
    phase of pi/2, the one with |theta1| <= pi/2 is returned.
    """
    t1, t2, t4 = (float(_wrap(t)) for t in (t1, t2, t4))
    if abs(t4) > np.pi / 2:
        t4 = float(_wrap(np.pi - t4))
    if abs(t1) > np.pi / 2:
        t1, t2, t4 = float(_wrap(t1 + np.pi)), float(_wrap(t2 + np.pi)), -t4
    return qm.CnotAngles.constrained(t1, t2, t4)


@dataclass
class XyFit:
    """Outcome of one XY-curve fit.

    ``fit_angles`` describe the measured candidate as CR = ZZ.IX.CNOT.IZ;
    ``primary`` / ``half_pi`` are the corrected angles for the next candidate.
    """

    fit_angles: qm.CnotAngles
    standard_errors: tuple[float, float, float]
    readout_error: tuple[float, float]
    chi2_ndf: float
    primary: qm.CnotAngles
    half_pi: qm.CnotAngles
    n_starts: int

    @property
    def max_abs_fit_angle(self) -> float:
        t1, t2, t3, t4 = self.fit_angles.as_tuple()
        return float(np.max(np.abs(_wrap([t1, t2, t3 - CNOT_CONSTRAINT_SUM, t4]))))

    def to_record(self) -> dict:
        return {
            "fit_angles": self.fit_angles.to_dict(),
            "standard_errors": list(self.standard_errors),
            "readout_error": list(self.readout_error),
            "chi2_ndf": self.chi2_ndf,
            "primary": self.primary.to_dict(),
            "half_pi": self.half_pi.to_dict(),
        }


# theta4 = +-pi/2 is a fixed point of the theta4 -> pi - theta4 symmetry where
# the gradient in theta4 vanishes, so the lattice avoids it.
START_LATTICE = tuple(
    (a, b, c) for a in (-np.pi / 4, 3 * np.pi / 4) for b in (-np.pi / 4, 3 * np.pi / 4) for c in (-np.pi / 4, np.pi / 4)
)


def full_xy_fit(curve: XyCurve, readout_error: tuple[float, float] | None = None, max_chi2_ndf: float = 10.0) -> XyFit:
    """Least squares of the four XY curves over (theta1, theta2, theta4), theta3 = 2 pi - theta2.

    The corrected angles are ``curve.current - fit`` (exact when the current
    angles are zero, first order otherwise). Readout assignment errors are
    fitted as two nuisance parameters unless ``readout_error`` fixes them.
    Near a CNOT the curves depend on theta4 only through their contrast, which
    a free assignment error absorbs exactly, so calibration passes measured
    values (see ``measure_readout_error``).
    """
    phi = curve.phi
    if np.unique(np.mod(phi, 2 * np.pi)).size < 12:
        raise InvalidArgument("full_xy_fit needs at least 12 distinct phases")
    data = curve.probabilities
    sigma = binomial_sigma(data, curve.shots)
    free_readout = readout_error is None

    def unpack(p):
        eps = (p[3], p[4]) if free_readout else readout_error
        return (p[0], p[1], CNOT_CONSTRAINT_SUM - p[1], p[2]), eps

    def resid(p):
        angles, eps = unpack(p)
        return ((xy_model(phi, angles, eps) - data) / sigma).ravel()

    if free_readout:
        extra, lo, hi, scale = [0.02, 0.02], [0.0, 0.0], [0.25, 0.25], [0.05, 0.05]
    else:
        extra, lo, hi, scale = [], [], [], []
    best = None
    for start in START_LATTICE:
        res = least_squares(
            resid, [*start, *extra], bounds=([-np.inf] * 3 + lo, [np.inf] * 3 + hi),
            method="trf", x_scale=[1, 1, 1, *scale], xtol=1e-12, ftol=1e-12, gtol=1e-12,
        )
        if best is None or res.cost < best.cost:
            best = res
    n_par = best.x.size
    ndf = max(1, data.size - n_par)
    chi2_ndf = 2 * best.cost / ndf
    if not chi2_ndf <= max_chi2_ndf:
        raise FitFailed(f"XY fit residual chi2/ndf = {chi2_ndf:.3g} above {max_chi2_ndf}", residual=chi2_ndf)
    cov = np.linalg.pinv(best.jac.T @ best.jac)
    se = np.sqrt(np.clip(np.diag(cov), 0, None)) * np.sqrt(max(chi2_ndf, 1.0))
    eps = unpack(best.x)[1]
    fit = _canonical_fit_angles(*best.x[:3])
    c1, c2, _, c4 = curve.current.as_tuple()
    corrected = _canonical_fit_angles(c1 - fit.theta1, c2 - fit.theta2, c4 - fit.theta4)
    return XyFit(
        fit_angles=fit,
        standard_errors=(float(se[0]), float(se[1]), float(se[2])),
        readout_error=(float(eps[0]), float(eps[1])),
        chi2_ndf=float(chi2_ndf),
        primary=corrected,
        half_pi=corrected.half_pi_partner(),
        n_starts=len(START_LATTICE),
    )


def measure_readout_error(
    backend: SimulatedBackend, gates: GateSet, shots: int = 4 * ProtocolDefaults.xy_shots, seed: int = 0
) -> tuple[float, float]:
    """Symmetric assignment error per qubit from |00> and X180 x X180 preparations.

    Near a CNOT the XY curves depend on theta4 only through their contrast, as
    does a readout error, so the two cannot be fitted together; measuring the
    readout separately removes that degeneracy.
    """
    preps = ([], [gates.x180(0), gates.x180(1)])
    flips = np.zeros(2)
    for j, prep in enumerate(preps):
        counts = backend.run_circuit(prep + [measure()], shots, seed, n_qubits=2, stream=j)
        for q in (0, 1):
            p1 = _p1(counts, q)
            flips[q] += p1 if j == 0 else 1.0 - p1
    return float(flips[0] / 2), float(flips[1] / 2)


@dataclass
class CnotCalibration:
    cr_amp: float
    angles: qm.CnotAngles
    half_pi: qm.CnotAngles
    sweep: CrSweep | None
    fits: list[XyFit]
    curves: list[XyCurve]
    readout_error: tuple[float, float] = (0.0, 0.0)

    @property
    def first(self) -> XyFit:
        return self.fits[0]

    @property
    def verification(self) -> XyFit:
        return self.fits[-1]

    @property
    def verification_residual(self) -> float:
        return self.verification.max_abs_fit_angle

    @property
    def n_passes(self) -> int:
        return len(self.fits) - 1

    def to_record(self) -> dict:
        return {
            "protocol": "calibrate_cnot",
            "cr_amp": self.cr_amp,
            "angles": self.angles.to_dict(),
            "half_pi": self.half_pi.to_dict(),
            "sweep": self.sweep.to_record() if self.sweep else None,
            "fits": [f.to_record() for f in self.fits],
            "verification_residual": self.verification_residual,
            "readout_error": list(self.readout_error),
            "curves": [c.to_record() for c in self.curves],
        }

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        write_json(out / "cnot.json", self.to_record())
        if self.sweep is not None:
            self.sweep.write(out)
        for i, c in enumerate(self.curves):
            c.write_csv(out / f"xy_pass{i}.csv")


def calibrate_cnot(
    backend: SimulatedBackend,
    gates: GateSet,
    shots: int = ProtocolDefaults.xy_shots,
    angles_count: int = ProtocolDefaults.xy_points,
    seed: int = 0,
    tolerance: float = ProtocolDefaults.xy_tolerance_rad,
    max_passes: int = ProtocolDefaults.xy_max_passes,
    sweep: CrSweep | None = None,
    cr_amp: float | None = None,
) -> CnotCalibration:
    """CR amplitude sweep, XY measurement at zero angles, fit, correct, verify.

    A known ``cr_amp`` (or a finished ``sweep``) skips the amplitude sweep.
    Readout assignment errors are measured first and held fixed in every fit.

    The XY curves only see equatorial projections, so they cannot tell an IX
    error of +d from one of -d around the pure-ZX value: the first fit may
    pick the mirrored theta4. Each verification refit is taken around the
    current candidate, where that mirror lies near pi and is unambiguous, so
    while the refit exceeds ``tolerance`` its correction is applied and the
    candidate re-measured, at most ``max_passes`` times in total.
    """
    if max_passes < 1:
        raise InvalidArgument("max_passes must be >= 1")
    if cr_amp is not None:
        amp = float(cr_amp)
    else:
        if sweep is None:
            sweep = cr_amplitude_sweep(backend, gates, shots=shots, seed=seed)
        amp = sweep.optimum
    readout = measure_readout_error(backend, gates, 4 * shots, seed)
    curves = [full_xy_measure(backend, gates, amp, qm.CnotAngles(), angles_count, shots, seed)]
    fits = [full_xy_fit(curves[0], readout_error=readout)]
    for k in range(max_passes):
        candidate = fits[-1].primary
        curves.append(full_xy_measure(backend, gates, amp, candidate, angles_count, shots, seed + 1 + k))
        fits.append(full_xy_fit(curves[-1], readout_error=readout))
        if fits[-1].max_abs_fit_angle < tolerance:
            break
    result = CnotCalibration(amp, candidate, candidate.half_pi_partner(), sweep, fits, curves, readout)
    if result.verification_residual >= tolerance:
        raise CalibrationFailed(
            f"verification refit leaves |theta_f| = {result.verification_residual:.4f} rad "
            f"after {result.n_passes} passes (tolerance {tolerance})"
        )
    return result
