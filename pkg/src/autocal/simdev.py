"""Simulated two-transmon device with hidden ground truth.

The backend answers two kinds of requests: Rabi width scans, which return raw
IQ shots for one qubit, and short gate circuits over at most two qubits, which
return joint outcome counts. Ground truth lives in :class:`DeviceTruth` and is
reachable only through :meth:`SimulatedBackend.get_truth_for_test`.

Every random draw comes from a Philox stream keyed by the caller's seed and
the index of the width / circuit, so results do not depend on call order.
"""

from __future__ import annotations

import gzip
import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

from . import qmatrix as qm
from .constants import CNOT_CONSTRAINT_SUM, LossConstants
from .errors import InvalidArgument

WIDTH_GRANULARITY_NS = 4
# gates are as long as the X90 time autoRabi aims for
X90_LENGTH_NS = int(LossConstants.tx90_target_ns)
X180_LENGTH_NS = 2 * X90_LENGTH_NS


@dataclass(frozen=True)
class QubitTruth:
    """Physical parameters of one transmon + readout resonator.

    Frequencies in GHz, ``rabi_rate`` in MHz per unit amplitude,
    ``tau_decay`` in 1/ns, ``resonator_linewidth`` (half width) in MHz.
    """

    f_q: float
    f_r: float
    rabi_rate: float
    tau_decay: float
    resonator_linewidth: float
    iq_center_0: tuple[float, float]
    iq_center_1: tuple[float, float]
    iq_center_2: tuple[float, float]
    iq_sigma: float
    leak_amp_threshold: float
    leak_rate: float
    readout_floor: float
    pulse_edge_ns: float = 1.0

    def __post_init__(self):
        if min(self.f_q, self.f_r, self.rabi_rate, self.tau_decay, self.resonator_linewidth) <= 0:
            raise InvalidArgument("frequencies and rates must be positive")
        if self.iq_sigma <= 0:
            raise InvalidArgument("iq_sigma must be positive")
        if not 0 < self.leak_amp_threshold <= 1:
            raise InvalidArgument("leak_amp_threshold must lie in (0, 1]")
        if not 0 <= self.readout_floor <= 0.2:
            raise InvalidArgument("readout_floor must lie in [0, 0.2]")
        if self.leak_rate < 0:
            raise InvalidArgument("leak_rate must be non-negative")


@dataclass(frozen=True)
class DeviceTruth:
    """Two qubits (index 0 = CR control) plus the CR interaction.

    ``cr_zx_rate`` is the ZX rotation in rad per unit CR amplitude per pulse;
    ``cr_spurious`` are the local rotations (theta1..theta4) that dress the
    pulse in the ZZ . IX . CNOT . IZ layout.
    """

    qubits: tuple[QubitTruth, ...]
    cr_zx_rate: float
    cr_spurious: tuple[float, float, float, float] = (0.0, 0.0, CNOT_CONSTRAINT_SUM, 0.0)

    def __post_init__(self):
        if not 1 <= len(self.qubits) <= 2:
            raise InvalidArgument("the simulated device holds one or two qubits")
        if self.cr_zx_rate <= 0:
            raise InvalidArgument("cr_zx_rate must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceTruth":
        qubits = []
        for q in d["qubits"]:
            q = dict(q)
            for key in ("iq_center_0", "iq_center_1", "iq_center_2"):
                q[key] = tuple(float(v) for v in q[key])
            qubits.append(QubitTruth(**q))
        return cls(
            qubits=tuple(qubits),
            cr_zx_rate=float(d["cr_zx_rate"]),
            cr_spurious=tuple(float(v) for v in d.get("cr_spurious", (0.0, 0.0, CNOT_CONSTRAINT_SUM, 0.0))),
        )

    def to_dict(self) -> dict:
        return {
            "qubits": [asdict(q) for q in self.qubits],
            "cr_zx_rate": self.cr_zx_rate,
            "cr_spurious": list(self.cr_spurious),
        }


@dataclass(frozen=True)
class QubitBias:
    """Control settings of one qubit: drive / readout frequency (GHz), Rabi amplitude, readout amplitude."""

    f_q: float
    f_r: float
    a_r: float
    readout_amp: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.a_r <= 1.0:
            raise InvalidArgument(f"a_r must lie in [0, 1], got {self.a_r}")
        if self.f_q <= 0 or self.f_r <= 0:
            raise InvalidArgument("frequencies must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "QubitBias":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass
class ShotBatch:
    """Raw IQ shots of a Rabi width scan; ``iq`` has shape (n_widths, shots, 2)."""

    widths: np.ndarray
    iq: np.ndarray
    bias: QubitBias
    seed: int
    qubit: int = 0

    def __post_init__(self):
        self.widths = np.asarray(self.widths, dtype=int)
        self.iq = np.asarray(self.iq, dtype=float)
        if self.iq.ndim != 3 or self.iq.shape[0] != self.widths.size or self.iq.shape[2] != 2:
            raise InvalidArgument(f"inconsistent ShotBatch shapes {self.widths.shape} / {self.iq.shape}")
        if self.iq.shape[1] < 1:
            raise InvalidArgument("ShotBatch needs at least one shot")

    @property
    def shots(self) -> int:
        return self.iq.shape[1]

    def points(self) -> np.ndarray:
        return self.iq.reshape(-1, 2)

    def to_json(self) -> str:
        return json.dumps(
            {
                "qubit": self.qubit,
                "seed": self.seed,
                "shots": self.shots,
                "bias": self.bias.to_dict(),
                "widths_ns": self.widths.tolist(),
                "iq": {str(int(w)): self.iq[i].tolist() for i, w in enumerate(self.widths)},
            }
        )

    def save(self, path) -> None:
        """Write the JSON form, gzip-compressed when the name ends in ``.gz``."""
        path = Path(path)
        data = self.to_json().encode()
        path.write_bytes(gzip.compress(data, mtime=0) if path.suffix == ".gz" else data)

    @classmethod
    def load(cls, path) -> "ShotBatch":
        path = Path(path)
        data = path.read_bytes()
        return cls.from_json((gzip.decompress(data) if path.suffix == ".gz" else data).decode())

    @classmethod
    def from_json(cls, text: str) -> "ShotBatch":
        d = json.loads(text)
        widths = np.asarray(d["widths_ns"], dtype=int)
        iq = np.array([d["iq"][str(int(w))] for w in widths], dtype=float)
        return cls(widths, iq, QubitBias.from_dict(d["bias"]), int(d["seed"]), int(d.get("qubit", 0)))


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()


def x90(q: int, amp: float) -> Gate:
    return Gate("X90", (q,), (float(amp),))


def x180(q: int, amp: float) -> Gate:
    return Gate("X180", (q,), (float(amp),))


def vz(q: int, phi: float) -> Gate:
    return Gate("VZ", (q,), (float(phi),))


def cr(amp: float, n_pulses: int = 1) -> Gate:
    return Gate("CR", (0, 1), (float(amp), int(n_pulses)))


def unitary_gate(q: tuple[int, ...], u: np.ndarray) -> Gate:
    """Ideal, error-free operator; used by analysis code, never by calibration."""
    return Gate("U", tuple(q), tuple(np.asarray(u, dtype=complex).ravel()))


def measure() -> Gate:
    return Gate("MEASURE", ())


def lorentzian(detuning_mhz: float, half_width_mhz: float) -> float:
    return 1.0 / (1.0 + (detuning_mhz / half_width_mhz) ** 2)


def rabi_population(truth: QubitTruth, bias: QubitBias, t_ns) -> np.ndarray:
    """Excited-state population after a square drive of length ``t_ns``, before readout.

    Generalized Rabi formula with the coherent part decaying at ``tau_decay``
    toward the mixed value, i.e. C + A exp(-tau t) sin(2 pi f t - pi/2).
    """
    t = np.asarray(t_ns, dtype=float)
    omega = truth.rabi_rate * 1e-3 * bias.a_r
    delta = bias.f_q - truth.f_q
    omega_eff = np.hypot(omega, delta)
    if omega_eff == 0:
        return np.zeros_like(t)
    weight = omega**2 / omega_eff**2
    return weight * 0.5 * (1.0 - np.exp(-truth.tau_decay * t) * np.cos(2 * np.pi * omega_eff * t))


def leak_probability(truth: QubitTruth, a_r: float) -> float:
    return min(1.0, truth.leak_rate * max(0.0, a_r - truth.leak_amp_threshold) ** 2)


def _stream(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def default_truth() -> DeviceTruth:
    text = resources.files("autocal").joinpath("data/default_device.json").read_text()
    return DeviceTruth.from_dict(json.loads(text)["truth"])


def default_nominal_biases() -> list[QubitBias]:
    text = resources.files("autocal").joinpath("data/default_device.json").read_text()
    return [QubitBias.from_dict(b) for b in json.loads(text)["nominal_bias"]]


def load_device_config(path: str | Path) -> tuple[DeviceTruth, list[QubitBias]]:
    d = json.loads(Path(path).read_text())
    return DeviceTruth.from_dict(d["truth"]), [QubitBias.from_dict(b) for b in d["nominal_bias"]]


class SimulatedBackend:
    """The system under calibration.

    ``biases`` holds the current control settings per qubit (what the control
    software would program). Gate amplitudes travel with each gate.
    """

    def __init__(self, truth: DeviceTruth | None = None, biases: Sequence[QubitBias] | None = None):
        self._truth = truth if truth is not None else default_truth()
        if biases is None:
            biases = default_nominal_biases()[: len(self._truth.qubits)]
        self.biases = list(biases)
        if len(self.biases) != len(self._truth.qubits):
            raise InvalidArgument("one bias per simulated qubit is required")

    @classmethod
    def from_config(cls, path: str | Path) -> "SimulatedBackend":
        truth, biases = load_device_config(path)
        return cls(truth, biases)

    @property
    def n_qubits(self) -> int:
        return len(self._truth.qubits)

    def set_truth(self, truth: DeviceTruth) -> None:
        """Test hook: swap the hidden device."""
        self._truth = truth

    def get_truth_for_test(self) -> DeviceTruth:
        return self._truth

    def set_bias(self, qubit: int, bias: QubitBias) -> None:
        self.biases[qubit] = bias

    # --- Rabi scans ------------------------------------------------------

    def rabi_scan(self, bias: QubitBias, widths: Iterable[int], shots: int, rng_seed: int, qubit: int = 0) -> ShotBatch:
        widths = np.asarray(list(widths))
        if widths.size == 0:
            raise InvalidArgument("at least one width is required")
        if np.any(widths % WIDTH_GRANULARITY_NS) or np.any(widths < 0):
            raise InvalidArgument(f"widths must be non-negative multiples of {WIDTH_GRANULARITY_NS} ns")
        if shots < 1:
            raise InvalidArgument("shots must be >= 1")
        if not 0.0 <= bias.a_r <= 1.0:
            raise InvalidArgument("a_r must lie in [0, 1]")
        truth = self._truth.qubits[qubit]
        p1 = rabi_population(truth, bias, widths)
        p_leak = leak_probability(truth, bias.a_r)
        scale = bias.readout_amp * lorentzian((bias.f_r - truth.f_r) * 1e3, truth.resonator_linewidth)
        c0 = np.asarray(truth.iq_center_0)
        centers = np.array(
            [c0 + scale * (np.asarray(c) - c0) for c in (truth.iq_center_0, truth.iq_center_1, truth.iq_center_2)]
        )
        iq = np.empty((widths.size, shots, 2))
        for i, p in enumerate(p1):
            rng = _stream(rng_seed, qubit, i)
            u = rng.random((shots, 3))
            state = (u[:, 0] < p).astype(int)
            state ^= (u[:, 1] < truth.readout_floor).astype(int)
            state[u[:, 2] < p_leak] = 2
            iq[i] = centers[state] + truth.iq_sigma * rng.standard_normal((shots, 2))
        return ShotBatch(widths, iq, bias, int(rng_seed), qubit)

    # --- gate circuits ---------------------------------------------------

    def _drive_unitary(self, q: int, amp: float, length_ns: float) -> np.ndarray:
        truth = self._truth.qubits[q]
        omega = truth.rabi_rate * 1e-3 * amp
        delta = self.biases[q].f_q - truth.f_q
        t_eff = length_ns - truth.pulse_edge_ns
        gen = omega * t_eff * qm.PAULI_X + delta * length_ns * qm.PAULI_Z
        return expm(-1j * np.pi * gen)

    def cr_unitary(self, amp: float, n_pulses: int = 1) -> np.ndarray:
        theta_zx = self._truth.cr_zx_rate * amp * n_pulses
        core = expm(-0.5j * theta_zx * np.kron(qm.PAULI_Z, qm.PAULI_X))
        t1, t2, t3, t4 = self._truth.cr_spurious
        return (
            qm.build_correction("ZZ", (t1, t2)) @ qm.build_correction("IX", t4) @ core @ qm.build_correction("IZ", t3)
        )

    def _gate_unitary(self, gate: Gate, n: int) -> np.ndarray:
        name = gate.name.upper()
        if name == "MEASURE":
            return np.eye(2**n)
        if name == "CR":
            if n != 2:
                raise InvalidArgument("CR needs a two-qubit register")
            amp, n_pulses = gate.params
            return self.cr_unitary(amp, int(n_pulses))
        if name == "U":
            dim = 2 ** len(gate.qubits)
            u = np.asarray(gate.params, dtype=complex).reshape(dim, dim)
            if len(gate.qubits) == n:
                return u
            return _embed(u, gate.qubits[0], n)
        if len(gate.qubits) != 1 or not 0 <= gate.qubits[0] < n:
            raise InvalidArgument(f"bad qubit for {gate.name}: {gate.qubits}")
        q = gate.qubits[0]
        if name == "X90":
            u = self._drive_unitary(q, gate.params[0], X90_LENGTH_NS)
        elif name == "X180":
            u = self._drive_unitary(q, gate.params[0], X180_LENGTH_NS)
        elif name == "VZ":
            u = qm.rot_z(gate.params[0])
        else:
            raise InvalidArgument(f"unknown gate {gate.name!r}")
        return _embed(u, q, n)

    def _register_size(self, circuit: Sequence[Gate]) -> int:
        used = {q for g in circuit for q in g.qubits}
        n = max(used) + 1 if used else 1
        if n > self.n_qubits:
            raise InvalidArgument("circuit addresses a qubit the device does not have")
        return n

    def circuit_state(self, circuit: Sequence[Gate], n_qubits: int | None = None) -> np.ndarray:
        n = n_qubits or self._register_size(circuit)
        psi = qm.basis_state(0, 2**n)
        for gate in circuit:
            psi = self._gate_unitary(gate, n) @ psi
        return psi

    def outcome_probabilities(self, circuit: Sequence[Gate], n_qubits: int | None = None) -> np.ndarray:
        """Exact joint outcome distribution including assignment error (index = bitstring, qubit 0 leftmost)."""
        n = n_qubits or self._register_size(circuit)
        probs = np.abs(self.circuit_state(circuit, n)) ** 2
        confusion = np.array([[1.0]])
        for q in range(n):
            e = self._truth.qubits[q].readout_floor
            confusion = np.kron(confusion, np.array([[1 - e, e], [e, 1 - e]]))
        out = confusion @ probs
        return out / out.sum()

    def run_circuit(
        self, circuit: Sequence[Gate], shots: int, rng_seed: int, n_qubits: int | None = None, stream: int = 0
    ) -> dict[str, int]:
        if shots < 1:
            raise InvalidArgument("shots must be >= 1")
        n = n_qubits or self._register_size(circuit)
        probs = self.outcome_probabilities(circuit, n)
        counts = _stream(rng_seed, 1_000_003, stream).multinomial(shots, probs)
        return {format(i, f"0{n}b"): int(c) for i, c in enumerate(counts)}


def _embed(u: np.ndarray, q: int, n: int) -> np.ndarray:
    if n == 1:
        return u
    return np.kron(u, qm.I2) if q == 0 else np.kron(qm.I2, u)


def counts_to_probabilities(counts: dict[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    return {k: v / total for k, v in counts.items()}


def with_truth(backend: SimulatedBackend, **qubit0_changes) -> SimulatedBackend:
    """Copy of ``backend`` with fields of qubit 0's truth replaced (test convenience)."""
    truth = backend.get_truth_for_test()
    q0 = replace(truth.qubits[0], **qubit0_changes)
    return SimulatedBackend(replace(truth, qubits=(q0,) + truth.qubits[1:]), list(backend.biases))
