"""Randomized benchmarking on a density-matrix channel simulator.

Cliffords act as ideal unitaries followed by a gate-attached noise channel
(or, through ``BackendChannel``, as the calibrated pulses of a
``SimulatedBackend``). SRB and IRB fit A p^m to the polarization of the
survival probability; XRB fits A u^m to the exactly computed purity.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import qmatrix as qm
from .artifacts import write_csv, write_json
from .constants import irb_prefactor
from .errors import InvalidArgument
from .fitters import DecayFit, fit_decay

# --- operations and Clifford elements ------------------------------------------


@dataclass(frozen=True)
class Op:
    """Native operation: ``X90`` / ``VZ`` on one qubit or ``CNOT`` (control 0, target 1)."""

    name: str
    qubits: tuple[int, ...]
    angle: float = 0.0


def op_unitary(op: Op, n: int) -> np.ndarray:
    if op.name == "CNOT":
        return qm.CNOT
    if op.name == "X90":
        u = qm.rot_x(np.pi / 2)
    elif op.name == "VZ":
        u = qm.rot_z(op.angle)
    else:
        raise InvalidArgument(f"unknown op {op.name!r}")
    if n == 1:
        return u
    return qm.tensor(u, qm.I2) if op.qubits[0] == 0 else qm.tensor(qm.I2, u)


def recompose(ops: Sequence[Op], n: int) -> np.ndarray:
    """Product of the ops in time order (first op acts first)."""
    u = np.eye(2**n, dtype=complex)
    for op in ops:
        u = op_unitary(op, n) @ u
    return u


@dataclass(frozen=True)
class CliffordElement:
    index: int
    unitary: np.ndarray = field(repr=False)
    decomposition: tuple[Op, ...]
    n_qubits: int = 1


_PAULIS_1Q = (qm.I2, qm.PAULI_X, qm.PAULI_Y, qm.PAULI_Z)
_PAULIS_2Q = tuple(np.kron(a, b) for a in _PAULIS_1Q for b in _PAULIS_1Q)


def _pauli_label(m: np.ndarray, paulis) -> tuple[int, int]:
    """(index, sign) of a signed Pauli operator; raises if ``m`` is not one."""
    d = m.shape[0]
    for i, p in enumerate(paulis):
        c = np.trace(p.conj().T @ m) / d
        if abs(abs(c) - 1) < 1e-9:
            if abs(c.imag) > 1e-9:
                break
            return i, int(np.sign(c.real))
    raise InvalidArgument("operator is not a signed Pauli")


_PAULI_STACK_1Q = np.array(_PAULIS_1Q)
_PAULI_STACK_2Q = np.array(_PAULIS_2Q)


def clifford_signature(u: np.ndarray) -> tuple:
    """Images of the X and Z generators under conjugation: identifies a Clifford up to phase."""
    d = u.shape[0]
    stack = _PAULI_STACK_1Q if d == 2 else _PAULI_STACK_2Q
    gens = (1, 3) if d == 2 else (4, 12, 1, 3)  # XI, ZI, IX, IZ
    ud = u.conj().T
    out = []
    for g in gens:
        c = np.einsum("kij,ji->k", stack, u @ stack[g] @ ud) / d
        k = int(np.argmax(np.abs(c)))
        if abs(abs(c[k]) - 1) > 1e-9 or abs(c[k].imag) > 1e-9:
            raise InvalidArgument("operator is not a Clifford")
        out.append((k, int(np.sign(c[k].real))))
    return tuple(out)


def is_clifford(u: np.ndarray) -> bool:
    n = int(np.log2(u.shape[0]))
    paulis = _PAULIS_1Q if n == 1 else _PAULIS_2Q
    try:
        for p in paulis[1:]:
            _pauli_label(u @ p @ u.conj().T, paulis)
    except InvalidArgument:
        return False
    return True


def _merge_z(ops: list[Op]) -> tuple[Op, ...]:
    out: list[Op] = []
    for op in ops:
        if op.name == "VZ" and out and out[-1].name == "VZ" and out[-1].qubits == op.qubits:
            angle = out[-1].angle + op.angle
            out.pop()
            if not np.isclose(np.cos(angle / 2) ** 2, 1.0):  # Rz(2 pi k) is a global phase
                out.append(Op("VZ", op.qubits, float(angle)))
        else:
            out.append(op)
    return tuple(out)


@functools.lru_cache(maxsize=1)
def clifford_group_1q() -> tuple[CliffordElement, ...]:
    """The 24 single-qubit Cliffords by breadth-first closure of {X90, Z90}.

    Each element keeps the shortest generator word found, with adjacent Z
    rotations merged into one virtual Z.
    """
    gens = (Op("X90", (0,)), Op("VZ", (0,), np.pi / 2))
    found = {clifford_signature(qm.I2): (qm.I2.copy(), ())}
    frontier = [(qm.I2.copy(), ())]
    while frontier:
        nxt = []
        for u, word in frontier:
            for g in gens:
                v = op_unitary(g, 1) @ u
                key = clifford_signature(v)
                if key not in found:
                    found[key] = (v, word + (g,))
                    nxt.append((v, word + (g,)))
        frontier = nxt
    elements = sorted(found.values(), key=lambda uw: (len(uw[1]), [(o.name, o.angle) for o in uw[1]]))
    return tuple(CliffordElement(i, u, _merge_z(list(w)), 1) for i, (u, w) in enumerate(elements))


@functools.lru_cache(maxsize=1)
def _lookup_1q() -> dict:
    return {clifford_signature(c.unitary): c for c in clifford_group_1q()}


def _find_1q(u: np.ndarray) -> CliffordElement:
    return _lookup_1q()[clifford_signature(u)]


def _on(q: int, c: CliffordElement) -> tuple[Op, ...]:
    return tuple(Op(o.name, (q,), o.angle) for o in c.decomposition)


@functools.lru_cache(maxsize=1)
def _axis_cycle() -> tuple[CliffordElement, ...]:
    """{I, S, S^2} with S: X -> Y -> Z -> X."""
    out = []
    for c in clifford_group_1q():
        u = c.unitary
        img = [_pauli_label(u @ p @ u.conj().T, _PAULIS_1Q) for p in _PAULIS_1Q[1:]]
        if img in ([(1, 1), (2, 1), (3, 1)], [(2, 1), (3, 1), (1, 1)], [(3, 1), (1, 1), (2, 1)]):
            out.append(c)
    return tuple(out)


CLASS_NAMES = ("single", "cnot", "iswap", "swap")
CLASS_SIZES = (576, 5184, 5184, 576)


@functools.lru_cache(maxsize=None)
def _class_core(name: str) -> tuple[tuple[Op, ...], np.ndarray]:
    """Entangling core of each class as ops and unitary.

    cnot: CNOT; iswap: CNOT, (-X90 x Y90), CNOT; swap: three alternating CNOTs.
    """
    cnot = (Op("CNOT", (0, 1)),)
    if name == "single":
        ops = ()
    elif name == "cnot":
        ops = cnot
    elif name == "iswap":
        ops = cnot + _on(0, _find_1q(qm.rot_x(-np.pi / 2))) + _on(1, _find_1q(qm.rot_y(np.pi / 2))) + cnot
    elif name == "swap":
        h = _find_1q(qm.rot_y(np.pi / 2) @ qm.PAULI_Z)
        ops = cnot + _on(0, h) + _on(1, h) + cnot + _on(0, h) + _on(1, h) + cnot
    else:
        raise InvalidArgument(name)
    return ops, recompose(ops, 2)


def clifford_2q(cls: int, a: int, b: int, s: int = 0, t: int = 0) -> CliffordElement:
    """Element of class ``cls`` built as (S_s x S_t) . core . (C_a x C_b).

    ``a, b`` index the 24 single-qubit Cliffords; ``s, t`` the three axis
    cycles (used by the cnot and iswap classes only).
    """
    c1 = clifford_group_1q()
    name = CLASS_NAMES[cls]
    core_ops, core_u = _class_core(name)
    ops = _on(0, c1[a]) + _on(1, c1[b]) + core_ops
    u = core_u @ np.kron(c1[a].unitary, c1[b].unitary)
    if name in ("cnot", "iswap"):
        cyc = _axis_cycle()
        ops += _on(0, cyc[s]) + _on(1, cyc[t])
        u = np.kron(cyc[s].unitary, cyc[t].unitary) @ u
        index = (a * 24 + b) * 9 + s * 3 + t
    else:
        index = a * 24 + b
    return CliffordElement(int(sum(CLASS_SIZES[:cls])) + index, u, _merge_z(list(ops)), 2)


def sample_clifford_2q(rng: np.random.Generator) -> tuple[int, CliffordElement]:
    """Uniform draw from the 11520 two-qubit Cliffords; returns (class index, element)."""
    cls = int(rng.choice(4, p=np.asarray(CLASS_SIZES) / sum(CLASS_SIZES)))
    a, b = (int(x) for x in rng.integers(0, 24, size=2))
    s, t = (int(x) for x in rng.integers(0, 3, size=2)) if cls in (1, 2) else (0, 0)
    return cls, clifford_2q(cls, a, b, s, t)


@functools.lru_cache(maxsize=1)
def clifford_table_2q() -> dict:
    """signature -> element for all 11520 two-qubit Cliffords."""
    table = {}
    for cls in range(4):
        n_dress = 3 if cls in (1, 2) else 1
        for a in range(24):
            for b in range(24):
                for s in range(n_dress):
                    for t in range(n_dress):
                        el = clifford_2q(cls, a, b, s, t)
                        table[clifford_signature(el.unitary)] = el
    return table


def inverse_element(u: np.ndarray) -> CliffordElement:
    """The Clifford that undoes ``u`` (up to phase)."""
    inv = u.conj().T
    if u.shape[0] == 2:
        return _lookup_1q()[clifford_signature(inv)]
    return clifford_table_2q()[clifford_signature(inv)]


# --- noise channels --------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Channel applied after every operation it is attached to.

    ``depolarizing`` eps: rho -> (1 - eps) rho + eps I/d.
    ``overrotation``: extra Rx(delta) on every qubit (coherent).
    ``amplitude_damping`` gamma: T1-type decay on every qubit.
    """

    depolarizing: float = 0.0
    overrotation: float = 0.0
    amplitude_damping: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.depolarizing <= 1.0 or not 0.0 <= self.amplitude_damping <= 1.0:
            raise InvalidArgument("channel strengths must lie in [0, 1]")

    @property
    def is_identity(self) -> bool:
        return self.depolarizing == 0 and self.overrotation == 0 and self.amplitude_damping == 0

    @classmethod
    def parse(cls, spec: str) -> "NoiseModel":
        """``"depolarizing=0.01,overrotation=0.02"`` style."""
        kw = {}
        for part in filter(None, (p.strip() for p in spec.split(","))):
            key, _, value = part.partition("=")
            key = key.strip().replace("-", "_")
            if key not in ("depolarizing", "overrotation", "amplitude_damping") or not value:
                raise InvalidArgument(f"bad noise spec {part!r}")
            kw[key] = float(value)
        return cls(**kw)

    def to_dict(self) -> dict:
        return {"depolarizing": self.depolarizing, "overrotation": self.overrotation,
                "amplitude_damping": self.amplitude_damping}

    def apply(self, rho: np.ndarray) -> np.ndarray:
        d = rho.shape[0]
        n = int(np.log2(d))
        if self.overrotation:
            r = qm.rot_x(self.overrotation)
            u = r if n == 1 else np.kron(r, r)
            rho = u @ rho @ u.conj().T
        if self.amplitude_damping:
            g = self.amplitude_damping
            k0 = np.array([[1, 0], [0, np.sqrt(1 - g)]], dtype=complex)
            k1 = np.array([[0, np.sqrt(g)], [0, 0]], dtype=complex)
            for q in range(n):
                ks = [k0, k1] if n == 1 else [np.kron(k, qm.I2) if q == 0 else np.kron(qm.I2, k) for k in (k0, k1)]
                rho = sum(k @ rho @ k.conj().T for k in ks)
        if self.depolarizing:
            rho = (1 - self.depolarizing) * rho + self.depolarizing * np.trace(rho) * np.eye(d) / d
        return rho


class Channel(Protocol):
    n_qubits: int

    def apply(self, rho: np.ndarray, element: CliffordElement, noise: NoiseModel | None = None) -> np.ndarray: ...


@dataclass
class NoiseChannel:
    """Ideal Clifford unitary followed by ``noise``."""

    n_qubits: int = 1
    noise: NoiseModel = NoiseModel()

    def apply(self, rho, element, noise=None):
        u = element.unitary
        rho = u @ rho @ u.conj().T
        return (noise if noise is not None else self.noise).apply(rho)


class BackendChannel:
    """Cliffords played as calibrated pulses on a SimulatedBackend.

    X90 uses the calibrated amplitude, virtual Z is exact and CNOT is the
    calibrated CR pulse with its correction angles. Errors are therefore the
    coherent residue of calibration, plus optional ``noise`` per Clifford.
    """

    def __init__(self, backend, gates, n_qubits: int = 1, cr_amp: float | None = None,
                 angles: qm.CnotAngles | None = None, noise: NoiseModel = NoiseModel()):
        from .protocols import candidate_cnot_gates
        from .simdev import vz, x90

        if n_qubits == 2 and (cr_amp is None or angles is None):
            raise InvalidArgument("two-qubit RB on the backend needs the calibrated CR amplitude and angles")
        self.n_qubits = n_qubits
        self.noise = noise
        self._backend = backend
        self._cache: dict[tuple, np.ndarray] = {}

        def pulses(op: Op):
            if op.name == "X90":
                return [gates.x90(op.qubits[0])]
            if op.name == "VZ":
                return [vz(op.qubits[0], op.angle)]
            return candidate_cnot_gates(cr_amp, angles, gates)

        self._pulses = pulses
        self._x90 = x90

    def unitary(self, element: CliffordElement) -> np.ndarray:
        key = tuple(element.decomposition)
        if key not in self._cache:
            u = np.eye(2**self.n_qubits, dtype=complex)
            for op in element.decomposition:
                for g in self._pulses(op):
                    u = self._backend._gate_unitary(g, self.n_qubits) @ u
            self._cache[key] = u
        return self._cache[key]

    def apply(self, rho, element, noise=None):
        u = self.unitary(element)
        rho = u @ rho @ u.conj().T
        return (noise if noise is not None else self.noise).apply(rho)


# --- protocols ---------------------------------------------------------------------


@dataclass
class RbResult:
    protocol: str
    n_qubits: int
    lengths: np.ndarray
    values: np.ndarray  # (n_lengths, n_circuits): survival, or purity for XRB
    fit: DecayFit
    process_infidelity: float
    process_infidelity_se: float
    gate_infidelity: float | None = None
    gate_infidelity_se: float | None = None
    unitarity: float | None = None
    unitarity_se: float | None = None
    stochastic_error: float | None = None
    unitary_error: float | None = None
    nonphysical: bool = False
    reference_decay: float | None = None

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def decay(self) -> float:
        return self.fit.decay

    @property
    def decay_se(self) -> float:
        return self.fit.decay_se

    @property
    def amplitude(self) -> float:
        return self.fit.amplitude

    def points(self) -> list[tuple[int, int, float]]:
        return [(int(m), j, float(v)) for m, row in zip(self.lengths, self.values) for j, v in enumerate(row)]

    def to_record(self) -> dict:
        keys = ("process_infidelity", "process_infidelity_se", "gate_infidelity", "gate_infidelity_se",
                "unitarity", "unitarity_se", "stochastic_error", "unitary_error", "nonphysical", "reference_decay")
        return {
            "protocol": self.protocol,
            "n_qubits": self.n_qubits,
            "fit": self.fit.to_dict(),
            **{k: getattr(self, k) for k in keys},
            "points": [{"m": m, "circuit": j, "value": v} for m, j, v in self.points()],
        }

    def write(self, out_dir: str | Path, stem: str | None = None) -> None:
        stem = stem or f"{self.protocol.lower()}_{self.n_qubits}q"
        write_json(Path(out_dir) / f"{stem}.json", self.to_record())
        write_csv(Path(out_dir) / f"{stem}.csv", ["m", "circuit", "value"], self.points())


def _random_clifford(n: int, rng: np.random.Generator) -> CliffordElement:
    if n == 1:
        return clifford_group_1q()[int(rng.integers(24))]
    return sample_clifford_2q(rng)[1]


def target_element(target: str | CliffordElement, n: int) -> CliffordElement:
    if isinstance(target, CliffordElement):
        return target
    name = target.upper()
    if name == "X90":
        ops = (Op("X90", (0,)),)
    elif name == "CNOT":
        ops = (Op("CNOT", (0, 1)),)
    elif name in ("I", "IDENTITY"):
        ops = ()
    else:
        raise InvalidArgument(f"unknown interleaved gate {target!r}")
    if name == "CNOT" and n != 2:
        raise InvalidArgument("CNOT needs two qubits")
    return CliffordElement(-1, recompose(ops, n), ops, n)


def _run_sequence(channel: Channel, seq: list[tuple[CliffordElement, NoiseModel | None]]) -> np.ndarray:
    d = 2**channel.n_qubits
    rho = np.zeros((d, d), dtype=complex)
    rho[0, 0] = 1.0
    for el, noise in seq:
        rho = channel.apply(rho, el, noise)
    return rho


def _survival_curve(
    channel: Channel, lengths, circuits: int, shots: int | None, rng: np.random.Generator,
    interleave: CliffordElement | None = None, interleave_noise: NoiseModel | None = None,
) -> np.ndarray:
    n = channel.n_qubits
    d = 2**n
    values = np.empty((len(lengths), circuits))
    for i, m in enumerate(lengths):
        for j in range(circuits):
            seq = []
            ideal = np.eye(d, dtype=complex)
            for _ in range(int(m)):
                c = _random_clifford(n, rng)
                seq.append((c, None))
                ideal = c.unitary @ ideal
                if interleave is not None:
                    seq.append((interleave, interleave_noise if interleave_noise is not None else NoiseModel()))
                    ideal = interleave.unitary @ ideal
            inv = inverse_element(ideal)
            assert qm.phase_overlap(inv.unitary @ ideal, np.eye(d)) > 1 - 1e-9
            seq.append((inv, None))
            p0 = float(np.clip(np.real(_run_sequence(channel, seq)[0, 0]), 0.0, 1.0))
            values[i, j] = p0 if shots is None else rng.binomial(shots, p0) / shots
    return values


def _validate(lengths, circuits):
    lengths = np.asarray(lengths, dtype=int)
    if np.unique(lengths).size < 3 or np.any(lengths < 0):
        raise InvalidArgument("RB needs at least 3 distinct non-negative sequence lengths")
    if circuits < 1:
        raise InvalidArgument("circuits per length must be >= 1")
    return lengths


def _polarization_fit(lengths, values, d, shots):
    """Fit A p^m to the polarization (S - 1/d) d / (d - 1) of the mean survival."""
    mean = values.mean(axis=1)
    pol = (mean - 1.0 / d) * d / (d - 1)
    spread = values.std(axis=1, ddof=1) / np.sqrt(values.shape[1]) if values.shape[1] > 1 else np.zeros_like(mean)
    floor = 1.0 / (2 * shots * values.shape[1]) if shots else 1e-6
    sigma = np.maximum(spread * d / (d - 1), floor)
    return fit_decay(lengths, pol, sigma)


def process_infidelity(p: float, d: int) -> float:
    """(d^2 - 1)/d^2 (1 - p)."""
    return (d * d - 1) / (d * d) * (1 - p)


def srb(
    channel: Channel, lengths, circuits: int = 30, shots: int | None = 1000, rng: np.random.Generator | int = 0,
) -> RbResult:
    """Standard RB: random Clifford sequences closed by their inverse."""
    lengths = _validate(lengths, circuits)
    rng = np.random.default_rng(rng)
    d = 2**channel.n_qubits
    values = _survival_curve(channel, lengths, circuits, shots, rng)
    fit = _polarization_fit(lengths, values, d, shots)
    k = (d * d - 1) / (d * d)
    return RbResult("SRB", channel.n_qubits, lengths, values, fit, process_infidelity(fit.decay, d), k * fit.decay_se)


def irb(
    channel: Channel, target: str | CliffordElement, reference: RbResult, lengths=None, circuits: int = 30,
    shots: int | None = 1000, rng: np.random.Generator | int = 1, target_noise: NoiseModel | None = None,
) -> RbResult:
    """Interleaved RB: ``target`` after every random Clifford.

    ``target_noise`` is the channel attached to the interleaved gate (none by
    default). Gate infidelity is (d - 1)/d (1 - p_IRB / p_SRB).
    """
    if reference.protocol != "SRB" or reference.n_qubits != channel.n_qubits:
        raise InvalidArgument("irb needs a matching SRB reference")
    lengths = _validate(reference.lengths if lengths is None else lengths, circuits)
    rng = np.random.default_rng(rng)
    d = 2**channel.n_qubits
    el = target_element(target, channel.n_qubits)
    values = _survival_curve(channel, lengths, circuits, shots, rng, el, target_noise)
    fit = _polarization_fit(lengths, values, d, shots)
    ratio = fit.decay / reference.decay
    ratio_se = ratio * np.hypot(fit.decay_se / fit.decay, reference.decay_se / reference.decay)
    pref = irb_prefactor(d)
    gate_inf = pref * (1 - ratio)
    gate_se = pref * ratio_se
    nonphysical = bool(fit.decay - reference.decay > 2 * np.hypot(fit.decay_se, reference.decay_se))
    k = (d * d - 1) / (d * d)
    return RbResult(
        "IRB", channel.n_qubits, lengths, values, fit, process_infidelity(fit.decay, d), k * fit.decay_se,
        gate_infidelity=float(gate_inf), gate_infidelity_se=float(gate_se), nonphysical=nonphysical,
        reference_decay=reference.decay,
    )


def purity_polarization(rho: np.ndarray) -> float:
    """(d Tr rho^2 - 1)/(d - 1): squared generalized Bloch length, 1 for pure states."""
    d = rho.shape[0]
    return float((d * np.real(np.trace(rho @ rho)) - 1) / (d - 1))


def xrb(
    channel: Channel, lengths, circuits: int = 20, rng: np.random.Generator | int = 2,
    reference: RbResult | None = None,
) -> RbResult:
    """Unitarity from the exact purity after m random Cliffords, fitted to A u^m.

    With an SRB ``reference`` the process infidelity e = (d^2-1)/d^2 (1 - p)
    is split into a stochastic part (d^2-1)/d^2 (1 - sqrt(u)) and the
    remaining unitary part e - e_stoch.
    """
    lengths = _validate(lengths, circuits)
    rng = np.random.default_rng(rng)
    n = channel.n_qubits
    d = 2**n
    values = np.empty((lengths.size, circuits))
    for i, m in enumerate(lengths):
        for j in range(circuits):
            seq = [(_random_clifford(n, rng), None) for _ in range(int(m))]
            values[i, j] = purity_polarization(_run_sequence(channel, seq))
    spread = values.std(axis=1, ddof=1) / np.sqrt(circuits) if circuits > 1 else np.zeros(lengths.size)
    fit = fit_decay(lengths, values.mean(axis=1), np.maximum(spread, 1e-9))
    u = fit.decay
    k = (d * d - 1) / (d * d)
    stochastic = k * (1 - np.sqrt(u))
    if reference is not None:
        p, p_se = reference.decay, reference.decay_se
    else:
        p, p_se = np.sqrt(u), 0.5 * fit.decay_se / max(np.sqrt(u), 1e-12)
    e = process_infidelity(p, d)
    return RbResult(
        "XRB", n, lengths, values, fit, float(e), float(k * p_se), unitarity=float(u), unitarity_se=fit.decay_se,
        stochastic_error=float(stochastic), unitary_error=float(e - stochastic), reference_decay=p,
    )
