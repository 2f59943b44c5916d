"""Dense 2x2 / 4x4 gate algebra.

Two-qubit operators use the control qubit as the LEFT Kronecker factor, so
basis index ``2 * c + t`` addresses control ``c`` and target ``t``. In that
convention ``IX(theta) = I (x) R_X(theta)`` acts on the target only.

Global phases are kept as computed; compare operators with
:func:`phase_overlap`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constants import CNOT_CONSTRAINT_SUM
from .errors import InvalidArgument

UNITARY_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

for _m in (I2, I4, PAULI_X, PAULI_Y, PAULI_Z, CNOT):
    _m.setflags(write=False)


def _finite(*values: float) -> None:
    for v in values:
        if not np.isfinite(v):
            raise InvalidArgument(f"angle must be finite, got {v!r}")


def _frozen(m: np.ndarray) -> np.ndarray:
    m.setflags(write=False)
    return m


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] not in (2, 4):
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


def rot_x(theta: float) -> np.ndarray:
    """R_X(theta) = exp(-i theta X / 2)."""
    _finite(theta)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return _frozen(np.array([[c, -1j * s], [-1j * s, c]], dtype=complex))


def rot_y(theta: float) -> np.ndarray:
    _finite(theta)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return _frozen(np.array([[c, -s], [s, c]], dtype=complex))


def rot_z(theta: float) -> np.ndarray:
    """R_Z(theta) = diag(exp(-i theta/2), exp(i theta/2))."""
    _finite(theta)
    return _frozen(np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)]))


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with ``a`` acting on the control (left) qubit."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != (2, 2) or b.shape != (2, 2):
        raise InvalidArgument(f"tensor expects two 2x2 operators, got {a.shape} and {b.shape}")
    return _frozen(np.kron(a, b))


def build_correction(kind: str, angles) -> np.ndarray:
    """Single-qubit correction layers that dress a CR pulse.

    ``IX`` and ``IZ`` take one angle (target rotation), ``ZZ`` takes
    ``(control_angle, target_angle)``.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    _finite(*angles)
    kind = kind.upper()
    if kind == "ZZ":
        if angles.size != 2:
            raise InvalidArgument(f"ZZ takes two angles, got {angles.size}")
        return tensor(rot_z(angles[0]), rot_z(angles[1]))
    if kind in ("IX", "IZ"):
        if angles.size != 1:
            raise InvalidArgument(f"{kind} takes one angle, got {angles.size}")
        rot = rot_x if kind == "IX" else rot_z
        return tensor(I2, rot(angles[0]))
    raise InvalidArgument(f"unknown correction kind {kind!r}")


@dataclass(frozen=True)
class CnotAngles:
    """Correction angles around a CR pulse, stored positionally.

    ``theta1``/``theta2`` feed ZZ (control, target), ``theta3`` the IZ layer
    applied before the pulse and ``theta4`` the IX layer after it.
    ``branch`` is ``"primary"`` or ``"half_pi"`` (the solution that differs
    by a global phase of pi/2).
    """

    theta1: float = 0.0
    theta2: float = 0.0
    theta3: float = 0.0
    theta4: float = 0.0
    branch: str = "primary"

    @classmethod
    def constrained(cls, theta1: float, theta2: float, theta4: float, branch: str = "primary"):
        return cls(theta1, theta2, CNOT_CONSTRAINT_SUM - theta2, theta4, branch)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.theta1, self.theta2, self.theta3, self.theta4)

    def constraint_residual(self) -> float:
        return abs(self.theta2 + self.theta3 - CNOT_CONSTRAINT_SUM)

    def correction(self) -> "CnotAngles":
        """Angles that turn the CR pulse described by these fit angles into a CNOT.

        This is ``0 - fit`` with theta3 moved by 4 pi (an exact identity for
        R_Z) so the constraint theta2 + theta3 = 2 pi still holds.
        """
        return CnotAngles.constrained(-self.theta1, -self.theta2, -self.theta4)

    def half_pi_partner(self) -> "CnotAngles":
        """The degenerate solution: theta4 -> -theta4, theta1,2 -> theta1,2 - pi, theta3 -> theta3 + pi."""
        other = "half_pi" if self.branch == "primary" else "primary"
        return CnotAngles(
            self.theta1 - np.pi, self.theta2 - np.pi, self.theta3 + np.pi, -self.theta4, other
        )

    def to_dict(self) -> dict:
        return {
            "theta1": float(self.theta1),
            "theta2": float(self.theta2),
            "theta3": float(self.theta3),
            "theta4": float(self.theta4),
            "branch": self.branch,
        }


def _angles(angles) -> tuple[float, float, float, float]:
    if isinstance(angles, CnotAngles):
        return angles.as_tuple()
    t = tuple(float(a) for a in angles)
    if len(t) != 4:
        raise InvalidArgument(f"expected four angles, got {len(t)}")
    return t


def cnot_from_cr(cr: np.ndarray, angles) -> np.ndarray:
    """IX(t4) . ZZ(t1, t2) . CR . IZ(t3)."""
    cr = np.asarray(cr, dtype=complex)
    if cr.shape != (4, 4) or not is_unitary(cr, 1e-9):
        raise InvalidArgument("cr must be a 4x4 unitary")
    t1, t2, t3, t4 = _angles(angles)
    return _frozen(
        build_correction("IX", t4) @ build_correction("ZZ", (t1, t2)) @ cr @ build_correction("IZ", t3)
    )


def cr_from_cnot(angles) -> np.ndarray:
    """The CR pulse that the given fit angles describe: ZZ(t1, t2) . IX(t4) . CNOT . IZ(t3)."""
    t1, t2, t3, t4 = _angles(angles)
    return _frozen(
        build_correction("ZZ", (t1, t2)) @ build_correction("IX", t4) @ CNOT @ build_correction("IZ", t3)
    )


def phase_overlap(u: np.ndarray, v: np.ndarray) -> float:
    """|Tr(U^dag V)| / d, equal to 1 iff U and V agree up to global phase."""
    u = np.asarray(u)
    return float(abs(np.trace(u.conj().T @ np.asarray(v))) / u.shape[0])


def global_phase(u: np.ndarray, v: np.ndarray) -> float:
    """Phase ``a`` such that ``v ~= exp(i a) u``."""
    return float(np.angle(np.trace(np.asarray(u).conj().T @ np.asarray(v))))


@dataclass(frozen=True)
class BlochExpectations:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not -1.0 - 1e-9 <= v <= 1.0 + 1e-9:
                raise InvalidArgument(f"Bloch component out of range: {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def bloch_r_length(e0: BlochExpectations, e1: BlochExpectations) -> float:
    """Half the distance between the target Bloch vectors for control in |0> and |1>."""
    d = e0.as_array() - e1.as_array()
    return float(0.5 * np.sqrt(d @ d))


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """(x, y, z) of a single-qubit density matrix."""
    rho = np.asarray(rho)
    return np.real([np.trace(rho @ p) for p in (PAULI_X, PAULI_Y, PAULI_Z)])


def apply(u: np.ndarray, psi: Sequence[complex]) -> np.ndarray:
    return np.asarray(u) @ np.asarray(psi, dtype=complex)


def basis_state(index: int, dim: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi
