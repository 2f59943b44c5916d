import numpy as np
import pytest

from autocal.protocols import GateSet
from autocal.simdev import X90_LENGTH_NS, X180_LENGTH_NS, QubitBias, SimulatedBackend


def truth_gate_set(backend: SimulatedBackend) -> GateSet:
    """Amplitudes giving exact pi/2 and pi rotations on resonance."""
    truth = backend.get_truth_for_test()
    x90 = tuple(0.25 / (q.rabi_rate * 1e-3 * (X90_LENGTH_NS - q.pulse_edge_ns)) for q in truth.qubits)
    x180 = tuple(0.5 / (q.rabi_rate * 1e-3 * (X180_LENGTH_NS - q.pulse_edge_ns)) for q in truth.qubits)
    return GateSet(x90, x180)


def on_resonance_backend(truth=None) -> SimulatedBackend:
    """Backend whose programmed frequencies equal the hidden ones."""
    b = SimulatedBackend(truth)
    t = b.get_truth_for_test()
    for i, q in enumerate(t.qubits):
        b.set_bias(i, QubitBias(q.f_q, q.f_r, b.biases[i].a_r, 1.0))
    return b


@pytest.fixture
def backend():
    return on_resonance_backend()


@pytest.fixture
def gates(backend):
    return truth_gate_set(backend)


ARCHETYPE_CENTERS = np.array([[1.0, 0.2], [-0.6, 1.1], [-1.5, -0.8]])


def archetype(k: int, seed: int, n: int = 2400, sigma: float = 0.25) -> np.ndarray:
    """Seeded IQ cloud with ``k`` true clusters shaped like the simulated readout."""
    rng = np.random.default_rng([k, seed])
    weights = {1: [1.0], 2: [0.5, 0.5], 3: [0.45, 0.4, 0.15]}[k]
    labels = rng.choice(k, size=n, p=weights)
    return ARCHETYPE_CENTERS[labels] + sigma * rng.standard_normal((n, 2))


def cr_fit_angles(truth):
    """Fit angles of the simulated CR at its pi/2 amplitude.

    exp(-i pi/4 ZX) = ZZ(pi/2, 0) . IX(pi/2) . CNOT up to global phase, so the
    dressing shifts theta1 and theta4 by pi/2.
    """
    t1, t2, t3, t4 = truth.cr_spurious
    return (t1 + np.pi / 2, t2, t3, t4 + np.pi / 2)


def cnot_truth(truth):
    """Truth whose pi/2 CR pulse is exactly a CNOT (all fit angles zero)."""
    from dataclasses import replace

    return replace(truth, cr_spurious=(-np.pi / 2, 0.0, 2 * np.pi, -np.pi / 2))
