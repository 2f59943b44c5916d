import csv
import json
from collections import Counter

import numpy as np
import pytest

from autocal import qmatrix as qm
from autocal import rb
from autocal.errors import InvalidArgument

L1 = [1, 10, 25, 50, 100]
L2 = [1, 3, 6, 10, 16, 24]


def _depol(n, eps):
    return rb.NoiseChannel(n, rb.NoiseModel(depolarizing=eps))


def test_single_qubit_group():
    g = rb.clifford_group_1q()
    assert len(g) == 24
    assert len({rb.clifford_signature(c.unitary) for c in g}) == 24
    assert g[0].decomposition == ()
    assert qm.phase_overlap(g[0].unitary, qm.I2) == pytest.approx(1)
    for c in g:
        assert rb.is_clifford(c.unitary)
        assert qm.phase_overlap(rb.recompose(c.decomposition, 1), c.unitary) == pytest.approx(1, abs=1e-12)
        inv = rb.inverse_element(c.unitary)
        assert qm.phase_overlap(inv.unitary @ c.unitary, qm.I2) == pytest.approx(1, abs=1e-12)


def test_two_qubit_group_complete_and_distinct():
    table = rb.clifford_table_2q()
    assert len(table) == 11520
    for el in list(table.values())[::97]:
        assert rb.is_clifford(el.unitary)
        assert qm.phase_overlap(rb.recompose(el.decomposition, 2), el.unitary) == pytest.approx(1, abs=1e-10)


def test_pauli_conjugation_on_all_nontrivial_paulis():
    rng = np.random.default_rng(4)
    for _ in range(30):
        _, el = rb.sample_clifford_2q(rng)
        u = el.unitary
        images = set()
        for p in rb._PAULIS_2Q[1:]:
            k, _ = rb._pauli_label(u @ p @ u.conj().T, rb._PAULIS_2Q)
            assert k != 0
            images.add(k)
        assert len(images) == 15


def test_non_clifford_rejected():
    assert not rb.is_clifford(qm.rot_x(0.3))
    with pytest.raises(InvalidArgument):
        rb.clifford_signature(qm.rot_x(0.3))


def test_class_frequencies_match_sizes():
    rng = np.random.default_rng(0)
    n = 100_000
    counts = Counter(int(rng.choice(4, p=np.asarray(rb.CLASS_SIZES) / 11520)) for _ in range(0))
    counts = Counter(rb.sample_clifford_2q(rng)[0] for _ in range(n))
    for cls, size in enumerate(rb.CLASS_SIZES):
        p = size / 11520
        assert abs(counts[cls] - n * p) <= 3 * np.sqrt(n * p * (1 - p))


def test_sequence_and_inverse_compose_to_identity():
    rng = np.random.default_rng(1)
    for n in (1, 2):
        for m in (1, 5, 20):
            u = np.eye(2**n, dtype=complex)
            for _ in range(m):
                u = rb._random_clifford(n, rng).unitary @ u
            inv = rb.inverse_element(u)
            assert qm.phase_overlap(inv.unitary @ u, np.eye(2**n)) == pytest.approx(1, abs=1e-10)


@pytest.mark.parametrize("n,lengths", [(1, L1), (2, L2)])
def test_noiseless_decay_is_one(n, lengths):
    r = rb.srb(rb.NoiseChannel(n), lengths, circuits=5, shots=None, rng=0)
    assert r.decay >= 0.9999
    assert r.process_infidelity == pytest.approx(0, abs=1e-4)
    x = rb.xrb(rb.NoiseChannel(n), lengths, circuits=5, rng=0)
    assert x.unitarity >= 0.9999


@pytest.mark.parametrize("n,lengths", [(1, L1), (2, L2)])
def test_depolarizing_srb_across_seeds(n, lengths):
    for seed in range(20):
        r = rb.srb(_depol(n, 0.01), lengths, circuits=20, shots=1000, rng=100 + seed)
        assert abs(r.decay - 0.99) <= 3 * r.decay_se


@pytest.mark.parametrize("n,lengths,target", [(1, L1, "X90"), (2, L2, "CNOT")])
def test_irb_recovers_injected_gate_error(n, lengths, target):
    d = 2**n
    expected = (d - 1) / d * 0.02
    for seed in range(20):
        ref = rb.srb(_depol(n, 0.01), lengths, circuits=20, shots=1000, rng=100 + seed)
        r = rb.irb(_depol(n, 0.01), target, ref, circuits=20, shots=1000, rng=200 + seed,
                   target_noise=rb.NoiseModel(depolarizing=0.02))
        assert abs(r.gate_infidelity - expected) <= 3 * r.gate_infidelity_se
        assert not r.nonphysical


def test_irb_noiseless_identity_target():
    ch = _depol(1, 0.01)
    ref = rb.srb(ch, L1, circuits=10, shots=None, rng=0)
    r = rb.irb(ch, "I", ref, circuits=10, shots=None, rng=1)
    assert r.gate_infidelity == pytest.approx(0, abs=1e-6)


def test_irb_flags_nonphysical_and_rejects_bad_reference():
    noisy = rb.srb(_depol(1, 0.05), L1, circuits=10, shots=None, rng=0)
    r = rb.irb(rb.NoiseChannel(1), "X90", noisy, circuits=10, shots=None, rng=1)
    assert r.nonphysical
    with pytest.raises(InvalidArgument):
        rb.irb(rb.NoiseChannel(2), "CNOT", noisy)
    with pytest.raises(InvalidArgument):
        rb.target_element("CNOT", 1)


@pytest.mark.parametrize("n,lengths", [(1, L1), (2, L2)])
def test_xrb_depolarizing_and_coherent(n, lengths):
    for seed in range(20):
        x = rb.xrb(_depol(n, 0.01), lengths, circuits=10, rng=seed)
        assert abs(x.unitarity - 0.99**2) <= 3 * x.unitarity_se + 1e-9
        coh = rb.NoiseChannel(n, rb.NoiseModel(overrotation=0.03))
        xc = rb.xrb(coh, lengths, circuits=10, rng=seed)
        assert abs(xc.unitarity - 1) <= 3 * xc.unitarity_se + 1e-9
    s = rb.srb(coh, lengths, circuits=10, shots=None, rng=0)
    # coherent error still lowers the survival decay: 1 - p = (2/3)(1 - cos delta) per qubit-Clifford
    assert s.decay < 1 - 1e-4


@pytest.mark.parametrize(
    "noise",
    [
        rb.NoiseModel(depolarizing=0.02),
        rb.NoiseModel(overrotation=0.05),
        rb.NoiseModel(amplitude_damping=0.02),
        rb.NoiseModel(depolarizing=0.01, overrotation=0.03),
    ],
)
def test_unitarity_bound(noise):
    ch = rb.NoiseChannel(1, noise)
    p = rb.srb(ch, L1, circuits=20, shots=None, rng=0).decay
    x = rb.xrb(ch, L1, circuits=20, rng=0)
    assert x.unitarity >= p**2 - 3e-3


def test_xrb_split_sums_to_process_infidelity():
    ch = rb.NoiseChannel(1, rb.NoiseModel(depolarizing=0.01, overrotation=0.05))
    ref = rb.srb(ch, L1, circuits=20, shots=None, rng=0)
    x = rb.xrb(ch, L1, circuits=20, rng=0, reference=ref)
    assert x.stochastic_error + x.unitary_error == pytest.approx(x.process_infidelity)
    assert x.unitary_error > 0
    pure = rb.xrb(_depol(1, 0.01), L1, circuits=10, rng=0)
    assert pure.unitary_error == pytest.approx(0, abs=1e-6)


def test_noise_spec_parsing():
    m = rb.NoiseModel.parse("depolarizing=0.01, overrotation=0.02")
    assert m == rb.NoiseModel(depolarizing=0.01, overrotation=0.02)
    assert rb.NoiseModel.parse("").is_identity
    for bad in ("depolarizing", "foo=1", "depolarizing=2"):
        with pytest.raises(InvalidArgument):
            rb.NoiseModel.parse(bad)


def test_validation():
    with pytest.raises(InvalidArgument):
        rb.srb(rb.NoiseChannel(1), [1, 2], circuits=3)
    with pytest.raises(InvalidArgument):
        rb.srb(rb.NoiseChannel(1), [1, 2, 3], circuits=0)


def test_json_and_csv_point_counts(tmp_path):
    r = rb.srb(_depol(1, 0.01), L1, circuits=4, shots=200, rng=0)
    r.write(tmp_path)
    record = json.loads((tmp_path / "srb_1q.json").read_text())
    rows = list(csv.reader((tmp_path / "srb_1q.csv").open()))
    assert rows[0] == ["m", "circuit", "value"]
    assert len(rows) - 1 == len(record["points"]) == len(L1) * 4


def test_backend_channel_after_calibration_is_near_ideal(backend, gates):
    ch = rb.BackendChannel(backend, gates, n_qubits=1)
    r = rb.srb(ch, L1, circuits=5, shots=None, rng=0)
    assert r.decay > 0.99
    with pytest.raises(InvalidArgument):
        rb.BackendChannel(backend, gates, n_qubits=2)


def test_decay_independent_of_circuit_count_at_fixed_shots():
    ch = _depol(1, 0.01)
    few = rb.srb(ch, L1, circuits=10, shots=2000, rng=5)
    many = rb.srb(ch, L1, circuits=40, shots=500, rng=6)
    assert abs(few.decay - many.decay) <= 3 * np.hypot(few.decay_se, many.decay_se)
