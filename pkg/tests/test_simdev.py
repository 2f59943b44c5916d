import dataclasses
import json

import numpy as np
import pytest

from autocal import qmatrix as qm
from autocal.autorabi import ScanConfig, evaluate_bias, measure_ground_reference
from autocal.clustering import cluster_report
from autocal.errors import InvalidArgument
from autocal.simdev import (
    DeviceTruth,
    QubitBias,
    ShotBatch,
    SimulatedBackend,
    cr,
    default_truth,
    lorentzian,
    measure,
    rabi_population,
    vz,
    with_truth,
    x90,
    x180,
)
from conftest import on_resonance_backend, truth_gate_set


def _nearest_center_bits(batch: ShotBatch, truth) -> np.ndarray:
    """Excited fraction per width, classifying by the nearer of the |0>/|1> centers."""
    c0, c1 = np.asarray(truth.iq_center_0), np.asarray(truth.iq_center_1)
    d0 = np.linalg.norm(batch.iq - c0, axis=-1)
    d1 = np.linalg.norm(batch.iq - c1, axis=-1)
    return (d1 < d0).mean(axis=1)


def _resonant_bias(backend, a_r, qubit=0):
    t = backend.get_truth_for_test().qubits[qubit]
    return QubitBias(t.f_q, t.f_r, a_r, 1.0)


def test_no_drive_gives_readout_floor(backend):
    truth = backend.get_truth_for_test().qubits[0]
    shots = 20000
    batch = backend.rabi_scan(_resonant_bias(backend, 0.0), [4, 40, 200], shots, rng_seed=1)
    p = _nearest_center_bits(batch, truth)
    sigma = np.sqrt(truth.readout_floor * (1 - truth.readout_floor) / shots)
    assert np.all(np.abs(p - truth.readout_floor) < 3 * sigma + 1e-3)


def test_half_period_reaches_envelope_maximum(backend):
    truth = backend.get_truth_for_test().qubits[0]
    bias = _resonant_bias(backend, 0.5)
    omega = truth.rabi_rate * 1e-3 * bias.a_r
    t = 1 / (2 * omega)
    # The coherent part decays toward the mixed state: C + A exp(-tau t) with C = A = 1/2.
    expected = 0.5 * (1 + np.exp(-truth.tau_decay * t))
    assert rabi_population(truth, bias, t) == pytest.approx(expected, rel=1e-12)
    ts = np.linspace(0, 2 * t, 2001)
    # decay pulls the peak slightly earlier than the undamped half period
    assert abs(ts[np.argmax(rabi_population(truth, bias, ts))] - t) < 0.01 * t


def test_detuned_resonator_shrinks_separation_tenfold():
    assert lorentzian(3.0, 1.0) == pytest.approx(0.1)
    base = on_resonance_backend()
    b = with_truth(base, iq_sigma=1e-6, readout_floor=0.2)
    truth = b.get_truth_for_test().qubits[0]

    def separation(df_mhz):
        bias = QubitBias(truth.f_q, truth.f_r + df_mhz * 1e-3 * truth.resonator_linewidth, 0.0, 1.0)
        pts = b.rabi_scan(bias, [0], 2000, rng_seed=3).points()
        # two point-like clusters: the farthest point from any shot sits in the other one
        return np.linalg.norm(pts - pts[0], axis=1).max()

    assert separation(3.0) / separation(0.0) == pytest.approx(0.1, rel=1e-3)


def test_rabi_scan_validation(backend):
    bias = _resonant_bias(backend, 0.5)
    with pytest.raises(InvalidArgument):
        backend.rabi_scan(bias, [4, 6], 10, 0)
    with pytest.raises(InvalidArgument):
        backend.rabi_scan(bias, [4], 0, 0)
    with pytest.raises(InvalidArgument):
        QubitBias(5.0, 7.0, 1.2)


def test_run_circuit_examples(backend, gates):
    floor = backend.get_truth_for_test().qubits[0].readout_floor
    probs = backend.outcome_probabilities([], n_qubits=2)
    assert probs[0] >= (1 - floor) ** 2 - 1e-12
    counts = backend.run_circuit([x180(0, gates.x180_amp[0]), measure()], 2000, rng_seed=0, n_qubits=2)
    ones = counts["10"] + counts["11"]
    assert ones > 0.9 * 2000
    with pytest.raises(InvalidArgument):
        backend.run_circuit([dataclasses.replace(x90(0, 0.1), name="H")], 10, 0)


def test_cr_quarter_turn_on_control_one():
    truth = dataclasses.replace(default_truth(), cr_spurious=(0.0, 0.0, 2 * np.pi, 0.0))
    b = on_resonance_backend(truth)
    g = truth_gate_set(b)
    amp = (np.pi / 2) / truth.cr_zx_rate
    psi = b.circuit_state([x180(0, g.x180_amp[0]), cr(amp)])
    rho = np.outer(psi, psi.conj())
    target = rho.reshape(2, 2, 2, 2).trace(axis1=0, axis2=2)
    x, y, z = qm.bloch_vector(target)
    assert abs(z) < 1e-6
    assert abs(abs(y) - 1) < 1e-6


def test_determinism_same_seed_same_truth(backend):
    bias = _resonant_bias(backend, 0.5)
    widths = np.arange(4, 84, 4)
    a = backend.rabi_scan(bias, widths, 300, rng_seed=11)
    b = SimulatedBackend(default_truth()).rabi_scan(bias, widths, 300, rng_seed=11)
    assert np.array_equal(a.iq, b.iq)
    c = backend.rabi_scan(bias, widths, 300, rng_seed=12)
    assert not np.array_equal(a.iq, c.iq)


def test_default_truth_loads_from_config(tmp_path):
    d = {"truth": default_truth().to_dict(), "nominal_bias": [QubitBias(5.2, 7.1, 0.5).to_dict()] * 2}
    path = tmp_path / "device.json"
    path.write_text(json.dumps(d))
    b = SimulatedBackend.from_config(path)
    assert b.get_truth_for_test() == DeviceTruth.from_dict(d["truth"])


def test_shot_batch_round_trip(tmp_path, backend):
    batch = backend.rabi_scan(_resonant_bias(backend, 0.5), [4, 8, 12], 50, rng_seed=2)
    back = ShotBatch.from_json(batch.to_json())
    assert np.array_equal(back.iq, batch.iq) and back.bias == batch.bias and back.seed == 2
    for name in ("shots.json", "shots.json.gz"):
        batch.save(tmp_path / name)
        assert np.array_equal(ShotBatch.load(tmp_path / name).iq, batch.iq)
    with pytest.raises(InvalidArgument):
        ShotBatch([4, 8], np.zeros((3, 5, 2)), batch.bias, 0)


def test_no_leakage_means_no_third_cluster():
    b = with_truth(on_resonance_backend(), leak_rate=0.0)
    bias = _resonant_bias(b, 0.9)
    batch = b.rabi_scan(bias, np.arange(4, 204, 4), 400, rng_seed=5)
    report = cluster_report(batch.points(), 5)
    assert min(report.bic, key=report.bic.get) != 3
    assert report.delta_bic[3] > 0


def test_empirical_population_matches_formula():
    b = with_truth(on_resonance_backend(), iq_sigma=0.05)
    truth = b.get_truth_for_test().qubits[0]
    bias = _resonant_bias(b, 0.5)
    assert bias.a_r < truth.leak_amp_threshold
    widths = np.arange(4, 124, 8)
    shots = 10_000
    batch = b.rabi_scan(bias, widths, shots, rng_seed=9)
    p = rabi_population(truth, bias, widths)
    e = truth.readout_floor
    expected = p * (1 - e) + (1 - p) * e
    observed = _nearest_center_bits(batch, truth)
    sigma = np.sqrt(expected * (1 - expected) / shots)
    assert np.all(np.abs(observed - expected) <= 3 * sigma)


def test_contrast_monotone_in_resonator_detuning(backend):
    truth = backend.get_truth_for_test().qubits[0]
    scan = ScanConfig()
    for seed in range(3):
        amps = []
        for df in (0.0, 0.8, 1.6):
            bias = QubitBias(truth.f_q, truth.f_r + df * 1e-3, 0.5, 1.0)
            ref = measure_ground_reference(backend, bias, scan.shots, seed + 100)
            ev = evaluate_bias(bias, backend, scan, ref, seed)
            amps.append(abs(ev.fit.amplitude))
        assert amps[0] >= amps[1] >= amps[2]


def test_population_stays_below_one(backend, gates):
    assert backend.get_truth_for_test().qubits[0].readout_floor > 0
    best = max(
        backend.outcome_probabilities([x180(0, a)])[1] for a in np.linspace(0.9, 1.1, 21) * gates.x180_amp[0]
    )
    assert best < 1.0
    widths = np.arange(0, 400, 4)
    assert rabi_population(backend.get_truth_for_test().qubits[0], _resonant_bias(backend, 0.5), widths).max() < 1


def test_virtual_z_is_exact(backend):
    u = backend._gate_unitary(vz(0, 0.3), 1)
    assert np.allclose(u, qm.rot_z(0.3))
