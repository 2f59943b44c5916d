"""The ten acceptance criteria, each at its stated tolerance and runtime.

Every test prints one ``ACCEPTANCE <n> PASS|FAIL`` line (shown even under
output capture) before asserting.
"""

import ast
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import expit

import autocal
from autocal import qmatrix as qm
from autocal import rb
from autocal.autorabi import Brackets, ScanConfig, autorabi, loss_total
from autocal.cli import main
from autocal.clustering import cluster_report, delta_bic
from autocal.config import RunConfig
from autocal.constants import CNOT_CONSTRAINT_SUM, LossConstants, irb_prefactor, sigmoid
from autocal.fitters import RabiFit
from autocal.protocols import calibrate_cnot, cr_amplitude_sweep, full_xy_fit, stack_scan
from autocal.simdev import QubitBias, SimulatedBackend
from autocal.store import STORE_ENV, RecordStore
from conftest import archetype, on_resonance_backend, truth_gate_set
from test_protocols import _exact_r, _pi_half_amp, _synthetic_curve, _wrapped

SRC = Path(autocal.__file__).parent


@pytest.fixture
def report(capsys):
    def _report(n: int, ok: bool, detail: str, elapsed: float, limit: float):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail} [{elapsed:.1f} s, limit {limit:.0f} s]")
        assert ok, detail

    return _report


def test_1_loss_formula(report):
    t0 = time.time()
    clean = {1: 1e6, 3: 1e6, 4: 1e6}

    def fit(amp=0.5, t_x90=32.0):
        return RabiFit(0.5, amp, 0.001, 1 / (4 * t_x90), -np.pi / 2, 1.0, t_x90)

    got = [loss_total(fit(), clean).l_tot, loss_total(fit(amp=0.53), clean).l_tot,
           loss_total(fit(t_x90=36.0), clean).l_tot]
    err = max(abs(g - e) for g, e in zip(got, (1.0, 2.0, 2.0)))
    report(1, err <= 1e-12, f"hand cases {got}, max error {err:.1e}", time.time() - t0, 1)


def test_2_round_trip(report):
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 1.0
    for t1, t2, t4 in rng.uniform(-2 * np.pi, 2 * np.pi, size=(1000, 3)):
        a = qm.CnotAngles.constrained(t1, t2, t4)
        worst = min(worst, qm.phase_overlap(qm.cnot_from_cr(qm.cr_from_cnot(a), a.correction()), qm.CNOT))
    report(2, worst >= 1 - 1e-9, f"worst overlap 1 - {1 - worst:.1e} over 1000 tuples", time.time() - t0, 1)


def test_3_bic_model_selection(report):
    t0 = time.time()
    wrong = []
    for true_k in (1, 2, 3):
        for seed in range(20):
            points = archetype(true_k, seed, n=2400)
            bics = cluster_report(points, rng_seed=seed).bic
            if min(bics, key=bics.get) != true_k:
                wrong.append((true_k, seed))
    report(3, not wrong, f"arg-min BIC = true k on {60 - len(wrong)}/60 datasets; misses {wrong}",
           time.time() - t0, 30)


def test_4_autorabi_convergence(report):
    t0 = time.time()
    backend = SimulatedBackend()
    truth = backend.get_truth_for_test().qubits[0]
    a0 = 1 / (128 * truth.rabi_rate * 1e-3)  # T_X90 = 32 ns on resonance
    initial = QubitBias(truth.f_q + 1e-3, truth.f_r - 1e-3, a0 + 0.1, 1.0)
    scan = ScanConfig(shots=400, n_widths=50)
    rows = []
    for seed in range(10):
        r = autorabi(initial, backend, Brackets(2e-3, 2e-3, 0.3), budget=40, seed=seed, scan=scan)
        dfq = abs(r.bias.f_q - truth.f_q) * 1e6
        rows.append((dfq, r.initial_loss.l_tot / r.loss.l_tot))
    fq_ok = sum(d <= 100 for d, _ in rows)
    loss_ok = sum(ratio >= 3 for _, ratio in rows)
    both = sum(d <= 100 and ratio >= 3 for d, ratio in rows)
    detail = (f"f_q within 100 kHz {fq_ok}/10, loss <= 1/3 of initial {loss_ok}/10, both {both}/10; "
              f"|df_q| kHz = {[round(d) for d, _ in rows]}")
    report(4, both >= 9, detail, time.time() - t0, 300)


def test_5_stacking(report):
    t0 = time.time()
    backend = on_resonance_backend()
    truth = truth_gate_set(backend).x90_amp[0]
    scan16 = stack_scan("X90", 16, (0.34, 0.50, 61), backend, shots=1000, seed=5)
    scan32 = stack_scan("X90", 32, (0.34, 0.50, 61), backend, shots=1000, seed=5)
    rel = abs(scan16.optimum - truth) / truth
    ratio = scan32.fringe_spacing / scan16.fringe_spacing
    ok = rel < 0.005 and abs(ratio - 0.5) < 0.025
    report(5, ok, f"amplitude error {rel:.2%}, fringe spacing ratio 32/16 = {ratio:.3f}", time.time() - t0, 60)


def test_6_cr_sweep(report):
    t0 = time.time()
    backend = on_resonance_backend()
    gates = truth_gate_set(backend)
    sweep = cr_amplitude_sweep(backend, gates, seed=6)
    truth = _pi_half_amp(backend)
    # one pulse has a single |R| peak in the coarse range; three pulses also peak
    # at a third of and five thirds of it, so the 3-pulse brute force stays near the peak
    dense = np.linspace(0.05, 0.95, 901)
    peak1 = dense[np.argmax([_exact_r(backend, gates, a, 1) for a in dense])]
    window = np.linspace(peak1 - 0.06, peak1 + 0.06, 601)
    brute = window[np.argmax([_exact_r(backend, gates, a, 3) for a in window])]
    e_truth = abs(sweep.optimum - truth) / truth
    e_brute = abs(sweep.optimum - brute) / brute
    report(6, e_truth < 0.01 and e_brute < 0.01,
           f"fine optimum {sweep.optimum:.4f}: {e_truth:.2%} from truth, {e_brute:.2%} from dense sweep",
           time.time() - t0, 120)


def test_7_full_xy_fit(report):
    t0 = time.time()
    theta = (0.4, 5.9, 2 * np.pi - 5.9, 0.25)
    fit = full_xy_fit(_synthetic_curve(theta))
    got = np.array([fit.fit_angles.theta1, fit.fit_angles.theta2, fit.fit_angles.theta4])
    synth_err = float(np.max(np.abs(got - (0.4, 5.9 - 2 * np.pi, 0.25))))

    backend = on_resonance_backend()
    gates = truth_gate_set(backend)
    cal = calibrate_cnot(backend, gates, shots=2000, seed=7, cr_amp=_pi_half_amp(backend))
    verify = float(np.max(np.abs(_wrapped(cal.verification.fit_angles))))

    cr_u = qm.cr_from_cnot(theta)
    u1 = qm.cnot_from_cr(cr_u, fit.primary)
    u2 = qm.cnot_from_cr(cr_u, fit.half_pi)
    phase = abs(abs(qm.global_phase(u1, u2)) - np.pi / 2)
    branches = min(qm.phase_overlap(u1, qm.CNOT), qm.phase_overlap(u2, qm.CNOT))
    ok = synth_err < 1e-3 and verify < 0.03 and phase < 1e-3 and branches > 1 - 1e-6
    report(7, ok, f"self-synthesis error {synth_err:.1e} rad, verification max |theta_f| {verify:.4f} rad, "
                  f"branch phase gap pi/2 {phase:+.1e}", time.time() - t0, 120)


def test_8_rb_oracles(report):
    t0 = time.time()
    lengths = {1: [1, 10, 25, 50, 100], 2: [1, 3, 6, 10, 16, 24]}
    target = {1: "X90", 2: "CNOT"}
    misses = []
    for n in (1, 2):
        d = 2**n
        depol = rb.NoiseChannel(n, rb.NoiseModel(depolarizing=0.01))
        coherent = rb.NoiseChannel(n, rb.NoiseModel(overrotation=0.03))
        for seed in range(20):
            s = rb.srb(depol, lengths[n], circuits=20, shots=1000, rng=1000 + seed)
            if abs(s.decay - 0.99) > 3 * s.decay_se:
                misses.append(("SRB", n, seed))
            i = rb.irb(depol, target[n], s, circuits=20, shots=1000, rng=2000 + seed,
                       target_noise=rb.NoiseModel(depolarizing=0.02))
            if abs(i.gate_infidelity - irb_prefactor(d) * 0.02) > 3 * i.gate_infidelity_se:
                misses.append(("IRB", n, seed))
            x = rb.xrb(depol, lengths[n], circuits=10, rng=3000 + seed)
            if abs(x.unitarity - 0.99**2) > 3 * x.unitarity_se + 1e-9:
                misses.append(("XRB depolarizing", n, seed))
            xc = rb.xrb(coherent, lengths[n], circuits=10, rng=3000 + seed)
            if abs(xc.unitarity - 1) > 3 * xc.unitarity_se + 1e-9:
                misses.append(("XRB coherent", n, seed))
    report(8, not misses, f"SRB/IRB/XRB oracles within 3 sigma, 20 seeds x 2 sizes; misses {misses}",
           time.time() - t0, 300)


def test_9_pipeline_determinism(report, tmp_path, monkeypatch):
    t0 = time.time()
    monkeypatch.delenv(STORE_ENV, raising=False)
    codes, payloads = [], []
    for run in ("a", "b"):
        out = tmp_path / run
        codes.append(main(["pipeline", "--seed", "11", "--out", str(out)]))
        records = RecordStore(out / "records.jsonl").records()
        payloads.append([(r.key, r.version, r.payload_bytes()) for r in records])
    same = payloads[0] == payloads[1]
    report(9, codes == [0, 0] and same and len(payloads[0]) > 0,
           f"exit codes {codes}, {len(payloads[0])} records, payloads byte-identical: {same}",
           time.time() - t0, 600)


def _literals(node) -> list:
    return [n.value for n in ast.walk(node)
            if isinstance(n, ast.Constant) and isinstance(n.value, (int, float)) and not isinstance(n.value, bool)]


def _functions(tree) -> dict:
    return {n.name: n for n in ast.walk(tree) if isinstance(n, (ast.FunctionDef, ast.ClassDef))}


def test_10_constant_audit(report):
    t0 = time.time()
    problems = []
    trees = {p.name: ast.parse(p.read_text()) for p in sorted(SRC.glob("*.py"))}

    # each named loss constant is defined once, in LossConstants, with the value the loss formulas use
    expected = {"amp_target": 0.5, "amp_scale": 0.03, "offset_target": 0.5, "offset_scale": 0.05,
                "tx90_target_ns": 32.0, "tx90_scale_ns": 4.0, "bic_term_scale": 0.5, "bic_divisor": 10.0}
    defs = {}
    for name, tree in trees.items():
        for cls in (n for n in ast.walk(tree) if isinstance(n, ast.ClassDef)):
            for stmt in cls.body:
                if isinstance(stmt, ast.AnnAssign) and stmt.target.id in expected:
                    defs.setdefault(stmt.target.id, []).append((name, cls.name, ast.literal_eval(stmt.value)))
    for key, value in expected.items():
        found = defs.get(key, [])
        if len(found) != 1 or found[0][:2] != ("constants.py", "LossConstants") or found[0][2] != value:
            problems.append(f"{key}: {found}")

    # the formula code carries no numeric literal of its own
    formula_code = [("autorabi.py", "loss_total"), ("clustering.py", "delta_bic"), ("rb.py", "irb"),
                    ("qmatrix.py", "constrained"), ("constants.py", "irb_prefactor")]
    for mod, fn in formula_code:
        floats = [v for v in _literals(_functions(trees[mod])[fn]) if isinstance(v, float) or v in (10, 32)]
        if floats:
            problems.append(f"{mod}:{fn} has literals {floats}")

    # single definitions of the sigmoid, the theta2 + theta3 constraint and the IRB prefactor
    counts = {"sigmoid": 0, "irb_prefactor": 0, "CNOT_CONSTRAINT_SUM": 0}
    for tree in trees.values():
        for n in ast.walk(tree):
            if isinstance(n, ast.FunctionDef) and n.name in counts:
                counts[n.name] += 1
            if isinstance(n, ast.Assign) and any(getattr(t, "id", None) == "CNOT_CONSTRAINT_SUM" for t in n.targets):
                counts["CNOT_CONSTRAINT_SUM"] += 1
    if counts != {"sigmoid": 1, "irb_prefactor": 1, "CNOT_CONSTRAINT_SUM": 1}:
        problems.append(f"definition counts {counts}")
    if any(0.75 in _literals(t) for t in trees.values()):
        problems.append("literal 3/4 outside irb_prefactor")

    # the definitions match the formulas
    x = np.linspace(-40, 40, 161)
    if not np.allclose(sigmoid(x), expit(x), rtol=0, atol=1e-15):
        problems.append("sigmoid is not 1/(1 + exp(-x))")
    if CNOT_CONSTRAINT_SUM != 2 * np.pi or qm.CnotAngles.constrained(0.1, 0.7, 0.2).theta3 != 2 * np.pi - 0.7:
        problems.append("theta2 + theta3 != 2 pi")
    if irb_prefactor(4) != 0.75 or irb_prefactor(2) != 0.5:
        problems.append("IRB prefactor is not (d - 1)/d")
    if delta_bic({1: 30.0, 2: 10.0}, 1) != 2.0:
        problems.append("delta_BIC divisor is not 10")

    # and they are config-backed: an override changes the loss
    cfg = RunConfig(seed=1, stages={"autorabi": {"loss_constants": {"amp_scale": 0.06}}})
    c = LossConstants.from_mapping(cfg.stage("autorabi")["loss_constants"])
    f = RabiFit(0.5, 0.53, 0.001, 1 / 128, -np.pi / 2, 1.0, 32.0)
    if loss_total(f, {1: 1e6, 3: 1e6, 4: 1e6}, c).l_tot != pytest.approx(1.25, abs=1e-12):
        problems.append("loss constants override not honoured")

    report(10, not problems, f"constant audit problems: {problems or 'none'}", time.time() - t0, 10)
