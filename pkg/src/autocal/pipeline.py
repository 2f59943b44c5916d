"""The calibration stages as functions of (config, record store).

Every stage reads its prerequisites from the store, runs one protocol
against a backend built from the config, writes JSON/CSV artifacts under
``out_dir/<stage>`` and appends an updated record. Stage order:
autorabi -> finetune -> crsweep -> xyfit -> rb.
"""

from __future__ import annotations

import logging
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import qmatrix as qm
from .artifacts import write_json
from .autorabi import Brackets, ScanConfig, autorabi
from .config import RunConfig
from .constants import LossConstants, irb_prefactor
from .errors import DependencyError
from .protocols import GateSet, calibrate_cnot, cr_amplitude_sweep, stack_scan
from .rb import BackendChannel, NoiseChannel, NoiseModel, irb, srb, xrb
from .simdev import X90_LENGTH_NS, QubitBias, SimulatedBackend, default_nominal_biases, load_device_config
from .store import RecordStore

log = logging.getLogger(__name__)

STAGES = ("autorabi", "finetune", "crsweep", "xyfit", "rb")
PAIR = "q0-q1"


def stage_seed(cfg: RunConfig, stage: str, index: int = 0) -> int:
    """Independent, reproducible seed per (run seed, stage, qubit)."""
    ss = np.random.SeedSequence([cfg.seed, STAGES.index(stage), index])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def provenance(cfg: RunConfig, stage: str, index: int = 0) -> dict:
    seed = stage_seed(cfg, stage, index)
    return {
        "run_id": f"{stage}-{cfg.fingerprint()}-{index}",
        "seed": seed,
        "config": cfg.fingerprint(),
        "software_version": __version__,
    }


def make_backend(cfg: RunConfig) -> SimulatedBackend:
    if cfg.device:
        truth, biases = load_device_config(cfg.device)
        return SimulatedBackend(truth, biases)
    return SimulatedBackend()


def nominal_biases(cfg: RunConfig) -> list[QubitBias]:
    if cfg.device:
        return load_device_config(cfg.device)[1]
    return default_nominal_biases()


def _require(store: RecordStore, key: str, stage: str, for_stage: str) -> dict:
    rec = store.latest(key)
    if rec is None or stage not in rec.payload.get("stages", {}):
        raise DependencyError(f"{for_stage} needs a {stage} record for {key}; run `autocal {stage}` first")
    return rec.payload


def _backend_with_records(cfg: RunConfig, store: RecordStore) -> SimulatedBackend:
    """Backend programmed with the latest calibrated bias of every qubit that has one."""
    backend = make_backend(cfg)
    for q in range(backend.n_qubits):
        rec = store.latest(f"q{q}")
        if rec is not None and "bias" in rec.payload:
            backend.set_bias(q, QubitBias.from_dict(rec.payload["bias"]))
    return backend


def _gates(store: RecordStore, for_stage: str, qubits=(0, 1)) -> GateSet:
    p = [_require(store, f"q{q}", "finetune", for_stage) for q in qubits]
    return GateSet(tuple(r["x90_amp"] for r in p), tuple(r["x180_amp"] for r in p))


def run_autorabi(cfg: RunConfig, store: RecordStore, envelope: dict | None = None) -> list[dict]:
    s = cfg.stage("autorabi")
    backend = make_backend(cfg)
    nominal = nominal_biases(cfg)
    scan = ScanConfig(n_widths=s["n_widths"], width_step_ns=s["width_step_ns"], shots=s["shots"])
    out = []
    for q in cfg.qubits:
        prov = provenance(cfg, "autorabi", q)
        run_dir = Path(cfg.out_dir) / "autorabi" / f"q{q}"
        res = autorabi(
            nominal[q], backend, Brackets(s["fq_bracket_ghz"], s["fr_bracket_ghz"], s["amp_bracket"]),
            budget=s["budget"], seed=prov["seed"], scan=scan,
            constants=LossConstants.from_mapping(s["loss_constants"]), qubit=q, method=s["method"], run_dir=run_dir,
        )
        best = res.best
        summary = {
            "initial_bias": nominal[q].to_dict(),
            "loss": res.loss.l_tot,
            "initial_loss": res.initial_loss.l_tot,
            "n_evaluations": len(res.evaluations),
            "termination": res.trace.reason,
            "fit": best.fit.to_dict() if best.fit else None,
        }
        write_json(run_dir / "result.json", {**res.to_record(), **summary})
        payload = {"key": f"q{q}", "bias": res.bias.to_dict(), "autorabi": summary, "stages": {"autorabi": prov}}
        store.write(f"q{q}", payload, {**(envelope or {}), "started": res.started, "finished": res.finished})
        out.append(payload)
    return out


def run_finetune(cfg: RunConfig, store: RecordStore, envelope: dict | None = None) -> list[dict]:
    s = cfg.stage("finetune")
    backend = _backend_with_records(cfg, store)
    out = []
    for q in cfg.qubits:
        prev = _require(store, f"q{q}", "autorabi", "finetune")
        prov = provenance(cfg, "finetune", q)
        fit = prev["autorabi"]["fit"]
        # autoRabi sets a_r so that the drive reaches pi/2 after t_x90 ~ 32 ns.
        center = prev["bias"]["a_r"] * fit["t_x90"] / X90_LENGTH_NS
        hw, n, shots = s["half_width"], s["points"], s["shots"]
        x90_scan = stack_scan("X90", s["n_stack"], (center - hw, center + hw, n), backend, shots, prov["seed"], q)
        # X180 is twice as long at the same drive rate, so the same amplitude is the first guess.
        c180 = x90_scan.optimum
        x180_scan = stack_scan("X180", s["x180_n_stack"], (c180 - hw, c180 + hw, n), backend, shots, prov["seed"] + 1, q)
        stage_dir = Path(cfg.out_dir) / "finetune"
        x90_scan.write(stage_dir, f"q{q}_x90")
        x180_scan.write(stage_dir, f"q{q}_x180")
        payload = {
            **prev,
            "x90_amp": x90_scan.optimum,
            "x180_amp": x180_scan.optimum,
            "finetune": {"x90_center": center, "n_stack": s["n_stack"], "x180_n_stack": s["x180_n_stack"]},
            "stages": {**prev["stages"], "finetune": prov},
        }
        store.write(f"q{q}", payload, envelope)
        out.append(payload)
    return out


def _qubit_stages(store: RecordStore) -> dict:
    recs = {q: store.latest(f"q{q}").payload for q in (0, 1)}
    return {st: {f"q{q}": recs[q]["stages"][st] for q in (0, 1)} for st in ("autorabi", "finetune")}


def run_crsweep(cfg: RunConfig, store: RecordStore, envelope: dict | None = None) -> dict:
    s = cfg.stage("crsweep")
    gates = _gates(store, "crsweep")
    backend = _backend_with_records(cfg, store)
    prov = provenance(cfg, "crsweep")
    lo, hi, n = s["coarse"]
    sweep = cr_amplitude_sweep(
        backend, gates, (lo, hi, int(n)), (s["fine_half_width"], s["fine_points"]), s["shots"], prov["seed"],
        s["fine_pulses"],
    )
    sweep.write(Path(cfg.out_dir) / "crsweep")
    payload = {
        "key": PAIR,
        "gates": gates.to_dict(),
        "cr_amp": sweep.optimum,
        "crsweep": {"coarse_peak": sweep.coarse_peak, "curvature": sweep.curvature},
        "stages": {**_qubit_stages(store), "crsweep": prov},
    }
    store.write(PAIR, payload, envelope)
    return payload


def run_xyfit(cfg: RunConfig, store: RecordStore, envelope: dict | None = None) -> dict:
    s = cfg.stage("xyfit")
    prev = _require(store, PAIR, "crsweep", "xyfit")
    gates = GateSet.from_dict(prev["gates"])
    backend = _backend_with_records(cfg, store)
    prov = provenance(cfg, "xyfit")
    cal = calibrate_cnot(
        backend, gates, shots=s["shots"], angles_count=s["points"], seed=prov["seed"], tolerance=s["tolerance"],
        max_passes=s["max_passes"], cr_amp=prev["cr_amp"],
    )
    cal.write(Path(cfg.out_dir) / "xyfit")
    payload = {
        **prev,
        "angles": cal.angles.to_dict(),
        "half_pi": cal.half_pi.to_dict(),
        "xyfit": {
            "verification_residual": cal.verification_residual,
            "passes": cal.n_passes,
            "readout_error": list(cal.readout_error),
            "first_fit": cal.first.fit_angles.to_dict(),
        },
        "stages": {**prev["stages"], "xyfit": prov},
    }
    store.write(PAIR, payload, envelope)
    return payload


def _rb_summary(results) -> dict:
    out = {}
    for r in results:
        d = r.dim
        entry = {
            "decay": r.decay, "decay_se": r.decay_se,
            "process_infidelity": r.process_infidelity, "process_infidelity_se": r.process_infidelity_se,
        }
        if r.protocol == "SRB":
            entry["clifford_infidelity"] = irb_prefactor(d) * (1 - r.decay)
            entry["clifford_infidelity_se"] = irb_prefactor(d) * r.decay_se
        if r.gate_infidelity is not None:
            entry.update(gate_infidelity=r.gate_infidelity, gate_infidelity_se=r.gate_infidelity_se,
                         nonphysical=r.nonphysical)
        if r.unitarity is not None:
            entry.update(unitarity=r.unitarity, unitarity_se=r.unitarity_se,
                         stochastic_error=r.stochastic_error, unitary_error=r.unitary_error)
        out[f"{r.protocol}_{r.n_qubits}q"] = entry
    return out


def run_rb(cfg: RunConfig, store: RecordStore, envelope: dict | None = None, inject: str | None = None) -> dict:
    """SRB, IRB and XRB for one qubit (X90) and, with two qubits, the pair (CNOT).

    ``channel = "backend"`` plays the calibrated pulses and needs the xyfit
    record; ``"ideal"`` uses perfect gates. ``inject`` adds a noise channel
    after every Clifford in either case.
    """
    s = cfg.stage("rb")
    noise = NoiseModel.parse(inject if inject is not None else s["inject"])
    prov = provenance(cfg, "rb")
    rng = np.random.default_rng(prov["seed"])
    two_qubit = len(cfg.qubits) == 2
    if s["channel"] == "backend":
        gates = _gates(store, "rb", cfg.qubits)
        prev = _require(store, PAIR, "xyfit", "rb") if two_qubit else None
        backend = _backend_with_records(cfg, store)
        angles = qm.CnotAngles(**{k: prev["angles"][k] for k in ("theta1", "theta2", "theta3", "theta4")}) if prev else None
        channels = [BackendChannel(backend, gates, 1, noise=noise)]
        if two_qubit:
            channels.append(BackendChannel(backend, gates, 2, prev["cr_amp"], angles, noise))
    else:
        prev = None
        channels = [NoiseChannel(1, noise)] + ([NoiseChannel(2, noise)] if two_qubit else [])
    results = []
    for ch in channels:
        lengths = s["lengths_1q"] if ch.n_qubits == 1 else s["lengths_2q"]
        ref = srb(ch, lengths, s["circuits"], s["shots"], rng)
        inter = irb(ch, "X90" if ch.n_qubits == 1 else "CNOT", ref, None, s["circuits"], s["shots"], rng)
        unit = xrb(ch, lengths, s["xrb_circuits"], rng, reference=ref)
        results += [ref, inter, unit]
    stage_dir = Path(cfg.out_dir) / "rb"
    for r in results:
        r.write(stage_dir)
    summary = {"channel": s["channel"], "inject": noise.to_dict(), "results": _rb_summary(results)}
    write_json(stage_dir / "summary.json", summary)
    if prev is not None:
        payload = {**prev, "rb": summary, "stages": {**prev["stages"], "rb": prov}}
        store.write(PAIR, payload, envelope)
    else:
        payload = {"key": "rb-" + s["channel"], "rb": summary, "stages": {"rb": prov}}
        store.write(payload["key"], payload, envelope)
    return payload


RUNNERS = {
    "autorabi": run_autorabi,
    "finetune": run_finetune,
    "crsweep": run_crsweep,
    "xyfit": run_xyfit,
    "rb": run_rb,
}


def run_pipeline(cfg: RunConfig, store: RecordStore, envelope: dict | None = None, inject: str | None = None) -> dict:
    """All stages in order; returns the final pair (or last qubit) record payload."""
    result = None
    for stage in STAGES:
        t0 = time.time()
        env = {**(envelope or {}), "stage": stage}
        if stage == "rb":
            result = run_rb(cfg, store, env, inject)
        elif stage in ("crsweep", "xyfit") and len(cfg.qubits) < 2:
            continue
        else:
            result = RUNNERS[stage](cfg, store, env)
        log.info("%s finished in %.1f s", stage, time.time() - t0)
    return result
