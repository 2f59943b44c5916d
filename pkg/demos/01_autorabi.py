# # Finding a qubit's drive settings from Rabi scans
#
# A Rabi scan drives the qubit for increasing pulse widths and reads out a
# cloud of IQ points per width. autoRabi turns each scan into one number, the
# loss, and lets a derivative-free optimizer move the three bias settings
# (f_q, f_r, A_R) until the loss is low.

# %%
import numpy as np

from autocal.autorabi import Brackets, ScanConfig, autorabi, evaluate_bias, measure_ground_reference
from autocal.clustering import cluster_report
from autocal.simdev import QubitBias, SimulatedBackend

backend = SimulatedBackend()
truth = backend.get_truth_for_test().qubits[0]
a_32ns = 1 / (128 * truth.rabi_rate * 1e-3)  # amplitude that makes X90 last 32 ns
print(f"hidden f_q = {truth.f_q:.6f} GHz, f_r = {truth.f_r:.6f} GHz")

# %% [markdown]
# ## The loss at and around the right settings
#
# At the truth the fitted oscillation matches every target, so only the
# reduced chi-square is left (about 1). A detuned readout
# shrinks the IQ separation and the fitted contrast, and the loss grows.

# %%
scan = ScanConfig()
for label, bias in [
    ("truth", QubitBias(truth.f_q, truth.f_r, a_32ns, 1.0)),
    ("f_r - 1.8 MHz", QubitBias(truth.f_q, truth.f_r - 1.8e-3, a_32ns, 1.0)),
    ("A_R + 0.1", QubitBias(truth.f_q, truth.f_r, a_32ns + 0.1, 1.0)),
]:
    ref = measure_ground_reference(backend, bias, scan.shots, seed=1)
    ev = evaluate_bias(bias, backend, scan, ref, seed=0)
    print(f"{label:>14}: L_tot = {ev.loss.l_tot:7.2f}  (T_X90 = {ev.fit.t_x90:5.1f} ns, |A| = {abs(ev.fit.amplitude):.3f})")

# %% [markdown]
# ## Counting clusters with BIC
#
# All IQ points of a scan are fitted with 1 to 4 Gaussian components. Two
# components (ground and excited) should win; a third one means leakage.

# %%
batch = backend.rabi_scan(QubitBias(truth.f_q, truth.f_r, a_32ns, 1.0), scan.widths, scan.shots, rng_seed=2)
report = cluster_report(batch.points())
print({k: round(v, 1) for k, v in report.bic.items()}, "-> best k =", min(report.bic, key=report.bic.get))

# %% [markdown]
# ## The optimizer
#
# Starting 1 MHz off in both frequencies and 0.1 high in amplitude, a short
# run already cuts the loss several fold. The readout frequency and the
# amplitude move most; the loss is nearly flat in f_q at this drive strength.

# %%
start = QubitBias(truth.f_q + 1e-3, truth.f_r - 1e-3, a_32ns + 0.1, 1.0)
result = autorabi(start, backend, Brackets(2e-3, 2e-3, 0.3), budget=20, seed=3)
print(f"loss {result.initial_loss.l_tot:.2f} -> {result.loss.l_tot:.2f} in {len(result.evaluations)} scans")
print(f"f_q off by {(result.bias.f_q - truth.f_q) * 1e6:+.0f} kHz, f_r off by {(result.bias.f_r - truth.f_r) * 1e6:+.0f} kHz, "
      f"A_R off by {result.bias.a_r - a_32ns:+.3f}")
