# # Randomized benchmarking
#
# Random Clifford sequences followed by their inverse return the qubits to
# |0...0>. Errors make the survival probability decay as A p^m with sequence
# length m, and p gives an error rate that does not depend on state
# preparation or measurement.

# %%
import numpy as np

from autocal import rb

lengths_1q = [1, 10, 25, 50, 100]
lengths_2q = [1, 3, 6, 10, 16, 24]

# %% [markdown]
# ## Depolarizing noise: the decay is exactly 1 - eps

# %%
for n, lengths in ((1, lengths_1q), (2, lengths_2q)):
    channel = rb.NoiseChannel(n, rb.NoiseModel(depolarizing=0.01))
    srb = rb.srb(channel, lengths, circuits=20, shots=1000, rng=0)
    print(f"{n}q SRB: p = {srb.decay:.4f} +- {srb.decay_se:.4f} (expected 0.99)")

# %% [markdown]
# ## Interleaving a gate
#
# Putting the gate of interest after every random Clifford and comparing the
# two decays isolates that gate's error: (d - 1)/d (1 - p_IRB / p_SRB).

# %%
for n, lengths, gate in ((1, lengths_1q, "X90"), (2, lengths_2q, "CNOT")):
    channel = rb.NoiseChannel(n, rb.NoiseModel(depolarizing=0.01))
    ref = rb.srb(channel, lengths, circuits=20, shots=1000, rng=1)
    inter = rb.irb(channel, gate, ref, circuits=20, shots=1000, rng=2, target_noise=rb.NoiseModel(depolarizing=0.02))
    d = 2**n
    print(f"{gate}: infidelity {inter.gate_infidelity:.4f} +- {inter.gate_infidelity_se:.4f} "
          f"(injected {(d - 1) / d * 0.02:.4f})")

# %% [markdown]
# ## Coherent or stochastic?
#
# Unitarity u tracks how fast the state's purity decays. A coherent
# over-rotation keeps states pure (u = 1) while still lowering p; depolarizing
# noise gives u = p^2.

# %%
for label, noise in (("over-rotation", rb.NoiseModel(overrotation=0.05)), ("depolarizing", rb.NoiseModel(depolarizing=0.01))):
    channel = rb.NoiseChannel(1, noise)
    ref = rb.srb(channel, lengths_1q, circuits=20, shots=None, rng=3)
    x = rb.xrb(channel, lengths_1q, circuits=10, rng=4, reference=ref)
    print(f"{label:>13}: p = {ref.decay:.5f}, u = {x.unitarity:.5f}, "
          f"stochastic {x.stochastic_error:.2e}, unitary {x.unitary_error:.2e}")
