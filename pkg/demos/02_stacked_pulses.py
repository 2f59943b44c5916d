# # Fine-tuning X90 and X180 with stacked pulses
#
# A single pulse hides a small amplitude error. Repeating the pulse n times
# multiplies the error by n, so scanning the amplitude of a stack of 16 X90
# pulses shows sharp fringes whose center is the right amplitude.

# %%
import numpy as np

from autocal.protocols import stack_scan
from autocal.simdev import X90_LENGTH_NS, QubitBias, SimulatedBackend

backend = SimulatedBackend()
truth = backend.get_truth_for_test()
q = truth.qubits[0]
backend.set_bias(0, QubitBias(q.f_q, q.f_r, backend.biases[0].a_r, 1.0))
exact = 0.25 / (q.rabi_rate * 1e-3 * (X90_LENGTH_NS - q.pulse_edge_ns))
print(f"amplitude giving an exact pi/2 rotation: {exact:.5f}")

# %%
for n in (8, 16, 32):
    scan = stack_scan("X90", n, (0.34, 0.50, 61), backend, shots=1000, seed=n)
    print(f"{n:>2} x X90: optimum {scan.optimum:.5f} ({(scan.optimum - exact) / exact:+.2%}), "
          f"fringe spacing {scan.fringe_spacing:.4f}")

# %% [markdown]
# The fringe spacing halves each time the stack doubles, and the optimum
# settles within a fraction of a percent of the exact amplitude.
# X180 works the same way with an even number of pulses.

# %%
x180 = stack_scan("X180", 8, (0.38, 0.46, 41), backend, seed=9)
print(f"8 x X180: optimum {x180.optimum:.5f}")
