# %% [markdown]
# # Entanglement swapping keeps the weights
#
# Two links with the same weights are joined by reading out the inner
# ensembles completely and detecting one photon behind each of two
# splitters. For source weights the output weights equal the input weights,
# so every nesting level sees the same state.

# %%
import numpy as np

from ensemble_repeater import analytic, fock
from ensemble_repeater.params import StateWeights

w = analytic.source_weights(0.2, 0.81)
eta_t = np.exp(-62.5 / 44)

link = fock.run_generation_circuit(w, w, 0.81, eta_t)
swap = fock.run_swap_circuit(w, w, 0.81)
print("source weights ", np.round(w.as_tuple(), 6))
print("after link     ", np.round(link.weights.as_tuple(), 6), f"P0 = {link.probability:.5f}")
print("after swap     ", np.round(swap.weights.as_tuple(), 6), f"Pi = {swap.probability:.5f}")

# %% [markdown]
# A generic triple is not preserved: one swap maps it onto the stationary
# family c0 c2 = 4 c1^2, where it then stays.

# %%
state = StateWeights(0.7, 0.05, 0.1)
for step in range(3):
    out = fock.run_swap_circuit(state, state, 0.8)
    print(step, np.round(state.as_tuple(), 5), "->", np.round(out.weights.as_tuple(), 5),
          f"defect {out.weights.stationarity_defect:+.1e}")
    state = out.weights

# %% [markdown]
# Finally the two end ensembles are read out and a photon is required on
# each side, which removes the vacuum and single-excitation parts.

# %%
post = fock.run_postselection_circuit(w, 0.81)
print(f"post-selection probability {post.probability:.5f} = c2 eta^2 = {w.c2 * 0.81**2:.5f}")
