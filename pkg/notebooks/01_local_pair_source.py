# %% [markdown]
# # The heralded local pair source
#
# Four ensembles each hold one stored spin excitation. A weak read pulse
# releases a photon from each with probability alpha^2, and a two-photon
# coincidence behind a small interferometer heralds a polarization pair
# stored in the remaining spin waves. Losses leave vacuum and
# single-excitation admixtures, described by three weights.

# %%
import numpy as np

from ensemble_repeater import analytic, fock

alpha2, eta_m, eta_d = 0.2, 0.9, 0.9
eta = eta_m * eta_d
w = analytic.source_weights(alpha2, eta)
print(f"c2 = {w.c2:.5f}  c1 = {w.c1:.5f}  c0 = {w.c0:.6f}")
print(f"c2 + 4 c1 + c0 = {w.total:.15f}")
print(f"c0 c2 - 4 c1^2 = {w.stationarity_defect:.2e}")
print(f"success probability per attempt = {analytic.source_success_prob(alpha2, eta):.5f}")

# %% [markdown]
# The same numbers fall out of an explicit Fock-space calculation: read
# pulses as beamsplitters between spin and photon modes, loss as coupling to
# an environment mode, photon-number-resolving detection as a projection.

# %%
res = fock.run_source_circuit(alpha2, eta_m, eta_d)
print("oracle weights      ", np.round(res.weights.as_tuple(), 6))
print("oracle probability  ", f"{res.probability:.5f}")
print("weight outside span ", f"{res.residual:.1e}")

# %% [markdown]
# Each of the four accepted detector patterns contributes equally; two of
# them need a polarization flip on one ensemble.

# %%
for pattern, part in fock.source_pattern_results(alpha2, eta_m, eta_d).items():
    print(pattern, f"{part.probability:.6f}")

# %% [markdown]
# Reading out more strongly raises the pair probability until it peaks at
# alpha^2 = 1/2, but also lets lost photons leak into the error weights.

# %%
for a2 in (0.05, 0.1, 0.2, 0.3, 0.5):
    w = analytic.source_weights(a2, eta)
    print(f"alpha2={a2:4.2f}  P={analytic.source_success_prob(a2, eta):.4f}  c2={w.c2:.4f}  c0={w.c0:.2e}")
