# %% [markdown]
# # Distribution time over distance
#
# The mean time to share one entangled pair across the chain follows from
# the per-stage success probabilities. A factor 3/2 per nesting level
# accounts for waiting on two independent pairs before each swap.

# %%
from ensemble_repeater import analytic
from ensemble_repeater.params import RepeaterParams

params = RepeaterParams()  # 1000 km, 16 links, alpha2 = 0.2, 90% efficiencies
bd = analytic.rate_breakdown(params)
print(f"P0 = {bd.P0:.5f}   Pi = {bd.Pi:.5f}   Ppr = {bd.Ppr:.5f}")
print(f"T_tot = {bd.T_tot_product:.3f} s  (closed form {bd.T_tot_closed:.3f} s)")
print(f"F = {bd.F_final:.4f}")

# %% [markdown]
# Local pair preparation at 60 MHz takes about as long as light needs to
# cross an elementary link, so it cannot simply be ignored.

# %%
print(f"T_source = {bd.T_source:.3e} s   L0/c = {params.link_delay:.3e} s")
slow = params.replace(include_source_prep=True)
print(f"with source time in every cycle: {analytic.total_time_product(slow):.2f} s")

# %% [markdown]
# Direct fiber transmission from a 10 GHz source loses out quickly.

# %%
print(f"{'L (km)':>7} {'direct (s)':>12} {'repeater (s)':>13} {'links':>6}")
rows = analytic.sweep_curves(params, range(400, 1300, 100))
for direct, repeater in zip(rows[::2], rows[1::2]):
    print(f"{direct[0]:7.0f} {direct[3]:12.3e} {repeater[3]:13.3f} {repeater[2]:6d}")

# %% [markdown]
# The readout weight trades speed against fidelity. Without source time the
# closed form prefers the weakest readout; once the source time counts, the
# optimum moves inside the interval.

# %%
for fmin in (0.0, 0.885, 0.9):
    a2, best = analytic.optimize_alpha(params, fmin)
    print(f"F >= {fmin:5.3f}: alpha2 = {a2:.4f}  T = {best.T_tot_product:8.3f} s  F = {best.F_final:.4f}")
a2, best = analytic.optimize_alpha(slow)
print(f"with source time: alpha2 = {a2:.4f}  T = {best.T_tot_product:.3f} s")
