# %% [markdown]
# # Monte Carlo of the nested chain
#
# Every link is retried until it succeeds, each swap waits for its two
# inputs, and a failed swap or post-selection throws the involved pairs away.
# The simulated means test how good the 3/2-per-level estimate is.

# %%
from ensemble_repeater import analytic, chain
from ensemble_repeater.params import RepeaterParams

params = RepeaterParams()
for n in range(4):
    p = params.replace(n=n)
    stats = chain.run_trials(chain.SimConfig(p, trials=2000, seed=n))
    est = analytic.total_time_product(p)
    print(f"n={n}: simulated {stats.mean:.4g} +- {stats.stderr:.2g} s   estimate {est:.4g} s   "
          f"ratio {stats.mean / est:.3f}")

# %% [markdown]
# The estimate treats every wait as exponential, for which the slower of two
# takes 3/2 of the mean. Real waits at the upper levels are sums of many
# attempts and somewhat less spread out, so the slower pair shows up a bit
# earlier and the simulation beats the estimate by a few percent. Shrinking
# all probabilities makes each wait closer to exponential.

# %%
p = params.replace(n=2)
for scale in (1.0, 0.1):
    probs = [scale * x for x in analytic.chain_probabilities(p)]
    stats = chain.run_trials(chain.SimConfig(p, trials=10000, seed=7, probabilities=probs))
    est = analytic.eq3_time(2, p.link_delay, *probs)
    print(f"scale {scale:3.1f}: ratio {stats.mean / est:.3f} +- {stats.stderr / est:.3f}")

# %% [markdown]
# Where does the 3/2 in the source time come from? Two sources must be ready
# at both ends of a link, and the larger of two roughly exponential waits
# has mean 3/2 of one.

# %%
import numpy as np

rng = np.random.default_rng(0)
left = chain.sample_source_time(params, rng, size=20000)
right = chain.sample_source_time(params, rng, size=20000)
print(f"single source {left.mean():.3e} s, slower of two {np.maximum(left, right).mean():.3e} s, "
      f"ratio {np.maximum(left, right).mean() / left.mean():.3f}")
print(f"closed form for the pair wait {analytic.source_prep_time(params):.3e} s")
