# %% [markdown]
# # Fréchet distance between Gaussians
#
# The detector summarises a set of embeddings by a mean and a covariance and
# compares two such summaries with the Fréchet distance
# ``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)``.
# In one dimension this collapses to ``(mu_a - mu_b)^2 + (s_a - s_b)^2``.

# %%
import numpy as np

from embdrift import GaussianSummary, estimate_gaussian, fdd

a = GaussianSummary(np.array([0.0]), np.array([[1.0]]), 100)
b = GaussianSummary(np.array([2.0]), np.array([[9.0]]), 100)
print("fdd:", fdd(a, b), "closed form:", (0 - 2) ** 2 + (1 - 3) ** 2)

# %% [markdown]
# Sample estimates converge on the population distance as the sample grows,
# and the distance between two samples of the *same* distribution shrinks
# towards zero at a rate of roughly ``d^2 / n``.

# %%
rng = np.random.default_rng(0)
d = 16
shift = np.zeros(d)
shift[0] = 1.0
for n in (100, 1_000, 10_000):
    x = rng.standard_normal((n, d))
    y = rng.standard_normal((n, d))
    z = rng.standard_normal((n, d)) + shift
    same = fdd(estimate_gaussian(x), estimate_gaussian(y))
    moved = fdd(estimate_gaussian(x), estimate_gaussian(z))
    print(f"n={n:>6}: same distribution {same:.4f}, mean shifted by 1 {moved:.4f}")

# %% [markdown]
# Scale changes register too, even with identical means.

# %%
x = rng.standard_normal((5000, d))
for scale in (1.0, 1.2, 1.5, 2.0):
    print(f"scale {scale}: {fdd(estimate_gaussian(x), estimate_gaussian(scale * rng.standard_normal((5000, d)))):.3f}")
