# %% [markdown]
# # Explaining a drifted window with prototypes
#
# K-Means runs on the raw embeddings of one label for every k from 2 to 10,
# the silhouette picks k, and the rows nearest each centroid become that
# cluster's prototypes. When 20% of a label's rows come from a displaced
# component, one cluster should capture them.

# %%
import numpy as np

from embdrift.explain import cluster_select, extract_prototypes, purity
from embdrift.evaluation import synth_pools

pools = synth_pools(3, 256, 2000, 6.0, seed=8, drift_rows=1000)
rng = np.random.default_rng(0)
clean = pools.nondrift.rows_for(0)
drifted = pools.drift.vectors[pools.drift.predicted_labels == 0]
rows = np.concatenate([clean[rng.choice(len(clean), 800, replace=False)],
                       drifted[rng.choice(len(drifted), 200, replace=False)]])
is_drifted = np.r_[np.zeros(800, bool), np.ones(200, bool)]

# %%
clustering = cluster_select(rows, k_max=10, seed=0)
print("silhouette by k:", {k: round(v, 3) for k, v in clustering.search.items()})
print("chosen k:", clustering.k, "cluster sizes:", clustering.cluster_sizes().tolist())
print("purity:", round(purity(clustering.assignment, is_drifted), 3))

# %%
report = extract_prototypes(rows, clustering, top_n=3, scope=0)
for c, protos in enumerate(report.prototypes):
    share = is_drifted[clustering.assignment == c].mean()
    print(f"cluster {c}: {share:.0%} drifted, prototypes", [(i, bool(is_drifted[i])) for i, _ in protos])
