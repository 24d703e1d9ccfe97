# %% [markdown]
# # Distance choice and drift geometry
#
# The same severity sweep (0, 5, 10, 15, 20% drifted rows; 40 windows per
# level; one threshold run) with each distance. A second block repeats FDD
# with the drift component displaced orthogonally to all label means rather
# than outward from its host label. Most of that displacement falls outside
# the 32-dimensional PCA subspace fitted on clean data, so low severities are
# much harder to see.

# %%
from embdrift.evaluation import SamplePools, run_severity_sweep, split_batch, synth_pools
from embdrift.offline import OfflineConfig, fit_baseline

config = OfflineConfig(d_prime=32, d_prime_label=16, n_th=2000, m_w=1000, seed=0)


def sweep(direction, metric):
    pools = synth_pools(3, 256, 12_000, 8.0, seed=1, drift_rows=6000, direction=direction)
    historical, threshold_rows, clean = split_batch(pools.nondrift, [15_000, 9000, 12_000], seed=2)
    baseline = fit_baseline(historical, config)
    result = run_severity_sweep(baseline, threshold_rows, SamplePools(clean, pools.drift), config,
                                windows_per_level=40, runs=1, seed=3, metric=metric)
    acc = {int(k): round(v, 2) for k, v in result.scores.accuracy.items()}
    print(f"{direction:<10} {metric:<13} accuracy {acc}  H_DD {result.scores.h_dd:.3f}")


# %%
for metric in ("fdd", "mahalanobis", "kl", "js", "bhattacharyya"):
    sweep("radial", metric)

# %%
sweep("orthogonal", "fdd")
