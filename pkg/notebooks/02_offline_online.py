# %% [markdown]
# # Offline baseline, online monitoring
#
# A baseline is fitted once on historical embeddings: a PCA plus Gaussian for
# the whole batch and one per predicted label. Thresholds come from resampling
# windows of held-out clean data. Each incoming window is then projected,
# summarised and compared, at a cost independent of how much history was used.

# %%
from pathlib import Path

import numpy as np

from embdrift.evaluation import SamplePools, build_stream, generate_pattern, split_batch, synth_pools
from embdrift.monitor import render_monitor
from embdrift.offline import OfflineConfig, estimate_thresholds, fit_baseline
from embdrift.online import run_stream

OUT = Path(__file__).resolve().parent / "_output" / "02"

pools = synth_pools(n_labels=3, d=128, rows_per_label=6000, drift_shift=8.0, seed=1, drift_rows=3000)
historical, threshold_rows, clean = split_batch(pools.nondrift, [6000, 6000, 6000], seed=2)
config = OfflineConfig(d_prime=24, d_prime_label=12, n_th=2000, m_w=500, seed=3)

baseline = fit_baseline(historical, config)
thresholds = estimate_thresholds(baseline, threshold_rows)
print("per-batch threshold:", round(thresholds.t_batch, 4))
print("per-label thresholds:", {k: round(v, 4) for k, v in thresholds.t_label.items()})

# %% [markdown]
# A stream with a drift onset halfway through: 30 clean windows, then 30 where
# 30% of the rows come from the displaced component.

# %%
schedule = generate_pattern("sudden", total=60, onset=30, level=30)
windows, truth = build_stream(SamplePools(clean, pools.drift), schedule, 500, seed=4)
log = run_stream(baseline, thresholds, windows)
flags = log.batch_flags()
print("flagged before onset:", int(flags[:30].sum()), "after onset:", int(flags[30:].sum()))
print("labels flagged in the last window:", log.reports[-1].drifted_labels)

# %% [markdown]
# The monitor export writes the curve table and two SVG charts.

# %%
paths = render_monitor(log, OUT)
for name, path in paths.items():
    print(name, "->", path.name)
