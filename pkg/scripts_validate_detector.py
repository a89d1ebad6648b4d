"""Scratch: re-verify detector + dataset invariants after generator change."""
import numpy as np

from coolguard.simgen import SimConfig, generate_dataset, leak_flags
from coolguard import forest
from coolguard.analytics import pearson, welch_t, cohen_d

cfg = SimConfig()
readings, events = generate_dataset(cfg)
flags = leak_flags(readings, events)
x = np.array([[r.pressure, r.flow, r.humidity, r.temperature] for r in readings])
y = np.array(flags, dtype=bool)
print("leak fraction:", y.mean(), "episodes:", len(events))
print("onsets:", [(e.onset - cfg.start_ns) // 60_000_000_000 for e in events])
print("severities:", [round(e.severity, 3) for e in events])

leak, norm = x[y], x[~y]
names = ["pressure", "flow", "humidity", "temperature"]
for i, n in enumerate(names):
    t, p = welch_t(leak[:, i], norm[:, i])
    d = cohen_d(leak[:, i], norm[:, i])
    print(f"{n:12s} d={d:+.3f} welch_p={p:.3e}")
print("r(pressure, humidity):", pearson(x[:, 0], x[:, 2]))
print("r(humidity, leak):", pearson(x[:, 2], y.astype(float)))

model = forest.fit(x, y.astype(np.int8))
imp = forest.feature_importance(model)
print("importances:", {k: round(v, 3) for k, v in imp.items()})
order = imp["humidity"] > imp["pressure"] > imp["flow"] > imp["temperature"]
print("ordering h>p>f>t:", order, " train F1:", round(model.train_f1, 4))
cv = forest.cross_val_f1(x, y.astype(np.int8), folds=5, n_trees=50)
print("cv F1 (50 trees):", round(cv, 4))
ab = forest.ablate(("pressure", "humidity"), x, y.astype(np.int8), folds=5, n_trees=50)
print("ablate p+h (50 trees):", round(ab, 4))
abt = forest.ablate(("temperature",), x, y.astype(np.int8), folds=5, n_trees=50)
print("ablate temp-only:", round(abt, 4))
