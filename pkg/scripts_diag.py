"""Scratch: where does the test-day forecaster error live?"""
import numpy as np

from coolguard.simgen import SimConfig, generate_dataset
from coolguard.features import fit_norm, make_windows, chronological_split, windows_to_arrays
from coolguard import lstm

cfg = SimConfig()
readings, events = generate_dataset(cfg)
stats = fit_norm(readings[: int((len(readings) - 1440) * 0.8)])
windows, skipped = make_windows(readings, events, stats)
split = chronological_split(windows, holdout_minutes=1440)
model, norm, cal = lstm.load_checkpoint("/tmp/coolguard_ckpt.npz")

for name, part in (("val", split.validation), ("test", split.test)):
    x, y, _ = windows_to_arrays(part)
    pred = model.predict_batch(x)
    err = pred - y
    print(f"--- {name}: n={len(y)}")
    bins = [(0.0, 0.001), (0.001, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0),
            (4.0, 6.0), (6.0, 7.999), (7.999, 8.001)]
    for lo, hi in bins:
        m = (y >= lo) & (y < hi)
        if m.sum():
            print(f"  y in [{lo:5.1f},{hi:5.1f}): n={int(m.sum()):5d} "
                  f"bias={err[m].mean():+7.3f} rmse={np.sqrt((err[m]**2).mean()):6.3f}")

# Compare the descent waveform of the val episode vs the test episode:
# z-scored window-mean per channel at matched ttl.
x_v, y_v, _ = windows_to_arrays(split.validation)
x_t, y_t, _ = windows_to_arrays(split.test)
print("\nchannel window-means at matched ttl (val | test):")
for target in (6.0, 4.0, 2.0, 1.0, 0.5):
    iv = int(np.argmin(np.abs(y_v - target)))
    it = int(np.argmin(np.abs(y_t - target)))
    mv = x_v[iv].mean(axis=0)
    mt = x_t[it].mean(axis=0)
    print(f"  ttl={target:4.1f}h  yv={y_v[iv]:5.2f} yt={y_t[it]:5.2f}  "
          + "  ".join(f"{a:+.2f}|{b:+.2f}" for a, b in zip(mv, mt)))
