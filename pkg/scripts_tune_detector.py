"""Grid over generator knobs: find defaults satisfying ordering + F1 + stats."""
import dataclasses
import itertools

import numpy as np

from coolguard.simgen import SimConfig, generate_dataset, leak_flags
from coolguard import forest


def stats_ok(x, flags):
    p, f, h, t = x.T
    lf = flags.astype(float)

    def pearson(a, b):
        ac = a - a.mean(); bc = b - b.mean()
        return float((ac * bc).sum() / np.sqrt((ac * ac).sum() * (bc * bc).sum()))

    def cohen(a, b):
        na, nb = len(a), len(b)
        sp = np.sqrt(((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2))
        return (a.mean() - b.mean()) / sp

    r_ph = pearson(p, h)
    r_hl = pearson(h, lf)
    d_p = abs(cohen(p[flags], p[~flags]))
    d_h = abs(cohen(h[flags], h[~flags]))
    d_t = abs(cohen(t[flags], t[~flags]))
    ok = (-0.7 <= r_ph <= -0.3) and r_hl >= 0.5 and d_p > 1 and d_h > 1 and d_t < 0.3
    return ok, dict(r_ph=round(r_ph, 3), r_hl=round(r_hl, 3), d_p=round(d_p, 2),
                    d_h=round(d_h, 2), d_t=round(d_t, 3))


for jump_p, cap_p, turb, jump_h in itertools.product(
    (0.50, 0.55, 0.60), (0.35, 0.40), (2.0, 3.0), (0.85, 0.90)
):
    cfg = SimConfig(
        onset_jump={"pressure": jump_p, "humidity": jump_h},
        precursor_cap={"pressure": cap_p, "flow": 0.10, "humidity": 0.15},
        flow_turbulence=turb,
    )
    readings, events = generate_dataset(cfg)
    flags = np.array(leak_flags(readings, events))
    x = np.array([r.channel_values() for r in readings])
    model = forest.fit(x, flags, n_trees=60)
    imp = forest.feature_importance(model)
    order_ok = imp["humidity"] > imp["pressure"] > imp["flow"] > imp["temperature"]
    margin = min(imp["humidity"] - imp["pressure"], imp["pressure"] - imp["flow"])
    s_ok, s = stats_ok(x, flags)
    tag = "ORDER" if order_ok else "  no "
    tag += " STATS" if s_ok else " !stat"
    print(f"jp={jump_p} cp={cap_p} tb={turb} jh={jump_h}: {tag} "
          f"h={imp['humidity']:.3f} p={imp['pressure']:.3f} f={imp['flow']:.3f} "
          f"t={imp['temperature']:.3f} margin={margin:+.3f} {s}")
