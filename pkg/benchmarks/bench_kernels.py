"""Benchmark the compiled kernels against the NumPy reference.

Times the three hot paths (LSTM cell forward, LSTM cell backward, split
scan) on realistic shapes, plus one end-to-end training epoch comparing
the all-reference fallback against the shipped per-kernel routing. These
measurements are the basis for that routing: the cell backward and split
scan go to the extension, while the cell forward stays on NumPy because
its cost is transcendental-bound and vectorized exp/tanh beat scalar libm
loops. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats N]

The compiled extension must be built (pip install -e .) for the comparison
to be meaningful; without it both columns report the reference backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from coolguard._kernels import _ref

try:
    from coolguard._kernels import _fast
except ImportError:
    _fast = None


def timeit(fn, repeats: int) -> float:
    """Median wall time over `repeats` calls, in seconds."""
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return float(np.median(samples))


def bench_cell_forward(impl, repeats):
    rng = np.random.Generator(np.random.PCG64(1))
    z = rng.normal(size=(64, 4 * 128))
    c_prev = rng.normal(size=(64, 128))
    return timeit(lambda: impl.lstm_cell_forward(z, c_prev), repeats)


def bench_cell_backward(impl, repeats):
    rng = np.random.Generator(np.random.PCG64(2))
    z = rng.normal(size=(64, 4 * 128))
    c_prev = rng.normal(size=(64, 128))
    _, _, cache = impl.lstm_cell_forward(z, c_prev)
    dh = rng.normal(size=(64, 128))
    dc = rng.normal(size=(64, 128))
    return timeit(lambda: impl.lstm_cell_backward(dh, dc, cache, c_prev), repeats)


def bench_split_scan(impl, repeats):
    rng = np.random.Generator(np.random.PCG64(3))
    values = np.sort(rng.normal(size=10_000))
    labels = (rng.random(10_000) < 0.05).astype(np.int64)
    return timeit(lambda: impl.best_split_scan(values, labels, 1.0, 9.0), repeats)


def bench_training_epoch(backend_env: str, repeats: int) -> float:
    """One optimizer epoch over 512 synthetic windows, in a subprocess so
    the backend choice applies at import time. "pure" is the all-reference
    fallback; "compiled" is the shipped routing."""
    import os
    import subprocess
    import sys

    code = (
        "import time, numpy as np\n"
        "from coolguard.lstm import LstmConfig, LstmModel, _Adam, _dropout_masks\n"
        "rng = np.random.Generator(np.random.PCG64(7))\n"
        "x = rng.normal(size=(512, 60, 4)); y = rng.uniform(0, 8, size=512)\n"
        "cfg = LstmConfig(); model = LstmModel(cfg)\n"
        "opt = _Adam(model.theta.size, 1e-3)\n"
        "start = time.perf_counter()\n"
        "for lo in range(0, 512, 64):\n"
        "    masks = _dropout_masks(rng, cfg, 64, 60)\n"
        "    loss, grad = model.loss_and_grad(x[lo:lo+64], y[lo:lo+64], masks=masks)\n"
        "    opt.step(model.theta, grad)\n"
        "print(time.perf_counter() - start)\n"
    )
    env = dict(os.environ, COOLGUARD_PURE="1" if backend_env == "pure" else "0")
    samples = []
    for _ in range(repeats):
        out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                             text=True, env=env, check=True)
        samples.append(float(out.stdout.strip()))
    return float(np.median(samples))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20,
                        help="timing repeats per kernel (median is reported)")
    parser.add_argument("--epoch-repeats", type=int, default=3,
                        help="repeats for the end-to-end epoch benchmark")
    args = parser.parse_args()

    if _fast is None:
        print("compiled extension not built; showing reference backend only\n")
    backends = [("pure", _ref)] + ([("compiled", _fast)] if _fast else [])

    rows = []
    for name, bench in (("lstm_cell_forward  (64x128)", bench_cell_forward),
                        ("lstm_cell_backward (64x128)", bench_cell_backward),
                        ("best_split_scan    (10k pts)", bench_split_scan)):
        timings = {label: bench(impl, args.repeats) for label, impl in backends}
        rows.append((name, timings))

    epoch = {label: bench_training_epoch(label, args.epoch_repeats)
             for label, _ in backends}
    rows.append(("training epoch     (512 windows)", epoch))

    header = f"{'kernel':<34}" + "".join(f"{label:>12}" for label, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, timings in rows:
        line = f"{name:<34}"
        for label, _ in backends:
            line += f"{timings[label] * 1e3:>10.3f}ms"
        if len(backends) == 2:
            line += f"{timings['pure'] / timings['compiled']:>9.2f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
