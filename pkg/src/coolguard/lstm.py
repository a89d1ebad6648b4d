"""From-scratch stacked LSTM regressor for time-to-leak forecasting.

Two LSTM layers (128 and 64 units by default) feed a linear head that emits
hours-to-leak. Everything is NumPy float64: gate matmuls go through BLAS,
the elementwise cell math goes through the kernel backend, and gradients
come from full backpropagation through the 60-step window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .features import NormStats, windows_to_arrays
from .model import LabeledWindow

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when validation MSE explodes; carries the offending curve."""

    def __init__(self, epochs: list[int], values: list[float], initial: float):
        msg = (
            f"validation MSE exceeded 10x the initial value ({initial:.4f}) "
            f"for epochs {epochs}: {[round(v, 4) for v in values]}"
        )
        super().__init__(msg)
        self.epochs = epochs
        self.values = values
        self.initial = initial


@dataclass(frozen=True)
class LstmConfig:
    input_size: int = 4
    hidden1: int = 128
    hidden2: int = 64
    dropout: float = 0.2
    seed: int = 13


def _layer_sizes(cfg: LstmConfig) -> list[tuple[str, tuple[int, ...]]]:
    h1, h2, d = cfg.hidden1, cfg.hidden2, cfg.input_size
    return [
        ("wx1", (d, 4 * h1)),
        ("wh1", (h1, 4 * h1)),
        ("b1", (4 * h1,)),
        ("wx2", (h1, 4 * h2)),
        ("wh2", (h2, 4 * h2)),
        ("b2", (4 * h2,)),
        ("w_head", (h2,)),
        ("b_head", (1,)),
    ]


class LstmModel:
    """Stacked LSTM with a scalar linear head; parameters live in one flat
    float64 vector so the optimizer and the gradient checker can treat the
    model as a plain function of theta.
    """

    def __init__(self, cfg: LstmConfig = LstmConfig()):
        self.cfg = cfg
        self._spec = _layer_sizes(cfg)
        total = sum(int(np.prod(shape)) for _, shape in self._spec)
        self.theta = np.zeros(total, dtype=np.float64)
        self._views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in self._spec:
            size = int(np.prod(shape))
            self._views[name] = self.theta[offset:offset + size].reshape(shape)
            offset += size
        self._init_weights()

    # -- parameters --------------------------------------------------------

    @property
    def param_count(self) -> int:
        return self.theta.size

    def view(self, name: str) -> np.ndarray:
        return self._views[name]

    def _init_weights(self) -> None:
        rng = np.random.Generator(np.random.PCG64(self.cfg.seed))
        for name, shape in self._spec:
            v = self._views[name]
            if name.startswith("b"):
                v[...] = 0.0
            else:
                fan_in = shape[0] if len(shape) > 1 else shape[0]
                bound = 1.0 / np.sqrt(fan_in)
                v[...] = rng.uniform(-bound, bound, size=shape)
        # Forget-gate bias 1.0 keeps early memory open (gate order i,f,g,o).
        h1, h2 = self.cfg.hidden1, self.cfg.hidden2
        self._views["b1"][h1:2 * h1] = 1.0
        self._views["b2"][h2:2 * h2] = 1.0

    def clone(self) -> "LstmModel":
        other = LstmModel(self.cfg)
        other.theta[...] = self.theta
        return other

    # -- forward / backward -------------------------------------------------

    def _forward(self, x: np.ndarray, masks=None):
        """x (B, T, D) -> (pred (B,), caches for backward)."""
        v = self._views
        batch, steps, _ = x.shape
        h1 = np.zeros((batch, self.cfg.hidden1))
        c1 = np.zeros_like(h1)
        h2 = np.zeros((batch, self.cfg.hidden2))
        c2 = np.zeros_like(h2)
        trace = []
        for t in range(steps):
            x_t = x[:, t, :]
            z1 = x_t @ v["wx1"] + h1 @ v["wh1"] + v["b1"]
            h1_new, c1_new, cache1 = K.lstm_cell_forward(z1, c1)
            h1_drop = h1_new * masks[0][:, t, :] if masks is not None else h1_new
            z2 = h1_drop @ v["wx2"] + h2 @ v["wh2"] + v["b2"]
            h2_new, c2_new, cache2 = K.lstm_cell_forward(z2, c2)
            trace.append((x_t, h1, c1, cache1, h1_drop, h2, c2, cache2))
            h1, c1, h2, c2 = h1_new, c1_new, h2_new, c2_new
        h2_drop = h2 * masks[1] if masks is not None else h2
        pred = h2_drop @ v["w_head"] + v["b_head"][0]
        return pred, (trace, h2_drop, masks)

    def _backward(self, dpred: np.ndarray, fwd_cache) -> np.ndarray:
        v = self._views
        trace, h2_drop, masks = fwd_cache
        grad = np.zeros_like(self.theta)
        g: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in self._spec:
            size = int(np.prod(shape))
            g[name] = grad[offset:offset + size].reshape(shape)
            offset += size

        g["w_head"][...] = h2_drop.T @ dpred
        g["b_head"][0] = dpred.sum()
        dh2 = np.outer(dpred, v["w_head"])
        if masks is not None:
            dh2 = dh2 * masks[1]
        dc2 = np.zeros_like(dh2)
        dh1 = np.zeros((dpred.size, self.cfg.hidden1))
        dc1 = np.zeros_like(dh1)

        for t in range(len(trace) - 1, -1, -1):
            x_t, h1_prev, c1_prev, cache1, h1_drop, h2_prev, c2_prev, cache2 = trace[t]
            dz2, dc2 = K.lstm_cell_backward(dh2, dc2, cache2, c2_prev)
            g["wx2"] += h1_drop.T @ dz2
            g["wh2"] += h2_prev.T @ dz2
            g["b2"] += dz2.sum(axis=0)
            dh1_drop = dz2 @ v["wx2"].T
            if masks is not None:
                dh1_drop = dh1_drop * masks[0][:, t, :]
            dz1, dc1 = K.lstm_cell_backward(dh1 + dh1_drop, dc1, cache1, c1_prev)
            g["wx1"] += x_t.T @ dz1
            g["wh1"] += h1_prev.T @ dz1
            g["b1"] += dz1.sum(axis=0)
            dh1 = dz1 @ v["wh1"].T
            dh2 = dz2 @ v["wh2"].T
        return grad

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray, masks=None) -> tuple[float, np.ndarray]:
        """Mean squared error and its full parameter gradient."""
        pred, cache = self._forward(x, masks=masks)
        err = pred - y
        loss = float(np.mean(err * err))
        dpred = 2.0 * err / y.size
        return loss, self._backward(dpred, cache)

    def loss(self, x: np.ndarray, y: np.ndarray, masks=None) -> float:
        pred, _ = self._forward(x, masks=masks)
        err = pred - y
        return float(np.mean(err * err))

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        """Inference on (n, 60, D); dropout off, negatives clamped to 0."""
        if x.ndim != 3 or x.shape[2] != self.cfg.input_size:
            raise ValueError(f"expected (n, T, {self.cfg.input_size}) batch, got {x.shape}")
        preds = []
        for lo in range(0, x.shape[0], 256):
            pred, _ = self._forward(x[lo:lo + 256])
            preds.append(pred)
        return np.maximum(np.concatenate(preds), 0.0)


def predict(model: LstmModel, window) -> float:
    """Point estimate in hours for one normalized 60-minute window."""
    feats = window.features if isinstance(window, LabeledWindow) else np.asarray(window)
    if feats.shape != (60, model.cfg.input_size):
        raise ValueError(f"expected (60, {model.cfg.input_size}) window, got {feats.shape}")
    pred, _ = model._forward(feats[np.newaxis, :, :])
    return float(max(pred[0], 0.0))


def _dropout_masks(rng: np.random.Generator, cfg: LstmConfig, batch: int, steps: int):
    keep = 1.0 - cfg.dropout
    if keep >= 1.0:
        return None
    m1 = (rng.random((batch, steps, cfg.hidden1)) < keep) / keep
    m2 = (rng.random((batch, cfg.hidden2)) < keep) / keep
    return (m1, m2)


class _Adam:
    def __init__(self, size: int, lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_mse: float
    val_mse: float


def train(
    train_windows: Sequence[LabeledWindow],
    val_windows: Sequence[LabeledWindow],
    lr: float = 0.001,
    max_epochs: int = 50,
    patience: int = 5,
    batch_size: int = 64,
    cfg: LstmConfig = LstmConfig(),
    log=None,
) -> tuple[LstmModel, list[EpochStats]]:
    """Adam + early stopping (restore best); aborts on divergence.

    The learning rate halves after every second epoch without validation
    improvement, restarting from the best weights so far. Deterministic for
    a fixed cfg.seed: init, shuffling, and dropout all draw from seeded
    generators.
    """
    if len(train_windows) < 100:
        raise ValueError("need at least 100 training windows")
    x_train, y_train, _ = windows_to_arrays(train_windows)
    x_val, y_val, _ = windows_to_arrays(val_windows)

    model = LstmModel(cfg)
    opt = _Adam(model.theta.size, lr)
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, 1))))
    drop_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, 2))))

    curve: list[EpochStats] = []
    best_val = np.inf
    best_theta = model.theta.copy()
    stale = 0
    initial_val: float | None = None
    diverged_epochs: list[int] = []
    diverged_values: list[float] = []

    n = x_train.shape[0]
    for epoch in range(1, max_epochs + 1):
        order = shuffle_rng.permutation(n)
        train_loss_sum = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            xb, yb = x_train[idx], y_train[idx]
            masks = _dropout_masks(drop_rng, cfg, xb.shape[0], xb.shape[1])
            loss, grad = model.loss_and_grad(xb, yb, masks=masks)
            opt.step(model.theta, grad)
            train_loss_sum += loss * idx.size
        train_mse = train_loss_sum / n
        val_pred = model.predict_batch(x_val)
        val_mse = float(np.mean((val_pred - y_val) ** 2))
        curve.append(EpochStats(epoch, train_mse, val_mse))
        if log is not None:
            log(f"epoch {epoch:02d} train_mse={train_mse:.4f} val_mse={val_mse:.4f}")

        if initial_val is None:
            initial_val = val_mse
        elif val_mse > 10.0 * initial_val:
            diverged_epochs.append(epoch)
            diverged_values.append(val_mse)
            if len(diverged_epochs) >= 3:
                raise TrainingDiverged(diverged_epochs, diverged_values, initial_val)
        else:
            diverged_epochs.clear()
            diverged_values.clear()

        if val_mse < best_val - 1e-12:
            best_val = val_mse
            best_theta = model.theta.copy()
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
            if stale % 2 == 0:
                # Plateau: halve the step and polish from the best weights
                # with fresh optimizer state.
                lr_now = opt.lr * 0.5
                opt = _Adam(model.theta.size, lr_now)
                model.theta[...] = best_theta

    model.theta[...] = best_theta
    return model, curve


# -- calibration ------------------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    """Empirical error distribution from the validation split.

    signed_errors holds y - yhat sorted ascending; eps90 is the nearest-rank
    90th percentile of the absolute errors.
    """

    signed_errors: tuple[float, ...]
    eps90: float


def nearest_rank(sorted_values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct*n)-th smallest value."""
    if len(sorted_values) == 0:
        raise ValueError("empty sample")
    n = len(sorted_values)
    rank = int(np.ceil(pct / 100.0 * n))
    rank = min(max(rank, 1), n)
    return float(sorted_values[rank - 1])


def calibrate(model: LstmModel, val_windows: Sequence[LabeledWindow]) -> Calibration:
    if len(val_windows) < 50:
        raise ValueError("need at least 50 validation windows to calibrate")
    x, y, _ = windows_to_arrays(val_windows)
    pred = model.predict_batch(x)
    signed = np.sort(y - pred)
    eps90 = nearest_rank(np.sort(np.abs(signed)), 90.0)
    return Calibration(signed_errors=tuple(float(e) for e in signed), eps90=eps90)


def prob_within(cal: Calibration, point_estimate: float, horizon_hours: float) -> float:
    """P(true time-to-leak <= horizon) = F(horizon - yhat), F the error CDF."""
    if horizon_hours < 0:
        raise ValueError("horizon must be >= 0")
    errors = np.asarray(cal.signed_errors)
    return float(np.searchsorted(errors, horizon_hours - point_estimate, side="right") / errors.size)


# -- checkpointing ------------------------------------------------------------


def save_checkpoint(path: str | Path, model: LstmModel, stats: NormStats,
                    cal: Calibration | None = None) -> None:
    """Versioned npz with a JSON manifest of shapes and config."""
    manifest = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "input_size": model.cfg.input_size,
            "hidden1": model.cfg.hidden1,
            "hidden2": model.cfg.hidden2,
            "dropout": model.cfg.dropout,
            "seed": model.cfg.seed,
        },
        "shapes": {name: list(shape) for name, shape in _layer_sizes(model.cfg)},
    }
    arrays = {
        "manifest": np.frombuffer(json.dumps(manifest).encode("utf-8"), dtype=np.uint8),
        "theta": model.theta,
        "norm_mean": np.asarray(stats.mean),
        "norm_std": np.asarray(stats.stddev),
    }
    if cal is not None:
        arrays["cal_signed_errors"] = np.asarray(cal.signed_errors)
        arrays["cal_eps90"] = np.asarray([cal.eps90])
    np.savez(path, **arrays)


def load_checkpoint(path: str | Path) -> tuple[LstmModel, NormStats, Calibration | None]:
    with np.load(path) as data:
        manifest = json.loads(bytes(data["manifest"]).decode("utf-8"))
        if manifest["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {manifest['version']}")
        cfg = LstmConfig(**manifest["config"])
        model = LstmModel(cfg)
        theta = data["theta"]
        if theta.shape != model.theta.shape:
            raise ValueError("checkpoint parameter count does not match its config")
        model.theta[...] = theta
        stats = NormStats(mean=tuple(data["norm_mean"]), stddev=tuple(data["norm_std"]))
        cal = None
        if "cal_signed_errors" in data:
            cal = Calibration(
                signed_errors=tuple(float(e) for e in data["cal_signed_errors"]),
                eps90=float(data["cal_eps90"][0]),
            )
    return model, stats, cal
