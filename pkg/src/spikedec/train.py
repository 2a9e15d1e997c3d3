"""Full-sequence BPTT training: loss, the reverse sweep, Adam, and the fit loop.

The loss is mean squared error over the full interpolated output (the
upsampler is differentiable, so gradient reaches the keypoints directly).
Optimization is standard bias-corrected Adam.  Training iterates shuffled
non-overlapping windows, evaluates validation R^2 each epoch, keeps the best
model, and stops early after a patience of non-improving epochs.  Every
source of randomness runs off the seeds in the configs, so a rerun
reproduces the trajectory bit for bit.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .bench import r2_score
from .cells import gru_backward, lif_backward, sgru_backward
from .data import Recording, windows
from .errors import ConfigError, DimensionError, UsageError
from .layers import conv1d_backward, lerp_upsample_backward, linear_backward, \
    maxpool1d_backward
from .model import Model
from .numerics import Rng

__all__ = ["TrainConfig", "AdamState", "mse_loss", "backward", "adam_step",
           "fit", "history_to_csv"]


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 8
    seed: int = 0
    early_stop_patience: int = 6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0  # global-norm clip; surrogate BPTT can spike hard

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.epochs < 1 or self.early_stop_patience < 1 or self.batch_size < 1:
            raise ConfigError("epochs, patience and batch_size must be >= 1")


def clip_gradients(grads: dict, max_norm: float) -> dict:
    """Scale all gradients down so their global L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / total
        return {k: g * scale for k, g in grads.items()}
    return grads


def mse_loss(pred, target):
    """Mean squared error over all entries; gradient is 2*(pred-target)/N."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float((diff * diff).mean()), 2.0 * diff / diff.size


def backward(model: Model, caches, g_vel):
    """Reverse sweep through upsampling, readout, the recurrence, and convs.

    ``caches`` must come from one ``model.forward(..., want_caches=True)``
    call; returns a gradient dict keyed like ``model.params``.
    """
    if caches is None or "rec_steps" not in caches:
        raise UsageError("backward needs the caches of a forward(want_caches=True) call")
    cfg = model.cfg
    g_vel = np.asarray(g_vel, dtype=np.float64)
    if caches["squeeze"]:
        g_vel = g_vel[None]
    K = caches["K"]

    g_kp = lerp_upsample_backward(g_vel, K, cfg.keypoint_stride)
    g_outs, gW_out, gb_out = linear_backward(caches["linear"], g_kp)

    grads = {name: np.zeros_like(v) for name, v in model.params.items()}
    grads["out.W"] += gW_out
    grads["out.b"] += gb_out

    B = caches["B"]
    dh = cfg.hidden_size
    g_feats = np.empty(caches["feats_shape"])
    steps = caches["rec_steps"]
    if cfg.recurrence == "gru":
        g_h = np.zeros((B, dh))
        for t in reversed(range(K)):
            g_x, g_h, g = gru_backward(steps[t], g_h + g_outs[:, t])
            g_feats[:, t] = g_x
            for k, v in g.items():
                grads[f"gru.{k}"] += v
    elif cfg.recurrence == "lif":
        g_u = np.zeros((B, dh))
        g_s = np.zeros((B, dh))
        for t in reversed(range(K)):
            g_x, g_u, g_s, g = lif_backward(steps[t], g_s + g_outs[:, t], g_u)
            g_feats[:, t] = g_x
            for k, v in g.items():
                grads[f"lif.{k}"] += v
    else:
        g_h = np.zeros((B, dh))
        g_u = np.zeros((3, B, dh))
        for t in reversed(range(K)):
            g_x, g_h, g_u, g = sgru_backward(steps[t], g_h + g_outs[:, t], g_u)
            g_feats[:, t] = g_x
            for k, v in g.items():
                grads[f"sgru.{k}"] += v

    g = np.ascontiguousarray(g_feats.transpose(0, 2, 1))  # (B, ch, K)
    for i in reversed(range(len(cfg.conv_blocks))):
        block = caches["blocks"][i]
        if block["pool"] is not None:
            g = maxpool1d_backward(block["pool"], g)
        g, gk, gb = conv1d_backward(block["conv"], g)
        grads[f"conv{i}.kernel"] += gk
        grads[f"conv{i}.bias"] += gb
    return grads


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig):
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.t += 1
    b1t = 1.0 - cfg.beta1 ** state.t
    b2t = 1.0 - cfg.beta2 ** state.t
    for k, p in params.items():
        g = grads[k]
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g
        mhat = state.m[k] / b1t
        vhat = state.v[k] / b2t
        p -= cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)


def evaluate_r2(model: Model, rec: Recording, batch: int = 8) -> float:
    """Validation R^2 over all windows (trace-free forward)."""
    x, y = windows(rec, model.cfg.seq_len)
    preds = np.empty_like(y)
    for lo in range(0, x.shape[0], batch):
        vel, _ = model.forward(x[lo:lo + batch], want_trace=False)
        preds[lo:lo + vel.shape[0]] = vel
    return r2_score(preds.reshape(-1, 2), y.reshape(-1, 2))


def fit(model: Model, train_rec: Recording, val_rec: Recording,
        cfg: TrainConfig = None, log=None):
    """Train a model; returns (best_model, history).

    History rows are (epoch, train_loss, val_r2); the best model is the one
    with the highest validation R^2, and training stops once that has not
    improved for ``early_stop_patience`` epochs.
    """
    cfg = cfg or TrainConfig()
    x, y = windows(train_rec, model.cfg.seq_len)
    n = x.shape[0]
    if n < 1:
        raise ConfigError("empty training set")
    rng = Rng(cfg.seed)
    state = AdamState.for_params(model.params)
    history = []
    best_r2 = -np.inf
    best = model.copy()
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.time()
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            vel, _, caches = model.forward(x[idx], want_caches=True, want_trace=False)
            loss, g = mse_loss(vel, y[idx])
            grads = clip_gradients(backward(model, caches, g), cfg.clip_norm)
            adam_step(model.params, grads, state, cfg)
            losses.append(loss)
        val_r2 = evaluate_r2(model, val_rec)
        history.append((epoch, float(np.mean(losses)), val_r2))
        if log:
            log(f"epoch {epoch:3d}  loss {np.mean(losses):.6g}  "
                f"val_r2 {val_r2:+.4f}  ({time.time() - t0:.1f}s)")
        if val_r2 > best_r2:
            best_r2 = val_r2
            best = model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    return best, history


def history_to_csv(history) -> str:
    lines = ["epoch,train_loss,val_r2"]
    lines += [f"{e},{float(l)!r},{float(r)!r}" for e, l, r in history]
    return "\n".join(lines) + "\n"
