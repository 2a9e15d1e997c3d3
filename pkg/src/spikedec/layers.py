"""Feed-forward building blocks: 1-D convolution, max pooling, linear, upsampling.

Every forward returns ``(output, cache)`` and has a matching ``*_backward``
that consumes the cache; gradients are exact vector-Jacobian products,
verified against finite differences in the test suite.  All functions accept
a single sample (shapes as documented) or a batch with one extra leading
dimension; gradients mirror the input batching.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

__all__ = [
    "Conv1dParams", "LinearParams",
    "conv1d_forward", "conv1d_backward",
    "maxpool1d", "maxpool1d_backward",
    "linear_forward", "linear_backward",
    "lerp_upsample", "lerp_upsample_backward",
    "conv1d_out_len",
]


@dataclass
class Conv1dParams:
    """Stride-1 temporal convolution with symmetric zero padding.

    kernel: (out_ch, in_ch, k), bias: (out_ch,).
    """
    kernel: np.ndarray
    bias: np.ndarray
    padding: int = 0

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.kernel.ndim != 3:
            raise ConfigError(f"conv kernel must be (out,in,k), got {self.kernel.shape}")
        if self.kernel.shape[2] < 1:
            raise ConfigError("conv kernel size must be >= 1")
        if self.padding < 0:
            raise ConfigError("conv padding must be >= 0")
        if self.bias.shape != (self.kernel.shape[0],):
            raise DimensionError(
                f"conv bias shape {self.bias.shape} does not match out_ch {self.kernel.shape[0]}")


@dataclass
class LinearParams:
    """Affine map y = x W + b with W: (in, out); a missing bias adds nothing."""
    W: np.ndarray
    b: np.ndarray = None

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.W.ndim != 2:
            raise ConfigError(f"linear W must be 2-D, got {self.W.shape}")
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=np.float64)
            if self.b.shape != (self.W.shape[1],):
                raise DimensionError(
                    f"linear bias shape {self.b.shape} does not match out {self.W.shape[1]}")


def conv1d_out_len(L: int, k: int, padding: int) -> int:
    return L + 2 * padding - k + 1


def _batched(x, ndim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim:
        return x[None], True
    if x.ndim == ndim + 1:
        return x, False
    raise DimensionError(f"expected {ndim}- or {ndim + 1}-D input, got shape {x.shape}")


def conv1d_forward(p: Conv1dParams, x, activation: str = "none"):
    """Convolve (in_ch, L) -> (out_ch, L') with L' = L + 2*padding - k + 1.

    ``activation`` is ``"relu"`` or ``"none"``.  Raises ConfigError when the
    output would be empty.
    """
    xb, squeeze = _batched(x, 2)
    out_ch, in_ch, k = p.kernel.shape
    if xb.shape[1] != in_ch:
        raise DimensionError(f"conv input channels {xb.shape[1]} != kernel in_ch {in_ch}")
    L = xb.shape[2]
    Lp = conv1d_out_len(L, k, p.padding)
    if Lp < 1:
        raise ConfigError(f"conv output length {Lp} < 1 for L={L}, k={k}, padding={p.padding}")
    if activation not in ("relu", "none"):
        raise ValueError(f"unknown conv activation '{activation}'")

    if p.padding:
        xpad = np.zeros((xb.shape[0], in_ch, L + 2 * p.padding), dtype=np.float64)
        xpad[:, :, p.padding:p.padding + L] = xb
    else:
        xpad = xb
    y = np.broadcast_to(p.bias[None, :, None], (xb.shape[0], out_ch, Lp)).copy()
    for kk in range(k):
        # (out,in) @ (B,in,Lp) accumulated per tap
        y += np.matmul(p.kernel[:, :, kk], xpad[:, :, kk:kk + Lp])
    pre = y
    if activation == "relu":
        y = np.maximum(pre, 0.0)
    cache = {"xpad": xpad, "pre": pre if activation == "relu" else None,
             "params": p, "L": L, "squeeze": squeeze, "activation": activation}
    return (y[0] if squeeze else y), cache


def conv1d_backward(cache, gy):
    """Gradients (gx, gkernel, gbias) for one conv1d_forward call."""
    p: Conv1dParams = cache["params"]
    gy, _ = _batched(gy, 2)
    if cache["activation"] == "relu":
        gy = gy * (cache["pre"] > 0)
    xpad = cache["xpad"]
    out_ch, in_ch, k = p.kernel.shape
    Lp = gy.shape[2]
    gk = np.zeros_like(p.kernel)
    gxpad = np.zeros_like(xpad)
    for kk in range(k):
        xs = xpad[:, :, kk:kk + Lp]
        # sum over batch and positions
        gk[:, :, kk] = np.einsum("bol,bil->oi", gy, xs)
        gxpad[:, :, kk:kk + Lp] += np.matmul(p.kernel[:, :, kk].T, gy)
    gb = gy.sum(axis=(0, 2))
    L = cache["L"]
    gx = gxpad[:, :, p.padding:p.padding + L] if p.padding else gxpad
    return (gx[0] if cache["squeeze"] else gx), gk, gb


def maxpool1d(x):
    """Non-overlapping window-2 max over (ch, L); an odd trailing element is dropped."""
    xb, squeeze = _batched(x, 2)
    L = xb.shape[2]
    if L < 2:
        raise ConfigError(f"maxpool needs length >= 2, got {L}")
    L2 = L // 2
    pairs = xb[:, :, :2 * L2].reshape(xb.shape[0], xb.shape[1], L2, 2)
    arg = pairs.argmax(axis=3)  # ties resolve to the earlier index
    y = np.take_along_axis(pairs, arg[..., None], axis=3)[..., 0]
    cache = {"arg": arg, "L": L, "squeeze": squeeze}
    return (y[0] if squeeze else y), cache


def maxpool1d_backward(cache, gy):
    """Route gradient to each window's argmax (0/1 routing)."""
    gy, _ = _batched(gy, 2)
    B, ch, L2 = gy.shape
    gpairs = np.zeros((B, ch, L2, 2), dtype=np.float64)
    np.put_along_axis(gpairs, cache["arg"][..., None], gy[..., None], axis=3)
    gx = np.zeros((B, ch, cache["L"]), dtype=np.float64)
    gx[:, :, :2 * L2] = gpairs.reshape(B, ch, 2 * L2)
    return gx[0] if cache["squeeze"] else gx


def linear_forward(p: LinearParams, x):
    """y = x W + b for x of shape (in,), (B, in) or (B, K, in)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.W.shape[0]:
        raise DimensionError(f"linear input dim {x.shape[-1]} != W in dim {p.W.shape[0]}")
    y = x @ p.W
    if p.b is not None:
        y = y + p.b
    return y, {"x": x, "params": p}


def linear_backward(cache, gy):
    p: LinearParams = cache["params"]
    x = cache["x"]
    gy = np.asarray(gy, dtype=np.float64)
    gx = gy @ p.W.T
    gW = x.reshape(-1, x.shape[-1]).T @ gy.reshape(-1, gy.shape[-1])
    gb = None if p.b is None else gy.reshape(-1, gy.shape[-1]).sum(axis=0)
    return gx, gW, gb


def lerp_upsample(keypoints, stride: int):
    """Linearly interpolate (K, D) keypoints into ((K-1)*stride, D) samples.

    out[t] = kp[t//s] + (t mod s)/s * (kp[t//s + 1] - kp[t//s]); out[j*s]
    reproduces kp[j] exactly for j < K-1.
    """
    kb, squeeze = _batched(keypoints, 2)
    K = kb.shape[1]
    if K < 2:
        raise ConfigError(f"lerp_upsample needs at least 2 keypoints, got {K}")
    if stride < 1:
        raise ConfigError(f"lerp_upsample stride must be >= 1, got {stride}")
    frac = (np.arange(stride, dtype=np.float64) / stride)[None, None, :, None]
    left = kb[:, :-1, None, :]
    right = kb[:, 1:, None, :]
    out = left * (1.0 - frac) + right * frac
    out = out.reshape(kb.shape[0], (K - 1) * stride, kb.shape[2])
    return out[0] if squeeze else out


def lerp_upsample_backward(gy, K: int, stride: int):
    """Distribute output gradient onto the bracketing keypoints."""
    gb, squeeze = _batched(gy, 2)
    B, N, D = gb.shape
    if N != (K - 1) * stride:
        raise DimensionError(f"gradient length {N} != (K-1)*stride = {(K - 1) * stride}")
    frac = (np.arange(stride, dtype=np.float64) / stride)[None, None, :, None]
    seg = gb.reshape(B, K - 1, stride, D)
    gkp = np.zeros((B, K, D), dtype=np.float64)
    gkp[:, :-1] += (seg * (1.0 - frac)).sum(axis=2)
    gkp[:, 1:] += (seg * frac).sum(axis=2)
    return gkp[0] if squeeze else gkp
