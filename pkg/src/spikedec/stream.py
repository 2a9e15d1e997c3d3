"""Incremental low-latency inference: one keypoint per receptive-field stride.

Instead of buffering a full 1024-bin window, the stream keeps per-layer
tails: each conv layer holds its last kernel-width inputs and starts as if
its zero padding had already been pushed (including emitting any outputs
whose windows fall entirely inside the padding), each pool holds its
pending pair, and the recurrent state advances one step per emitted
keypoint.  This replicates the batch path's left boundary exactly; a new
keypoint appears every ``stride`` bins once the first receptive field is
full, and each keypoint closes a segment of ``keypoint_stride``
interpolated velocity samples.

Interior outputs are identical to the batch forward.  The right boundary
(batch right-padding) is unreachable while streaming, so a 1024-bin stream
emits seq_len minus the final segments that depend on it.  Recurrent state
is never reset mid-stream, which diverges from windowed evaluation after
the first window by design.
"""

from dataclasses import dataclass

import numpy as np

from .cells import CellState, gru_forward, lif_forward, sgru_forward
from .errors import DimensionError
from .layers import linear_forward

__all__ = ["StreamState", "stream_init", "stream_push", "stream_latency",
           "latency_from_geometry"]


@dataclass
class _ConvTail:
    """Sliding input tail of one conv layer (conv -> ReLU)."""
    params: object
    buf: np.ndarray  # (in_ch, k) rolling window
    filled: int

    @classmethod
    def fresh(cls, params, in_ch):
        k = params.kernel.shape[2]
        return cls(params=params, buf=np.zeros((in_ch, k)),
                   filled=min(params.padding, k))

    def initial_outputs(self):
        """Outputs whose windows lie entirely inside the left zero padding."""
        n = max(0, self.params.padding - self.params.kernel.shape[2] + 1)
        return [np.maximum(self.params.bias.copy(), 0.0) for _ in range(n)]

    def push(self, col):
        k = self.buf.shape[1]
        self.buf[:, :-1] = self.buf[:, 1:]
        self.buf[:, -1] = col
        self.filled = min(self.filled + 1, k)
        if self.filled == k:
            pre = np.einsum("oik,ik->o", self.params.kernel, self.buf) + self.params.bias
            return np.maximum(pre, 0.0)
        return None


@dataclass
class _PoolTail:
    pending: np.ndarray = None

    def initial_outputs(self):
        return []

    def push(self, col):
        if self.pending is None:
            self.pending = col.copy()
            return None
        out = np.maximum(self.pending, col)
        self.pending = None
        return out


@dataclass
class StreamState:
    """Single-stream incremental state; one instance per stream, single-threaded."""
    model: object
    ring: np.ndarray             # last rf raw bins (the buffer a deployment needs)
    stages: list                 # interleaved conv/pool tails in stack order
    cell_state: CellState
    prev_keypoint: np.ndarray = None
    bins_seen: int = 0
    keypoints_emitted: int = 0
    rf: int = 0
    stride: int = 0


def _feed(stages, col, start=0):
    """Push one column into the cascade; returns completed keypoint features."""
    cols = [col]
    for stage in stages[start:]:
        nxt = []
        for c in cols:
            out = stage.push(c)
            if out is not None:
                nxt.append(out)
        if not nxt:
            return []
        cols = nxt
    return cols


def stream_init(model) -> StreamState:
    """Fresh stream: per-layer zero-padding pre-fill, zeroed recurrent state."""
    cfg = model.cfg
    stages = []
    in_ch = cfg.input_channels
    for i, b in enumerate(cfg.conv_blocks):
        stages.append(_ConvTail.fresh(model.conv_params(i), in_ch))
        if b.pool:
            stages.append(_PoolTail())
        in_ch = b.out_channels
    rf, stride = model.receptive_field()
    st = StreamState(
        model=model,
        ring=np.zeros((cfg.input_channels, rf)),
        stages=stages,
        cell_state=CellState.zeros(cfg.recurrence, 1, cfg.hidden_size),
        rf=rf,
        stride=stride,
    )
    # propagate pure-padding outputs so downstream pooling parity matches batch
    for i, stage in enumerate(stages):
        for out in stage.initial_outputs():
            leftover = _feed(stages, out, start=i + 1)
            for feat in leftover:  # only reachable for degenerate geometries
                _advance(st, feat)
    return st


def _advance(st: StreamState, feat):
    """One recurrent step + readout; returns the closed segment, if any."""
    cfg = st.model.cfg
    if cfg.recurrence == "gru":
        out, _ = gru_forward(st.model.cell_params(), feat, st.cell_state)
    elif cfg.recurrence == "lif":
        out, _ = lif_forward(st.model.cell_params(), feat, st.cell_state)
    else:
        out, _ = sgru_forward(st.model.cell_params(), feat, st.cell_state)
    kp, _ = linear_forward(st.model.out_params(), out[0])
    st.keypoints_emitted += 1
    segment = None
    if st.prev_keypoint is not None:
        frac = (np.arange(cfg.keypoint_stride) / cfg.keypoint_stride)[:, None]
        segment = st.prev_keypoint * (1.0 - frac) + kp * frac
    st.prev_keypoint = kp
    return segment


def stream_push(st: StreamState, bin_counts):
    """Feed one bin of per-channel counts.

    Returns a (keypoint_stride, 2) velocity segment when a keypoint closes a
    segment, else None.
    """
    cfg = st.model.cfg
    col = np.asarray(bin_counts, dtype=np.float64).reshape(-1)
    if col.shape[0] != cfg.input_channels:
        raise DimensionError(
            f"stream bin has {col.shape[0]} channels, model wants {cfg.input_channels}")
    st.bins_seen += 1
    st.ring = np.roll(st.ring, -1, axis=1)
    st.ring[:, -1] = col

    segment = None
    for feat in _feed(st.stages, col):
        seg = _advance(st, feat)
        if seg is not None:
            segment = seg
    return segment


def latency_from_geometry(rf: int, stride: int, bin_ms: float = 4.0):
    """(latency_ms, rate_hz) for a given receptive field and stride."""
    return rf * bin_ms, 1000.0 / (stride * bin_ms)


def stream_latency(model):
    """Keypoint latency and execution rate implied by the model's geometry."""
    rf, stride = model.receptive_field()
    return latency_from_geometry(rf, stride)
