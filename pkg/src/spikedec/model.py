"""Decoder assembly: conv blocks + recurrent unit + readout + upsampling.

A :class:`Model` owns a :class:`ModelConfig` plus a flat, ordered parameter
dict, and composes the layer/cell primitives into the full forward pass:
spike bins (C, 1024) -> conv blocks -> K keypoint features -> recurrent unit
stepped left to right -> linear readout -> K 2-D keypoints -> linear
upsampling back to (1024, 2).  Recurrent and membrane state is zeroed at the
start of every window.

Checkpoints are a ``<name>.manifest.json`` / ``<name>.weights.bin`` pair:
the manifest holds a format version, the config, and a tensor table of
(name, shape, offset) with offsets in elements; the blob is little-endian
4-byte floats.  Loading validates that the table tiles the blob exactly.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import bench
from .cells import CellState, GruParams, LifParams, NeuronSpec, SgruParams, \
    gru_forward, lif_forward, sgru_forward
from .errors import CheckpointError, ConfigError, DimensionError
from .layers import Conv1dParams, LinearParams, conv1d_forward, conv1d_out_len, \
    lerp_upsample, linear_forward, maxpool1d
from .numerics import Rng

__all__ = ["ConvBlockSpec", "ModelConfig", "Model", "preset", "receptive_field",
           "CHECKPOINT_VERSION"]

CHECKPOINT_VERSION = 1

RECURRENCES = ("gru", "lif", "sgru")

# conv -> ReLU -> maxpool ordering for every recurrence variant
CONV_ACTIVATION = "relu"


@dataclass(frozen=True)
class ConvBlockSpec:
    """One conv block: channels/kernel/padding plus whether a pool follows."""
    out_channels: int
    kernel: int
    padding: int
    pool: bool = True


@dataclass
class ModelConfig:
    """Full architectural description of one decoder."""
    recurrence: str
    conv_blocks: tuple
    hidden_size: int
    keypoint_stride: int
    input_channels: int = 96
    seq_len: int = 1024
    lif_beta: float = 0.9
    lif_theta: float = 1.0
    surrogate_slope: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.recurrence not in RECURRENCES:
            raise ConfigError(f"unknown recurrence '{self.recurrence}'")
        self.conv_blocks = tuple(
            b if isinstance(b, ConvBlockSpec) else ConvBlockSpec(*b)
            for b in self.conv_blocks)
        if not self.conv_blocks:
            raise ConfigError("at least one conv block is required")
        for n in ("hidden_size", "keypoint_stride", "input_channels", "seq_len"):
            if getattr(self, n) < 1:
                raise ConfigError(f"{n} must be positive")
        K = self.keypoints
        if K < 2:
            raise ConfigError(f"conv stack yields {K} keypoints; need >= 2")
        if (K - 1) * self.keypoint_stride != self.seq_len:
            raise ConfigError(
                f"(K-1)*stride = {(K - 1) * self.keypoint_stride} != seq_len {self.seq_len} "
                f"(K={K}, stride={self.keypoint_stride})")

    def length_chain(self):
        """Sequence lengths through the conv stack, starting at seq_len."""
        chain = [self.seq_len]
        L = self.seq_len
        for b in self.conv_blocks:
            L = conv1d_out_len(L, b.kernel, b.padding)
            if L < 1:
                raise ConfigError(f"conv block {b} empties the sequence")
            chain.append(L)
            if b.pool:
                if L < 2:
                    raise ConfigError(f"cannot pool length {L}")
                L //= 2
                chain.append(L)
        return chain

    @property
    def keypoints(self):
        return self.length_chain()[-1]

    def to_dict(self):
        return {
            "recurrence": self.recurrence,
            "conv_blocks": [[b.out_channels, b.kernel, b.padding, b.pool]
                            for b in self.conv_blocks],
            "hidden_size": self.hidden_size,
            "keypoint_stride": self.keypoint_stride,
            "input_channels": self.input_channels,
            "seq_len": self.seq_len,
            "lif_beta": self.lif_beta,
            "lif_theta": self.lif_theta,
            "surrogate_slope": self.surrogate_slope,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["conv_blocks"] = tuple(ConvBlockSpec(*b) for b in d["conv_blocks"])
        return cls(**d)


def preset(track: str, recurrence: str) -> ModelConfig:
    """The two published geometries.

    track1: three 32-channel blocks (kernels 3/6/12, paddings 5/3/6),
    hidden 64, 129 keypoints at stride 8.  track2: two 10-channel kernel-3
    blocks (paddings 3/1), hidden 20, 257 keypoints at stride 4.
    """
    if track == "track1":
        return ModelConfig(recurrence=recurrence,
                           conv_blocks=((32, 3, 5, True), (32, 6, 3, True), (32, 12, 6, True)),
                           hidden_size=64, keypoint_stride=8)
    if track == "track2":
        return ModelConfig(recurrence=recurrence,
                           conv_blocks=((10, 3, 3, True), (10, 3, 1, True)),
                           hidden_size=20, keypoint_stride=4)
    raise ConfigError(f"unknown track '{track}'")


SWEEP_BLOCKS = {
    # keypoint count -> (conv blocks, stride); all 10-channel stacks on 1024 bins
    1025: (((10, 2, 1, False), (10, 3, 1, False)), 1),
    513: (((10, 3, 2, True), (10, 3, 1, False)), 2),
    257: (((10, 3, 3, True), (10, 3, 1, True)), 4),
    129: (((10, 3, 3, True), (10, 3, 1, True), (10, 3, 2, True)), 8),
}


def sweep_config(keypoints: int, recurrence: str = "gru", seed: int = 0) -> ModelConfig:
    """Keypoint-count variants with matched channel width for resolution sweeps."""
    if keypoints not in SWEEP_BLOCKS:
        raise ConfigError(
            f"no sweep geometry for {keypoints} keypoints (have {sorted(SWEEP_BLOCKS)})")
    blocks, stride = SWEEP_BLOCKS[keypoints]
    return ModelConfig(recurrence=recurrence, conv_blocks=blocks, hidden_size=20,
                       keypoint_stride=stride, seed=seed)


def receptive_field(cfg: ModelConfig):
    """(rf, stride) of one keypoint in input bins.

    Composition starting at (rf=1, jump=1): a conv with kernel k adds
    (k-1)*jump; a pool adds jump and doubles it.
    """
    rf, jump = 1, 1
    for b in cfg.conv_blocks:
        rf += (b.kernel - 1) * jump
        if b.pool:
            rf += jump
            jump *= 2
    return rf, jump


# parameter name order is fixed: it defines checkpoint layout and Adam state
def _param_names(cfg: ModelConfig):
    names = []
    for i in range(len(cfg.conv_blocks)):
        names += [f"conv{i}.kernel", f"conv{i}.bias"]
    if cfg.recurrence == "gru":
        names += [f"gru.{n}" for n in
                  ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")]
    elif cfg.recurrence == "lif":
        names += ["lif.W", "lif.V"]
    else:
        names += [f"sgru.{n}" for n in ("W_r", "W_z", "W_h", "U_r", "U_z", "U_h")]
    names += ["out.W", "out.b"]
    return names


class Model:
    """Immutable-once-built decoder; each forward owns its private state."""

    def __init__(self, cfg: ModelConfig, params: dict):
        self.cfg = cfg
        self.params = params
        self._check_shapes()

    # -- construction -------------------------------------------------------

    @classmethod
    def init(cls, cfg: ModelConfig) -> "Model":
        """Seed-deterministic initialization.

        Weights are uniform +-gain/sqrt(fan_in), biases zero.  Spiking paths
        start with enough drive to actually fire (a silent network starves
        its readout of gradient): LIF input weights get a 3x gain and the
        recurrent matrix an inhibitory offset so activity stays sparse and
        input-locked; sGRU gates get an 8x gain because the hidden state
        only moves where update and candidate gates cross threshold
        together.  The readout starts small so early training is driven by
        the recurrent representation rather than by silencing it.
        """
        rng = Rng(cfg.seed)
        params = {}

        def uni(shape, fan_in, gain=1.0):
            a = gain / np.sqrt(fan_in)
            return rng.uniform(-a, a, size=shape)

        in_ch = cfg.input_channels
        for i, b in enumerate(cfg.conv_blocks):
            params[f"conv{i}.kernel"] = uni((b.out_channels, in_ch, b.kernel), in_ch * b.kernel)
            params[f"conv{i}.bias"] = np.zeros(b.out_channels)
            in_ch = b.out_channels
        dh = cfg.hidden_size
        if cfg.recurrence == "gru":
            for n in ("W_z", "W_r", "W_h"):
                params[f"gru.{n}"] = uni((in_ch, dh), in_ch)
            for n in ("U_z", "U_r", "U_h"):
                params[f"gru.{n}"] = uni((dh, dh), dh)
            for n in ("b_z", "b_r", "b_h"):
                params[f"gru.{n}"] = np.zeros(dh)
        elif cfg.recurrence == "lif":
            params["lif.W"] = uni((in_ch, dh), in_ch, gain=3.0)
            params["lif.V"] = uni((dh, dh), dh) - 0.35
        else:
            for n in ("W_r", "W_z", "W_h"):
                params[f"sgru.{n}"] = uni((in_ch, dh), in_ch, gain=8.0)
            for n in ("U_r", "U_z", "U_h"):
                params[f"sgru.{n}"] = uni((dh, dh), dh, gain=8.0)
        params["out.W"] = uni((dh, 2), dh, gain=0.05)
        params["out.b"] = np.zeros(2)
        return cls(cfg, params)

    def _check_shapes(self):
        want = _param_names(self.cfg)
        have = list(self.params.keys())
        if have != want:
            raise ConfigError(f"parameter table mismatch: {have} vs {want}")

    def copy(self) -> "Model":
        return Model(self.cfg, {k: v.copy() for k, v in self.params.items()})

    # -- views over the flat dict -------------------------------------------

    def conv_params(self, i: int) -> Conv1dParams:
        b = self.cfg.conv_blocks[i]
        return Conv1dParams(kernel=self.params[f"conv{i}.kernel"],
                            bias=self.params[f"conv{i}.bias"], padding=b.padding)

    def cell_params(self):
        cfg = self.cfg
        if cfg.recurrence == "gru":
            g = lambda n: self.params[f"gru.{n}"]
            return GruParams(W_z=g("W_z"), W_r=g("W_r"), W_h=g("W_h"),
                             U_z=g("U_z"), U_r=g("U_r"), U_h=g("U_h"),
                             b_z=g("b_z"), b_r=g("b_r"), b_h=g("b_h"))
        if cfg.recurrence == "lif":
            return LifParams(W=self.params["lif.W"], V=self.params["lif.V"],
                             beta=cfg.lif_beta, theta=cfg.lif_theta,
                             surrogate_slope=cfg.surrogate_slope)
        spec = NeuronSpec(cfg.lif_beta, cfg.lif_theta, cfg.surrogate_slope)
        s = lambda n: self.params[f"sgru.{n}"]
        return SgruParams(W_r=s("W_r"), W_z=s("W_z"), W_h=s("W_h"),
                          U_r=s("U_r"), U_z=s("U_z"), U_h=s("U_h"),
                          r_neuron=spec, z_neuron=spec, h_neuron=spec)

    def out_params(self) -> LinearParams:
        return LinearParams(W=self.params["out.W"], b=self.params["out.b"])

    def param_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def neuron_constant_count(self) -> int:
        """Persisted scalar neuron constants (beta/theta/slope per LIF population)."""
        if self.cfg.recurrence == "lif":
            return 3
        if self.cfg.recurrence == "sgru":
            return 9  # one set per gate
        return 0

    def state_element_count(self) -> int:
        """Persistent recurrent/membrane state elements for one stream."""
        dh = self.cfg.hidden_size
        if self.cfg.recurrence == "gru":
            return dh
        if self.cfg.recurrence == "lif":
            return 2 * dh  # membrane + previous spikes
        return 4 * dh  # hidden + three gate membranes

    def receptive_field(self):
        return receptive_field(self.cfg)

    # -- forward -------------------------------------------------------------

    def forward(self, x, want_caches: bool = False, relaxed: bool = False,
                want_trace: bool = True):
        """Decode (C, seq_len) or (B, C, seq_len) spikes into velocities.

        Returns ``(velocities, trace)`` or ``(velocities, trace, caches)``
        when ``want_caches`` is set for a training backward pass.  Passing
        ``want_trace=False`` skips metric-trace construction (trace is None);
        the hot training/validation loops use that.
        """
        cfg = self.cfg
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != cfg.input_channels:
            raise DimensionError(
                f"input shape {x.shape} does not match {cfg.input_channels} channels")
        if x.shape[2] != cfg.seq_len:
            raise DimensionError(f"input length {x.shape[2]} != seq_len {cfg.seq_len}")
        B = x.shape[0]

        trace = bench.ActivationTrace(steps=B * cfg.seq_len) if want_trace else None
        caches = {"blocks": [], "B": B} if want_caches else None

        h = x
        for i in range(len(cfg.conv_blocks)):
            p = self.conv_params(i)
            if want_trace:
                trace.add_synaptic(f"conv{i}",
                                   weight=p.kernel.reshape(p.kernel.shape[0], -1).T,
                                   bias=p.bias, inputs=_conv_cols(h, p),
                                   binary_input=(i == 0))  # raw spike bins
            y, ccache = conv1d_forward(p, h, activation=CONV_ACTIVATION)
            if want_trace:
                trace.add_aux_activation(f"conv{i}.{CONV_ACTIVATION}", y)
            pcache = None
            if cfg.conv_blocks[i].pool:
                y, pcache = maxpool1d(y)
            if want_caches:
                caches["blocks"].append({"conv": ccache, "pool": pcache})
            h = y

        K = h.shape[2]
        feats = np.ascontiguousarray(h.transpose(0, 2, 1))  # (B, K, ch)

        cell = self.cell_params()
        st = CellState.zeros(cfg.recurrence, B, cfg.hidden_size)
        outs = np.empty((B, K, cfg.hidden_size))
        step_caches = []
        for t in range(K):
            if cfg.recurrence == "gru":
                o, c = gru_forward(cell, feats[:, t], st)
            elif cfg.recurrence == "lif":
                o, c = lif_forward(cell, feats[:, t], st, relaxed=relaxed)
            else:
                o, c = sgru_forward(cell, feats[:, t], st, relaxed=relaxed)
            outs[:, t] = o
            step_caches.append(c)

        rec_binary = cfg.recurrence in ("lif", "sgru")
        lp = self.out_params()
        if want_trace:
            trace.add_activation(f"{cfg.recurrence}.out", outs)
            self._trace_recurrent(trace, feats, step_caches)
            trace.add_synaptic("out", weight=lp.W, bias=lp.b,
                               inputs=outs.reshape(-1, cfg.hidden_size),
                               binary_input=rec_binary)
        kp, lcache = linear_forward(lp, outs)
        vel = lerp_upsample(kp, cfg.keypoint_stride)

        if want_caches:
            caches.update({"rec_steps": step_caches, "linear": lcache,
                           "K": K, "feats_shape": feats.shape,
                           "squeeze": squeeze, "relaxed": relaxed})
            return (vel[0] if squeeze else vel), trace, caches
        return (vel[0] if squeeze else vel), trace

    def _trace_recurrent(self, trace, feats, step_caches):
        """Record each recurrent weight matrix with its true per-step operands."""
        cfg = self.cfg
        cell = self.cell_params()
        feats_flat = feats.reshape(-1, feats.shape[2])
        h_prev = np.stack([c["h_prev"] for c in step_caches]) \
            .reshape(-1, cfg.hidden_size) if cfg.recurrence != "lif" else None
        if cfg.recurrence == "gru":
            for gate in ("z", "r", "h"):
                trace.add_synaptic(f"gru.W_{gate}", getattr(cell, f"W_{gate}"),
                                   getattr(cell, f"b_{gate}"), feats_flat, False)
            trace.add_synaptic("gru.U_z", cell.U_z, None, h_prev, False)
            trace.add_synaptic("gru.U_r", cell.U_r, None, h_prev, False)
            rh = np.stack([c["rh"] for c in step_caches]).reshape(-1, cfg.hidden_size)
            trace.add_synaptic("gru.U_h", cell.U_h, None, rh, False)
        elif cfg.recurrence == "lif":
            trace.add_synaptic("lif.W", cell.W, None, feats_flat, False)
            s_prev = np.stack([c["s_prev"] for c in step_caches]) \
                .reshape(-1, cfg.hidden_size)
            trace.add_synaptic("lif.V", cell.V, None, s_prev, True)
        else:
            for gate in ("r", "z", "h"):
                trace.add_synaptic(f"sgru.W_{gate}", getattr(cell, f"W_{gate}"),
                                   None, feats_flat, False)
            trace.add_synaptic("sgru.U_r", cell.U_r, None, h_prev, True)
            trace.add_synaptic("sgru.U_z", cell.U_z, None, h_prev, True)
            gate_in = np.stack([c["gate_in"] for c in step_caches]) \
                .reshape(-1, cfg.hidden_size)
            trace.add_synaptic("sgru.U_h", cell.U_h, None, gate_in, True)

    # -- persistence ----------------------------------------------------------

    def save(self, path: str):
        """Write ``<path>.manifest.json`` + ``<path>.weights.bin``."""
        tensors = []
        offset = 0
        blobs = []
        for name in _param_names(self.cfg):
            v = self.params[name]
            tensors.append({"name": name, "shape": list(v.shape), "offset": offset})
            offset += v.size
            blobs.append(v.astype("<f4").tobytes())
        manifest = {"format_version": CHECKPOINT_VERSION,
                    "config": self.cfg.to_dict(),
                    "total_elements": offset,
                    "tensors": tensors}
        with open(path + ".manifest.json", "w", encoding="utf-8") as f:
            json.dump(manifest, f, sort_keys=True, separators=(",", ":"))
        with open(path + ".weights.bin", "wb") as f:
            f.write(b"".join(blobs))

    @classmethod
    def load(cls, path: str) -> "Model":
        mpath, bpath = path + ".manifest.json", path + ".weights.bin"
        if not (os.path.exists(mpath) and os.path.exists(bpath)):
            raise CheckpointError(f"missing manifest/blob pair at '{path}'")
        try:
            with open(mpath, "r", encoding="utf-8") as f:
                manifest = json.load(f)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise CheckpointError(f"corrupt manifest: {e}") from e
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint version mismatch: {manifest.get('format_version')} "
                f"!= {CHECKPOINT_VERSION}")
        try:
            cfg = ModelConfig.from_dict(manifest["config"])
            table = manifest["tensors"]
            total = int(manifest["total_elements"])
        except (KeyError, TypeError, ConfigError) as e:
            raise CheckpointError(f"corrupt manifest: {e}") from e

        # the tensor table must tile [0, total) exactly: no overlap, no gaps
        cursor = 0
        for entry in sorted(table, key=lambda t: t["offset"]):
            n = int(np.prod(entry["shape"])) if entry["shape"] else 1
            if entry["offset"] != cursor:
                raise CheckpointError(
                    f"tensor table offset overlap/gap at '{entry['name']}' "
                    f"(offset {entry['offset']}, expected {cursor})")
            cursor += n
        if cursor != total:
            raise CheckpointError(f"tensor table covers {cursor} elements, manifest says {total}")

        blob = np.fromfile(bpath, dtype="<f4")
        if blob.size != total:
            raise CheckpointError(f"blob holds {blob.size} elements, manifest says {total}")

        params = {}
        for entry in table:
            n = int(np.prod(entry["shape"])) if entry["shape"] else 1
            params[entry["name"]] = blob[entry["offset"]:entry["offset"] + n] \
                .astype(np.float64).reshape(entry["shape"])
        want = _param_names(cfg)
        if sorted(params.keys()) != sorted(want):
            raise CheckpointError("tensor table names do not match the config's parameters")
        return cls(cfg, {name: params[name] for name in want})


def _conv_cols(x, p: Conv1dParams):
    """Padded sliding windows of a conv input, flattened per position.

    Shape (B * L_out, in_ch * k): the exact operand of each output column's
    scalar products, used for effective-operation counting.
    """
    B, C, L = x.shape
    k = p.kernel.shape[2]
    Lp = conv1d_out_len(L, k, p.padding)
    xpad = np.zeros((B, C, L + 2 * p.padding))
    xpad[:, :, p.padding:p.padding + L] = x
    stride_b, stride_c, stride_t = xpad.strides
    win = np.lib.stride_tricks.as_strided(
        xpad, shape=(B, Lp, C, k), strides=(stride_b, stride_t, stride_c, stride_t),
        writeable=False)
    return win.reshape(B * Lp, C * k)
