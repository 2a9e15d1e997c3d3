"""Accuracy and resource metrics: R^2, footprint, sparsities, operation counts.

Counting rules (fixed here, applied uniformly):

- A synaptic layer is one weight matrix application (each conv kernel, each
  recurrent W/U/V matrix, the readout).  Elementwise gate/state arithmetic
  is never counted.
- ``dense`` assumes no zeros: fan_in * fan_out scalar products per position,
  plus one accumulate per output element when the layer carries a bias.
- Effective operations count each scalar product whose weight and input
  activation are both nonzero, plus one accumulate per nonzero bias element.
  They classify as ACs when the layer's input is binary-valued (raw spike
  bins, spike vectors, or the binary hidden state of the spiking GRU) and as
  MACs otherwise; a layer's bias accumulates inherit its classification.
- All totals are averaged per input step (divided by windows * seq_len).

Activation sparsity pools the recurrent-unit outputs (hidden state or spike
vectors) over all steps.  Post-ReLU conv activations are recorded in the
trace and reported per layer, but excluded from the headline number: the
reference results this module is compared against report exactly zero
sparsity for pure-GRU decoders, which is only consistent with a
recurrent-outputs-only pool.

Footprint counts every persisted element at 4 bytes: parameters, the scalar
neuron constants recorded with a model, the seq_len x channels input buffer,
and the recurrent/membrane state.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EvalError, UsageError

__all__ = ["ActivationTrace", "BenchReport", "r2_score", "footprint",
           "connection_sparsity", "activation_sparsity", "count_ops", "run_bench"]


@dataclass
class SynapticEntry:
    layer_id: str
    weight: np.ndarray      # (fan_in, fan_out)
    bias: np.ndarray        # (fan_out,) or None
    inputs: np.ndarray      # (positions, fan_in) actual operands
    binary_input: bool


@dataclass
class ActivationTrace:
    """Per-forward record of synaptic operands and activation outputs."""
    synaptic: list = field(default_factory=list)
    activations: list = field(default_factory=list)      # pooled into sparsity
    aux_activations: list = field(default_factory=list)  # reported per layer only
    steps: int = 0  # windows * seq_len represented by this trace

    def add_synaptic(self, layer_id, weight, bias, inputs, binary_input):
        weight = np.asarray(weight)
        inputs = np.asarray(inputs)
        if inputs.ndim != 2 or inputs.shape[1] != weight.shape[0]:
            raise UsageError(
                f"trace entry '{layer_id}': inputs {inputs.shape} vs weight {weight.shape}")
        self.synaptic.append(SynapticEntry(layer_id, weight, bias, inputs, binary_input))

    def add_activation(self, layer_id, values):
        self.activations.append((layer_id, np.asarray(values)))

    def add_aux_activation(self, layer_id, values):
        self.aux_activations.append((layer_id, np.asarray(values)))

    def layer_ids(self):
        return [e.layer_id for e in self.synaptic]


@dataclass
class BenchReport:
    """One row of the benchmark table (per-step averages where applicable)."""
    footprint_bytes: int
    connection_sparsity: float
    activation_sparsity: float
    dense: float
    macs: float
    acs: float
    r2: float
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"footprint_bytes": self.footprint_bytes,
                "connection_sparsity": self.connection_sparsity,
                "activation_sparsity": self.activation_sparsity,
                "dense": self.dense, "macs": self.macs, "acs": self.acs,
                "r2": self.r2, "detail": self.detail}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    CSV_HEADER = "footprint_bytes,connection_sparsity,activation_sparsity,dense,macs,acs,r2"

    def csv_row(self):
        return (f"{self.footprint_bytes},{self.connection_sparsity:.6g},"
                f"{self.activation_sparsity:.6g},{self.dense:.6g},"
                f"{self.macs:.6g},{self.acs:.6g},{self.r2:.6g}")


def r2_score(pred, target) -> float:
    """Coefficient of determination averaged over the two velocity dimensions.

    R^2_d = 1 - sum((pred - target)^2) / sum((target - mean)^2) per dimension.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise EvalError(f"r2_score shape mismatch: {pred.shape} vs {target.shape}")
    if pred.ndim != 2 or pred.shape[0] < 2:
        raise EvalError(f"r2_score needs (T>=2, D) arrays, got {pred.shape}")
    mean = target.mean(axis=0)
    ss_tot = ((target - mean) ** 2).sum(axis=0)
    if (ss_tot == 0.0).any():
        raise EvalError("r2_score undefined: a target dimension is constant")
    ss_res = ((pred - target) ** 2).sum(axis=0)
    return float((1.0 - ss_res / ss_tot).mean())


def footprint(model) -> int:
    """Bytes at 4 per element: parameters + neuron constants + buffers + state."""
    cfg = model.cfg
    elements = (model.param_count() + model.neuron_constant_count()
                + cfg.seq_len * cfg.input_channels + model.state_element_count())
    return 4 * elements


def connection_sparsity(model) -> float:
    """Zero-valued weight elements / total weight elements (weight matrices only)."""
    zero = total = 0
    for name, v in model.params.items():
        if name.endswith((".b", ".bias")) or ".b_" in name:
            continue
        zero += int((v == 0.0).sum())
        total += v.size
    return zero / total if total else 0.0


def activation_sparsity(trace: ActivationTrace) -> float:
    """Exactly-zero fraction pooled over the trace's counted activation layers."""
    if not trace.activations:
        raise UsageError("trace holds no activation layers")
    zero = total = 0
    for _, values in trace.activations:
        zero += int((values == 0.0).sum())
        total += values.size
    return zero / total


def synaptic_layer_counts(entry: SynapticEntry):
    """(dense, effective) scalar-operation totals for one synaptic layer."""
    positions = entry.inputs.shape[0]
    fan_in, fan_out = entry.weight.shape
    dense = positions * fan_in * fan_out
    wmask = (entry.weight != 0.0).astype(np.float64)
    amask = (entry.inputs != 0.0).astype(np.float64)
    # sum over (position, in, out) of [a != 0][w != 0], factored per in-index
    effective = float(amask.sum(axis=0) @ wmask.sum(axis=1))
    if entry.bias is not None:
        dense += positions * fan_out
        effective += positions * int((np.asarray(entry.bias) != 0.0).sum())
    return dense, effective


def count_ops(model, trace: ActivationTrace):
    """(dense, macs, acs) per input step for one forward's trace."""
    if trace.steps <= 0:
        raise UsageError("trace does not record its step count")
    expected = _expected_layer_ids(model.cfg)
    if trace.layer_ids() != expected:
        raise UsageError(
            f"trace/model mismatch: {trace.layer_ids()} vs expected {expected}")
    dense = macs = acs = 0.0
    for entry in trace.synaptic:
        d, e = synaptic_layer_counts(entry)
        dense += d
        if entry.binary_input:
            acs += e
        else:
            macs += e
    return dense / trace.steps, macs / trace.steps, acs / trace.steps


def _expected_layer_ids(cfg):
    ids = [f"conv{i}" for i in range(len(cfg.conv_blocks))]
    if cfg.recurrence == "gru":
        ids += ["gru.W_z", "gru.W_r", "gru.W_h", "gru.U_z", "gru.U_r", "gru.U_h"]
    elif cfg.recurrence == "lif":
        ids += ["lif.W", "lif.V"]
    else:
        ids += ["sgru.W_r", "sgru.W_z", "sgru.W_h", "sgru.U_r", "sgru.U_z", "sgru.U_h"]
    ids.append("out")
    return ids


def run_bench(model, recording, batch: int = 8) -> BenchReport:
    """Evaluate over all non-overlapping seq_len windows of a recording."""
    cfg = model.cfg
    T = recording.spikes.shape[0]
    n_win = T // cfg.seq_len
    if n_win < 1:
        raise ConfigError(f"recording too short to window: T={T} < {cfg.seq_len}")

    spikes = recording.spikes[:n_win * cfg.seq_len].astype(np.float64)
    vels = recording.velocities[:n_win * cfg.seq_len].astype(np.float64)
    xw = spikes.reshape(n_win, cfg.seq_len, cfg.input_channels).transpose(0, 2, 1)

    dense = macs = acs = 0.0
    zero = total = 0
    per_layer_zero = {}
    per_layer_total = {}
    preds = np.empty((n_win, cfg.seq_len, 2))
    steps_done = 0
    for lo in range(0, n_win, batch):
        xb = xw[lo:lo + batch]
        vel, trace = model.forward(xb)
        preds[lo:lo + xb.shape[0]] = vel
        d, m, a = count_ops(model, trace)
        w = trace.steps
        dense += d * w
        macs += m * w
        acs += a * w
        steps_done += w
        for _, values in trace.activations:
            zero += int((values == 0.0).sum())
            total += values.size
        for lid, values in list(trace.activations) + list(trace.aux_activations):
            per_layer_zero[lid] = per_layer_zero.get(lid, 0) + int((values == 0.0).sum())
            per_layer_total[lid] = per_layer_total.get(lid, 0) + values.size

    r2 = r2_score(preds.reshape(-1, 2), vels)
    detail = {
        "windows": n_win,
        "parameters": model.param_count(),
        "per_layer_activation_sparsity": {
            lid: per_layer_zero[lid] / per_layer_total[lid] for lid in per_layer_zero},
    }
    return BenchReport(
        footprint_bytes=footprint(model),
        connection_sparsity=connection_sparsity(model),
        activation_sparsity=zero / total,
        dense=dense / steps_done,
        macs=macs / steps_done,
        acs=acs / steps_done,
        r2=r2,
        detail=detail,
    )
