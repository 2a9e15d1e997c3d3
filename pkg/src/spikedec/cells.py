"""Recurrent units: GRU, recurrent LIF, and the spiking GRU (sGRU).

Each cell exposes a single-step forward returning ``(output, cache)`` and a
matching backward that is an exact vector-Jacobian product of that step.
Spiking nonlinearities emit hard 0/1 values in the forward pass; their
backward substitutes the arctan surrogate derivative.  Passing
``relaxed=True`` replaces the step function by the surrogate's smooth
antiderivative so the very same backward code becomes the exact gradient of
the relaxed forward -- that is what the finite-difference checks exercise.

Conventions fixed here: LIF uses reset-by-subtraction applied from the
previous step's spikes, decay ``beta`` (default 0.9), threshold ``theta``
(default 1.0), arctan surrogate with slope 2.0; membrane at exactly the
threshold does not spike.  The sGRU gates carry no bias terms and apply
their subtraction reset within the step, so gate state is the membrane
vector alone.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

__all__ = [
    "NeuronSpec", "GruParams", "LifParams", "SgruParams", "CellState",
    "surrogate_grad", "surrogate_step",
    "gru_forward", "gru_backward",
    "lif_forward", "lif_backward",
    "sgru_forward", "sgru_backward",
]

DEFAULT_BETA = 0.9
DEFAULT_THETA = 1.0
DEFAULT_SLOPE = 2.0


def surrogate_grad(v, slope: float):
    """Arctan surrogate for d/dv heaviside(v): (slope/2) / (1 + (pi*slope*v/2)^2).

    Peaks at slope/2 for v = 0 and integrates to 1 over the real line.
    """
    if slope <= 0:
        raise ValueError("surrogate slope must be > 0")
    v = np.asarray(v, dtype=np.float64)
    return (slope / 2.0) / (1.0 + (np.pi * slope * v / 2.0) ** 2)


def surrogate_step(v, slope: float):
    """Smooth step whose derivative is :func:`surrogate_grad` (0 at -inf, 1 at +inf)."""
    v = np.asarray(v, dtype=np.float64)
    return 0.5 + np.arctan(np.pi * slope * v / 2.0) / np.pi


def _hard_step(v):
    return (v > 0).astype(np.float64)


@dataclass
class NeuronSpec:
    """Leaky integrate-and-fire constants for one neuron population."""
    beta: float = DEFAULT_BETA
    theta: float = DEFAULT_THETA
    surrogate_slope: float = DEFAULT_SLOPE

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.theta <= 0.0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if self.surrogate_slope <= 0.0:
            raise ValueError(f"surrogate_slope must be > 0, got {self.surrogate_slope}")


@dataclass
class GruParams:
    """Gated recurrent unit weights; W_*: (in, hidden), U_*: (hidden, hidden)."""
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        din, dh = self.W_z.shape
        for name in ("W_z", "W_r", "W_h"):
            if getattr(self, name).shape != (din, dh):
                raise DimensionError(f"{name} shape {getattr(self, name).shape} != ({din},{dh})")
        for name in ("U_z", "U_r", "U_h"):
            if getattr(self, name).shape != (dh, dh):
                raise DimensionError(f"{name} shape {getattr(self, name).shape} != ({dh},{dh})")
        for name in ("b_z", "b_r", "b_h"):
            if getattr(self, name).shape != (dh,):
                raise DimensionError(f"{name} shape {getattr(self, name).shape} != ({dh},)")

    @property
    def hidden(self):
        return self.W_z.shape[1]


@dataclass
class LifParams:
    """Recurrent LIF layer: feed-forward W (in, hidden), recurrent V (hidden, hidden)."""
    W: np.ndarray
    V: np.ndarray
    beta: float = DEFAULT_BETA
    theta: float = DEFAULT_THETA
    surrogate_slope: float = DEFAULT_SLOPE

    def __post_init__(self):
        NeuronSpec(self.beta, self.theta, self.surrogate_slope)  # validate ranges
        dh = self.W.shape[1]
        if self.V.shape != (dh, dh):
            raise DimensionError(f"V shape {self.V.shape} != ({dh},{dh})")

    @property
    def hidden(self):
        return self.W.shape[1]


@dataclass
class SgruParams:
    """Spiking GRU: bias-free gate weights plus one LIF spec per gate (r, z, h)."""
    W_r: np.ndarray
    W_z: np.ndarray
    W_h: np.ndarray
    U_r: np.ndarray
    U_z: np.ndarray
    U_h: np.ndarray
    r_neuron: NeuronSpec = field(default_factory=NeuronSpec)
    z_neuron: NeuronSpec = field(default_factory=NeuronSpec)
    h_neuron: NeuronSpec = field(default_factory=NeuronSpec)

    def __post_init__(self):
        din, dh = self.W_r.shape
        for name in ("W_r", "W_z", "W_h"):
            if getattr(self, name).shape != (din, dh):
                raise DimensionError(f"{name} shape {getattr(self, name).shape} != ({din},{dh})")
        for name in ("U_r", "U_z", "U_h"):
            if getattr(self, name).shape != (dh, dh):
                raise DimensionError(f"{name} shape {getattr(self, name).shape} != ({dh},{dh})")

    @property
    def hidden(self):
        return self.W_r.shape[1]


@dataclass
class CellState:
    """Per-evaluation recurrent state; never shared between evaluations.

    h: hidden state (GRU, sGRU); u: membrane potentials -- (B, hidden) for
    LIF, (3, B, hidden) for the sGRU gates in (r, z, h) order; s_prev:
    previous spike vector (LIF only).
    """
    h: np.ndarray = None
    u: np.ndarray = None
    s_prev: np.ndarray = None

    @classmethod
    def zeros(cls, kind: str, batch: int, hidden: int) -> "CellState":
        shape = (batch, hidden)
        if kind == "gru":
            return cls(h=np.zeros(shape))
        if kind == "lif":
            return cls(u=np.zeros(shape), s_prev=np.zeros(shape))
        if kind == "sgru":
            return cls(h=np.zeros(shape), u=np.zeros((3, batch, hidden)))
        raise ValueError(f"unknown cell kind '{kind}'")


def _row(x, din):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    if x.ndim != 2 or x.shape[1] != din:
        raise DimensionError(f"cell input shape {x.shape} does not match in dim {din}")
    return x


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------

def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_forward(p: GruParams, x, st: CellState):
    """One GRU step; updates st.h in place and returns (h_next, cache)."""
    x = _row(x, p.W_z.shape[0])
    h = st.h
    z = _sigmoid(x @ p.W_z + h @ p.U_z + p.b_z)
    r = _sigmoid(x @ p.W_r + h @ p.U_r + p.b_r)
    rh = r * h
    c = np.tanh(x @ p.W_h + rh @ p.U_h + p.b_h)
    h_next = (1.0 - z) * h + z * c
    cache = {"x": x, "h_prev": h, "z": z, "r": r, "c": c, "rh": rh, "params": p}
    st.h = h_next
    return h_next, cache


def gru_backward(cache, g_h):
    """VJP of one GRU step.

    Returns (g_x, g_h_prev, grads) with grads keyed like the parameter fields.
    """
    p: GruParams = cache["params"]
    x, h, z, r, c, rh = (cache[k] for k in ("x", "h_prev", "z", "r", "c", "rh"))
    g_h = np.asarray(g_h, dtype=np.float64)

    dz = g_h * (c - h)
    dc = g_h * z
    dh_prev = g_h * (1.0 - z)

    da_c = dc * (1.0 - c * c)
    drh = da_c @ p.U_h.T
    dr = drh * h
    dh_prev = dh_prev + drh * r

    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)

    g_x = da_c @ p.W_h.T + da_z @ p.W_z.T + da_r @ p.W_r.T
    dh_prev = dh_prev + da_z @ p.U_z.T + da_r @ p.U_r.T

    grads = {
        "W_z": x.T @ da_z, "W_r": x.T @ da_r, "W_h": x.T @ da_c,
        "U_z": h.T @ da_z, "U_r": h.T @ da_r, "U_h": rh.T @ da_c,
        "b_z": da_z.sum(axis=0), "b_r": da_r.sum(axis=0), "b_h": da_c.sum(axis=0),
    }
    return g_x, dh_prev, grads


# ---------------------------------------------------------------------------
# Recurrent LIF
# ---------------------------------------------------------------------------

def lif_forward(p: LifParams, x, st: CellState, relaxed: bool = False):
    """One LIF step: u' = beta*u + W'x + V's_prev - theta*s_prev, s = step(u' - theta).

    The subtraction reset uses the previous step's spikes, so the stored
    membrane is the post-integration value.  Returns (spikes, cache) and
    updates st to (u', s).
    """
    x = _row(x, p.W.shape[0])
    u_prev, s_prev = st.u, st.s_prev
    current = x @ p.W + s_prev @ p.V
    u_new = p.beta * u_prev + current - p.theta * s_prev
    arg = u_new - p.theta
    s = surrogate_step(arg, p.surrogate_slope) if relaxed else _hard_step(arg)
    cache = {"x": x, "s_prev": s_prev, "u_new": u_new, "params": p}
    st.u = u_new
    st.s_prev = s
    return s, cache


def lif_backward(cache, g_s, g_u):
    """VJP of one LIF step.

    ``g_s`` is the loss gradient w.r.t. the emitted spikes, ``g_u`` the
    gradient w.r.t. the stored membrane (flowing back from the next step).
    Returns (g_x, g_u_prev, g_s_prev, grads).
    """
    p: LifParams = cache["params"]
    x, s_prev, u_new = cache["x"], cache["s_prev"], cache["u_new"]
    surr = surrogate_grad(u_new - p.theta, p.surrogate_slope)
    du = np.asarray(g_u, dtype=np.float64) + np.asarray(g_s, dtype=np.float64) * surr
    g_u_prev = p.beta * du
    g_s_prev = du @ p.V.T - p.theta * du
    grads = {"W": x.T @ du, "V": s_prev.T @ du}
    g_x = du @ p.W.T
    return g_x, g_u_prev, g_s_prev, grads


# ---------------------------------------------------------------------------
# Spiking GRU
# ---------------------------------------------------------------------------

def _gate_step(spec: NeuronSpec, u_prev, a, relaxed):
    """LIF gate with in-step subtraction reset; state is the membrane alone."""
    u_int = spec.beta * u_prev + a
    arg = u_int - spec.theta
    s = surrogate_step(arg, spec.surrogate_slope) if relaxed else _hard_step(arg)
    u_new = u_int - spec.theta * s
    return s, u_int, u_new


def sgru_forward(p: SgruParams, x, st: CellState, relaxed: bool = False):
    """One sGRU step (gates are LIF spike vectors; candidate gated by 1 - r).

    r = LIF(W_r x + U_r h), z = LIF(W_z x + U_z h),
    c = LIF(W_h x + U_h((1 - r) * h)), h' = (1 - z) * h + z * c.
    Updates st (h and the three gate membranes) and returns (h_next, cache).
    """
    x = _row(x, p.W_r.shape[0])
    h = st.h
    u_r, u_z, u_c = st.u[0], st.u[1], st.u[2]

    r, ur_int, ur_new = _gate_step(p.r_neuron, u_r, x @ p.W_r + h @ p.U_r, relaxed)
    z, uz_int, uz_new = _gate_step(p.z_neuron, u_z, x @ p.W_z + h @ p.U_z, relaxed)
    gate_in = (1.0 - r) * h
    c, uc_int, uc_new = _gate_step(p.h_neuron, u_c, x @ p.W_h + gate_in @ p.U_h, relaxed)
    h_next = (1.0 - z) * h + z * c

    cache = {"x": x, "h_prev": h, "r": r, "z": z, "c": c, "gate_in": gate_in,
             "ur_int": ur_int, "uz_int": uz_int, "uc_int": uc_int, "params": p}
    st.h = h_next
    st.u = np.stack([ur_new, uz_new, uc_new])
    return h_next, cache


def sgru_backward(cache, g_h, g_u):
    """VJP of one sGRU step.

    ``g_u`` has shape (3, B, hidden) matching the stored gate membranes.
    Returns (g_x, g_h_prev, g_u_prev, grads).
    """
    p: SgruParams = cache["params"]
    x, h, r, z, c, gate_in = (cache[k] for k in ("x", "h_prev", "r", "z", "c", "gate_in"))
    g_h = np.asarray(g_h, dtype=np.float64)

    dz = g_h * (c - h)
    dc = g_h * z
    dh_prev = g_h * (1.0 - z)

    def gate_back(spec, u_int, ds, g_u_new):
        surr = surrogate_grad(u_int - spec.theta, spec.surrogate_slope)
        du_int = ds * surr + g_u_new * (1.0 - spec.theta * surr)
        return du_int, spec.beta * du_int

    # candidate first: it feeds gradient into r
    da_c, g_uc_prev = gate_back(p.h_neuron, cache["uc_int"], dc, g_u[2])
    dgate_in = da_c @ p.U_h.T
    dr = -dgate_in * h
    dh_prev = dh_prev + dgate_in * (1.0 - r)

    da_z, g_uz_prev = gate_back(p.z_neuron, cache["uz_int"], dz, g_u[1])
    da_r, g_ur_prev = gate_back(p.r_neuron, cache["ur_int"], dr, g_u[0])

    g_x = da_c @ p.W_h.T + da_z @ p.W_z.T + da_r @ p.W_r.T
    dh_prev = dh_prev + da_z @ p.U_z.T + da_r @ p.U_r.T

    grads = {
        "W_r": x.T @ da_r, "W_z": x.T @ da_z, "W_h": x.T @ da_c,
        "U_r": h.T @ da_r, "U_z": h.T @ da_z, "U_h": gate_in.T @ da_c,
    }
    return g_x, dh_prev, np.stack([g_ur_prev, g_uz_prev, g_uc_prev]), grads
