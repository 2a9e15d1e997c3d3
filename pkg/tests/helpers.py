"""Shared test utilities: flatten/unflatten parameter collections for FD checks."""

import numpy as np


def pack(arrays):
    """Flatten a list of arrays into one vector plus shape metadata."""
    vec = np.concatenate([np.asarray(a, dtype=np.float64).reshape(-1) for a in arrays])
    shapes = [np.asarray(a).shape for a in arrays]
    return vec, shapes


def unpack(vec, shapes):
    out = []
    pos = 0
    for shape in shapes:
        n = int(np.prod(shape)) if shape else 1
        out.append(vec[pos:pos + n].reshape(shape))
        pos += n
    return out


def random_projection_loss(rng, shape):
    """Fixed random weights turning a tensor-valued output into a scalar."""
    w = rng.normal(size=shape)
    return w, lambda y: float((w * y).sum())
