"""Dense float64 tensor arithmetic, a deterministic RNG, and gradient checks.

Tensors throughout the package are plain C-contiguous ``numpy.ndarray`` of
float64; public operations here validate operand shapes and reject
non-finite results so numerical bugs surface at the call site instead of
propagating.  Compute runs in 8-byte precision so finite-difference
verification is meaningful; the 4-byte convention used for footprint
accounting lives in :mod:`spikedec.bench`.

The :class:`Rng` produces one fixed, platform-independent stream per seed.
It runs a bank of xoshiro256** generators (splitmix64-seeded) in lockstep
so bulk draws stay vectorised without changing the stream.
"""

import numpy as np

from .errors import DimensionError, EvalError

__all__ = ["as_tensor", "matmul", "ewise", "grad_check", "Rng"]


def as_tensor(values) -> np.ndarray:
    """Convert to a C-contiguous float64 array and verify finiteness."""
    t = np.ascontiguousarray(values, dtype=np.float64)
    if not np.isfinite(t).all():
        raise EvalError("tensor contains non-finite values")
    return t


def _check_finite(t: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(t).all():
        raise EvalError(f"{op} produced non-finite values")
    return t


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of a 2-D (m,k) by (k,n) pair.

    Raises :class:`DimensionError` naming both shapes when the inner
    dimensions disagree.  Inputs are never modified.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return _check_finite(a @ b, "matmul")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_UNARY = {
    "sigmoid": _sigmoid,
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
    # at-threshold convention: h(0) = 0, strict inequality
    "heaviside": lambda x: (x > 0).astype(np.float64),
}

_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def ewise(op: str, a: np.ndarray, b: np.ndarray = None) -> np.ndarray:
    """Elementwise operation; binary ops require exactly equal shapes."""
    a = np.asarray(a, dtype=np.float64)
    if op in _UNARY:
        if b is not None:
            raise DimensionError(f"ewise '{op}' is unary")
        return _check_finite(_UNARY[op](a), f"ewise {op}")
    if op in _BINARY:
        if b is None:
            raise DimensionError(f"ewise '{op}' needs a second operand")
        b = np.asarray(b, dtype=np.float64)
        if a.shape != b.shape:
            raise DimensionError(f"ewise '{op}' shape mismatch: {a.shape} vs {b.shape}")
        return _check_finite(_BINARY[op](a, b), f"ewise {op}")
    raise ValueError(f"unknown ewise op '{op}'")


def grad_check(f, x: np.ndarray, eps: float = 1e-6) -> float:
    """Compare the analytic gradient of a scalar function to central differences.

    ``f(x)`` must return ``(value, grad)`` where ``grad`` has the shape of
    ``x``.  Returns ``max_i |fd_i - an_i| / max(1, |fd_i|, |an_i|)``.
    """
    x = as_tensor(x)
    value, grad = f(x)
    if not np.isfinite(value):
        raise EvalError("grad_check: function value is non-finite")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != x.shape:
        raise DimensionError(f"gradient shape {grad.shape} does not match input {x.shape}")
    worst = 0.0
    flat = x.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += eps
        xm[i] -= eps
        fp, _ = f(xp.reshape(x.shape))
        fm, _ = f(xm.reshape(x.shape))
        fd = (fp - fm) / (2.0 * eps)
        an = grad.reshape(-1)[i]
        err = abs(fd - an) / max(1.0, abs(fd), abs(an))
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Deterministic RNG
# ---------------------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_LANES = 4096  # fixed: part of the stream definition

_U53 = 1.0 / float(1 << 53)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Rng:
    """Seeded deterministic random stream (xoshiro256**, splitmix64-seeded).

    A fixed number of xoshiro lanes advance in lockstep and their outputs
    interleave block by block, so the sequence for a given seed is identical
    no matter how draws are grouped, across platforms and numpy versions.
    Instances are single-threaded and must not be shared.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        counters = np.arange(1, 4 * _LANES + 1, dtype=np.uint64)
        raw = _splitmix64(np.uint64(self.seed) + _GOLDEN * counters)
        s = raw.reshape(4, _LANES)
        dead = (s == 0).all(axis=0)
        if dead.any():  # an all-zero xoshiro state never leaves zero
            s[0, dead] = np.uint64(1)
        self._s0, self._s1, self._s2, self._s3 = (s[i].copy() for i in range(4))
        self._buf = np.empty(0, dtype=np.uint64)
        self._pos = 0

    def _next_block(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        out = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl(s3, 45)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return out

    def u64(self, size: int = None):
        """Next raw 64-bit draw(s) from the stream."""
        if size is None:
            return int(self.u64(1)[0])
        need = int(size)
        chunks = []
        avail = self._buf.size - self._pos
        if avail:
            take = min(avail, need)
            chunks.append(self._buf[self._pos:self._pos + take])
            self._pos += take
            need -= take
        while need > 0:
            block = self._next_block()
            if need >= block.size:
                chunks.append(block)
                need -= block.size
            else:
                chunks.append(block[:need])
                self._buf = block
                self._pos = need
                need = 0
        return np.concatenate(chunks) if len(chunks) != 1 else chunks[0].copy()

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        """Uniform draws in [low, high)."""
        if size is None:
            return float(self.uniform(low, high, 1)[0])
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        u = (self.u64(n) >> np.uint64(11)).astype(np.float64) * _U53
        return (low + (high - low) * u).reshape(shape)

    def normal(self, mu: float = 0.0, sigma: float = 1.0, size=None):
        """Gaussian draws via Box-Muller (consumes 2 uniforms per pair)."""
        if size is None:
            return float(self.normal(mu, sigma, 1)[0])
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        raw = self.u64(2 * m)
        u1 = ((raw[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * _U53  # (0, 1]
        u2 = (raw[m:] >> np.uint64(11)).astype(np.float64) * _U53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return (mu + sigma * z).reshape(shape)

    def poisson(self, lam: np.ndarray) -> np.ndarray:
        """Poisson counts by exact inverse-CDF, one uniform per element.

        Intended for the small rates of binned spike generation; counts are
        capped at 255 (and the CDF walk at 255 terms).
        """
        lam = np.asarray(lam, dtype=np.float64)
        u = self.uniform(size=lam.size).reshape(lam.shape)
        p = np.exp(-lam)
        cdf = p.copy()
        counts = np.zeros(lam.shape, dtype=np.int64)
        k = 0
        while True:
            pending = u > cdf
            if not pending.any() or k >= 255:
                break
            counts[pending] += 1
            k += 1
            p = p * lam / k
            cdf = cdf + p
        return counts

    def integers(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection."""
        if n <= 0:
            raise ValueError("integers() needs n >= 1")
        span = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.u64()
            if v < span:
                return v % n

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        idx = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integers(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx
