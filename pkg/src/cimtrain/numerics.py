"""Deterministic dense math shared by every other module.

Matrices are plain 2-D float64 numpy arrays, batches stored column-wise
(features x samples). The exact ops here (`matmul`, `hadamard`, `outer`)
accumulate in a fixed ascending order and match a naive loop bitwise; the
bulk training paths elsewhere use BLAS, which reassociates sums and is
documented as such.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

# The one PRNG used anywhere: counter-based, platform-stable.
PRNG_ALGORITHM = "philox4x32-10"

QUANTIZER_MODES = ("nearest", "stochastic")


def make_rng(seed: int) -> np.random.Generator:
    """Seeded Philox generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def derive_rng(seed: int, *tags: str) -> np.random.Generator:
    """Independent substream keyed by (seed, tags), stable across platforms."""
    h = hashlib.sha256()
    h.update(b"cimtrain")
    h.update(int(seed).to_bytes(16, "little", signed=True))
    for tag in tags:
        h.update(b"\x00" + tag.encode("utf-8"))
    key = int.from_bytes(h.digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def check_matrix(x, name: str = "matrix") -> np.ndarray:
    """Validate a dense 2-D real matrix and return it as float64."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_vector(x, name: str = "vector") -> np.ndarray:
    """Accept a 1-D array or a single-column matrix; return it 1-D float64."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 2 and a.shape[1] == 1:
        a = a[:, 0]
    if a.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    """Exact matrix product, accumulated over k in ascending order.

    Bitwise identical to the triple-loop definition (each output entry is
    a left-to-right running sum), unlike BLAS.
    """
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) x ({b.shape[0]}x{b.shape[1]})"
        )
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def hadamard(a, b) -> np.ndarray:
    """Elementwise product of two equal-shape matrices."""
    a = check_matrix(a, "a")
    b = check_matrix(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def outer(u, v) -> np.ndarray:
    """Outer product of two column vectors: out[i, j] = u[i] * v[j]."""
    u = check_vector(u, "u")
    v = check_vector(v, "v")
    return np.outer(u, v)


@dataclass(frozen=True)
class Quantizer:
    """Uniform symmetric fake-quantizer over [-range, +range].

    For bits >= 2 the grid is zero-inclusive: levels k*step with
    step = 2*range/(2^bits - 1) and |k| <= 2^(bits-1) - 1. For bits == 1
    the grid is {-range, +range}. Nearest mode breaks ties toward the
    even level index; stochastic mode rounds to a bracketing level with
    expectation equal to the clipped input.
    """

    bits: int
    range: float
    mode: str = "nearest"

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError(f"bits must be >= 1, got {self.bits}")
        if not self.range > 0:
            raise ValueError(f"range must be positive, got {self.range}")
        if self.mode not in QUANTIZER_MODES:
            raise ValueError(f"mode must be one of {QUANTIZER_MODES}, got {self.mode!r}")

    @property
    def step(self) -> float:
        if self.bits == 1:
            return 2.0 * self.range
        return 2.0 * self.range / (2**self.bits - 1)

    @property
    def levels(self) -> np.ndarray:
        if self.bits == 1:
            return np.array([-self.range, self.range])
        k_max = 2 ** (self.bits - 1) - 1
        return np.arange(-k_max, k_max + 1) * self.step


def quantize(x, q: Quantizer, rng: np.random.Generator | None = None) -> np.ndarray:
    """Snap every entry of x onto the quantizer grid (values stay float64)."""
    if q.mode == "stochastic" and rng is None:
        raise ValueError("stochastic quantization requires an rng")
    x = np.asarray(x, dtype=np.float64)
    xc = np.clip(x, -q.range, q.range)

    if q.bits == 1:
        if q.mode == "nearest":
            # index 0 -> -r, index 1 -> +r; rint gives the even index on ties
            k = np.rint((xc + q.range) / (2.0 * q.range))
        else:
            p_up = (xc + q.range) / (2.0 * q.range)
            k = (rng.random(xc.shape) < p_up).astype(np.float64)
        return (2.0 * k - 1.0) * q.range

    k_max = 2 ** (q.bits - 1) - 1
    t = xc / q.step
    if q.mode == "nearest":
        k = np.rint(t)
    else:
        lo = np.floor(t)
        k = lo + (rng.random(xc.shape) < (t - lo))
    return np.clip(k, -k_max, k_max) * q.step
