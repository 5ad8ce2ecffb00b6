"""Seeded random problem instances.

Randomness comes from the Philox4x64-10 counter-based generator keyed by
``(seed, stream)``: the low 64 key bits hold the instance seed, the high 64
bits a fixed stream id. The matrix, the support, the nonzero values and the
noise each get their own stream, so changing the noise level never changes
``A`` or ``x*``.

Only the raw 64-bit Philox words are taken from numpy; the transforms on
top of them are spelled out here so that another implementation can
reproduce an instance bit for bit:

* uniform:  ``((w >> 11) + 0.5) * 2**-53``, which lies in (0, 1)
* normal:   Box-Muller on consecutive uniform pairs ``(u1, u2)``, emitting
  ``r cos(2 pi u2)`` then ``r sin(2 pi u2)`` with ``r = sqrt(-2 log u1)``
* integer below ``b``: rejection of words ``>= 2**64 - (2**64 mod b)``,
  then ``w mod b``
* k-subset of ``range(n)``: the first ``k`` swaps of a Fisher-Yates
  shuffle, sorted
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .linalg import as_matrix, as_vector

__all__ = [
    "Regime",
    "ProblemInstance",
    "PhiloxStream",
    "GENERATOR_NAME",
    "derive_seed",
    "gaussian_instance",
    "planted_instance",
    "tight_frame_matrix",
    "normalize_pair",
    "instance_from_dict",
    "instance_from_json",
]

GENERATOR_NAME = "philox4x64-10/box-muller"

_MASK64 = (1 << 64) - 1
_TWO64 = 1 << 64

_MATRIX_STREAM = 0
_SUPPORT_STREAM = 1
_VALUES_STREAM = 2
_NOISE_STREAM = 3


class Regime(str, Enum):
    UNNORMALIZED = "unnormalized"
    NORMALIZED = "normalized"

    @classmethod
    def parse(cls, value) -> "Regime":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown regime {value!r}; expected 'normalized' or 'unnormalized'") from None


class PhiloxStream:
    """Deterministic draws from one ``(seed, stream)`` Philox key."""

    def __init__(self, seed: int, stream: int = 0):
        key = (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)
        self._bitgen = np.random.Philox(key=key)

    def raw(self, size: int) -> np.ndarray:
        return np.asarray(self._bitgen.random_raw(size), dtype=np.uint64)

    def uniforms(self, size: int) -> np.ndarray:
        words = self.raw(size) >> np.uint64(11)
        return (words.astype(np.float64) + 0.5) * 2.0**-53

    def normals(self, size: int) -> np.ndarray:
        pairs = (size + 1) // 2
        u = self.uniforms(2 * pairs)
        radius = np.sqrt(-2.0 * np.log(u[0::2]))
        angle = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return z[:size]

    def below(self, bound: int) -> int:
        if bound < 1:
            raise ValueError("bound must be positive")
        limit = _TWO64 - (_TWO64 % bound)
        while True:
            w = int(self._bitgen.random_raw())
            if w < limit:
                return w % bound

    def subset(self, n: int, k: int) -> np.ndarray:
        perm = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(sorted(perm[:k]), dtype=np.intp)


def derive_seed(base_seed: int, *parts) -> int:
    """64-bit seed ``base_seed XOR blake2b(parts)``; stable across runs and platforms."""
    text = ":".join(str(p) for p in parts).encode()
    digest = int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")
    return (int(base_seed) & _MASK64) ^ digest


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """``measurements = matrix @ true_signal + noise`` with ``noise = noise_level * h``."""

    matrix: np.ndarray
    true_signal: np.ndarray
    measurements: np.ndarray
    sparsity: int
    noise_level: float
    seed: int
    regime: Regime | None = None
    noise: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def to_dict(self, include_arrays: bool = False) -> dict:
        doc = {
            "generator": GENERATOR_NAME,
            "m": self.m,
            "n": self.n,
            "k": self.sparsity,
            "regime": self.regime.value if self.regime is not None else None,
            "noise_level": self.noise_level,
            "seed": self.seed,
        }
        if include_arrays or self.regime is None:
            doc["matrix"] = self.matrix.tolist()
            doc["true_signal"] = self.true_signal.tolist()
            doc["measurements"] = self.measurements.tolist()
        return doc

    def to_json(self, include_arrays: bool = False, **kwargs) -> str:
        return json.dumps(self.to_dict(include_arrays), **kwargs)


def _draw_signal(n: int, k: int, seed: int) -> np.ndarray:
    x = np.zeros(n)
    x[PhiloxStream(seed, _SUPPORT_STREAM).subset(n, k)] = PhiloxStream(seed, _VALUES_STREAM).normals(k)
    return x


def _measure(A: np.ndarray, x: np.ndarray, noise_level: float, seed: int):
    y = A @ x
    if noise_level == 0:
        return y, np.zeros_like(y)
    noise = noise_level * PhiloxStream(seed, _NOISE_STREAM).normals(A.shape[0])
    return y + noise, noise


def gaussian_instance(m: int, n: int, k: int, regime="normalized", noise_level: float = 0.0,
                      seed: int = 0) -> ProblemInstance:
    """Gaussian sensing matrix, k-sparse Gaussian signal, optional Gaussian noise.

    Unnormalized matrices have N(0, 1) entries, normalized ones N(0, 1/m);
    both are built from the same draws, so the normalized matrix is exactly
    the unnormalized one divided by ``sqrt(m)``. The support is a uniform
    k-subset and the nonzero values are standard normal.
    """
    regime = Regime.parse(regime)
    if not 1 <= k <= m < n:
        raise ValueError(f"need 1 <= k <= m < n, got m={m}, n={n}, k={k}")
    if noise_level < 0:
        raise ValueError("noise_level must be non-negative")
    A = PhiloxStream(seed, _MATRIX_STREAM).normals(m * n).reshape(m, n)
    if regime is Regime.NORMALIZED:
        A = A / math.sqrt(m)
    x = _draw_signal(n, k, seed)
    y, noise = _measure(A, x, noise_level, seed)
    return ProblemInstance(A, x, y, int(k), float(noise_level), int(seed), regime, noise)


def planted_instance(A, k: int, noise_level: float = 0.0, seed: int = 0) -> ProblemInstance:
    """Plant a seeded k-sparse signal (and noise) under a caller-supplied matrix."""
    A = as_matrix(A)
    m, n = A.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"need 1 <= k <= min(m, n), got k={k}")
    x = _draw_signal(n, k, seed)
    y, noise = _measure(A, x, noise_level, seed)
    return ProblemInstance(A, x, y, int(k), float(noise_level), int(seed), None, noise)


def tight_frame_matrix(m: int, n: int, seed: int = 0, iterations: int = 500) -> np.ndarray:
    """Unit-norm tight frame grown from a seeded Gaussian matrix.

    Alternates column normalisation with projection onto the nearest tight
    frame (``A A^T = (n/m) I``, via the polar factor). The result has unit
    columns and far smaller restricted isometry constants than a Gaussian
    matrix of the same tiny size, which makes RIP hypotheses certifiable by
    exhaustive enumeration.
    """
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    A = PhiloxStream(seed, _MATRIX_STREAM).normals(m * n).reshape(m, n)
    scale = math.sqrt(n / m)
    for _ in range(iterations):
        A = A / np.linalg.norm(A, axis=0)
        U, _, Vt = np.linalg.svd(A, full_matrices=False)
        A = scale * (U @ Vt)
    return A / np.linalg.norm(A, axis=0)


def normalize_pair(A, y):
    """Return ``(A / sqrt(m), y / sqrt(m))``.

    The least-squares objective only scales by ``1/sqrt(m)``, so sparse
    minimisers are unchanged. Not idempotent: applying it twice scales by
    ``1/m``.
    """
    A = as_matrix(A)
    y = as_vector(y)
    if A.shape[0] != y.shape[0]:
        raise ValueError("rows(A) must equal len(y)")
    s = math.sqrt(A.shape[0])
    return A / s, y / s


def instance_from_dict(doc: dict) -> ProblemInstance:
    """Rebuild an instance from :meth:`ProblemInstance.to_dict` output.

    Seeded Gaussian instances are regenerated from their parameters; when
    realized arrays are present they must agree with the regeneration.
    Documents without a regime are taken verbatim from their arrays.
    """
    k = int(doc["k"])
    noise_level = float(doc.get("noise_level", 0.0))
    seed = int(doc.get("seed", 0))
    if doc.get("regime") is None:
        A = as_matrix(doc["matrix"])
        x = as_vector(doc["true_signal"])
        y = as_vector(doc["measurements"])
        if A.shape != (int(doc["m"]), int(doc["n"])):
            raise ValueError("matrix shape disagrees with m, n")
        return ProblemInstance(A, x, y, k, noise_level, seed, None, y - A @ x)
    inst = gaussian_instance(int(doc["m"]), int(doc["n"]), k, doc["regime"], noise_level, seed)
    if "matrix" in doc:
        if not (np.array_equal(as_matrix(doc["matrix"]), inst.matrix)
                and np.array_equal(as_vector(doc["true_signal"]), inst.true_signal)
                and np.array_equal(as_vector(doc["measurements"]), inst.measurements)):
            raise ValueError("stored arrays do not match the regenerated instance")
    return inst


def instance_from_json(text: str) -> ProblemInstance:
    return instance_from_dict(json.loads(text))
