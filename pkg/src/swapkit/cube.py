"""The rho-biased cube: correlated pairs, noise stability and expansion probes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import FunctionTable, ProductMeasure, inner_product


@dataclass(frozen=True)
class BiasedPair:
    """x ~ rho-biased; each y_i keeps x_i w.p. 1 - gamma, else is resampled."""
    x: np.ndarray
    y: np.ndarray
    rho: float
    gamma: float


def _check_rates(rho, gamma):
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")


def sample_biased_pairs(n: int, rho: float, gamma: float, size: int,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised sampler; returns boolean arrays of shape (size, n)."""
    _check_rates(rho, gamma)
    x = rng.random((size, n)) < rho
    resample = rng.random((size, n)) < gamma
    fresh = rng.random((size, n)) < rho
    return x, np.where(resample, fresh, x)


def sample_biased_pair(n: int, rho: float, gamma: float, seed: int) -> BiasedPair:
    x, y = sample_biased_pairs(n, rho, gamma, 1, np.random.default_rng(seed))
    return BiasedPair(x[0], y[0], rho, gamma)


def resampling_kernel(pi: np.ndarray, keep: float) -> np.ndarray:
    """K[a, b] = keep * [a == b] + (1 - keep) * pi[b]."""
    pi = np.asarray(pi, dtype=float)
    return keep * np.eye(len(pi)) + (1.0 - keep) * pi[None, :]


def apply_noise(f: FunctionTable, keep: float, m: ProductMeasure | None = None) -> FunctionTable:
    """T f, where each coordinate is kept w.p. ``keep`` and otherwise redrawn from m."""
    if not 0.0 <= keep <= 1.0:
        raise ValueError(f"correlation must lie in [0, 1], got {keep}")
    m = m or ProductMeasure.uniform(f.alphabets)
    vals = f.values
    for i, pi in enumerate(m.coords):
        K = resampling_kernel(pi, keep)
        vals = np.moveaxis(np.tensordot(K, vals, axes=([1], [i])), 0, i)
    return FunctionTable(f.alphabets, vals)


def noise_stability(f: FunctionTable, rho: float, m: ProductMeasure | None = None) -> float:
    """<f, T_rho f> under the coordinatewise resampling operator of f's measure."""
    return float(inner_product(f, apply_noise(f, rho, m), m).real)


def biased_measure(n: int, rho: float) -> ProductMeasure:
    return ProductMeasure([[1.0 - rho, rho]] * n)


def collision_probability(A: np.ndarray, rho: float, gamma: float) -> float:
    """Pr[x in A and y in A] for x ~ rho-biased, y ~_{1-gamma} x.  A is a bool array (2,)*n."""
    A = np.asarray(A, dtype=float)
    n = A.ndim
    f = FunctionTable((2,) * n, A)
    return noise_stability(f, 1.0 - gamma, biased_measure(n, rho))


def gaussian_project(vectors: np.ndarray, m: int, seed: int) -> np.ndarray:
    """u -> m^{-1/2} (<u, g_1>, ..., <u, g_m>) with g_i standard Gaussian.

    ``vectors`` has shape (count, M); returns shape (count, m).
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if m < 1:
        raise ValueError("target dimension must be positive")
    G = np.random.default_rng(seed).standard_normal((vectors.shape[1], m))
    return vectors @ G / np.sqrt(m)


@dataclass(frozen=True)
class BucketWitness:
    corner: np.ndarray
    side: float
    mass: float


def bucket_of(points: np.ndarray, side: float) -> np.ndarray:
    return np.floor(points / side).astype(np.int64)


def sse_probe(point_map: Callable[[np.ndarray], np.ndarray], n: int, rho: float, gamma: float,
              D: float, samples: int, seed: int, spread_const: float = 4.0):
    """Estimate local and global closeness of a map from the biased cube to R^m.

    ``point_map`` takes a boolean array of shape (k, n) and returns (k, m).
    Returns (p_local, p_global, bucket_witness): p_local is Pr[|f(x) - f(y)| <= D]
    for correlated pairs, p_global is Pr[|f(x) - f(x')| <= threshold] for
    independent pairs with threshold spread_const * D * max(1, log(1/p_local)),
    and the witness is the heaviest grid cell of side 2 D sqrt(m).
    """
    rng = np.random.default_rng(seed)
    x, y = sample_biased_pairs(n, rho, gamma, samples, rng)
    fx, fy = np.asarray(point_map(x), float), np.asarray(point_map(y), float)
    p_local = float(np.mean(np.linalg.norm(fx - fy, axis=1) <= D))

    x2 = rng.random((samples, n)) < rho
    fx2 = np.asarray(point_map(x2), float)
    spread = spread_const * D * max(1.0, np.log(1.0 / p_local)) if p_local > 0 else np.inf
    p_global = float(np.mean(np.linalg.norm(fx - fx2, axis=1) <= spread))

    dim = fx.shape[1]
    side = 2.0 * D * np.sqrt(dim) if D > 0 else 1.0
    cells, counts = np.unique(bucket_of(fx, side), axis=0, return_counts=True)
    best = int(np.argmax(counts))
    witness = BucketWitness(cells[best] * side, side, float(counts[best] / samples))
    return p_local, p_global, witness
