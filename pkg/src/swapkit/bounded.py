"""From an l2-bounded correlating product to a disc-valued one.

The pairing used throughout this module is the bilinear E[f(x) P(x)], with
no conjugation, so that a disc-valued product is literally a product of
functions into the unit disc.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FunctionTable, ProductFunction, product_to_table

PHASE_STEP = 0.01      # max phase change between neighbouring grid points
LEVEL_RATIO = 8        # step ratio between successive scan levels
LEVELS = 3
TOP_CANDIDATES = 16


def pairing(f: FunctionTable, P: ProductFunction) -> complex:
    return complex(np.mean(f.values * product_to_table(P).values))


def constants(delta: float) -> dict:
    """Parameters of the interval-averaging argument at correlation delta."""
    D = np.log(16 / delta ** 2)
    return {"D": D, "alpha": delta ** 3 / 1000, "eta": delta ** 6 / 400000,
            "averaged_bound": delta ** 6 / (100000 * (2 * D + 1)),
            "target": delta ** 7 / (2e6 * (2 * D + 1))}


def split_phase(P: ProductFunction, floor: float = 1e-12):
    """P_i = Q_i R_i with |Q_i| = 1 and R_i > 0; zero entries get R = floor and Q = 1."""
    phases, mags = [], []
    for p in P.factors:
        mag = np.abs(p)
        phases.append(np.where(mag > 0, p / np.where(mag > 0, mag, 1), 1.0))
        mags.append(np.maximum(mag, floor))
    return phases, mags


def _log_table(mags) -> np.ndarray:
    L = np.zeros(())
    for m in mags:
        L = np.add.outer(L, np.log(m))
    return L.reshape(-1)


def _scan(weights: np.ndarray, logs: np.ndarray, thetas: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(len(thetas))
    for s in range(0, len(thetas), chunk):
        th = thetas[s:s + chunk]
        out[s:s + chunk] = np.abs(np.exp(2j * np.pi * np.outer(th, logs)) @ weights)
    return out


def _collapse(weights: np.ndarray, logs: np.ndarray):
    # |E f e^{2 pi i theta L}| is unchanged by shifting L, so centre it
    uniq, inv = np.unique(np.round(logs, 14), return_inverse=True)
    w = np.zeros(len(uniq), dtype=np.complex128)
    np.add.at(w, inv, weights)
    centre = 0.5 * (uniq.min() + uniq.max())
    return w, uniq - centre


def final_step(logs: np.ndarray) -> float:
    spread = float(np.max(np.abs(logs))) if len(logs) else 0.0
    return PHASE_STEP / (2 * np.pi * max(spread, 1e-12))


@dataclass(frozen=True)
class BoundedProductResult:
    product: ProductFunction
    theta: float
    corr: float
    threshold: float


def to_bounded_product(f: FunctionTable, P: ProductFunction, delta: float,
                       theta_max: float | None = None) -> BoundedProductResult:
    """Find theta maximising |E[f Q e^{2 pi i theta ln R}]| and return the disc-valued product.

    The scan runs three grids.  The coarsest covers |theta| <= theta_max; each
    later level refines around the best local maxima of the previous one, and
    the finest step moves every phase by less than PHASE_STEP.
    """
    if P.alphabets != f.alphabets:
        raise ValueError("product and function live on different domains")
    phases, mags = split_phase(P)
    theta_max = 64 / delta ** 3 if theta_max is None else theta_max
    absorbed = f.values * product_to_table(ProductFunction(phases)).values
    w, logs = _collapse(absorbed.reshape(-1) / absorbed.size, _log_table(mags))
    h = final_step(logs)
    steps = [h * LEVEL_RATIO ** k for k in reversed(range(LEVELS))]

    grid = np.arange(-theta_max, theta_max + steps[0] / 2, steps[0])
    grid = np.union1d(grid, [0.0])
    vals = _scan(w, logs, grid)
    for step, coarse in zip(steps[1:], steps[:-1]):
        order = np.argsort(-vals, kind="stable")[:TOP_CANDIDATES]
        pieces = [np.arange(grid[i] - coarse, grid[i] + coarse + step / 2, step) for i in order]
        grid = np.union1d(np.concatenate(pieces + [grid[order]]), [])
        grid = grid[np.abs(grid) <= theta_max]
        vals = _scan(w, logs, grid)
    # ties go to the smallest |theta|, then the smallest theta
    best = max(range(len(grid)), key=lambda i: (vals[i], -abs(grid[i]), -grid[i]))
    theta = float(grid[best])
    if vals[best] <= _scan(w, logs, np.array([0.0]))[0]:
        theta = 0.0
    factors = [q * np.exp(2j * np.pi * theta * np.log(m)) for q, m in zip(phases, mags)]
    Pb = ProductFunction(factors)
    return BoundedProductResult(Pb, theta, abs(pairing(f, Pb)), constants(delta)["target"])


def dense_scan(f: FunctionTable, P: ProductFunction, theta_max: float, step: float | None = None):
    """Uniform-grid optimum over theta, used as a reference for the multi-level scan."""
    phases, mags = split_phase(P)
    absorbed = f.values * product_to_table(ProductFunction(phases)).values
    w, logs = _collapse(absorbed.reshape(-1) / absorbed.size, _log_table(mags))
    step = final_step(logs) if step is None else step
    grid = np.arange(-theta_max, theta_max + step / 2, step)
    vals = _scan(w, logs, grid)
    i = int(np.argmax(vals))
    return float(grid[i]), float(vals[i])


def central_mass(f: FunctionTable, P: ProductFunction, delta: float) -> complex:
    """E[f Q R 1{e^-D <= R <= e^D}] after absorbing the phases Q into f."""
    phases, mags = split_phase(P)
    D = constants(delta)["D"]
    R = product_to_table(ProductFunction(mags)).values.real
    Q = product_to_table(ProductFunction(phases)).values
    mask = (R >= np.exp(-D)) & (R <= np.exp(D))
    return complex(np.mean(f.values * Q * R * mask))


def bump(x, L: float, R: float, eta: float):
    """(1/eta) times the overlap of [L, R] with [x - eta/2, x + eta/2]."""
    x = np.asarray(x, dtype=float)
    overlap = np.minimum(R, x + eta / 2) - np.maximum(L, x - eta / 2)
    return np.clip(overlap, 0.0, None) / eta


def bump_coefficients(theta, L: float, R: float, eta: float):
    """Fourier coefficients c(theta) with bump(x) = integral of c(theta) e^{2 pi i theta x}."""
    theta = np.asarray(theta, dtype=float)
    return (R - L) * np.exp(-1j * np.pi * theta * (L + R)) * np.sinc((R - L) * theta) * np.sinc(eta * theta)
