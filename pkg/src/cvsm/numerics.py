"""Dense arithmetic helpers, nonlinearities and seeded initializers.

Vectors and matrices are plain float64 numpy arrays (row-major).  Random
streams are ``numpy.random.Generator`` objects passed explicitly to every
stochastic function.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument, InvalidInput

DTYPE = np.float64


def as_vector(x, name="x") -> np.ndarray:
    v = np.asarray(x, dtype=DTYPE)
    if v.ndim != 1 or v.size == 0:
        raise InvalidArgument(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    return v


def check_finite(x, name="input") -> np.ndarray:
    arr = np.asarray(x, dtype=DTYPE)
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite values")
    return arr


def make_rng(seed: int | None) -> np.random.Generator:
    """Seeded random stream; identical seeds give identical draw sequences."""
    return np.random.default_rng(seed)


def tanh_act(z) -> np.ndarray:
    return np.tanh(check_finite(z, "z"))


def tanh_grad(z) -> np.ndarray:
    """Derivative of tanh evaluated at the pre-activation ``z``."""
    t = np.tanh(check_finite(z, "z"))
    return 1.0 - t * t


def sigmoid_act(z) -> np.ndarray:
    z = check_finite(z, "z")
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def gaussian_init(rows: int, cols: int, mu: float, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. Normal(mu, sigma2) matrix of shape (rows, cols).

    ``sigma2`` is the variance, not the standard deviation.
    """
    if sigma2 < 0:
        raise InvalidArgument(f"variance must be non-negative, got {sigma2}")
    if rows < 0 or cols < 0:
        raise InvalidArgument("matrix dimensions must be non-negative")
    if sigma2 == 0:
        return np.full((rows, cols), float(mu), dtype=DTYPE)
    return rng.normal(mu, np.sqrt(sigma2), size=(rows, cols))


def matvec(m, x) -> np.ndarray:
    m = np.asarray(m, dtype=DTYPE)
    x = np.asarray(x, dtype=DTYPE)
    if m.ndim != 2 or x.ndim != 1 or m.shape[1] != x.shape[0]:
        raise InvalidArgument(f"matvec shape mismatch: {m.shape} @ {x.shape}")
    return m @ x


def concat(x, y) -> np.ndarray:
    return np.concatenate([x, y])
