"""Parameter containers and update rules: SGD, AdaGrad, L-BFGS, gradient checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgument, InvalidInput

log = logging.getLogger(__name__)


class ParamVector:
    """Ordered named segments of float64 arrays with a flat view.

    Segment order is insertion order and fixes the flat layout.
    """

    def __init__(self, segments=None):
        self._seg: dict[str, np.ndarray] = {}
        for name, arr in (segments or {}).items():
            self[name] = arr

    def __setitem__(self, name, arr):
        self._seg[name] = np.asarray(arr, dtype=np.float64)

    def __getitem__(self, name) -> np.ndarray:
        return self._seg[name]

    def __contains__(self, name):
        return name in self._seg

    def __iter__(self):
        return iter(self._seg)

    def __len__(self):
        return len(self._seg)

    def names(self):
        return list(self._seg)

    def items(self):
        return self._seg.items()

    @property
    def size(self) -> int:
        return sum(a.size for a in self._seg.values())

    def shapes(self):
        return {k: v.shape for k, v in self._seg.items()}

    def offsets(self):
        out, pos = {}, 0
        for k, v in self._seg.items():
            out[k] = (pos, pos + v.size)
            pos += v.size
        return out

    def flatten(self) -> np.ndarray:
        if not self._seg:
            return np.zeros(0)
        return np.concatenate([a.ravel() for a in self._seg.values()])

    def unflatten(self, flat) -> "ParamVector":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise InvalidArgument(f"flat vector has shape {flat.shape}, expected ({self.size},)")
        out, pos = ParamVector(), 0
        for k, v in self._seg.items():
            out[k] = flat[pos:pos + v.size].reshape(v.shape).copy()
            pos += v.size
        return out

    def zeros_like(self) -> "ParamVector":
        return ParamVector({k: np.zeros_like(v) for k, v in self._seg.items()})

    def copy(self) -> "ParamVector":
        return ParamVector({k: v.copy() for k, v in self._seg.items()})

    def same_layout(self, other) -> bool:
        return isinstance(other, ParamVector) and self.shapes() == other.shapes() and self.names() == other.names()

    def check_layout(self, other):
        if not self.same_layout(other):
            raise InvalidArgument("parameter vectors have different segment layouts")

    def map2(self, other, fn) -> "ParamVector":
        self.check_layout(other)
        return ParamVector({k: fn(v, other[k]) for k, v in self._seg.items()})

    def sqnorm(self) -> float:
        return float(sum(np.vdot(v, v) for v in self._seg.values()))

    def __repr__(self):
        inner = ", ".join(f"{k}{v.shape}" for k, v in self._seg.items())
        return f"ParamVector({inner})"


def _as_pv(x):
    if isinstance(x, ParamVector):
        return x
    return ParamVector({"theta": np.asarray(x, dtype=np.float64)})


def sgd_step(theta, grad, alpha):
    """theta - alpha * grad; works on ParamVectors or arrays."""
    if alpha <= 0:
        raise InvalidArgument("step size must be positive")
    if isinstance(theta, ParamVector):
        return theta.map2(grad, lambda t, g: t - alpha * g)
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape:
        raise InvalidArgument(f"shape mismatch {theta.shape} vs {grad.shape}")
    return theta - alpha * grad


class AdaGrad:
    """Diagonal AdaGrad without projection.

    ``G`` accumulates squared gradients per coordinate; each step subtracts
    ``eta * g / (sqrt(G) + eps)``.
    """

    def __init__(self, eta=0.05, eps=1e-8):
        if eta <= 0:
            raise InvalidArgument("eta must be positive")
        self.eta = eta
        self.eps = eps
        self.G: dict[str, np.ndarray] = {}

    def step(self, theta, grad):
        """Return updated parameters (inputs untouched)."""
        pv_in = isinstance(theta, ParamVector)
        theta_pv, grad_pv = _as_pv(theta), _as_pv(grad)
        theta_pv.check_layout(grad_pv)
        out = ParamVector()
        for name, t in theta_pv.items():
            g = grad_pv[name]
            G = self.G.get(name)
            if G is None:
                G = self.G[name] = np.zeros_like(t)
            G += g * g
            out[name] = t - self.eta * g / (np.sqrt(G) + self.eps)
        return out if pv_in else out["theta"]

    def step_inplace(self, theta: ParamVector, grad: ParamVector, names=None):
        """In-place variant restricted to ``names`` (default: all segments of ``grad``)."""
        for name in names if names is not None else grad.names():
            g = grad[name]
            t = theta[name]
            G = self.G.get(name)
            if G is None:
                G = self.G[name] = np.zeros_like(t)
            G += g * g
            t -= self.eta * g / (np.sqrt(G) + self.eps)


def adagrad_step(theta, grad, state: AdaGrad):
    return state.step(theta, grad)


@dataclass
class LbfgsResult:
    theta: object
    fun: float
    grad_norm: float
    n_iter: int
    status: str  # "converged" | "max_iter" | "line_search_failed"
    history: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == "converged"


def _flat_objective(f, theta0):
    if isinstance(theta0, ParamVector):
        template = theta0

        def fl(x):
            v, g = f(template.unflatten(x))
            return float(v), _as_pv(g).flatten()

        return fl, theta0.flatten(), template.unflatten
    x0 = np.asarray(theta0, dtype=np.float64)
    shape = x0.shape

    def fl(x):
        v, g = f(x.reshape(shape))
        return float(v), np.asarray(g, dtype=np.float64).ravel()

    return fl, x0.ravel().copy(), lambda x: x.reshape(shape).copy()


class LbfgsMemory:
    """Curvature pairs for the two-loop recursion; pairs failing s.y > 0 are dropped."""

    def __init__(self, size=10):
        if size < 1:
            raise InvalidArgument("memory size must be >= 1")
        self.size = size
        self.s: list[np.ndarray] = []
        self.y: list[np.ndarray] = []

    def push(self, s, y) -> bool:
        sy = float(s @ y)
        if not sy > 1e-12 * max(1.0, float(np.linalg.norm(s) * np.linalg.norm(y))):
            return False
        self.s.append(s)
        self.y.append(y)
        if len(self.s) > self.size:
            self.s.pop(0)
            self.y.pop(0)
        return True

    def direction(self, g):
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(self.s), reversed(self.y)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append((rho, a))
            q -= a * y
        if self.s:
            s, y = self.s[-1], self.y[-1]
            q *= (s @ y) / (y @ y)
        else:
            q /= max(1.0, float(np.linalg.norm(g)))
        for (s, y), (rho, a) in zip(zip(self.s, self.y), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        return -q


def lbfgs_minimize(
    f: Callable,
    theta0,
    M: int = 10,
    max_iter: int = 100,
    tol: float = 1e-5,
    armijo: float = 1e-4,
    max_backtracks: int = 50,
    callback: Callable | None = None,
) -> LbfgsResult:
    """Minimize ``f`` (returning ``(value, gradient)``) with L-BFGS.

    Uses the two-loop recursion and a backtracking line search enforcing the
    sufficient-decrease condition.  ``theta0`` may be an array or a
    ParamVector; the result carries the same type.
    """
    fl, x, restore = _flat_objective(f, theta0)
    fx, g = fl(x)
    if not np.isfinite(fx) or not np.all(np.isfinite(g)):
        raise InvalidInput("objective is not finite at the starting point")
    mem = LbfgsMemory(M)
    history = [fx]
    status = "max_iter"
    it = 0
    gnorm = float(np.linalg.norm(g))
    if gnorm <= tol:
        return LbfgsResult(restore(x), fx, gnorm, 0, "converged", history)
    while it < max_iter:
        d = mem.direction(g)
        slope = float(g @ d)
        if slope >= 0:
            # not a descent direction: restart from steepest descent
            mem = LbfgsMemory(M)
            d = -g / max(1.0, gnorm)
            slope = float(g @ d)
        t = 1.0
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + t * d
            f_new, g_new = fl(x_new)
            if np.isfinite(f_new) and f_new <= fx + armijo * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            status = "line_search_failed"
            log.warning("event=line_search_failed iteration=%d action=return_best", it)
            break
        it += 1
        mem.push(x_new - x, g_new - g)
        x, fx, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        history.append(fx)
        if callback is not None:
            callback(it, fx, gnorm)
        if gnorm <= tol:
            status = "converged"
            break
    return LbfgsResult(restore(x), fx, gnorm, it, status, history)


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic) + np.abs(numeric))


def grad_check(f: Callable, theta, eps: float = 1e-5, coords=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``coords`` restricts the check to the given flat indices (default: all).
    """
    if not 0 < eps <= 1e-2:
        raise InvalidArgument("eps must lie in (0, 1e-2]")
    fl, x, _ = _flat_objective(f, theta)
    fx, g = fl(x)
    if not np.isfinite(fx):
        raise InvalidInput("objective is not finite")
    idx = np.arange(x.size) if coords is None else np.asarray(coords, dtype=np.int64)
    numeric = np.empty(idx.size)
    xp = x.copy()
    for n, i in enumerate(idx):
        old = xp[i]
        xp[i] = old + eps
        fp, _ = fl(xp)
        xp[i] = old - eps
        fm, _ = fl(xp)
        xp[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise InvalidInput("objective is not finite under perturbation")
        numeric[n] = (fp - fm) / (2 * eps)
    if idx.size == 0:
        return 0.0
    return float(np.max(relative_error(g[idx], numeric)))
