"""Matrix-free preconditioned conjugate gradients on grid-shaped arrays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoConvergence


@dataclass
class CGInfo:
    iterations: int
    residual: float
    converged: bool


def _dot(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.vdot(u, v).real)


def pcg(
    operator: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    preconditioner: Callable[[np.ndarray], np.ndarray],
    tol: float = 1e-10,
    max_iter: int = 10000,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, CGInfo]:
    """Solve operator(x) = rhs for an SPD operator with an SPD preconditioner.

    Stops when the preconditioned residual norm falls below ``tol`` times its
    initial value (measured from the right-hand side when ``x0`` is None).
    Raises ``NoConvergence`` if ``max_iter`` is exhausted.
    """
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    r = rhs - operator(x) if x0 is not None else rhs.copy()
    z = preconditioner(r)
    rz = _dot(r, z)
    scale = np.sqrt(max(rz, 0.0))
    if x0 is not None:
        z_b = preconditioner(rhs)
        scale = np.sqrt(max(_dot(rhs, z_b), 0.0))
    if scale == 0.0:
        return x, CGInfo(0, 0.0, True)
    p = z.copy()
    for it in range(1, max_iter + 1):
        ap = operator(p)
        alpha = rz / _dot(p, ap)
        x += alpha * p
        r -= alpha * ap
        z = preconditioner(r)
        rz_new = _dot(r, z)
        res = np.sqrt(max(rz_new, 0.0)) / scale
        if res <= tol:
            return x, CGInfo(it, res, True)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NoConvergence(max_iter, res, "conjugate gradients")
