"""
Restarted GMRES for real-linear (conjugate-linear) complex equations.

Operators of the form u -> u + A[u] + B[conj(u)] are not complex-linear, so the
unknown is split into real and imaginary parts and the solve runs on the
equivalent real system of twice the size.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from src.utils.errors import SolverConvergenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KrylovResult:
    solution: np.ndarray
    iterations: int
    residual: float


def _split(u: np.ndarray) -> np.ndarray:
    return np.concatenate([u.real.ravel(), u.imag.ravel()])


def _join(x: np.ndarray, shape) -> np.ndarray:
    n = x.size // 2
    return (x[:n] + 1j * x[n:]).reshape(shape)


def solve_real_linear(apply_operator: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray,
                      tol: float = 1e-10, max_iterations: int = 500,
                      restart: int = 50) -> KrylovResult:
    """
    Solve ``apply_operator(u) = rhs`` for complex ``u`` with real-linear operator.

    ``max_iterations`` bounds the total number of inner GMRES steps. The
    returned residual is the true relative residual of the real system.
    """
    shape = rhs.shape
    b = _split(np.asarray(rhs, dtype=complex))
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return KrylovResult(np.zeros(shape, dtype=complex), 0, 0.0)

    n = b.size

    def matvec(x):
        return _split(apply_operator(_join(np.asarray(x, dtype=float), shape)))

    operator = LinearOperator((n, n), matvec=matvec, dtype=float)

    counter = {'iterations': 0}

    def count(_residual_norm):
        counter['iterations'] += 1

    restart = max(1, min(restart, max_iterations))
    x, info = gmres(
        operator, b,
        rtol=tol, atol=0.0,
        restart=restart,
        maxiter=math.ceil(max_iterations / restart),
        callback=count, callback_type='pr_norm',
    )
    residual = float(np.linalg.norm(matvec(x) - b) / b_norm)
    iterations = counter['iterations']
    logger.debug(f"GMRES finished: info={info}, iterations={iterations}, residual={residual:.3e}")

    if info != 0 and residual > tol:
        raise SolverConvergenceError(
            f"GMRES did not reach tolerance {tol:g} within {max_iterations} iterations",
            residual=residual,
            iterations=iterations,
        )
    return KrylovResult(_join(x, shape), iterations, residual)
