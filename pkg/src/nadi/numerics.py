"""Small dense linear-algebra and integration kernels.

All functions operate on plain float64 numpy arrays and are pure: no global
state, safe to call from any thread. They are sized for the small matrices
this library deals in (controls-by-controls, states-by-states), not for
sparse or large-scale work.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import (
    DivergenceError,
    EvaluationError,
    InvalidInputError,
    ShapeError,
    StabilityError,
)

Array = np.ndarray

#: Relative cutoff for discarding singular values in the pseudo-inverse.
PINV_TOL = 1e-12


def check_finite(a, what: str = "input") -> Array:
    """Coerce to a float array, rejecting NaN/Inf entries."""
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{what} contains non-finite entries")
    return arr


def pseudo_inverse(m, tol: float = PINV_TOL) -> Array:
    """Moore-Penrose pseudo-inverse computed through the SVD.

    Singular values at or below ``tol`` times the largest singular value are
    treated as zero, so the result stays bounded near rank deficiency.
    """
    a = check_finite(m, "matrix")
    if a.ndim != 2:
        raise ShapeError("pseudo_inverse expects a 2-D matrix")
    return np.linalg.pinv(a, rcond=tol)


def solve_lyapunov(a_c) -> Array:
    """Solve ``A' P + P A = -2 I`` for symmetric positive-definite P.

    ``a_c`` must be Hurwitz; otherwise the offending eigenvalue is named in
    the raised error. The returned matrix is symmetrized to remove roundoff
    skew from the underlying Schur-based solver.
    """
    a = check_finite(a_c, "matrix")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError("solve_lyapunov expects a square matrix")
    eigs = np.linalg.eigvals(a)
    worst = eigs[int(np.argmax(eigs.real))]
    if worst.real >= 0.0:
        raise StabilityError(
            f"matrix is not Hurwitz: eigenvalue {worst:.6g} has real part >= 0"
        )
    q = -2.0 * np.eye(a.shape[0])
    p = scipy.linalg.solve_continuous_lyapunov(a.T, q)
    return 0.5 * (p + p.T)


def eig_extrema_sym(m) -> tuple[float, float]:
    """Smallest and largest eigenvalue of the symmetrized matrix (m + m')/2."""
    a = check_finite(m, "matrix")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError("eig_extrema_sym expects a square matrix")
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    return float(w[0]), float(w[-1])


def rk4_step(deriv: Callable, s: Array, t: float, dt: float) -> Array:
    """Advance state ``s`` from time ``t`` by one classical 4th-order
    Runge-Kutta step of size ``dt``.

    ``deriv(t, s)`` must return the state derivative. A non-finite result
    raises a divergence error carrying ``t``.
    """
    if dt <= 0.0:
        raise InvalidInputError("dt must be positive")
    half = 0.5 * dt
    k1 = deriv(t, s)
    k2 = deriv(t + half, s + half * k1)
    k3 = deriv(t + half, s + half * k2)
    k4 = deriv(t + dt, s + dt * k3)
    acc = k1 + k4
    acc += k2
    acc += k2
    acc += k3
    acc += k3
    out = s + (dt / 6.0) * acc
    # NaN/Inf anywhere makes the sum non-finite; much cheaper than isfinite()
    if not math.isfinite(float(out.sum())):
        raise DivergenceError("non-finite state after integration step", time=t)
    return out


def finite_diff_jacobian(fn: Callable, at, h: float = 1e-6) -> Array:
    """Central-difference Jacobian of ``fn`` at ``at``.

    The step per coordinate is ``h * max(1, |at_j|)``, giving second-order
    accuracy with a scale-aware perturbation.
    """
    if h <= 0.0:
        raise InvalidInputError("perturbation scale h must be positive")
    x = check_finite(at, "evaluation point")
    cols = []
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += step
        xm = x.copy()
        xm[j] -= step
        fp = np.asarray(fn(xp), dtype=float)
        fm = np.asarray(fn(xm), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise EvaluationError(
                f"function returned non-finite values while perturbing coordinate {j}"
            )
        cols.append((fp - fm) / (2.0 * step))
    return np.column_stack(cols)
