"""Small dense symmetric-matrix kernel plus ODE and root-finding helpers.

Every matrix routine here accepts a single ``(n, n)`` array or a stack
``(..., n, n)`` and works on the trailing two axes.  Symmetric matrices are
plain ndarrays; anything that should be symmetric is passed through
:func:`sym` before it is returned.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .errors import BlowUpDetected, InvalidInput, NoBracket, SingularMatrix

MAX_DIM = 16
SINGULAR_RTOL = 1e-14
JACOBI_RTOL = 1e-14
_MAX_SWEEPS = 60


class EigDecomp(NamedTuple):
    values: np.ndarray  # ascending, shape (..., n)
    vectors: np.ndarray  # columns are eigenvectors, shape (..., n, n)


def sym(a):
    """Return ``(a + a^T) / 2`` over the trailing two axes."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _check_square(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInput(f"{name} must be square, got shape {a.shape}")
    if not 1 <= a.shape[-1] <= MAX_DIM:
        raise InvalidInput(f"{name} dimension must lie in [1, {MAX_DIM}]")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite entries")
    return a


def _off_norm(a):
    n = a.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sqrt(np.sum(np.where(mask, a, 0.0) ** 2, axis=(-2, -1)))


def sym_eig(s) -> EigDecomp:
    """Eigen-decomposition of symmetric matrices by cyclic Jacobi rotations.

    All matrices of a stack are rotated together; sweeps continue until every
    off-diagonal Frobenius norm is below ``1e-14`` times the matrix norm.
    """
    a = sym(_check_square(s))
    batch_shape = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape((-1, n, n)).copy()
    v = np.broadcast_to(np.eye(n), a.shape).copy()
    scale = np.sqrt(np.sum(a * a, axis=(-2, -1)))
    target = JACOBI_RTOL * scale

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for _ in range(_MAX_SWEEPS):
            if np.all(_off_norm(a) <= target):
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[:, p, q]
                    if not np.any(apq):
                        continue
                    theta = (a[:, q, q] - a[:, p, p]) / (2.0 * apq)
                    t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
                    t = np.where(apq == 0.0, 0.0, t)
                    t = np.where(np.isfinite(theta), t, 0.0)
                    c = 1.0 / np.sqrt(t * t + 1.0)
                    sn = t * c
                    c_ = c[:, None]
                    s_ = sn[:, None]

                    col_p = a[:, :, p].copy()
                    col_q = a[:, :, q].copy()
                    a[:, :, p] = c_ * col_p - s_ * col_q
                    a[:, :, q] = s_ * col_p + c_ * col_q
                    row_p = a[:, p, :].copy()
                    row_q = a[:, q, :].copy()
                    a[:, p, :] = c_ * row_p - s_ * row_q
                    a[:, q, :] = s_ * row_p + c_ * row_q
                    a[:, p, q] = 0.0
                    a[:, q, p] = 0.0

                    vp = v[:, :, p].copy()
                    vq = v[:, :, q].copy()
                    v[:, :, p] = c_ * vp - s_ * vq
                    v[:, :, q] = s_ * vp + c_ * vq

    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[:, None, :], axis=-1)
    return EigDecomp(w.reshape(batch_shape + (n,)), v.reshape(batch_shape + (n, n)))


def reconstruct_eig(d: EigDecomp):
    v = d.vectors
    return sym(v @ (d.values[..., :, None] * np.swapaxes(v, -1, -2)))


def sym_inverse(s):
    """Inverse of a symmetric matrix through its eigen-decomposition.

    Raises :class:`SingularMatrix` when the smallest absolute eigenvalue is
    below ``1e-14`` times the largest.
    """
    d = sym_eig(s)
    mag = np.abs(d.values)
    big = mag.max(axis=-1)
    small = mag.min(axis=-1)
    bad = small <= SINGULAR_RTOL * big
    if np.any(bad):
        with np.errstate(divide="ignore"):
            cond = np.max(np.where(small > 0, big / np.where(small > 0, small, 1.0), np.inf))
        raise SingularMatrix(f"matrix is singular to working precision (cond={cond:.3g})", float(cond))
    v = d.vectors
    return sym(v @ ((1.0 / d.values)[..., :, None] * np.swapaxes(v, -1, -2)))


def cholesky(b, name="B"):
    b = sym(_check_square(b, name))
    try:
        return np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise InvalidInput(f"{name} is not positive definite") from exc


def whiten(a, b):
    """Return ``L^{-1} A L^{-T}`` where ``B = L L^T``."""
    a = sym(_check_square(a, "A"))
    low = cholesky(b)
    y = np.linalg.solve(low, a)
    return sym(np.swapaxes(np.linalg.solve(low, np.swapaxes(y, -1, -2)), -1, -2))


def gen_eigvals(a, b):
    """Ascending generalized eigenvalues of ``A v = mu B v`` with ``B`` SPD."""
    return sym_eig(whiten(a, b)).values


def gen_eig_bounds(a, b):
    """Return ``(lo, hi)`` with ``lo*B <= A <= hi*B`` as quadratic forms."""
    w = gen_eigvals(a, b)
    lo, hi = w[..., 0], w[..., -1]
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def step_grid(r_max: float, h: float) -> np.ndarray:
    """Uniform grid ``0, h, 2h, ...`` closed by a partial step landing on ``r_max``."""
    if not (h > 0 and r_max > 0):
        raise InvalidInput("h and r_max must be positive")
    n_full = int(math.floor(r_max / h * (1 + 1e-12)))
    r = np.arange(n_full + 1, dtype=float) * h
    if r_max - r[-1] > 1e-12 * r_max:
        r = np.append(r, r_max)
    else:
        r[-1] = r_max
    return r


def rk4_step(deriv: Callable, r: float, y, h: float):
    k1 = deriv(r, y)
    k2 = deriv(r + 0.5 * h, y + 0.5 * h * k1)
    k3 = deriv(r + 0.5 * h, y + 0.5 * h * k2)
    k4 = deriv(r + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(state0, deriv: Callable, r_max: float, h: float):
    """Classical fixed-step RK4 from ``r = 0`` to ``r_max``.

    Returns ``(r, y)`` with ``y[k]`` the state at ``r[k]``.  A non-finite
    state raises :class:`BlowUpDetected` carrying the finite prefix.
    """
    grid = step_grid(r_max, h)
    y = np.asarray(state0, dtype=float)
    out = np.empty((len(grid),) + y.shape)
    out[0] = y
    for k in range(len(grid) - 1):
        with np.errstate(over="ignore", invalid="ignore"):
            y = rk4_step(deriv, grid[k], y, grid[k + 1] - grid[k])
        if not np.all(np.isfinite(y)):
            raise BlowUpDetected(f"non-finite state after r={grid[k]:.6g}", grid[: k + 1], out[: k + 1])
        out[k + 1] = y
    return grid, out


def bisect_root(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Bisection for a sign change of ``f`` on ``[lo, hi]``."""
    if tol <= 0:
        raise InvalidInput("tol must be positive")
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise NoBracket(f"f has the same sign at {lo} and {hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
