"""Ambient curvature models and scalar Jacobi machinery.

A model is consumed only through its normal curvature block, the symmetric
form ``Rbar(r)_{ij} = Rm(nu, e_i, nu, e_j)`` evaluated in the evolving
coordinates where the induced metric is ``sigma``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import numerics
from .errors import InvalidInput, OutOfRange

_SERIES_CUTOFF = 1e-8


def _series(kappa, r):
    x = kappa * r * r
    s = r * (1.0 - x / 6.0 + x * x / 120.0 - x * x * x / 5040.0)
    sp = 1.0 - x / 2.0 + x * x / 24.0 - x * x * x / 720.0
    return s, sp


def _gen_sine_scalar(kappa: float, r: float):
    if abs(kappa) * r * r < _SERIES_CUTOFF:
        return _series(kappa, r)
    root = math.sqrt(abs(kappa))
    if kappa > 0:
        return math.sin(root * r) / root, math.cos(root * r)
    try:
        return math.sinh(root * r) / root, math.cosh(root * r)
    except OverflowError:
        return math.inf, math.inf


def _gen_sine(kappa, r):
    if np.ndim(kappa) == 0 and np.ndim(r) == 0:
        return _gen_sine_scalar(float(kappa), float(r))
    kappa = np.asarray(kappa, dtype=float)
    r = np.asarray(r, dtype=float)
    kappa, r = np.broadcast_arrays(kappa, r)
    root = np.sqrt(np.abs(kappa))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        sph = np.where(kappa > 0, np.sin(root * r) / root, np.sinh(root * r) / root)
        spph = np.where(kappa > 0, np.cos(root * r), np.cosh(root * r))
    ser, serp = _series(kappa, r)
    near = np.abs(kappa) * r * r < _SERIES_CUTOFF
    s = np.where(near, ser, sph)
    sp = np.where(near, serp, spph)
    if s.ndim == 0:
        return float(s), float(sp)
    return s, sp


def s_kappa(kappa, r):
    """Generalized sine: ``sin(sqrt(k) r)/sqrt(k)``, ``r`` or ``sinh(sqrt(-k) r)/sqrt(-k)``."""
    return _gen_sine(kappa, r)[0]


def s_kappa_prime(kappa, r):
    """Derivative in ``r`` of :func:`s_kappa`."""
    return _gen_sine(kappa, r)[1]


# --- curvature models -----------------------------------------------------


class CurvatureModel:
    """Base class; subclasses implement :meth:`block`."""

    isotropic = True

    def block(self, r: float, sigma):
        return self.multiplier(r) * np.asarray(sigma, dtype=float)

    def multiplier(self, r):
        raise NotImplementedError

    def lower_profile(self, r):
        """Largest scalar ``m(r)`` with ``Rbar >= m(r) * sigma``."""
        return self.multiplier(r)

    def upper_profile(self, r):
        """Smallest scalar ``m(r)`` with ``Rbar <= m(r) * sigma``."""
        return self.multiplier(r)


@dataclass(frozen=True)
class SpaceForm(CurvatureModel):
    kappa: float

    def multiplier(self, r):
        return self.kappa + 0.0 * np.asarray(r, dtype=float)


@dataclass(frozen=True)
class RadialProfile(CurvatureModel):
    """Multiplier ``c / (1 + a r)**p``; ``p = 2`` is the exactly solvable decay rate."""

    c: float
    a: float
    p: float = 2.0

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidInput("RadialProfile needs a > 0")

    def multiplier(self, r):
        return self.c / (1.0 + self.a * np.asarray(r, dtype=float)) ** self.p


@functools.lru_cache(maxsize=None)
def _traceless_direction(seed: int, n: int) -> np.ndarray:
    q = np.zeros((n, n))
    if n == 1:
        return q
    rng = np.random.default_rng([seed, n])
    q = numerics.sym(rng.normal(size=(n, n)))
    q -= np.trace(q) / n * np.eye(n)
    norm = np.max(np.abs(numerics.sym_eig(q).values))
    q = q / norm
    q.setflags(write=False)
    return q


@dataclass(frozen=True)
class PinchedSynthetic(CurvatureModel):
    """Space form ``kappa`` plus a traceless perturbation of size ``eps``.

    The perturbation is ``eps * sin(r) * L Q L^T`` with ``sigma = L L^T`` and
    ``Q`` a seeded traceless symmetric matrix of unit operator norm, so every
    generalized eigenvalue of it against ``sigma`` lies in ``[-eps, eps]``.
    """

    kappa: float
    eps: float
    seed: int = 0
    isotropic = False

    def __post_init__(self):
        if self.eps < 0:
            raise InvalidInput("PinchedSynthetic needs eps >= 0")

    def perturbation(self, r, sigma):
        sigma = np.asarray(sigma, dtype=float)
        q = _traceless_direction(int(self.seed), sigma.shape[-1])
        low = np.linalg.cholesky(numerics.sym(sigma))
        return numerics.sym(self.eps * np.sin(r) * (low @ q @ np.swapaxes(low, -1, -2)))

    def block(self, r, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return self.kappa * sigma + self.perturbation(r, sigma)

    def multiplier(self, r):
        return self.kappa + 0.0 * np.asarray(r, dtype=float)

    def lower_profile(self, r):
        return self.kappa - self.eps * np.abs(np.sin(r))

    def upper_profile(self, r):
        return self.kappa + self.eps * np.abs(np.sin(r))


@dataclass(frozen=True)
class Custom(CurvatureModel):
    """Tabulated multiplier ``m(r)``, interpolated by a cubic spline."""

    r_table: tuple
    m_table: tuple
    _spline: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        from scipy.interpolate import CubicSpline

        r = np.asarray(self.r_table, dtype=float)
        m = np.asarray(self.m_table, dtype=float)
        if r.ndim != 1 or r.shape != m.shape or len(r) < 2:
            raise InvalidInput("Custom needs matching 1-D tables with at least two entries")
        if np.any(np.diff(r) <= 0):
            raise InvalidInput("Custom r_table must be strictly increasing")
        object.__setattr__(self, "r_table", tuple(r.tolist()))
        object.__setattr__(self, "m_table", tuple(m.tolist()))
        object.__setattr__(self, "_spline", CubicSpline(r, m))

    def multiplier(self, r):
        r_arr = np.asarray(r, dtype=float)
        lo, hi = self.r_table[0], self.r_table[-1]
        if np.any(r_arr < lo - 1e-12) or np.any(r_arr > hi + 1e-12):
            raise OutOfRange(f"r={r} outside tabulated range [{lo}, {hi}]")
        out = self._spline(np.clip(r_arr, lo, hi))
        return float(out) if out.ndim == 0 else out


def curvature_block(model: CurvatureModel, r: float, sigma):
    """Normal curvature block of ``model`` at distance ``r`` for metric ``sigma``."""
    return model.block(r, sigma)


# --- scalar Jacobi equation -------------------------------------------------


@dataclass
class JacobiSolution:
    r: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    first_zero: Optional[float] = None

    def log_derivative(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.fp / self.f

    def positive_until(self, cutoff: float = 1.0) -> float:
        return np.inf if self.first_zero is None else cutoff * self.first_zero


Profile = Union[float, Callable[[float], object]]


def _as_profile(profile: Profile) -> Callable:
    if callable(profile):
        return profile
    value = float(profile)
    return lambda r: value


def jacobi_batch(profile: Profile, f0, f0p, r_max: float, h: float) -> list:
    """Integrate ``f'' = -mu(r) f`` for a batch of initial data.

    ``profile(r)`` may return a scalar or an array broadcasting against
    ``f0``; one :class:`JacobiSolution` is returned per batch member.
    """
    mu = _as_profile(profile)
    f0 = np.atleast_1d(np.asarray(f0, dtype=float))
    f0p = np.atleast_1d(np.asarray(f0p, dtype=float))
    f0, f0p = np.broadcast_arrays(f0, f0p)
    y0 = np.stack([f0, f0p], axis=-1)

    def deriv(r, y):
        return np.stack([y[:, 1], -np.asarray(mu(r), dtype=float) * y[:, 0]], axis=-1)

    grid, ys = numerics.rk4_integrate(y0, deriv, r_max, h)
    out = []
    for b in range(len(f0)):
        f = ys[:, b, 0].copy()
        fp = ys[:, b, 1].copy()
        f[0], fp[0] = f0[b], f0p[b]
        out.append(JacobiSolution(grid, f, fp, _first_zero(grid, f, fp, mu, b)))
    return out


def jacobi_scalar(profile: Profile, f0: float, f0p: float, r_max: float, h: float) -> JacobiSolution:
    """Solve ``f'' = -mu(r) f`` with ``f(0) = f0``, ``f'(0) = f0p``."""
    return jacobi_batch(profile, f0, f0p, r_max, h)[0]


def _first_zero(grid, f, fp, mu, member):
    sign0 = np.sign(f[0])
    if sign0 == 0:
        return 0.0
    hits = np.nonzero(np.sign(f[1:]) != sign0)[0]
    if len(hits) == 0:
        return None
    k = hits[0] + 1
    if f[k] == 0:
        return float(grid[k])
    r0 = grid[k - 1]
    y0 = np.array([f[k - 1], fp[k - 1]])

    def deriv(r, y):
        m = np.asarray(mu(r), dtype=float)
        m = float(m) if m.ndim == 0 else float(m[member])
        return np.array([y[1], -m * y[0]])

    def f_at(t):
        if t == 0:
            return y0[0]
        return numerics.rk4_step(deriv, r0, y0, t)[0]

    t = numerics.bisect_root(f_at, 0.0, grid[k] - r0, 1e-13)
    return float(r0 + t)
