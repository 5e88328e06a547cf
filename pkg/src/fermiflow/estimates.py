"""Closed forms and a-priori bounds: Steiner area, pinching, umbilic drift,
the annular volume bound and the gradient envelope.
"""

from __future__ import annotations

import csv
import math
import weakref
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import numerics
from .ambient import CurvatureModel, JacobiSolution, s_kappa, s_kappa_prime
from .comparison import ComparisonReport, _as_list, _build, _reduce
from .errors import HypothesisViolated, InvalidInput
from .flow import fmt, focal_distance
from .surface import InitialSurface, SurfacePoint, elementary_symmetric, principal_curvatures

PINCH_TOL = 1e-12
DRIFT_TOL = 1e-8
CONVEX_TOL = 1e-10
SIMPSON_RTOL = 1e-10


# --- Steiner formula ------------------------------------------------------------


def steiner_eta(kappa: float, p: SurfacePoint, r: float) -> np.ndarray:
    """Closed-form ``eta(r) = s'_k(r) rho + s_k(r) lambda`` in a space form."""
    s, sp = s_kappa(kappa, r), s_kappa_prime(kappa, r)
    return numerics.sym(sp * p.rho + s * p.lam)


@dataclass(frozen=True)
class SteinerCoefficients:
    """``integrals[k]`` is the weighted integral of ``S_k`` of the principal curvatures."""

    kappa: float
    integrals: tuple

    @classmethod
    def of(cls, s: InitialSurface, kappa: float) -> "SteinerCoefficients":
        return cls(float(kappa), _integrals(s))

    @property
    def dim(self) -> int:
        return len(self.integrals) - 1

    def area(self, r):
        """Area of the parallel surface at distance ``r`` (scalar or array)."""
        n = self.dim
        s = np.asarray(s_kappa(self.kappa, r), dtype=float)
        sp = np.asarray(s_kappa_prime(self.kappa, r), dtype=float)
        total = np.zeros_like(s)
        for l in range(n + 1):
            total = total + sp**l * s ** (n - l) * self.integrals[n - l]
        return float(total) if total.ndim == 0 else total


_CACHE: "weakref.WeakKeyDictionary[InitialSurface, tuple]" = weakref.WeakKeyDictionary()


def _integrals(s: InitialSurface) -> tuple:
    try:
        return _CACHE[s]
    except KeyError:
        pass
    sym_fn = elementary_symmetric(principal_curvatures(s))
    out = tuple(math.fsum(s.weights * sym_fn[:, k]) for k in range(s.dim + 1))
    _CACHE[s] = out
    return out


def steiner_area(s: InitialSurface, kappa: float, r):
    """``sum_l s'^l s^(n-l) int S_(n-l)``; exact for parallel surfaces in a space form."""
    return SteinerCoefficients.of(s, kappa).area(r)


# --- pinching and umbilic drift ----------------------------------------------


def pinching_check(model: CurvatureModel, kappa_ref: float, eps: float, r_grid, sigma_grid, tol: float = PINCH_TOL) -> ComparisonReport:
    """Check that every normal sectional curvature lies within ``eps`` of ``kappa_ref``.

    ``sigma_grid`` holds one metric per radius.  Margins are ``eps`` minus the
    largest deviation of a generalized eigenvalue of the curvature block.
    """
    r_grid = np.asarray(r_grid, dtype=float).reshape(-1)
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    if sigma_grid.ndim == 2:
        sigma_grid = np.broadcast_to(sigma_grid, (len(r_grid),) + sigma_grid.shape)
    if len(sigma_grid) != len(r_grid):
        raise InvalidInput("one metric per radius required")
    margins = np.empty(len(r_grid))
    for k, (r, sigma) in enumerate(zip(r_grid, sigma_grid)):
        w = numerics.gen_eigvals(model.block(r, sigma), sigma)
        margins[k] = eps - np.max(np.abs(w - kappa_ref))
    return _build(r_grid, margins, [""] * len(r_grid), tol)


def traceless_eigenvalues(sigma, tau):
    """Generalized eigenvalues of ``tau - (H/n) sigma`` against ``sigma``."""
    w = numerics.gen_eigvals(tau, sigma)
    return w - w.mean(axis=-1, keepdims=True)


def umbilic_drift_check(traj, c: float, eps: float, tol: float = DRIFT_TOL) -> ComparisonReport:
    """Check ``|tau - (H/n) sigma| <= (c + eps r) sigma`` while the surface is convex.

    Convex means every principal curvature is at least ``-1e-10``; samples
    after the first non-convex one are not checked.
    """
    per_point = []
    for t in _as_list(traj):
        w = numerics.gen_eigvals(t.tau, t.sigma)
        convex = w[:, 0] >= -CONVEX_TOL
        stop = len(convex) if np.all(convex) else int(np.argmin(convex))
        if stop == 0:
            continue
        dev = w[:stop] - w[:stop].mean(axis=-1, keepdims=True)
        margins = c + eps * t.r[:stop] - np.max(np.abs(dev), axis=-1)
        per_point.append((t.r[:stop], margins, t.label))
    return _build(*_reduce(per_point), tol)


# --- volume bound ---------------------------------------------------------------


@dataclass(frozen=True)
class VolumeBoundInput:
    tau_minus: float
    c: float
    d: float
    eps: float
    n: int
    r1: float
    r2: float
    area_r1: float

    def __post_init__(self):
        if not (0 < self.r1 < self.r2):
            raise InvalidInput("need 0 < r1 < r2")
        if self.eps < 0:
            raise InvalidInput("eps must be nonnegative")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInput("n must be a positive integer")
        if self.area_r1 < 0:
            raise InvalidInput("area_r1 must be nonnegative")

    @property
    def m(self) -> float:
        return self.d / self.n - self.eps

    @property
    def convexity_radius(self) -> float:
        top = self.d / self.n + self.eps
        return math.pi / (2.0 * math.sqrt(top)) if top > 0 else math.inf


def _simpson(fn, a: float, b: float, rtol: float = SIMPSON_RTOL, max_level: int = 22) -> float:
    """Composite Simpson rule, doubling the panel count until successive values agree."""
    if b <= a:
        return 0.0
    panels = 64
    prev = None
    for _ in range(max_level):
        x = np.linspace(a, b, panels + 1)
        y = fn(x)
        val = (b - a) / (3.0 * panels) * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())
        if prev is not None and abs(val - prev) <= rtol * abs(val) + 1e-300:
            return float(val)
        prev = val
        panels *= 2
    return float(prev)


def volume_lower_bound(inp: VolumeBoundInput):
    """Lower bound for the volume between geodesic spheres of radii ``r1 < r2``.

    Returns ``(bound, u_positive_until)`` where ``u = (tau_-/n + c) s_m + s'_m``
    and the integral stops at the first zero of ``u``.
    """
    limit = inp.convexity_radius
    if not inp.r2 < limit:
        raise HypothesisViolated(f"r2={inp.r2} is not below the convexity radius {limit}")
    n, m, c, eps = inp.n, inp.m, inp.c, inp.eps
    slope = inp.tau_minus / n + c
    zero = float(focal_distance(m, slope))

    def integrand(r):
        u = slope * s_kappa(m, r) + s_kappa_prime(m, r)
        return np.maximum(u, 0.0) ** n * np.exp(-n * c * r - 0.5 * n * eps * r * r)

    top = min(inp.r2 - inp.r1, zero)
    return inp.area_r1 * _simpson(integrand, 0.0, top), zero


def shell_volume(r, area) -> float:
    """Volume swept by a sampled area profile (composite Simpson on the samples)."""
    from scipy.integrate import simpson

    return float(simpson(np.asarray(area, float), x=np.asarray(r, float)))


# --- gradient envelope ----------------------------------------------------------


class Envelope:
    """``r -> a1 f(r)^(5 eps - 6) + a2`` with ``f`` interpolated on its grid."""

    def __init__(self, a1: float, a2: float, eps: float, f: JacobiSolution, regime: str):
        self.a1, self.a2, self.eps = a1, a2, eps
        self.f = f
        self.regime = regime
        self.power = 5.0 * eps - 6.0

    def __call__(self, r):
        fr = np.interp(np.asarray(r, float), self.f.r, self.f.f)
        out = self.a1 * fr**self.power + self.a2
        return float(out) if np.ndim(out) == 0 else out

    def on_grid(self):
        return self.f.r, self.a1 * self.f.f**self.power + self.a2


@dataclass(frozen=True)
class GradEnvelope:
    a1: float
    a2: float
    envelope: Envelope

    def __iter__(self):
        return iter((self.a1, self.a2, self.envelope))


def grad_bound_envelope(c1: float, c2: float, eps: float, f: JacobiSolution, grad0: float) -> GradEnvelope:
    """Envelope ``a1 f^(5 eps - 6) + a2`` for the squared gradient of ``tau``.

    The regime follows the sign of ``f'/f`` on the sampled range: positive
    needs ``0 < eps < 6/5``, negative needs ``eps < 0``.  A constant ``f``
    lets the sign of ``eps`` pick the regime.
    """
    if np.any(f.f <= 0):
        raise InvalidInput("f must stay positive on the range")
    ratio = f.log_derivative()
    if np.all(ratio >= 0) and np.any(ratio > 0):
        regime = "increasing"
    elif np.all(ratio <= 0) and np.any(ratio < 0):
        regime = "decreasing"
    elif np.all(ratio == 0):
        regime = "increasing" if eps > 0 else "decreasing"
    else:
        raise InvalidInput("f'/f changes sign on the range")
    if regime == "increasing" and not 0 < eps < 1.2:
        raise InvalidInput(f"eps={eps} outside (0, 6/5) for increasing f")
    if regime == "decreasing" and not eps < 0:
        raise InvalidInput(f"eps={eps} must be negative for decreasing f")
    a2 = (c1 + 4.0 * c2) / (eps * (6.0 - 5.0 * eps))
    a1 = grad0 - a2
    return GradEnvelope(a1, a2, Envelope(a1, a2, eps, f, regime))


# --- export -----------------------------------------------------------------------


def export_bound_csv(path, r, bound, observed, comment: str = "# fermi-flow v1") -> None:
    """Rows ``(r, bound, observed, slack)``; slack is ``observed - bound``."""
    r, bound, observed = (np.atleast_1d(np.asarray(x, float)) for x in (r, bound, observed))
    with Path(path).open("w", newline="") as fh:
        fh.write(comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "bound", "observed", "slack"])
        for row in zip(r, bound, observed):
            w.writerow([fmt(row[0]), fmt(row[1]), fmt(row[2]), fmt(row[2] - row[1])])
