"""Sampled initial hypersurfaces: per-point ``(rho, lambda)`` plus quadrature weights.

Surfaces carry no embedding coordinates.  Each sample holds the induced
metric ``rho`` and second fundamental form ``lambda`` in some local chart,
and a positive weight so that weighted sums approximate integrals against
the area measure.  ``lambda`` is measured against the flow normal, so an
outward-moving round sphere has positive principal curvatures.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import numerics
from .ambient import s_kappa, s_kappa_prime
from .errors import InvalidInput

MAX_SHAPE_NORM = 1e8


@dataclass(frozen=True)
class SurfacePoint:
    rho: np.ndarray
    lam: np.ndarray
    label: str = ""

    def __post_init__(self):
        rho, lam = _validate(np.asarray(self.rho, float)[None], np.asarray(self.lam, float)[None])
        object.__setattr__(self, "rho", rho[0])
        object.__setattr__(self, "lam", lam[0])

    @property
    def dim(self) -> int:
        return self.rho.shape[-1]


def _validate(rho, lam):
    if rho.ndim != 3 or rho.shape != lam.shape or rho.shape[-1] != rho.shape[-2]:
        raise InvalidInput(f"rho and lambda must be stacks of matching square matrices, got {rho.shape} and {lam.shape}")
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(lam))):
        raise InvalidInput("non-finite surface data")
    for name, m in (("rho", rho), ("lambda", lam)):
        asym = np.abs(m - np.swapaxes(m, -1, -2)).max(initial=0.0)
        if asym > 1e-10 * max(1.0, np.abs(m).max(initial=0.0)):
            raise InvalidInput(f"{name} is not symmetric (max asymmetry {asym:.3g})")
    rho = numerics.sym(rho)
    lam = numerics.sym(lam)
    try:
        np.linalg.cholesky(rho)
    except np.linalg.LinAlgError as exc:
        raise InvalidInput("rho must be positive definite at every point") from exc
    shape = np.linalg.solve(rho, lam)
    norm = np.abs(shape).max(initial=0.0)
    if norm > MAX_SHAPE_NORM:
        raise InvalidInput(f"shape operator norm {norm:.3g} exceeds {MAX_SHAPE_NORM:g}")
    return rho, lam


class InitialSurface:
    """Stacked per-point data.  ``rho`` and ``lam`` have shape ``(P, n, n)``."""

    def __init__(self, rho, lam, weights, labels: Optional[Sequence[str]] = None, area: Optional[float] = None):
        rho = np.asarray(rho, dtype=float)
        lam = np.asarray(lam, dtype=float)
        self.rho, self.lam = _validate(rho, lam)
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(self.weights) != len(self.rho):
            raise InvalidInput("one weight per point required")
        if not np.all(self.weights > 0):
            raise InvalidInput("weights must be positive")
        if labels is None:
            labels = [f"p{i}" for i in range(len(self.rho))]
        self.labels = [str(x) for x in labels]
        if len(self.labels) != len(self.rho):
            raise InvalidInput("one label per point required")
        total = math.fsum(self.weights)
        if area is not None and abs(area - total) > 1e-12 * max(1.0, abs(total)):
            raise InvalidInput(f"weights sum to {total!r}, not the stated area {area!r}")
        self.area = total
        for a in (self.rho, self.lam, self.weights):
            a.setflags(write=False)

    @classmethod
    def from_points(cls, points: Iterable[SurfacePoint], weights):
        points = list(points)
        if not points:
            raise InvalidInput("empty surface")
        return cls(
            np.stack([p.rho for p in points]),
            np.stack([p.lam for p in points]),
            weights,
            [p.label for p in points],
        )

    @property
    def dim(self) -> int:
        return self.rho.shape[-1]

    def __len__(self):
        return len(self.rho)

    def point(self, i: int) -> SurfacePoint:
        return SurfacePoint(self.rho[i], self.lam[i], self.labels[i])

    @property
    def points(self) -> list:
        return [self.point(i) for i in range(len(self))]

    def subset(self, index) -> "InitialSurface":
        index = np.asarray(index)
        return InitialSurface(self.rho[index], self.lam[index], self.weights[index], [self.labels[i] for i in index])


def shape_operator(p: SurfacePoint):
    """Mixed shape operator ``rho^{-1} lambda`` and its ascending eigenvalues."""
    mixed = np.linalg.solve(p.rho, p.lam)
    return mixed, numerics.gen_eigvals(p.lam, p.rho)


def principal_curvatures(s: InitialSurface):
    return numerics.gen_eigvals(s.lam, s.rho)


def elementary_symmetric(values):
    """``S_0..S_n`` of the trailing axis, via the coefficients of ``prod(1 + a_i x)``."""
    a = np.asarray(values, dtype=float)
    n = a.shape[-1]
    out = np.zeros(a.shape[:-1] + (n + 1,))
    out[..., 0] = 1.0
    for i in range(n):
        ai = a[..., i : i + 1]
        out[..., 1 : i + 2] = out[..., 1 : i + 2] + ai * out[..., 0 : i + 1]
    return out


def power_sums_of(values, k_max: int):
    a = np.asarray(values, dtype=float)
    return np.stack([np.sum(a**k, axis=-1) for k in range(1, k_max + 1)], axis=-1)


def surface_integral(s: InitialSurface, values) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape != s.weights.shape:
        raise InvalidInput(f"expected {len(s.weights)} values, got shape {values.shape}")
    return math.fsum(s.weights * values)


def pinch_constant(p: SurfacePoint) -> float:
    """Smallest ``c`` with ``|lambda - (H/n) rho| <= c rho`` in the generalized-eigenvalue sense."""
    n = p.dim
    mean = np.trace(np.linalg.solve(p.rho, p.lam)) / n
    w = numerics.gen_eigvals(p.lam - mean * p.rho, p.rho)
    return float(np.max(np.abs(w)))


# --- presets ------------------------------------------------------------------


def _axis_count(sampling: int, n: int) -> int:
    if sampling < 1:
        raise InvalidInput("sampling must be positive")
    return max(2, int(round(sampling ** (1.0 / n)))) if n > 1 else max(3, int(sampling))


def _unit_sphere_grid(n: int, sampling: int):
    """Midpoint grid on hyperspherical coordinates of the unit n-sphere.

    Returns per-point metric diagonals ``(P, n)`` and area weights ``(P,)``.
    """
    m = _axis_count(sampling, n)
    dphi = 2.0 * math.pi / m
    if n == 1:
        return np.ones((m, 1)), np.full(m, dphi)
    dth = math.pi / m
    th = (np.arange(m) + 0.5) * dth
    grids = np.meshgrid(*([th] * (n - 1)), indexing="ij")
    angles = np.stack([g.reshape(-1) for g in grids], axis=-1)  # (m^(n-1), n-1)
    sin2 = np.sin(angles) ** 2
    diag = np.ones((len(angles), n))
    for k in range(1, n):
        diag[:, k] = diag[:, k - 1] * sin2[:, k - 1]
    dens = np.sqrt(np.prod(diag, axis=-1)) * dth ** (n - 1) * dphi
    diag = np.repeat(diag, m, axis=0)
    dens = np.repeat(dens, m)
    return diag, dens


def round_sphere(R: float, n: int = 2, kappa: float = 0.0, sampling: int = 400) -> InitialSurface:
    """Geodesic sphere of radius ``R`` in the space form of curvature ``kappa``."""
    if not (R > 0 and n >= 1):
        raise InvalidInput("round_sphere needs R > 0 and n >= 1")
    if kappa > 0 and R >= math.pi / math.sqrt(kappa):
        raise InvalidInput("round_sphere in kappa > 0 needs R < pi/sqrt(kappa)")
    s, sp = s_kappa(kappa, R), s_kappa_prime(kappa, R)
    diag, dens = _unit_sphere_grid(n, sampling)
    rho = np.zeros((len(diag), n, n))
    idx = np.arange(n)
    rho[:, idx, idx] = s * s * diag
    return InitialSurface(rho, (sp / s) * rho, dens * s**n)


def ellipsoid_2d(a: float, b: float, c: float, sampling: int = 400) -> InitialSurface:
    """Ellipsoid with semi-axes ``a, b, c`` in flat 3-space, outward normal."""
    if not (a > 0 and b > 0 and c > 0):
        raise InvalidInput("ellipsoid semi-axes must be positive")
    m = _axis_count(sampling, 2)
    dth, dphi = math.pi / m, 2.0 * math.pi / m
    th = (np.arange(m) + 0.5) * dth
    ph = (np.arange(m) + 0.5) * dphi
    th, ph = (x.reshape(-1) for x in np.meshgrid(th, ph, indexing="ij"))
    st, ct, sp_, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    zero = np.zeros_like(th)
    F = np.stack([a * st * cp, b * st * sp_, c * ct], -1)
    Ft = np.stack([a * ct * cp, b * ct * sp_, -c * st], -1)
    Fp = np.stack([-a * st * sp_, b * st * cp, zero], -1)
    Ftt = -F
    Ftp = np.stack([-a * ct * sp_, b * ct * cp, zero], -1)
    Fpp = np.stack([-a * st * cp, -b * st * sp_, zero], -1)
    nu = np.cross(Ft, Fp)
    nu /= np.linalg.norm(nu, axis=-1, keepdims=True)
    nu *= np.sign(np.sum(nu * F, axis=-1))[:, None]
    dot = lambda u, v: np.sum(u * v, axis=-1)
    rho = np.stack([np.stack([dot(Ft, Ft), dot(Ft, Fp)], -1), np.stack([dot(Ft, Fp), dot(Fp, Fp)], -1)], -2)
    lam = -np.stack([np.stack([dot(Ftt, nu), dot(Ftp, nu)], -1), np.stack([dot(Ftp, nu), dot(Fpp, nu)], -1)], -2)
    weights = np.sqrt(np.linalg.det(rho)) * dth * dphi
    return InitialSurface(rho, lam, weights)


def umbilic_custom(scale: float, k: float, n: int = 2, sampling: int = 1, area: float = 1.0) -> InitialSurface:
    """``sampling`` identical umbilic points ``rho = scale*I``, ``lambda = k*rho``."""
    if not (scale > 0 and area > 0):
        raise InvalidInput("umbilic_custom needs positive scale and area")
    rho = np.broadcast_to(scale * np.eye(n), (sampling, n, n)).copy()
    return InitialSurface(rho, k * rho, np.full(sampling, area / sampling))


def random_surface(n: int, points: int, seed: int = 0, curvature_scale: float = 1.0, area: float = 1.0) -> InitialSurface:
    """Random SPD metrics and symmetric second fundamental forms (test fixture)."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(points, n, n))
    rho = a @ np.swapaxes(a, -1, -2) / n + 0.5 * np.eye(n)
    raw = numerics.sym(rng.normal(size=(points, n, n))) * curvature_scale
    lam = numerics.sym(rho @ raw @ rho) / np.trace(rho, axis1=-2, axis2=-1)[:, None, None] * n
    w = rng.uniform(0.5, 1.5, size=points)
    return InitialSurface(rho, lam, w * area / w.sum())


PRESETS = {
    "round_sphere": round_sphere,
    "ellipsoid_2d": ellipsoid_2d,
    "umbilic_custom": umbilic_custom,
    "random": random_surface,
}


def preset_surface(kind: str, **params) -> InitialSurface:
    try:
        builder = PRESETS[kind]
    except KeyError:
        raise InvalidInput(f"unknown surface preset {kind!r}; choose from {sorted(PRESETS)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise InvalidInput(f"bad parameters for preset {kind!r}: {exc}") from None


# --- CSV ----------------------------------------------------------------------


def upper_index(n: int):
    return [(i, j) for i in range(n) for j in range(i, n)]


def _dim_from_columns(count: int) -> int:
    # label + 2 * n(n+1)/2 + weight
    for n in range(1, numerics.MAX_DIM + 1):
        if n * (n + 1) + 2 == count:
            return n
    raise InvalidInput(f"{count} columns do not match label, rho, lambda, weight for any dimension")


def read_surface_csv(path) -> InitialSurface:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if len(rows) < 2:
        raise InvalidInput(f"{path}: need a header row and at least one point")
    header, body = rows[0], rows[1:]
    n = _dim_from_columns(len(header))
    tri = upper_index(n)
    expected = ["label"] + [f"rho_{i+1}{j+1}" for i, j in tri] + [f"lambda_{i+1}{j+1}" for i, j in tri] + ["weight"]
    if [h.strip() for h in header] != expected:
        raise InvalidInput(f"{path}: header must be {','.join(expected)}")
    rho = np.zeros((len(body), n, n))
    lam = np.zeros((len(body), n, n))
    weights = np.zeros(len(body))
    labels = []
    m = len(tri)
    for k, row in enumerate(body):
        if len(row) != len(header):
            raise InvalidInput(f"{path}: line {k + 2} has {len(row)} fields, expected {len(header)}")
        try:
            vals = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise InvalidInput(f"{path}: line {k + 2}: {exc}") from None
        labels.append(row[0])
        for t, (i, j) in enumerate(tri):
            rho[k, i, j] = rho[k, j, i] = vals[t]
            lam[k, i, j] = lam[k, j, i] = vals[m + t]
        weights[k] = vals[-1]
    return InitialSurface(rho, lam, weights, labels)


def write_surface_csv(s: InitialSurface, path) -> None:
    tri = upper_index(s.dim)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"rho_{i+1}{j+1}" for i, j in tri] + [f"lambda_{i+1}{j+1}" for i, j in tri] + ["weight"])
        for k in range(len(s)):
            w.writerow(
                [s.labels[k]]
                + [repr(float(s.rho[k, i, j])) for i, j in tri]
                + [repr(float(s.lam[k, i, j])) for i, j in tri]
                + [repr(float(s.weights[k]))]
            )
