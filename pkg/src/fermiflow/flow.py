"""Normal-distance (Fermi) flow of sampled hypersurface data.

Two independent integration routes are provided:

* ``direct``: the first-order system for the metric ``sigma``, the lowered
  second fundamental form ``tau`` and the volume factor ``vol``::

      sigma' = 2 tau
      tau'   = tau sigma^{-1} tau - Rbar(r, sigma)
      vol'   = tr(sigma^{-1} tau) vol

* ``eta``: the linear-looking second-order system ``eta'' = -rho eta^{-T} Rbar``
  with ``eta(0) = rho``, ``eta'(0) = lambda``, from which
  ``sigma = eta^T rho^{-1} eta``, ``tau = eta'^T rho^{-1} eta`` and
  ``vol = det(eta) / det(rho)``.

``eta`` is stored as a general square matrix.  It stays symmetric whenever the
curvature block is a scalar multiple of ``sigma``; an anisotropic block makes
it non-symmetric while the reconstructed ``sigma`` and ``tau`` stay symmetric.

Points evolve independently.  Batches are cut into fixed-size chunks so the
arithmetic performed for a point does not depend on the thread count.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import numerics
from .ambient import CurvatureModel
from .errors import InvalidInput, SingularMatrix
from .surface import InitialSurface, SurfacePoint, upper_index

TOL_DET = 1e-9
TOL_TAU = 1e6
ETA_ASYMMETRY_RTOL = 1e-8
CHUNK = 32
ANCHOR_KH = 0.02


def default_step(r_max: float) -> float:
    return min(1e-3, r_max / 1e4)


class Status(str, enum.Enum):
    COMPLETED = "Completed"
    FOCAL = "FocalDetected"
    BLOWUP = "BlowUp"


class Verdict(str, enum.Enum):
    ALIVE = "Alive"
    FOCAL = "FocalDetected"


@dataclass
class PointState:
    sigma: np.ndarray
    tau: np.ndarray
    vol: float


@dataclass
class EtaState:
    eta: np.ndarray
    eta_p: np.ndarray


@dataclass
class FlowTrajectory:
    """Sampled history of one point; arrays are indexed by sample."""

    r: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    vol: np.ndarray
    status: Status = Status.COMPLETED
    focal_r: Optional[float] = None
    eta: Optional[np.ndarray] = None
    eta_p: Optional[np.ndarray] = None
    rho: Optional[np.ndarray] = None
    label: str = ""

    def __len__(self):
        return len(self.r)

    @property
    def dim(self) -> int:
        return self.sigma.shape[-1]

    def state(self, i: int) -> PointState:
        return PointState(self.sigma[i], self.tau[i], float(self.vol[i]))

    def eta_state(self, i: int) -> Optional[EtaState]:
        if self.eta is None:
            return None
        return EtaState(self.eta[i], self.eta_p[i])

    def curvatures(self):
        """Principal curvatures (ascending) at every sample."""
        return numerics.gen_eigvals(self.tau, self.sigma)

    def shape_operator(self):
        return np.linalg.solve(self.sigma, self.tau)


# --- pointwise operations -------------------------------------------------------


def reconstruct(eta: EtaState, rho) -> PointState:
    """Metric, second fundamental form and volume factor from ``(eta, eta')``."""
    st, asym = _reconstruct(np.asarray(eta.eta, float), np.asarray(eta.eta_p, float), np.asarray(rho, float))
    if asym > ETA_ASYMMETRY_RTOL:
        raise InvalidInput(f"eta' rho^-1 eta is not symmetric (relative asymmetry {asym:.3g})")
    return PointState(st[0], st[1], float(st[2]))


def _reconstruct(eta, eta_p, rho):
    if np.any(np.abs(np.linalg.det(eta)) <= 1e-14 * np.abs(eta).max(axis=(-2, -1), initial=1.0) ** eta.shape[-1]):
        raise SingularMatrix("eta is singular")
    rho_inv_eta = np.linalg.solve(rho, eta)
    sigma = numerics.sym(np.swapaxes(eta, -1, -2) @ rho_inv_eta)
    raw = np.swapaxes(eta_p, -1, -2) @ rho_inv_eta
    tau = numerics.sym(raw)
    denom = max(np.abs(raw).max(initial=0.0), np.abs(sigma).max(initial=0.0), 1e-300)
    asym = float(np.abs(raw - np.swapaxes(raw, -1, -2)).max(initial=0.0) / denom)
    vol = np.linalg.det(eta) / np.linalg.det(rho)
    return (sigma, tau, vol), asym


def power_sums(st: PointState, k_max: int):
    """``A_k = tr((sigma^{-1} tau)^k)`` for ``k = 1..k_max``."""
    if k_max < 1:
        return np.zeros(0)
    try:
        mixed = np.linalg.solve(np.asarray(st.sigma, float), np.asarray(st.tau, float))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("sigma is singular") from exc
    out = np.empty(mixed.shape[:-2] + (k_max,))
    acc = mixed
    for k in range(k_max):
        out[..., k] = np.trace(acc, axis1=-2, axis2=-1)
        acc = acc @ mixed
    return out


def _dead_mask(sigma, tau, det_rho, tol_det, tol_tau, with_a2=False):
    """Degeneration test for stacked states; optionally also returns ``A_2``."""
    p = sigma.shape[0]
    dead = ~(np.all(np.isfinite(sigma), axis=(-2, -1)) & np.all(np.isfinite(tau), axis=(-2, -1)))
    a2 = np.full(p, np.inf)
    ok = np.nonzero(~dead)[0]
    if len(ok) == 0:
        return (dead, a2) if with_a2 else dead
    if len(ok) < p:
        sigma, tau, det_rho = sigma[ok], tau[ok], det_rho[ok]
    ratio = np.linalg.det(sigma) / det_rho
    bad = ratio <= tol_det
    # a step that skips det = 0 entirely would leave det > 0 with two negative eigenvalues
    small = np.nonzero(~bad & (ratio < 1e-2))[0]
    if len(small):
        bad[small] = np.linalg.eigvalsh(sigma[small])[:, 0] <= 0.0
    good = np.nonzero(~bad)[0]
    if len(good):
        if len(good) < len(bad):
            sigma, tau = sigma[good], tau[good]
        mixed = np.linalg.solve(sigma, tau)
        # sqrt(A_2) bounds the largest |principal curvature| from above
        a2_good = np.einsum("pij,pji->p", mixed, mixed)
        a2[ok[good]] = a2_good
        suspect = np.nonzero(a2_good >= tol_tau * tol_tau)[0]
        if len(suspect):
            w = numerics.gen_eigvals(tau[suspect], sigma[suspect])
            bad[good[suspect]] = np.max(np.abs(w), axis=-1) >= tol_tau
    dead[ok] = bad
    return (dead, a2) if with_a2 else dead


def focal_distance(kappa_eff, k):
    """Distance to the first zero of ``f`` with ``f'' = -kappa_eff f`` and ``f'/f = k`` now."""
    kappa_eff = np.asarray(kappa_eff, float)
    k = np.asarray(k, float)
    out = np.full(np.broadcast(kappa_eff, k).shape, np.inf)
    kappa_eff, k = np.broadcast_arrays(kappa_eff, k)
    with np.errstate(all="ignore"):
        pos = kappa_eff > 0
        root = np.sqrt(np.abs(kappa_eff))
        out = np.where(pos, np.arctan2(root, -k) / root, out)
        flat = (kappa_eff == 0) & (k < 0)
        out = np.where(flat, -1.0 / k, out)
        neg = (kappa_eff < 0) & (-k > root)
        out = np.where(neg, np.arctanh(root / -k) / root, out)
    return out if out.ndim else float(out)


def detect_focal(st: PointState, rho, tol_det: float = TOL_DET, tol_tau: float = TOL_TAU) -> Verdict:
    """Classify a candidate state as alive or degenerate (focal)."""
    sigma = np.asarray(st.sigma, float)[None]
    tau = np.asarray(st.tau, float)[None]
    det_rho = np.atleast_1d(np.linalg.det(np.asarray(rho, float)))
    dead = _dead_mask(sigma, tau, det_rho, tol_det, tol_tau)[0]
    if not dead:
        dead = np.linalg.eigvalsh(sigma[0])[0] <= 0.0
    return Verdict.FOCAL if dead else Verdict.ALIVE


# --- right-hand sides -----------------------------------------------------------


def _split(y, n):
    nn = n * n
    p = y.shape[0]
    return y[:, :nn].reshape(p, n, n), y[:, nn : 2 * nn].reshape(p, n, n), y[:, 2 * nn :]


def _direct_rhs(model, n):
    def deriv(r, y):
        sigma, tau, vol = _split(y, n)
        inv_tau = np.linalg.solve(sigma, tau)
        quad = tau @ inv_tau
        d_tau = 0.5 * (quad + np.swapaxes(quad, -1, -2)) - model.block(r, sigma)
        d_vol = np.einsum("pii->p", inv_tau)[:, None] * vol
        p = y.shape[0]
        return np.concatenate([(2.0 * tau).reshape(p, -1), d_tau.reshape(p, -1), d_vol], axis=1)

    return deriv


def _eta_rhs(model, n, rho, rho_inv):
    def deriv(r, y):
        eta, eta_p, _ = _split(y, n)
        eta_t = np.swapaxes(eta, -1, -2)
        sigma = numerics.sym(eta_t @ rho_inv @ eta)
        rbar = model.block(r, sigma)
        eta_pp = -rho @ np.linalg.solve(eta_t, rbar)
        p = y.shape[0]
        return np.concatenate([eta_p.reshape(p, -1), eta_pp.reshape(p, -1)], axis=1)

    return deriv


def _whiten(a, low):
    """``L^{-1} A L^{-T}`` for stacked ``A`` and Cholesky factors ``L``."""
    y = np.linalg.solve(low, a)
    return numerics.sym(np.swapaxes(np.linalg.solve(low, np.swapaxes(y, -1, -2)), -1, -2))


def _pointwise(deriv_for, idx, r, y):
    """Evaluate a batched RHS; fall back to per-point evaluation on LinAlgError."""
    try:
        return deriv_for(idx)(r, y)
    except np.linalg.LinAlgError:
        out = np.full_like(y, np.nan)
        for j, i in enumerate(idx):
            try:
                out[j] = deriv_for(idx[j : j + 1])(r, y[j : j + 1])[0]
            except np.linalg.LinAlgError:
                pass
        return out


# --- batched engine -------------------------------------------------------------


@dataclass
class _BatchResult:
    grid: np.ndarray
    history: Optional[np.ndarray]  # (K, P, d) raw states or None
    vol: np.ndarray  # (K, P), NaN after death
    last: np.ndarray  # index of last alive sample
    focal_r: np.ndarray
    status: list


class _Engine:
    def __init__(self, rho, lam, model: CurvatureModel, route: str, tol_det, tol_tau):
        if route not in ("direct", "eta"):
            raise InvalidInput(f"unknown route {route!r}")
        self.rho = rho
        self.lam = lam
        self.model = model
        self.route = route
        self.tol_det = tol_det
        self.tol_tau = tol_tau
        self.n = rho.shape[-1]
        self.det_rho = np.linalg.det(rho)
        self.rho_inv = numerics.sym(np.linalg.inv(rho))

    def initial(self):
        p, n = self.rho.shape[0], self.n
        if self.route == "direct":
            return np.concatenate([self.rho.reshape(p, -1), self.lam.reshape(p, -1), np.ones((p, 1))], axis=1)
        return np.concatenate([self.rho.reshape(p, -1), self.lam.reshape(p, -1)], axis=1)

    def deriv_for(self, idx):
        if self.route == "direct":
            return _direct_rhs(self.model, self.n)
        return _eta_rhs(self.model, self.n, self.rho[idx], self.rho_inv[idx])

    def clean(self, y):
        if self.route == "direct":
            n, p = self.n, y.shape[0]
            sigma, tau, vol = _split(y, n)
            return np.concatenate(
                [numerics.sym(sigma).reshape(p, -1), numerics.sym(tau).reshape(p, -1), vol], axis=1
            )
        return y

    def geometry(self, idx, y):
        """``(sigma, tau, vol)`` for raw states ``y`` of points ``idx``."""
        n = self.n
        a, b, vol = _split(y, n)
        if self.route == "direct":
            return a, b, vol[:, 0]
        eta_t = np.swapaxes(a, -1, -2)
        with np.errstate(all="ignore"):
            rho_inv = self.rho_inv[idx]
            sigma = numerics.sym(eta_t @ rho_inv @ a)
            tau = numerics.sym(np.swapaxes(b, -1, -2) @ rho_inv @ a)
            vol = np.linalg.det(a) / self.det_rho[idx]
        return sigma, tau, vol

    def dead(self, idx, y):
        sigma, tau, vol = self.geometry(idx, y)
        with np.errstate(all="ignore"):
            dead, a2 = _dead_mask(sigma, tau, self.det_rho[idx], self.tol_det, self.tol_tau, with_a2=True)
        return dead | ~np.isfinite(vol), a2

    def step(self, idx, r, y, h):
        with np.errstate(all="ignore"):
            out = numerics.rk4_step(lambda rr, yy: _pointwise(self.deriv_for, idx, rr, yy), r, y, h)
        return self.clean(out)

    def predict_focal(self, idx, r_a, y_a):
        """Earliest zero over principal directions of the constant-curvature Jacobi model.

        ``idx`` may be one point (with ``y_a`` its state) or an index array with
        stacked states; ``r_a`` is a scalar or one radius per point.
        """
        single = np.ndim(idx) == 0
        idx = np.atleast_1d(idx)
        y_a = np.asarray(y_a).reshape(len(idx), -1)
        r_a = np.broadcast_to(np.asarray(r_a, float), idx.shape)
        out = np.full(len(idx), np.inf)
        sigma, tau, _ = self.geometry(idx, y_a)
        with np.errstate(all="ignore"):
            for r in np.unique(r_a):
                sel = np.nonzero(r_a == r)[0]
                try:
                    low = np.linalg.cholesky(sigma[sel])
                    rbar = self.model.block(r, sigma[sel])
                except (np.linalg.LinAlgError, ValueError):
                    continue
                k, v = np.linalg.eigh(_whiten(tau[sel], low))
                kappa_eff = np.einsum("pji,pjk,pki->pi", v, _whiten(rbar, low), v)
                out[sel] = r + np.min(focal_distance(kappa_eff, k), axis=-1)
        return float(out[0]) if single else out

    def resolve(self, i, r_k, y_k, h, anchor):
        """Focal radius and status for point ``i`` that degenerated in ``(r_k, r_k + h]``."""
        probe = self.step(np.array([i]), r_k, y_k[None], h)
        sigma, tau, _ = self.geometry(np.array([i]), y_k[None])
        ratio = float(np.linalg.det(sigma[0]) / self.det_rho[i])
        if not np.all(np.isfinite(probe)) and ratio > 1e3 * self.tol_det:
            mixed = np.linalg.solve(sigma[0], tau[0])
            if math.sqrt(max(np.sum(mixed * mixed.T), 0.0)) * h < 0.5:
                return r_k + h, Status.BLOWUP
        r_a, y_a = anchor
        pred = self.predict_focal(i, r_a, y_a)
        if not np.isfinite(pred):
            return r_k + h, Status.FOCAL
        return max(pred, r_k), Status.FOCAL

    def run(self, r_max, h, keep=True):
        grid = numerics.step_grid(r_max, h)
        p = self.rho.shape[0]
        y = self.initial()
        history = None
        if keep:
            history = np.full((len(grid), p, y.shape[1]), np.nan)
            history[0] = y
        vol = np.full((len(grid), p), np.nan)
        vol[0] = 1.0
        alive = np.ones(p, dtype=bool)
        last = np.zeros(p, dtype=int)
        focal_r = np.full(p, np.nan)
        status = [Status.COMPLETED] * p
        # last sample per point where |k| h is small enough for the step to be accurate
        anchor_r = np.zeros(p)
        anchor_y = y.copy()
        stiff = self.dead(np.arange(p), y)[1] * h * h > ANCHOR_KH**2
        for k in range(len(grid) - 1):
            hk = grid[k + 1] - grid[k]
            # a zero of det(sigma) that does not change its sign (e.g. n = 1) can be
            # stepped over; stiff points are screened by the local Jacobi model
            cand = np.nonzero(alive & stiff)[0]
            if len(cand):
                pred = self.predict_focal(cand, grid[k], y[cand])
                hit = pred < grid[k + 1] + 0.5 * hk
                focal_r[cand[hit]] = np.maximum(pred[hit], grid[k])
                for i in cand[hit]:
                    status[i] = Status.FOCAL
                alive[cand[hit]] = False
            idx = np.nonzero(alive)[0]
            if len(idx) == 0:
                break
            y_new = self.step(idx, grid[k], y[idx], hk)
            dead, a2 = self.dead(idx, y_new)
            for j in np.nonzero(dead)[0]:
                i = idx[j]
                focal_r[i], status[i] = self.resolve(i, grid[k], y[i], hk, (anchor_r[i], anchor_y[i]))
                alive[i] = False
            live = ~dead
            ok = idx[live]
            y[ok] = y_new[live]
            last[ok] = k + 1
            calm = ok[a2[live] * hk * hk <= ANCHOR_KH**2]
            stiff[ok] = a2[live] * hk * hk > ANCHOR_KH**2
            anchor_r[calm] = grid[k + 1]
            anchor_y[calm] = y[calm]
            vol[k + 1, ok] = self.geometry(ok, y[ok])[2]
            if keep:
                history[k + 1, ok] = y[ok]
        return _BatchResult(grid, history, vol, last, focal_r, status)


def _stack_points(points):
    if isinstance(points, InitialSurface):
        return points.rho, points.lam, list(points.labels)
    if isinstance(points, SurfacePoint):
        points = [points]
    points = list(points)
    if not points:
        raise InvalidInput("no points to evolve")
    dims = {p.dim for p in points}
    if len(dims) != 1:
        raise InvalidInput("all points must share one dimension")
    return np.stack([p.rho for p in points]), np.stack([p.lam for p in points]), [p.label for p in points]


def _chunks(count, size):
    return [np.arange(s, min(s + size, count)) for s in range(0, count, size)]


def _map(fn, items, threads):
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def evolve_many(
    points,
    model: CurvatureModel,
    r_max: float,
    h: Optional[float] = None,
    route: str = "direct",
    tol_det: float = TOL_DET,
    tol_tau: float = TOL_TAU,
    threads: int = 1,
    chunk: int = CHUNK,
) -> list:
    """Evolve every point independently; returns one :class:`FlowTrajectory` per point."""
    rho, lam, labels = _stack_points(points)
    h = default_step(r_max) if h is None else h
    n = rho.shape[-1]

    def work(idx):
        eng = _Engine(rho[idx], lam[idx], model, route, tol_det, tol_tau)
        res = eng.run(r_max, h, keep=True)
        out = []
        for j, i in enumerate(idx):
            m = res.last[j] + 1
            y = res.history[:m, j]
            if route == "direct":
                sig, tau, vol = _split(y, n)
                eta = eta_p = None
                vol = vol[:, 0]
            else:
                eta, eta_p, _ = _split(y, n)
                sig, tau, vol = eng.geometry(np.full(m, j), y)
            fr = res.focal_r[j]
            out.append(
                FlowTrajectory(
                    r=res.grid[:m].copy(),
                    sigma=sig.copy(),
                    tau=tau.copy(),
                    vol=np.asarray(vol, float).copy(),
                    status=res.status[j],
                    focal_r=None if math.isnan(fr) else float(fr),
                    eta=None if eta is None else eta.copy(),
                    eta_p=None if eta_p is None else eta_p.copy(),
                    rho=rho[i],
                    label=labels[i],
                )
            )
        return out

    nested = _map(work, _chunks(len(rho), chunk), threads)
    return [t for group in nested for t in group]


def evolve_direct(p: SurfacePoint, model: CurvatureModel, r_max: float, h: Optional[float] = None, **kw) -> FlowTrajectory:
    """Integrate ``(sigma, tau, vol)`` for one point; stops at the first degeneration."""
    return evolve_many([p], model, r_max, h, route="direct", **kw)[0]


def evolve_eta(p: SurfacePoint, model: CurvatureModel, r_max: float, h: Optional[float] = None, **kw) -> FlowTrajectory:
    """Integrate ``(eta, eta')`` for one point; samples carry the reconstructed geometry."""
    return evolve_many([p], model, r_max, h, route="eta", **kw)[0]


def point_volumes(
    s: InitialSurface,
    model: CurvatureModel,
    r_max: float,
    h: Optional[float] = None,
    route: str = "direct",
    tol_det: float = TOL_DET,
    tol_tau: float = TOL_TAU,
    threads: int = 1,
    chunk: int = 256,
):
    """Volume factors of every point on the common grid.

    Returns ``(r, vol, last)``: ``vol`` has shape ``(len(r), len(s))`` and is NaN
    after a point degenerates; ``last[i]`` is the last alive sample of point ``i``.
    """
    h = default_step(r_max) if h is None else h

    def work(idx):
        eng = _Engine(s.rho[idx], s.lam[idx], model, route, tol_det, tol_tau)
        res = eng.run(r_max, h, keep=False)
        return res.grid, res.vol, res.last

    parts = _map(work, _chunks(len(s), chunk), threads)
    grid = parts[0][0]
    vol = np.concatenate([p[1] for p in parts], axis=1)
    last = np.concatenate([p[2] for p in parts])
    return grid, vol, last


def weighted_area(weights, vol, m: int):
    """``sum_i w_i vol[k, i]`` for ``k < m`` with a fixed summation order."""
    return np.array([math.fsum(weights * vol[k]) for k in range(m)])


def flow_area(
    s: InitialSurface,
    model: CurvatureModel,
    r_max: float,
    h: Optional[float] = None,
    route: str = "direct",
    tol_det: float = TOL_DET,
    tol_tau: float = TOL_TAU,
    threads: int = 1,
    chunk: int = 256,
):
    """Area ``sum_i w_i vol_i(r)`` up to the first radius where any point degenerates.

    Returns ``(r, area)`` arrays of equal length.
    """
    grid, vol, last = point_volumes(s, model, r_max, h, route, tol_det, tol_tau, threads, chunk)
    m = int(last.min()) + 1
    return grid[:m].copy(), weighted_area(s.weights, vol, m)


# --- export -----------------------------------------------------------------------


def fmt(x) -> str:
    return format(float(x), ".17g")


def trajectory_rows(trajs: Sequence[FlowTrajectory], every: int = 1):
    if not trajs:
        return [], []
    n = trajs[0].dim
    tri = upper_index(n)
    header = ["r", "point_label"] + [f"sigma_{i+1}{j+1}" for i, j in tri] + [f"tau_{i+1}{j+1}" for i, j in tri] + ["vol", "alive"]
    rows = []
    for t in trajs:
        keep = list(range(0, len(t), max(1, every)))
        if keep[-1] != len(t) - 1:
            keep.append(len(t) - 1)
        for k in keep:
            rows.append(
                [fmt(t.r[k]), t.label]
                + [fmt(t.sigma[k, i, j]) for i, j in tri]
                + [fmt(t.tau[k, i, j]) for i, j in tri]
                + [fmt(t.vol[k]), "1"]
            )
        if t.status != Status.COMPLETED:
            rows.append([fmt(t.focal_r), t.label] + [""] * (2 * len(tri)) + ["", "0"])
    return header, rows


def export_trajectories_csv(trajs: Sequence[FlowTrajectory], path, every: int = 1, comment: str = "# fermi-flow v1") -> None:
    header, rows = trajectory_rows(trajs, every)
    with Path(path).open("w", newline="") as fh:
        fh.write(comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
