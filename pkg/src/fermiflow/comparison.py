"""Comparison checks: Riccati bounds on tau, the metric sandwich, Rauch.

Every check returns a :class:`ComparisonReport`.  A margin is a slack
eigenvalue, so a check holds when every margin is at least ``-tol``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import numerics
from .ambient import JacobiSolution
from .errors import InvalidInput
from .flow import FlowTrajectory, fmt

MARGIN_TOL = 1e-8
RAUCH_TOL = 1e-10
CUTOFF = 0.95


@dataclass(frozen=True)
class ViolatedAt:
    r: float
    label: str
    margin: float

    def __str__(self):
        return f"ViolatedAt(r={self.r:.6g}, point={self.label}, margin={self.margin:.3g})"


HOLDS = "Holds"


@dataclass
class ComparisonReport:
    checked_r: np.ndarray
    margins: np.ndarray
    verdict: Union[str, ViolatedAt] = HOLDS
    labels: list = field(default_factory=list, repr=False)
    tol: float = MARGIN_TOL

    def __post_init__(self):
        self.checked_r = np.asarray(self.checked_r, dtype=float)
        self.margins = np.asarray(self.margins, dtype=float)
        if self.checked_r.shape != self.margins.shape:
            raise InvalidInput("margins and checked_r must have equal length")

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins)) if len(self.margins) else float("inf")

    def verdict_text(self) -> str:
        return HOLDS if self.holds else str(self.verdict)


def _build(r, margins, labels, tol) -> ComparisonReport:
    """Report over samples ``r`` whose per-sample worst margin and point are given."""
    r = np.asarray(r, dtype=float)
    margins = np.asarray(margins, dtype=float)
    bad = np.nonzero(~(margins >= -tol))[0]
    verdict = HOLDS
    if len(bad):
        k = bad[0]
        verdict = ViolatedAt(float(r[k]), labels[k], float(margins[k]))
    return ComparisonReport(r, margins, verdict, list(labels), tol)


def _as_list(traj) -> list:
    if isinstance(traj, FlowTrajectory):
        return [traj]
    return list(traj)


def _shared(t: FlowTrajectory, sol_r: np.ndarray) -> int:
    """Number of leading samples ``t`` shares with a solution grid; checks alignment."""
    m = min(len(t.r), len(sol_r))
    scale = max(1.0, float(np.abs(t.r[:m]).max(initial=0.0)))
    if m == 0 or np.abs(t.r[:m] - sol_r[:m]).max() > 1e-9 * scale:
        raise InvalidInput("trajectory and Jacobi solution are sampled on different grids")
    return m


def _usable(sol: JacobiSolution, m: int, cutoff: float) -> np.ndarray:
    limit = sol.positive_until(cutoff)
    return (sol.r[:m] <= limit) & (sol.f[:m] > 0)


def _reduce(per_point):
    """Combine per-point ``(r, margin, label)`` samples into a per-radius minimum."""
    table = {}
    for r, margins, label in per_point:
        for rk, mk in zip(r, margins):
            key = float(rk)
            if key not in table or mk < table[key][0] or np.isnan(mk):
                if key in table and np.isnan(table[key][0]):
                    continue
                table[key] = (float(mk), label)
    keys = sorted(table)
    return keys, [table[k][0] for k in keys], [table[k][1] for k in keys]


def _riccati(traj, sol: JacobiSolution, cutoff: float, upper: bool, tol: float) -> ComparisonReport:
    per_point = []
    for t in _as_list(traj):
        m = _shared(t, sol.r)
        use = _usable(sol, m, cutoff)
        if not np.any(use):
            continue
        ratio = sol.log_derivative()[:m][use]
        sigma, tau = t.sigma[:m][use], t.tau[:m][use]
        diff = tau - ratio[:, None, None] * sigma
        w = numerics.gen_eigvals(diff, sigma)
        margins = -w[:, -1] if upper else w[:, 0]
        per_point.append((t.r[:m][use], margins, t.label))
    return _build(*_reduce(per_point), tol)


def riccati_lower_check(traj, f: JacobiSolution, cutoff: float = CUTOFF, tol: float = MARGIN_TOL) -> ComparisonReport:
    """Check ``tau >= (f'/f) sigma``; margin is the least generalized eigenvalue of the difference."""
    return _riccati(traj, f, cutoff, upper=False, tol=tol)


def riccati_upper_check(traj, f_nu: JacobiSolution, cutoff: float = CUTOFF, tol: float = MARGIN_TOL) -> ComparisonReport:
    """Check ``tau <= (f'/f) sigma``; margin is minus the largest generalized eigenvalue."""
    return _riccati(traj, f_nu, cutoff, upper=True, tol=tol)


def metric_sandwich_check(
    traj, f_mu: JacobiSolution, f_nu: JacobiSolution, rho=None, cutoff: float = CUTOFF, tol: float = MARGIN_TOL
) -> ComparisonReport:
    """Check ``f_mu^2 rho <= sigma <= f_nu^2 rho`` as generalized eigenvalue slack against ``rho``."""
    per_point = []
    for t in _as_list(traj):
        base = t.rho if rho is None else np.asarray(rho, dtype=float)
        if base is None:
            raise InvalidInput("initial metric rho is required")
        m = min(_shared(t, f_mu.r), _shared(t, f_nu.r))
        use = _usable(f_mu, m, cutoff) & _usable(f_nu, m, cutoff)
        if not np.any(use):
            continue
        sigma = t.sigma[:m][use]
        w = numerics.gen_eigvals(sigma, np.broadcast_to(base, sigma.shape))
        fm = f_mu.f[:m][use]
        fn = f_nu.f[:m][use]
        margins = np.minimum(w[:, 0] - fm * fm, fn * fn - w[:, -1])
        per_point.append((t.r[:m][use], margins, t.label))
    return _build(*_reduce(per_point), tol)


# --- Rauch ------------------------------------------------------------------------


def jacobi_field(curv: Callable, J0, J0p, r_max: float, h: float):
    """Integrate ``J'' = -curv(r) J`` in a parallel normal frame.

    ``curv(r)`` returns an ``n x n`` matrix.  Returns ``(r, |J|)``.
    """
    j0 = np.asarray(J0, dtype=float).reshape(-1)
    j0p = np.asarray(J0p, dtype=float).reshape(-1)
    if j0.shape != j0p.shape:
        raise InvalidInput("J0 and J0p must have equal length")
    n = len(j0)

    def deriv(r, y):
        k = np.asarray(curv(r), dtype=float).reshape(n, n)
        return np.concatenate([y[n:], -k @ y[:n]])

    grid, ys = numerics.rk4_integrate(np.concatenate([j0, j0p]), deriv, r_max, h)
    return grid, np.linalg.norm(ys[:, :n], axis=1)


@dataclass(frozen=True)
class RauchResult:
    holds: bool
    max_violation: float
    checked: int

    @property
    def verdict(self) -> str:
        return HOLDS if self.holds else "Violated"


def rauch_check(norms1, norms2, r1=None, r2=None, tol: float = RAUCH_TOL) -> RauchResult:
    """Check ``|J_1| <= |J_2|`` up to the first zero of ``|J_1|`` after the start.

    ``norms`` are either arrays of ``|J|`` or ``(r, |J|)`` pairs as returned by
    :func:`jacobi_field`; grids must agree.
    """
    if isinstance(norms1, tuple):
        r1, norms1 = norms1
    if isinstance(norms2, tuple):
        r2, norms2 = norms2
    a = np.asarray(norms1, dtype=float)
    b = np.asarray(norms2, dtype=float)
    if a.shape != b.shape:
        raise InvalidInput("norm sequences have different lengths")
    if r1 is not None and r2 is not None:
        r1 = np.asarray(r1, dtype=float)
        r2 = np.asarray(r2, dtype=float)
        if r1.shape != r2.shape or np.abs(r1 - r2).max(initial=0.0) > 1e-12 * max(1.0, np.abs(r1).max(initial=0.0)):
            raise InvalidInput("norm sequences are sampled on different grids")
    end = len(a)
    # a zero of J shows up as a V-shaped minimum no larger than the step change beside it
    for k in range(1, len(a) - 1):
        if a[k] <= a[k - 1] and a[k] <= a[k + 1] and a[k] <= max(a[k - 1] - a[k], a[k + 1] - a[k]):
            end = k + 1
            break
    excess = a[:end] - b[:end]
    worst = float(max(0.0, excess.max(initial=0.0)))
    return RauchResult(bool(np.all(excess <= tol)), worst, end)


# --- export ---------------------------------------------------------------------


def report_rows(report: ComparisonReport):
    """``(r, margin, verdict)`` rows; the verdict is judged per sample."""
    rows = []
    for r, m, label in zip(report.checked_r, report.margins, report.labels or [""] * len(report.margins)):
        ok = m >= -report.tol
        rows.append([fmt(r), fmt(m), HOLDS if ok else str(ViolatedAt(float(r), label, float(m)))])
    return rows


def export_report_csv(report: ComparisonReport, path, comment: str = "# fermi-flow v1") -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "margin", "verdict"])
        w.writerows(report_rows(report))
