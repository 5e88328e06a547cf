"""Explicit existence radii for radially decaying curvature bounds.

With curvature bounded by ``c / (1 + a r)**2`` the scalar Jacobi equation
``f'' + c f / (1 + a r)**2 = 0``, ``f(0) = 1``, ``f'(0) = b`` has the closed form

    f(r) = sqrt(1 + a r) * ((2b/a - 1) s_m(x) + s'_m(x)),   x = ln sqrt(1 + a r),

with ``m = 4c/a**2 - 1``.  Its first zero bounds the smooth existence radius
from below (upper curvature bound, ``b = b_l``) or above (lower curvature
bound, ``b = b_u``).  Lower cases are labelled ``a``-``f`` and upper cases
``g``-``k``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ambient import RadialProfile, _gen_sine, s_kappa, s_kappa_prime
from .errors import InvalidInput, OutOfDomain
from .flow import evolve_many, fmt

CASE_TOL = 1e-12
HUGE = 1e300
_LOG_HUGE = math.log(HUGE)

LOWER_FORMULAS = {
    "a": "inf",
    "b": "(1/a)(exp(2a/(a-2b)) - 1)",
    "c": "(1/a)(((a-2b+a*sqrt(-m))/(a-2b-a*sqrt(-m)))^(1/sqrt(-m)) - 1)",
    "d": "(1/a)(exp(pi/sqrt(m)) - 1)",
    "e": "(1/a)(exp((2/sqrt(m)) arctan(a*sqrt(m)/(a-2b))) - 1)",
    "f": "(1/a)(exp((2/sqrt(m)) (pi + arctan(a*sqrt(m)/(a-2b)))) - 1)",
}
UPPER_LABELS = {"b": "g", "c": "h", "d": "i", "e": "j", "f": "k"}
UPPER_FORMULAS = {UPPER_LABELS[k]: v for k, v in LOWER_FORMULAS.items() if k != "a"}


def m_param(c: float, a: float) -> float:
    """``4c/a^2 - 1``."""
    if not a > 0:
        raise InvalidInput("a must be positive")
    return 4.0 * c / (a * a) - 1.0


def explicit_jacobi(c: float, a: float, b: float, r):
    """Closed-form solution of ``f'' = -c f / (1 + a r)^2`` with ``f(0) = 1``, ``f'(0) = b``."""
    m = m_param(c, a)
    r_arr = np.asarray(r, dtype=float)
    base = 1.0 + a * r_arr
    if np.any(base <= 0):
        raise OutOfDomain("1 + a r must be positive")
    x = 0.5 * np.log(base)
    beta = 2.0 * b / a - 1.0
    s, sp = _gen_sine(m, x)
    out = np.sqrt(base) * (beta * s + sp)
    return float(out) if np.ndim(out) == 0 else out


def explicit_jacobi_log_derivative(c: float, a: float, b: float, r):
    """``f'/f`` of :func:`explicit_jacobi`, evaluated without overflow for large ``r``."""
    m = m_param(c, a)
    r_arr = np.asarray(r, dtype=float)
    if np.any(1.0 + a * r_arr <= 0):
        raise OutOfDomain("1 + a r must be positive")
    x = 0.5 * np.log1p(a * r_arr)
    beta = 2.0 * b / a - 1.0
    if m > 0:
        s, sp = s_kappa(m, x), s_kappa_prime(m, x)
        ratio = (beta * sp - m * s) / (beta * s + sp)
    else:
        # divide through by s'_m > 0 so nothing overflows
        with np.errstate(over="ignore", invalid="ignore"):
            t = np.asarray(s_kappa(m, x), float) / np.asarray(s_kappa_prime(m, x), float)
        if m < 0:
            q = math.sqrt(-m)
            t = np.where(q * x > 350, 1.0 / q, t)
        ratio = (beta - m * t) / (beta * t + 1.0)
    out = a / (2.0 * (1.0 + a * r_arr)) * (1.0 + ratio)
    return float(out) if np.ndim(out) == 0 else out


def _radius(exponent: float, a: float) -> float:
    """``(exp(exponent) - 1) / a`` with overflow reported as ``inf``."""
    if exponent - math.log(a) > _LOG_HUGE:
        return math.inf
    val = math.expm1(exponent) / a
    return math.inf if val > HUGE else val


def classify(m: float, beta: float, tol: float = CASE_TOL) -> str:
    """Lower-bound case label; the matching upper case is :data:`UPPER_LABELS` of it."""
    if m <= tol:
        q = math.sqrt(max(-m, 0.0))
        if beta >= -q - tol:
            return "a"
        return "b" if m >= -tol else "c"
    if abs(beta) <= tol:
        return "d"
    return "e" if beta < 0 else "f"


def case_value(case: str, c: float, a: float, b: float) -> float:
    """Printed closed form for a lower case label (upper labels map back through :data:`UPPER_LABELS`)."""
    m = m_param(c, a)
    if case == "a":
        return math.inf
    if case == "b":
        return _radius(2.0 * a / (a - 2.0 * b), a)
    if case == "c":
        q = math.sqrt(-m)
        num = a - 2.0 * b + a * q
        den = a - 2.0 * b - a * q
        return _radius(math.log(num / den) / q, a)
    root = math.sqrt(m)
    if case == "d":
        return _radius(math.pi / root, a)
    angle = math.atan(a * root / (a - 2.0 * b))
    if case == "e":
        return _radius(2.0 / root * angle, a)
    if case == "f":
        return _radius(2.0 / root * (math.pi + angle), a)
    raise InvalidInput(f"unknown case {case!r}")


def first_zero(c: float, a: float, b: float):
    """``(r, lower_case)``: first zero of :func:`explicit_jacobi` (``inf`` if none) and its case."""
    case = classify(m_param(c, a), 2.0 * b / a - 1.0)
    return case_value(case, c, a, b), case


@dataclass(frozen=True)
class ExistenceInput:
    c_mu: float
    a_mu: float
    c_nu: Optional[float] = None
    a_nu: Optional[float] = None
    b_l: float = 0.0
    b_u: Optional[float] = None
    d_nu: Optional[float] = None

    def __post_init__(self):
        if not self.a_mu > 0:
            raise InvalidInput("a_mu must be positive")
        if (self.c_nu is None) != (self.a_nu is None) or (self.c_nu is None) != (self.b_u is None):
            raise InvalidInput("c_nu, a_nu and b_u must be given together")
        if self.a_nu is not None and not self.a_nu > 0:
            raise InvalidInput("a_nu must be positive")
        if self.b_u is not None and self.b_l > self.b_u:
            raise InvalidInput("b_l must not exceed b_u")
        if self.d_nu is not None and not self.d_nu > 0:
            raise InvalidInput("d_nu must be positive")


@dataclass(frozen=True)
class ExistenceReport:
    lower_bound: float
    lower_case: str
    upper_bound: Optional[float] = None
    upper_case: Optional[str] = None
    capped_by_self_distance: bool = False
    m_mu: float = math.nan
    m_nu: Optional[float] = None

    @property
    def lower_formula(self) -> str:
        return LOWER_FORMULAS[self.lower_case]

    @property
    def upper_formula(self) -> Optional[str]:
        return None if self.upper_case is None else UPPER_FORMULAS[self.upper_case]

    @property
    def consistent(self) -> bool:
        return self.upper_bound is None or self.lower_bound <= self.upper_bound + 1e-9

    def to_text(self) -> str:
        lines = [f"lower case ({self.lower_case}): r0 >= {self.lower_formula} = {fmt(self.lower_bound)}"]
        if self.capped_by_self_distance:
            lines.append("lower bound capped by half the self distance")
        if self.upper_case is None:
            lines.append("upper: none")
        else:
            lines.append(f"upper case ({self.upper_case}): r0 <= {self.upper_formula} = {fmt(self.upper_bound)}")
        return "\n".join(lines)

    HEADER = ("lower_case", "lower_bound", "upper_case", "upper_bound", "capped_by_self_distance", "m_mu", "m_nu")

    def csv_row(self) -> list:
        return [
            self.lower_case,
            fmt(self.lower_bound),
            self.upper_case or "",
            "" if self.upper_bound is None else fmt(self.upper_bound),
            "1" if self.capped_by_self_distance else "0",
            fmt(self.m_mu),
            "" if self.m_nu is None else fmt(self.m_nu),
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        w.writerow(self.csv_row())
        return buf.getvalue()


def existence_bounds(inp: ExistenceInput) -> ExistenceReport:
    """Evaluate the case table for the lower (and, if given, upper) existence bound."""
    lower, case = first_zero(inp.c_mu, inp.a_mu, inp.b_l)
    capped = False
    if inp.d_nu is not None and inp.d_nu / 2.0 < lower:
        lower, capped = inp.d_nu / 2.0, True
    upper = upper_case = m_nu = None
    if inp.c_nu is not None:
        m_nu = m_param(inp.c_nu, inp.a_nu)
        value, label = first_zero(inp.c_nu, inp.a_nu, inp.b_u)
        if label != "a":
            upper, upper_case = value, UPPER_LABELS[label]
    return ExistenceReport(lower, case, upper, upper_case, capped, m_param(inp.c_mu, inp.a_mu), m_nu)


@dataclass(frozen=True)
class EternalBound:
    """Finite upper bound on the existence radius for curvature ``>= c / (1 + a r)^(2 - eps)``.

    ``threshold`` is the radius past which the frozen profile has ``m > 0``;
    the bound restarts at ``restart_r`` (where ``m = 1``, or earlier if the
    comparison solution already vanished) with curvature bound ``restart_b``.
    """

    bound: float
    threshold: float
    restart_r: float
    restart_b: Optional[float]
    case: str

    def __float__(self):
        return self.bound


def _level_radius(c: float, a: float, eps: float, target: float) -> float:
    """Smallest ``R >= 0`` with ``4c (1 + aR)^eps >= target``."""
    if 4.0 * c >= target:
        return 0.0
    return _radius(math.log(target / (4.0 * c)) / eps, a)


def eternal_check(c: float, a: float, eps: float, b_u: float) -> EternalBound:
    """Upper bound on the existence radius when curvature decays slower than ``(1 + a r)^-2``."""
    if not (c > 0 and a > 0 and eps > 0):
        raise InvalidInput("c, a and eps must be positive")
    threshold = _level_radius(c, a, eps, a * a)
    restart = _level_radius(c, a, eps, 2.0 * a * a)
    # c / (1 + a r)^2 is below the curvature, so its Jacobi solution bounds tau from above
    z, label = first_zero(c, a, b_u)
    if z <= restart:
        return EternalBound(z, threshold, z, None, UPPER_LABELS[label])
    if not math.isfinite(restart):
        raise InvalidInput("restart radius overflows; parameters out of range")
    b1 = float(explicit_jacobi_log_derivative(c, a, b_u, restart))
    scale = 1.0 + a * restart
    c_shift = c * scale**eps / (scale * scale)
    a_shift = a / scale
    z1, label1 = first_zero(c_shift, a_shift, b1)
    return EternalBound(restart + z1, threshold, restart, b1, UPPER_LABELS[label1])


@dataclass(frozen=True)
class FocalConsistency:
    observed: Optional[float]
    lower_bound: float
    upper_bound: Optional[float]
    consistent: bool
    r_max: float


def focal_vs_bound(s, model: RadialProfile, report: ExistenceReport, r_max: Optional[float] = None, h: float = 1e-3, threads: int = 1) -> FocalConsistency:
    """Evolve every point to its first focal event and compare with the report's bounds."""
    if r_max is None:
        if report.upper_bound is not None and math.isfinite(report.upper_bound):
            r_max = report.upper_bound + 10 * h
        elif math.isfinite(report.lower_bound):
            r_max = 2.0 * report.lower_bound
        else:
            r_max = 10.0 / model.a
    trajs = evolve_many(s, model, r_max, h=h, threads=threads)
    focal = [t.focal_r for t in trajs if t.focal_r is not None]
    observed = min(focal) if focal else None
    ok = True
    if observed is not None:
        ok = report.lower_bound - 1e-6 <= observed
        if report.upper_bound is not None:
            ok = ok and observed <= report.upper_bound + 1e-6
    elif report.upper_bound is not None and report.upper_bound <= r_max:
        ok = False
    return FocalConsistency(observed, report.lower_bound, report.upper_bound, ok, r_max)
