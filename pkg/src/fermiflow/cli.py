"""Command-line front end: ``fermi-flow <check> --config cfg.json --out DIR``.

The config is a JSON document::

    {
      "seed": 0,
      "ambient": {"kind": "space_form", "kappa": 0.0},
      "surface": {"preset": "round_sphere", "params": {"R": 1.0, "n": 2}},
      "flow": {"r_max": 1.0, "h": 0.001},
      "checks": {"flow": {}, "steiner": {}, ...},
      "output": "out"
    }

Every check writes one CSV (first line ``# fermi-flow v1``) and the run ends
with ``summary.json``.  Exit status: 0 all checks hold, 1 a check is
violated, 2 the config is invalid, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import json
import math
import os
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import comparison, estimates, existence, flow, numerics
from .ambient import Custom, PinchedSynthetic, RadialProfile, SpaceForm, jacobi_batch
from .errors import FermiFlowError, HypothesisViolated
from .surface import PRESETS, preset_surface, principal_curvatures, pinch_constant, read_surface_csv

CSV_HEADER = "# fermi-flow v1"
CHECKS = ("flow", "steiner", "compare", "rauch", "existence", "volume-bound", "pinch")
EXIT_OK, EXIT_VIOLATED, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3
SEED_ENV = "FERMI_FLOW_SEED"


class ConfigError(Exception):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# --- config -----------------------------------------------------------------------


def _section(doc, path: str, required: bool = True) -> Optional[dict]:
    node = doc
    parts = path.split(".")
    for k, part in enumerate(parts):
        if not isinstance(node, dict):
            raise ConfigError(".".join(parts[:k]), "expected an object")
        if part not in node:
            if required:
                raise ConfigError(path, "required field is missing")
            return None
        node = node[part]
    return node


def _num(obj: dict, path: str, key: str, default=None, positive=False, integer=False):
    full = f"{path}.{key}" if path else key
    if key not in obj:
        if default is None:
            raise ConfigError(full, "required field is missing")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(full, f"expected a number, got {val!r}")
    if integer and int(val) != val:
        raise ConfigError(full, f"expected an integer, got {val!r}")
    if not math.isfinite(val):
        raise ConfigError(full, "must be finite")
    if positive and not val > 0:
        raise ConfigError(full, f"must be positive, got {val!r}")
    return int(val) if integer else float(val)


def _opt(obj: dict, path: str, key: str, **kw):
    return _num(obj, path, key, **kw) if key in obj else None


def _obj(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    return obj


@dataclass
class RunConfig:
    seed: int
    ambient: object
    ambient_doc: dict
    surface: object
    r_max: float
    h: float
    tol_det: float
    tol_tau: float
    export_every: int
    checks: dict
    output: Path
    base_dir: Path = field(default=Path("."))


def build_model(doc: dict, path: str, seed: int):
    kind = doc.get("kind")
    if kind is None:
        raise ConfigError(f"{path}.kind", "required field is missing")
    try:
        if kind == "space_form":
            return SpaceForm(_num(doc, path, "kappa"))
        if kind == "radial":
            return RadialProfile(_num(doc, path, "c"), _num(doc, path, "a", positive=True), _num(doc, path, "p", default=2.0))
        if kind == "pinched":
            return PinchedSynthetic(_num(doc, path, "kappa"), _num(doc, path, "eps"), _num(doc, path, "seed", default=seed, integer=True))
        if kind == "custom":
            for key in ("r", "m"):
                if not isinstance(doc.get(key), list):
                    raise ConfigError(f"{path}.{key}", "expected a list of numbers")
            return Custom(tuple(doc["r"]), tuple(doc["m"]))
    except FermiFlowError as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}.kind", f"unknown ambient kind {kind!r}; choose space_form, radial, pinched or custom")


def build_surface(doc: dict, path: str, seed: int, base: Path):
    if "csv" in doc:
        p = Path(doc["csv"])
        if not p.is_absolute():
            p = base / p
        if not p.exists():
            raise ConfigError(f"{path}.csv", f"file not found: {p}")
        try:
            return read_surface_csv(p)
        except FermiFlowError as exc:
            raise ConfigError(f"{path}.csv", str(exc)) from None
    if "preset" not in doc:
        raise ConfigError(f"{path}.preset", "required field is missing (or give csv)")
    kind = doc["preset"]
    if kind not in PRESETS:
        raise ConfigError(f"{path}.preset", f"unknown preset {kind!r}; choose from {sorted(PRESETS)}")
    params = dict(_obj(doc.get("params", {}), f"{path}.params"))
    if kind == "random":
        params.setdefault("seed", seed)
    sig = inspect.signature(PRESETS[kind])
    for name, par in sig.parameters.items():
        if par.default is inspect.Parameter.empty and name not in params:
            raise ConfigError(f"{path}.params.{name}", "required field is missing")
    unknown = sorted(set(params) - set(sig.parameters))
    if unknown:
        raise ConfigError(f"{path}.params.{unknown[0]}", f"unknown parameter for preset {kind!r}")
    try:
        return preset_surface(kind, **params)
    except TypeError as exc:
        raise ConfigError(f"{path}.params", str(exc)) from None
    except FermiFlowError as exc:
        raise ConfigError(f"{path}.params", str(exc)) from None


def _existence_input(opts) -> "existence.ExistenceInput":
    path = "checks.existence"
    group = ("c_nu", "a_nu", "b_u")
    given = [k for k in group if k in opts]
    if given and len(given) < len(group):
        missing = next(k for k in group if k not in opts)
        raise ConfigError(f"{path}.{missing}", "required field is missing (c_nu, a_nu and b_u go together)")
    try:
        return existence.ExistenceInput(
            c_mu=_num(opts, path, "c_mu"),
            a_mu=_num(opts, path, "a_mu", positive=True),
            c_nu=_opt(opts, path, "c_nu"),
            a_nu=_opt(opts, path, "a_nu", positive=True),
            b_l=_num(opts, path, "b_l"),
            b_u=_opt(opts, path, "b_u"),
            d_nu=_opt(opts, path, "d_nu", positive=True),
        )
    except FermiFlowError as exc:
        raise ConfigError(path, str(exc)) from None


def _eternal_args(opts) -> tuple:
    p = "checks.existence.eternal"
    e = _obj(opts["eternal"], p)
    return _num(e, p, "c", positive=True), _num(e, p, "a", positive=True), _num(e, p, "eps", positive=True), _num(e, p, "b_u")


def _volume_input(opts, surface) -> "estimates.VolumeBoundInput":
    path = "checks.volume-bound"
    try:
        return estimates.VolumeBoundInput(
            tau_minus=_num(opts, path, "tau_minus"),
            c=_num(opts, path, "c"),
            d=_num(opts, path, "d"),
            eps=_num(opts, path, "eps"),
            n=_num(opts, path, "n", integer=True),
            r1=_num(opts, path, "r1", positive=True),
            r2=_num(opts, path, "r2", positive=True),
            area_r1=_num(opts, path, "area_r1", default=surface.area if surface is not None else None),
        )
    except FermiFlowError as exc:
        raise ConfigError(path, str(exc)) from None


def load_config(path, out: Optional[str] = None, env=None) -> RunConfig:
    env = os.environ if env is None else env
    path = Path(path)
    if not path.exists():
        raise ConfigError("", f"config file not found: {path}")
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(doc, path.parent, out, env)


def parse_config(doc, base: Path = Path("."), out: Optional[str] = None, env=None) -> RunConfig:
    env = {} if env is None else env
    doc = _obj(doc, "")
    seed = _num(doc, "", "seed", default=0, integer=True)
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(SEED_ENV, f"expected an integer, got {env[SEED_ENV]!r}") from None

    checks = _obj(_section(doc, "checks"), "checks")
    unknown = sorted(set(checks) - set(CHECKS))
    if unknown:
        raise ConfigError(f"checks.{unknown[0]}", f"unknown check; choose from {', '.join(CHECKS)}")
    for name, sub in checks.items():
        _obj(sub, f"checks.{name}")

    needs_surface = any(c in checks for c in ("flow", "steiner", "compare", "pinch"))
    ambient_doc = _section(doc, "ambient", required=needs_surface)
    model = build_model(_obj(ambient_doc, "ambient"), "ambient", seed) if ambient_doc is not None else None
    surface_doc = _section(doc, "surface", required=needs_surface)
    surf = build_surface(_obj(surface_doc, "surface"), "surface", seed, base) if surface_doc is not None else None

    flow_doc = _section(doc, "flow", required=needs_surface) or {}
    flow_doc = _obj(flow_doc, "flow")
    r_max = _num(flow_doc, "flow", "r_max", default=1.0 if not needs_surface else None, positive=True)
    h = _num(flow_doc, "flow", "h", default=flow.default_step(r_max), positive=True)
    tol_det = _num(flow_doc, "flow", "tol_det", default=flow.TOL_DET, positive=True)
    tol_tau = _num(flow_doc, "flow", "tol_tau", default=flow.TOL_TAU, positive=True)
    every = _num(flow_doc, "flow", "export_every", default=1, positive=True, integer=True)

    if "steiner" in checks and not isinstance(model, SpaceForm):
        raise ConfigError("ambient.kind", "steiner check needs a space_form ambient")
    if "volume-bound" in checks:
        _volume_input(checks["volume-bound"], surf)
    if "existence" in checks:
        _existence_input(checks["existence"])
        if "eternal" in checks["existence"]:
            _eternal_args(checks["existence"])
    if "pinch" in checks:
        _num(checks["pinch"], "checks.pinch", "eps")

    output = out if out is not None else doc.get("output", "out")
    if not isinstance(output, str):
        raise ConfigError("output", "expected a directory path")
    return RunConfig(seed, model, ambient_doc or {}, surf, r_max, h, tol_det, tol_tau, every, checks, Path(output), base)


# --- checks -------------------------------------------------------------------------


@dataclass
class CheckResult:
    verdict: str
    margin: Optional[float] = None
    details: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.verdict == comparison.HOLDS


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


class Runner:
    def __init__(self, cfg: RunConfig, threads: int):
        self.cfg = cfg
        self.threads = threads
        self._trajs = None

    def trajectories(self):
        if self._trajs is None:
            c = self.cfg
            self._trajs = flow.evolve_many(
                c.surface, c.ambient, c.r_max, c.h, tol_det=c.tol_det, tol_tau=c.tol_tau, threads=self.threads
            )
        return self._trajs

    def run_flow(self, opts, out: Path) -> CheckResult:
        trajs = self.trajectories()
        flow.export_trajectories_csv(trajs, out / "flow.csv", every=self.cfg.export_every, comment=CSV_HEADER)
        focal = [t.focal_r for t in trajs if t.focal_r is not None]
        statuses = sorted({t.status.value for t in trajs})
        blow = any(t.status == flow.Status.BLOWUP for t in trajs)
        verdict = "Violated(BlowUp)" if blow and opts.get("fail_on_blowup", False) else comparison.HOLDS
        return CheckResult(verdict, None, {"statuses": statuses, "first_focal_r": min(focal) if focal else None})

    def run_steiner(self, opts, out: Path) -> CheckResult:
        c = self.cfg
        tol = _num(opts, "checks.steiner", "tol", default=1e-6, positive=True)
        r, area = flow.flow_area(c.surface, c.ambient, c.r_max, c.h, tol_det=c.tol_det, tol_tau=c.tol_tau, threads=self.threads)
        coeffs = estimates.SteinerCoefficients.of(c.surface, c.ambient.kappa)
        keep = np.unique(np.append(np.arange(0, len(r), c.export_every), len(r) - 1))
        ref = coeffs.area(r[keep])
        rel = np.abs(area[keep] - ref) / np.maximum(np.abs(ref), 1e-300)
        rows = [[flow.fmt(a), flow.fmt(b), flow.fmt(s), flow.fmt(d)] for a, b, s, d in zip(r[keep], area[keep], ref, rel)]
        _write_csv(out / "steiner.csv", ["r", "flow_area", "steiner_area", "rel_diff"], rows)
        worst = float(rel.max())
        verdict = comparison.HOLDS
        if worst > tol:
            k = int(np.argmax(rel))
            verdict = str(comparison.ViolatedAt(float(r[keep][k]), "area", tol - worst))
        return CheckResult(verdict, tol - worst, {"max_rel_diff": worst, "r_end": float(r[-1])})

    def run_compare(self, opts, out: Path) -> CheckResult:
        c = self.cfg
        path = "checks.compare"
        curv = principal_curvatures(c.surface)
        b_l = _num(opts, path, "b_l", default=float(curv.min()))
        b_u = _num(opts, path, "b_u", default=float(curv.max()))
        cutoff = _num(opts, path, "cutoff", default=comparison.CUTOFF, positive=True)
        mu = _opt(opts, path, "mu")
        nu = _opt(opts, path, "nu")
        mu_prof = mu if mu is not None else c.ambient.upper_profile
        nu_prof = nu if nu is not None else c.ambient.lower_profile
        f_mu, f_nu = jacobi_batch(mu_prof, 1.0, b_l, c.r_max, c.h)[0], jacobi_batch(nu_prof, 1.0, b_u, c.r_max, c.h)[0]
        trajs = self.trajectories()
        reports = {
            "lower": comparison.riccati_lower_check(trajs, f_mu, cutoff),
            "upper": comparison.riccati_upper_check(trajs, f_nu, cutoff),
            "sandwich": comparison.metric_sandwich_check(trajs, f_mu, f_nu, cutoff=cutoff),
        }
        rows = []
        for name, rep in reports.items():
            rows += [[name] + row for row in comparison.report_rows(rep)]
        _write_csv(out / "compare.csv", ["check", "r", "margin", "verdict"], rows)
        failed = [f"{k}: {rep.verdict}" for k, rep in reports.items() if not rep.holds]
        verdict = comparison.HOLDS if not failed else "; ".join(failed)
        margin = min(rep.min_margin for rep in reports.values())
        return CheckResult(verdict, margin, {"b_l": b_l, "b_u": b_u})

    def run_rauch(self, opts, out: Path) -> CheckResult:
        path = "checks.rauch"
        k1 = _num(opts, path, "kappa1", default=1.0)
        k2 = _num(opts, path, "kappa2", default=0.0)
        r_max = _num(opts, path, "r_max", default=3.0, positive=True)
        h = _num(opts, path, "h", default=1e-3, positive=True)
        j0 = np.asarray(opts.get("J0", [0.0, 0.0]), float)
        j0p = np.asarray(opts.get("J0p", [1.0, 0.0]), float)
        if j0.shape != j0p.shape or j0.ndim != 1:
            raise ConfigError(path, "J0 and J0p must be equal-length lists")
        eye = np.eye(len(j0))
        r, a = comparison.jacobi_field(lambda _r: k1 * eye, j0, j0p, r_max, h)
        _, b = comparison.jacobi_field(lambda _r: k2 * eye, j0, j0p, r_max, h)
        res = comparison.rauch_check((r, a), (r, b))
        rows = [[flow.fmt(x), flow.fmt(y), flow.fmt(z), flow.fmt(y - z)] for x, y, z in zip(r, a, b)]
        _write_csv(out / "rauch.csv", ["r", "norm1", "norm2", "excess"], rows)
        verdict = comparison.HOLDS if res.holds else f"Violated(max excess {res.max_violation:.3g})"
        return CheckResult(verdict, 0.0 - res.max_violation, {"checked": res.checked})

    def run_existence(self, opts, out: Path) -> CheckResult:
        path = "checks.existence"
        inp = _existence_input(opts)
        rep = existence.existence_bounds(inp)
        header = list(existence.ExistenceReport.HEADER) + ["lower_formula", "upper_formula"]
        row = rep.csv_row() + [rep.lower_formula, rep.upper_formula or ""]
        details = {"text": rep.to_text()}
        if "eternal" in opts:
            eb = existence.eternal_check(*_eternal_args(opts))
            header += ["eternal_bound", "eternal_case"]
            row += [flow.fmt(eb.bound), eb.case]
            details["eternal_bound"] = eb.bound
        _write_csv(out / "existence.csv", header, [row])
        verdict = comparison.HOLDS if rep.consistent else "Violated(lower bound exceeds upper bound)"
        return CheckResult(verdict, None, details)

    def run_volume_bound(self, opts, out: Path) -> CheckResult:
        c = self.cfg
        path = "checks.volume-bound"
        inp = _volume_input(opts, c.surface)
        try:
            bound, until = estimates.volume_lower_bound(inp)
        except HypothesisViolated as exc:
            _write_csv(out / "volume-bound.csv", ["r", "bound", "observed", "slack"], [])
            return CheckResult(f"Violated({exc})", None)
        observed = math.nan
        verdict, margin = comparison.HOLDS, None
        if opts.get("observe", False):
            if c.surface is None or c.ambient is None:
                raise ConfigError(f"{path}.observe", "needs surface and ambient sections")
            r, area = flow.flow_area(c.surface, c.ambient, inp.r2 - inp.r1, c.h, threads=self.threads)
            observed = estimates.shell_volume(r, area)
            margin = observed - bound
            if margin < -1e-8 * max(1.0, abs(bound)):
                verdict = str(comparison.ViolatedAt(inp.r2, "shell", margin))
        _write_csv(
            out / "volume-bound.csv",
            ["r", "bound", "observed", "slack"],
            [[flow.fmt(inp.r2), flow.fmt(bound), flow.fmt(observed), flow.fmt(observed - bound)]],
        )
        return CheckResult(verdict, margin, {"bound": bound, "u_positive_until": until})

    def run_pinch(self, opts, out: Path) -> CheckResult:
        c = self.cfg
        path = "checks.pinch"
        eps = _num(opts, path, "eps")
        kappa_ref = _num(opts, path, "kappa_ref", default=float(np.mean(c.ambient.multiplier(0.0))))
        const = _num(opts, path, "c", default=max(pinch_constant(p) for p in c.surface.points))
        trajs = self.trajectories()
        t0 = trajs[0]
        pin = estimates.pinching_check(c.ambient, kappa_ref, eps, t0.r, t0.sigma)
        drift = estimates.umbilic_drift_check(trajs, const, eps)
        rows = [["pinching"] + row for row in comparison.report_rows(pin)]
        rows += [["umbilic_drift"] + row for row in comparison.report_rows(drift)]
        _write_csv(out / "pinch.csv", ["check", "r", "margin", "verdict"], rows)
        failed = [f"{k}: {rep.verdict}" for k, rep in (("pinching", pin), ("umbilic_drift", drift)) if not rep.holds]
        verdict = comparison.HOLDS if not failed else "; ".join(failed)
        return CheckResult(verdict, min(pin.min_margin, drift.min_margin), {"c": const})


def run(cfg: RunConfig, only: Optional[str] = None, threads: int = 1) -> int:
    """Run the requested checks, write CSVs and ``summary.json``; returns the exit status."""
    names = [n for n in CHECKS if n in cfg.checks] if only in (None, "all") else [only]
    if only not in (None, "all") and only not in cfg.checks:
        raise ConfigError(f"checks.{only}", "required field is missing")
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    runner = Runner(cfg, threads)
    summary = {}
    status = EXIT_OK
    for name in names:
        start = time.perf_counter()
        res = getattr(runner, "run_" + name.replace("-", "_"))(cfg.checks[name], out)
        summary[name] = {
            "verdict": res.verdict,
            "margin": res.margin,
            "seconds": round(time.perf_counter() - start, 6),
            **res.details,
        }
        if not res.holds:
            status = EXIT_VIOLATED
    doc = {"seed": cfg.seed, "exit_status": status, "checks": summary}
    (out / "summary.json").write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
    return status


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fermi-flow", description="Normal-distance flow simulations and comparison checks")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in CHECKS + ("all",):
        p = sub.add_parser(name, help=f"run the {name} check" if name != "all" else "run every configured check")
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config 'output')")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads for per-point work")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.out)
        return run(cfg, args.command, max(1, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
