"""Suite orchestration and report emission."""

from __future__ import annotations

import csv
import io
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Sequence

import numpy as np

from . import __version__
from .config import SUITES, ExperimentConfig
from .errors import VarSobolevError
from .families import build_exponent, bump_family, seeds
from .gridlab import Grid
from .ineq import key_estimate_verify, log_lemma_verify, scaling_verify, sobolev_verify, trace_verify
from .reports import InequalityReport, ScalingReport, SuiteResult, error_report, make_report
from .transport import DiscreteMeasure, density_from_function, plan_diagnostics, solve_ot, transport_identity_residual
from .varexp import holder_verify

CSV_COLUMNS = ("suite", "name", "lhs", "rhs", "margin", "tolerance", "pass")
MARGINAL_TOL = 1e-9
MONOTONE_TOL = 1e-8
MA_TARGET = 1e-2


class _Inputs:
    """Grids, exponents and test families derived once from a config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        n = cfg.dimension
        s_fun, s_fam, s_hfun, s_hfam = seeds(cfg.seed, 4)
        self.grid = cfg.build_grid()
        self.p = build_exponent(self.grid, cfg.exponent, n)
        self.functions = bump_family(self.grid, cfg.functions, s_fun)
        self.family = bump_family(self.grid, cfg.family, s_fam)
        self._half_seeds = (s_hfun, s_hfam)
        self._half = None

    def half(self):
        if self._half is None:
            cfg = self.cfg
            hg = cfg.build_half_space_grid()
            self._half = (
                hg,
                build_exponent(hg, cfg.exponent, cfg.dimension),
                bump_family(hg, cfg.functions, self._half_seeds[0]),
                bump_family(hg, cfg.family, self._half_seeds[1]),
            )
        return self._half


def _index(report, base: str, tag: str):
    """Insert ``tag`` after the ``base`` prefix of every nested report name."""
    if isinstance(report, ScalingReport):
        report.name = base + tag
        return report
    for r in report.walk():
        if r.name.startswith(base):
            r.name = base + tag + r.name[len(base):]
    return report


def _job(fn: Callable, base: str, tag: str):
    def run():
        try:
            return [_index(fn(), base, tag)]
        except (VarSobolevError, ArithmeticError, ValueError) as exc:
            return [error_report(base + tag, exc)]

    return run


def _pairs(a: Sequence, b: Sequence):
    return list(zip(a, b))


# ------------------------------------------------------------------ suites


def _holder_jobs(inp: _Inputs) -> list:
    tol = inp.cfg.tolerances.holder
    return [
        _job(lambda f=f, g=g: holder_verify(f, g, inp.p, tol), "holder", f"[{i}]")
        for i, (f, g) in enumerate(_pairs(inp.functions, inp.family))
    ]


def _scaling_jobs(inp: _Inputs) -> list:
    cfg = inp.cfg
    r = cfg.r if cfg.r is not None else cfg.s
    jobs = []
    for i, f in enumerate(inp.functions):
        for k in cfg.k_sweep:
            jobs.append(
                _job(lambda f=f, k=k: scaling_verify(f, inp.p, k, r, cfg.s), "scaling", f"[{i},k={k:g}]")
            )
    return jobs


def _grad_p_decay(reports: list, cfg: ExperimentConfig) -> list:
    """Monotone decay of the rescaled exponent-gradient norm along the k sweep."""
    ks = sorted(cfg.k_sweep)
    if len(ks) < 2 or not reports:
        return []
    # every function sees the same p, so one sweep is enough
    by_k = {}
    for rep in reports[: len(cfg.k_sweep)]:
        if isinstance(rep, ScalingReport) and rep.error is None:
            by_k[rep.k] = next(s.measured for s in rep.coarse if s.name == "norm_grad_p_pow_coarse")
    subs = []
    for k0, k1 in zip(ks, ks[1:]):
        if k0 in by_k and k1 in by_k and k0 != k1:
            subs.append(make_report(f"scaling/grad-p-decay[k={k0:g}->{k1:g}]", by_k[k1], by_k[k0], 0.0))
    if not subs:
        return [error_report("scaling/grad-p-decay", VarSobolevError("no usable scaling reports"))]
    return [
        make_report(
            "scaling/grad-p-decay",
            max(s.lhs - s.rhs for s in subs),
            0.0,
            0.0,
            provenance={"lhs": "largest increase of || |grad p_k|^{p_k} ||_s between consecutive k"},
            subchecks=subs,
        )
    ]


def _transport_pair(f, g, p, method, eps) -> InequalityReport:
    mu = density_from_function(f, p)
    nu = density_from_function(g, p)
    plan = solve_ot(mu, nu, method=method, epsilon=eps)
    d = plan_diagnostics(plan)
    ident1 = transport_identity_residual(plan, lambda y: np.ones(len(y)))
    ident2 = transport_identity_residual(plan, lambda y: np.sum(y**2, axis=1))
    mono_tol = MONOTONE_TOL if method == "exact" else 10 * eps
    subs = [
        make_report("transport/marginals", d.marginal_error, 0.0, MARGINAL_TOL),
        make_report("transport/monotonicity", -d.monotonicity_min, 0.0, mono_tol),
        make_report("transport/identity-const", ident1["map"], 0.0, 1e-12),
        make_report("transport/identity-plan", ident2["plan"], 0.0, 1e-12),
    ]
    return make_report(
        "transport",
        plan.total_cost,
        plan.total_cost + d.duality_gap,
        MARGINAL_TOL if method == "exact" else eps,
        constants={
            "duality_gap": d.duality_gap,
            "identity_quadratic_map": ident2["map"],
            "support_violation": 0.0 if np.isnan(d.support_violation) else d.support_violation,
            "atoms_source": len(mu),
            "atoms_target": len(nu),
        },
        provenance={"lhs": "primal cost", "rhs": "primal cost plus duality gap"},
        subchecks=subs,
    )


def _gauss(x, c, w):
    return np.exp(-0.5 * ((x - c) / w) ** 2)


def _ma_study(resolutions: Sequence[int], method: str, eps: float) -> InequalityReport:
    """1-D refinement study: Monge-Ampere residual and quadratic identity residual."""
    res_ma, res_id = {}, {}
    for m in sorted(set(resolutions)):
        x = np.linspace(-1, 1, m)
        wa = _gauss(x, -0.2, 0.25)
        wb = _gauss(x, 0.15, 0.2) + 0.6 * _gauss(x, -0.4, 0.15)
        plan = solve_ot(
            DiscreteMeasure.from_atoms(x[:, None], wa / wa.sum()),
            DiscreteMeasure.from_atoms(x[:, None], wb / wb.sum()),
            method=method,
            epsilon=eps,
        )
        res_ma[m] = plan_diagnostics(plan).ma_residual
        res_id[m] = transport_identity_residual(plan, lambda y: np.sum(y**2, axis=1))["map"]
    ms = sorted(res_ma)
    subs = [make_report(f"transport/ma-residual[{ms[-1]}]", res_ma[ms[-1]], MA_TARGET, 0.0)]
    for a, b in zip(ms, ms[1:]):
        subs.append(make_report(f"transport/ma-decrease[{a}->{b}]", res_ma[b], res_ma[a], 0.0))
    if len(ms) > 1:
        subs.append(
            make_report(f"transport/identity-decrease[{ms[0]}->{ms[-1]}]", res_id[ms[-1]], res_id[ms[0]] / 2, 0.0)
        )
    consts = {f"ma_residual_{m}": v for m, v in res_ma.items()}
    consts.update({f"identity_quadratic_{m}": v for m, v in res_id.items()})
    return make_report(
        "transport/refinement",
        res_ma[ms[-1]],
        MA_TARGET,
        0.0,
        constants=consts,
        provenance={"lhs": "max |F - G(T) T'| at the finest resolution, T from CDF inversion"},
        subchecks=subs,
    )


def _transport_jobs(inp: _Inputs) -> list:
    ot = inp.cfg.ot
    jobs = [
        _job(lambda f=f, g=g: _transport_pair(f, g, inp.p, ot.method, ot.epsilon), "transport", f"[{i}]")
        for i, (f, g) in enumerate(_pairs(inp.functions, inp.family))
    ]
    jobs.append(_job(lambda: _ma_study(ot.resolutions, "exact", 0.0), "transport/refinement", ""))
    return jobs


def _key_jobs(inp: _Inputs) -> list:
    ot, refine = inp.cfg.ot, inp.cfg.refine
    return [
        _job(lambda f=f, g=g: key_estimate_verify(f, g, inp.p, ot.method, ot.epsilon, refine),
            "key-estimate",
            f"[{i}]",
        )
        for i, (f, g) in enumerate(_pairs(inp.functions, inp.family))
    ]


def _log_jobs(inp: _Inputs) -> list:
    s = inp.cfg.s
    return [
        _job(lambda f=f: log_lemma_verify(f, inp.p, s), "log-lemma", f"[{i}]")
        for i, f in enumerate(inp.functions)
    ]


def _sobolev_jobs(inp: _Inputs) -> list:
    s = inp.cfg.s
    return [
        _job(lambda f=f: sobolev_verify(f, inp.p, s, inp.family), "sobolev", f"[{i}]")
        for i, f in enumerate(inp.functions)
    ]


def _trace_jobs(inp: _Inputs) -> list:
    cfg = inp.cfg
    if not cfg.half_space:
        return []
    hg, hp, hfun, hfam = inp.half()
    return [
        _job(lambda f=f, i=i: trace_verify(f, hp, cfg.s, hfam, hfam[i % len(hfam)], None, cfg.ot.method, cfg.ot.epsilon),
            "trace",
            f"[{i}]",
        )
        for i, f in enumerate(hfun)
    ]


_BUILDERS = {
    "holder": _holder_jobs,
    "scaling": _scaling_jobs,
    "transport": _transport_jobs,
    "key-estimate": _key_jobs,
    "log-lemma": _log_jobs,
    "sobolev": _sobolev_jobs,
    "trace": _trace_jobs,
}


def _grid_meta(grid: Grid) -> dict:
    return {
        "origin": [float(v) for v in grid.origin],
        "extent": [float(v) for v in grid.extent],
        "resolution": [int(v) for v in grid.resolution],
    }


def run_suite(cfg: ExperimentConfig, suite: str, jobs: int = 1) -> SuiteResult:
    """Run one suite (or ``"all"``) and collect reports in declaration order."""
    if suite != "all" and suite not in SUITES:
        raise VarSobolevError(f"unknown suite {suite!r}")
    names = SUITES if suite == "all" else (suite,)
    t0 = time.perf_counter()
    inp = _Inputs(cfg)
    timings = {"setup": time.perf_counter() - t0}
    reports: List = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for name in names:
            t = time.perf_counter()
            try:
                batch = _BUILDERS[name](inp)
            except VarSobolevError as exc:
                reports.append(error_report(name, exc))
                continue
            futures = [pool.submit(j) for j in batch]
            out = [r for fu in futures for r in fu.result()]
            if name == "scaling":
                out += _grad_p_decay(out, cfg)
            reports.extend(out)
            timings[name] = time.perf_counter() - t
    timings["total"] = time.perf_counter() - t0
    meta = {
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "dimension": cfg.dimension,
        "grid": _grid_meta(inp.grid),
        "seed": cfg.seed,
        "jobs": jobs,
        "timings": timings,
    }
    return SuiteResult(suite=suite, reports=reports, metadata=meta)


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    return repr(float(v))


def csv_rows(result: SuiteResult) -> list:
    rows = []
    for rep in result.reports:
        if isinstance(rep, ScalingReport):
            if rep.error:
                rows.append((rep.name, 0.0, 0.0, 0.0, 0.0, False))
                continue
            for sw in rep.sandwiches + rep.coarse:
                tol = rep.tolerance
                margin = min(sw.measured - sw.lower, sw.upper - sw.measured)
                rows.append((f"{rep.name}/{sw.name}", sw.measured, sw.upper, margin, tol, sw.passed))
            continue
        for r in rep.walk():
            rows.append((r.name, r.lhs, r.rhs, r.margin, r.tolerance, r.passed))
    return [
        [result.suite, name, _fmt(lhs), _fmt(rhs), _fmt(margin), _fmt(tol), "true" if ok else "false"]
        for name, lhs, rhs, margin, tol, ok in rows
    ]


def to_csv(result: SuiteResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(csv_rows(result))
    return buf.getvalue()


def to_json(result: SuiteResult) -> str:
    return result.model_dump_json(by_alias=True, indent=2)


def from_json(text: str) -> SuiteResult:
    return SuiteResult.model_validate_json(text)


def emit_report(result: SuiteResult, out_dir, formats: Sequence[str] = ("json", "csv")) -> List[Path]:
    """Write ``<suite>.json`` and/or ``<suite>.csv`` into ``out_dir``."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            path = out / f"{result.suite}.{fmt}"
            text = to_json(result) if fmt == "json" else to_csv(result)
            path.write_text(text)
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return written


def summary(result: SuiteResult) -> dict:
    reps = result.reports
    return {
        "reports": len(reps),
        "passed": sum(r.passed for r in reps),
        "errors": sum(bool(r.error) for r in reps),
    }
