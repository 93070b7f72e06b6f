"""Run kinds behind the command line: build a problem from a config, solve,
check, and write ``summary.json`` plus CSV fields."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import ConfigError, InvalidDataError
from .grid import RIGHT, SpaceGrid, SpaceTimeFunction, TimeGrid, assemble_operator, norm_h, norms, to_csv
from .lcp import LCPProblem, solve_bruteforce_oracle, solve_pdas, solve_psor
from .obstacles import ConstantMap, InverseParabolicMap, SuperpositionMap, smallness_diagnostics
from .parabolic import (
    l1h_cells,
    lower_obstacle_vi,
    parabolic_vi,
    rothe_solve_qvi,
    transform_identity_residual,
    unconstrained_solve,
    vi_iterate_qvi,
)
from .problem import ProblemData
from .sensitivity import alpha_iteration, coincidence_behavior_check, taylor_check, taylor_verdicts


@dataclass
class Problem:
    sg: SpaceGrid
    tg: TimeGrid
    data: ProblemData


def build_problem(cfg: ExperimentConfig, n_factor: int = 1, m_factor: int = 1) -> Problem:
    sg = SpaceGrid(cfg["grid.omega"], (cfg["grid.m"] + 1) * m_factor - 1)
    tg = TimeGrid(cfg["time.T"], cfg["time.N"] * n_factor)
    A = assemble_operator(sg, cfg["operator.nu"], cfg["operator.c"])
    kind = cfg["obstacle.kind"]
    if kind == "constant":
        phi = ConstantMap(cfg.profile("obstacle.psi").nodal(sg, tg), sg, tg)
    elif kind == "superposition":
        phi = SuperpositionMap(cfg.profile("obstacle.offset").nodal(sg, tg), sg, tg, cfg["obstacle.slope"])
    else:
        B = assemble_operator(sg, cfg["operator.nu_b"], cfg["operator.c_b"])
        phi = InverseParabolicMap(B, cfg.nonlinearity(), cfg.profile("obstacle.w0").spatial(sg), tg)
    d = cfg.profile("data.d").cells(sg, tg)
    data = ProblemData(cfg.profile("data.f").cells(sg, tg), cfg.profile("data.z0").spatial(sg), phi, A, d)
    return Problem(sg, tg, data)


@contextmanager
def job_mapper(jobs: int):
    """``map`` or an ordered process-pool map."""
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            yield pool.map
    else:
        yield map


# ---------------------------------------------------------------------------
# random instance generators shared with the acceptance suite


def random_lcp(rng, m: int) -> LCPProblem:
    sg = SpaceGrid(1.0, m)
    A = assemble_operator(sg, float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.0, 2.0)))
    S = A.stepped(float(rng.uniform(1e-3, 0.2)))
    b = 3.0 * rng.standard_normal(m)
    psi = rng.standard_normal(m)
    psi[rng.random(m) < 0.15] = np.inf
    return LCPProblem(S, b, psi)


def random_smooth_field(rng, sg: SpaceGrid, tg: TimeGrid, amp: float = 1.0) -> np.ndarray:
    """Few sine modes with smooth random time profiles."""
    x, t = sg.nodes / sg.omega, tg.nodes / tg.horizon
    fr = np.zeros((tg.n_steps + 1, sg.m))
    for k in range(1, 4):
        a, b, c = rng.standard_normal(3)
        fr += amp / k * np.outer(a + b * t + c * t**2, np.sin(k * np.pi * x))
    return fr


def oracle_compare(m: int, instances: int, rng) -> dict:
    worst = {"pdas_oracle": 0.0, "psor_oracle": 0.0, "kkt": 0.0, "active_set_mismatches": 0}
    for _ in range(instances):
        p = random_lcp(rng, m)
        o, a, s = solve_bruteforce_oracle(p), solve_pdas(p), solve_psor(p)
        worst["pdas_oracle"] = max(worst["pdas_oracle"], float(np.max(np.abs(a.z - o.z))))
        worst["psor_oracle"] = max(worst["psor_oracle"], float(np.max(np.abs(s.z - o.z))))
        worst["kkt"] = max(worst["kkt"], a.residual, s.residual, o.residual)
        if not (np.array_equal(a.active.strongly_active, o.active.strongly_active) and np.array_equal(a.active.biactive, o.active.biactive)):
            worst["active_set_mismatches"] += 1
    worst["max_discrepancy"] = max(worst["pdas_oracle"], worst["psor_oracle"])
    return worst


def transform_instances(count: int, rng, m: int = 15, N: int = 16) -> dict:
    """Identity residual on random smooth obstacles, sources and admissible initial data."""
    sg, tg = SpaceGrid(1.0, m), TimeGrid(1.0, N)
    worst = 0.0
    for _ in range(count):
        A = assemble_operator(sg, float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.0, 1.0)))
        psi = random_smooth_field(rng, sg, tg) + 0.5
        g = 5.0 * random_smooth_field(rng, sg, tg)[1:]
        z0 = psi[0] - rng.random(m) * 0.3
        worst = max(worst, transform_identity_residual(g, psi, z0, A, tg))
    return {"identity_residual": worst}


def lipschitz_pairs(count: int, rng, m: int = 15, N: int = 16) -> dict:
    """``||w1 - w2||_{Linf(H)} / (2 ||G1 - G2||_{L1(H)})`` for the zero lower-obstacle map."""
    sg, tg = SpaceGrid(1.0, m), TimeGrid(1.0, N)
    worst_ratio, worst_excess = 0.0, -math.inf
    for _ in range(count):
        A = assemble_operator(sg, float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.0, 1.0)))
        w0 = rng.random(m)
        G1 = 5.0 * rng.standard_normal((N, m))
        G2 = G1 + rng.standard_normal((N, m)) * rng.uniform(0.01, 3.0)
        w1 = lower_obstacle_vi(G1, w0, A, tg).solution.frames
        w2 = lower_obstacle_vi(G2, w0, A, tg).solution.frames
        lhs = float(np.max(norm_h(w1 - w2, sg)))
        rhs = 2.0 * l1h_cells(G1 - G2, sg, tg)
        worst_ratio = max(worst_ratio, lhs / rhs)
        worst_excess = max(worst_excess, lhs - rhs)
    return {"lipschitz_ratio": worst_ratio, "lipschitz_excess": worst_excess}


# ---------------------------------------------------------------------------
# refinement study


def _upsample(frames: np.ndarray, sg_c: SpaceGrid, tg_c: TimeGrid, sg_f: SpaceGrid, tg_f: TimeGrid) -> np.ndarray:
    r = tg_f.n_steps // tg_c.n_steps
    idx = np.concatenate([[0], (np.arange(1, tg_f.n_steps + 1) + r - 1) // r])
    fr = frames[idx]
    if sg_f.m != sg_c.m:
        xc = np.concatenate([[0.0], sg_c.nodes, [sg_c.omega]])
        fr = np.stack([np.interp(sg_f.nodes, xc, np.concatenate([[0.0], row, [0.0]])) for row in fr])
    return fr


def _level_solution(prob: Problem, cfg: ExperimentConfig):
    d = prob.data
    if d.obstacle.is_constant:
        rep = parabolic_vi(d.source_cells(), d.obstacle.evaluate().frames, d.z0, d.operator, prob.tg, cfg["run.method"])
    else:
        rep = vi_iterate_qvi(d, tol_fp=cfg["run.tol_fp"], method=cfg["run.method"], keep_iterates=False).final
    return rep


def _refine_level(args):
    cfg, factor = args
    prob = build_problem(cfg, factor, factor if cfg["run.refine_space"] else 1)
    rep = _level_solution(prob, cfg)
    return rep.solution.frames, prob.sg, prob.tg, rep.bounds


def refine_study(cfg: ExperimentConfig, factors=None, mapper=map) -> list[dict]:
    """Gaps ``||u_{k+1} - u_k||_{L2(H)}`` between successive levels, on the finer grid."""
    factors = list(factors or cfg["run.factors"])
    if any(b % a for a, b in zip(factors, factors[1:])):
        raise ConfigError("refinement factors must divide each other")
    levels = list(mapper(_refine_level, [(cfg, f) for f in factors]))
    table = []
    for k, (frames, sg, tg, bounds) in enumerate(levels):
        row = {"factor": factors[k], "N": tg.n_steps, "m": sg.m, **bounds, "gap_L2H": math.nan, "gap_ratio": math.nan}
        if k > 0:
            fc, sgc, tgc, _ = levels[k - 1]
            diff = frames - _upsample(fc, sgc, tgc, sg, tg)
            row["gap_L2H"] = norms(SpaceTimeFunction(diff, sg, tg, RIGHT), "L2H")
            prev = table[-1]["gap_L2H"]
            if k > 1:
                row["gap_ratio"] = row["gap_L2H"] / prev if prev > 0 else (0.0 if row["gap_L2H"] == 0 else math.inf)
        table.append(row)
    return table


# ---------------------------------------------------------------------------
# outputs


def _fmt(v) -> str:
    return f"{v:.17g}"


def write_table(path: Path, rows: list[dict], columns: list[str]):
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(_fmt(float(r[c])) for c in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_summary(out: Path, summary: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), sort_keys=True, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# run kinds; each returns (metrics, assertions) and writes its CSV files


def _run_solve_vi(cfg, prob, out, mapper):
    d = prob.data
    if not d.obstacle.is_constant:
        raise ConfigError("solve-vi needs obstacle.kind = constant")
    rep = parabolic_vi(d.source_cells(), d.obstacle.evaluate().frames, d.z0, d.operator, prob.tg, cfg["run.method"])
    to_csv(rep.solution, path=out / "solution.csv")
    to_csv(rep.solution.with_frames(rep.multipliers), path=out / "multiplier.csv")
    kkt = max((s.residual for s in rep.per_step), default=0.0)
    metrics = {"feasibility": rep.feasibility, "feasible": rep.feasibility <= 1e-8, "active_fraction": rep.active_fraction, "kkt_residual": kkt, "bounds": rep.bounds}
    return metrics, {"feasible": metrics["feasible"], "kkt": kkt <= 1e-8 * (1 + float(np.max(np.abs(rep.multipliers))) * prob.tg.h)}


def _run_rothe(cfg, prob, out, mapper):
    direction = "maximal" if cfg["run.direction"] == "decreasing" else "minimal"
    rep = rothe_solve_qvi(prob.data, direction, cfg["run.method"])
    to_csv(rep.solution, path=out / "solution.csv")
    to_csv(rep.solution.with_frames(rep.obstacle), path=out / "obstacle.csv")
    flags = rep.flags
    metrics = {"flags": flags, "bounds": rep.bounds, "outer_iters_max": max(rep.outer_iters), "outer_iters_total": sum(rep.outer_iters), "active_fraction": rep.active_fraction}
    hyp = flags["f_nonnegative"] and flags["f_increasing"] and flags["z0_nonnegative"] and flags["z0_below_obstacle"]
    checks = {"feasible": flags["feasible"]}
    if hyp and direction == "minimal":
        checks["monotone_in_time"] = flags["monotone_in_time"]
        checks["sandwich"] = flags["sandwich_violation"] <= 1e-9
    return metrics, checks


def _run_iterate(cfg, prob, out, mapper):
    rep = vi_iterate_qvi(prob.data, direction=cfg["run.direction"], tol_fp=cfg["run.tol_fp"], method=cfg["run.method"], keep_iterates=False)
    to_csv(rep.limit, path=out / "solution.csv")
    metrics = {"outer_iters": rep.outer_iters, "feasibility": rep.feasibility, "monotone_ok": rep.monotone_ok, "max_monotone_violation": rep.max_monotone_violation, "bounds": rep.final.bounds, "active_fraction": rep.final.active_fraction}
    return metrics, {"feasible": rep.feasible, "monotone": rep.monotone_ok}


def _run_transform(cfg, prob, out, mapper):
    rng = np.random.default_rng(cfg["run.seed"])
    d = prob.data
    A, tg = d.operator, prob.tg
    psi = d.obstacle.evaluate(unconstrained_solve(d.source_cells(), d.z0, A, tg)).frames
    if not np.all(np.isfinite(psi)):
        raise ConfigError("transform-check needs a finite obstacle")
    if np.any(d.z0 > psi[0] + 1e-9):
        raise InvalidDataError("initial data lies above the initial obstacle")
    own = transform_identity_residual(d.source_cells(), psi, d.z0, A, tg, cfg["run.method"])
    rand = transform_instances(cfg["run.instances"], rng)
    lip = lipschitz_pairs(2 * cfg["run.instances"], rng)
    metrics = {"own_identity_residual": own, **rand, **lip}
    return metrics, {"identity": max(own, rand["identity_residual"]) <= 1e-8, "lipschitz": lip["lipschitz_excess"] <= 1e-8}


def _base_solution(cfg, prob):
    return vi_iterate_qvi(prob.data, tol_fp=min(cfg["run.tol_fp"], 1e-13), method=cfg["run.method"], keep_iterates=False)


def _run_derivative(cfg, prob, out, mapper):
    base = _base_solution(cfg, prob)
    res = alpha_iteration(base, prob.data, strict_complementarity=cfg["run.strict_complementarity"], method=cfg["run.method"])
    to_csv(base.limit, path=out / "solution.csv")
    to_csv(res.alpha, path=out / "alpha.csv")
    coin = coincidence_behavior_check(base, res.alpha)
    metrics = {
        "iterations": res.iterations,
        "checks": res.checks,
        "coincidence": coin,
        "cone": {"free": res.cone.count(0), "biactive": res.cone.count(1), "strongly_active": res.cone.count(2)},
        "alpha_L2H": norms(res.alpha, "L2H"),
    }
    checks = {"frame0_zero": res.checks["alpha_frame0_zero"], "dvi_kkt": res.checks["dvi_kkt_residual"] <= 1e-8}
    if res.checks["d_sign"] in (1, -1):
        checks["sign"] = res.checks["sign_ok"]
        checks["monotone_chain"] = res.checks["monotone_chain"]
        if prob.data.obstacle.kind == "superposition":
            checks["coincidence_upper"] = coin["upper_ok"]
            if res.checks["d_sign"] == 1:
                checks["coincidence_zero"] = coin["zero_ok"]
    return metrics, checks


def _run_taylor(cfg, prob, out, mapper):
    base = _base_solution(cfg, prob)
    res = alpha_iteration(base, prob.data, strict_complementarity=cfg["run.strict_complementarity"], method=cfg["run.method"])
    rows = taylor_check(prob.data, base.limit, res.alpha, cfg["run.s_values"], cfg["run.p"], mapper=mapper)
    alpha_norm = norms(res.alpha, "L2H")
    verdicts = taylor_verdicts(rows, alpha_norm)
    diag = smallness_diagnostics(prob.data.obstacle, base.limit, prob.data.operator, cfg["run.probe_count"], cfg["run.seed"], cfg["run.p"])
    write_table(out / "taylor.csv", rows, ["s", "remainder", "ratio"])
    to_csv(res.alpha, path=out / "alpha.csv")
    metrics = {"table": rows, "verdicts": verdicts, "alpha_L2H": alpha_norm, "diagnostics": diag.as_dict(), "alpha_checks": res.checks}
    checks = {"frame0_zero": all(r["frame0_zero"] for r in rows)}
    if diag.verdict_L13:
        checks["taylor_decay"] = verdicts["decay_ok"]
        checks["taylor_trend"] = verdicts["trend_ok"]
    else:
        metrics["taylor_status"] = "expected-unknown"
    return metrics, checks


def _run_diagnostics(cfg, prob, out, mapper):
    base = _base_solution(cfg, prob)
    diag = smallness_diagnostics(prob.data.obstacle, base.limit, prob.data.operator, cfg["run.probe_count"], cfg["run.seed"], cfg["run.p"])
    metrics = diag.as_dict()
    checks = {"nonnegative_constants": all(v >= 0 for v in (diag.c1, diag.c2, diag.c3, diag.k1, diag.k2, diag.k3))}
    cf = diag.closed_form
    if cf and cfg["run.p"] == 2:
        checks["below_closed_form"] = diag.k2 <= cf["L2V_from_L2H"] * (1 + 1e-9) and diag.k3 <= cf["dt_L2Vstar_from_L2H"] * (1 + 1e-9)
    return metrics, checks


def _run_oracle(cfg, prob, out, mapper):
    rng = np.random.default_rng(cfg["run.seed"])
    res = oracle_compare(cfg["run.oracle_m"], cfg["run.instances"], rng)
    return res, {"agreement": res["max_discrepancy"] <= 1e-8, "kkt": res["kkt"] <= 1e-8}


def _run_refine(cfg, prob, out, mapper):
    table = refine_study(cfg, mapper=mapper)
    cols = ["factor", "N", "m", "gap_L2H", "gap_ratio", "max_H", "l2v_sq", "dt_sq"]
    write_table(out / "refine.csv", table, cols)
    gaps = [r["gap_L2H"] for r in table[1:]]
    return {"table": table}, {"gaps_decreasing": all(b <= a * (1 + 1e-12) + 1e-14 for a, b in zip(gaps, gaps[1:]))}


RUNNERS = {
    "solve-vi": _run_solve_vi,
    "solve-qvi-rothe": _run_rothe,
    "solve-qvi-iterate": _run_iterate,
    "transform-check": _run_transform,
    "derivative": _run_derivative,
    "taylor-check": _run_taylor,
    "diagnostics": _run_diagnostics,
    "oracle-compare": _run_oracle,
    "refine-study": _run_refine,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs: int = 1) -> tuple[int, dict]:
    """Execute the configured run kind; returns (exit status, summary)."""
    out = Path(out_dir or cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    with job_mapper(jobs) as mapper:
        metrics, checks = RUNNERS[cfg["run.kind"]](cfg, prob, out, mapper)
    ok = all(bool(v) for v in checks.values())
    summary = {
        "run_kind": cfg["run.kind"],
        "config": cfg.resolved(),
        "config_source": cfg.source,
        "seed": cfg["run.seed"],
        "version": __version__,
        "metrics": metrics,
        "assertions": checks,
        "status": "pass" if ok else "fail",
        "wall_time_s": time.perf_counter() - t0,
    }
    write_summary(out, summary)
    return (0 if ok else 1), summary
