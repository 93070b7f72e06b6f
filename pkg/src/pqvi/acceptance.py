"""Built-in acceptance suite (used by ``pqvi check`` and the test-suite).

Each criterion is a function returning a :class:`CriterionResult`; tolerances
are fixed here and never adapted to the outcome.
"""

from __future__ import annotations

import contextlib
import filecmp
import io
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import load_config, shipped_configs
from .experiments import build_problem, lipschitz_pairs, random_lcp, random_smooth_field, transform_instances
from .green import GreenKernel, green_convolve
from .grid import SpaceGrid, TimeGrid, assemble_operator, norms
from .lcp import LCPProblem, solve_bruteforce_oracle, solve_pdas, solve_psor
from .obstacles import InverseParabolicMap
from .parabolic import DECREASING, INCREASING, parabolic_vi, rothe_solve_qvi, vi_iterate_qvi
from .profiles import NonlinearSource, Profile
from .sensitivity import (
    ConeSpec,
    alpha_iteration,
    coincidence_behavior_check,
    derivative_vi_pattern_oracle,
    solve_derivative_vi,
    taylor_check,
    taylor_verdicts,
)

SEED = 42


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str = ""
    values: dict = field(default_factory=dict)


def _cfg(name: str, **updates):
    cfg = load_config(shipped_configs()[name])
    return cfg.replace(**updates) if updates else cfg


def c01_lcp_oracle() -> CriterionResult:
    rng = np.random.default_rng(SEED)
    worst, kkt = 0.0, 0.0
    for _ in range(200):
        p = random_lcp(rng, int(rng.integers(1, 13)))
        o, a, s = solve_bruteforce_oracle(p), solve_pdas(p), solve_psor(p)
        worst = max(worst, float(np.max(np.abs(a.z - o.z))), float(np.max(np.abs(s.z - o.z))), float(np.max(np.abs(a.z - s.z))))
        kkt = max(kkt, o.residual, a.residual, s.residual)
    ok = worst <= 1e-8 and kkt <= 1e-8
    return CriterionResult(1, "LCP oracle equivalence", ok, f"max discrepancy {worst:.2e}, max KKT residual {kkt:.2e}", {"discrepancy": worst, "kkt": kkt})


def c02_comparison() -> CriterionResult:
    rng = np.random.default_rng(SEED)
    worst_step = -math.inf
    for _ in range(100):
        p1 = random_lcp(rng, int(rng.integers(2, 13)))
        b2 = p1.rhs + rng.random(p1.m)
        psi2 = p1.upper_bound + rng.random(p1.m) * (rng.random(p1.m) < 0.7)
        z1 = solve_pdas(p1).z
        z2 = solve_pdas(LCPProblem(p1.system, b2, psi2)).z
        worst_step = max(worst_step, float(np.max(z1 - z2)))
    sg, tg = SpaceGrid(1.0, 15), TimeGrid(1.0, 16)
    worst_par = -math.inf
    for _ in range(100):
        A = assemble_operator(sg, float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.0, 1.0)))
        f1 = 5.0 * random_smooth_field(rng, sg, tg)[1:]
        f2 = f1 + rng.random(f1.shape)
        psi1 = random_smooth_field(rng, sg, tg, 0.3) + 0.3
        psi2 = psi1 + rng.random(psi1.shape) * 0.2
        z0 = np.minimum(psi1[0], 0.0) - 0.05 * rng.random(sg.m)
        z1 = parabolic_vi(f1, psi1, z0, A, tg).solution.frames
        z2 = parabolic_vi(f2, psi2, z0, A, tg).solution.frames
        worst_par = max(worst_par, float(np.max(z1 - z2)))
    ok = worst_step <= 1e-9 and worst_par <= 1e-9
    return CriterionResult(2, "Comparison principles", ok, f"max(z1 - z2): step {worst_step:.2e}, parabolic {worst_par:.2e}", {"step": worst_step, "parabolic": worst_par})


def c03_rothe_monotone() -> CriterionResult:
    prob = build_problem(_cfg("rothe-superposition"))
    rep = rothe_solve_qvi(prob.data)
    fl = rep.flags
    hyp = all(fl[k] for k in ("f_nonnegative", "f_increasing", "z0_nonnegative", "z0_below_obstacle"))
    drop = float(np.max(-np.diff(rep.solution.frames, axis=0)))
    ok = hyp and drop <= 1e-9 and fl["sandwich_violation"] <= 1e-9
    return CriterionResult(3, "Rothe monotonicity and sandwich", ok, f"hypotheses {hyp}, max decrease {drop:.2e}, sandwich violation {fl['sandwich_violation']:.2e}", {"drop": drop, "sandwich": fl["sandwich_violation"]})


def c04_uniform_bounds() -> CriterionResult:
    vals = {}
    for N in (32, 64, 128):
        vals[N] = rothe_solve_qvi(build_problem(_cfg("rothe-superposition", time__N=N)).data).bounds
    spread = {}
    for key in ("max_H", "l2v_sq", "dt_sq"):
        xs = [vals[N][key] for N in vals]
        spread[key] = (max(xs) - min(xs)) / max(xs)
    ok = all(v < 0.2 for v in spread.values())
    return CriterionResult(4, "Uniform discrete bounds", ok, ", ".join(f"{k} spread {v:.3f}" for k, v in spread.items()), spread)


def c05_route_consistency() -> CriterionResult:
    rows = []
    ok = True
    for m, N in ((31, 64), (63, 128)):
        prob = build_problem(_cfg("rothe-superposition", grid__m=m, time__N=N))
        zr = rothe_solve_qvi(prob.data).solution
        zv = vi_iterate_qvi(prob.data, keep_iterates=False).limit
        gap = norms(zr - zv, "L2H")
        bound = 5.0 * max(prob.sg.dx**2, prob.tg.h)
        ok &= gap <= bound
        rows.append(f"m={m},N={N}: {gap:.2e} <= {bound:.2e}")
    return CriterionResult(5, "Rothe vs VI iteration", bool(ok), "; ".join(rows))


def c06_extremality() -> CriterionResult:
    details, ok = [], True
    for name in ("iterate-superposition", "derivative-default"):
        prob = build_problem(_cfg(name))
        lo = vi_iterate_qvi(prob.data, direction=INCREASING, keep_iterates=False)
        hi = vi_iterate_qvi(prob.data, direction=DECREASING, keep_iterates=False)
        order = float(np.max(lo.limit.frames - hi.limit.frames))
        feas = max(lo.feasibility, hi.feasibility)
        ok &= order <= 1e-7 and feas <= 1e-7
        details.append(f"{name}: order {order:.2e}, feasibility {feas:.2e}")
    return CriterionResult(6, "Extremal solutions", bool(ok), "; ".join(details))


def c07_transformation() -> CriterionResult:
    rng = np.random.default_rng(SEED)
    ident = transform_instances(50, rng)["identity_residual"]
    lip = lipschitz_pairs(100, rng)
    ok = ident <= 1e-8 and lip["lipschitz_excess"] <= 1e-8
    return CriterionResult(7, "Zero-obstacle transformation", ok, f"identity residual {ident:.2e}, worst Lipschitz ratio {lip['lipschitz_ratio']:.3f} (bound 1)", {"identity": ident, **lip})


def green_levels(levels=((15, 16), (31, 64), (63, 256)), modes: int = 64) -> list[float]:
    """Discrepancy between the stepped map and the series oracle at fixed analytic data."""
    out = []
    src = NonlinearSource("clipped-linear", 0.4, 1.0)
    psi_prof = Profile("bump", 0.8, 1.0, 0.4, 0.25)
    for m, N in levels:
        sg, tg = SpaceGrid(1.0, m), TimeGrid(1.0, N)
        B = assemble_operator(sg, 1.0)
        w0 = 0.01 * np.sin(np.pi * sg.nodes)
        phi = InverseParabolicMap(B, src, w0, tg)
        psi = psi_prof.nodal(sg, tg)
        w = phi.evaluate(psi)
        forcing = src.g(psi.frames[1:]) - B.apply(w0)
        out.append(norms(w - green_convolve(GreenKernel(1.0, modes), forcing, w0, sg, tg), "L2H"))
    return out


def c08_obstacle_map() -> CriterionResult:
    disc = green_levels()
    decreasing = all(b < a for a, b in zip(disc, disc[1:]))
    prob = build_problem(_cfg("derivative-default"))
    phi = prob.data.obstacle
    rng = np.random.default_rng(SEED)
    worst_inc, worst_neg = -math.inf, -math.inf
    for _ in range(50):
        base = np.abs(random_smooth_field(rng, prob.sg, prob.tg))
        psi = np.maximum.accumulate(base + rng.random(base.shape) * 0.1, axis=0)
        w = phi.evaluate(psi).frames
        worst_inc = max(worst_inc, float(np.max(-np.diff(w, axis=0))))
        anyp = 3.0 * rng.standard_normal(psi.shape)
        worst_neg = max(worst_neg, float(np.max(-phi.evaluate(anyp).frames)))
    ok = decreasing and worst_inc <= 1e-9 and worst_neg <= 1e-9
    return CriterionResult(8, "Heat obstacle map vs Green oracle", ok, f"discrepancies {', '.join(f'{d:.2e}' for d in disc)}; max time decrease {worst_inc:.1e}; min value {-worst_neg:.1e}", {"discrepancy": disc})


def c09_derivative_properties() -> CriterionResult:
    prob = build_problem(_cfg("derivative-default"))
    base = vi_iterate_qvi(prob.data, tol_fp=1e-13, keep_iterates=False)
    res = alpha_iteration(base, prob.data)
    ch = res.checks
    a = res.alpha.frames
    sign_ok = prob.data.d_sign() == 1 and bool(np.all(a >= -1e-9))
    ok1 = ch["monotone_chain"] and sign_ok and ch["alpha_frame0_zero"] and float(np.max(a)) > 0
    cl = build_problem(_cfg("derivative-clamped"))
    cbase = vi_iterate_qvi(cl.data, tol_fp=1e-13, keep_iterates=False)
    cres = alpha_iteration(cbase, cl.data)
    coin = coincidence_behavior_check(cbase, cres.alpha, tol=1e-7)
    ok2 = coin["coincidence_nodes"] > 0 and coin["zero_ok"] and norms(cres.alpha, "L2H") > 0
    return CriterionResult(
        9,
        "Derivative sign, monotonicity, initial frame",
        bool(ok1 and ok2),
        f"chain violation {ch['monotone_violation']:.1e}, min alpha {float(np.min(a)):.1e}, frame0 zero {ch['alpha_frame0_zero']}; coincidence max|alpha| {coin['max_abs_alpha']:.1e} on {coin['coincidence_nodes']} nodes",
    )


def _taylor(name: str):
    prob = build_problem(_cfg(name))
    from .obstacles import smallness_diagnostics

    base = vi_iterate_qvi(prob.data, tol_fp=1e-13, keep_iterates=False)
    res = alpha_iteration(base, prob.data)
    rows = taylor_check(prob.data, base.limit, res.alpha)
    an = norms(res.alpha, "L2H")
    diag = smallness_diagnostics(prob.data.obstacle, base.limit, prob.data.operator, 16, SEED)
    return rows, taylor_verdicts(rows, an), diag


def c10_taylor() -> CriterionResult:
    rows, v, diag = _taylor("taylor-default")
    ok1 = diag.verdict_L13 and v["decay_ok"] and v["trend_ok"]
    vrows, vv, vdiag = _taylor("taylor-vi")
    ok2 = vdiag.verdict_L13 and vv["decay_ok"] and vv["trend_ok"] and vv["relative_last"] <= 1e-3
    fmt = lambda q: ", ".join(f"{x:.2f}" for x in q)  # noqa: E731
    return CriterionResult(
        10,
        "Taylor expansion",
        bool(ok1 and ok2),
        f"heat map: L13 lhs {diag.lhs_L13:.3f}, ratios [{fmt(v['ratios'])}], trend ok {v['trend_ok']}; fixed obstacle: ratios [{fmt(vv['ratios'])}], r/|alpha| {vv['relative_last']:.1e}",
        {"heat": v, "vi": vv},
    )


def c11_dvi_oracle() -> CriterionResult:
    rng = np.random.default_rng(SEED)
    sg, tg = SpaceGrid(1.0, 2), TimeGrid(1.0, 2)
    worst = 0.0
    for _ in range(50):
        A = assemble_operator(sg, float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.0, 1.0)))
        codes = rng.integers(0, 3, size=(3, 2))
        codes[0] = 0
        cone = ConeSpec(codes)
        src = 3.0 * rng.standard_normal((2, 2))
        ours = solve_derivative_vi(cone, src, A, tg).delta.frames
        oracle = derivative_vi_pattern_oracle(cone, src, A, tg)
        worst = max(worst, float(np.max(np.abs(ours - oracle))))
    return CriterionResult(11, "Derivative VI pattern oracle", worst <= 1e-12, f"max discrepancy {worst:.1e}", {"discrepancy": worst})


def c12_determinism() -> CriterionResult:
    from .cli import main

    mismatched = []
    with tempfile.TemporaryDirectory() as tmp:
        for name, path in shipped_configs().items():
            outs = []
            for rep in range(2):
                out = Path(tmp) / f"{name}-{rep}"
                with contextlib.redirect_stdout(io.StringIO()):
                    code = main(["run", str(path), "--out", str(out)])
                if code != 0:
                    mismatched.append(f"{name} (run failed)")
                outs.append(out)
            csvs = sorted(p.name for p in outs[0].glob("*.csv"))
            if sorted(p.name for p in outs[1].glob("*.csv")) != csvs:
                mismatched.append(name)
                continue
            for c in csvs:
                if not filecmp.cmp(outs[0] / c, outs[1] / c, shallow=False):
                    mismatched.append(f"{name}/{c}")
    n = len(shipped_configs())
    return CriterionResult(12, "Deterministic CSV output", not mismatched, f"{n} configs, mismatches: {mismatched or 'none'}")


CRITERIA = [
    c01_lcp_oracle,
    c02_comparison,
    c03_rothe_monotone,
    c04_uniform_bounds,
    c05_route_consistency,
    c06_extremality,
    c07_transformation,
    c08_obstacle_map,
    c09_derivative_properties,
    c10_taylor,
    c11_dvi_oracle,
    c12_determinism,
]


def run_all(only=None) -> list[CriterionResult]:
    picked = [c for i, c in enumerate(CRITERIA, 1) if not only or i in only]
    return [c() for c in picked]
