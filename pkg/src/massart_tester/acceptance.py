"""The acceptance battery: ten criteria with pinned tolerances.

Each criterion returns a CriterionResult and, when an output directory is
given, writes a deterministic JSON report (used by the determinism
criterion).  The battery is shared by `massart-tester suite` and the
pytest acceptance module.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import sandwich as sw
from .data import (Dataset, Halfspace, adversary, gaussian_bias_threshold,
                   make_massart_dataset, opt_error_bruteforce, substream)
from .learner import bias_agnostic, oracle_learner
from .poly import (chebyshev, chebyshev_over_x, evaluate, gaussian_expectation,
                   gaussian_moment, hermite_normalized)
from .precision import mpfr, workprec
from .quadrature import quadrature_oracle
from .tester import (DESK_PROFILE, build_slices, hermite_design, orthobasis,
                     run_tester, schedule, slice_gaussian_mass)

__all__ = ["CriterionResult", "CRITERIA", "run_criterion", "run_all",
           "SANDWICH_CELLS", "SUITE_DEGREE_CAP"]

# the acceptance grid of Theorem-1.4 cells
SANDWICH_CELLS = [(t, a) for t in (-1.0, 0.0, 0.5, 1.0, 2.0)
                  for a in (0.4, 0.25)]

# resource guard for the suite: cells whose schedule exceeds this degree
# are reported infeasible instead of attempting multi-GB builds (the
# package-wide default cap stays at 200000)
SUITE_DEGREE_CAP = 65000

MASTER_SEED = 20260809


@dataclass
class CriterionResult:
    cid: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.cid}: {self.title} ({self.runtime_s:.1f}s)"


def _write_report(out_dir: Optional[Path], name: str, payload) -> None:
    if out_dir is None:
        return
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(
        json.dumps(payload, sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# criteria 1 + 2: sandwich pointwise soundness and multiplicative gap

_PAIR_CACHE: dict = {}


def _sandwich_cell_reports(grid_size: int = 10000, tail_points: int = 100):
    """Build and fully verify every grid cell under the suite degree cap."""
    rows = []
    for (t, a) in SANDWICH_CELLS:
        key = (t, a)
        if key in _PAIR_CACHE:
            rows.append(_PAIR_CACHE[key])
            continue
        try:
            pair = sw.build_sandwich(t, a, sw.DEFAULT_CONSTANTS,
                                     degree_cap=SUITE_DEGREE_CAP,
                                     quick_check=False)
        except sw.InfeasibleParameters as e:
            row = {"t": t, "alpha": a, "feasible": False, "error": str(e)}
            _PAIR_CACHE[key] = row
            rows.append(row)
            continue
        rep = sw.verify_pair(pair, grid_size=grid_size,
                             tail_points=tail_points, fast=False)
        row = {"t": t, "alpha": a, "feasible": True,
               "report": rep.to_json_dict()}
        _PAIR_CACHE[key] = row
        rows.append(row)
    return rows


def criterion_1(out_dir=None) -> CriterionResult:
    t0 = time.time()
    rows = _sandwich_cell_reports()
    ok_cells = []
    for r in rows:
        ok = r["feasible"] and r["report"]["pass_pointwise"] \
            and r["report"]["max_violation"] <= 1e-30
        ok_cells.append(ok)
    passed = all(ok_cells)
    details = {"cells": rows, "cells_pass": ok_cells}
    _write_report(out_dir, "criterion_1.json", details)
    return CriterionResult(1, "sandwiching soundness on the (t, alpha) grid",
                           passed, details, time.time() - t0)


def criterion_2(out_dir=None) -> CriterionResult:
    t0 = time.time()
    rows = _sandwich_cell_reports()
    ok_cells = []
    for r in rows:
        ok = (r["feasible"]
              and r["report"]["pass_gap"]
              and r["report"]["quad_agreement"] is not None
              and r["report"]["quad_agreement"] <= 1e-12)
        ok_cells.append(ok)
    passed = all(ok_cells)
    details = {"cells": rows, "cells_pass": ok_cells}
    _write_report(out_dir, "criterion_2.json", details)
    return CriterionResult(2, "multiplicative gap <= alpha with dual-route agreement",
                           passed, details, time.time() - t0)


def criterion_3(out_dir=None) -> CriterionResult:
    """Degree-shape: fitted exponents of the schedule across the grid."""
    t0 = time.time()
    degs = {}
    for t in (0.0, 0.5, 1.0, 2.0):
        for a in (0.4, 0.25):
            p = sw.select_params(t, a, sw.DEFAULT_CONSTANTS,
                                 degree_cap=10 ** 12)
            degs[(t, a)] = p.m * p.k

    def fit_slope(xs, ys):
        lx = np.log(np.array(xs))
        ly = np.log(np.array(ys))
        return float(np.polyfit(lx, ly, 1)[0])

    slope_t = {}
    for a in (0.4, 0.25):
        slope_t[a] = fit_slope([t + 1 for t in (0.0, 0.5, 1.0, 2.0)],
                               [degs[(t, a)] for t in (0.0, 0.5, 1.0, 2.0)])
    slope_a = {}
    for t in (0.0, 0.5, 1.0, 2.0):
        slope_a[t] = fit_slope([1 / a for a in (0.4, 0.25)],
                               [degs[(t, a)] for a in (0.4, 0.25)])
    # theorem shape exponents with slack factor 2; hard failure bounds
    hard_ok = all(s <= 8.0 for s in slope_t.values()) and \
        all(s <= 4.0 for s in slope_a.values())
    soft_ok = all(s <= 12.0 for s in slope_t.values()) and \
        all(s <= 4.0 + 2 for s in slope_a.values())
    details = {
        "degrees": {f"t={t},a={a}": v for (t, a), v in degs.items()},
        "slope_vs_t_plus_1": {str(k): v for k, v in slope_t.items()},
        "slope_vs_inv_alpha": {str(k): v for k, v in slope_a.items()},
        "hard_ok": hard_ok, "soft_ok": soft_ok,
    }
    _write_report(out_dir, "criterion_3.json", details)
    return CriterionResult(3, "degree growth within the theorem shape",
                           hard_ok, details, time.time() - t0)


def criterion_4(out_dir=None) -> CriterionResult:
    """Identity suite: Chebyshev, Hermite and Gaussian-moment identities."""
    t0 = time.time()
    checks = {}
    rng = np.random.default_rng(MASTER_SEED)
    # Chebyshev cosine identity
    worst = 0.0
    for _ in range(200):
        m = int(rng.integers(1, 26))
        th = float(rng.random() * math.pi)
        v = float(evaluate(chebyshev(m), math.cos(th)))
        worst = max(worst, abs(v - math.cos(m * th)))
    checks["cheb_cosine_max_err"] = worst
    ok = worst <= 1e-12
    # growth bound |T_m(x)| <= (2|x|)^m on random |x| in [1, 3]
    grow_ok = True
    for _ in range(200):
        m = int(rng.integers(1, 16))
        x = float(1 + 2 * rng.random())
        grow_ok &= abs(float(evaluate(chebyshev(m), x))) <= (2 * x) ** m + 1e-9
    checks["growth_bound_ok"] = grow_ok
    ok &= grow_ok
    # T_m'(0) sign law for odd m
    sign_ok = all(
        float(evaluate(chebyshev_over_x(m), 0)) == (-1) ** ((m - 1) // 2) * m
        for m in range(1, 26, 2))
    checks["deriv_sign_law_ok"] = sign_ok
    ok &= sign_ok
    # sine bound |sin(m th)| <= m |sin th|
    sine_ok = True
    for _ in range(1000):
        m = int(rng.integers(1, 40))
        th = float((rng.random() - 0.5) * 20)
        sine_ok &= abs(math.sin(m * th)) <= m * abs(math.sin(th)) + 1e-12
    checks["sine_bound_ok"] = sine_ok
    ok &= sine_ok
    # Hermite orthonormality in extended precision
    herm_worst = 0.0
    hs = [hermite_normalized(i) for i in range(9)]
    for i in range(9):
        for j in range(i, 9):
            e = float(gaussian_expectation(hs[i] * hs[j]))
            target = 1.0 if i == j else 0.0
            herm_worst = max(herm_worst, abs(e - target))
    checks["hermite_orthonormality_err"] = herm_worst
    ok &= herm_worst <= 1e-20
    # Gaussian double-factorial moments
    mom_ok = all(float(gaussian_moment(2 * i)) ==
                 float(np.prod(np.arange(1, 2 * i, 2), dtype=float))
                 for i in range(0, 12))
    checks["double_factorial_ok"] = mom_ok
    ok &= mom_ok
    _write_report(out_dir, "criterion_4.json", checks)
    return CriterionResult(4, "identity suite (Chebyshev / Hermite / moments)",
                           ok, checks, time.time() - t0)


# ---------------------------------------------------------------------------
# criteria 5 + 6: completeness and soundness at desk scale

COMPLETENESS = {
    "d": 4, "eta": 0.2, "rate": 0.2, "gamma_star": 0.3, "epsilon": 0.05,
    "N": 50000, "trials": 20, "opt_dirs": 400,
}


def _planted_target(d: int, gamma_star: float, seed: int) -> Halfspace:
    g = substream(seed, 7)
    v = g.standard_normal(d)
    v /= np.linalg.norm(v)
    return Halfspace(v, gaussian_bias_threshold(gamma_star))


def completeness_trial(trial: int, rate: float, out: dict) -> dict:
    cfg = COMPLETENESS
    seed = MASTER_SEED + 1000 + trial
    target = _planted_target(cfg["d"], cfg["gamma_star"], seed)
    params = schedule(cfg["epsilon"], 0.1, cfg["eta"], cfg["gamma_star"],
                      overrides=DESK_PROFILE, d=cfg["d"])
    ds1 = make_massart_dataset(cfg["d"], cfg["N"], seed * 2 + 1, target,
                               cfg["eta"], ("constant", rate))
    ds2 = make_massart_dataset(cfg["d"], cfg["N"], seed * 2 + 2, target,
                               cfg["eta"], ("constant", rate))
    rep = run_tester(oracle_learner, ds1, ds2, params)
    row = {"trial": trial, "verdict": rep.verdict,
           "cause": rep.reject_cause.kind if rep.reject_cause else None,
           "empirical_error": rep.empirical_error}
    if rep.verdict == "Accept":
        opt = opt_error_bruteforce(ds2, cfg["gamma_star"],
                                   n_dirs=cfg["opt_dirs"], seed=seed)
        row["opt_reference"] = opt
        row["excess"] = rep.empirical_error - opt
    return row


def criterion_5(out_dir=None) -> CriterionResult:
    t0 = time.time()
    rows = [completeness_trial(i, COMPLETENESS["rate"], {})
            for i in range(COMPLETENESS["trials"])]
    accepts = [r for r in rows if r["verdict"] == "Accept"]
    accept_ok = len(accepts) >= 18
    err_ok = all(r["excess"] <= 0.05 for r in accepts)
    details = {"trials": rows, "accept_count": len(accepts),
               "accept_ok": accept_ok, "error_clause_ok": err_ok}
    _write_report(out_dir, "criterion_5.json", details)
    return CriterionResult(
        5, "completeness at desk scale (accept rate and excess error)",
        accept_ok and err_ok, details, time.time() - t0)


SOUNDNESS_PROFILE = dict(DESK_PROFILE)
SOUNDNESS_PROFILE["tau_p"] = 0.01


def _central_slice(params, constant_sign_below: Optional[float] = None):
    """Deterministic designated slice: max Gaussian mass interior slice,
    optionally required to sit strictly below a threshold."""
    slices = build_slices(params.epsilon, params.Delta_slice,
                          params.range_constant)
    best = None
    for s in slices:
        if not (math.isfinite(s.lo) and math.isfinite(s.hi)):
            continue
        if constant_sign_below is not None and s.hi > constant_sign_below:
            continue
        mass = slice_gaussian_mass(s)
        if best is None or mass > best[0] + 1e-15:
            best = (mass, s)
    return best[1]


def soundness_trial(kind: str, trial: int) -> dict:
    cfg = COMPLETENESS
    seed = MASTER_SEED + 5000 + trial
    params = schedule(cfg["epsilon"], 0.1, cfg["eta"], cfg["gamma_star"],
                      overrides=SOUNDNESS_PROFILE, d=cfg["d"])
    target = _planted_target(cfg["d"], cfg["gamma_star"], seed)
    tgt_json = {"v": [float(c) for c in target.v], "t": float(target.t)}
    if kind == "slice_mass_shift":
        s = _central_slice(params)
        adv = adversary(kind, dict(
            d=cfg["d"], n=cfg["N"], slice_lo=s.lo, slice_hi=s.hi,
            shift=5 * params.tau_p, target=tgt_json), seed * 2 + 2)
    elif kind == "orthogonal_skew":
        s = _central_slice(params)
        adv = adversary(kind, dict(
            d=cfg["d"], n=cfg["N"], slice_lo=s.lo, slice_hi=s.hi,
            dev=5 * params.tau_m, coord=0, target=tgt_json), seed * 2 + 2)
    else:
        s = _central_slice(params, constant_sign_below=target.t)
        adv = adversary(kind, dict(
            d=cfg["d"], n=cfg["N"], slice_lo=s.lo, slice_hi=s.hi,
            eps=params.epsilon, eta=cfg["eta"], base_rate=0.05,
            target=tgt_json), seed * 2 + 2)
    phase1 = make_massart_dataset(cfg["d"], cfg["N"], seed * 2 + 1, target,
                                  cfg["eta"], ("constant", 0.05))
    rep = run_tester(oracle_learner, phase1, adv, params)
    expected = {"slice_mass_shift": "mass", "orthogonal_skew": "moment",
                "noise_excess": "certificate"}[kind]
    return {"trial": trial, "kind": kind, "verdict": rep.verdict,
            "cause": rep.reject_cause.kind if rep.reject_cause else None,
            "cause_match": (rep.reject_cause is not None
                            and rep.reject_cause.kind == expected)}


def criterion_6(out_dir=None) -> CriterionResult:
    t0 = time.time()
    details = {}
    passed = True
    for kind in ("slice_mass_shift", "orthogonal_skew", "noise_excess"):
        rows = [soundness_trial(kind, i) for i in range(20)]
        rejects = sum(r["verdict"] == "Reject" for r in rows)
        matches = sum(r["cause_match"] for r in rows)
        ok = rejects >= 18 and matches >= 16
        details[kind] = {"trials": rows, "rejects": rejects,
                         "cause_matches": matches, "ok": ok}
        passed &= ok
    _write_report(out_dir, "criterion_6.json", details)
    return CriterionResult(6, "soundness spot checks (three adversary kinds)",
                           passed, details, time.time() - t0)


def criterion_7(out_dir=None) -> CriterionResult:
    """Degree-0 certificate: scalar path equals 1x1 matrix path."""
    t0 = time.time()
    worst = 0.0
    for trial in range(50):
        seed = MASTER_SEED + 9000 + trial
        target = _planted_target(4, 0.3, seed)
        ds = make_massart_dataset(4, 2000, seed, target, 0.2,
                                  ("constant", 0.15))
        params = schedule(0.05, 0.1, 0.2, 0.3,
                          overrides={**DESK_PROFILE, "l": 0, "N": 2000,
                                     "min_count": 50}, d=4)
        w, tau = target.v, target.t
        proj = ds.X @ w
        U = orthobasis(w)
        Z = ds.X @ U
        _, H = hermite_design(Z, 0)
        hv = np.where(proj - tau >= 0, 1.0, -1.0)
        wts = ds.y * hv - params.beta + params.epsilon
        slices = build_slices(params.epsilon, params.Delta_slice)
        for s in slices:
            sel = (proj > s.lo) & (proj <= s.hi)
            if sel.sum() < 50:
                continue
            scalar = float(np.mean(wts[sel]))
            M = (H[:, sel] * wts[sel]) @ H[:, sel].T / sel.sum()
            lam = float(np.linalg.eigvalsh((M + M.T) / 2)[0])
            worst = max(worst, abs(scalar - lam))
    ok = worst <= 1e-12
    details = {"max_abs_difference": worst}
    _write_report(out_dir, "criterion_7.json", details)
    return CriterionResult(7, "degree-0 certificate scalar/matrix equivalence",
                           ok, details, time.time() - t0)


def criterion_8(out_dir=None) -> CriterionResult:
    """Moment-transfer: passing moments bound polynomial discrepancies."""
    t0 = time.time()
    d, l, n = 4, 3, 20000
    violations = 0
    worst_ratio = 0.0
    for trial in range(20):
        seed = MASTER_SEED + 11000 + trial
        target = _planted_target(d, 0.3, seed)
        ds = make_massart_dataset(d, n, seed, target, 0.2, ("constant", 0.1))
        params = schedule(0.05, 0.1, 0.2, 0.3,
                          overrides={**DESK_PROFILE, "N": n, "min_count": 1000},
                          d=d)
        w = target.v
        proj = ds.X @ w
        U = orthobasis(w)
        Z = ds.X @ U
        idx, H = hermite_design(Z, l)
        s = _central_slice(params)
        sel = (proj > s.lo) & (proj <= s.hi)
        moms = H[1:, sel].mean(axis=1)
        tau_hat = float(np.max(np.abs(moms)))
        if tau_hat >= params.tau_m:
            continue                      # not a passing distribution
        bound = tau_hat * d ** l * 1.1
        g = substream(seed, 13)
        for _ in range(20):
            a = g.standard_normal(len(idx) - 1)
            a /= np.linalg.norm(a)        # unit L2 via Hermite orthonormality
            disc = abs(float(a @ moms))
            worst_ratio = max(worst_ratio, disc / bound if bound > 0 else 0.0)
            if disc > bound:
                violations += 1
    ok = violations == 0
    details = {"violations": violations, "worst_ratio_to_bound": worst_ratio}
    _write_report(out_dir, "criterion_8.json", details)
    return CriterionResult(8, "moment-transfer discrepancy bound",
                           ok, details, time.time() - t0)


# the wrapper tester at rate = eta has certificate margin eps + psd_tol;
# psd_tol is sized so sampling dips (about 3 sigma ~ 0.08 at these counts)
# stay inside it while the gamma-too-large rejections (lambda ~ -1.5) fire
WRAPPER_PROFILE = {
    "l": 1, "N": 20000, "Delta_slice": 0.3, "tau_p": 0.02, "tau_m": 0.08,
    "psd_tol": 0.12, "min_count": 1500,
}


def wrapper_trial(gamma_star: float, trial: int) -> dict:
    seed = MASTER_SEED + 21000 + 97 * trial
    d, eta, epsilon = 4, 0.1, 0.05
    target = _planted_target(d, gamma_star, seed)

    def source(stream: int, n: int) -> Dataset:
        return make_massart_dataset(d, n, seed * 131 + stream, target, eta,
                                    ("constant", eta))

    try:
        hyp, trace = bias_agnostic(source, epsilon, eta, WRAPPER_PROFILE,
                                   seed, learner_kind="chow_sweep")
    except RuntimeError as e:
        return {"trial": trial, "gamma_star": gamma_star, "terminated": False,
                "error": str(e)}
    val = source(9999, 50000)
    err = float(np.mean(hyp.classify(val.X) != val.y))
    opt = opt_error_bruteforce(val, gamma_star, n_dirs=300, seed=seed)
    return {"trial": trial, "gamma_star": gamma_star, "terminated": True,
            "final_error": err, "opt_reference": opt,
            "excess": err - opt, "trace": trace.to_json_dict()}


def criterion_9(out_dir=None) -> CriterionResult:
    t0 = time.time()
    details = {}
    passed = True
    for gamma_star in (0.25, 0.1):
        rows = [wrapper_trial(gamma_star, i) for i in range(20)]
        terminated = all(r["terminated"] for r in rows)
        good = sum(1 for r in rows
                   if r["terminated"] and r["excess"] <= 0.05)
        ok = terminated and good >= 18
        details[str(gamma_star)] = {"trials": rows, "terminated_all": terminated,
                                    "good_error": good, "ok": ok}
        passed &= ok
    _write_report(out_dir, "criterion_9.json", details)
    return CriterionResult(9, "bias-agnostic wrapper terminates near-optimally",
                           passed, details, time.time() - t0)


def criterion_10(out_dir=None) -> CriterionResult:
    """Determinism: criteria 1, 5, 6, 9 reports are byte-identical on rerun."""
    t0 = time.time()
    import tempfile
    same = {}
    with tempfile.TemporaryDirectory() as td:
        d1 = Path(td) / "run1"
        d2 = Path(td) / "run2"
        global _PAIR_CACHE
        for cid, fn in ((1, criterion_1), (5, criterion_5),
                        (6, criterion_6), (9, criterion_9)):
            _PAIR_CACHE = {}
            fn(out_dir=d1)
            _PAIR_CACHE = {}
            fn(out_dir=d2)
            f = f"criterion_{cid}.json"
            same[f] = (d1 / f).read_bytes() == (d2 / f).read_bytes()
    ok = all(same.values())
    details = {"byte_identical": same}
    _write_report(out_dir, "criterion_10.json", details)
    return CriterionResult(10, "determinism of report files",
                           ok, details, time.time() - t0)


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
    5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
    9: criterion_9, 10: criterion_10,
}

TITLES = {
    1: "sandwiching soundness on the (t, alpha) grid",
    2: "multiplicative gap <= alpha with dual-route agreement",
    3: "degree growth within the theorem shape",
    4: "identity suite (Chebyshev / Hermite / moments)",
    5: "completeness at desk scale",
    6: "soundness spot checks",
    7: "degree-0 certificate equivalence",
    8: "moment-transfer discrepancy bound",
    9: "bias-agnostic wrapper",
    10: "determinism of report files",
}


def run_criterion(cid: int, out_dir=None) -> CriterionResult:
    return CRITERIA[cid](out_dir=out_dir)


def run_all(out_dir=None, ids=None) -> list:
    results = []
    for cid in sorted(ids or CRITERIA):
        res = run_criterion(cid, out_dir=out_dir)
        print(res.line(), flush=True)
        results.append(res)
    return results
