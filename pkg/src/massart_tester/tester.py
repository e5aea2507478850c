"""The tester-learner: parameter schedule, slice decomposition, orthogonal
basis, slice mass test, orthogonal Hermite moment-matching test, PSD
non-negativity certificate, and the accept/reject driver.

The worst-case schedule is astronomically infeasible at desk scale; the
schedule computes those values for reporting and takes explicit overrides
for the effective parameters (see TesterParams.paper_exact).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from .data import Dataset, Halfspace, _phi_float
from .poly import enumerate_multi_indices, MULTI_INDEX_CAP_DEFAULT

__all__ = [
    "TesterParams", "Slice", "TestReport", "RejectCause",
    "schedule", "build_slices", "orthobasis", "hermite_design",
    "slice_mass_test", "moment_test", "nonneg_certificate", "run_tester",
    "DESK_PROFILE",
]

N_CAP_DEFAULT = 10_000_000


@dataclass(frozen=True)
class TesterParams:
    epsilon: float
    delta: float
    eta: float
    gamma: float
    beta: float
    l: int
    eps_prime: float
    N: int
    Delta_slice: float
    tau_p: float
    tau_m: float
    psd_tol: float
    schedule_constant: float
    min_count: int = 50
    range_constant: float = 1.0
    paper_exact: dict = field(default_factory=dict)


def schedule(epsilon: float, delta: float, eta: float, gamma: float,
             overrides: Optional[dict] = None, d: int = 4,
             schedule_constant: float = 2.0,
             n_cap: int = N_CAP_DEFAULT,
             dim_cap: int = MULTI_INDEX_CAP_DEFAULT) -> TesterParams:
    """Input clamps plus the degree/sample/tolerance schedule.

    Clamps: gamma <- max(gamma, epsilon); beta <- 1 - 2 eta;
    gamma <- min(gamma, beta); epsilon <- min(epsilon, beta / 2).
    The worst-case schedule values are echoed in paper_exact (as log10
    where they overflow); every effective field is overridable.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1)")
    if not 0 <= eta < 0.5:
        raise ValueError("eta must be in [0, 1/2)")
    if not 0 < gamma <= 0.5:
        raise ValueError("gamma must be in (0, 1/2]")
    overrides = dict(overrides or {})
    C = schedule_constant
    gamma_c = max(gamma, epsilon)
    beta = 1 - 2 * eta
    gamma_c = min(gamma_c, beta)
    eps_c = min(epsilon, beta / 2)

    l_exact = C * math.log(1 / gamma_c) ** 3 * math.log(1 / beta) ** 2 / beta ** 2 \
        if beta < 1 else C * math.log(1 / gamma_c) ** 3 * 0.0
    l_paper = max(1, math.ceil(l_exact)) if l_exact > 0 else 1
    log10_N = C * l_paper * math.log10(d) + 2 * C * math.log10(1 / eps_c)
    log10_tau = C * math.log10(eps_c) - l_paper * math.log10(d)
    paper_exact = {
        "l": l_paper,
        "eps_prime_log10": l_paper * math.log10(1 / 3) + C * math.log10(eps_c),
        "N_log10": log10_N,
        "Delta_slice": eps_c ** 2,
        "tau_p_log10": log10_tau,
        "tau_m_log10": log10_tau,
        "C": C,
    }

    eff = {
        "l": overrides.get("l", l_paper),
        "eps_prime": overrides.get("eps_prime", eps_c / 3),
        "N": overrides.get("N"),
        "Delta_slice": overrides.get("Delta_slice", eps_c ** 2),
        "tau_p": overrides.get("tau_p"),
        "tau_m": overrides.get("tau_m"),
        "psd_tol": overrides.get("psd_tol", eps_c),
        "min_count": overrides.get("min_count", 50),
        "range_constant": overrides.get("range_constant", 1.0),
    }
    if eff["N"] is None:
        if log10_N > math.log10(n_cap):
            raise ValueError(
                f"schedule N = 10^{log10_N:.1f} exceeds the sample cap {n_cap}; "
                "supply an N override for desk-scale runs")
        eff["N"] = int(round(10 ** log10_N))
    if eff["tau_p"] is None:
        eff["tau_p"] = 10 ** log10_tau
    if eff["tau_m"] is None:
        eff["tau_m"] = 10 ** log10_tau
    n_idx = math.comb(d - 1 + eff["l"], eff["l"])
    if n_idx > dim_cap:
        raise ValueError(
            f"moment matrix dimension {n_idx} exceeds cap {dim_cap}; "
            "lower l or raise the cap")
    return TesterParams(
        epsilon=eps_c, delta=delta, eta=eta, gamma=gamma_c, beta=beta,
        l=int(eff["l"]), eps_prime=float(eff["eps_prime"]), N=int(eff["N"]),
        Delta_slice=float(eff["Delta_slice"]), tau_p=float(eff["tau_p"]),
        tau_m=float(eff["tau_m"]), psd_tol=float(eff["psd_tol"]),
        schedule_constant=C, min_count=int(eff["min_count"]),
        range_constant=float(eff["range_constant"]), paper_exact=paper_exact,
    )


# desk-scale profile used by the experiment harness and acceptance suite
DESK_PROFILE = {
    "l": 3, "N": 50000, "Delta_slice": 0.25,
    "tau_p": 0.02, "tau_m": 0.05, "psd_tol": 0.05, "min_count": 4500,
}


@dataclass(frozen=True)
class Slice:
    """Membership: x in S iff lo < w.x <= hi (lo = -inf and hi = +inf at the ends)."""
    lo: float
    hi: float
    index: int


def build_slices(epsilon: float, Delta_slice: float,
                 range_constant: float = 1.0) -> list:
    """Disjoint partition of R into n+1 half-open slices.

    Breakpoints start at -C sqrt(log(1/eps)) and advance by Delta; the
    first slice is (-inf, s_1], the last (s_n, inf).
    """
    if Delta_slice <= 0:
        raise ValueError("Delta_slice must be positive")
    reach = range_constant * math.sqrt(math.log(1 / epsilon))
    n = 2 * math.ceil(reach / Delta_slice)
    s1 = -reach
    breaks = [s1 + i * Delta_slice for i in range(n)]
    slices = [Slice(lo=-math.inf, hi=breaks[0], index=1)]
    for i in range(1, n):
        slices.append(Slice(lo=breaks[i - 1], hi=breaks[i], index=i + 1))
    slices.append(Slice(lo=breaks[-1], hi=math.inf, index=n + 1))
    return slices


def orthobasis(w: np.ndarray) -> np.ndarray:
    """Deterministic Householder complement of the unit vector w.

    Returns U (d x (d-1)) with U^T U = I and U^T w = 0, reproducible
    across runs.
    """
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1.0) > 1e-12:
        raise ValueError("w must be unit norm within 1e-12")
    d = len(w)
    e1 = np.zeros(d)
    e1[0] = 1.0
    sign = 1.0 if w[0] >= 0 else -1.0
    u = w + sign * e1
    u = u / np.linalg.norm(u)
    H = np.eye(d) - 2.0 * np.outer(u, u)
    return H[:, 1:]


_FACT_SQRT = [math.sqrt(math.factorial(i)) for i in range(32)]


def hermite_design(Z: np.ndarray, l: int) -> tuple:
    """Rows of normalized Hermite values He_alpha(Z) for all |alpha| <= l.

    Returns (indices, matrix) with matrix shape (n_indices, n_samples),
    graded lexicographic row order; row 0 is the constant.
    """
    n, dm1 = Z.shape
    idx = enumerate_multi_indices(dm1, l)
    tables = []
    for j in range(dm1):
        col = Z[:, j]
        vals = [np.ones(n), col.copy()]
        for deg in range(1, l):
            vals.append(col * vals[deg] - deg * vals[deg - 1])
        tables.append([v / _FACT_SQRT[i] for i, v in enumerate(vals)])
    rows = np.empty((len(idx), n))
    for r, alpha in enumerate(idx):
        acc = np.ones(n)
        for j, a in enumerate(alpha):
            if a:
                acc = acc * tables[j][a]
        rows[r] = acc
    return idx, rows


def slice_gaussian_mass(s: Slice) -> float:
    hi = _phi_float(s.hi) if math.isfinite(s.hi) else 1.0
    lo = _phi_float(s.lo) if math.isfinite(s.lo) else 0.0
    return hi - lo


def slice_mass_test(proj: np.ndarray, slices: list, tau_p: float) -> list:
    """Per-slice empirical vs Gaussian mass; deviation >= tau_p fails."""
    n = len(proj)
    out = []
    for s in slices:
        cnt = int(np.sum((proj > s.lo) & (proj <= s.hi)))
        gmass = slice_gaussian_mass(s)
        dev = abs(cnt / n - gmass)
        out.append({
            "slice": s, "count": cnt, "empirical_mass": cnt / n,
            "gaussian_mass": gmass, "deviation": dev, "fail": dev >= tau_p,
        })
    return out


def moment_test(H_rows: np.ndarray, sel: np.ndarray, l: int, tau_m: float,
                min_count: int) -> dict:
    """Conditional Hermite moments against their Gaussian value (zero).

    H_rows are the design rows over the full sample; sel picks the slice.
    Slices below min_count are skipped and flagged.
    """
    cnt = int(np.sum(sel))
    if cnt < min_count:
        return {"skipped": True, "count": cnt, "max_dev": 0.0, "fail": False,
                "worst_alpha": None}
    moms = H_rows[1:, sel].mean(axis=1)   # skip the constant row
    worst = int(np.argmax(np.abs(moms)))
    max_dev = float(np.abs(moms[worst]))
    return {"skipped": False, "count": cnt, "max_dev": max_dev,
            "fail": max_dev >= tau_m, "worst_alpha": worst + 1}


EIG_RESIDUAL_TOL = 1e-8


def nonneg_certificate(H_rows: np.ndarray, sel: np.ndarray, weights: np.ndarray,
                       psd_tol: float, min_count: int) -> dict:
    """Minimal eigenvalue of the weighted conditional moment matrix.

    M = E[H H^T (y h(x) - beta + eps) | slice]; passes iff
    lambda_min >= -psd_tol.  The minimal eigenpair is validated by a
    residual check since the verdict hinges on the sign.
    """
    cnt = int(np.sum(sel))
    if cnt < min_count:
        return {"skipped": True, "count": cnt, "min_eigenvalue": 0.0,
                "fail": False}
    Hs = H_rows[:, sel]
    ws = weights[sel]
    M = (Hs * ws) @ Hs.T / cnt
    M = (M + M.T) / 2
    eigvals, eigvecs = np.linalg.eigh(M)
    lam = float(eigvals[0])
    q = eigvecs[:, 0]
    resid = float(np.linalg.norm(M @ q - lam * q))
    scale = float(np.linalg.norm(M, 2))
    if scale > 0 and resid > EIG_RESIDUAL_TOL * scale:
        raise ArithmeticError(
            f"eigensolver residual {resid:.3e} exceeds {EIG_RESIDUAL_TOL} * |M|")
    return {"skipped": False, "count": cnt, "min_eigenvalue": lam,
            "fail": lam < -psd_tol}


@dataclass
class RejectCause:
    kind: str              # "mass" | "moment" | "certificate"
    slice_index: int
    detail: str

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "slice_index": self.slice_index,
                "detail": self.detail}


@dataclass
class TestReport:
    verdict: str                          # "Accept" | "Reject"
    hypothesis: Optional[dict]
    reject_cause: Optional[RejectCause]
    per_slice: list
    empirical_error: float
    opt_reference: Optional[float] = None

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "hypothesis": self.hypothesis,
            "reject_cause": self.reject_cause.to_json_dict() if self.reject_cause else None,
            "per_slice": self.per_slice,
            "empirical_error": self.empirical_error,
            "opt_reference": self.opt_reference,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)


def run_tester(learner: Callable[[Dataset], Halfspace],
               data_phase1: Dataset, data_phase2: Dataset,
               params: TesterParams) -> TestReport:
    """One pass of the tester-learner over disjoint phase-1/phase-2 samples.

    The learner fits on phase 1; the three tests run on phase 2 per slice.
    All slices are evaluated and the reject cause is the first failure in
    canonical scan order (slice index ascending, then mass, moment,
    certificate), so parallel and serial evaluation yield identical
    reports.
    """
    if data_phase1.n == 0 or data_phase2.n == 0:
        raise ValueError("both phases need samples")
    if data_phase1.d != data_phase2.d:
        raise ValueError("phase dimensions differ")
    h = learner(data_phase1)
    w, tau = h.v, h.t
    U = orthobasis(w)
    X2, y2 = data_phase2.X, data_phase2.y.astype(np.float64)
    proj = X2 @ w
    Z = X2 @ U
    slices = build_slices(params.epsilon, params.Delta_slice,
                          params.range_constant)
    mass_rows = slice_mass_test(proj, slices, params.tau_p)
    _, H_rows = hermite_design(Z, params.l)
    hvals = np.where(proj - tau >= 0, 1.0, -1.0)
    weights = y2 * hvals - params.beta + params.epsilon
    per_slice = []
    cause = None
    for s, mrow in zip(slices, mass_rows):
        sel = (proj > s.lo) & (proj <= s.hi)
        mom = moment_test(H_rows, sel, params.l, params.tau_m, params.min_count)
        cert = nonneg_certificate(H_rows, sel, weights, params.psd_tol,
                                  params.min_count)
        per_slice.append({
            "slice": {"lo": s.lo, "hi": s.hi, "index": s.index},
            "count": mrow["count"],
            "empirical_mass": mrow["empirical_mass"],
            "gaussian_mass": mrow["gaussian_mass"],
            "mass_deviation": mrow["deviation"],
            "max_moment_dev": mom["max_dev"],
            "moment_skipped": mom["skipped"],
            "min_eigenvalue": cert["min_eigenvalue"],
            "certificate_skipped": cert["skipped"],
        })
        if cause is None:
            if mrow["fail"]:
                cause = RejectCause("mass", s.index,
                                    f"|{mrow['empirical_mass']:.6f} - "
                                    f"{mrow['gaussian_mass']:.6f}| >= {params.tau_p}")
            elif mom["fail"]:
                cause = RejectCause("moment", s.index,
                                    f"max |m_hat| = {mom['max_dev']:.6f} >= {params.tau_m}")
            elif cert["fail"]:
                cause = RejectCause("certificate", s.index,
                                    f"lambda_min = {cert['min_eigenvalue']:.6f} "
                                    f"< -{params.psd_tol}")
    preds = np.where(proj - tau >= 0, 1, -1)
    emp_err = float(np.mean(preds != data_phase2.y))
    hyp = {"v": [float(c) for c in w], "t": float(tau)}
    if cause is not None:
        return TestReport(verdict="Reject", hypothesis=None, reject_cause=cause,
                          per_slice=per_slice, empirical_error=emp_err)
    return TestReport(verdict="Accept", hypothesis=hyp, reject_cause=None,
                      per_slice=per_slice, empirical_error=emp_err)
