"""Pluggable proper learners for the tester, and the bias-agnostic wrapper.

The quasi-polynomial worst-case subroutine is consumed as a black box by
the algorithm, so it is represented by an interface with two desk-scale
implementations (an oracle that returns the planted target, and a
Chow-parameter sweep) plus an external hook that reads a hypothesis from
JSON.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .data import (Dataset, Halfspace, gaussian_bias_threshold,
                   make_massart_dataset, substream)

__all__ = [
    "LearnerSpec", "get_learner", "oracle_learner", "chow_sweep_learner",
    "external_learner", "bias_agnostic", "BiasAgnosticTrace",
    "DegenerateDataError",
]


class DegenerateDataError(RuntimeError):
    """Chow vector too small to define a direction."""


@dataclass(frozen=True)
class LearnerSpec:
    kind: str                    # "oracle" | "chow_sweep" | "external"
    gamma: float = 0.5
    epsilon_prime: float = 0.01
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.gamma <= 0.5:
            raise ValueError("gamma must be in (0, 1/2]")
        if self.kind not in ("oracle", "chow_sweep", "external"):
            raise ValueError(f"unknown learner kind {self.kind}")


def oracle_learner(data: Dataset) -> Halfspace:
    """Returns the planted target exactly; isolates the tester from learner quality."""
    target = data.planted_target()
    if target is None:
        raise ValueError("oracle learner requires a planted target in provenance")
    return target


def chow_sweep_learner(data: Dataset, gamma: float) -> Halfspace:
    """Chow-parameter direction plus an error-minimizing threshold sweep.

    Direction: normalize(sum_i y_i x_i).  Threshold: the empirical-error
    minimizer over projection midpoints (plus the clamped bias-window
    endpoints), restricted to positions whose Gaussian bias is >= gamma;
    ties break toward smaller |tau|.
    """
    if data.n < 100:
        raise ValueError("chow_sweep needs n >= 100")
    X, y = data.X, data.y.astype(np.float64)
    chow = X.T @ y
    norm = float(np.linalg.norm(chow))
    if norm < 1e-9 * data.n:
        raise DegenerateDataError("Chow vector below 1e-9 * n")
    w = chow / norm
    proj = X @ w
    order = np.argsort(proj, kind="stable")
    ps = proj[order]
    ys = data.y[order].astype(np.int64)
    n = data.n
    window = gaussian_bias_threshold(gamma)
    cum_plus = np.cumsum(ys == 1)
    n_plus = int(cum_plus[-1])
    mids = (ps[:-1] + ps[1:]) / 2
    valid = (np.abs(mids) <= window) & (ps[:-1] < ps[1:])
    taus = np.concatenate([mids[valid], [-window, window]])
    pos = np.searchsorted(ps, taus, side="right")
    left_plus = np.where(pos > 0, cum_plus[np.maximum(pos - 1, 0)], 0)
    right_minus = (n - pos) - (n_plus - left_plus)
    err = (left_plus + right_minus) / n
    best_err = float(np.min(err))
    ties = np.flatnonzero(err <= best_err + 1e-15)
    tau = float(taus[ties[np.argmin(np.abs(taus[ties]))]])
    return Halfspace(w, tau)


def external_learner(path: Path) -> Callable[[Dataset], Halfspace]:
    """Hook: read a fixed hypothesis {v: [...], t: ...} from JSON."""
    spec = json.loads(Path(path).read_text())
    v = np.array(spec["v"], dtype=float)
    v = v / np.linalg.norm(v)
    h = Halfspace(v, float(spec["t"]))
    return lambda data: h


def get_learner(spec: LearnerSpec) -> Callable[[Dataset], Halfspace]:
    if spec.kind == "oracle":
        return oracle_learner
    if spec.kind == "chow_sweep":
        return lambda data: chow_sweep_learner(data, spec.gamma)
    return external_learner(spec.config["path"])


# ---------------------------------------------------------------------------
# bias-agnostic wrapper

@dataclass
class BiasAgnosticTrace:
    entries: list = field(default_factory=list)   # {i, gamma, verdict, err}

    def to_json_dict(self) -> list:
        return self.entries


def bias_agnostic(data_source: Callable[[int, int], Dataset],
                  epsilon: float, eta: float, tester_profile: dict,
                  seed: int, learner_kind: str = "chow_sweep",
                  max_iter: int = 40, delta: float = 0.1):
    """Geometric bias search: run the tester-learner at gamma_i = 1/2^i.

    data_source(stream, n) must return a fresh dataset per call.  On each
    acceptance a validation error is estimated on an additional fresh
    sample of ceil(8/epsilon^2) points; the loop stops at the first k >= 2
    accepted indices whose consecutive validation errors differ by at most
    epsilon/2, returning the last accepted hypothesis and the full trace.
    """
    from .tester import schedule, run_tester

    trace = BiasAgnosticTrace()
    accepted: list = []            # (gamma, err, Halfspace)
    n_val = math.ceil(8 / epsilon ** 2)
    stream = 0
    for i in range(max_iter + 1):
        gamma_i = min(1.0 / 2 ** i, 0.5)
        params = schedule(epsilon, delta, eta, gamma_i,
                          overrides=tester_profile)
        spec = LearnerSpec(kind=learner_kind, gamma=params.gamma)
        learner = get_learner(spec)
        phase1 = data_source(stream, params.N)
        phase2 = data_source(stream + 1, params.N)
        stream += 3
        report = run_tester(learner, phase1, phase2, params)
        if report.verdict == "Accept":
            hyp = Halfspace(np.array(report.hypothesis["v"]),
                            report.hypothesis["t"])
            val = data_source(stream, n_val)
            stream += 1
            preds = hyp.classify(val.X)
            err = float(np.mean(preds != val.y))
            trace.entries.append({"i": i, "gamma": gamma_i,
                                  "verdict": "Accept", "err": err})
            if accepted:
                prev_err = accepted[-1][1]
                if prev_err - err <= epsilon / 2:
                    accepted.append((gamma_i, err, hyp))
                    return hyp, trace
            accepted.append((gamma_i, err, hyp))
        else:
            trace.entries.append({"i": i, "gamma": gamma_i,
                                  "verdict": "Reject", "err": None})
    raise RuntimeError(
        f"bias-agnostic search hit the iteration cap with "
        f"{len(accepted)} acceptance(s)")
