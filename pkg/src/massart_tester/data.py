"""Synthetic data: Gaussian sampling, Massart label oracles, adversarial
marginals for soundness experiments, and a brute-force OPT oracle.

Every generator is driven by a descriptor dict plus a 64-bit seed through
a counter-based RNG (Philox), so datasets are bit-reproducible and
parallel substreams match serial generation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.random import Philox, Generator

import gmpy2

from .precision import mpfr, workprec

__all__ = [
    "Halfspace", "MassartModel", "Dataset",
    "rng_from_seed", "substream",
    "sample_gaussian", "massart_labels", "bias_of", "gaussian_bias_threshold",
    "make_massart_dataset", "adversary", "generate_dataset",
    "opt_error_bruteforce", "save_dataset", "load_dataset", "export_csv",
]


def rng_from_seed(seed: int) -> Generator:
    return Generator(Philox(key=np.uint64(seed)))


def substream(seed: int, index: int) -> Generator:
    """Independent stream `index` of the master seed (Philox jumps)."""
    return Generator(Philox(key=np.uint64(seed)).jumped(index))


@dataclass(frozen=True)
class Halfspace:
    """Unit direction v and threshold t; classify(x) = sign(v.x - t), sign(0) = +1."""
    v: np.ndarray
    t: float

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("direction must be unit norm within 1e-12")
        object.__setattr__(self, "v", v)

    def margins(self, X: np.ndarray) -> np.ndarray:
        return X @ self.v - self.t

    def classify(self, X: np.ndarray) -> np.ndarray:
        m = self.margins(X)
        out = np.where(m >= 0, 1, -1)
        return out.astype(np.int8)


def _phi_float(t: float) -> float:
    return 0.5 * math.erfc(-t / math.sqrt(2))


def bias_of(h: Halfspace) -> float:
    """min label probability under N^d: min(Phi(t), 1 - Phi(t)).

    Rotation invariance reduces to one dimension; the CDF is the
    extended-precision erfc, validated against the quadrature oracle.
    """
    with workprec(256):
        p = gmpy2.erfc(mpfr(h.t) / gmpy2.sqrt(mpfr(2))) / 2   # Pr[v.x - t >= 0]
        return float(min(p, 1 - p))


def gaussian_bias_threshold(gamma: float) -> float:
    """Largest |t| keeping a halfspace gamma-biased (gamma in (0, 1/2])."""
    if gamma >= 0.5:
        return 0.0
    # invert Phi(t) = 1 - gamma by bisection on the validated CDF
    lo, hi = 0.0, 40.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if _phi_float(mid) < 1 - gamma:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


_bias_window = gaussian_bias_threshold


@dataclass(frozen=True)
class MassartModel:
    """Flip-rate oracle eta(x) <= eta_bound over a target halfspace.

    Profiles: ("constant", r); ("margin",) with r(x) = eta_bound *
    exp(-|v.x - t|); ("region", ((lo, hi, r), ...)) with per-margin-band
    rates and rate 0 outside the listed bands.
    """
    target: Halfspace
    eta_bound: float
    profile: tuple = ("constant", 0.0)

    def __post_init__(self):
        if not 0 <= self.eta_bound < 0.5:
            raise ValueError("eta_bound must be in [0, 1/2)")
        kind = self.profile[0]
        if kind == "constant":
            if not 0 <= self.profile[1] <= self.eta_bound:
                raise ValueError("constant rate must be <= eta_bound")
        elif kind == "region":
            for lo, hi, r in self.profile[1]:
                if not 0 <= r <= self.eta_bound:
                    raise ValueError("region rate must be <= eta_bound")
        elif kind != "margin":
            raise ValueError(f"unknown profile kind {kind}")

    def eta_profile(self, X: np.ndarray) -> np.ndarray:
        kind = self.profile[0]
        if kind == "constant":
            return np.full(len(X), float(self.profile[1]))
        m = self.target.margins(X)
        if kind == "margin":
            return self.eta_bound * np.exp(-np.abs(m))
        rates = np.zeros(len(X))
        for lo, hi, r in self.profile[1]:
            rates[(m > lo) & (m <= hi)] = r
        return rates


@dataclass
class Dataset:
    """Immutable sample with its generating descriptor.

    Regenerating from (provenance, seed) reproduces X, y bit-exactly.
    """
    X: np.ndarray
    y: np.ndarray
    seed: int
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def planted_target(self) -> Optional[Halfspace]:
        t = self.provenance.get("target")
        if t is None:
            return None
        return Halfspace(np.array(t["v"], dtype=float), float(t["t"]))


def sample_gaussian(d: int, n: int, seed: int) -> np.ndarray:
    """n x d i.i.d. standard normal entries, deterministic per (d, n, seed)."""
    if d < 2 or n < 1:
        raise ValueError("need d >= 2 and n >= 1")
    return rng_from_seed(seed).standard_normal((n, d))


def massart_labels(X: np.ndarray, model: MassartModel, seed: int) -> np.ndarray:
    """Target labels flipped independently per row at rate eta(x)."""
    if X.shape[1] != len(model.target.v):
        raise ValueError("dimension mismatch between X and model target")
    clean = model.target.classify(X)
    rates = model.eta_profile(X)
    if np.any(rates > model.eta_bound + 1e-15):
        raise ValueError("eta profile exceeds eta_bound")
    flips = substream(seed, 1).random(len(X)) < rates
    return (clean * np.where(flips, -1, 1)).astype(np.int8)


def _target_from_descriptor(desc: dict, d: int) -> Halfspace:
    t = desc.get("target")
    if t is not None:
        return Halfspace(np.array(t["v"], dtype=float), float(t["t"]))
    # deterministic planted target from the seed
    g = substream(int(desc["seed"]), 7)
    v = g.standard_normal(d)
    v /= np.linalg.norm(v)
    gamma_star = desc.get("gamma_star")
    thr = _bias_window(gamma_star) if gamma_star is not None else 0.0
    return Halfspace(v, thr)


def make_massart_dataset(d: int, n: int, seed: int, target: Halfspace,
                         eta_bound: float, profile: tuple) -> Dataset:
    desc = {
        "generator": "gaussian_massart", "d": d, "n": n, "seed": seed,
        "eta_bound": eta_bound, "profile": _profile_json(profile),
        "target": {"v": list(map(float, target.v)), "t": float(target.t)},
    }
    X = sample_gaussian(d, n, seed)
    model = MassartModel(target, eta_bound, profile)
    y = massart_labels(X, model, seed)
    return Dataset(X=X, y=y, seed=seed, provenance=desc)


def _profile_json(profile: tuple):
    if profile[0] == "region":
        return ["region", [list(map(float, band)) for band in profile[1]]]
    return [profile[0]] + [float(x) for x in profile[1:]]


def _profile_from_json(p) -> tuple:
    if p[0] == "region":
        return ("region", tuple(tuple(band) for band in p[1]))
    return tuple([p[0]] + p[1:])


# ---------------------------------------------------------------------------
# adversarial generators

def adversary(kind: str, params: dict, seed: int) -> Dataset:
    """Planted violations for the three tests.

    slice_mass_shift: the w-coordinate is a two-point-contaminated mixture
    moving `shift` mass out of the designated slice.  orthogonal_skew: one
    orthogonal coordinate inside the designated slice gets an inflated
    variance so its He_2 moment deviates by `dev`.  noise_excess: the
    x-marginal is exactly Gaussian but labels inside the designated
    constant-sign slice flip at a rate driving E[y h(x) | slice] to
    beta - 3 eps.
    """
    if kind not in ("slice_mass_shift", "orthogonal_skew", "noise_excess"):
        raise ValueError(f"unknown adversary kind {kind}")
    desc = {"generator": kind, "seed": seed, **params}
    d, n = int(params["d"]), int(params["n"])
    target = _target_from_descriptor(desc, d)
    desc["target"] = {"v": list(map(float, target.v)), "t": float(target.t)}
    lo, hi = float(params["slice_lo"]), float(params["slice_hi"])
    g = rng_from_seed(seed)
    U = _orthobasis_np(target.v)

    if kind == "slice_mass_shift":
        shift = float(params["shift"])
        p_slice = _phi_float(hi) - _phi_float(lo)
        if shift > p_slice:
            raise ValueError(
                f"mass shift {shift} exceeds slice mass {p_slice:.4g}")
        delta = shift / p_slice
        z0 = g.standard_normal(n)
        zp = g.standard_normal((n, d - 1))
        u = substream(seed, 2).random(n)
        spike = float(params.get("spike", max(abs(lo), abs(hi)) + 4.0))
        in_slice = (z0 > lo) & (z0 <= hi)
        move = in_slice & (u < delta)
        signs = np.where(substream(seed, 3).random(n) < 0.5, 1.0, -1.0)
        z0 = np.where(move, signs * spike, z0)
        X = np.outer(z0, target.v) + zp @ U.T
        y = target.classify(X)
        return Dataset(X=X, y=y, seed=seed, provenance=desc)

    if kind == "orthogonal_skew":
        dev = float(params["dev"])
        coord = int(params.get("coord", 0))
        scale = math.sqrt(1.0 + math.sqrt(2.0) * dev)
        z0 = g.standard_normal(n)
        zp = g.standard_normal((n, d - 1))
        in_slice = (z0 > lo) & (z0 <= hi)
        zp[in_slice, coord] *= scale
        X = np.outer(z0, target.v) + zp @ U.T
        y = target.classify(X)
        return Dataset(X=X, y=y, seed=seed, provenance=desc)

    # noise_excess
    eps = float(params["eps"])
    eta = float(params["eta"])
    base_rate = float(params.get("base_rate", eta / 2))
    if not (lo >= target.t or hi <= target.t):
        raise ValueError("designated slice must be constant-sign for the target")
    beta = 1 - 2 * eta
    advantage = beta - 3 * eps          # planted E[y h | slice]
    rate_slice = (1 - advantage) / 2
    if rate_slice >= 1:
        raise ValueError("requested certificate deficit is unsatisfiable")
    X = sample_gaussian(d, n, seed)
    m = X @ target.v
    clean = target.classify(X)
    rates = np.full(n, base_rate)
    rates[(m > lo) & (m <= hi)] = rate_slice
    flips = substream(seed, 1).random(n) < rates
    y = (clean * np.where(flips, -1, 1)).astype(np.int8)
    return Dataset(X=X, y=y, seed=seed, provenance=desc)


def _orthobasis_np(w: np.ndarray) -> np.ndarray:
    # deterministic Householder complement (shared with tester.orthobasis)
    d = len(w)
    e1 = np.zeros(d)
    e1[0] = 1.0
    sign = 1.0 if w[0] >= 0 else -1.0
    u = w + sign * e1
    u = u / np.linalg.norm(u)
    H = np.eye(d) - 2.0 * np.outer(u, u)
    return H[:, 1:]


def generate_dataset(descriptor: dict) -> Dataset:
    """(Re-)create a dataset bit-exactly from its descriptor.

    A missing target is derived deterministically from the seed (and
    gamma_star when given), so descriptors stay self-contained.
    """
    kind = descriptor["generator"]
    if kind == "gaussian_massart":
        target = _target_from_descriptor(descriptor, int(descriptor["d"]))
        return make_massart_dataset(
            int(descriptor["d"]), int(descriptor["n"]), int(descriptor["seed"]),
            target, float(descriptor["eta_bound"]),
            _profile_from_json(descriptor["profile"]))
    params = {k: v for k, v in descriptor.items()
              if k not in ("generator", "seed")}
    return adversary(kind, params, int(descriptor["seed"]))


# ---------------------------------------------------------------------------
# brute-force OPT oracle

def opt_error_bruteforce(data: Dataset, gamma: float, n_dirs: int = 1000,
                         seed: int = 0) -> float:
    """Upper bound on OPT_gamma by random-direction + threshold sweep.

    Sweeps all threshold positions (projection midpoints plus the clamped
    bias-window endpoints) over n_dirs random unit directions plus the
    planted target direction when provenance exposes it; both orientations
    of each direction are covered.  Tight when the target is included.
    """
    X, y = data.X, data.y.astype(np.int64)
    n, d = X.shape
    g = substream(seed, 11)
    dirs = g.standard_normal((n_dirs, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    planted = data.planted_target()
    if planted is not None:
        dirs = np.vstack([planted.v, dirs])
    window = _bias_window(gamma)
    best = 1.0
    n_plus_total = int(np.sum(y == 1))
    for u in dirs:
        proj = X @ u
        order = np.argsort(proj, kind="stable")
        ps = proj[order]
        ys = y[order]
        cum_plus = np.cumsum(ys == 1)
        mids = (ps[:-1] + ps[1:]) / 2
        valid = (np.abs(mids) <= window) & (ps[:-1] < ps[1:])
        taus = np.concatenate([mids[valid], [-window, window]])
        # position = number of points strictly left of tau
        pos = np.searchsorted(ps, taus, side="right")
        left_plus = np.where(pos > 0, cum_plus[np.maximum(pos - 1, 0)], 0)
        right_minus = (n - pos) - (n_plus_total - left_plus)
        err = (left_plus + right_minus) / n
        cand = float(np.min(np.minimum(err, 1 - err)))
        best = min(best, cand)
    return best


# ---------------------------------------------------------------------------
# serialization

def save_dataset(data: Dataset, stem: Path) -> None:
    """Binary column-major float64 matrix (X then y) plus a JSON sidecar."""
    stem = Path(stem)
    payload = np.concatenate([
        np.asfortranarray(data.X, dtype="<f8").flatten(order="F"),
        data.y.astype("<f8"),
    ])
    stem.with_suffix(".bin").write_bytes(payload.tobytes())
    sidecar = {
        "d": data.d, "n": data.n, "seed": data.seed,
        "provenance": data.provenance,
        "layout": "X column-major float64, then y float64",
    }
    stem.with_suffix(".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=1) + "\n")


def load_dataset(stem: Path) -> Dataset:
    stem = Path(stem)
    sidecar = json.loads(stem.with_suffix(".json").read_text())
    d, n = int(sidecar["d"]), int(sidecar["n"])
    raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    X = raw[: n * d].reshape((n, d), order="F").copy()
    y = raw[n * d:].astype(np.int8)
    return Dataset(X=X, y=y, seed=int(sidecar["seed"]),
                   provenance=sidecar["provenance"])


def export_csv(data: Dataset, path: Path, max_rows: int = 100000) -> None:
    if data.n > max_rows:
        raise ValueError(f"dataset too large for CSV export ({data.n} rows)")
    path = Path(path)
    cols = [f"x{i}" for i in range(data.d)] + ["y"]
    lines = [",".join(cols)]
    for i in range(data.n):
        vals = [repr(float(v)) for v in data.X[i]] + [str(int(data.y[i]))]
        lines.append(",".join(vals))
    path.write_text("\n".join(lines) + "\n")
