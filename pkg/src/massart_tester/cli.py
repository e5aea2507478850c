"""Batch experiment driver.

Subcommands: sandwich, tester, suite, bias-agnostic, dataset.  All
randomized commands require an explicit seed; every run echoes its
resolved configuration next to the outputs so reruns are byte-exact.
Exit codes: 0 success / Accept-dominant, 1 suite-or-verdict failure,
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import sandwich as sw
from .data import (adversary, export_csv, generate_dataset, load_dataset,
                   make_massart_dataset, opt_error_bruteforce, save_dataset,
                   _target_from_descriptor, substream)
from .learner import LearnerSpec, bias_agnostic, get_learner
from .tester import schedule, run_tester
from . import acceptance

JSON_KW = dict(sort_keys=True, indent=1)


class ConfigError(ValueError):
    pass


def _load_config(path, overrides=None) -> dict:
    cfg = json.loads(Path(path).read_text()) if path else {}
    cfg.update(overrides or {})
    return cfg


def _check_keys(cfg: dict, allowed: set, command: str) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")


def _resolve_out(cfg: dict) -> Path:
    out = Path(cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out: Path, cfg: dict) -> None:
    (out / "resolved-config.json").write_text(json.dumps(cfg, **JSON_KW) + "\n")


def _require_seed(cfg: dict) -> int:
    if "seed" not in cfg:
        raise ConfigError("an explicit seed is required (no wall-clock default)")
    return int(cfg["seed"])


# ---------------------------------------------------------------------------

SANDWICH_KEYS = {"cells", "constants", "degree_cap", "grid_size", "tail_points",
                 "plot_points", "output_dir", "seed", "precision_bits", "fast"}


def cmd_sandwich(cfg: dict) -> int:
    _check_keys(cfg, SANDWICH_KEYS, "sandwich")
    out = _resolve_out(cfg)
    cells = cfg.get("cells") or [{"t": 0.0, "alpha": 0.4}]
    consts = sw.SandwichConstants(**cfg.get("constants", {})) \
        if cfg.get("constants") else sw.DEFAULT_CONSTANTS
    degree_cap = int(cfg.get("degree_cap", acceptance.SUITE_DEGREE_CAP))
    grid_size = int(cfg.get("grid_size", 10000))
    tail_points = int(cfg.get("tail_points", 100))
    plot_points = int(cfg.get("plot_points", 2000))
    fast = bool(cfg.get("fast", False))
    _echo_config(out, {"command": "sandwich", "cells": cells,
                       "constants": asdict(consts), "degree_cap": degree_cap,
                       "grid_size": grid_size, "tail_points": tail_points,
                       "plot_points": plot_points, "fast": fast})
    summary = []
    any_fail = False
    for cell in cells:
        t, a = float(cell["t"]), float(cell["alpha"])
        tag = f"t{t:+.3g}_a{a:.3g}".replace("+", "p").replace("-", "m")
        try:
            pair = sw.build_sandwich(t, a, consts, degree_cap=degree_cap,
                                     quick_check=False)
            rep = sw.verify_pair(pair, grid_size=grid_size,
                                 tail_points=tail_points, fast=fast)
            payload = rep.to_json_dict()
            _write_plot_csv(out / f"sandwich_{tag}.csv", pair, plot_points)
            summary.append({"t": t, "alpha": a, "degree": rep.degree,
                            "gap_ratio": rep.gap_ratio, "pass": rep.passed})
            any_fail |= not rep.passed
        except (sw.InfeasibleParameters, sw.BuildVerificationError) as e:
            payload = {"t": t, "alpha": a, "pass": False, "error": str(e)}
            summary.append({"t": t, "alpha": a, "pass": False,
                            "error": str(e)})
            any_fail = True
        (out / f"sandwich_{tag}.json").write_text(
            json.dumps(payload, **JSON_KW) + "\n")
    (out / "sandwich_summary.json").write_text(
        json.dumps(summary, **JSON_KW) + "\n")
    return 1 if any_fail else 0


def _write_plot_csv(path: Path, pair, points: int) -> None:
    t = pair.original_t
    B = pair.params.B
    lines = ["x,h,p_minus,p_plus"]
    for i in range(points):
        x = (t - 3 * B) + (6 * B) * i / (points - 1)
        h = 1.0 if x >= t else 0.0
        pm = float(pair.pminus_at(x))
        pp = float(pair.pplus_at(x))
        lines.append(f"{x!r},{h!r},{pm!r},{pp!r}")
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------

TESTER_KEYS = {"d", "epsilon", "delta", "eta", "gamma", "overrides", "learner",
               "generator", "trials", "seed", "output_dir", "opt_dirs",
               "precision_bits"}


def _dataset_from_generator(gen_cfg: dict, d: int, n: int, trial_seed: int,
                            stream: int):
    """One phase of one trial; the planted target is fixed by trial_seed
    while the sample stream varies per phase."""
    kind = gen_cfg.get("kind", "gaussian_massart")
    desc = {k: v for k, v in gen_cfg.items() if k != "kind"}
    desc.update({"generator": kind, "d": d, "n": n, "seed": trial_seed})
    if "target" not in desc:
        target = _target_from_descriptor(desc, d)
        desc["target"] = {"v": [float(c) for c in target.v],
                          "t": float(target.t)}
    desc["seed"] = trial_seed * 1000003 + stream
    if kind == "gaussian_massart" and "profile" not in desc:
        desc["profile"] = ["constant", float(desc.get("rate", 0.0))]
        desc.pop("rate", None)
    desc.pop("gamma_star", None)
    return generate_dataset(desc)


def cmd_tester(cfg: dict) -> int:
    _check_keys(cfg, TESTER_KEYS, "tester")
    seed = _require_seed(cfg)
    out = _resolve_out(cfg)
    d = int(cfg.get("d", 4))
    trials = int(cfg.get("trials", 1))
    params = schedule(float(cfg.get("epsilon", 0.05)),
                      float(cfg.get("delta", 0.1)),
                      float(cfg.get("eta", 0.2)),
                      float(cfg.get("gamma", 0.3)),
                      overrides=cfg.get("overrides"), d=d)
    learner_cfg = cfg.get("learner", {"kind": "oracle"})
    spec = LearnerSpec(kind=learner_cfg.get("kind", "oracle"),
                       gamma=params.gamma,
                       config={k: v for k, v in learner_cfg.items()
                               if k != "kind"})
    learner = get_learner(spec)
    gen_cfg = dict(cfg.get("generator", {"kind": "gaussian_massart",
                                         "gamma_star": 0.3, "eta_bound": 0.2,
                                         "rate": 0.2}))
    _echo_config(out, {"command": "tester", "d": d, "trials": trials,
                       "seed": seed, "params": {**asdict(params)},
                       "learner": learner_cfg, "generator": gen_cfg})
    accepts, errors, reports = 0, [], []
    for trial in range(trials):
        ds1 = _dataset_from_generator(gen_cfg, d, params.N, seed + trial, 1)
        ds2 = _dataset_from_generator(gen_cfg, d, params.N, seed + trial, 2)
        rep = run_tester(learner, ds1, ds2, params)
        (out / f"trial_{trial:04d}.json").write_text(rep.to_json() + "\n")
        reports.append(rep)
        if rep.verdict == "Accept":
            accepts += 1
            errors.append(rep.empirical_error)
    agg = {"trials": trials, "accept_count": accepts,
           "accept_rate": accepts / trials,
           "mean_error": float(np.mean(errors)) if errors else None}
    if errors and cfg.get("opt_dirs"):
        ds_ref = _dataset_from_generator(gen_cfg, d, params.N, seed, 2)
        opt = opt_error_bruteforce(ds_ref, params.gamma,
                                   n_dirs=int(cfg["opt_dirs"]), seed=seed)
        agg["opt_ref"] = opt
        agg["excess"] = agg["mean_error"] - opt
    (out / "aggregate.json").write_text(json.dumps(agg, **JSON_KW) + "\n")
    return 0 if accepts * 2 >= trials else 1


# ---------------------------------------------------------------------------

BIAS_KEYS = {"d", "epsilon", "eta", "gamma_star", "rate", "profile", "trials",
             "seed", "output_dir", "learner_kind"}


def cmd_bias_agnostic(cfg: dict) -> int:
    _check_keys(cfg, BIAS_KEYS, "bias-agnostic")
    seed = _require_seed(cfg)
    out = _resolve_out(cfg)
    d = int(cfg.get("d", 4))
    epsilon = float(cfg.get("epsilon", 0.05))
    eta = float(cfg.get("eta", 0.1))
    gamma_star = float(cfg.get("gamma_star", 0.25))
    rate = float(cfg.get("rate", eta))
    profile = cfg.get("profile", acceptance.WRAPPER_PROFILE)
    trials = int(cfg.get("trials", 1))
    _echo_config(out, {"command": "bias-agnostic", "d": d, "epsilon": epsilon,
                       "eta": eta, "gamma_star": gamma_star, "rate": rate,
                       "profile": profile, "trials": trials, "seed": seed})
    from .data import gaussian_bias_threshold, Halfspace
    failures = 0
    for trial in range(trials):
        tseed = seed + 977 * trial
        g = substream(tseed, 7)
        v = g.standard_normal(d)
        v /= np.linalg.norm(v)
        target = Halfspace(v, gaussian_bias_threshold(gamma_star))

        def source(stream, n):
            return make_massart_dataset(d, n, tseed * 131 + stream, target,
                                        eta, ("constant", rate))
        try:
            hyp, trace = bias_agnostic(
                source, epsilon, eta, profile, tseed,
                learner_kind=cfg.get("learner_kind", "chow_sweep"))
            payload = {"trial": trial, "terminated": True,
                       "hypothesis": {"v": [float(c) for c in hyp.v],
                                      "t": float(hyp.t)},
                       "trace": trace.to_json_dict()}
        except RuntimeError as e:
            failures += 1
            payload = {"trial": trial, "terminated": False, "error": str(e)}
        (out / f"wrapper_{trial:04d}.json").write_text(
            json.dumps(payload, **JSON_KW) + "\n")
    return 2 if failures else 0


# ---------------------------------------------------------------------------

DATASET_KEYS = {"descriptor", "output_dir", "stem", "export", "seed"}


def cmd_dataset(cfg: dict) -> int:
    _check_keys(cfg, DATASET_KEYS, "dataset")
    out = _resolve_out(cfg)
    desc = cfg.get("descriptor")
    if desc is None:
        raise ConfigError("dataset command needs a descriptor")
    if "seed" in cfg:
        desc = {**desc, "seed": int(cfg["seed"])}
    ds = generate_dataset(desc)
    stem = out / cfg.get("stem", "dataset")
    save_dataset(ds, stem)
    _echo_config(out, {"command": "dataset", "descriptor": desc,
                       "stem": str(stem)})
    if cfg.get("export") == "csv":
        export_csv(ds, stem.with_suffix(".csv"))
    return 0


# ---------------------------------------------------------------------------

SUITE_KEYS = {"output_dir", "criteria", "seed"}


def cmd_suite(cfg: dict, list_only: bool = False) -> int:
    _check_keys(cfg, SUITE_KEYS, "suite")
    if list_only:
        for cid in sorted(acceptance.CRITERIA):
            print(f"{cid}: {acceptance.TITLES[cid]}")
        return 0
    out = _resolve_out(cfg)
    _echo_config(out, {"command": "suite",
                       "criteria": cfg.get("criteria") or sorted(acceptance.CRITERIA)})
    ids = cfg.get("criteria")
    results = acceptance.run_all(out_dir=out, ids=ids)
    table = [{"criterion": r.cid, "title": r.title, "pass": r.passed,
              "runtime_s": round(r.runtime_s, 2)} for r in results]
    (out / "suite_summary.json").write_text(json.dumps(table, **JSON_KW) + "\n")
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="massart-tester",
        description="Tester-learner for Massart halfspaces and its "
                    "sandwiching-polynomial machinery")
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--trials", type=int, help="override config trials")
    parser.add_argument("--out", type=Path, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sandwich", "tester", "bias-agnostic", "dataset"):
        sub.add_parser(name)
    suite_p = sub.add_parser("suite")
    suite_p.add_argument("--list", action="store_true",
                         help="enumerate criteria without running")
    args = parser.parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    try:
        cfg = _load_config(args.config, overrides)
        if args.command == "sandwich":
            return cmd_sandwich(cfg)
        if args.command == "tester":
            return cmd_tester(cfg)
        if args.command == "bias-agnostic":
            return cmd_bias_agnostic(cfg)
        if args.command == "dataset":
            return cmd_dataset(cfg)
        if args.command == "suite":
            return cmd_suite(cfg, list_only=getattr(args, "list", False))
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, json.JSONDecodeError, KeyError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
