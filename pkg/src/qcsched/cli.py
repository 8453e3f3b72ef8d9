"""Batch experiment runner: JSON config in, CSV tables + summary.json out.

Config schema (strict — unknown keys anywhere are rejected):

{
  "mode": "offline_smooth" | "offline_nonsmooth" | "online" | "compare"
          | "sweep_regions" | "overhead",
  "out_dir": "results",                      # optional; --out overrides
  "fading": {
    "num_users": 4, "num_channels": 16,
    "snr_db": 6.0,                           # scalar or one per user …
    "mean_gain": [[...], ...],               # … or an explicit M x K matrix
    "tap_powers": [1, 1, ...],               # optional multipath profile
    "seed": 0                                # u64; --seed overrides
  },
  "quantizer": {
    "type": "equiprobable" | "random" | "explicit",
    "regions": 4,
    "gain_range": [0.0, 12.0], "seed": 7,    # random only
    "thresholds": [[[0.0, ..., "inf"]]]      # explicit only
  },
  "power_rate": {"family": "outage_capacity", "params": {...}},
  "targets": [4, 8, 12, 16],
  "mu": [1, 1, 1, 1],                        # optional, defaults to ones
  "rate_cap": 12.0, "enum_budget": 1000000,  # optional
  "solver": {"beta": 0.01, "kappa": 0.1, "init": 0.1, "tol": 0.001,
             "max_iters": 200000, "eps": 0.05, "seed": null,
             "record_every": 1},             # optional, all defaulted
  "online":  {"num_blocks": 10000},          # online mode
  "compare": {"schemes": [...], "snr_db": [...], ...RA knobs},  # compare mode
  "sweep":   {"regions": [2, 3, 4, 6, 8], "reference_regions": 256}
}

Artifacts: every mode writes `summary.json` (final multipliers, rates, powers,
convergence flag, wall time); solver modes add `trajectory.csv`
(`iter,lambda_1..M,subgrad_1..M,rate_1..M,power`; for the online mode the rate
columns are running sample means); compare adds `compare.csv`
(`scheme,snr_db,avg_power_db,avg_rate_1..M`); sweep_regions adds `sweep.csv`.
CSV bytes are identical across reruns of the same config + seed.

Exit codes: 0 ok; 2 config/schema error (nothing written); 3 solver did not
converge (artifacts still written); 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .analysis import CompareSetup, compare_schemes, feedback_bits, \
    sweep_regions
from .channel import FadingModel, mean_gain_from_taps, snr_db_to_mean_gain
from .powerrate import NumericError, make_model
from .quantizer import (DEFAULT_ENUM_BUDGET, EnumerationBudgetError,
                        QuantizerGrid, build_equiprobable, build_random)
from .simplex import LPInfeasibleError, LPUnboundedError
from .solver import (Problem, SolverConfig, multiplier_settled,
                     run_offline_nonsmooth, run_offline_smooth, run_online)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_NUMERIC = 4

MODES = ("offline_smooth", "offline_nonsmooth", "online", "compare",
         "sweep_regions", "overhead")
SCHEMES = ("RA1", "RA2", "RA3", "RA4", "RA5")


class ConfigError(Exception):
    pass


# --- strict schema helpers ---------------------------------------------------

def _reject_unknown(d: dict, allowed, where: str) -> None:
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return d[key]


def _number(v, where: str, lo=None, hi=None, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{where}: must be >= {lo}, got {v!r}")
    if hi is not None and v > hi:
        raise ConfigError(f"{where}: must be <= {hi}, got {v!r}")
    return int(v) if integer else float(v)


def _num_list(v, where: str, length=None, lo=None):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{where}: expected a nonempty list")
    if length is not None and len(v) != length:
        raise ConfigError(f"{where}: expected {length} entries, got {len(v)}")
    return [_number(x, f"{where}[{i}]", lo=lo) for i, x in enumerate(v)]


def _section(cfg: dict, key: str, where="config") -> dict:
    v = cfg.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"{where}.{key}: expected an object")
    return v


def resolve_config(raw: dict) -> dict:
    """Validate the raw JSON document and fill in every default."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(raw, ("mode", "out_dir", "fading", "quantizer",
                          "power_rate", "targets", "mu", "rate_cap",
                          "enum_budget", "solver", "online", "compare",
                          "sweep"), "config")
    mode = _need(raw, "mode", "config")
    if mode not in MODES:
        raise ConfigError(f"config.mode: expected one of {MODES}, got {mode!r}")
    out_dir = raw.get("out_dir", ".")
    if not isinstance(out_dir, str):
        raise ConfigError("config.out_dir: expected a string")

    fad = _need(raw, "fading", "config")
    if not isinstance(fad, dict):
        raise ConfigError("config.fading: expected an object")
    _reject_unknown(fad, ("num_users", "num_channels", "snr_db", "mean_gain",
                          "tap_powers", "seed"), "fading")
    M = _number(_need(fad, "num_users", "fading"), "fading.num_users",
                lo=1, integer=True)
    K = _number(_need(fad, "num_channels", "fading"), "fading.num_channels",
                lo=1, integer=True)
    seed = _number(fad.get("seed", 0), "fading.seed", lo=0,
                   hi=2 ** 64 - 1, integer=True)
    rfad = {"num_users": M, "num_channels": K, "seed": seed}
    if ("snr_db" in fad) == ("mean_gain" in fad):
        raise ConfigError("fading: give exactly one of snr_db / mean_gain")
    if "snr_db" in fad:
        v = fad["snr_db"]
        rfad["snr_db"] = (_num_list(v, "fading.snr_db", length=M)
                          if isinstance(v, list)
                          else _number(v, "fading.snr_db"))
        if "tap_powers" in fad:
            rfad["tap_powers"] = _num_list(fad["tap_powers"],
                                           "fading.tap_powers", lo=0.0)
            if sum(rfad["tap_powers"]) <= 0:
                raise ConfigError("fading.tap_powers: must have positive sum")
    else:
        if "tap_powers" in fad:
            raise ConfigError("fading.tap_powers requires snr_db")
        mg = fad["mean_gain"]
        if (not isinstance(mg, list) or len(mg) != M
                or any(not isinstance(r, list) or len(r) != K for r in mg)):
            raise ConfigError("fading.mean_gain: expected an M x K matrix")
        rfad["mean_gain"] = [_num_list(r, f"fading.mean_gain[{i}]", length=K)
                             for i, r in enumerate(mg)]
        if min(min(r) for r in rfad["mean_gain"]) <= 0:
            raise ConfigError("fading.mean_gain: entries must be positive")

    qc = _need(raw, "quantizer", "config")
    if not isinstance(qc, dict):
        raise ConfigError("config.quantizer: expected an object")
    _reject_unknown(qc, ("type", "regions", "gain_range", "seed",
                         "thresholds"), "quantizer")
    qtype = qc.get("type", "equiprobable")
    if qtype not in ("equiprobable", "random", "explicit"):
        raise ConfigError(f"quantizer.type: unknown type {qtype!r}")
    if mode in ("compare", "sweep_regions", "overhead") and qtype != "equiprobable":
        raise ConfigError(f"quantizer.type: {mode} mode builds its own "
                          "ladders and needs type 'equiprobable'")
    rq = {"type": qtype}
    if qtype == "explicit":
        if "regions" in qc or "gain_range" in qc or "seed" in qc:
            raise ConfigError("quantizer: explicit type takes only thresholds")
        rq["thresholds"] = _need(qc, "thresholds", "quantizer")
    else:
        rq["regions"] = _number(_need(qc, "regions", "quantizer"),
                                "quantizer.regions", lo=2, integer=True)
        if qtype == "random":
            lohi = _num_list(_need(qc, "gain_range", "quantizer"),
                             "quantizer.gain_range", length=2, lo=0.0)
            if lohi[0] >= lohi[1]:
                raise ConfigError("quantizer.gain_range: need lo < hi")
            rq["gain_range"] = lohi
            rq["seed"] = _number(qc.get("seed", 0), "quantizer.seed", lo=0,
                                 integer=True)
        elif "gain_range" in qc or "seed" in qc or "thresholds" in qc:
            raise ConfigError("quantizer: equiprobable type takes only regions")

    pr = _need(raw, "power_rate", "config")
    if not isinstance(pr, dict):
        raise ConfigError("config.power_rate: expected an object")
    _reject_unknown(pr, ("family", "params"), "power_rate")
    family = _need(pr, "family", "power_rate")
    params = pr.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("power_rate.params: expected an object")
    try:
        make_model(family, **params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"power_rate: {exc}") from None

    targets = _num_list(_need(raw, "targets", "config"), "targets",
                        length=M, lo=0.0)
    mu = _num_list(raw.get("mu", [1.0] * M), "mu", length=M)
    if min(mu) <= 0:
        raise ConfigError("mu: entries must be positive")
    rate_cap = _number(raw.get("rate_cap", 12.0), "rate_cap", lo=0.0)
    enum_budget = _number(raw.get("enum_budget", DEFAULT_ENUM_BUDGET),
                          "enum_budget", lo=1, integer=True)

    sv = _section(raw, "solver")
    _reject_unknown(sv, ("beta", "kappa", "init", "tol", "max_iters", "eps",
                         "seed", "record_every"), "solver")
    rsv = {
        "beta": _number(sv.get("beta", 1e-2), "solver.beta"),
        "kappa": _number(sv.get("kappa", 0.1), "solver.kappa"),
        "init": (_num_list(sv["init"], "solver.init", length=M, lo=0.0)
                 if isinstance(sv.get("init"), list)
                 else _number(sv.get("init", 0.1), "solver.init", lo=0.0)),
        "tol": (_num_list(sv["tol"], "solver.tol", length=M)
                if isinstance(sv.get("tol"), list)
                else _number(sv.get("tol", 1e-3), "solver.tol")),
        "max_iters": _number(sv.get("max_iters", 200_000), "solver.max_iters",
                             lo=1, integer=True),
        "eps": _number(sv.get("eps", 0.05), "solver.eps"),
        "seed": (None if sv.get("seed") is None
                 else _number(sv["seed"], "solver.seed", lo=0, integer=True)),
        "record_every": _number(sv.get("record_every", 1),
                                "solver.record_every", lo=1, integer=True),
    }
    try:
        SolverConfig(**{**rsv, "init": np.asarray(rsv["init"]),
                        "tol": np.asarray(rsv["tol"])})
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None

    resolved = {"mode": mode, "out_dir": out_dir, "fading": rfad,
                "quantizer": rq,
                "power_rate": {"family": family, "params": params},
                "targets": targets, "mu": mu, "rate_cap": rate_cap,
                "enum_budget": enum_budget, "solver": rsv}

    if mode == "online":
        on = _section(raw, "online")
        _reject_unknown(on, ("num_blocks",), "online")
        resolved["online"] = {
            "num_blocks": _number(_need(on, "num_blocks", "online"),
                                  "online.num_blocks", lo=1, integer=True)}
    elif "online" in raw:
        raise ConfigError("config.online: only valid in online mode")

    if mode == "compare":
        cp = _section(raw, "compare")
        _reject_unknown(cp, ("schemes", "snr_db", "ra1_regions", "ra1_blocks",
                             "ra1_beta", "ra1_eval_blocks", "ra2_refine_iters",
                             "ra2_kappa", "ra2_tie_rtol", "ra4_seed",
                             "ra4_range_scale", "beta_backoffs"), "compare")
        schemes = cp.get("schemes", list(SCHEMES))
        if (not isinstance(schemes, list) or not schemes
                or any(s not in SCHEMES for s in schemes)):
            raise ConfigError(f"compare.schemes: expected a subset of {SCHEMES}")
        rcp = {"schemes": schemes}
        if "snr_db" in cp:
            if "snr_db" not in rfad:
                raise ConfigError(
                    "compare.snr_db sweep requires snr_db-style fading")
            rcp["snr_db"] = _num_list(cp["snr_db"], "compare.snr_db")
        rcp["ra1_regions"] = _number(cp.get("ra1_regions", 256),
                                     "compare.ra1_regions", lo=2, integer=True)
        rcp["ra1_blocks"] = _number(cp.get("ra1_blocks", 30_000),
                                    "compare.ra1_blocks", lo=1, integer=True)
        rcp["ra1_beta"] = _number(cp.get("ra1_beta", 2e-3),
                                  "compare.ra1_beta")
        if rcp["ra1_beta"] <= 0:
            raise ConfigError("compare.ra1_beta: must be positive")
        rcp["ra1_eval_blocks"] = _number(cp.get("ra1_eval_blocks", 200_000),
                                         "compare.ra1_eval_blocks", lo=1,
                                         integer=True)
        rcp["ra2_refine_iters"] = _number(cp.get("ra2_refine_iters", 2_000),
                                          "compare.ra2_refine_iters", lo=0,
                                          integer=True)
        rcp["ra2_kappa"] = _number(cp.get("ra2_kappa", 0.05),
                                   "compare.ra2_kappa", lo=0.0)
        rcp["ra2_tie_rtol"] = _number(cp.get("ra2_tie_rtol", 1e-3),
                                      "compare.ra2_tie_rtol", lo=0.0)
        rcp["ra4_seed"] = _number(cp.get("ra4_seed", 7), "compare.ra4_seed",
                                  lo=0, integer=True)
        rcp["ra4_range_scale"] = _number(cp.get("ra4_range_scale", 3.0),
                                         "compare.ra4_range_scale", lo=0.0)
        rcp["beta_backoffs"] = _number(cp.get("beta_backoffs", 4),
                                       "compare.beta_backoffs", lo=0,
                                       integer=True)
        resolved["compare"] = rcp
    elif "compare" in raw:
        raise ConfigError("config.compare: only valid in compare mode")

    if mode == "sweep_regions":
        sw = _section(raw, "sweep")
        _reject_unknown(sw, ("regions", "reference_regions", "ra1_blocks",
                             "ra1_beta", "ra1_eval_blocks"), "sweep")
        regions = _need(sw, "regions", "sweep")
        if not isinstance(regions, list) or not regions:
            raise ConfigError("sweep.regions: expected a nonempty list")
        rlist = [_number(x, f"sweep.regions[{i}]", lo=2, integer=True)
                 for i, x in enumerate(regions)]
        ref = sw.get("reference_regions", 256)
        if ref is not None:
            ref = _number(ref, "sweep.reference_regions", lo=2, integer=True)
        rsw = {"regions": rlist, "reference_regions": ref}
        if "ra1_blocks" in sw:
            rsw["ra1_blocks"] = _number(sw["ra1_blocks"], "sweep.ra1_blocks",
                                        lo=1, integer=True)
        if "ra1_beta" in sw:
            rsw["ra1_beta"] = _number(sw["ra1_beta"], "sweep.ra1_beta")
            if rsw["ra1_beta"] <= 0:
                raise ConfigError("sweep.ra1_beta: must be positive")
        if "ra1_eval_blocks" in sw:
            rsw["ra1_eval_blocks"] = _number(sw["ra1_eval_blocks"],
                                             "sweep.ra1_eval_blocks",
                                             lo=1, integer=True)
        resolved["sweep"] = rsw
    elif "sweep" in raw:
        raise ConfigError("config.sweep: only valid in sweep_regions mode")

    return resolved


# --- builders ----------------------------------------------------------------

def _build_fading(rc: dict) -> FadingModel:
    fad = rc["fading"]
    M, K = fad["num_users"], fad["num_channels"]
    if "mean_gain" in fad:
        mg = np.asarray(fad["mean_gain"], dtype=float)
    elif "tap_powers" in fad:
        mg = mean_gain_from_taps(fad["tap_powers"], M, K, fad["snr_db"])
    else:
        snr = np.asarray(fad["snr_db"], dtype=float)
        per_user = np.broadcast_to(snr_db_to_mean_gain(snr), (M,))
        mg = np.repeat(per_user[:, None], K, axis=1)
    return FadingModel(mean_gain=mg, seed=fad["seed"])


def _build_grid(rc: dict, fading: FadingModel) -> QuantizerGrid:
    qc = rc["quantizer"]
    if qc["type"] == "equiprobable":
        return build_equiprobable(fading, qc["regions"])
    if qc["type"] == "random":
        return build_random(fading, qc["regions"], tuple(qc["gain_range"]),
                            qc["seed"])
    thr = qc["thresholds"]

    def dec(v):
        if v == "inf":
            return np.inf
        return _number(v, "quantizer.thresholds entry")
    try:
        arr = np.array([[[dec(v) for v in ladder] for ladder in row]
                        for row in thr], dtype=float)
        return QuantizerGrid(thresholds=arr, mean_gain=fading.mean_gain)
    except (ValueError, TypeError, ConfigError) as exc:
        raise ConfigError(f"quantizer.thresholds: {exc}") from None


def _build_problem(rc: dict):
    fading = _build_fading(rc)
    grid = _build_grid(rc, fading)
    model = make_model(rc["power_rate"]["family"], **rc["power_rate"]["params"])
    if grid.num_users != fading.num_users:
        raise ConfigError("quantizer.thresholds: user count mismatch")
    problem = Problem(grid=grid, model=model,
                      mu=np.asarray(rc["mu"], dtype=float),
                      targets=np.asarray(rc["targets"], dtype=float),
                      fading=fading, rate_cap=rc["rate_cap"],
                      enum_budget=rc["enum_budget"])
    return problem


def _solver_config(rc: dict, log_every: int | None) -> SolverConfig:
    sv = dict(rc["solver"])
    if log_every:
        sv["record_every"] = log_every
    sv["init"] = np.asarray(sv["init"], dtype=float)
    sv["tol"] = np.asarray(sv["tol"], dtype=float)
    return SolverConfig(**sv)


def _compare_setup(rc: dict, fading: FadingModel) -> CompareSetup:
    cp = rc.get("compare", {})
    model = make_model(rc["power_rate"]["family"], **rc["power_rate"]["params"])
    kw = dict(fading=fading, regions=rc["quantizer"].get("regions", 4),
              model=model, mu=np.asarray(rc["mu"], dtype=float),
              targets=np.asarray(rc["targets"], dtype=float),
              eps=rc["solver"]["eps"], rate_cap=rc["rate_cap"],
              enum_budget=rc["enum_budget"], beta=rc["solver"]["beta"],
              tol=float(np.max(rc["solver"]["tol"])),
              max_iters=rc["solver"]["max_iters"],
              init=float(np.max(rc["solver"]["init"])))
    for key in ("ra1_regions", "ra1_blocks", "ra1_beta", "ra1_eval_blocks",
                "ra2_refine_iters", "ra2_kappa", "ra2_tie_rtol", "ra4_seed",
                "ra4_range_scale", "beta_backoffs"):
        if key in cp:
            kw[key] = cp[key]
    return CompareSetup(**kw)


# --- output helpers ----------------------------------------------------------

def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _write_summary(outdir: Path, payload: dict) -> None:
    with open(outdir / "summary.json", "w", newline="\n") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _power_db(p: float) -> float:
    return 10.0 * math.log10(p) if p > 0 else -math.inf


def _write_rows_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            out = []
            for v in row:
                if isinstance(v, str):
                    out.append(v)
                elif isinstance(v, (int, np.integer)):
                    out.append(str(int(v)))
                else:
                    out.append(repr(float(v)))
            fh.write(",".join(out) + "\n")


# --- mode runners ------------------------------------------------------------

def _progress_printer(log_every: int | None, label: str):
    if not log_every:
        return None

    def progress(i, lam, ev):
        if i % log_every == 0:
            g = ev.subgradient if hasattr(ev, "subgradient") else ev
            print(f"{label} iter={i} max|subgrad|={np.max(np.abs(g)):.6g}",
                  file=sys.stderr)
    return progress


def _run_solver_mode(rc: dict, outdir: Path, log_every: int | None) -> int:
    problem = _build_problem(rc)
    cfg = _solver_config(rc, log_every)
    mode = rc["mode"]
    t0 = time.perf_counter()
    if mode == "offline_smooth":
        lam, traj = run_offline_smooth(
            problem, cfg, _progress_printer(log_every, "smooth"))
        converged = traj.converged
        final_lambda, rates, power = lam, traj.rates[-1], traj.power[-1]
        reason = traj.reason
    elif mode == "offline_nonsmooth":
        traj = run_offline_nonsmooth(
            problem, cfg, _progress_printer(log_every, "nonsmooth"))
        # the hard subgradient never meets the stop rule by design; judge
        # dual convergence on the settled multiplier trace instead
        converged = multiplier_settled(traj)
        final_lambda, rates, power = traj.lam[-1], traj.rates[-1], traj.power[-1]
        reason = "settled" if converged else "hovering"
    else:
        res = run_online(problem, cfg, rc["online"]["num_blocks"],
                         _progress_printer(log_every, "online"))
        traj = res.trajectory
        converged = True
        final_lambda = res.final_lambda
        rates, power = res.sample_avg_rate[-1], res.sample_avg_power[-1]
        reason = "completed"
    wall = time.perf_counter() - t0

    with open(outdir / "trajectory.csv", "w", newline="\n") as fh:
        traj.write_csv(fh)
    K = problem.grid.num_channels
    _write_summary(outdir, {
        "mode": mode, "converged": bool(converged), "reason": reason,
        "final_lambda": final_lambda, "avg_rates": rates,
        "avg_power": power, "avg_power_db": _power_db(float(power)),
        "targets": problem.targets, "eps": cfg.eps,
        "eps_prime": K * cfg.eps, "iterations": int(traj.iters[-1]) + 1,
        "wall_time_s": wall})
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _run_compare(rc: dict, outdir: Path) -> int:
    cp = rc["compare"]
    M = rc["fading"]["num_users"]
    t0 = time.perf_counter()
    all_rows = []
    if "snr_db" in cp:
        points = cp["snr_db"]
        for snr in points:
            sub = {**rc, "fading": {**rc["fading"], "snr_db": snr}}
            setup = _compare_setup(sub, _build_fading(sub))
            all_rows += compare_schemes(setup, cp["schemes"], snr_db=snr)
    else:
        fad = rc["fading"].get("snr_db")
        snr = float(fad) if isinstance(fad, (int, float)) else math.nan
        setup = _compare_setup(rc, _build_fading(rc))
        all_rows += compare_schemes(setup, cp["schemes"], snr_db=snr)
    wall = time.perf_counter() - t0

    header = (["scheme", "snr_db", "avg_power_db"]
              + [f"avg_rate_{m+1}" for m in range(M)])
    csv_rows = [[r["scheme"], r["snr_db"], r["power_db"],
                 *np.asarray(r["avg_rates"], dtype=float)] for r in all_rows]
    _write_rows_csv(outdir / "compare.csv", header, csv_rows)
    _write_summary(outdir, {
        "mode": "compare", "converged": all(r["converged"] for r in all_rows),
        "rows": [{k: v for k, v in r.items() if k != "lambda"}
                 for r in all_rows],
        "wall_time_s": wall})
    return (EXIT_OK if all(r["converged"] for r in all_rows)
            else EXIT_NOT_CONVERGED)


def _run_sweep(rc: dict, outdir: Path) -> int:
    sw = rc["sweep"]
    M = rc["fading"]["num_users"]
    fad = rc["fading"].get("snr_db")
    snr = float(fad) if isinstance(fad, (int, float)) else math.nan
    t0 = time.perf_counter()
    setup = _compare_setup(rc, _build_fading(rc))
    for key in ("ra1_blocks", "ra1_beta", "ra1_eval_blocks"):
        if key in sw:
            setattr(setup, key, sw[key])
    rows = sweep_regions(setup, sw["regions"], sw["reference_regions"],
                         snr_db=snr)
    wall = time.perf_counter() - t0

    header = (["regions", "avg_power_db"]
              + [f"avg_rate_{m+1}" for m in range(M)])
    csv_rows = [[int(r["regions"]), r["power_db"],
                 *np.asarray(r["avg_rates"], dtype=float)] for r in rows]
    _write_rows_csv(outdir / "sweep.csv", header, csv_rows)
    _write_summary(outdir, {
        "mode": "sweep_regions", "converged": all(r["converged"] for r in rows),
        "rows": [{k: v for k, v in r.items() if k != "lambda"} for r in rows],
        "wall_time_s": wall})
    return (EXIT_OK if all(r["converged"] for r in rows)
            else EXIT_NOT_CONVERGED)


def _run_overhead(rc: dict, outdir: Path) -> int:
    fad = rc["fading"]
    regions = rc["quantizer"]["regions"]
    rep = feedback_bits(fad["num_users"], fad["num_channels"], regions)
    _write_summary(outdir, {
        "mode": "overhead", "converged": True,
        "num_users": fad["num_users"], "num_channels": fad["num_channels"],
        "regions": regions, "full_qcsi_bits": rep.full_qcsi_bits,
        "allocation_bits": rep.allocation_bits,
        "per_channel_bits": rep.per_channel_bits, "wall_time_s": 0.0})
    return EXIT_OK


# --- entry point --------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qcsched",
        description="Quantized-CSI scheduling experiments from a JSON config.")
    parser.add_argument("--config", required=True, help="path to the JSON "
                        "experiment config")
    parser.add_argument("--out", default=None, help="output directory "
                        "(default: config out_dir, else '.')")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the fading seed")
    parser.add_argument("--dry-run", action="store_true",
                        help="validate, print the resolved config, exit")
    parser.add_argument("--log-every", type=int, default=None, metavar="S",
                        help="record/report every S-th iterate")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        rc = resolve_config(raw)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be a nonnegative integer")
            rc["fading"]["seed"] = args.seed
            rc["solver"]["seed"] = None
        if args.log_every is not None and args.log_every < 1:
            raise ConfigError("--log-every must be >= 1")
        # build once so value errors (bad thresholds, shapes) surface before
        # any artifact is written
        if rc["mode"] in ("offline_smooth", "offline_nonsmooth", "online"):
            _build_problem(rc)
        elif rc["mode"] in ("compare", "sweep_regions"):
            _compare_setup(rc, _build_fading(rc))
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dry_run:
        print(json.dumps(_jsonable(rc), indent=2, sort_keys=True))
        return EXIT_OK

    outdir = Path(args.out if args.out is not None else rc["out_dir"])
    outdir.mkdir(parents=True, exist_ok=True)

    try:
        if rc["mode"] in ("offline_smooth", "offline_nonsmooth", "online"):
            return _run_solver_mode(rc, outdir, args.log_every)
        if rc["mode"] == "compare":
            return _run_compare(rc, outdir)
        if rc["mode"] == "sweep_regions":
            return _run_sweep(rc, outdir)
        return _run_overhead(rc, outdir)
    except (NumericError, EnumerationBudgetError, LPInfeasibleError,
            LPUnboundedError, FloatingPointError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
