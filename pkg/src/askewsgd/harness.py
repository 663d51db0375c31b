"""Experiment runners behind the command-line interface.

Each runner resolves a configuration (defaults, then config file, then
explicit flag overrides), executes seeded training runs, and emits
schema-tagged CSV logs plus a JSON summary into the output directory.
Multi-seed experiments can fan out over processes; every run keeps its own
log files and RNG streams, so concurrency never changes results.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics
from .datasets import gen_logistic, gen_two_moons
from .grids import (ConfigError, ConstraintParams, QuantGrid, _penalty_batch,
                    distance_to_grid, feasibility_gap, feasible_intervals,
                    project_to_grid, slack_vectors)
from .models import LogisticModel, MoonsMlpModel, QuadraticToyModel
from .optimizers import Iterate, askew_step, evaluate_quantized, run_training
from .records import (EXHAUSTIVE_SCHEMA, TRAJECTORY_SCHEMA,
                      VECTOR_FIELD_SCHEMA, write_config_json, write_run_csv,
                      write_run_json, write_snapshots_csv, write_table)
from .schedules import AnnealSchedule, StepSchedule
from .skew import kkt_residual, skew_direction

LOGISTIC_DEFAULTS = {
    "n": 6000, "d": 10, "grid": "binary",
    "lr": 1.0, "lr_schedule": "constant", "lr_delta": 0.6, "milestones": [],
    "alpha": 1.0, "m_clip": 1.0,
    "epsilon0": 1.0, "anneal_decay": 0.88, "anneal": True, "anneal_warmup": None,
    "epochs": 25, "batch_size": 1000, "init_scale": 0.5,
    "eval_cadence": 1, "snapshot_every": 10, "log_full_loss": True,
    "seeds": [0], "format": "csv", "parallel": 1,
}

TWO_MOONS_DEFAULTS = {
    "n_train": 2000, "n_test": 200, "noise": 0.15, "grid": "binary",
    "lr": 1.0, "lr_schedule": "constant", "lr_delta": 0.6, "milestones": [],
    "alpha": 4.0, "m_clip": 1.0,
    "epsilon0": 1.0, "anneal_decay": 0.88, "anneal": True, "anneal_warmup": 35,
    "epochs": 50, "batch_size": 20, "init_scale": 1.4,
    "eval_cadence": 1, "snapshot_every": 10, "log_full_loss": False,
    "seeds": [0], "format": "csv", "parallel": 1,
}

FIG1_DEFAULTS = {
    "epsilon": 0.3, "alphas": [0.1, 1.0], "m_clip": 1.0,
    "grid_res": 30, "extent": 1.5,
    "start": [0.5, 0.5], "traj_alpha": 1.0, "gamma": 0.1, "steps": 1500,
    "search_res": 1e-4,
}

EXHAUSTIVE_DEFAULTS = {
    "model": "mlp", "grid": "binary", "seed": 0,
    "n_train": 2000, "n_test": 200, "noise": 0.1,
}

VALIDATE_DEFAULTS = {"seed": 0, "alpha": 1.0, "epsilon": 0.3, "m_clip": 1.0}


def resolve_config(defaults: dict, file_cfg: dict | None, overrides: dict | None) -> dict:
    """Layer config-file values and flag overrides over the defaults."""
    cfg = dict(defaults)
    for source in (file_cfg or {}), (overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in defaults:
                raise ConfigError(f"unknown config key: {key!r}")
            cfg[key] = value
    return cfg


def _step_schedule(cfg: dict) -> StepSchedule:
    kind = cfg["lr_schedule"]
    if kind == "constant":
        return StepSchedule.constant(cfg["lr"])
    if kind == "inverse_power":
        return StepSchedule.inverse_power(cfg["lr"], cfg["lr_delta"])
    if kind == "piecewise":
        return StepSchedule.piecewise(cfg["lr"], cfg["milestones"])
    raise ConfigError(f"unknown lr_schedule: {kind!r}")


def _anneal_schedule(cfg: dict) -> AnnealSchedule | None:
    if not cfg["anneal"]:
        return None
    warmup = cfg.get("anneal_warmup")
    if warmup is None:
        warmup = cfg["epochs"] // 2
    return AnnealSchedule(epsilon0=cfg["epsilon0"], decay=cfg["anneal_decay"],
                          warmup=int(warmup))


def _write_run(out_dir: Path, stem: str, result, cfg: dict, fmt: str) -> None:
    if fmt == "json":
        write_run_json(out_dir / f"{stem}.json", result.records)
    else:
        write_run_csv(out_dir / f"{stem}.csv", result.records)
    write_snapshots_csv(out_dir / f"{stem}_snapshots.csv", result.snapshots)
    write_config_json(out_dir / f"{stem}_config.json", cfg)


def _hamming(a: np.ndarray, b: np.ndarray) -> int:
    return int((np.asarray(a) != np.asarray(b)).sum())


def _last_epoch_stats(records, epochs: int):
    steps_total = records[-1].step + 1
    per_epoch = steps_total // epochs
    tail = [r.train_loss for r in records[-per_epoch:]]
    return float(np.mean(tail)), float(np.std(tail))


def logistic_one_seed(cfg: dict, seed: int, out_dir: str) -> dict:
    """Train all four optimizers on one logistic instance with matched seeds."""
    out = Path(out_dir)
    data, w_true = gen_logistic(cfg["n"], cfg["d"], seed=seed)
    model = LogisticModel(cfg["d"])
    grid = QuantGrid.from_spec(cfg["grid"], cfg["d"])
    steps = _step_schedule(cfg)
    params = ConstraintParams(epsilon=cfg["epsilon0"], alpha=cfg["alpha"],
                              m_clip=cfg["m_clip"])
    summary = {"w_true": [float(v) for v in w_true]}
    for method in ("askew", "sgd", "projected", "bc_ste"):
        result = run_training(
            model, data, optimizer=method,
            grid=None if method == "sgd" else grid,
            params=params if method == "askew" else None,
            steps=steps, anneal=_anneal_schedule(cfg) if method == "askew" else None,
            epochs=cfg["epochs"], batch_size=cfg["batch_size"], seed=seed,
            init_scale=cfg["init_scale"], eval_cadence=cfg["eval_cadence"],
            snapshot_every=cfg["snapshot_every"],
            log_full_train_loss=cfg["log_full_loss"])
        run_cfg = {**cfg, "seeds": [seed], "method": method, "experiment": "logistic"}
        _write_run(out, f"logistic_{method}_seed{seed}", result, run_cfg, cfg["format"])
        w = result.w_final
        wq = project_to_grid(grid, w)
        _, tail_std = _last_epoch_stats(result.records, cfg["epochs"])
        summary[method] = {
            "final_loss_latent": model.loss(w, data.features, data.labels),
            "final_loss_projected": model.loss(wq, data.features, data.labels),
            "hamming_to_true": _hamming(wq, w_true),
            "last_epoch_loss_std": tail_std,
            "final_feasibility_gap": feasibility_gap(params, grid, w),
            "final_distance_to_grid": float(distance_to_grid(grid, w).max()),
        }
    return summary


def run_logistic(cfg: dict, out_dir: str) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in cfg["seeds"]]
    if cfg["parallel"] > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg["parallel"]) as pool:
            results = list(pool.map(logistic_one_seed, itertools.repeat(cfg),
                                    seeds, itertools.repeat(str(out))))
    else:
        results = [logistic_one_seed(cfg, s, str(out)) for s in seeds]
    summary = {"experiment": "logistic", "config": cfg,
               "per_seed": {str(s): r for s, r in zip(seeds, results)}}
    write_config_json(out / "logistic_summary.json", summary)
    return summary


def enumerate_grid_configs(grid: QuantGrid):
    """All grid configurations in mixed-radix order, coordinate 0 fastest."""
    sizes = [grid.levels(i).size for i in range(grid.dim)]
    total = math.prod(sizes)
    if total > 2 ** 20:
        raise ConfigError(f"{total} grid configurations exceed the 2^20 guard")
    for n in range(total):
        w = np.empty(grid.dim)
        rem = n
        for i in range(grid.dim):
            w[i] = grid.levels(i)[rem % sizes[i]]
            rem //= sizes[i]
        yield n, w


def exhaustive_table(model, grid: QuantGrid, train=None, test=None):
    """Losses of every grid configuration; rows plus the best (by test loss)."""
    rows = []
    best = None
    for config_id, w in enumerate_grid_configs(grid):
        train_loss = (model.loss(w, train.features, train.labels)
                      if train is not None else model.loss(w))
        test_loss = (model.loss(w, test.features, test.labels)
                     if test is not None else None)
        row = {"config_id": config_id,
               **{f"w{i}": float(w[i]) for i in range(grid.dim)},
               "train_loss": train_loss, "test_loss": test_loss}
        rows.append(row)
        key = test_loss if test_loss is not None else train_loss
        if best is None or key < best[0]:
            best = (key, row)
    return rows, best[1]


def _write_exhaustive(path, rows, dim: int) -> None:
    names = ["config_id"] + [f"w{i}" for i in range(dim)] + ["train_loss", "test_loss"]
    write_table(path, EXHAUSTIVE_SCHEMA, names, rows)


def two_moons_one_seed(cfg: dict, seed: int, out_dir: str) -> dict:
    """Train full-precision, straight-through, and skewed runs, then enumerate."""
    out = Path(out_dir)
    train, test = gen_two_moons(cfg["n_train"], cfg["n_test"], cfg["noise"], seed=seed)
    model = MoonsMlpModel()
    grid = QuantGrid.from_spec(cfg["grid"], model.dim)
    steps = _step_schedule(cfg)
    params = ConstraintParams(epsilon=cfg["epsilon0"], alpha=cfg["alpha"],
                              m_clip=cfg["m_clip"])
    summary = {}
    for method in ("sgd", "bc_ste", "askew"):
        result = run_training(
            model, train, optimizer=method,
            grid=None if method == "sgd" else grid,
            params=params if method == "askew" else None,
            steps=steps, anneal=_anneal_schedule(cfg) if method == "askew" else None,
            epochs=cfg["epochs"], batch_size=cfg["batch_size"], seed=seed,
            init_scale=cfg["init_scale"], eval_data=test,
            eval_cadence=cfg["eval_cadence"],
            snapshot_every=cfg["snapshot_every"],
            log_full_train_loss=cfg["log_full_loss"])
        run_cfg = {**cfg, "seeds": [seed], "method": method, "experiment": "two_moons"}
        _write_run(out, f"two_moons_{method}_seed{seed}", result, run_cfg, cfg["format"])
        w = result.w_final
        if method == "sgd":
            test_loss = model.loss(w, test.features, test.labels)
        else:
            test_loss, _ = evaluate_quantized(model, test, grid, w)
        summary[method] = {
            "final_test_loss": test_loss,
            "final_train_loss": model.loss(w, train.features, train.labels),
        }
    rows, best = exhaustive_table(model, grid, train, test)
    _write_exhaustive(out / f"two_moons_exhaustive_seed{seed}.csv", rows, grid.dim)
    summary["exhaustive"] = {"best_config_id": best["config_id"],
                             "best_test_loss": best["test_loss"],
                             "best_train_loss": best["train_loss"],
                             "n_configs": len(rows)}
    return summary


def run_two_moons(cfg: dict, out_dir: str) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in cfg["seeds"]]
    if cfg["parallel"] > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg["parallel"]) as pool:
            results = list(pool.map(two_moons_one_seed, itertools.repeat(cfg),
                                    seeds, itertools.repeat(str(out))))
    else:
        results = [two_moons_one_seed(cfg, s, str(out)) for s in seeds]
    per_seed = {str(s): r for s, r in zip(seeds, results)}
    med = {
        "sgd_test": float(np.median([r["sgd"]["final_test_loss"] for r in results])),
        "bc_ste_test": float(np.median([r["bc_ste"]["final_test_loss"] for r in results])),
        "askew_test": float(np.median([r["askew"]["final_test_loss"] for r in results])),
        "exhaustive_best_test": float(np.median(
            [r["exhaustive"]["best_test_loss"] for r in results])),
    }
    summary = {"experiment": "two_moons", "config": cfg,
               "per_seed": per_seed, "medians": med}
    write_config_json(out / "two_moons_summary.json", summary)
    return summary


def constrained_minimum_scan(model: QuadraticToyModel, grid: QuantGrid,
                             params: ConstraintParams, extent: float,
                             res: float):
    """Dense feasible-region scan for the 2-D toy minimizer.

    Loss and constraints both separate per coordinate, so the planar scan
    factorizes into two axis scans whose joint argmin equals the full 2-D
    result at the same resolution.
    """
    n = int(round(2 * extent / res)) + 1
    w_opt = np.empty(2)
    for i in range(2):
        omegas = np.linspace(-extent, extent, n)
        psi = params.epsilon - _penalty_batch(grid.levels(i), omegas)[0]
        losses = model.scale * (omegas - model.center[i]) ** 2
        feasible = psi >= 0.0
        if not feasible.any():
            raise ConfigError("no feasible point in the scanned range")
        idx = np.flatnonzero(feasible)[np.argmin(losses[feasible])]
        w_opt[i] = omegas[idx]
    return w_opt


def run_fig1(cfg: dict, out_dir: str) -> dict:
    """Velocity field and full-gradient trajectory for the 2-D toy problem."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = QuadraticToyModel()
    grid = QuantGrid.binary(2)

    axis = np.linspace(-cfg["extent"], cfg["extent"], int(cfg["grid_res"]))
    vf_rows = []
    vf_violations = 0
    for alpha in cfg["alphas"]:
        params = ConstraintParams(epsilon=cfg["epsilon"], alpha=alpha,
                                  m_clip=cfg["m_clip"])
        for x in axis:
            for y in axis:
                w = np.array([x, y])
                u = model.grad(w)
                step = skew_direction(params, grid, u, w)
                psi, _ = slack_vectors(params, grid, w)
                vf_violations += diagnostics.attraction_violations(
                    params, grid, u, w, step).size
                vf_rows.append({
                    "alpha": float(alpha), "w1": float(x), "w2": float(y),
                    "v1": float(step.v[0]), "v2": float(step.v[1]),
                    "slack1": float(psi[0]), "slack2": float(psi[1]),
                })
    write_table(out / "fig1_vector_field.csv", VECTOR_FIELD_SCHEMA,
                ["alpha", "w1", "w2", "v1", "v2", "slack1", "slack2"], vf_rows)

    params = ConstraintParams(epsilon=cfg["epsilon"], alpha=cfg["traj_alpha"],
                              m_clip=cfg["m_clip"])
    it = Iterate(w=np.asarray(cfg["start"], dtype=float))
    traj_rows = []
    for _ in range(int(cfg["steps"])):
        w_before = it.w
        it, info = askew_step(model, None, it, params, grid, cfg["gamma"])
        traj_rows.append({
            "step": it.k - 1, "w1": float(w_before[0]), "w2": float(w_before[1]),
            "v1": float(info.skew.v[0]), "v2": float(info.skew.v[1]),
            "loss": model.loss(w_before),
            "feasibility_gap": feasibility_gap(params, grid, w_before),
        })
    write_table(out / "fig1_trajectory.csv", TRAJECTORY_SCHEMA,
                ["step", "w1", "w2", "v1", "v2", "loss", "feasibility_gap"],
                traj_rows)

    w_final = it.w
    final_kkt = kkt_residual(params, grid, model.grad(w_final), w_final)
    w_constrained = constrained_minimum_scan(model, grid, params,
                                             cfg["extent"], cfg["search_res"])
    meta = {
        "epsilon": cfg["epsilon"], "alphas": list(cfg["alphas"]),
        "m_clip": cfg["m_clip"], "levels": [float(v) for v in grid.levels(0)],
        "unconstrained_min": [float(v) for v in model.center],
        "constrained_min": [float(v) for v in w_constrained],
        "bands": feasible_intervals(params, grid, 0),
        "trajectory_final": {
            "w": [float(v) for v in w_final],
            "feasibility_gap": feasibility_gap(params, grid, w_final),
            "kkt_residual": final_kkt,
        },
        "vector_field_violations": vf_violations,
    }
    write_config_json(out / "fig1_meta.json", meta)
    return meta


def run_exhaustive(cfg: dict, out_dir: str) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg["model"] == "mlp":
        model = MoonsMlpModel()
        train, test = gen_two_moons(cfg["n_train"], cfg["n_test"],
                                    cfg["noise"], seed=cfg["seed"])
    elif cfg["model"] == "quadratic":
        model, train, test = QuadraticToyModel(), None, None
    elif cfg["model"] == "logistic":
        train, _ = gen_logistic(seed=cfg["seed"])
        model, test = LogisticModel(train.dim), None
    else:
        raise ConfigError(f"unknown model for enumeration: {cfg['model']!r}")
    grid = QuantGrid.from_spec(cfg["grid"], model.dim)
    rows, best = exhaustive_table(model, grid, train, test)
    _write_exhaustive(out / "exhaustive.csv", rows, grid.dim)
    summary = {"n_configs": len(rows), "best": best, "config": cfg}
    write_config_json(out / "exhaustive_summary.json", summary)
    return summary


def run_validate(cfg: dict) -> list:
    """Execute the invariant suites; returns one report per suite."""
    seed = int(cfg["seed"])
    params = ConstraintParams(epsilon=cfg["epsilon"], alpha=cfg["alpha"],
                              m_clip=cfg["m_clip"])
    data, _ = gen_logistic(n=2000, d=10, seed=seed)
    model = LogisticModel(10)
    grid = QuantGrid.binary(10)

    def attraction_run(callback):
        run_training(model, data, optimizer="askew", grid=grid, params=params,
                     steps=StepSchedule.constant(1.0), epochs=5, batch_size=500,
                     seed=seed, eval_cadence=0, snapshot_every=0,
                     step_callback=callback)

    def containment_run(callback):
        run_training(model, data, optimizer="askew", grid=grid, params=params,
                     steps=StepSchedule.constant(0.05), epochs=5, batch_size=500,
                     seed=seed, eval_cadence=0, snapshot_every=0,
                     step_callback=callback)

    return [
        diagnostics.oracle_equivalence_suite(seed),
        diagnostics.gradient_suite(seed),
        diagnostics.attraction_suite(attraction_run, params, grid),
        diagnostics.containment_suite(containment_run, params, grid),
    ]
