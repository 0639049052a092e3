"""Hyperparameter sweeps over 1-D or 2-D grids.

Each cell is trained and evaluated independently for every seed; a cell
that raises is recorded as failed and the sweep carries on.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import actor_critic as ac
from .. import environments as envs
from .pipeline import agent_policy, mean_return, run_actor_critic, run_skvi

log = logging.getLogger(__name__)

SKVI_BATCH = "skvi_batch"
SKVI_COMPUTE = "skvi_compute"
SAKC_MONOMIALS = "sakc_monomials"
SAKC_DATA = "sakc_data"
STUDIES = (SKVI_BATCH, SKVI_COMPUTE, SAKC_MONOMIALS, SAKC_DATA)


@dataclass
class Study:
    name: str
    row_param: str
    row_values: list
    col_param: str | None = None
    col_values: list = field(default_factory=lambda: [None])


def default_study(name: str) -> Study:
    if name == SKVI_BATCH:
        return Study(name, "batch_size", list(range(8192, 24576 + 1, 4096)))
    if name == SKVI_COMPUTE:
        return Study(name, "grid_count", list(range(61, 142, 20)), "epochs", list(range(90, 191, 20)))
    if name == SAKC_MONOMIALS:
        return Study(name, "phi_degree", [1, 2, 3, 4], "psi_degree", [1, 2, 3, 4])
    if name == SAKC_DATA:
        return Study(name, "path_len", list(range(100, 501, 100)), "n_paths", list(range(60, 141, 20)))
    raise ValueError(f"unknown study {name!r}; expected one of {STUDIES}")


@dataclass
class Cell:
    row: object
    col: object
    mean_return: float
    per_seed: list
    status: str = "ok"
    pct_diff: float = math.nan


def _cell_return(study: str, env_dict: dict, params: dict, seed: int, settings: dict) -> float:
    env = envs.EnvironmentSpec.from_dict(env_dict)
    episodes = settings.get("episodes", 100)
    if study in (SKVI_BATCH, SKVI_COMPUTE):
        kw = {k: settings[k] for k in ("n_steps", "epochs", "grid_count", "alpha", "gamma",
                                        "batch_size") if k in settings}
        kw.update(params)
        run = run_skvi(env, seed, **kw)
        return mean_return(env, run.policy, seed, episodes)
    if study in (SAKC_MONOMIALS, SAKC_DATA):
        kw = {"steps": settings.get("steps", 50000), "n_steps": settings.get("n_steps", 30000)}
        if study == SAKC_DATA:
            kw["n_steps"] = params["path_len"] * params["n_paths"]
            kw["episode_len"] = params["path_len"]
        else:
            kw.update(params)
        cfg = ac.AgentConfig(**settings.get("agent", {}))
        result = run_actor_critic(ac.SAKC, env, seed, config=cfg, **kw)
        return mean_return(env, agent_policy(result.agent), seed, episodes)
    raise ValueError(f"unknown study {study!r}")


def _run_cell(args):
    study, env_dict, params, seeds, settings = args
    try:
        vals = [_cell_return(study, env_dict, params, s, settings) for s in seeds]
        if not all(np.isfinite(vals)):
            return vals, "failed: non-finite return"
        return vals, "ok"
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
        return [], f"failed: {type(exc).__name__}: {exc}"


def pct_diff_from_best(values) -> list[float]:
    """100 * (v - best) / |best| for returns (best = largest); NaN stays NaN."""
    arr = np.asarray(values, dtype=float)
    finite = arr[np.isfinite(arr)]
    if finite.size == 0:
        return [math.nan] * len(arr)
    best = finite.max()
    denom = abs(best) if best != 0 else 1.0
    return [float(100.0 * (v - best) / denom) if np.isfinite(v) else math.nan for v in arr]


def run_study(study: Study, env: envs.EnvironmentSpec, seeds, settings: dict | None = None,
              jobs: int = 1) -> list[Cell]:
    settings = dict(settings or {})
    tasks, keys = [], []
    for r in study.row_values:
        for c in study.col_values:
            params = {study.row_param: r}
            if study.col_param is not None:
                params[study.col_param] = c
            tasks.append((study.name, env.to_dict(), params, list(seeds), settings))
            keys.append((r, c))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    cells = []
    for (r, c), (vals, status) in zip(keys, results):
        mean = float(np.mean(vals)) if status == "ok" else math.nan
        cells.append(Cell(r, c, mean, list(vals), status))
        log.info("%s %s=%s %s=%s -> %s (%s)", study.name, study.row_param, r, study.col_param, c,
                 mean, status)
    for cell, d in zip(cells, pct_diff_from_best([c.mean_return for c in cells])):
        cell.pct_diff = d
    return cells


def write_grid(path, study: Study, env_kind: str, cells) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["study", "env", study.row_param, study.col_param or "-", "mean_return",
                    "pct_diff_from_best", "n_seeds", "status"])
        for c in cells:
            w.writerow([study.name, env_kind, c.row, "-" if c.col is None else c.col,
                        repr(c.mean_return), repr(c.pct_diff), len(c.per_seed), c.status])
