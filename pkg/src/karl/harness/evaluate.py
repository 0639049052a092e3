"""Loading saved policies and scoring them over seeds."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import actor_critic as ac
from .. import lqr, skvi
from ..environments import EnvironmentSpec
from ..errors import ModelFormat
from .pipeline import agent_policy, evaluate_returns


@dataclass
class LoadedPolicy:
    algo: str
    env: EnvironmentSpec
    policy: object
    payload: object = None


def load_policy(path) -> LoadedPolicy:
    """Any saved model (SKVI, actor-critic or LQR) as a deterministic policy."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormat(f"{path}: not a model file ({exc})") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormat(f"{path}: missing format_version")
    kind = doc.get("kind")
    if kind == "skvi":
        weights, grid, alpha, gamma, tensor, doc = skvi.load_model(path)
        env = EnvironmentSpec.from_dict(doc["env_spec"])
        pol = skvi.SkviPolicy(weights, tensor, env, grid, alpha, gamma, greedy=True)
        return LoadedPolicy("SKVI", env, pol, weights)
    if kind in ac.ALGOS:
        agent = ac.agent_from_dict(doc)
        return LoadedPolicy(kind, agent.env, agent_policy(agent), agent)
    if kind == "lqr":
        env, sol = lqr.load_model(path)
        return LoadedPolicy("LQR", env, lqr.LqrController(env, sol), sol)
    raise ModelFormat(f"{path}: unknown model kind {kind!r}")


def evaluate(policy, env, seeds, episodes: int = 100) -> dict:
    """Per-seed mean episodic return and the mean across seeds."""
    per_seed = {int(s): float(np.mean(evaluate_returns(env, policy, s, episodes))) for s in seeds}
    vals = list(per_seed.values())
    return {"per_seed": per_seed, "mean": float(np.mean(vals)),
            "std": float(np.std(vals)), "episodes": episodes}


def write_evaluation(path, rows) -> None:
    """rows: dicts with algo, env, seed ('mean' for the aggregate), mean_return."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algo", "env", "seed", "episodes", "mean_return"])
        for r in rows:
            w.writerow([r["algo"], r["env"], r["seed"], r["episodes"], repr(float(r["mean_return"]))])


def evaluation_rows(algo: str, env_kind: str, result: dict) -> list[dict]:
    rows = [{"algo": algo, "env": env_kind, "seed": s, "episodes": result["episodes"],
             "mean_return": v} for s, v in result["per_seed"].items()]
    rows.append({"algo": algo, "env": env_kind, "seed": "mean", "episodes": result["episodes"],
                 "mean_return": result["mean"]})
    return rows
