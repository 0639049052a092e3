"""Command line entry point: ``karl <verb> [options]``.

Exit status: 0 on success, 2 for configuration/input errors, 3 for
numerical failures (non-finite states, singular systems, no convergence).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import actor_critic as ac
from .. import environments as envs
from .. import lqr, skvi
from ..dictionaries import MonomialBasis
from ..errors import (ConfigError, DimensionMismatch, InsufficientData, ModelFormat,
                      NoConvergence, NonFiniteState, SingularSystem)
from ..koopman import DEFAULT_RIDGE, KoopmanTensor, fit_tensor
from . import ablate as ablation
from . import interpret as interp
from .config import ExperimentConfig, agent_config, load_config
from .data import Dataset
from .evaluate import evaluate, evaluation_rows, load_policy, write_evaluation
from .pipeline import collect_dataset, run_actor_critic, run_skvi
from .report import ReturnLogWriter, RunRecord, read_return_log, summarize, write_summary

log = logging.getLogger("karl")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

ALGO_VERBS = {"sakc": ac.SAKC, "sac-v": ac.SAC_V, "sac-q": ac.SAC_Q}


def _add_global(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="JSON experiment configuration")
    g.add_argument("--seed", type=int, action="append",
                   help="random seed (repeat for several seeds; default 0)")
    g.add_argument("--out", help="output directory (default: runs)")
    g.add_argument("--jobs", type=int, help="worker processes for multi-seed work")
    g.add_argument("-v", "--verbose", action="store_true")


def _add_env(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("environment")
    g.add_argument("--env", choices=envs.KINDS)
    g.add_argument("--dt", type=float)
    g.add_argument("--episode-len", type=int)
    g.add_argument("--action-low", type=float, nargs="+")
    g.add_argument("--action-high", type=float, nargs="+")
    g.add_argument("--q-scale", type=float, dest="Q_scale")
    g.add_argument("--r-scale", type=float, dest="R_scale")


ENV_FLAGS = ("dt", "episode_len", "action_low", "action_high", "Q_scale", "R_scale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="karl", description="Koopman-assisted RL experiments")
    sub = parser.add_subparsers(dest="verb", required=True)

    def verb(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_global(p)
        return p

    p = verb("collect", "record random-agent transitions to a dataset CSV")
    _add_env(p)
    p.add_argument("--steps", type=int, default=30000)
    p.add_argument("--file", default="dataset.csv", help="file name inside --out")

    p = verb("fit-tensor", "fit a Koopman tensor from a dataset")
    p.add_argument("--dataset")
    p.add_argument("--phi-degree", type=int, default=2)
    p.add_argument("--psi-degree", type=int, default=2)
    p.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    p.add_argument("--file", default="tensor.json")

    p = verb("skvi", "soft Koopman value iteration")
    _add_env(p)
    p.add_argument("--tensor")
    p.add_argument("--dataset")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--actions", "--grid", dest="grid", type=int, default=101,
                   help="grid actions per action dimension")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--batch", "--batch-size", dest="batch_size", type=int, default=16384)
    p.add_argument("--file", default="skvi_model.json")

    for name, algo in ALGO_VERBS.items():
        p = verb(name, f"train {algo}")
        _add_env(p)
        p.add_argument("--steps", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--file", default=f"{name}_model.json")
        if algo == ac.SAKC:
            p.add_argument("--tensor")
            p.add_argument("--phi-degree", type=int, default=2)
            p.add_argument("--psi-degree", type=int, default=2)

    p = verb("lqr", "solve the Riccati equation and score the controller")
    _add_env(p)
    p.add_argument("--episodes", type=int)
    p.add_argument("--file", default="lqr_model.json")
    p.add_argument("--returns", default="lqr_returns.csv", help="return CSV inside --out")

    p = verb("evaluate", "mean episodic return of a saved model")
    p.add_argument("--model", required=False)
    p.add_argument("--episodes", type=int)
    p.add_argument("--file", default="evaluation.csv")

    p = verb("ablate", "hyperparameter sweep")
    p.add_argument("--study", required=True, choices=ablation.STUDIES)
    p.add_argument("--env")
    p.add_argument("--steps", type=int, help="SAKC training steps per cell")
    p.add_argument("--episodes", type=int)
    p.add_argument("--file", default=None)

    p = verb("interpret", "print a linear value function and optionally sparsify it")
    p.add_argument("--model", required=False)
    p.add_argument("--keep", nargs="+", help="terms to keep, e.g. 1 y^2 z^2")
    p.add_argument("--zero", nargs="+", help="terms to zero out")
    p.add_argument("--evaluate", action="store_true", help="re-evaluate returns after sparsifying")
    p.add_argument("--episodes", type=int)
    p.add_argument("--names", nargs="+", help="state variable names")

    p = verb("report", "binned mean/std of return logs")
    p.add_argument("--logs", nargs="+", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--file", default="summary.csv")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "env", None):
        cfg.env = args.env
    for name in ENV_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            cfg.env_overrides[name] = v
    if args.seed:
        cfg.seeds = list(args.seed)
    if args.out:
        cfg.out = args.out
    if args.jobs is not None:
        cfg.jobs = args.jobs
    for name in ("steps", "episodes"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    for name in ("dataset", "tensor", "model"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    cfg.validate(check_files=True)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    return cfg


def _out(cfg, name, seed=None, multi=False) -> Path:
    p = Path(name)
    if multi and seed is not None:
        p = p.with_name(f"{p.stem}_seed{seed}{p.suffix}")
    return Path(cfg.out) / p


def cmd_collect(args, cfg):
    env = cfg.make_env()
    multi = len(cfg.seeds) > 1
    for seed in cfg.seeds:
        ds = collect_dataset(env, seed, args.steps)
        path = _out(cfg, args.file, seed, multi)
        ds.save(path)
        print(f"wrote {len(ds)} transitions to {path}")


def _load_dataset(path) -> Dataset:
    if path is None:
        raise ConfigError("a --dataset file is required")
    return Dataset.load(path)


def cmd_fit_tensor(args, cfg):
    ds = _load_dataset(cfg.dataset)
    phi = MonomialBasis(ds.X.shape[1], args.phi_degree)
    psi = MonomialBasis(ds.U.shape[1], args.psi_degree)
    tensor = fit_tensor(ds.triples(), phi, psi, args.ridge)
    path = Path(cfg.out) / args.file
    tensor.save(path)
    print(f"wrote tensor d_x={tensor.d_x} d_u={tensor.d_u} from {tensor.n_samples} samples to {path}")


def _skvi_one(payload):
    env_dict, seed, kw, tensor_dict, ds_path = payload
    env = envs.EnvironmentSpec.from_dict(env_dict)
    tensor = KoopmanTensor.from_dict(tensor_dict) if tensor_dict else None
    dataset = Dataset.load(ds_path) if ds_path else None
    return run_skvi(env, seed, tensor=tensor, dataset=dataset, **kw)


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def cmd_skvi(args, cfg):
    env = cfg.make_env()
    tensor_dict = KoopmanTensor.load(cfg.tensor).to_dict() if cfg.tensor else None
    if tensor_dict and not cfg.dataset:
        raise ConfigError("--tensor needs the --dataset whose states SKVI iterates over")
    kw = dict(grid_count=args.grid, alpha=args.alpha, gamma=args.gamma, epochs=args.epochs,
              batch_size=args.batch_size)
    kw.update({k: v for k, v in cfg.hyper.items()})
    runs = _map(_skvi_one, [(env.to_dict(), s, kw, tensor_dict, cfg.dataset) for s in cfg.seeds],
                cfg.jobs)
    multi = len(cfg.seeds) > 1
    for seed, run in zip(cfg.seeds, runs):
        path = _out(cfg, args.file, seed, multi)
        skvi.save_model(path, run.weights, run.grid, args.alpha, args.gamma, run.tensor, env,
                        tensor_path=cfg.tensor)
        print(f"seed {seed}: {len(run.weights.abe_history)} iterations, "
              f"final ABE {run.weights.abe_history[-1]:.4g}; model written to {path}")


def _train_one(payload):
    algo, env_dict, seed, steps, hyper, tensor_dict, degrees, log_path = payload
    env = envs.EnvironmentSpec.from_dict(env_dict)
    tensor = KoopmanTensor.from_dict(tensor_dict) if tensor_dict else None
    cfg = agent_config(hyper)
    with ReturnLogWriter(log_path) as writer:
        def on_episode(rec):
            writer.write(RunRecord(algo, env.kind, seed, rec.episode, rec.step, rec.ret))
        result = run_actor_critic(algo, env, seed, steps=steps, tensor=tensor, config=cfg,
                                  phi_degree=degrees[0], psi_degree=degrees[1],
                                  on_episode=on_episode)
    return result.agent.to_dict()


def cmd_train(args, cfg):
    algo = ALGO_VERBS[args.verb]
    env = cfg.make_env()
    hyper = dict(cfg.hyper)
    if args.alpha is not None:
        hyper["alpha"] = args.alpha
    agent_config(hyper)  # fail fast on bad names
    tensor_dict = None
    if algo == ac.SAKC and cfg.tensor:
        tensor_dict = KoopmanTensor.load(cfg.tensor).to_dict()
    degrees = (getattr(args, "phi_degree", 2), getattr(args, "psi_degree", 2))
    multi = len(cfg.seeds) > 1
    payloads = [(algo, env.to_dict(), s, cfg.steps, hyper, tensor_dict, degrees,
                 _out(cfg, f"{args.verb}_returns.csv", s, multi)) for s in cfg.seeds]
    docs = _map(_train_one, payloads, cfg.jobs)
    for seed, doc in zip(cfg.seeds, docs):
        path = _out(cfg, args.file, seed, multi)
        path.write_text(json.dumps(doc))
        print(f"seed {seed}: model written to {path}")


def cmd_lqr(args, cfg):
    env = cfg.make_env()
    sol = lqr.solve_env(env)
    A, B = lqr.linearize(env)
    if sol.mode == "discrete":
        res = np.abs(lqr.dare_residual(A, B, env.Q, env.R, sol.P)).max()
    else:
        res = np.abs(lqr.care_residual(A, B, env.Q, env.R, sol.P)).max()
    path = Path(cfg.out) / args.file
    lqr.save_model(path, env, sol)
    print(f"{env.kind}: {sol.mode} Riccati, residual {res:.3g}, K = {np.round(sol.K, 6).tolist()}")
    print(f"model written to {path}")
    result = evaluate(lqr.LqrController(env, sol), env, cfg.seeds, cfg.episodes)
    returns = Path(cfg.out) / args.returns
    write_evaluation(returns, evaluation_rows("LQR", env.kind, result))
    print(f"mean return {result['mean']:.4f} +/- {result['std']:.4f} over "
          f"{len(cfg.seeds)} seed(s) x {cfg.episodes} episodes; written to {returns}")


def cmd_evaluate(args, cfg):
    if not cfg.model:
        raise ConfigError("--model is required")
    loaded = load_policy(cfg.model)
    result = evaluate(loaded.policy, loaded.env, cfg.seeds, cfg.episodes)
    path = Path(cfg.out) / args.file
    write_evaluation(path, evaluation_rows(loaded.algo, loaded.env.kind, result))
    for s, v in result["per_seed"].items():
        print(f"seed {s}: mean return {v:.4f}")
    print(f"{loaded.algo} on {loaded.env.kind}: {result['mean']:.4f} +/- {result['std']:.4f} "
          f"over {len(cfg.seeds)} seed(s); written to {path}")


def cmd_ablate(args, cfg):
    env = cfg.make_env()
    study = ablation.default_study(args.study)
    settings = dict(cfg.hyper)
    settings.setdefault("steps", cfg.steps)
    settings.setdefault("episodes", cfg.episodes)
    cells = ablation.run_study(study, env, cfg.seeds, settings, cfg.jobs)
    path = Path(cfg.out) / (args.file or f"ablate_{args.study}_{env.kind}.csv")
    ablation.write_grid(path, study, env.kind, cells)
    failed = sum(c.status != "ok" for c in cells)
    print(f"{len(cells)} cells ({failed} failed) written to {path}")


def _value_weights(path):
    doc = json.loads(Path(path).read_text())
    kind = doc.get("kind")
    if kind == "skvi":
        from ..dictionaries import MonomialBasis as MB
        return np.asarray(doc["w"], float), MB.from_dict(doc["phi_basis"])
    if kind == ac.SAKC:
        t = KoopmanTensor.from_dict(doc["tensor"])
        return np.asarray(doc["w"], float), t.phi_basis
    raise ModelFormat(f"{path}: only SKVI and SAKC models have linear value functions")


def cmd_interpret(args, cfg):
    if not cfg.model:
        raise ConfigError("--model is required")
    w, basis = _value_weights(cfg.model)
    print(interp.format_value_function(w, basis, args.names))
    if not (args.keep or args.zero):
        return
    try:
        w_sparse = interp.sparsify(w, basis, keep=args.keep, zero=args.zero, names=args.names)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    print("sparsified:", interp.format_value_function(w_sparse, basis, args.names))
    if args.evaluate:
        loaded = load_policy(cfg.model)
        if loaded.algo != "SKVI":
            raise ConfigError("re-evaluation after sparsifying is available for SKVI models")
        p = loaded.policy
        sparse_pol = skvi.SkviPolicy(w_sparse, p.tensor, p.env, p.grid, p.alpha, p.gamma)
        full = evaluate(p, loaded.env, cfg.seeds, cfg.episodes)["mean"]
        sparse = evaluate(sparse_pol, loaded.env, cfg.seeds, cfg.episodes)["mean"]
        print(f"mean return full {full:.4f}, sparsified {sparse:.4f} "
              f"({100.0 * (sparse - full) / abs(full):+.2f}%)")


def cmd_report(args, cfg):
    records = []
    for path in args.logs:
        records += read_return_log(path)
    if not records:
        raise ConfigError("the return logs contain no records")
    rows = summarize(records, args.bins)
    path = Path(cfg.out) / args.file
    write_summary(path, rows)
    print(f"{len(rows)} rows written to {path}")


COMMANDS = {"collect": cmd_collect, "fit-tensor": cmd_fit_tensor, "skvi": cmd_skvi,
            "sakc": cmd_train, "sac-v": cmd_train, "sac-q": cmd_train, "lqr": cmd_lqr,
            "evaluate": cmd_evaluate, "ablate": cmd_ablate, "interpret": cmd_interpret,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.verb](args, cfg)
    except (ConfigError, ModelFormat, DimensionMismatch, InsufficientData,
            FileNotFoundError, KeyError) as exc:
        print(f"karl {args.verb}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteState, SingularSystem, NoConvergence, FloatingPointError) as exc:
        print(f"karl {args.verb}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
