"""Return logs and binned learning-curve summaries."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from ..errors import ModelFormat

RETURN_LOG_HEADER = ["algo", "env", "seed", "episode", "step", "return"]


@dataclass(frozen=True)
class RunRecord:
    algo: str
    env: str
    seed: int
    episode: int
    step: int
    ret: float
    wall_time: float | None = None

    def row(self) -> list:
        return [self.algo, self.env, self.seed, self.episode, self.step, repr(float(self.ret))]


class ReturnLogWriter:
    """Streams records to a CSV file, flushing after each row."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(RETURN_LOG_HEADER)
        self._fh.flush()

    def write(self, record: RunRecord) -> None:
        self._writer.writerow(record.row())
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_return_log(path, records) -> None:
    with ReturnLogWriter(path) as w:
        for r in records:
            w.write(r)


def read_return_log(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RETURN_LOG_HEADER:
            raise ModelFormat(f"{path}: expected header {RETURN_LOG_HEADER}, got {header}")
        out = []
        for row in reader:
            if len(row) != len(RETURN_LOG_HEADER):
                raise ModelFormat(f"{path}: malformed row {row}")
            out.append(RunRecord(row[0], row[1], int(row[2]), int(row[3]), int(row[4]), float(row[5])))
    return out


def bin_edges(max_step: int, n_bins: int) -> np.ndarray:
    """``n_bins`` equal-width bins covering (0, max_step]."""
    return np.linspace(0, max(int(max_step), 1), n_bins + 1)


def summarize(records, n_bins: int = 20) -> list[dict]:
    """Mean and std of returns per (algo, env, step bin).

    Within a bin each seed contributes the mean of its episodes; the
    statistics are then taken across seeds.
    """
    records = list(records)
    if not records:
        raise ValueError("no run records to summarize")
    edges = bin_edges(max(r.step for r in records), n_bins)
    grouped = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
    for r in records:
        b = int(np.clip(np.searchsorted(edges, r.step, side="left") - 1, 0, n_bins - 1))
        grouped[(r.algo, r.env)][b][r.seed].append(r.ret)
    rows = []
    for (algo, env) in sorted(grouped):
        for b in sorted(grouped[(algo, env)]):
            per_seed = [float(np.mean(v)) for _, v in sorted(grouped[(algo, env)][b].items())]
            rows.append({"algo": algo, "env": env, "bin": b, "step_lo": float(edges[b]),
                         "step_hi": float(edges[b + 1]), "n_seeds": len(per_seed),
                         "mean": float(np.mean(per_seed)), "std": float(np.std(per_seed))})
    return rows


def write_summary(path, rows) -> None:
    cols = ["algo", "env", "bin", "step_lo", "step_hi", "n_seeds", "mean", "std"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
