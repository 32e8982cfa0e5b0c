"""Episode-set metrics and model comparison tables."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

CSV_COLUMNS = [
    "model",
    "split",
    "success",
    "spl",
    "success_L5",
    "spl_L5",
    "n_episodes",
    "seed_count",
    "std_success",
    "std_spl",
]


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    path_length: int
    optimal_length: int
    failed: tuple = ()
    scene_id: int = -1
    target: int = -1

    def __post_init__(self):
        if self.path_length < 0 or self.optimal_length < 0:
            raise ValueError("path lengths must be non-negative")
        if len(self.failed) != self.path_length:
            raise ValueError("one failed flag per action is required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["failed"] = [bool(f) for f in self.failed]
        return d


@dataclass
class MetricsReport:
    success_rate: float
    spl: float
    success_rate_L5: float | None
    spl_L5: float | None
    failed_ratio_curve: list
    n_episodes: int
    n_episodes_L5: int
    counts_per_scene: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _require(results):
    if len(results) == 0:
        raise ValueError("metrics need at least one episode")


def success_rate(results: Sequence[EpisodeResult]) -> float:
    _require(results)
    return sum(1 for r in results if r.success) / len(results)


def spl(results: Sequence[EpisodeResult]) -> float:
    _require(results)
    total = 0.0
    for r in results:
        if not r.success:
            continue
        denom = max(r.path_length, r.optimal_length)
        total += 1.0 if denom == 0 else r.optimal_length / denom
    return total / len(results)


def filter_min_optimal(results: Sequence[EpisodeResult], threshold: int = 5) -> list:
    return [r for r in results if r.optimal_length >= threshold]


def failed_action_curve(results: Sequence[EpisodeResult], buckets: int = 10) -> list:
    """Failed-action ratio per bucket of normalised step index (t / P).

    Buckets with no actions report ``None``.
    """
    fails = np.zeros(buckets)
    counts = np.zeros(buckets)
    for r in results:
        P = r.path_length
        for t, f in enumerate(r.failed):
            b = min(t * buckets // P, buckets - 1)
            counts[b] += 1
            fails[b] += bool(f)
    if counts.sum() == 0:
        raise ValueError("failed_action_curve needs at least one action")
    return [float(f / c) if c else None for f, c in zip(fails, counts)]


def report(results: Sequence[EpisodeResult], buckets: int = 10, threshold: int = 5) -> MetricsReport:
    long = filter_min_optimal(results, threshold)
    counts = {}
    for r in results:
        counts[str(r.scene_id)] = counts.get(str(r.scene_id), 0) + 1
    return MetricsReport(
        success_rate=success_rate(results),
        spl=spl(results),
        success_rate_L5=success_rate(long) if long else None,
        spl_L5=spl(long) if long else None,
        failed_ratio_curve=failed_action_curve(results, buckets),
        n_episodes=len(results),
        n_episodes_L5=len(long),
        counts_per_scene=counts,
    )


def evaluate(agent, tasks, env_cfg, seed: int = 0) -> list:
    """Run ``agent.episode`` on every task; episode i draws from rng([seed, i])."""
    results = []
    for i, task in enumerate(tasks):
        rng = np.random.default_rng([seed, i])
        results.append(agent.episode(task, rng))
    return results


def task_fingerprint(tasks) -> str:
    h = hashlib.sha256()
    for t in tasks:
        h.update(repr(t.key).encode())
    return h.hexdigest()


def compare(runs: dict, split: str = "test") -> list:
    """Aggregate per-model results over training seeds.

    ``runs`` maps model name -> list of (task fingerprint, results), one entry
    per training seed. Every entry across all models must share the same
    fingerprint.
    """
    prints = {fp for entries in runs.values() for fp, _ in entries}
    if len(prints) > 1:
        raise ValueError("models were evaluated on different task sets")
    rows = []
    for model, entries in runs.items():
        per_seed = []
        for _, results in entries:
            long = filter_min_optimal(results)
            per_seed.append(
                (
                    success_rate(results),
                    spl(results),
                    success_rate(long) if long else float("nan"),
                    spl(long) if long else float("nan"),
                    len(results),
                )
            )
        arr = np.array(per_seed, dtype=np.float64)
        rows.append(
            {
                "model": model,
                "split": split,
                "success": float(arr[:, 0].mean()),
                "spl": float(arr[:, 1].mean()),
                "success_L5": float(arr[:, 2].mean()),
                "spl_L5": float(arr[:, 3].mean()),
                "n_episodes": int(arr[:, 4].sum()),
                "seed_count": len(per_seed),
                "std_success": float(arr[:, 0].std()),
                "std_spl": float(arr[:, 1].std()),
            }
        )
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def rows_to_json(rows) -> str:
    return json.dumps(rows, indent=2, sort_keys=False)
