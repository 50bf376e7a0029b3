"""Monte Carlo benchmarking of the guidance laws and trajectory export."""

from __future__ import annotations

import json
import logging
import multiprocessing
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .env import run_episode
from .seeding import episode_seeds

log = logging.getLogger(__name__)

# fixed column schema of exported trajectory files
TRACE_COLUMNS = (
    "t",
    "theta_yaw", "theta_pitch", "theta_roll",
    "omega_losc",
    "a_m", "a_t",
    "r_m_x", "r_m_y", "r_m_z",
    "r_t_x", "r_t_y", "r_t_z",
)


class BenchmarkError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkStats:
    law: str
    episodes: int
    thresholds_cm: tuple
    miss_pct: tuple
    accel_mean: float
    accel_std: float
    accel_max: float
    target_accel_mean: float
    target_accel_std: float
    target_accel_max: float
    miss_median: float
    failures: int = 0
    failed_seeds: tuple = field(default_factory=tuple)

    def pct_below(self, cm: float) -> float:
        return self.miss_pct[list(self.thresholds_cm).index(float(cm))]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["thresholds_cm"] = list(self.thresholds_cm)
        d["miss_pct"] = list(self.miss_pct)
        d["failed_seeds"] = list(self.failed_seeds)
        return d


def summarize(law: str, misses, accel, target_accel, thresholds_cm=(100.0, 200.0, 300.0), failed_seeds=()) -> BenchmarkStats:
    """Build stats from merged samples; insensitive to episode order up to rounding."""
    misses = np.asarray(misses, dtype=float)
    if misses.size == 0:
        raise BenchmarkError("no successful episodes to summarize")
    accel = np.asarray(accel, dtype=float)
    target_accel = np.asarray(target_accel, dtype=float)
    thresholds = tuple(sorted(float(t) for t in thresholds_cm))
    pct = tuple(float(100.0 * np.mean(misses < t / 100.0)) for t in thresholds)

    def moments(x):
        if x.size == 0:
            return 0.0, 0.0, 0.0
        return float(x.mean()), float(x.std()), float(x.max())

    return BenchmarkStats(
        law, int(misses.size), thresholds, pct, *moments(accel), *moments(target_accel),
        float(np.median(misses)), len(failed_seeds), tuple(int(s) for s in failed_seeds),
    )


def _make_policy(cfg, checkpoint):
    if cfg.guidance.law != "pn-losc":
        return None
    from .ppo import PolicyController

    return PolicyController.from_checkpoint(checkpoint)


def _run_chunk(args):
    cfg, checkpoint, chunk = args
    policy = _make_policy(cfg, checkpoint)
    out = []
    for index, seed in chunk:
        try:
            r = run_episode(cfg, policy, np.random.default_rng(seed))
        except Exception as exc:  # noqa: BLE001 - one bad episode must not sink the run
            log.warning("episode %d (seed %d) failed: %s", index, seed, exc)
            out.append((index, seed, None))
            continue
        out.append((index, seed, (r.miss, np.asarray(r.accel_samples), np.asarray(r.target_accel_samples))))
    return out


def _resolve_checkpoint(cfg, checkpoint):
    checkpoint = checkpoint or cfg.bench.checkpoint
    if cfg.guidance.law == "pn-losc":
        if not checkpoint:
            raise BenchmarkError("law pn-losc needs a trained checkpoint (bench.checkpoint or --checkpoint)")
        if not Path(checkpoint).is_file():
            raise BenchmarkError(f"checkpoint {checkpoint} not found")
    return checkpoint or None


def run_benchmark(cfg, episodes: int | None = None, checkpoint=None, workers: int | None = None) -> BenchmarkStats:
    """Fly ``episodes`` seeded engagements with ``cfg.guidance.law`` and aggregate them.

    Episode ``i`` uses seed ``episode_seed(cfg.seed, i)`` so any single
    episode can be replayed on its own.
    """
    n = cfg.bench.episodes if episodes is None else int(episodes)
    if n <= 0:
        raise BenchmarkError("episode count must be positive")
    checkpoint = _resolve_checkpoint(cfg, checkpoint)
    workers = cfg.bench.workers if workers is None else int(workers)
    workers = max(1, min(workers or os.cpu_count() or 1, n))

    items = list(enumerate(episode_seeds(cfg.seed, n)))
    if workers == 1:
        results = _run_chunk((cfg, checkpoint, items))
    else:
        chunks = [items[i::workers] for i in range(workers)]
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            results = [r for part in pool.map(_run_chunk, [(cfg, checkpoint, c) for c in chunks]) for r in part]
    # merge in episode order so floating-point sums do not depend on scheduling
    results.sort(key=lambda r: r[0])
    ok = [r[2] for r in results if r[2] is not None]
    failed = [r[1] for r in results if r[2] is None]
    if not ok:
        raise BenchmarkError(f"all {n} episodes failed")
    return summarize(
        cfg.guidance.law,
        [m for m, _, _ in ok],
        np.concatenate([a for _, a, _ in ok]),
        np.concatenate([t for _, _, t in ok]),
        cfg.bench.thresholds_cm,
        failed,
    )


def format_table(stats) -> str:
    """Plain-text table with one row per law."""
    stats = [stats] if isinstance(stats, BenchmarkStats) else list(stats)
    thresholds = stats[0].thresholds_cm
    head = ["law"] + [f"<{t:g}cm %" for t in thresholds] + [
        "aM mean", "aM std", "aM max", "aT mean", "aT std", "aT max", "episodes", "failed",
    ]
    rows = []
    for s in stats:
        rows.append(
            [s.law] + [f"{p:.1f}" for p in s.miss_pct]
            + [f"{v:.1f}" for v in (s.accel_mean, s.accel_std, s.accel_max)]
            + [f"{v:.1f}" for v in (s.target_accel_mean, s.target_accel_std, s.target_accel_max)]
            + [str(s.episodes), str(s.failures)]
        )
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    line = lambda r: "  ".join(c.rjust(w) for c, w in zip(r, widths))  # noqa: E731
    return "\n".join([line(head), "  ".join("-" * w for w in widths)] + [line(r) for r in rows]) + "\n"


def write_report(stats, out_dir, stem: str = "bench") -> tuple[Path, Path]:
    """Write ``<stem>.txt`` (table) and ``<stem>.json`` (summary) into ``out_dir``."""
    stats = [stats] if isinstance(stats, BenchmarkStats) else list(stats)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    txt, js = out_dir / f"{stem}.txt", out_dir / f"{stem}.json"
    txt.write_text(format_table(stats))
    js.write_text(json.dumps([s.to_dict() for s in stats], indent=2) + "\n")
    return txt, js


def export_trajectory(cfg, seed: int, out_dir, checkpoint=None, policy=None) -> Path:
    """Fly one episode from RNG seed ``seed`` and write its trace.

    Produces ``trace_<law>_<seed>.csv`` with :data:`TRACE_COLUMNS` and a JSON
    sidecar holding the miss distance, termination and maneuver.
    """
    from .dynamics import EpisodeTrace

    if policy is None:
        policy = _make_policy(cfg, _resolve_checkpoint(cfg, checkpoint))
    result, trace = run_episode(cfg, policy, np.random.default_rng(seed), record_trace=True)
    idx = [EpisodeTrace.columns.index(c) for c in TRACE_COLUMNS]
    data = trace.as_array()[:, idx]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"trace_{cfg.guidance.law}_{seed}.csv"
    np.savetxt(path, data, delimiter=",", header=",".join(TRACE_COLUMNS), comments="", fmt="%.10g")
    meta = {
        "seed": int(seed),
        "law": cfg.guidance.law,
        "miss": result.miss,
        "termination": result.termination_kind,
        "steps": result.steps,
        "maneuver": _episode_maneuver(cfg, seed),
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def _episode_maneuver(cfg, seed: int) -> dict:
    from .scenario import sample_initial_conditions

    ic = sample_initial_conditions(cfg.scenario, np.random.default_rng(seed))
    d = ic.maneuver.to_dict()
    # JSON has no infinity
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


def read_trace(path) -> dict:
    """Load an exported trace as a column-name -> array mapping."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return {name: data[:, i] for i, name in enumerate(header)}
