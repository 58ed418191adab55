"""Closed-loop simulation: plan, act, observe, filter; batches and sweeps."""
from __future__ import annotations

import itertools
import logging
import platform
from dataclasses import dataclass

import numpy as np

from . import __version__
from .analysis import RunStats, aggregate, run_stats
from .belief import BeliefEnsemble, FilterDivergence, filter_step, reweight
from .config import RunConfig
from .core import Observation
from .planner import plan
from .trace import SimTrace

log = logging.getLogger(__name__)

STREAMS = ("environment", "filter", "planner")


def streams(seed: int, run: int = 0) -> dict[str, np.random.Generator]:
    """Independent generators for one episode.

    Stream ``k`` of run ``r`` under master seed ``s`` is seeded by
    ``SeedSequence(s, spawn_key=(r, k))``.
    """
    return {
        name: np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run, k))))
        for k, name in enumerate(STREAMS)
    }


class EpisodeError(RuntimeError):
    def __init__(self, tick: int, cause: Exception):
        self.tick = tick
        super().__init__(f"episode aborted at tick {tick}: {cause}")


def _row(t, dt, model, state, obs: Observation, belief: BeliefEnsemble, result) -> dict:
    row = {"tick": float(t), "time": t * dt}
    for name, v in zip(model.state_schema.names, state):
        row[f"s_{name}"] = v
    for name, v, m in zip(model.obs_schema.names, obs.values, obs.mask):
        row[f"o_{name}"] = v if m else np.nan
    row.update(belief.summary(model.state_schema))
    for name, v in zip(model.actions.names + model.actions.discrete_names, result.action):
        row[f"a_{name}"] = v
    bd = result.breakdown
    row["pragmatic"] = float(bd.pragmatic.sum())
    row["epistemic"] = float(bd.epistemic.sum())
    row["pragmatic_display"] = float(bd.pragmatic_display.sum())
    row["efe"] = float(bd.total)
    row["pragmatic_step1"] = float(bd.pragmatic[0])
    row["epistemic_step1"] = float(bd.epistemic[0])
    return row


def run_episode(cfg: RunConfig, seed: int | None = None, run: int = 0) -> SimTrace:
    """Simulate one episode; deterministic given ``(cfg, seed, run)``."""
    seed = cfg.seed if seed is None else seed
    rng = streams(seed, run)
    model = cfg.model()
    scene = model.scene
    pcfg = cfg.planner_obj()
    state = model.initial_state()
    values, mask = model.observe(state)
    obs = Observation(values, mask)
    belief = reweight(model.init_belief(n=cfg.n_particles), obs, model, tick=0)
    rows = []
    previous = None
    for t in range(scene.n_ticks):
        try:
            result = plan(belief, model, pcfg, rng["planner"], previous)
            previous = result.distribution
            rows.append(_row(t, model.dt, model, state, obs, belief, result))
            state = model.step(state, result.action, rng["environment"])
            obs = Observation(*model.observe(state))
            belief = filter_step(belief, result.action, obs, model, rng["filter"], tick=t + 1)
        except FilterDivergence as exc:
            raise EpisodeError(t + 1, exc) from exc
    meta = {
        "config": cfg.to_dict(),
        "seed": seed,
        "run": run,
        "dt": model.dt,
        "scenario": cfg.scenario,
        "scene": {k: list(v) if isinstance(v, tuple) else v for k, v in scene.to_dict().items()},
        "state_schema": model.state_schema.to_dict(),
        "obs_schema": model.obs_schema.to_dict(),
        "versions": {"activedrive": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    return SimTrace.from_rows(rows, meta)


@dataclass
class BatchResult:
    traces: list[SimTrace]
    stats: list[RunStats]
    summary: dict[str, dict[str, float]]


def run_batch(cfg: RunConfig, progress=None) -> BatchResult:
    """Run ``cfg.runs`` episodes with per-run streams derived from ``cfg.seed``."""
    traces, errors = [], []
    for r in range(cfg.runs):
        try:
            traces.append(run_episode(cfg, cfg.seed, r))
        except EpisodeError as exc:
            errors.append(f"run {r}: {exc}")
            continue
        if progress:
            progress(r)
    if errors:
        raise RuntimeError("batch failed:\n" + "\n".join(errors))
    stats = [run_stats(t) for t in traces]
    return BatchResult(traces, stats, aggregate(stats, seed=cfg.seed))


def sweep_cells(cfg: RunConfig) -> list[dict]:
    if not cfg.sweep:
        raise ValueError("sweep needs at least one axis")
    axes = list(cfg.sweep)
    return [dict(zip(axes, combo)) for combo in itertools.product(*(cfg.sweep[a] for a in axes))]


def run_sweep(cfg: RunConfig, progress=None) -> list[tuple[dict, BatchResult]]:
    """Cartesian product of sweep axes, one batch per cell."""
    out = []
    for cell in sweep_cells(cfg):
        cell_cfg = cfg.with_overrides({**cell, "sweep": {}})
        log.info("sweep cell %s", cell)
        out.append((cell, run_batch(cell_cfg, progress)))
    return out
