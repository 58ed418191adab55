"""Summary statistics, diagnostics and table export for simulation traces."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import stats as sps

from .efe import predictive_entropy
from .trace import SimTrace

REVERSAL_THRESHOLD = 0.0025  # rad


def _speed(trace: SimTrace) -> np.ndarray:
    for col in ("s_v", "s_vx"):
        if col in trace:
            return trace[col]
    raise KeyError("trace has no speed column")


def _gaze(trace: SimTrace) -> np.ndarray | None:
    # only the timeshare scenario carries a gaze slot (stored as I)
    if trace.meta.get("scenario") == "timeshare" or "a_gaze" in trace:
        return trace["s_I"]
    return None


def sdlp(trace: SimTrace) -> float:
    """Standard deviation of lane position (population convention, ddof=0)."""
    y = trace["s_y"]
    if y.size == 0:
        raise ValueError("empty trace")
    return float(np.std(y))


def steering_reversals(trace: SimTrace, threshold: float = REVERSAL_THRESHOLD) -> int:
    """Number of ticks with front-wheel angle magnitude above ``threshold``.

    This is a threshold-exceedance count. For a count of sign changes see
    :func:`steering_sign_reversals`.
    """
    return int(np.count_nonzero(np.abs(trace["s_delta"]) > threshold))


def steering_sign_reversals(trace: SimTrace, gap: float = 0.0) -> int:
    """Conventional reversal count: sign changes of the steering angle.

    Values inside ``[-gap, gap]`` are ignored so jitter around zero does not
    register.
    """
    d = trace["s_delta"]
    s = np.sign(d[np.abs(d) > gap])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def glance_runs(gaze) -> list[int]:
    """Lengths (in ticks) of maximal runs of off-road gaze (gaze == 0)."""
    off = np.asarray(gaze) < 0.5
    runs, n = [], 0
    for v in off:
        if v:
            n += 1
        elif n:
            runs.append(n)
            n = 0
    if n:
        runs.append(n)
    return runs


def glance_stats(trace: SimTrace) -> tuple[int, float]:
    """(off-road glance count, mean single-glance duration in s); no glances -> (0, 0.0)."""
    gaze = _gaze(trace)
    if gaze is None:
        return 0, 0.0
    runs = glance_runs(gaze)
    if not runs:
        return 0, 0.0
    return len(runs), float(np.mean(runs)) * trace.dt


def lane_exits(trace: SimTrace) -> int:
    """Number of ticks where the ego enters the area outside the lane."""
    half = trace.meta.get("scene", {}).get("lane_width", 3.0) / 2
    out = np.abs(trace["s_y"]) > half
    return int(np.count_nonzero(out[1:] & ~out[:-1]) + bool(out[0])) if out.size else 0


@dataclass
class RunStats:
    mean_speed: float
    sdlp: float
    steering_reversals: int
    glance_count: int
    glance_duration: float
    lane_exits: int


def run_stats(trace: SimTrace) -> RunStats:
    count, duration = glance_stats(trace)
    has_delta = "s_delta" in trace
    return RunStats(
        mean_speed=float(np.mean(_speed(trace))),
        sdlp=sdlp(trace),
        steering_reversals=steering_reversals(trace) if has_delta else 0,
        glance_count=count,
        glance_duration=duration,
        lane_exits=lane_exits(trace),
    )


def bootstrap_ci(x, seed: int = 0, n_resamples: int = 2000, level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean; degenerate inputs give (mean, mean)."""
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    if x.size < 2 or np.all(x == x[0]):
        return m, m
    res = sps.bootstrap((x,), np.mean, n_resamples=n_resamples, confidence_level=level,
                        method="percentile", random_state=np.random.default_rng(seed))
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def aggregate(runs: list[RunStats], seed: int = 0) -> dict[str, dict[str, float]]:
    """Mean and bootstrap 95% interval of every RunStats field."""
    if not runs:
        raise ValueError("no runs to aggregate")
    out = {}
    for f in fields(RunStats):
        x = np.array([getattr(r, f.name) for r in runs], dtype=float)
        lo, hi = bootstrap_ci(x, seed=seed)
        out[f.name] = {"mean": float(x.mean()), "ci_low": lo, "ci_high": hi}
    return out


# --- diagnostics ---------------------------------------------------------------


def epistemic_map(model, particles, xs, ys) -> np.ndarray:
    """One-step epistemic value of observing from each ego pose on a grid.

    Every belief particle is moved to the pose ``(x, y)`` (hidden context is
    kept) and the entropy of the resulting predicted observations is taken.
    The scenario's observation model is deterministic, so ambiguity is zero.
    Returns an array of shape ``(len(ys), len(xs))``.
    """
    from .scenarios.occlusion import X, Y

    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    gx, gy = np.meshgrid(xs, ys)
    batch = np.broadcast_to(particles, gx.shape + particles.shape).copy()
    batch[..., X] = gx[..., None]
    batch[..., Y] = gy[..., None]
    values, mask = model.observe(batch)
    return np.asarray(predictive_entropy(values, mask, model.obs_schema))


def map_rows(field_, xs, ys) -> list[tuple[float, float, float]]:
    return [(float(x), float(y), float(field_[j, i]))
            for j, y in enumerate(ys) for i, x in enumerate(xs)]


def value_decomposition(trace: SimTrace) -> tuple[np.ndarray, np.ndarray]:
    """Per-tick (pragmatic, epistemic) of the selected policy.

    Pragmatic values use log-preferences truncated at -100, the export
    convention for lane-exit terms.
    """
    return trace["pragmatic_display"], trace["epistemic"]


# --- export -------------------------------------------------------------------


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def stats_csv(runs: list[RunStats], extra: dict | None = None) -> str:
    extra = extra or {}
    names = [f.name for f in fields(RunStats)]
    header = list(extra) + ["run"] + names
    rows = [list(extra.values()) + [i] + list(asdict(r).values()) for i, r in enumerate(runs)]
    return _csv(header, rows)


def summary_csv(cells: list[tuple[dict, dict]]) -> str:
    """Long-format aggregate table: one row per (cell, metric)."""
    keys = list(cells[0][0]) if cells else []
    rows = []
    for cell, summary in cells:
        for metric, v in summary.items():
            rows.append([cell[k] for k in keys] + [metric, v["mean"], v["ci_low"], v["ci_high"]])
    return _csv(keys + ["metric", "mean", "ci_low", "ci_high"], rows)


def map_csv(rows) -> str:
    return _csv(["x", "y", "value"], rows)

