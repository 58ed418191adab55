"""Passing a parked vehicle that may hide a pedestrian.

Coordinates: the ego drives along +x with the lane centred on y = 0. The
occluder sits on the +y side of the lane and its corner nearest to the
lane and furthest ahead (``tip``) bounds the view; the pedestrian, if
present, waits just past it at ``site``. Moving toward -y (away from the
occluder) brings the site into view earlier.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..belief import BeliefEnsemble
from ..core import (
    LOG_FLOOR,
    ActionSpec,
    Categorical,
    Gaussian,
    GenerativeModel,
    PreferenceModel,
    Schema,
    Slot,
    Triangular,
)

NULL_POSITION = -1000.0

I, C, PED_X, PED_Y, X, VX, AX, Y, VY, AY = range(10)

STATE_SCHEMA = Schema((
    Slot("I", "discrete", levels=2),
    Slot("C", "discrete", levels=2),
    Slot("ped_x", resolution=0.01),
    Slot("ped_y", resolution=0.01),
    Slot("x", resolution=0.01),
    Slot("vx", resolution=0.01),
    Slot("ax", resolution=0.01),
    Slot("y", resolution=0.01),
    Slot("vy", resolution=0.01),
    Slot("ay", resolution=0.01),
))

OBS_SCHEMA = Schema((
    Slot("oI", "discrete", levels=2, always_observed=True),
    Slot("oC", "discrete", levels=2, always_observed=True),
    Slot("ped_x", resolution=0.01),
    Slot("ped_y", resolution=0.01),
    Slot("x", resolution=0.01, always_observed=True),
    Slot("vx", resolution=0.01, always_observed=True),
    Slot("ax", resolution=0.01, always_observed=True),
    Slot("y", resolution=0.01, always_observed=True),
    Slot("vy", resolution=0.01, always_observed=True),
    Slot("ay", resolution=0.01, always_observed=True),
))


@dataclass(frozen=True)
class OcclusionScene:
    tip: tuple[float, float] = (40.0, 1.2)
    site: tuple[float, float] = (43.0, 1.4)
    lane_width: float = 3.0
    speed_limit: float = 10.0
    pedestrian_present: bool = False
    prior_present: float = 0.2
    safe_distance: float = 2.0
    dt: float = 0.2
    lateral_mobility: bool = False
    run_length: float = 8.0
    start: tuple[float, float] = (0.0, 0.0)
    max_accel: float = 4.0
    max_lateral_accel: float = 2.0
    speed_sigma: float = 1.0
    accel_sigma: float = 0.5

    def __post_init__(self):
        if self.safe_distance <= 0:
            raise ValueError("safe_distance must be positive")
        if self.site[0] <= self.tip[0]:
            raise ValueError("pedestrian site must lie beyond the occluder tip in x")
        if not 0.0 <= self.prior_present <= 1.0:
            raise ValueError("prior_present must be a probability")

    @property
    def n_ticks(self) -> int:
        return int(round(self.run_length / self.dt))

    def to_dict(self) -> dict:
        return asdict(self)


def los_visible(ego, tip, site) -> np.ndarray:
    """Whether the site is in view from ``ego`` past an occluder on the +y side.

    The site is hidden while it lies on the occluder side of the ray from the
    ego through the tip, i.e. while the cross product (tip - ego) x (site - ego)
    is positive. The collinear case counts as visible, and so does any ego
    at or past the site in x.
    """
    ego = np.asarray(ego, dtype=float)
    ex, ey = ego[..., 0], ego[..., 1]
    tx, ty = tip
    sx, sy = site
    cross = (tx - ex) * (sy - ey) - (ty - ey) * (sx - ex)
    return (cross <= 0.0) | (ex >= sx)


class OcclusionModel(GenerativeModel):
    """Point-mass ego with double-integrator dynamics and a possible pedestrian."""

    state_schema = STATE_SCHEMA
    obs_schema = OBS_SCHEMA
    noise_dim = 0

    def __init__(self, scene: OcclusionScene = OcclusionScene()):
        self.scene = scene
        self.dt = scene.dt
        lat = scene.max_lateral_accel if scene.lateral_mobility else 0.0
        self.actions = ActionSpec(("ax", "ay"), (-scene.max_accel, -lat), (scene.max_accel, lat))
        half = scene.lane_width / 2
        self.preferences = PreferenceModel(OBS_SCHEMA, (
            Gaussian("vx", scene.speed_limit, scene.speed_sigma),
            Triangular("y", 0.0, -half, half),
            Gaussian("ax", 0.0, scene.accel_sigma),
            Gaussian("ay", 0.0, scene.accel_sigma),
            Categorical("oC", (0.0, LOG_FLOOR)),
        ))

    def conflict(self, states) -> np.ndarray:
        sc = self.scene
        present = states[..., I] == 1
        close = states[..., PED_X] - states[..., X] < sc.safe_distance
        out = present & close
        if sc.lateral_mobility:
            out = out | (np.abs(states[..., Y]) > sc.lane_width / 2)
        return out

    def transition(self, states, actions, noise=None):
        states = np.asarray(states, dtype=float)
        actions = self.actions.clamp(np.broadcast_to(actions, states.shape[:-1] + (2,)))
        dt = self.dt
        ax, ay = actions[..., 0], actions[..., 1]
        out = np.array(states, dtype=float, copy=True)
        vx = states[..., VX]
        vx_new = np.maximum(vx + ax * dt, 0.0)
        out[..., X] = states[..., X] + 0.5 * (vx + vx_new) * dt
        out[..., VX] = vx_new
        out[..., AX] = (vx_new - vx) / dt
        vy = states[..., VY]
        out[..., Y] = states[..., Y] + vy * dt + 0.5 * ay * dt * dt
        out[..., VY] = vy + ay * dt
        out[..., AY] = ay
        out[..., C] = self.conflict(out)
        return out

    def observe(self, states):
        states = np.asarray(states, dtype=float)
        sc = self.scene
        visible = los_visible(states[..., [X, Y]], sc.tip, sc.site)
        values = np.array(states, copy=True)
        values[..., I] = visible
        mask = np.ones(states.shape, dtype=bool)
        mask[..., PED_X] = visible
        mask[..., PED_Y] = visible
        values[..., PED_X] = np.where(visible, values[..., PED_X], 0.0)
        values[..., PED_Y] = np.where(visible, values[..., PED_Y], 0.0)
        return values, mask

    # --- initial conditions ---

    def initial_state(self, present: bool | None = None) -> np.ndarray:
        sc = self.scene
        present = sc.pedestrian_present if present is None else present
        s = np.zeros(len(STATE_SCHEMA))
        s[I] = float(present)
        s[PED_X], s[PED_Y] = sc.site if present else (NULL_POSITION, NULL_POSITION)
        s[X], s[Y] = sc.start
        s[VX] = sc.speed_limit
        s[C] = self.conflict(s)
        return s

    def init_belief(self, prior_p: float | None = None, n: int = 1000) -> BeliefEnsemble:
        return init_belief(self, self.scene.prior_present if prior_p is None else prior_p, n)


def init_belief(model: OcclusionModel, prior_p: float, n: int) -> BeliefEnsemble:
    """``round(prior_p * n)`` particles with the pedestrian present, the rest absent."""
    if not 0.0 <= prior_p <= 1.0:
        raise ValueError("prior_p must be in [0, 1]")
    k = int(round(prior_p * n))
    particles = np.tile(model.initial_state(present=False), (n, 1))
    particles[:k] = model.initial_state(present=True)
    return BeliefEnsemble.uniform(particles)
