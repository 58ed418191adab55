"""Visual time-sharing on a straight lane with a kinematic bicycle ego.

+y is the left lane boundary side. Gaze is both a state slot and a binary
action: looking off-road hides x, y and heading from the driver while the
rumble-strip flags and in-vehicle quantities stay observable.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..belief import BeliefEnsemble
from ..core import (
    LOG_FLOOR,
    ActionSpec,
    Bernoulli,
    Categorical,
    Gaussian,
    GenerativeModel,
    PreferenceModel,
    Schema,
    Slot,
    Triangular,
)

GAZE, CL, CR, X, Y, THETA, DELTA, V, A, W = range(10)
OFF_ROAD, ON_ROAD = 0, 1


@dataclass(frozen=True)
class TimeshareScene:
    lane_width: float = 3.0
    speed_limit: float = 10.0
    steering_noise: float = 0.001
    wheelbase: float = 2.7
    dt: float = 0.2
    run_length: float = 30.0
    gaze_log_preference: float = -7.0
    speed_sigma: float = 1.0
    accel_sigma: float = 0.5
    steer_rate_sigma: float = 0.005
    max_accel: float = 4.0
    max_steer_rate: float = 0.02
    # perceptual scales: (resolution, likelihood tolerance) per slot
    x_scale: tuple[float, float] = (1e-3, 0.05)
    y_scale: tuple[float, float] = (1e-5, 0.005)
    theta_scale: tuple[float, float] = (1e-6, 1e-4)
    delta_scale: tuple[float, float] = (1e-5, 0.01)
    speed_scale: tuple[float, float] = (1e-3, 0.01)

    def __post_init__(self):
        if self.steering_noise < 0:
            raise ValueError("steering_noise must be non-negative")
        if self.lane_width <= 0:
            raise ValueError("lane_width must be positive")

    @property
    def n_ticks(self) -> int:
        return int(round(self.run_length / self.dt))

    def to_dict(self) -> dict:
        return asdict(self)


def _schemas(scene: TimeshareScene) -> tuple[Schema, Schema]:
    def cont(name, scale, always=False):
        return Slot(name, resolution=scale[0], tolerance=scale[1], always_observed=always)

    ego = [
        cont("x", scene.x_scale),
        cont("y", scene.y_scale),
        cont("theta", scene.theta_scale),
        cont("delta", scene.delta_scale, True),
        cont("v", scene.speed_scale, True),
        cont("a", (1e-3, 1e-3), True),
        cont("w", (1e-5, 1e-5), True),
    ]
    state = Schema((
        Slot("I", "discrete", levels=2),
        Slot("Cl", "discrete", levels=2),
        Slot("Cr", "discrete", levels=2),
        *ego,
    ))
    obs = Schema((
        Slot("oI", "discrete", levels=2, always_observed=True),
        Slot("oCl", "discrete", levels=2, always_observed=True),
        Slot("oCr", "discrete", levels=2, always_observed=True),
        *ego,
    ))
    return state, obs


def bicycle_step(ego, accel, steer_rate, dt, wheelbase, eta=0.0):
    """One explicit-Euler step of the kinematic bicycle.

    ``ego`` columns are (x, y, theta, delta, v, a, w); ``eta`` is the
    steering-rate disturbance already drawn for this step.
    """
    ego = np.asarray(ego, dtype=float)
    x, y, th, de, v = (ego[..., k] for k in range(5))
    out = np.empty(np.broadcast_shapes(ego.shape, np.shape(accel) + (7,)))
    v_new = np.maximum(v + accel * dt, 0.0)
    out[..., 0] = x + v * np.cos(th) * dt
    out[..., 1] = y + v * np.sin(th) * dt
    out[..., 2] = th + v * np.tan(de) / wheelbase * dt
    out[..., 3] = de + (steer_rate + eta) * dt
    out[..., 4] = v_new
    out[..., 5] = (v_new - v) / dt
    out[..., 6] = steer_rate
    return out


def apply_gaze(states, gaze):
    states = np.array(states, dtype=float, copy=True)
    states[..., GAZE] = np.asarray(gaze, dtype=float) >= 0.5
    return states


class TimeshareModel(GenerativeModel):
    noise_dim = 1

    def __init__(self, scene: TimeshareScene = TimeshareScene()):
        self.scene = scene
        self.dt = scene.dt
        self.state_schema, self.obs_schema = _schemas(scene)
        self.actions = ActionSpec(
            ("a", "w"),
            (-scene.max_accel, -scene.max_steer_rate),
            (scene.max_accel, scene.max_steer_rate),
            discrete_names=("gaze",),
        )
        half = scene.lane_width / 2
        self.gaze_log_preference = scene.gaze_log_preference
        self.preferences = PreferenceModel(self.obs_schema, (
            Gaussian("v", scene.speed_limit, scene.speed_sigma),
            Triangular("y", 0.0, -half, half),
            Gaussian("a", 0.0, scene.accel_sigma),
            Gaussian("w", 0.0, scene.steer_rate_sigma),
            Bernoulli("oI", scene.gaze_log_preference),
            Categorical("oCl", (0.0, LOG_FLOOR)),
            Categorical("oCr", (0.0, LOG_FLOOR)),
        ))

    def sample_noise(self, rng, shape):
        return self.scene.steering_noise * rng.standard_normal(tuple(shape) + (1,))

    def transition(self, states, actions, noise=None):
        states = np.asarray(states, dtype=float)
        actions = self.actions.clamp(np.broadcast_to(actions, states.shape[:-1] + (3,)))
        eta = 0.0 if noise is None else noise[..., 0]
        sc = self.scene
        out = np.empty(np.broadcast_shapes(states.shape, actions.shape[:-1] + (states.shape[-1],)))
        out[..., X:] = bicycle_step(states[..., X:], actions[..., 0], actions[..., 1],
                                    sc.dt, sc.wheelbase, eta)
        out[..., GAZE] = actions[..., 2]
        half = sc.lane_width / 2
        out[..., CL] = out[..., Y] > half
        out[..., CR] = out[..., Y] < -half
        return out

    def observe(self, states):
        states = np.asarray(states, dtype=float)
        mask = np.ones(states.shape, dtype=bool)
        on = states[..., GAZE] == ON_ROAD
        for k in (X, Y, THETA):
            mask[..., k] = on
        values = np.where(mask, states, 0.0)
        return values, mask

    def initial_state(self) -> np.ndarray:
        s = np.zeros(len(self.state_schema))
        s[GAZE] = ON_ROAD
        s[V] = self.scene.speed_limit
        return s

    def init_belief(self, n: int = 1000) -> BeliefEnsemble:
        return BeliefEnsemble.uniform(np.tile(self.initial_state(), (n, 1)))


def with_dispersion(model: TimeshareModel, sigma_y: float, n: int = 100,
                    rng: np.random.Generator | None = None, z=None) -> np.ndarray:
    """Planning particles at the nominal state with lateral position ~ N(0, sigma_y^2)."""
    if z is None:
        z = (rng or np.random.default_rng(0)).standard_normal(n)
    particles = np.tile(model.initial_state(), (len(z), 1))
    particles[:, Y] = sigma_y * np.asarray(z)
    half = model.scene.lane_width / 2
    particles[:, CL] = particles[:, Y] > half
    particles[:, CR] = particles[:, Y] < -half
    return particles
