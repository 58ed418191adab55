"""Cross-entropy-method MPC over mixed continuous/binary action sequences."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .belief import BeliefEnsemble, multinomial_sample
from .core import ActionSpec, GenerativeModel
from .efe import EFEBreakdown, evaluate_policies

P_MIN, P_MAX = 0.02, 0.98
SIGMA_MIN_FRACTION = 1e-3
WARM_STD_FLOOR = 0.25


@dataclass(frozen=True)
class PlannerConfig:
    n_policies: int = 64
    elite_fraction: float = 0.1
    iterations: int = 5
    n_planning: int = 100
    horizon: int = 20
    warm_start: bool = False
    # AR(1) coefficient of the sampling noise along the horizon; 0 = independent steps
    noise_correlation: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.noise_correlation < 1.0:
            raise ValueError("noise_correlation must be in [0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.n_elites < 2:
            raise ValueError(
                f"{self.n_policies} policies x {self.elite_fraction} leaves fewer than 2 elites"
            )

    @property
    def n_elites(self) -> int:
        return int(round(self.n_policies * self.elite_fraction))


@dataclass(frozen=True)
class PolicyDistribution:
    """Independent per-step Gaussians (continuous) and Bernoullis (binary)."""

    mean: np.ndarray  # (H, n_continuous)
    std: np.ndarray  # (H, n_continuous)
    p_on: np.ndarray  # (H, n_discrete)

    @property
    def horizon(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def initial(cls, spec: ActionSpec, horizon: int, p_on: float | None = None) -> "PolicyDistribution":
        mid = np.clip(0.0, spec.lo, spec.hi)
        half = 0.5 * np.maximum(np.abs(spec.lo), np.abs(spec.hi))
        p = 0.5 if p_on is None else p_on
        return cls(
            np.tile(mid, (horizon, 1)),
            np.tile(np.maximum(half, sigma_min(spec)), (horizon, 1)),
            np.clip(np.full((horizon, spec.n_discrete), p), P_MIN, P_MAX),
        )

    def mean_policy(self) -> np.ndarray:
        """Per-step means, with binary dims at their mode."""
        return np.concatenate([self.mean, (self.p_on >= 0.5).astype(float)], axis=1)

    def shifted(self, spec: ActionSpec, p_on: float | None = None,
                keep_binary: bool = False) -> "PolicyDistribution":
        """Receding-horizon warm start: drop step 1, append a fresh final step.

        Continuous stddevs are kept at least ``WARM_STD_FLOOR`` of the fresh
        value so the search can still move. Binary dims restart from the
        prior unless ``keep_binary``; carried-over gaze probabilities sit at
        the clip bounds and would otherwise lock the gaze pattern in.
        """
        fresh = PolicyDistribution.initial(spec, self.horizon, p_on)
        p = np.concatenate([self.p_on[1:], fresh.p_on[:1]]) if keep_binary else fresh.p_on
        return PolicyDistribution(
            np.concatenate([self.mean[1:], fresh.mean[:1]]),
            np.concatenate([np.maximum(self.std[1:], WARM_STD_FLOOR * fresh.std[1:]), fresh.std[:1]]),
            p,
        )


def sigma_min(spec: ActionSpec) -> np.ndarray:
    return np.maximum(SIGMA_MIN_FRACTION * (spec.hi - spec.lo), 1e-12)


def correlated_normal(rng: np.random.Generator, shape, rho: float) -> np.ndarray:
    """Standard normals that follow a stationary AR(1) along axis 1."""
    z = rng.standard_normal(shape)
    if rho:
        c = np.sqrt(1.0 - rho * rho)
        for t in range(1, shape[1]):
            z[:, t] = rho * z[:, t - 1] + c * z[:, t]
    return z


def sample_policies(dist: PolicyDistribution, m: int, rng: np.random.Generator,
                    spec: ActionSpec, rho: float = 0.0) -> np.ndarray:
    """Draw ``m`` action sequences ``(m, H, A)``, clamped to actuator bounds.

    Each step's marginal is the step's Gaussian; ``rho`` only correlates the
    draws of neighbouring steps.
    """
    h = dist.horizon
    cont = dist.mean + dist.std * correlated_normal(rng, (m, h, spec.n_continuous), rho)
    cont = np.clip(cont, spec.lo, spec.hi)
    bits = (rng.random((m, h, spec.n_discrete)) < dist.p_on).astype(float)
    return np.concatenate([cont, bits], axis=2)


def refit(elites: np.ndarray, spec: ActionSpec) -> PolicyDistribution:
    """Fit per-step Gaussians (sample std, floored) and clipped Bernoullis."""
    elites = np.asarray(elites, dtype=float)
    if elites.shape[0] < 2:
        raise ValueError("refit needs at least 2 elite policies")
    nc = spec.n_continuous
    cont = elites[..., :nc]
    mean = cont.mean(axis=0)
    std = np.maximum(cont.std(axis=0, ddof=1), sigma_min(spec))
    p_on = np.clip(elites[..., nc:].mean(axis=0), P_MIN, P_MAX)
    return PolicyDistribution(mean, std, p_on)


Evaluator = Callable[[np.ndarray, np.random.Generator], EFEBreakdown]


@dataclass
class PlanResult:
    action: np.ndarray
    breakdown: EFEBreakdown
    distribution: PolicyDistribution
    elite_scores: list[float] = field(default_factory=list)


def gaze_prior(model: GenerativeModel) -> float | None:
    """Initial on-probability for binary action dims implied by the preferences."""
    prior = getattr(model, "gaze_log_preference", None)
    return None if prior is None else float(np.exp(prior))


def cem(evaluate: Evaluator, spec: ActionSpec, cfg: PlannerConfig,
        rng: np.random.Generator, init: PolicyDistribution) -> PlanResult:
    """Generic CEM loop; ``evaluate(policies, rng)`` returns a batched breakdown."""
    dist = init
    history = []
    for _ in range(cfg.iterations):
        policies = sample_policies(dist, cfg.n_policies, rng, spec, cfg.noise_correlation)
        scores = evaluate(policies, rng).total
        order = np.argsort(scores, kind="stable")[: cfg.n_elites]
        history.append(float(scores[order].mean()))
        dist = refit(policies[order], spec)
    chosen = dist.mean_policy()
    breakdown = evaluate(chosen[None], rng)[0]
    action = spec.clamp(chosen[0])
    return PlanResult(action, breakdown, dist, history)


def plan(b: BeliefEnsemble, model: GenerativeModel, cfg: PlannerConfig,
         rng: np.random.Generator, previous: PolicyDistribution | None = None) -> PlanResult:
    """Choose the next action by CEM over expected free energy.

    Planning particles are drawn once per call by multinomial resampling from
    the belief; every candidate in an iteration sees the same particles and
    process noise.
    """
    spec = model.actions
    prior = gaze_prior(model)
    if cfg.warm_start and previous is not None:
        init = previous.shifted(spec, prior)
    else:
        init = PolicyDistribution.initial(spec, cfg.horizon, prior)
    particles = multinomial_sample(b, cfg.n_planning, rng)

    def evaluate(policies, rng_):
        noise = model.sample_noise(rng_, (cfg.horizon, cfg.n_planning))
        return evaluate_policies(particles, policies, model, noise=noise)

    return cem(evaluate, spec, cfg, rng, init)


def with_overrides(cfg: PlannerConfig, **kw) -> PlannerConfig:
    return replace(cfg, **kw)
