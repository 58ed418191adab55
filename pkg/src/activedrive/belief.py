"""Sequential importance resampling filter over mixed discrete/continuous states."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GenerativeModel, Observation, Schema


class FilterDivergence(RuntimeError):
    """Every particle assigned zero likelihood to an observation."""

    def __init__(self, observation: Observation, tick: int | None = None):
        self.observation = observation
        self.tick = tick
        where = "" if tick is None else f" at tick {tick}"
        super().__init__(
            f"all particles have zero likelihood{where}; "
            f"observation values={observation.values.tolist()} "
            f"mask={observation.mask.astype(int).tolist()}"
        )


@dataclass(frozen=True)
class BeliefEnsemble:
    """N weighted state particles; treated as an immutable value."""

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if p.ndim != 2 or w.shape != (p.shape[0],):
            raise ValueError(f"particles {p.shape} and weights {w.shape} disagree")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-9):
            raise ValueError("weights must be non-negative and sum to 1")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "particles", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, particles: np.ndarray) -> "BeliefEnsemble":
        particles = np.asarray(particles, dtype=float)
        n = particles.shape[0]
        return cls(particles, np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def std(self) -> np.ndarray:
        dev = self.particles - self.mean()
        return np.sqrt(np.maximum(self.weights @ (dev * dev), 0.0))

    def mass(self, slot: int, value: float = 1.0) -> float:
        return float(self.weights[self.particles[:, slot] == value].sum())

    def summary(self, schema: Schema) -> dict[str, float]:
        """Weighted mean/std of continuous slots and mass on ``1`` of discrete ones."""
        mean, std = self.mean(), self.std()
        out = {}
        for i, slot in enumerate(schema.slots):
            if slot.is_discrete:
                out[f"bp_{slot.name}"] = self.mass(i, 1.0)
            else:
                out[f"bm_{slot.name}"] = float(mean[i])
                out[f"bs_{slot.name}"] = float(std[i])
        return out


def effective_sample_size(weights) -> float:
    """Degeneracy measure N / (1 + sum w^2) for normalised weights."""
    w = np.asarray(weights, dtype=float)
    return w.size / (1.0 + float(w @ w))


def inverse_simpson(weights) -> float:
    """Conventional ESS estimate 1 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    return 1.0 / float(w @ w)


def systematic_indices(weights, u: float) -> np.ndarray:
    """Indices picked by equidistant strata (u + k) / N, k = 0..N-1, u in [0, 1)."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    positions = (u + np.arange(n)) / n
    return np.minimum(np.searchsorted(cdf, positions, side="right"), n - 1)


def systematic_resample(b: BeliefEnsemble, rng: np.random.Generator) -> BeliefEnsemble:
    idx = systematic_indices(b.weights, rng.random())
    return BeliefEnsemble.uniform(b.particles[idx])


def multinomial_sample(b: BeliefEnsemble, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` particles i.i.d. from the weighted ensemble."""
    idx = rng.choice(b.n, size=n, p=b.weights)
    return b.particles[idx]


def propagate(b: BeliefEnsemble, a, model: GenerativeModel,
              rng: np.random.Generator) -> BeliefEnsemble:
    particles = model.step(b.particles, np.asarray(a, dtype=float), rng)
    return BeliefEnsemble(particles, b.weights)


def reweight(b: BeliefEnsemble, o: Observation, model: GenerativeModel,
             tick: int | None = None) -> BeliefEnsemble:
    if not np.any(o.mask):
        return b
    ll = model.log_likelihood(b.particles, o.values, o.mask)
    with np.errstate(divide="ignore"):
        logw = np.log(b.weights) + ll
    top = np.max(logw)
    if not np.isfinite(top):
        raise FilterDivergence(o, tick)
    w = np.exp(logw - top)
    return BeliefEnsemble(b.particles, w / w.sum())


def filter_step(b: BeliefEnsemble, a, o: Observation, model: GenerativeModel,
                rng: np.random.Generator, tick: int | None = None) -> BeliefEnsemble:
    """Propagate, reweight, then resample when the ensemble degenerates.

    The trigger uses the conventional 1 / sum w^2 estimate against N / 2;
    N / (1 + sum w^2) never drops to N / 2 unless one particle holds all the
    mass.
    """
    b = propagate(b, a, model, rng)
    b = reweight(b, o, model, tick)
    if inverse_simpson(b.weights) <= b.n / 2:
        b = systematic_resample(b, rng)
    return b
