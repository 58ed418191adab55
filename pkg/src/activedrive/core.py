"""POMDP building blocks shared by both driving scenarios and the planner.

States and observations are stored as plain float arrays whose last axis
follows a :class:`Schema`. Discrete slots hold small non-negative integers
(stored as floats); an observation additionally carries a boolean mask where
``False`` marks a null slot.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LOG_FLOOR = -1e3
DISPLAY_FLOOR = -100.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class SchemaError(ValueError):
    """Raised when an array does not conform to a schema."""


@dataclass(frozen=True)
class Slot:
    """One scalar slot of a state or observation vector.

    ``resolution`` is the smallest distinguishable difference for a continuous
    slot; it floors the KDE bandwidth and is the reference scale for entropy.
    ``tolerance`` is the width of the Gaussian kernel used when weighting
    belief particles against an exact observation of the slot.
    """

    name: str
    kind: str = "continuous"
    levels: int = 0
    resolution: float = 1e-3
    tolerance: float | None = None
    always_observed: bool = False

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise SchemaError(f"unknown slot kind {self.kind!r}")
        if self.kind == "discrete" and self.levels < 2:
            raise SchemaError(f"discrete slot {self.name!r} needs levels >= 2")
        if self.kind == "continuous" and self.resolution <= 0:
            raise SchemaError(f"slot {self.name!r} needs a positive resolution")

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def kernel_width(self) -> float:
        return self.resolution if self.tolerance is None else self.tolerance

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.is_discrete:
            out["levels"] = self.levels
        else:
            out["resolution"] = self.resolution
            out["tolerance"] = self.kernel_width
        if self.always_observed:
            out["always_observed"] = True
        return out


@dataclass(frozen=True)
class Schema:
    slots: tuple[Slot, ...]

    def __post_init__(self):
        names = [s.name for s in self.slots]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate slot names in {names}")

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.slots]

    def index(self, name: str) -> int:
        for i, s in enumerate(self.slots):
            if s.name == name:
                return i
        raise SchemaError(f"no slot named {name!r}")

    @property
    def discrete(self) -> np.ndarray:
        return np.array([s.is_discrete for s in self.slots])

    @property
    def levels(self) -> np.ndarray:
        return np.array([s.levels for s in self.slots], dtype=np.int64)

    @property
    def resolutions(self) -> np.ndarray:
        return np.array([s.resolution for s in self.slots])

    @property
    def kernel_widths(self) -> np.ndarray:
        return np.array([s.kernel_width for s in self.slots])

    def check(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[-1:] != (len(self),):
            raise SchemaError(
                f"last axis has size {values.shape[-1:]}, schema expects {len(self)}"
            )
        return values

    def check_discrete(self, values: np.ndarray) -> None:
        """Raise if any discrete slot holds a value outside its finite set."""
        values = self.check(values)
        for i, s in enumerate(self.slots):
            if not s.is_discrete:
                continue
            col = values[..., i]
            if not np.all((col == np.round(col)) & (col >= 0) & (col < s.levels)):
                raise SchemaError(f"slot {s.name!r} holds values outside 0..{s.levels - 1}")

    def to_dict(self) -> list[dict]:
        return [s.to_dict() for s in self.slots]


@dataclass(frozen=True)
class Observation:
    """A single observation: values plus an observed/null flag per slot."""

    values: np.ndarray
    mask: np.ndarray

    @classmethod
    def null(cls, schema: Schema) -> "Observation":
        return cls(np.zeros(len(schema)), np.zeros(len(schema), dtype=bool))

    @classmethod
    def of(cls, schema: Schema, **slots: float) -> "Observation":
        """Build an observation with only the named slots observed."""
        obs = cls.null(schema)
        values, mask = obs.values.copy(), obs.mask.copy()
        for name, v in slots.items():
            i = schema.index(name)
            values[i], mask[i] = v, True
        return cls(values, mask)


# --- preference priors -------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    slot: str
    mu: float
    sigma: float

    def log_density(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mu) / self.sigma
        return -0.5 * z * z - np.log(self.sigma) - _HALF_LOG_2PI


@dataclass(frozen=True)
class Triangular:
    """Symmetric or skewed triangular density with a peak at ``center``."""

    slot: str
    center: float
    lower: float
    upper: float

    def log_density(self, x: np.ndarray) -> np.ndarray:
        a, b, c = self.lower, self.upper, self.center
        width = b - a
        left = 2.0 * (x - a) / (width * (c - a)) if c > a else np.full_like(x, np.inf)
        right = 2.0 * (b - x) / (width * (b - c)) if b > c else np.full_like(x, np.inf)
        dens = np.where(x <= c, left, right)
        dens = np.where((x > a) & (x < b), dens, 0.0)
        with np.errstate(divide="ignore"):
            return np.log(dens)


@dataclass(frozen=True)
class Categorical:
    """Log-probability table indexed by a discrete slot value."""

    slot: str
    log_probs: tuple[float, ...]

    def log_density(self, x: np.ndarray) -> np.ndarray:
        table = np.asarray(self.log_probs, dtype=float)
        idx = np.clip(np.asarray(x).astype(np.int64), 0, len(table) - 1)
        return table[idx]


@dataclass(frozen=True)
class Bernoulli:
    """Binary preference given by the log-probability of the ``1`` outcome."""

    slot: str
    log_p_on: float

    @property
    def log_p_off(self) -> float:
        if self.log_p_on >= 0:
            return LOG_FLOOR
        return max(float(np.log(-np.expm1(self.log_p_on))), LOG_FLOOR)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(x) >= 0.5, self.log_p_on, self.log_p_off)


PreferenceComponent = Gaussian | Triangular | Categorical | Bernoulli


@dataclass(frozen=True)
class PreferenceModel:
    """Sum of independent log-priors over observation slots (null slots skipped)."""

    schema: Schema
    components: tuple[PreferenceComponent, ...]
    floor: float = LOG_FLOOR
    _index: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_index", tuple(self.schema.index(c.slot) for c in self.components)
        )

    def component_log_densities(self, values, mask=None, floor=None) -> np.ndarray:
        """Per-component floored log-densities, stacked on a new last axis."""
        values = self.schema.check(values)
        if mask is None:
            mask = np.ones(values.shape, dtype=bool)
        floor = self.floor if floor is None else floor
        out = np.zeros(values.shape[:-1] + (len(self.components),))
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            for k, (comp, i) in enumerate(zip(self.components, self._index)):
                ld = comp.log_density(values[..., i])
                ld = np.maximum(np.nan_to_num(ld, nan=floor, neginf=floor), floor)
                out[..., k] = np.where(mask[..., i], ld, 0.0)
        return out

    def log_density(self, values, mask=None, floor=None) -> np.ndarray:
        return self.component_log_densities(values, mask, floor).sum(axis=-1)

    def log_density_floors(self, values, mask, floors) -> list[np.ndarray]:
        """``log_density`` under several floors, sharing the density evaluation."""
        values = self.schema.check(values)
        floors = [self.floor if f is None else f for f in floors]
        sums = [np.zeros(values.shape[:-1]) for _ in floors]
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            for comp, i in zip(self.components, self._index):
                ld = np.nan_to_num(comp.log_density(values[..., i]), nan=-np.inf)
                m = mask[..., i]
                for acc, f in zip(sums, floors):
                    acc += np.where(m, np.maximum(ld, f), 0.0)
        return sums

    def replace(self, slot: str, component: PreferenceComponent) -> "PreferenceModel":
        comps = tuple(component if c.slot == slot and type(c) is type(component) else c
                      for c in self.components)
        return PreferenceModel(self.schema, comps, self.floor)


def preference_log_density(prefs: PreferenceModel, obs: Observation) -> float:
    """Log-density of a single observation under the preference prior."""
    return float(prefs.log_density(obs.values, obs.mask))


# --- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class ActionSpec:
    """Continuous actuator names and bounds, plus optional binary (gaze) dims.

    Action arrays put the continuous components first and the discrete bits
    last.
    """

    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    discrete_names: tuple[str, ...] = ()

    @property
    def n_continuous(self) -> int:
        return len(self.names)

    @property
    def n_discrete(self) -> int:
        return len(self.discrete_names)

    @property
    def size(self) -> int:
        return self.n_continuous + self.n_discrete

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    def clamp(self, actions: np.ndarray) -> np.ndarray:
        actions = np.array(actions, dtype=float)
        nc = self.n_continuous
        actions[..., :nc] = np.clip(actions[..., :nc], self.lo, self.hi)
        if self.n_discrete:
            actions[..., nc:] = (actions[..., nc:] >= 0.5).astype(float)
        return actions


# --- generative model --------------------------------------------------------


class GenerativeModel:
    """Interface for an agent's POMDP model.

    Subclasses provide ``state_schema``, ``obs_schema``, ``preferences``,
    ``actions`` and implement :meth:`transition` and :meth:`observe`. Process
    noise is drawn up-front by :meth:`sample_noise` so that :meth:`transition`
    stays a pure function of ``(state, action, noise)``.
    """

    state_schema: Schema
    obs_schema: Schema
    preferences: PreferenceModel
    actions: ActionSpec
    noise_dim: int = 0
    dt: float = 0.2

    def sample_noise(self, rng: np.random.Generator, shape: Sequence[int]) -> np.ndarray:
        return np.zeros(tuple(shape) + (self.noise_dim,))

    def transition(self, states, actions, noise=None):
        raise NotImplementedError

    def observe(self, states) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def step(self, states, actions, rng: np.random.Generator):
        """Sample next states with fresh process noise."""
        states = np.asarray(states, dtype=float)
        noise = self.sample_noise(rng, states.shape[:-1])
        return self.transition(states, actions, noise)

    def log_likelihood(self, states, values, mask) -> np.ndarray:
        """Log P(o|s) up to a constant, for every state row.

        Observations are exact: discrete slots must match, observed continuous
        slots are scored with a Gaussian kernel of width ``tolerance`` (the
        normalising constant is dropped so an all-null observation scores 0).
        """
        pred, pred_mask = self.observe(states)
        schema = self.obs_schema
        disc = schema.discrete
        values = np.asarray(values, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        ll = np.zeros(pred.shape[:-1])
        # null pattern itself is informative only where the observation is non-null
        # and the particle predicts null; such particles cannot have produced it
        mismatch_null = (mask & ~pred_mask).any(axis=-1)
        d_cols = np.flatnonzero(disc & mask)
        if d_cols.size:
            bad = (pred[..., d_cols] != values[d_cols]).any(axis=-1)
            ll = np.where(bad, -np.inf, ll)
        c_cols = np.flatnonzero(~disc & mask)
        if c_cols.size:
            z = (pred[..., c_cols] - values[c_cols]) / schema.kernel_widths[c_cols]
            ll = ll - 0.5 * np.sum(z * z, axis=-1)
        return np.where(mismatch_null, -np.inf, ll)

    def ambiguity(self, states) -> np.ndarray:
        """Entropy of P(o|s) per state row; zero for exact observation models."""
        states = np.asarray(states, dtype=float)
        return np.zeros(states.shape[:-1])
