"""Expected free energy of action sequences under a particle belief.

A policy is scored by rolling planning particles forward through the agent's
transition and observation models, then summing per-step pragmatic value
(mean preference log-density of the predicted observations) and epistemic
value (predictive observation entropy minus expected ambiguity). Lower
G = -(pragmatic + epistemic) is better.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .belief import BeliefEnsemble, multinomial_sample
from .core import DISPLAY_FLOOR, GenerativeModel, PreferenceModel, Schema


@dataclass(frozen=True)
class RolloutEnsemble:
    """Predicted trajectories, time-major: arrays are ``(..., H, N~, D)``."""

    states: np.ndarray
    obs_values: np.ndarray
    obs_mask: np.ndarray

    @property
    def horizon(self) -> int:
        return self.states.shape[-3]


@dataclass(frozen=True)
class EFEBreakdown:
    """Per-step values of one policy (shape ``(H,)``) or a batch (``(M, H)``).

    ``pragmatic_display`` repeats the pragmatic term with log-preferences
    truncated at -100 for plotting.
    """

    pragmatic: np.ndarray
    epistemic: np.ndarray
    pragmatic_display: np.ndarray

    @property
    def total(self):
        return -(self.pragmatic.sum(axis=-1) + self.epistemic.sum(axis=-1))

    def __getitem__(self, i) -> "EFEBreakdown":
        return EFEBreakdown(self.pragmatic[i], self.epistemic[i], self.pragmatic_display[i])


def rollout(particles, policies, model: GenerativeModel, rng=None, noise=None) -> RolloutEnsemble:
    """Sample state and observation particles along each policy.

    ``particles`` is ``(N~, D)``; ``policies`` is ``(H, A)`` or ``(M, H, A)``.
    Process noise of shape ``(H, N~, noise_dim)`` is shared by all policies in
    the batch so that their scores are compared under common random numbers.
    """
    particles = np.asarray(particles, dtype=float)
    policies = np.asarray(policies, dtype=float)
    single = policies.ndim == 2
    if single:
        policies = policies[None]
    m, h, _ = policies.shape
    n = particles.shape[0]
    if noise is None:
        if rng is None and model.noise_dim:
            raise ValueError("rollout needs an rng or pre-drawn noise")
        noise = model.sample_noise(rng, (h, n))
    s = np.broadcast_to(particles, (m, n, particles.shape[1]))
    states = np.empty((m, h, n, particles.shape[1]))
    do = len(model.obs_schema)
    values = np.empty((m, h, n, do))
    mask = np.empty((m, h, n, do), dtype=bool)
    for t in range(h):
        s = model.transition(s, policies[:, t, None, :], noise[t][None])
        states[:, t] = s
        values[:, t], mask[:, t] = model.observe(s)
    if single:
        return RolloutEnsemble(states[0], values[0], mask[0])
    return RolloutEnsemble(states, values, mask)


def pragmatic_value(ens: RolloutEnsemble, prefs: PreferenceModel, floor=None) -> np.ndarray:
    """Mean preference log-density over particles at each step, null slots skipped."""
    return prefs.log_density(ens.obs_values, ens.obs_mask, floor=floor).mean(axis=-1)


# --- entropy -----------------------------------------------------------------

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_KERNEL_CUTOFF = 8.5


@njit(cache=True)
def _bandwidth(x, n, floor):
    """Normal-reference rule 1.06 * sd * n^(-1/5), floored.

    The spread is the plain standard deviation on purpose: for samples that
    are mostly one atom plus a distant minority (e.g. null-encoded pedestrian
    positions) IQR-based variants collapse to the floor and hide the split.
    """
    mean = 0.0
    for i in range(n):
        mean += x[i]
    mean /= n
    var = 0.0
    for i in range(n):
        var += (x[i] - mean) ** 2
    sd = math.sqrt(var / (n - 1))
    return max(1.06 * sd * n ** -0.2, floor)


# exp(-u) tabulated on [0, cutoff^2 / 2]; linear interpolation error < 1e-7
_EXP_STEP = 1.0 / 1024
_EXP_TABLE = np.exp(-_EXP_STEP * np.arange(int(0.5 * _KERNEL_CUTOFF**2 / _EXP_STEP) + 3))


@njit(cache=True)
def _kde_entropy_sorted(x, n, h, table):
    """Resubstitution Gaussian-KDE estimate of differential entropy (nats)."""
    dens = np.ones(n)  # self term
    reach = _KERNEL_CUTOFF * h
    scale = 0.5 / (h * h) / _EXP_STEP
    end = 0
    for i in range(n):
        xi = x[i]
        if end < i + 1:
            end = i + 1
        while end < n and x[end] - xi <= reach:
            end += 1
        acc = 0.0
        for j in range(i + 1, end):
            d = x[j] - xi
            u = d * d * scale
            k0 = int(u)
            k = table[k0] + (u - k0) * (table[k0 + 1] - table[k0])
            acc += k
            dens[j] += k
        dens[i] += acc
    c = n * h * _SQRT_2PI
    acc = 0.0
    for i in range(n):
        acc += math.log(dens[i] / c)
    return -acc / n


@njit(cache=True)
def _discrete_entropy(keys):
    keys = np.sort(keys)
    n = keys.size
    h = 0.0
    run = 1
    for i in range(1, n + 1):
        if i < n and keys[i] == keys[i - 1]:
            run += 1
        else:
            p = run / n
            h -= p * math.log(p)
            run = 1
    return h


@njit(cache=True)
def _group_entropies(values, mask, disc, levels, res, relative, table):
    g, n, d = values.shape
    out = np.zeros(g)
    buf = np.empty(n)
    keys = np.empty(n, dtype=np.int64)
    for gi in range(g):
        for r in range(n):
            key = 0
            for k in range(d):
                if disc[k]:
                    v = int(values[gi, r, k]) if mask[gi, r, k] else levels[k]
                    key = key * (levels[k] + 1) + v
                else:
                    key = key * 2 + (1 if mask[gi, r, k] else 0)
            keys[r] = key
        total = _discrete_entropy(keys)
        for k in range(d):
            if disc[k]:
                continue
            m = 0
            for r in range(n):
                if mask[gi, r, k]:
                    buf[m] = values[gi, r, k]
                    m += 1
            if m < 2:
                continue
            xs = np.sort(buf[:m])
            if xs[m - 1] == xs[0]:
                hk = math.log(res[k] * _SQRT_2PI)
            else:
                bw = _bandwidth(xs, m, res[k])
                hk = _kde_entropy_sorted(xs, m, bw, table)
            if relative:
                hk -= math.log(res[k] * _SQRT_2PI)
            total += hk * m / n
        out[gi] = total
    return out


def kde_entropy(samples, floor: float = 1e-3) -> float:
    """Differential entropy (nats) of 1-D samples via a Gaussian KDE."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size < 2:
        return 0.0
    h = _bandwidth(x, x.size, floor)
    return float(_kde_entropy_sorted(x, x.size, h, _EXP_TABLE))


def predictive_entropy(values, mask, schema: Schema, relative: bool = True):
    """Entropy of an empirical observation distribution (rows on axis -2).

    The estimate factorises into the Shannon entropy of the joint discrete
    outcome (discrete values plus the null pattern of continuous slots) and,
    per continuous slot, a KDE differential entropy over the rows where the
    slot is observed, weighted by the observed fraction. With ``relative``
    each continuous term is measured against a point mass blurred at the
    slot resolution, so a certain observation contributes exactly zero and
    the estimate is comparable with an unobserved (null) slot.

    Accepts ``(N~, D)`` or batched ``(..., N~, D)`` input.
    """
    values = schema.check(values)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), values.shape)
    lead = values.shape[:-2]
    n, d = values.shape[-2:]
    if n < 2:
        return np.zeros(lead) if lead else 0.0
    out = _group_entropies(
        np.ascontiguousarray(values.reshape(-1, n, d)),
        np.ascontiguousarray(mask.reshape(-1, n, d)),
        schema.discrete, schema.levels, schema.resolutions, relative, _EXP_TABLE,
    )
    return out.reshape(lead) if lead else float(out[0])


def expected_ambiguity(states, model: GenerativeModel) -> np.ndarray | float:
    """Mean observation-model entropy over state rows (axis -2); empty -> 0."""
    states = np.asarray(states, dtype=float)
    if states.shape[-2] == 0:
        return np.zeros(states.shape[:-2]) if states.ndim > 2 else 0.0
    amb = model.ambiguity(states).mean(axis=-1)
    return amb if np.ndim(amb) else float(amb)


# --- scoring -----------------------------------------------------------------


def evaluate_policies(particles, policies, model: GenerativeModel, rng=None,
                      noise=None) -> EFEBreakdown:
    """Per-step EFE terms for each policy, from a fixed set of planning particles."""
    ens = rollout(particles, policies, model, rng, noise)
    prag, shown = (v.mean(axis=-1) for v in model.preferences.log_density_floors(
        ens.obs_values, ens.obs_mask, (None, DISPLAY_FLOOR)))
    epi = predictive_entropy(ens.obs_values, ens.obs_mask, model.obs_schema)
    epi = epi - expected_ambiguity(ens.states, model)
    return EFEBreakdown(prag, epi, shown)


def expected_free_energy(policy, b: BeliefEnsemble, model: GenerativeModel,
                         rng: np.random.Generator, n_planning: int = 100) -> EFEBreakdown:
    """Score one policy: resample planning particles from ``b`` then roll out."""
    particles = multinomial_sample(b, n_planning, rng)
    return evaluate_policies(particles, np.asarray(policy, dtype=float), model, rng)
