import math

import numpy as np
import pytest

from activedrive.belief import BeliefEnsemble
from activedrive.core import ActionSpec, Gaussian, GenerativeModel, PreferenceModel, Schema, Slot
from activedrive.efe import (
    evaluate_policies,
    expected_ambiguity,
    expected_free_energy,
    kde_entropy,
    pragmatic_value,
    predictive_entropy,
    rollout,
)
from activedrive.scenarios import occlusion as occ
from activedrive.scenarios import timeshare as ts

GAUSS_H = 0.5 * math.log(2 * math.pi * math.e)


class NoisyObs(GenerativeModel):
    """One continuous slot observed with unit Gaussian noise."""

    def __init__(self):
        self.state_schema = self.obs_schema = Schema((Slot("x"),))

    def ambiguity(self, states):
        return np.full(np.shape(states)[:-1], GAUSS_H)


def test_entropy_degenerate_discrete():
    schema = Schema((Slot("d", "discrete", levels=3), Slot("x")))
    vals = np.zeros((50, 2))
    mask = np.zeros((50, 2), bool)
    mask[:, 0] = True
    assert predictive_entropy(vals, mask, schema) == 0.0


def test_entropy_binary_is_ln2():
    schema = Schema((Slot("d", "discrete", levels=2),))
    vals = np.repeat([[0.0], [1.0]], 50, axis=0)
    assert predictive_entropy(vals, np.ones_like(vals, bool), schema) == pytest.approx(math.log(2), abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_kde_gaussian_entropy(seed):
    x = np.random.default_rng(seed).standard_normal(10_000)
    assert kde_entropy(x) == pytest.approx(1.4189, abs=0.05)
    schema = Schema((Slot("x"),))
    h = predictive_entropy(x[:, None], np.ones((x.size, 1), bool), schema, relative=False)
    assert h == pytest.approx(GAUSS_H, abs=0.05)


def test_relative_entropy_point_mass_zero():
    schema = Schema((Slot("x", resolution=0.01),))
    vals = np.full((30, 1), 4.2)
    assert predictive_entropy(vals, np.ones_like(vals, bool), schema) == pytest.approx(0.0, abs=1e-12)


def test_null_rows_only_discrete():
    schema = Schema((Slot("x"),))
    vals = np.zeros((40, 1))
    mask = np.zeros((40, 1), bool)
    mask[:20] = True
    vals[:20, 0] = 1.0
    # half observed at one point, half null: ln 2 from the null pattern only
    assert predictive_entropy(vals, mask, schema) == pytest.approx(math.log(2), abs=1e-12)


def test_ambiguity_examples():
    s = occ.OcclusionModel()
    assert expected_ambiguity(np.tile(s.initial_state(), (5, 1)), s) == 0.0
    t = ts.TimeshareModel()
    assert expected_ambiguity(np.tile(t.initial_state(), (5, 1)), t) == 0.0
    assert expected_ambiguity(np.zeros((8, 1)), NoisyObs()) == pytest.approx(GAUSS_H)
    assert expected_ambiguity(np.zeros((0, 1)), NoisyObs()) == 0.0


def test_rollout_point_belief_closed_form():
    model = occ.OcclusionModel(occ.OcclusionScene(lateral_mobility=True))
    s0 = model.initial_state()
    pol = np.tile([1.0, 0.5], (20, 1))
    ens = rollout(s0[None], pol, model)
    t = 0.2 * np.arange(1, 21)
    np.testing.assert_allclose(ens.states[:, 0, occ.X], 10 * t + 0.5 * t * t, atol=1e-9)
    np.testing.assert_allclose(ens.states[:, 0, occ.Y], 0.25 * t * t, atol=1e-9)


def test_rollout_context_mixing():
    model = occ.OcclusionModel()
    b = model.init_belief(0.2, 1000)
    particles = b.particles[np.random.default_rng(0).permutation(1000)[:300]]
    ens = rollout(particles, np.zeros((20, 2)), model)
    seen = ens.obs_mask[..., occ.PED_X]
    first = int(np.argmax(seen[:, 0]))
    assert 0 < first < 20
    assert not seen[:first].any() and seen[first:].all()
    frac = (ens.obs_values[first:, :, occ.PED_X] == model.scene.site[0]).mean(axis=1)
    p = particles[:, occ.I].mean()
    assert np.all(np.abs(frac - p) < 3 * math.sqrt(0.2 * 0.8 / 300))


def test_rollout_offroad_masks():
    model = ts.TimeshareModel()
    pol = np.zeros((20, 3))
    pol[::2, 2] = 1
    ens = rollout(np.tile(model.initial_state(), (10, 1)), pol, model, np.random.default_rng(0))
    off = pol[:, 2] == 0
    for k in (ts.X, ts.Y, ts.THETA):
        assert not ens.obs_mask[off, :, k].any()
        assert ens.obs_mask[~off, :, k].all()


def test_rollout_needs_rng_for_noisy_model():
    model = ts.TimeshareModel()
    with pytest.raises(ValueError):
        rollout(model.initial_state()[None], np.zeros((3, 3)), model)


def test_pragmatic_component_maxima():
    model = occ.OcclusionModel(occ.OcclusionScene(lateral_mobility=True))
    ens = rollout(np.tile(model.initial_state(), (4, 1)), np.zeros((5, 2)), model)
    gauss_max = lambda sigma: -0.5 * math.log(2 * math.pi) - math.log(sigma)
    expect = gauss_max(1.0) + math.log(2 / 3) + 2 * gauss_max(0.5)
    np.testing.assert_allclose(pragmatic_value(ens, model.preferences), expect, atol=1e-9)


def test_pragmatic_conflict_row_floor():
    model = occ.OcclusionModel()
    vals, mask = model.observe(np.tile(model.initial_state(), (2, 1)))
    vals[1, occ.C] = 1
    lp = model.preferences.component_log_densities(vals, mask)
    k = [type(c).__name__ for c in model.preferences.components].index("Categorical")
    assert lp[1, k] == -1e3 and lp[0, k] == 0.0


def test_pragmatic_gaze_split():
    model = ts.TimeshareModel()
    s = np.tile(model.initial_state(), (10, 1))
    s[:5, ts.GAZE] = 0
    vals, mask = model.observe(s)
    comps = model.preferences.components
    k = [c.slot for c in comps].index("oI")
    gaze = model.preferences.component_log_densities(vals, mask)[:, k].mean()
    assert gaze == pytest.approx(-3.5005, abs=1e-4)


def test_certain_belief_zero_epistemic():
    model = occ.OcclusionModel(occ.OcclusionScene(prior_present=0.0))
    b = model.init_belief(n=50)
    bd = expected_free_energy(np.zeros((20, 2)), b, model, np.random.default_rng(0))
    np.testing.assert_allclose(bd.epistemic, 0.0, atol=1e-12)
    assert bd.total == pytest.approx(-bd.pragmatic.sum())


def test_los_earlier_scores_more_epistemic():
    scene = occ.OcclusionScene(lateral_mobility=True, start=(-20.0, 0.0))
    model = occ.OcclusionModel(scene)
    particles = model.init_belief(0.2, 100).particles
    straight = np.zeros((20, 2))
    left = straight.copy()
    left[:4, 1] = -2.0
    left[4:8, 1] = 2.0
    bd = evaluate_policies(particles, np.stack([straight, left]), model)
    ep = bd.epistemic.sum(axis=1)
    assert ep[1] > ep[0]
    assert ep[0] == pytest.approx(0.0, abs=1e-12)


def _dispersed(model, sigma):
    z = np.random.default_rng(0).standard_normal(100)
    return ts.with_dispersion(model, sigma, z=z)


def test_onroad_epistemic_grows_with_dispersion():
    model = ts.TimeshareModel()
    pols = np.zeros((2, 20, 3))
    pols[0, :, 2] = 1  # on-road throughout
    noise = model.sample_noise(np.random.default_rng(1), (20, 100))
    prev = -np.inf
    for sigma in (0.0, 0.01, 0.05, 0.1, 0.3):
        bd = evaluate_policies(_dispersed(model, sigma), pols, model, noise=noise)
        on, off = bd.epistemic.sum(axis=1)
        assert on > off
        assert on >= prev
        prev = on


def test_efe_reproducible_and_identity():
    model = ts.TimeshareModel()
    b = BeliefEnsemble.uniform(_dispersed(model, 0.1))
    pol = np.zeros((20, 3))
    pol[5:, 2] = 1
    a = expected_free_energy(pol, b, model, np.random.default_rng(9))
    c = expected_free_energy(pol, b, model, np.random.default_rng(9))
    np.testing.assert_array_equal(a.pragmatic, c.pragmatic)
    np.testing.assert_array_equal(a.epistemic, c.epistemic)
    assert a.total == -(a.pragmatic.sum() + a.epistemic.sum())


class SpeedOnly(GenerativeModel):
    def __init__(self, sigma):
        self.state_schema = self.obs_schema = Schema((Slot("v"),))
        self.preferences = PreferenceModel(self.obs_schema, (Gaussian("v", 10.0, sigma),))
        self.actions = ActionSpec(("a",), (-4.0,), (4.0,))

    def transition(self, states, actions, noise=None):
        return states + 0.2 * np.asarray(actions)[..., :1]

    def observe(self, states):
        return np.asarray(states, float), np.ones(np.shape(states), bool)


def test_sharp_speed_preference_ranks_by_distance():
    model = SpeedOnly(0.01)
    # kept within ~0.4 of the mean so no term hits the -1e3 floor
    speeds = np.array([9.97, 10.004, 10.0, 10.02, 10.3, 9.9])
    totals = [evaluate_policies(np.array([[v]]), np.zeros((20, 1)), model).total for v in speeds]
    assert np.array_equal(np.argsort(totals), np.argsort(np.abs(speeds - 10.0)))
