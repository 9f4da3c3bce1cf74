"""Model validation, preference pullback, and model-file round-trips."""
from __future__ import annotations

import numpy as np
import pytest

import efeplan as ep
from efeplan.model import model_from_dict, model_to_dict

from conftest import random_model


def identity_model(horizon=2):
    return ep.make_model(
        likelihood=np.eye(2),
        transitions=np.stack([np.eye(2), np.eye(2)]),
        initial_belief=[0.5, 0.5],
        obs_log_pref=[0.0, 0.0],
        horizon=horizon,
    )


def test_identity_model_validates():
    assert ep.validate_model(identity_model()).ok


def test_non_stochastic_column_is_reported_with_index():
    m = identity_model()
    A = m.likelihood.matrix.copy()
    A[:, 1] = [0.45, 0.45]  # sums to 0.9
    bad = ep.make_model(
        likelihood=A,
        transitions=m.transitions.tensor,
        initial_belief=m.initial_belief.probs,
        obs_log_pref=m.preferences.obs_log_pref,
        horizon=2,
    )
    report = ep.validate_model(bad)
    assert not report.ok
    assert any(v.rule == "NotStochastic" and v.index == (1,) for v in report.violations)


def test_negative_entry_reported():
    m = identity_model()
    A = m.likelihood.matrix.copy()
    A[0, 0] = -0.2
    A[1, 0] = 1.2
    bad = ep.make_model(
        likelihood=A,
        transitions=m.transitions.tensor,
        initial_belief=m.initial_belief.probs,
        obs_log_pref=m.preferences.obs_log_pref,
        horizon=2,
    )
    rules = {v.rule for v in ep.validate_model(bad).violations}
    assert "NegativeEntry" in rules


def test_non_finite_entry_reported():
    m = identity_model()
    C = np.array([np.inf, 0.0])
    bad = ep.make_model(
        likelihood=m.likelihood.matrix,
        transitions=m.transitions.tensor,
        initial_belief=m.initial_belief.probs,
        obs_log_pref=C,
        horizon=2,
    )
    rules = {v.rule for v in ep.validate_model(bad).violations}
    assert "NonFiniteEntry" in rules


def test_dimension_mismatch_reported():
    m = identity_model()
    bad = ep.GenerativeModel(
        n_states=3,  # contradicts the 2-state tensors
        n_obs=2,
        n_actions=2,
        likelihood=m.likelihood,
        transitions=m.transitions,
        initial_belief=m.initial_belief,
        preferences=m.preferences,
        horizon=2,
    )
    rules = {v.rule for v in ep.validate_model(bad).violations}
    assert "DimensionMismatch" in rules


def test_tmaze_model_validates():
    assert ep.validate_model(ep.tmaze_model()).ok


def test_validator_accepts_random_corpus(rng):
    for _ in range(50):
        assert ep.validate_model(random_model(rng)).ok


def test_history_length_invariant():
    with pytest.raises(ValueError):
        ep.History((0, 1), ())
    h = ep.History((0, 1), (1,))
    assert h.t == 1


def test_pullback_identity_likelihood_matches_obs_preferences():
    m = ep.make_model(
        likelihood=np.eye(3),
        transitions=np.stack([np.eye(3)]),
        initial_belief=np.ones(3) / 3,
        obs_log_pref=[1.0, -0.5, 2.0],
        horizon=1,
    )
    state_pref, _ = ep.pullback_preferences(m)
    expected = np.exp([1.0, -0.5, 2.0])
    expected /= expected.sum()
    assert np.allclose(state_pref.probs, expected, atol=1e-12)


def test_pullback_uniform_likelihood_is_uniform():
    A = np.full((4, 3), 0.25)
    m = ep.make_model(
        likelihood=A,
        transitions=np.stack([np.eye(3)]),
        initial_belief=np.ones(3) / 3,
        obs_log_pref=[3.0, -1.0, 0.0, 2.0],
        horizon=1,
    )
    state_pref, _ = ep.pullback_preferences(m)
    assert np.allclose(state_pref.probs, 1 / 3, atol=1e-12)


def test_pullback_tmaze_mass_pattern():
    # Reward-consistent arm states carry the +6 log mass, punishment-arm
    # states -6, all neutral locations 0.
    state_pref, stored = ep.pullback_preferences(ep.tmaze_model())
    slp = stored.preferences.state_log_pref
    # state order: (loc, ctx) with s = 2*loc + ctx
    expected_logs = np.array([0.0, 0.0, 6.0, -6.0, -6.0, 6.0, 0.0, 0.0])
    assert np.allclose(slp, expected_logs, atol=1e-12)
    z = np.exp(expected_logs).sum()
    assert np.allclose(state_pref.probs, np.exp(expected_logs) / z, atol=1e-12)


def test_pullback_deterministic_likelihood_inherits_unique_obs_pref(rng):
    for _ in range(20):
        m = random_model(rng, deterministic_likelihood=True)
        _, stored = ep.pullback_preferences(m)
        emit = m.likelihood.matrix.argmax(axis=0)
        expected = m.preferences.obs_log_pref[emit]
        assert np.allclose(stored.preferences.state_log_pref, expected, atol=1e-12)


def test_obs_preference_shift_invariance(rng):
    for _ in range(20):
        m = random_model(rng)
        shifted = ep.make_model(
            likelihood=m.likelihood.matrix,
            transitions=m.transitions.tensor,
            initial_belief=m.initial_belief.probs,
            obs_log_pref=m.preferences.obs_log_pref + 7.3,
            horizon=m.horizon,
        )
        base = m.preferences.obs_distribution().probs
        assert np.allclose(
            shifted.preferences.obs_distribution().probs, base, atol=1e-10
        )
        p0, _ = ep.pullback_preferences(m)
        p1, _ = ep.pullback_preferences(shifted)
        assert np.allclose(p0.probs, p1.probs, atol=1e-10)


def test_model_file_roundtrip(tmp_path):
    m = ep.tmaze_model()
    path = tmp_path / "model.json"
    ep.save_model(m, path)
    loaded = ep.load_model(path)
    assert np.array_equal(loaded.likelihood.matrix, m.likelihood.matrix)
    assert np.array_equal(loaded.transitions.tensor, m.transitions.tensor)
    assert loaded.obs_labels == m.obs_labels
    assert loaded.horizon == m.horizon


def test_loader_rejects_invalid_model(tmp_path):
    doc = model_to_dict(ep.tmaze_model())
    doc["likelihood"][0][0] = 0.5  # break column stochasticity
    with pytest.raises(ValueError, match="NotStochastic"):
        model_from_dict(doc)


def test_loader_rejects_malformed_document(tmp_path):
    path = tmp_path / "junk.json"
    path.write_text("not json at all {", encoding="utf-8")
    with pytest.raises(ep.model.ModelFormatError):
        ep.load_model(path)


def test_loader_rejects_missing_fields():
    with pytest.raises(ep.model.ModelFormatError, match="missing fields"):
        model_from_dict({"n_states": 2})
