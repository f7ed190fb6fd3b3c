import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semsplit.channel import draw_channels, noise_power
from semsplit.env import (
    EnvConfig,
    Scheme,
    SemanticWorld,
    SemComEnv,
    action_dim,
    apply_scheme,
    compute_reward,
    decode_action,
    decode_state,
    discounted_return,
    encode_state,
    evaluate_decision,
    squash_action,
    state_dim,
    stream_bers,
    transport,
)
from semsplit.precode import BeamformerSet, common_sinr, private_sinr, total_power
from semsplit.rng import make_rng
from semsplit.semcodec import SemanticBudget, ber_from_sinr, onehot_cell_success, word_lengths
from semsplit.ses import surrogate_ses

CFG = EnvConfig()
WORLD = SemanticWorld(CFG)


def channels(seed=0, cfg=CFG):
    return draw_channels(cfg.distances, cfg.n_t, cfg.path_loss, seed=seed)


def test_reference_dimensions():
    assert state_dim(3, 8) == 52 and CFG.state_dim == 52
    assert action_dim(3, 8) == 68 and CFG.action_dim == 68
    assert state_dim(1, 1) == 4


@given(st.integers(1, 6), st.integers(1, 16))
def test_dimension_formulas(k, nt):
    assert state_dim(k, nt) == 2 * nt * k + 1 + k
    assert action_dim(k, nt) == 2 * nt + 2 * nt * k + 1 + k


def test_state_round_trip():
    ch = channels(3)
    s = encode_state(ch, CFG)
    assert s.shape == (52,)
    assert np.allclose(decode_state(s, CFG), ch.per_user, rtol=1e-12, atol=0)
    assert s[48] == CFG.p_max_w / CFG.p_max_ref_w
    assert np.array_equal(s[49:], CFG.i_th)


def test_state_dimension_mismatch_rejected():
    small = EnvConfig(n_users=1, n_t=8, i_th=(1.0,), distances=(30.0,))
    with pytest.raises(ValueError):
        encode_state(channels(0, small), CFG)
    with pytest.raises(ValueError):
        decode_state(np.zeros(51), CFG)


def test_action_length_checked():
    with pytest.raises(ValueError):
        decode_action(np.zeros(67), CFG)


def budget_action(value, cfg=CFG):
    a = np.zeros(cfg.action_dim)
    a[-(cfg.n_users + 1):] = value
    return a


def test_quantizer_examples():
    _, b = decode_action(budget_action(-1.0), CFG)
    assert b.n_c == 0 and b.n_p == (0, 0, 0)
    _, b = decode_action(budget_action(1.0), CFG)
    assert b.n_c == 16 and b.n_p == (8, 8, 8)
    _, b = decode_action(budget_action(0.0), CFG)
    assert b.n_c == 8 and b.n_p == (4, 4, 4)


def test_quantizer_rounds_half_up():
    # (x + 1) / 2 * 16 = 8.5 exactly at x = 1/16
    _, b = decode_action(budget_action(1 / 16), CFG)
    assert b.n_c == 9


def test_full_action_hits_power_ceiling():
    beams, _ = decode_action(np.ones(CFG.action_dim), CFG)
    assert total_power(beams) == pytest.approx(CFG.p_max_w, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 20.0))
def test_squashed_actions_respect_power(seed, spread):
    raw = np.random.default_rng(seed).standard_normal(CFG.action_dim) * spread
    beams, budget = decode_action(squash_action(raw), CFG)
    assert total_power(beams) <= CFG.p_max_w * (1 + 1e-12)
    assert 0 <= budget.n_c <= CFG.m_max
    assert all(0 <= n <= CFG.n_max for n in budget.n_p)


def test_decode_action_layout():
    a = np.zeros(CFG.action_dim)
    a[0] = 1.0  # Re(w_c[0])
    a[8 + 2] = -1.0  # Im(w_c[2])
    a[16 + 8 * 1 + 3] = 0.5  # Re(w_2[3])
    a[16 + 24 + 8 * 2 + 7] = 0.25  # Im(w_3[7])
    beams, _ = decode_action(a, CFG)
    scale = math.sqrt(CFG.p_max_w / (2 * 8 * 4))
    assert beams.common[0] == scale and beams.common[2] == -1j * scale
    assert beams.private[1, 3] == 0.5 * scale
    assert beams.private[2, 7] == 0.25j * scale
    assert np.count_nonzero(beams.private) == 2


def test_sdma_schemes_drop_common_stream():
    beams, budget = decode_action(np.full(CFG.action_dim, 0.5), CFG)
    b, bud = apply_scheme(beams, budget, Scheme.O)
    assert np.all(b.common == 0) and bud.n_c == budget.n_c and bud.n_p == (0, 0, 0)
    b, bud = apply_scheme(beams, budget, Scheme.T)
    assert np.all(b.common == 0) and bud.n_c == 0 and bud.n_p == budget.n_p
    b, bud = apply_scheme(beams, budget, Scheme.SEGS)
    assert np.array_equal(b.common, beams.common) and bud == budget


def test_sdma_map_rides_on_private_stream():
    ch = channels(1)
    beams, _ = decode_action(np.full(CFG.action_dim, 0.3), CFG)
    beams, _ = apply_scheme(beams, SemanticBudget(0, (0, 0, 0), 16, 8), Scheme.O)
    ber_map, ber_text = stream_bers(ch, beams, CFG, Scheme.O)
    assert np.array_equal(ber_map, ber_text)
    expected = ber_from_sinr(private_sinr(ch, beams, noise_power(CFG.path_loss)))
    assert np.array_equal(ber_text, expected)


def test_reward_without_violations_is_plain_sum():
    f = np.array([1.5, 1.2, 1.9])
    assert compute_reward(f, 3.0, CFG) == pytest.approx(f.sum(), abs=1e-15)


def test_reward_power_violation():
    f = np.array([1.5, 1.2, 1.9])
    assert compute_reward(f, CFG.p_max_w + 0.25, CFG) == pytest.approx(f.sum() - 10 * 0.25, abs=1e-12)


def test_reward_ses_shortfall():
    f = np.array([1.5, 0.9, 1.9])
    assert compute_reward(f, 1.0, CFG) == pytest.approx(f.sum() - 0.1 * 10, abs=1e-12)


@settings(max_examples=200)
@given(
    st.lists(st.floats(0.0, 2.0), min_size=3, max_size=3),
    st.floats(0.0, 40.0),
)
def test_penalties_never_reward(f, power):
    assert compute_reward(f, power, CFG) <= sum(f) + 1e-12


def test_discounted_return_examples():
    assert discounted_return([1.0], 0.9) == 1.0
    assert discounted_return([1.0, 1.0, 1.0], 0.5) == 1.75
    assert discounted_return([0.5, 2.0, -1.0], 1.0) == 1.5
    with pytest.raises(ValueError):
        discounted_return([1.0], 0.0)


def test_step_outcome_consistency_with_ses_module():
    rng = np.random.default_rng(0)
    ch = channels(5)
    beams, budget = decode_action(squash_action(rng.standard_normal(68)), CFG)
    out = evaluate_decision(ch, beams, budget, CFG, WORLD)
    sigma2 = noise_power(CFG.path_loss)
    assert np.array_equal(out.ber_report["map_ber_model"], ber_from_sinr(common_sinr(ch, beams, sigma2)))
    for k, score in enumerate(out.per_user_ses):
        assert score == surrogate_ses(float(out.rho_c[k]), float(out.rho_p[k]), CFG.surrogate)
    assert out.reward == out.recompute_reward(CFG)
    assert out.reward <= float(np.sum(out.ses_totals))


def test_explicit_power_violation_through_decision():
    ch = channels(6)
    beams = BeamformerSet(np.full(8, 1.5 + 0j), np.zeros((3, 8), complex))
    budget = SemanticBudget(16, (8, 8, 8), 16, 8)
    out = evaluate_decision(ch, beams, budget, CFG, WORLD)
    excess = 8 * 1.5**2 - CFG.p_max_w
    short = np.minimum(0.0, out.ses_totals - 1.0).sum()
    assert out.power_slack == pytest.approx(-excess)
    assert out.reward == pytest.approx(out.ses_totals.sum() - 10 * excess + 10 * short, abs=1e-12)


def test_env_determinism_and_episode_length():
    def rollout(seed):
        env = SemComEnv(CFG, "SS-MGSC", seed=seed, simulate_transport=True)
        s = env.reset()
        rng = np.random.default_rng(1)
        rewards, dones, texts = [], [], []
        for _ in range(CFG.steps_per_episode):
            out, done = env.step(rng.standard_normal(68))
            assert out.next_state.shape == s.shape
            rewards.append(out.reward)
            dones.append(done)
            texts.append(tuple(out.ber_report["decoded_text"]))
        return rewards, dones, texts

    a, b = rollout(4), rollout(4)
    assert a == b
    assert a[1] == [False] * (CFG.steps_per_episode - 1) + [True]
    assert rollout(5)[0] != a[0]


def test_channels_independent_of_scheme():
    e1 = SemComEnv(CFG, "SS-MGSC", seed=2)
    e2 = SemComEnv(CFG, "T-MGSC", seed=2)
    assert np.array_equal(e1.reset(), e2.reset())
    o1, _ = e1.step(np.zeros(68))
    o2, _ = e2.step(np.ones(68))
    assert np.array_equal(o1.next_state, o2.next_state)


def test_step_before_reset_rejected():
    with pytest.raises(RuntimeError):
        SemComEnv(CFG).step(np.zeros(68))


def test_transport_measures_perfect_link_at_huge_power():
    cfg = CFG.with_power_dbm(80)
    env = SemComEnv(cfg, "SS-MGSC", seed=0, simulate_transport=True)
    env.reset()
    a = np.zeros(cfg.action_dim)
    a[:16] = 10.0  # common beam at full scale, private beams off
    a[-4:] = 10.0
    out, _ = env.step(a)
    assert np.all(out.ber_report["map_ber_measured"] == 0)
    assert np.all(out.ber_report["cell_accuracy"] == 1.0)
    assert out.budget.n_c == 16


def test_with_power_dbm():
    assert CFG.with_power_dbm(40).p_max_w == pytest.approx(10.0)
    assert CFG.with_power_dbm(10).p_max_w == pytest.approx(0.01)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_users=0),
        dict(p_max_w=0.0),
        dict(i_th=(1.0, 1.0)),
        dict(i_th=(1.0, 1.0, 2.5)),
        dict(distances=(30.0, 100.0)),
        dict(grid_h=25, grid_w=25),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        EnvConfig(**kwargs)


def test_transport_matches_bit_channel_model():
    world = SemanticWorld(CFG)
    budget = SemanticBudget(16, (8, 8, 8), 16, 8)
    ber_map = np.array([0.01, 0.03, 0.1])
    ber_text = np.array([0.002, 0.01, 0.02])
    rng = make_rng(0, "transport")
    trials = 200
    reps = [transport(world, budget, ber_map, ber_text, Scheme.SS, rng) for _ in range(trials)]
    map_bits = reps[0]["map_bits"] * trials
    map_err = np.sum([r["map_bit_errors"] for r in reps], axis=0)
    se = np.sqrt(ber_map * (1 - ber_map) / map_bits)
    assert np.all(np.abs(map_err / map_bits - ber_map) < 3 * se)
    labels = world.smap.cells.reshape(-1)
    cell_acc = np.mean([r["cell_accuracy"] for r in reps], axis=0)
    expected_cells = onehot_cell_success(ber_map, CFG.n_classes)[:, labels].mean(axis=1)
    assert np.allclose(cell_acc, expected_cells, atol=3e-3)
    word_acc = np.mean([r["word_accuracy"] for r in reps], axis=0)
    for k in range(3):
        lengths = np.array(word_lengths(world.prompts[k], 8))
        expected = np.mean((1 - ber_text[k]) ** (8 * lengths))
        se_w = math.sqrt(expected * (1 - expected) / (trials * lengths.size))
        assert abs(word_acc[k] - expected) < 4 * se_w
