import math
import random

import pytest

from bild import (
    InvalidInputError,
    PolicyConfig,
    Sampler,
    VocabularyMismatchError,
    Vocabulary,
    ablation_decode,
    bild_decode,
    fit_ngram,
    oracle_blend_decode,
    replay_trace,
    vanilla_decode,
)
from bild.trace import Eos, Fallback, LargeVerify, Rollback, SmallStep
from conftest import make_table, random_model_pair

A, B, EOS = 0, 1, 2
D_05 = -math.log(0.05)  # distance of a token the large model gives 0.05


@pytest.fixture
def vocab3():
    return Vocabulary(size=3, eos=2, tokens=("a", "b", "<eos>"))


@pytest.fixture
def golden_pair(vocab3):
    small = make_table(vocab3, default=[0.9, 0.05, 0.05])  # greedy "a", confident
    large = make_table(vocab3, default=[0.05, 0.9, 0.05])  # greedy "b", confident
    return small, large


def golden_config():
    return PolicyConfig(alpha_fb=0.5, alpha_rb=2.0, window_cap=3)


# vanilla decoding


def test_vanilla_immediate_eos(vocab3):
    model = make_table(vocab3, default=[0.05, 0.05, 0.9])
    result = vanilla_decode(model, [], Sampler.greedy(), 8)
    assert result.sequence == [EOS]
    assert result.counters.small_calls == 1
    assert result.trace == [SmallStep(0, EOS, 0.9), Eos(0)]


def test_vanilla_table_walk(vocab3):
    model = make_table(
        vocab3,
        default=[0.05, 0.05, 0.9],
        rows={(): [0.9, 0.05, 0.05], (A,): [0.05, 0.9, 0.05]},
    )
    result = vanilla_decode(model, [], Sampler.greedy(), 8)
    assert result.sequence == [A, B, EOS]
    assert result.counters.small_calls == 3
    assert result.counters.small_tokens == 3


def test_vanilla_matches_hand_replay(vocab3):
    model = fit_ngram([[A, B, A, B]], 2, 1.0, vocab3)
    expected = []
    ctx = []
    for _ in range(6):
        tok = model.score_next(ctx).argmax()
        expected.append(tok)
        ctx.append(tok)
        if tok == EOS:
            break
    result = vanilla_decode(model, [], Sampler.greedy(), 6)
    assert result.sequence == expected


def test_vanilla_max_len_validation(vocab3):
    model = make_table(vocab3, default=[0.05, 0.05, 0.9])
    with pytest.raises(InvalidInputError):
        vanilla_decode(model, [], Sampler.greedy(), 0)


# the frozen golden trace


def test_golden_sequence_and_counters(golden_pair):
    small, large = golden_pair
    result = bild_decode(small, large, golden_config(), Sampler.greedy(), [], 4)
    assert result.sequence == [B, B, B, B]
    assert result.provenance == ["large"] * 4
    c = result.counters
    assert c.small_tokens == 0
    assert c.large_tokens == 4
    assert c.fallback_count == 4
    assert c.rollback_count == 4
    assert c.tokens_discarded == 12
    assert c.small_calls == 12
    assert c.large_calls == 4


def test_golden_trace_bit_for_bit(golden_pair):
    small, large = golden_pair
    result = bild_decode(small, large, golden_config(), Sampler.greedy(), [], 4)
    expected = []
    for round_idx in range(4):
        base = round_idx  # committed tokens before this round
        for j in range(3):
            expected.append(SmallStep(base + j, A, 0.9))
        expected.append(Fallback(base + 3, "window_cap"))
        expected.append(
            LargeVerify(
                positions=(base, base + 1, base + 2),
                distances=(D_05, D_05, D_05),
            )
        )
        expected.append(Rollback(base, 3, B))
    assert result.trace == expected


def test_golden_trace_replays(golden_pair):
    small, large = golden_pair
    result = bild_decode(small, large, golden_config(), Sampler.greedy(), [], 4)
    assert replay_trace(result.trace, 4) == result.sequence


# degenerate thresholds


def test_alpha_fb_zero_equals_vanilla_small(golden_pair, vocab3):
    # an eos-terminating small model so the run ends before any handover
    small = make_table(
        vocab3,
        default=[0.05, 0.05, 0.9],
        rows={(): [0.9, 0.05, 0.05], (A,): [0.9, 0.05, 0.05], (A, A): [0.05, 0.05, 0.9]},
    )
    _, large = golden_pair
    config = PolicyConfig(alpha_fb=0.0, alpha_rb=0.5, window_cap=20)
    result = bild_decode(small, large, config, Sampler.greedy(), [], 20)
    reference = vanilla_decode(small, [], Sampler.greedy(), 20)
    assert result.sequence == reference.sequence == [A, A, EOS]
    assert result.counters.fallback_count == 0
    assert result.counters.large_calls == 0


def test_alpha_fb_above_one_equals_vanilla_large(golden_pair):
    small, large = golden_pair
    config = PolicyConfig(alpha_fb=1.01, alpha_rb=2.0, window_cap=10)
    result = bild_decode(small, large, config, Sampler.greedy(), [], 6)
    reference = vanilla_decode(large, [], Sampler.greedy(), 6)
    assert result.sequence == reference.sequence == [B] * 6
    assert result.counters.small_tokens == 0
    assert result.counters.fallback_count == 6
    assert result.counters.large_calls == 6
    assert result.counters.small_calls == 6  # the unconfident scores that triggered


def test_degenerate_equivalence_random_pairs():
    for seed in range(40):
        vocab, small, large = random_model_pair(seed)
        pure_small = bild_decode(
            small,
            large,
            PolicyConfig(alpha_fb=0.0, alpha_rb=1.0, window_cap=20),
            Sampler.greedy(),
            [],
            20,
        )
        assert pure_small.sequence == vanilla_decode(small, [], Sampler.greedy(), 20).sequence
        assert pure_small.counters.fallback_count == 0
        pure_large = bild_decode(
            small,
            large,
            PolicyConfig(alpha_fb=1.01, alpha_rb=1.0, window_cap=20),
            Sampler.greedy(),
            [],
            20,
        )
        assert pure_large.sequence == vanilla_decode(large, [], Sampler.greedy(), 20).sequence
        assert pure_large.counters.small_tokens == 0


# structural invariants over random runs


def run_random(seed: int):
    rng = random.Random(seed)
    vocab, small, large = random_model_pair(seed)
    config = PolicyConfig(
        alpha_fb=rng.choice([0.2, 0.4, 0.6, 0.8]),
        alpha_rb=rng.choice([0.5, 1.0, 2.0, 5.0, 30.0]),
        window_cap=rng.choice([1, 2, 3, 5]),
        rollback_enabled=rng.random() < 0.8,
    )
    prompt = [rng.randrange(vocab.size) for _ in range(rng.randint(0, 3))]
    max_len = rng.randint(1, 15)
    result = bild_decode(small, large, config, Sampler.greedy(), prompt, max_len)
    return config, max_len, result


def test_window_cap_invariant():
    for seed in range(150):
        config, _, result = run_random(seed)
        consecutive = 0
        for event in result.trace:
            if isinstance(event, SmallStep):
                consecutive += 1
                assert consecutive <= config.draft_cap
            elif isinstance(event, Fallback):
                consecutive = 0


def test_rollback_minimality_invariant():
    for seed in range(150):
        config, _, result = run_random(seed)
        events = result.trace
        for i, event in enumerate(events):
            if isinstance(event, Rollback):
                verify = events[i - 1]
                assert isinstance(verify, LargeVerify)
                idx = verify.positions.index(event.position)
                for d in verify.distances[:idx]:
                    assert d <= config.alpha_rb
                assert verify.distances[idx] > config.alpha_rb


def test_trace_replay_invariant():
    for seed in range(150):
        _, max_len, result = run_random(seed)
        assert replay_trace(result.trace, max_len) == result.sequence


def test_call_accounting_invariant():
    for seed in range(150):
        config, _, result = run_random(seed)
        small_steps = sum(1 for e in result.trace if isinstance(e, SmallStep))
        low_conf = sum(
            1
            for e in result.trace
            if isinstance(e, Fallback) and e.reason == "low_confidence"
        )
        fallbacks = sum(1 for e in result.trace if isinstance(e, Fallback))
        assert result.counters.large_calls == result.counters.fallback_count == fallbacks
        assert result.counters.small_calls == small_steps + low_conf
        assert (
            result.counters.small_tokens + result.counters.large_tokens
            == len(result.sequence)
        )


def test_identical_models_never_roll_back():
    # compatible thresholds: drafted tokens have max_prob >= alpha_fb, so
    # the self-distance -ln(max_prob) <= -ln(alpha_fb) < alpha_rb
    config = PolicyConfig(alpha_fb=0.5, alpha_rb=2.0, window_cap=3)
    for seed in range(30):
        vocab, model, _ = random_model_pair(seed)
        result = bild_decode(model, model, config, Sampler.greedy(), [], 12)
        reference = vanilla_decode(model, [], Sampler.greedy(), 12)
        assert result.sequence == reference.sequence
        assert result.counters.rollback_count == 0


def test_vocabulary_mismatch_is_configuration_error(vocab3):
    small = make_table(vocab3, default=[0.9, 0.05, 0.05])
    other = Vocabulary(size=4, eos=3)
    large = make_table(other, default=[0.7, 0.1, 0.1, 0.1])
    with pytest.raises(VocabularyMismatchError):
        bild_decode(small, large, golden_config(), Sampler.greedy(), [], 4)


def test_confident_eos_terminates_without_verification(vocab3, golden_pair):
    small = make_table(vocab3, default=[0.05, 0.05, 0.9])
    _, large = golden_pair
    config = PolicyConfig(alpha_fb=0.5, alpha_rb=2.0, window_cap=3)
    result = bild_decode(small, large, config, Sampler.greedy(), [], 4)
    assert result.sequence == [EOS]
    assert result.counters.fallback_count == 0
    assert result.trace == [SmallStep(0, EOS, 0.9), Eos(0)]


def test_verify_eos_switch_forces_verification(vocab3, golden_pair):
    small = make_table(vocab3, default=[0.05, 0.05, 0.9])
    _, large = golden_pair
    config = PolicyConfig(alpha_fb=0.5, alpha_rb=2.0, window_cap=3, verify_eos=True)
    result = bild_decode(small, large, config, Sampler.greedy(), [], 4)
    # eos has large prob 0.05 -> distance ~3.0 > 2.0 -> rolled back to "b"
    assert result.sequence[0] == B
    fallbacks = [e for e in result.trace if isinstance(e, Fallback)]
    assert fallbacks[0].reason == "forced"


def test_prompt_conditions_but_does_not_appear(vocab3):
    model = make_table(
        vocab3,
        default=[0.05, 0.05, 0.9],
        rows={(B,): [0.9, 0.05, 0.05], (B, A): [0.05, 0.05, 0.9]},
    )
    result = vanilla_decode(model, [B], Sampler.greedy(), 5)
    assert result.sequence == [A, EOS]


def test_fallback_verification_conditions_on_prompt(vocab3):
    # the large model's append must be conditioned on the prompt context
    small = make_table(vocab3, default=[0.4, 0.4, 0.2])  # never confident
    large = make_table(
        vocab3,
        default=[0.05, 0.05, 0.9],
        rows={(B,): [0.9, 0.05, 0.05]},
    )
    config = PolicyConfig(alpha_fb=0.5, alpha_rb=2.0, window_cap=3)
    result = bild_decode(small, large, config, Sampler.greedy(), [B], 4)
    assert result.sequence == [A, EOS]  # large saw prompt [b], then [b, a]
    assert result.counters.small_calls == result.counters.large_calls == 2


def test_stochastic_bild_is_reproducible(golden_pair):
    small, large = golden_pair
    sampler = Sampler.nucleus(0.95, seed=7)
    first = bild_decode(small, large, golden_config(), sampler, [], 6)
    second = bild_decode(small, large, golden_config(), sampler, [], 6)
    assert first.sequence == second.sequence
    assert first.trace == second.trace


# oracle blend


def test_blend_threshold_zero_is_pure_small(golden_pair):
    small, large = golden_pair
    result, engagement = oracle_blend_decode(small, large, 0.0, Sampler.greedy(), [], 3)
    assert engagement == 0.0
    assert result.sequence == vanilla_decode(small, [], Sampler.greedy(), 3).sequence


def test_blend_threshold_one_is_pure_large(golden_pair):
    small, large = golden_pair
    result, engagement = oracle_blend_decode(small, large, 1.0, Sampler.greedy(), [], 3)
    assert engagement == 1.0
    assert result.sequence == vanilla_decode(large, [], Sampler.greedy(), 3).sequence


def test_blend_hand_example(golden_pair):
    small, large = golden_pair
    result, engagement = oracle_blend_decode(small, large, 0.5, Sampler.greedy(), [], 3)
    assert result.sequence == [B, B, B]
    assert engagement == 1.0
    assert result.counters.small_calls == result.counters.large_calls == 3


def test_blend_threshold_validation(golden_pair):
    small, large = golden_pair
    with pytest.raises(InvalidInputError):
        oracle_blend_decode(small, large, 1.5, Sampler.greedy(), [], 3)


# ablations


def test_no_rollback_with_alpha_zero_is_vanilla_small(vocab3, golden_pair):
    small = make_table(
        vocab3,
        default=[0.05, 0.05, 0.9],
        rows={(): [0.9, 0.05, 0.05]},
    )
    _, large = golden_pair
    config = PolicyConfig(alpha_fb=0.0, alpha_rb=2.0, window_cap=20)
    result = ablation_decode("no_rollback", small, large, config, Sampler.greedy(), [], 10)
    assert result.sequence == vanilla_decode(small, [], Sampler.greedy(), 10).sequence


def test_no_rollback_commits_disputed_drafts(golden_pair):
    small, large = golden_pair
    result = ablation_decode(
        "no_rollback", small, large, golden_config(), Sampler.greedy(), [], 4
    )
    # drafts a,a,a survive verification, then the large model appends b
    assert result.sequence == [A, A, A, B]
    assert result.counters.rollback_count == 0
    full = bild_decode(small, large, golden_config(), Sampler.greedy(), [], 4)
    assert result.sequence != full.sequence


def test_fixed_window_one_verifies_every_token(golden_pair):
    small, large = golden_pair
    result = ablation_decode(
        "fixed_window", small, large, golden_config(), Sampler.greedy(), [], 4, k=1
    )
    max_pending = 0
    pending = 0
    for event in result.trace:
        if isinstance(event, SmallStep):
            pending += 1
            max_pending = max(max_pending, pending)
        elif isinstance(event, Fallback):
            pending = 0
    assert max_pending == 1
    assert all(
        e.reason == "window_cap" for e in result.trace if isinstance(e, Fallback)
    )


def test_unknown_variant_rejected(golden_pair):
    small, large = golden_pair
    with pytest.raises(InvalidInputError):
        ablation_decode("no_fallback", small, large, golden_config(), Sampler.greedy(), [], 4)


# budget handling


def test_commit_overshoot_is_truncated(vocab3, golden_pair):
    # small drafts three confident tokens; verification keeps them and the
    # large model appends, overshooting max_len=2; result is truncated.
    small = make_table(vocab3, default=[0.9, 0.05, 0.05])
    large = make_table(vocab3, default=[0.9, 0.05, 0.05])
    config = PolicyConfig(alpha_fb=0.5, alpha_rb=30.0, window_cap=3)
    result = bild_decode(small, large, config, Sampler.greedy(), [], 2)
    assert result.sequence == [A, A]
    assert len(result.provenance) == 2
    assert replay_trace(result.trace, 2) == result.sequence
