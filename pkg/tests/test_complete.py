import itertools

import numpy as np
import pytest

from finetec import nn
from finetec.complete import (
    INPUT_DIM, MASK_KINDS, CompletionConfig, CompletionModel, ICLBatch, MaskStrategy, SkeletonBank, apply_mask,
    baseline_restore, build_prior, complete, complete_all, forward_arrays, icl_forward, icl_loss,
    make_context, positional_encoding, pretrain_completion, resample, strategy_mask,
)
from finetec.core import SequenceError, SkeletonSequence, full_sequence
from finetec.corrupt import CorruptionSpec, corrupt
from finetec.synth import SynthSpec, gen_synth

from conftest import random_sequence
from oracles import mean_loop, mse_loop, piecewise_linear


def masked(seq, valid):
    return SkeletonSequence(np.where(valid[:, None, None], seq.frames, 0.0), valid, seq.id, seq.label)


# ------------------------------------------------------------------- prior

def test_prior_of_singleton_is_the_sequence():
    s = random_sequence(0)
    assert np.array_equal(build_prior(SkeletonBank((s,))).frames, s.frames)


def test_prior_of_symmetric_pair_is_zero():
    s = random_sequence(1)
    neg = full_sequence(-s.frames)
    assert np.all(build_prior(SkeletonBank((s, neg))).frames == 0.0)


def test_prior_matches_elementwise_mean():
    seqs = [random_sequence(i, T=5) for i in range(5)]
    expected = mean_loop([s.frames for s in seqs])
    np.testing.assert_allclose(build_prior(SkeletonBank(tuple(seqs))).frames, expected, rtol=1e-13, atol=1e-15)


def test_bank_contract():
    with pytest.raises(SequenceError):
        SkeletonBank(())
    with pytest.raises(SequenceError):
        SkeletonBank((random_sequence(0, T=5), random_sequence(1, T=6)))
    bad = corrupt(random_sequence(0), CorruptionSpec(0.25))
    with pytest.raises(SequenceError):
        SkeletonBank((bad,))
    bank = SkeletonBank.from_sequences([random_sequence(0, T=5), random_sequence(1, T=9)], length=7)
    assert bank.T == 7


def test_resample_endpoints_and_linearity():
    x = np.arange(5, dtype=float)[:, None, None] * np.ones((5, 17, 2))
    y = resample(x, 9)
    np.testing.assert_allclose(y[:, 0, 0], np.linspace(0, 4, 9), atol=1e-15)


# ---------------------------------------------------------------- masking

def test_prefix_quarter_masks_first_four():
    out = apply_mask(random_sequence(0), MaskStrategy("prefix", 0.25))
    assert np.flatnonzero(~out.valid).tolist() == [0, 1, 2, 3]


def test_middle_half_masks_four_to_eleven():
    out = apply_mask(random_sequence(0), MaskStrategy("middle", 0.5))
    assert np.flatnonzero(~out.valid).tolist() == list(range(4, 12))


def test_pattern_copies_query_mask():
    m = np.zeros(16, dtype=bool)
    m[[1, 5, 6, 13]] = True
    out = apply_mask(random_sequence(0), MaskStrategy("pattern"), m)
    assert np.array_equal(out.valid, ~m)
    assert np.all(out.frames[m] == 0.0)


def test_pattern_without_mask_rejected():
    with pytest.raises(ValueError):
        apply_mask(random_sequence(0), MaskStrategy("pattern"))
    with pytest.raises(ValueError):
        MaskStrategy("diagonal")
    with pytest.raises(ValueError):
        MaskStrategy("random", rate=1.0)


@pytest.mark.parametrize("T", range(3, 9))
def test_mask_supports_exhaustive_small(T):
    rates = [r / 20 for r in range(1, 20)]
    for rate in rates:
        n = round(rate * T)
        for kind in ("prefix", "suffix", "middle"):
            hidden = strategy_mask(T, MaskStrategy(kind, rate))
            idx = np.flatnonzero(hidden)
            assert idx.size == n
            if n:
                assert np.all(np.diff(idx) == 1)
                start = {"prefix": 0, "suffix": T - n, "middle": (T - n) // 2}[kind]
                assert idx[0] == start
        for seed in range(4):
            assert strategy_mask(T, MaskStrategy("random", rate, seed)).sum() == n
    for bits in itertools.product([False, True], repeat=T):
        m = np.array(bits)
        assert np.array_equal(strategy_mask(T, MaskStrategy("pattern"), m), m)


# ------------------------------------------------------------- the network

def test_positional_encoding_is_injective():
    pe = positional_encoding(4 * 1024)
    sq = np.sum(pe * pe, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * pe @ pe.T
    np.fill_diagonal(d2, np.inf)
    assert d2.min() > 1e-12


def test_input_width_is_43():
    assert INPUT_DIM == 43
    model = CompletionModel(4, embed=5, blocks=1)
    assert model.input_proj.weight.shape == (43, 5)
    assert model.output_proj.weight.shape == (5, 34)


def batch(T=6, seed=0, rate=0.5):
    gen = np.random.default_rng(seed)
    ctx = full_sequence(gen.normal(size=(T, 17, 2)))
    gt = full_sequence(gen.normal(size=(T, 17, 2)))
    query = corrupt(gt, CorruptionSpec(rate, "random", seed))
    mask = apply_mask(ctx, MaskStrategy("pattern"), ~query.valid)
    prior = full_sequence(gen.normal(size=(T, 17, 2)))
    return ICLBatch(ctx, mask, prior, query, gt)


def test_zero_weight_network_outputs_its_bias():
    T = 6
    model = CompletionModel(T, embed=8, blocks=2)
    model.load_flat(np.zeros(model.num_parameters()))
    bias = np.random.default_rng(0).normal(size=34)
    model.output_proj.bias.data = bias
    x = np.random.default_rng(1).normal(size=(2, 4 * T, INPUT_DIM))
    out = model(nn.tensor(x)).data
    assert np.array_equal(out, np.broadcast_to(bias, out.shape))


def test_zero_weight_icl_forward_returns_bias_plus_slot_center():
    T = 6
    model = CompletionModel(T, embed=8, blocks=2)
    model.load_flat(np.zeros(model.num_parameters()))
    b = batch(T)
    mask_done, base = icl_forward(model, b)
    q = b.corrupt
    center = q.frames[q.valid].mean(axis=0)
    np.testing.assert_allclose(base.frames, np.broadcast_to(center, base.frames.shape), atol=1e-15)
    m = b.mask
    np.testing.assert_allclose(mask_done.frames[0], m.frames[m.valid].mean(axis=0), atol=1e-15)


def test_icl_forward_shapes_validity_and_determinism():
    model = CompletionModel(6, embed=8, blocks=2, seed=3)
    b = batch()
    a1, b1 = icl_forward(model, b)
    a2, b2 = icl_forward(model, b)
    for s in (a1, b1):
        assert s.frames.shape == (6, 17, 2) and s.fully_valid
        assert np.all(np.isfinite(s.frames))
    assert np.array_equal(a1.frames, a2.frames) and np.array_equal(b1.frames, b2.frames)


def test_icl_batch_requires_common_length():
    b = batch()
    with pytest.raises(ValueError):
        ICLBatch(b.context, b.mask, random_sequence(0, T=7), b.corrupt)


def test_icl_loss_closed_forms_and_oracle():
    b = batch()
    assert icl_loss((b.context, b.target), b) == 0.0
    delta = 0.25
    assert icl_loss((b.context, full_sequence(b.target.frames + delta)), b) == pytest.approx(delta ** 2, rel=1e-12)
    gen = np.random.default_rng(5)
    o1, o2 = full_sequence(gen.normal(size=(6, 17, 2))), full_sequence(gen.normal(size=(6, 17, 2)))
    expected = mse_loop(b.target.frames, o2.frames) + mse_loop(b.context.frames, o1.frames)
    assert icl_loss((o1, o2), b) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        icl_loss((o1, o2), ICLBatch(b.context, b.mask, b.prior, b.corrupt))


def test_batched_forward_matches_single():
    model = CompletionModel(6, embed=8, blocks=2, seed=1)
    bs = [batch(seed=s) for s in range(3)]
    out = forward_arrays(
        model, np.stack([b.context.frames for b in bs]), np.stack([b.mask.frames for b in bs]),
        np.stack([b.mask.valid for b in bs]), bs[0].prior.frames,
        np.stack([b.corrupt.frames for b in bs]), np.stack([b.corrupt.valid for b in bs])).data
    for i, b in enumerate(bs):
        b = ICLBatch(b.context, b.mask, bs[0].prior, b.corrupt)
        _, base = icl_forward(model, b)
        np.testing.assert_allclose(out[i, 18:].reshape(6, 17, 2), base.frames, rtol=1e-12, atol=1e-14)


# ------------------------------------------------------------ pretraining

def small_bank(n=12, T=8):
    train, _ = gen_synth(SynthSpec(num_classes=3, per_class=n // 3 + 1, T=8, seed=0))
    return SkeletonBank.from_sequences(train[:n], length=T)


def test_pretraining_is_finite_and_reproducible():
    bank = small_bank()
    cfg = CompletionConfig(embed=8, blocks=1, steps=15, batch_size=4, seed=2, query_rates=(0.25, 0.5))
    r1, r2 = pretrain_completion(bank, cfg), pretrain_completion(bank, cfg)
    assert len(r1.history) == 15 and np.all(np.isfinite(r1.history))
    assert np.array_equal(r1.model.flat(), r2.model.flat())
    assert r1.history == r2.history


def test_pretraining_needs_two_sequences():
    with pytest.raises(SequenceError):
        pretrain_completion(SkeletonBank((random_sequence(0),)), CompletionConfig(steps=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_pretraining_divergence_reports_step():
    bank = small_bank()
    cfg = CompletionConfig(embed=8, blocks=1, steps=5, batch_size=4, lr_max=1e300, lr_min=1e300,
                           query_rates=(0.25, 0.5))
    with pytest.raises(nn.NumericError, match="step"):
        pretrain_completion(bank, cfg)


@pytest.mark.slow
def test_pretraining_lowers_loss_on_50_sequence_bank():
    train, _ = gen_synth(SynthSpec(num_classes=5, per_class=13, T=16, seed=4))
    bank = SkeletonBank.from_sequences(train[:50])
    hist = pretrain_completion(bank, CompletionConfig(steps=2000, seed=3)).history
    assert np.mean(hist[-50:]) < np.mean(hist[:50])
    assert hist[-1] < hist[0]


# -------------------------------------------------------------- inference

def test_complete_passes_valid_frames_through():
    bank = small_bank(T=6)
    model = CompletionModel(6, embed=8, blocks=1)
    s = random_sequence(4, T=6)
    out = complete(model, s, build_prior(bank), make_context(bank, s.valid))
    assert np.array_equal(out.frames, s.frames)


def test_untrained_completion_is_fully_valid():
    bank = small_bank(T=6)
    model = CompletionModel(6, embed=8, blocks=2, seed=9)
    seqs = [corrupt(random_sequence(i, T=6), CorruptionSpec(0.5, "random", i)) for i in range(5)]
    for out, s in zip(complete_all(model, seqs, bank), seqs):
        assert out.fully_valid and np.all(np.isfinite(out.frames))
        assert np.array_equal(out.frames[s.valid], s.frames[s.valid])
        single = complete(model, s, build_prior(bank), make_context(bank, s.valid, 0, (seqs.index(s),)))
        np.testing.assert_allclose(single.frames, out.frames, rtol=1e-12, atol=1e-14)


def test_context_uses_query_pattern():
    bank = small_bank(T=6)
    valid = np.array([True, False, True, True, False, True])
    ctx, m = make_context(bank, valid, seed=1)
    assert np.array_equal(m.valid, valid)
    assert ctx.fully_valid


# --------------------------------------------------------------- baselines

@pytest.mark.parametrize("method", ["left_copy", "right_copy", "interpolate", "duplicate"])
def test_baselines_are_identity_without_gaps(method):
    s = random_sequence(0)
    assert np.array_equal(baseline_restore(s, method).frames, s.frames)


def test_interpolate_midpoint():
    frames = np.zeros((3, 17, 2))
    frames[2] = 2.0
    s = masked(full_sequence(frames), np.array([True, False, True]))
    assert np.all(baseline_restore(s, "interpolate").frames[1] == 1.0)


def test_left_copy_on_suffix_mask_repeats_last_valid():
    s = apply_mask(random_sequence(2, T=8), MaskStrategy("suffix", 0.5))
    out = baseline_restore(s, "left_copy")
    for t in range(4, 8):
        assert np.array_equal(out.frames[t], s.frames[3])


def test_right_copy_on_prefix_mask_repeats_first_valid():
    s = apply_mask(random_sequence(2, T=8), MaskStrategy("prefix", 0.5))
    out = baseline_restore(s, "right_copy")
    for t in range(4):
        assert np.array_equal(out.frames[t], s.frames[4])


def test_duplicate_cycles_valid_frames():
    s = masked(random_sequence(3, T=7), np.array([False, True, True, False, True, False, False]))
    out = baseline_restore(s, "duplicate")
    order = [1, 2, 4, 1, 2, 4, 1]
    for t, src in enumerate(order):
        assert np.array_equal(out.frames[t], s.frames[src])


def test_baselines_reject_bad_input():
    with pytest.raises(ValueError):
        baseline_restore(random_sequence(0), "magic")


@pytest.mark.parametrize("seed", range(20))
def test_interpolation_exact_on_piecewise_linear_motion(seed):
    gen = np.random.default_rng(seed)
    T = int(gen.integers(6, 30))
    valid = gen.random(T) < 0.5
    valid[0] = valid[-1] = True            # interior masks only
    knots = np.flatnonzero(valid)
    values = gen.normal(size=(knots.size, 17, 2))
    gt = piecewise_linear(knots, values, T)
    out = baseline_restore(masked(full_sequence(gt), valid), "interpolate")
    assert np.abs(out.frames - gt).max() <= 1e-10
