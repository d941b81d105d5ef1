import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from minimax_decoding.channels import ChannelFamily, Dmc, bsc
from minimax_decoding.decoders import (
    ERROR,
    BranchMetric,
    DecoderKind,
    MLDecoder,
    MinimaxDecoder,
    MMIDecoder,
    RhoDecoder,
    decide,
    decode_batch,
    decode_block,
    f_metric,
    family_exponents,
    metrics_equal,
    mmi_metric,
    rho_metric,
    viterbi_batch,
    viterbi_min,
    viterbi_two_trellis,
    viterbi_two_trellis_batch,
)
from minimax_decoding.ensembles import (
    Codebook,
    build_trellis,
    encode_conv,
    message_bits,
    sample_conv,
    sample_iid_codebook,
)
from minimax_decoding.exponents import bsc_Er_star
from minimax_decoding.probcore import Pmf

binary = st.lists(st.integers(0, 1), min_size=10, max_size=10).map(np.array)


def er(theta):
    return bsc_Er_star(theta, 0.1).value


class TestMetrics:
    def test_rho_examples(self):
        x = np.zeros(10, dtype=int)
        assert rho_metric(x, x) == 0.0
        assert rho_metric(x, 1 - x) == 0.0
        y3 = x.copy()
        y3[:3] = 1
        y8 = x.copy()
        y8[:8] = 1
        assert rho_metric(x, y3) == 0.3
        assert rho_metric(x, y8) == pytest.approx(0.2)

    def test_rho_length_mismatch(self):
        with pytest.raises(ValueError):
            rho_metric([0, 1], [0])

    def test_mmi_examples(self):
        assert mmi_metric([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(math.log(2))
        assert mmi_metric([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-15)

    def test_f_singleton_xi_zero_is_loglik(self):
        x = np.array([0, 1, 1, 0, 1, 0])
        y = np.array([0, 1, 0, 0, 1, 1])
        fam = ChannelFamily.bsc_grid([0.2])
        expected = (2 * math.log(0.2) + 4 * math.log(0.8)) / 6
        assert f_metric(x, y, fam, 0.0, er) == pytest.approx(expected, abs=1e-12)

    def test_f_equal_words(self):
        fam = ChannelFamily.bsc_grid([0.05, 0.1, 0.2])
        x = np.array([0, 1, 1, 0, 1])
        expected = max(math.log(1 - t) + 0.5 * er(t) for t in fam.thetas)
        assert f_metric(x, x, fam, 0.5, er) == pytest.approx(expected, abs=1e-12)

    @settings(max_examples=100)
    @given(binary, binary, st.sampled_from([0.0, 0.5, 1.0]))
    def test_f_complement_symmetry(self, x, y, xi):
        fam = ChannelFamily.bsc_symmetric(0.1)
        assert metrics_equal(f_metric(x, y, fam, xi, er), f_metric(1 - x, y, fam, xi, er))

    @settings(max_examples=200)
    @given(binary, binary, binary, st.sampled_from([0.0, 0.5, 1.0]))
    def test_f_orders_like_rho(self, x1, x2, y, xi):
        fam = ChannelFamily.bsc_symmetric(0.05)
        f1, f2 = f_metric(x1, y, fam, xi, er), f_metric(x2, y, fam, xi, er)
        r1, r2 = rho_metric(x1, y), rho_metric(x2, y)
        assert (f1 > f2 and not metrics_equal(f1, f2)) == (r1 < r2)
        assert metrics_equal(f1, f2) == (r1 == r2)

    def test_f_exponent_sequence(self):
        fam = ChannelFamily.bsc_grid([0.1, 0.2])
        x = np.array([0, 1, 1])
        assert f_metric(x, x, fam, 1.0, [0.3, 0.1]) == pytest.approx(math.log(0.9) + 0.3)

    def test_f_zero_transition(self):
        w = Dmc(np.array([[1.0, 0.0], [0.0, 1.0]]))
        fam = ChannelFamily.explicit([w])
        assert f_metric([0, 1], [1, 1], fam, 0.0, [0.0]) == -math.inf

    def test_xi_range(self):
        with pytest.raises(ValueError):
            f_metric([0], [0], ChannelFamily.bsc_grid([0.1]), 1.5, er)

    def test_metrics_equal(self):
        assert metrics_equal(1.0, 1.0 + 1e-14)
        assert not metrics_equal(1.0, 1.0 + 1e-9)


class TestKind:
    def test_minimax_needs_family(self):
        with pytest.raises(ValueError):
            DecoderKind("minimax")

    def test_bad_policy(self):
        with pytest.raises(ValueError):
            DecoderKind.rho(tie_policy="coin")

    def test_xi_range(self):
        with pytest.raises(ValueError):
            DecoderKind.minimax(ChannelFamily.bsc_grid([0.1]), 1.2, 0.1)

    def test_family_exponents_bsc(self):
        fam = ChannelFamily.bsc_grid([0.05, 0.2])
        np.testing.assert_allclose(family_exponents(fam, 0.1), [er(0.05), er(0.2)])


class TestDecide:
    def test_noiseless_rho(self, rng):
        cb = sample_iid_codebook(Pmf.uniform(2), 8, 24, rng)
        out = decode_block(cb, cb.words[5], DecoderKind.rho())
        assert out.chosen == 5

    def test_identical_codewords_lowest(self):
        cb = Codebook(np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]]))
        out = decode_block(cb, np.array([1, 0, 0]), DecoderKind.ml(bsc(0.1)))
        assert out.chosen == 1 and out.tied

    def test_tie_is_error(self):
        cb = Codebook(np.array([[0, 0, 0, 0], [1, 1, 0, 0]]))
        # both at distance 1 from y
        out = decode_block(cb, np.array([1, 0, 0, 0]), DecoderKind.ml(bsc(0.1), "error"))
        assert out.chosen == ERROR

    def test_random_policy_uniform_over_tie_set(self):
        scores = np.tile([0.0, 1.0, 1.0, 0.5, 1.0], (30_000, 1))
        chosen, tied = decide(scores, DecoderKind.rho("random"), np.random.default_rng(3))
        assert tied.all()
        freq = np.bincount(chosen, minlength=5) / chosen.size
        np.testing.assert_allclose(freq, [0, 1 / 3, 1 / 3, 0, 1 / 3], atol=0.01)

    def test_random_policy_explicit_uniforms(self):
        scores = np.array([[1.0, 1.0, 0.0]])
        assert decide(scores, DecoderKind.mmi("random"), u=np.array([0.7]))[0][0] == 1

    def test_batch_matches_single(self, rng):
        cb = sample_iid_codebook(Pmf.uniform(2), 6, 12, rng)
        Y = rng.integers(0, 2, (40, 12))
        kind = DecoderKind.minimax(ChannelFamily.bsc_grid([0.05, 0.2]), 0.7, cb.rate)
        chosen, _ = decode_batch(cb.words, Y, kind)
        single = [decode_block(cb, y, kind).chosen for y in Y]
        np.testing.assert_array_equal(chosen, single)

    def test_ternary_channel(self, rng):
        w = Dmc(np.array([[0.8, 0.1, 0.1], [0.1, 0.1, 0.8]]))
        cb = sample_iid_codebook(Pmf.uniform(2), 4, 20, rng)
        y = np.where(cb.words[2] == 0, 0, 2)
        assert decode_block(cb, y, DecoderKind.ml(w)).chosen == 2

    def test_length_check(self, rng):
        cb = sample_iid_codebook(Pmf.uniform(2), 4, 5, rng)
        with pytest.raises(ValueError):
            decode_block(cb, np.zeros(6, dtype=int), DecoderKind.rho())


class TestEstimators:
    @pytest.fixture
    def codebook(self, rng):
        return sample_iid_codebook(Pmf.uniform(2), 8, 16, rng).words

    @pytest.mark.parametrize("make", [
        lambda: MLDecoder(bsc(0.1)),
        lambda: MinimaxDecoder(ChannelFamily.bsc_grid([0.05, 0.2]), xi=0.5),
        lambda: RhoDecoder(),
        lambda: MMIDecoder(),
    ])
    def test_fit_predict_noiseless(self, make, codebook):
        est = make().fit(codebook)
        np.testing.assert_array_equal(est.predict(codebook), np.arange(8))

    def test_clone_keeps_params(self):
        est = MinimaxDecoder(ChannelFamily.bsc_grid([0.1]), xi=0.3, rate=0.2, tie_policy="error")
        params = clone(est).get_params()
        assert params["xi"] == 0.3 and params["rate"] == 0.2 and params["tie_policy"] == "error"

    def test_decision_function_shape(self, codebook, rng):
        est = RhoDecoder().fit(codebook)
        assert est.decision_function(rng.integers(0, 2, (5, 16))).shape == (5, 8)

    def test_minimax_uses_codebook_rate(self, codebook):
        est = MinimaxDecoder(ChannelFamily.bsc_grid([0.05, 0.2]), xi=1.0).fit(codebook)
        expected = DecoderKind.minimax(ChannelFamily.bsc_grid([0.05, 0.2]), 1.0, math.log(8) / 16)
        assert est.kind_.exponents == expected.exponents

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            RhoDecoder().predict(np.zeros((1, 4)))

    def test_wrong_length(self, codebook):
        with pytest.raises(ValueError):
            RhoDecoder().fit(codebook).predict(np.zeros((1, 15)))


def brute_force_paths(spec):
    infos = message_bits(np.arange(2 ** (spec.b * spec.L)), spec.b * spec.L)
    return infos, encode_conv(spec, infos)


class TestViterbi:
    def test_recovers_clean_path(self, rng):
        spec = sample_conv(1, 2, 3, 10, rng)
        info = rng.integers(0, 2, 10)
        got, total = viterbi_min(build_trellis(spec), encode_conv(spec, info))
        np.testing.assert_array_equal(got, info)
        assert total == 0

    def test_negloglik_matches_hamming(self, rng):
        spec = sample_conv(1, 2, 4, 12, rng)
        trellis = build_trellis(spec)
        y = encode_conv(spec, rng.integers(0, 2, 12))
        a, _ = viterbi_min(trellis, y)
        b, _ = viterbi_min(trellis, y, BranchMetric("negloglik", 0.1))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("seed", range(20))
    def test_min_and_max_against_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        spec = sample_conv(1, 2, 3, 6, rng)
        trellis = build_trellis(spec)
        infos, codes = brute_force_paths(spec)
        y = rng.integers(0, 2, spec.code_length)
        d = np.count_nonzero(codes != y, axis=1)
        assert viterbi_min(trellis, y)[1] == d.min()
        assert viterbi_min(trellis, y, sense="max")[1] == d.max()

    def test_batch_with_row_labels(self, rng):
        specs = [sample_conv(1, 2, 3, 5, rng) for _ in range(4)]
        trellis = build_trellis(specs[0])
        labels = np.stack([build_trellis(s).labels for s in specs])
        Y = rng.integers(0, 2, (4, specs[0].code_length))
        info, totals = viterbi_batch(trellis, Y, labels=labels)
        for k, s in enumerate(specs):
            ref_info, ref_total = viterbi_min(build_trellis(s), Y[k])
            np.testing.assert_array_equal(info[k], ref_info)
            assert totals[k] == ref_total

    def test_bad_sense(self, rng):
        with pytest.raises(ValueError):
            viterbi_min(build_trellis(sample_conv(1, 2, 2, 3, rng)), np.zeros(8), sense="mid")

    def test_negloglik_needs_theta(self):
        with pytest.raises(ValueError):
            BranchMetric("negloglik")


class TestTwoTrellis:
    def test_codeword(self, rng):
        spec = sample_conv(1, 2, 3, 8, rng)
        info = rng.integers(0, 2, 8)
        got, rho = viterbi_two_trellis(build_trellis(spec), encode_conv(spec, info))
        np.testing.assert_array_equal(got, info)
        assert rho == 0.0

    def test_complement(self, rng):
        spec = sample_conv(1, 2, 3, 8, rng)
        info = rng.integers(0, 2, 8)
        got, rho = viterbi_two_trellis(build_trellis(spec), 1 - encode_conv(spec, info))
        np.testing.assert_array_equal(got, info)
        assert rho == 0.0

    @pytest.mark.parametrize("seed", range(100))
    def test_against_brute_force(self, seed):
        rng = np.random.default_rng(1000 + seed)
        spec = sample_conv(1, 2, 3, 8, rng)
        infos, codes = brute_force_paths(spec)
        y = rng.integers(0, 2, spec.code_length)
        d = np.count_nonzero(codes != y, axis=1)
        rho = np.minimum(d, spec.code_length - d)
        got, val = viterbi_two_trellis(build_trellis(spec), y)
        assert val * spec.code_length == rho.min()
        if np.count_nonzero(rho == rho.min()) == 1:
            np.testing.assert_array_equal(got, infos[np.argmin(rho)])

    def test_not_worse_than_truth(self, rng):
        spec = sample_conv(1, 2, 4, 16, rng)
        info = rng.integers(0, 2, (50, 16))
        sent = encode_conv(spec, info)
        Y = sent ^ (rng.random(sent.shape) < 0.1)
        _, rho = viterbi_two_trellis_batch(build_trellis(spec), Y)
        d = np.count_nonzero(Y != sent, axis=1)
        truth = np.minimum(d, sent.shape[1] - d) / sent.shape[1]
        assert np.all(rho <= truth)
