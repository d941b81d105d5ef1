import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_decoding.ensembles import (
    Codebook,
    ConvCodeSpec,
    LinearCodeSpec,
    build_trellis,
    encode_conv,
    encode_linear,
    message_bits,
    sample_conv,
    sample_iid_codebook,
    sample_linear,
    sample_type_class_codebook,
    stream,
    to_json,
    trellis_walk,
)
from minimax_decoding.exponents import incorrect_path_count_bound
from minimax_decoding.probcore import Pmf


class TestStream:
    def test_reproducible(self):
        assert stream(7, 0, 3).integers(0, 2**32) == stream(7, 0, 3).integers(0, 2**32)

    def test_ids_separate_streams(self):
        a = stream(7, 0, 3).random(8)
        b = stream(7, 0, 4).random(8)
        assert not np.array_equal(a, b)


class TestCodebook:
    def test_degenerate_q(self, rng):
        cb = sample_iid_codebook(Pmf([0.0, 1.0]), 5, 12, rng)
        assert np.all(cb.words == 1)

    def test_uniform_ones_fraction(self, rng):
        cb = sample_iid_codebook(Pmf.uniform(2), 4, 10_000, rng)
        np.testing.assert_allclose(cb.words.mean(axis=1), 0.5, atol=0.02)

    def test_same_seed(self):
        a = sample_iid_codebook(Pmf([0.3, 0.7]), 8, 20, stream(1, 1))
        b = sample_iid_codebook(Pmf([0.3, 0.7]), 8, 20, stream(1, 1))
        np.testing.assert_array_equal(a.words, b.words)

    def test_rate(self):
        cb = Codebook(np.zeros((4, 8), dtype=int))
        assert cb.rate == pytest.approx(np.log(4) / 8)

    @pytest.mark.parametrize("words", [np.zeros((1, 4)), np.zeros((3, 0)), np.full((2, 3), 2)])
    def test_invalid(self, words):
        with pytest.raises(ValueError):
            Codebook(words)

    def test_round_trip(self, rng):
        cb = sample_iid_codebook(Pmf.uniform(3), 4, 6, rng)
        back = Codebook.from_dict(json.loads(json.dumps(cb.to_dict())))
        np.testing.assert_array_equal(back.words, cb.words)
        assert back.x_size == 3

    def test_type_class_composition(self, rng):
        cb = sample_type_class_codebook([3, 5], 10, rng)
        np.testing.assert_array_equal(cb.words.sum(axis=1), 5)


class TestLinear:
    def test_message_bits_msb_first(self):
        np.testing.assert_array_equal(message_bits(6, 3), [1, 1, 0])

    @pytest.mark.parametrize("seed", range(5))
    def test_systematic_identity(self, seed):
        spec = sample_linear(3, 7, True, stream(seed, 1))
        np.testing.assert_array_equal(spec.g[:, :3], np.eye(3))

    def test_zero_message(self, rng):
        spec = sample_linear(3, 7, False, rng)
        np.testing.assert_array_equal(encode_linear(spec, [0, 0, 0]), spec.v0)

    def test_systematic_prefix(self, rng):
        spec = sample_linear(3, 7, True, rng)
        u = np.array([1, 0, 1])
        np.testing.assert_array_equal(encode_linear(spec, u)[:3], u ^ spec.v0[:3])

    def test_hand_example(self):
        spec = LinearCodeSpec(np.array([[1, 0, 1], [0, 1, 1]]), np.zeros(3))
        np.testing.assert_array_equal(encode_linear(spec, [1, 1]), [1, 1, 0])

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 15), st.integers(0, 15))
    def test_affine(self, seed, m1, m2):
        spec = sample_linear(4, 9, False, np.random.default_rng(seed))
        u1, u2 = message_bits(m1, 4), message_bits(m2, 4)
        lhs = encode_linear(spec, u1) ^ encode_linear(spec, u2) ^ spec.v0
        np.testing.assert_array_equal(lhs, encode_linear(spec, u1 ^ u2))

    def test_codebook_order(self, rng):
        spec = sample_linear(2, 5, False, rng)
        cb = spec.codebook()
        assert cb.M == 4
        np.testing.assert_array_equal(cb.words[2], encode_linear(spec, [1, 0]))

    def test_bit_equiprobable_over_seeds(self):
        u = np.array([1, 0, 1])
        words = np.stack([encode_linear(sample_linear(3, 8, False, stream(s, 1)), u)
                          for s in range(10_000)])
        np.testing.assert_allclose(words.mean(axis=0), 0.5, atol=0.02)

    @pytest.mark.parametrize("K, N", [(0, 4), (4, 4)])
    def test_shape_checks(self, K, N, rng):
        with pytest.raises(ValueError):
            sample_linear(K, N, False, rng)

    def test_systematic_flag_checked(self):
        with pytest.raises(ValueError):
            LinearCodeSpec(np.array([[0, 1, 1], [1, 0, 1]]), np.zeros(3), systematic=True)

    def test_round_trip(self, rng):
        spec = sample_linear(2, 6, True, rng)
        back = LinearCodeSpec.from_dict(json.loads(to_json(spec)))
        np.testing.assert_array_equal(back.g, spec.g)
        assert back.systematic


class TestConvolutional:
    def test_zero_info_zero_offset(self, rng):
        spec = sample_conv(1, 2, 3, 6, rng, zero_offset=True)
        assert not encode_conv(spec, np.zeros(6)).any()

    def test_zero_info_gives_offsets(self, rng):
        spec = sample_conv(2, 3, 3, 5, rng)
        np.testing.assert_array_equal(encode_conv(spec, np.zeros(10)), spec.v0.ravel())

    def test_shapes(self, rng):
        spec = sample_conv(1, 2, 4, 10, rng)
        assert spec.branches == 13 and spec.code_length == 26 and spec.n_states == 8
        assert spec.rate_bits == 0.5

    @pytest.mark.parametrize("b, K, L", [(1, 3, 6), (1, 1, 4), (2, 2, 3), (1, 4, 5)])
    def test_walk_matches_encoder_exhaustively(self, b, K, L, rng):
        spec = sample_conv(b, 2, K, L, rng)
        trellis = build_trellis(spec)
        infos = message_bits(np.arange(2 ** (b * L)), b * L)
        batch = encode_conv(spec, infos)
        for info, code in zip(infos, batch):
            np.testing.assert_array_equal(trellis_walk(trellis, info), code)

    def test_out_degree(self, rng):
        trellis = build_trellis(sample_conv(2, 3, 3, 4, rng))
        assert trellis.next_state.shape == (16, 4)
        # every state is reached by exactly 2^b predecessors
        np.testing.assert_array_equal(np.bincount(trellis.next_state.ravel(), minlength=16), 4)

    def test_predecessor_tables(self, rng):
        trellis = build_trellis(sample_conv(1, 2, 3, 4, rng))
        for s in range(trellis.n_states):
            for ps, pu in zip(trellis.pred_state[s], trellis.pred_input[s]):
                assert trellis.next_state[ps, pu] == s

    @settings(max_examples=40)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 7))
    def test_causal(self, seed, t):
        rng = np.random.default_rng(seed)
        spec = sample_conv(1, 2, 3, 8, rng)
        info = rng.integers(0, 2, 8)
        flipped = info.copy()
        flipped[t] ^= 1
        a, b = encode_conv(spec, info), encode_conv(spec, flipped)
        np.testing.assert_array_equal(a[: 2 * t], b[: 2 * t])

    @pytest.mark.parametrize("b, K, l", [(1, 3, 0), (1, 3, 2), (1, 3, 4), (2, 2, 2)])
    def test_incorrect_path_count(self, b, K, l, rng):
        trellis = build_trellis(sample_conv(b, 2, K, l + 2, rng))
        U = 2 ** b
        count = 0
        for blocks in itertools.product(range(U), repeat=l + 1):
            if blocks[0] == 0 or blocks[-1] == 0:
                continue
            s, remerged = 0, False
            for i, u in enumerate(list(blocks) + [0] * (K - 1)):
                s = trellis.next_state[s, u]
                if s == 0 and i < l + K - 1:
                    remerged = True
            count += (s == 0) and not remerged
        assert 0 < count <= incorrect_path_count_bound(b, l)

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            ConvCodeSpec(1, 2, 3, 4, np.zeros((5, 3, 1, 2)), np.zeros((6, 2)))

    def test_info_length(self, rng):
        with pytest.raises(ValueError):
            encode_conv(sample_conv(1, 2, 3, 4, rng), np.zeros(5))

    def test_round_trip(self, rng):
        spec = sample_conv(1, 2, 3, 4, rng)
        back = ConvCodeSpec.from_dict(json.loads(to_json(spec)))
        np.testing.assert_array_equal(back.generators, spec.generators)
        np.testing.assert_array_equal(back.v0, spec.v0)
