"""
Coarse matching, refinement and match dumps
"""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lidarcam_reg.errors import DimensionMismatch, FormatError, InvalidConfig, WindowOutOfRange
from lidarcam_reg.matching import (
    CoarseMatchSet, ConfidenceMatrix, FineMatchSet, ProbMatrix, RepeatabilityMLP, RepeatabilityMap,
    SimilarityMatrix,
    cell_to_fine, cosine_similarity, dual_softmax, extract_coarse_matches, fine_to_pixel,
    fuse_confidence, read_matches, refine, repeatability, soft_argmax, write_matches,
)
from lidarcam_reg.matching.coarse import SCORE_CEIL


def prob(values) -> ProbMatrix:
    return ProbMatrix(torch.as_tensor(np.asarray(values, dtype=np.float64)))


def random_matrix(rows: int, cols: int, seed: int, levels: int = 0) -> np.ndarray:
    """Uniform values in [0, 1]; with levels > 0 they are quantized so ties are common"""
    values = np.random.default_rng(seed).uniform(size=(rows, cols))
    return np.floor(values * levels) / levels if levels else values


def first_max(values) -> int:
    best = 0
    for k in range(1, len(values)):
        if values[k] > values[best]:
            best = k
    return best


def coarse_at(lidar_index, cam_index, lidar_grid=(4, 4), cam_grid=(4, 4)) -> CoarseMatchSet:
    n = len(lidar_index)
    return CoarseMatchSet(np.asarray(lidar_index), np.asarray(cam_index), np.full(n, 0.5), 0.2,
                          lidar_grid=lidar_grid, cam_grid=cam_grid)


class TestSimilarity:

    def test_identity_tokens(self):
        sim = cosine_similarity(torch.eye(2, dtype=torch.float64), torch.eye(2, dtype=torch.float64), 0.1)
        assert torch.allclose(sim.values, torch.tensor([[10.0, 0.0], [0.0, 10.0]], dtype=torch.float64))

    def test_dual_softmax_reference_value(self):
        p = dual_softmax(cosine_similarity(torch.eye(2), torch.eye(2), 0.1))
        assert float(p.values[0, 0]) == pytest.approx(0.999909, abs=1e-6)
        assert float(p.values[0, 1]) == pytest.approx((1 / (1 + np.exp(10))) ** 2)

    def test_zero_norm_token_gives_zero_row(self):
        a = torch.tensor([[0.0, 0.0], [1.0, 1.0]], dtype=torch.float64)
        sim = cosine_similarity(a, torch.eye(2, dtype=torch.float64), 0.5)
        assert torch.equal(sim.values[0], torch.zeros(2, dtype=torch.float64))

    def test_scale_invariant(self, rng):
        a = torch.as_tensor(rng.normal(size=(4, 6)))
        b = torch.as_tensor(rng.normal(size=(3, 6)))
        assert torch.allclose(cosine_similarity(a, b, 0.2).values, cosine_similarity(3 * a, b, 0.2).values)

    def test_bad_temperature(self):
        with pytest.raises(InvalidConfig):
            cosine_similarity(torch.eye(2), torch.eye(2), 0.0)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_similarity(torch.eye(2), torch.eye(3), 1.0)

    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(-20, 20)))
    def test_dual_softmax_bounded(self, values):
        p = dual_softmax(prob(values)).values
        assert torch.all(p >= 0) and torch.all(p <= 1)
        assert torch.all(p.sum(dim=1) <= 1 + 1e-9) and torch.all(p.sum(dim=0) <= 1 + 1e-9)

    def test_dual_softmax_empty(self):
        assert dual_softmax(prob(np.zeros((0, 3)))).values.shape == (0, 3)

    @given(st.integers(1, 32), st.integers(1, 32), st.integers(0, 2**32 - 1))
    def test_dual_softmax_matches_direct_formula(self, rows, cols, seed):
        values = np.random.default_rng(seed).uniform(-30, 30, (rows, cols))
        e = np.exp(values)
        expected = (e / e.sum(axis=1, keepdims=True)) * (e / e.sum(axis=0, keepdims=True))
        got = dual_softmax(SimilarityMatrix(torch.as_tensor(values), 1.0)).values.numpy()
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-9)

    @given(st.integers(1, 32), st.integers(1, 32), st.integers(0, 2**32 - 1), st.floats(-50, 50))
    def test_dual_softmax_ignores_a_global_shift(self, rows, cols, seed, shift):
        values = torch.as_tensor(np.random.default_rng(seed).uniform(-30, 30, (rows, cols)))
        a = dual_softmax(SimilarityMatrix(values, 1.0)).values
        b = dual_softmax(SimilarityMatrix(values + shift, 1.0)).values
        assert torch.allclose(a, b, rtol=0, atol=1e-9)


class TestRepeatabilityAndFusion:

    def test_zero_mlp_scores_half(self):
        scores = repeatability(torch.ones(5, 4, dtype=torch.float64), RepeatabilityMLP.zeros(4))
        assert torch.allclose(scores.scores, torch.full((5,), 0.5, dtype=torch.float64))

    def test_scores_stay_open(self):
        r = RepeatabilityMap.from_logits(torch.tensor([-1000.0, 1000.0], dtype=torch.float64))
        assert 0.0 < float(r.scores[0]) and float(r.scores[1]) == SCORE_CEIL < 1.0

    def test_fusion_scales_rows(self):
        p = prob([[0.2, 0.4], [0.6, 0.8]])
        fused = fuse_confidence(p, RepeatabilityMap.constant(2, 0.5))
        assert torch.allclose(fused.values, p.values * 0.5)

    def test_fusion_bypass(self):
        p = prob([[0.2, 0.4]])
        assert torch.equal(fuse_confidence(p, None).values, p.values)

    def test_fusion_row_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fuse_confidence(prob(np.zeros((3, 2))), RepeatabilityMap.constant(2, 0.5))

    @given(st.integers(1, 24), st.integers(1, 24), st.integers(0, 2**32 - 1), st.data())
    def test_fusion_keeps_row_argmax(self, rows, cols, seed, data):
        # powers of two scale rows exactly
        scores = data.draw(st.lists(st.integers(-20, 0).map(lambda k: 2.0 ** k),
                                    min_size=rows, max_size=rows))
        p = dual_softmax(SimilarityMatrix(torch.as_tensor(
            np.random.default_rng(seed).uniform(-30, 30, (rows, cols))), 1.0))
        fused = fuse_confidence(p, RepeatabilityMap(torch.tensor(scores, dtype=torch.float64)))
        for i in range(rows):
            assert first_max(fused.values[i].tolist()) == first_max(p.values[i].tolist())

    @given(st.integers(1, 24), st.integers(1, 24), st.integers(0, 2**32 - 1), st.data(),
           st.floats(0.01, 0.99))
    def test_zero_score_removes_the_row(self, rows, cols, seed, data, theta):
        silenced = data.draw(st.integers(0, rows - 1))
        scores = np.ones(rows)
        scores[silenced] = 0.0
        p = prob(random_matrix(rows, cols, seed))
        fused = fuse_confidence(p, RepeatabilityMap(torch.as_tensor(scores)))
        assert silenced not in extract_coarse_matches(fused, theta).lidar_index.tolist()

    @given(st.integers(1, 8).map(lambda k: 2 * k), st.integers(1, 16), st.integers(0, 2**32 - 1))
    @settings(max_examples=30)
    def test_mlp_matches_loops(self, channels, n, seed):
        rng = np.random.default_rng(seed)
        h = channels // 2
        w1, b1 = rng.normal(size=(channels, h)), rng.normal(size=h)
        w2, b2 = rng.normal(size=(h, 1)), rng.normal(size=1)
        tokens = rng.normal(size=(n, channels))
        mlp = RepeatabilityMLP(*(torch.as_tensor(t) for t in (w1, b1, w2, b2)))
        got = repeatability(torch.as_tensor(tokens), mlp).scores.numpy()
        for row in range(n):
            logit = b2[0]
            for k in range(h):
                hidden = b1[k]
                for c in range(channels):
                    hidden += tokens[row, c] * w1[c, k]
                logit += max(hidden, 0.0) * w2[k, 0]
            assert got[row] == pytest.approx(1.0 / (1.0 + np.exp(-logit)), abs=1e-9)

    def test_positive_bias_saturates(self, rng):
        mlp = RepeatabilityMLP.zeros(8)
        mlp = RepeatabilityMLP(mlp.w1, mlp.b1, mlp.w2, torch.tensor([10.0], dtype=torch.float64))
        scores = repeatability(torch.as_tensor(rng.normal(size=(6, 8))), mlp).scores
        assert torch.all(scores > 0.9999)


class TestExtractCoarseMatches:

    def test_mutual_nearest_and_threshold(self):
        s = ConfidenceMatrix(torch.tensor([[0.9, 0.1, 0.0],
                                           [0.8, 0.05, 0.0],
                                           [0.0, 0.1, 0.15]], dtype=torch.float64))
        matches = extract_coarse_matches(s, 0.12)
        assert matches.pairs() == {(0, 0), (2, 2)}
        np.testing.assert_allclose(matches.confidence, [0.9, 0.15])
        assert extract_coarse_matches(s, 0.2).pairs() == {(0, 0)}

    def test_ties_take_smallest_index(self):
        s = ConfidenceMatrix(torch.tensor([[0.5, 0.5], [0.1, 0.2]], dtype=torch.float64))
        matches = extract_coarse_matches(s, 0.1)
        assert (0, 0) in matches.pairs()
        assert matches.row_ties == 1

    def test_mnn_on_another_matrix(self):
        s = ConfidenceMatrix(torch.tensor([[0.3, 0.9], [0.9, 0.3]], dtype=torch.float64))
        p = prob([[0.9, 0.1], [0.1, 0.9]])
        matches = extract_coarse_matches(s, 0.2, mnn_on=p)
        assert matches.pairs() == {(0, 0), (1, 1)}
        np.testing.assert_allclose(matches.confidence, [0.3, 0.3])

    @pytest.mark.parametrize("theta", [0.0, 1.0, -0.5])
    def test_theta_range(self, theta):
        with pytest.raises(InvalidConfig):
            extract_coarse_matches(prob([[0.5]]), theta)

    def test_empty(self):
        assert len(extract_coarse_matches(prob(np.zeros((0, 4))), 0.2)) == 0

    @given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
                  elements=st.floats(0, 1)),
           st.floats(0.01, 0.99))
    def test_matches_are_mutual_and_confident(self, values, theta):
        matches = extract_coarse_matches(prob(values), theta)
        assert len(set(matches.lidar_index.tolist())) == len(matches)
        assert len(set(matches.cam_index.tolist())) == len(matches)
        for i, j in matches.pairs():
            assert values[i, j] >= theta
            assert values[i, j] == values[i].max() == values[:, j].max()

    @given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1),
           st.sampled_from([0, 4, 16]), st.floats(0.01, 0.99))
    @settings(max_examples=40)
    def test_matches_exhaustive_enumeration(self, rows, cols, seed, levels, theta):
        values = random_matrix(rows, cols, seed, levels)
        expected = set()
        for i in range(rows):
            j = first_max(values[i])
            if first_max(values[:, j]) == i and values[i, j] >= theta:
                expected.add((i, j))
        assert extract_coarse_matches(prob(values), theta).pairs() == expected

    @given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1),
           st.sampled_from([0, 4, 16]), st.floats(0.01, 0.99))
    @settings(max_examples=40)
    def test_transpose_swaps_the_pairs(self, rows, cols, seed, levels, theta):
        values = random_matrix(rows, cols, seed, levels)
        forward = extract_coarse_matches(prob(values), theta).pairs()
        backward = extract_coarse_matches(prob(values.T.copy()), theta).pairs()
        assert backward == {(j, i) for i, j in forward}


class TestRefine:

    def test_cell_geometry(self):
        r, c = cell_to_fine(np.array([0, 5]), 4)
        np.testing.assert_array_equal(r, [2, 6])
        np.testing.assert_array_equal(c, [2, 6])
        np.testing.assert_allclose(fine_to_pixel(np.array([2.0, 6.0])), [4.5, 12.5])

    def test_uniform_heatmap(self):
        fine = torch.zeros(16, 16, 4, dtype=torch.float64)
        out = refine(coarse_at([0], [5]), fine, fine, w=5)
        assert out.tau2[0] == pytest.approx(4.0)
        np.testing.assert_allclose(out.cam_fine[0], [6.0, 6.0])
        np.testing.assert_allclose(out.cam_px[0], [12.5, 12.5])
        np.testing.assert_allclose(out.lidar_px[0], [4.5, 4.5])
        assert not out.clamped[0]

    def test_peak_pulls_the_estimate(self):
        f0 = torch.zeros(16, 16, 2, dtype=torch.float64)
        f1 = torch.zeros(16, 16, 2, dtype=torch.float64)
        f0[2, 2] = torch.tensor([1.0, 0.0])
        f1[3, 1] = torch.tensor([1.0, 0.0])
        out = refine(coarse_at([0], [0]), f0, f1, w=5, temperature=0.01)
        np.testing.assert_allclose(out.cam_fine[0], [1.0, 3.0], atol=1e-6)
        assert out.tau2[0] < 1e-6

    def test_window_clamped_at_border(self):
        fine = torch.zeros(16, 16, 2, dtype=torch.float64)
        out = refine(coarse_at([0], [0]), fine, fine, w=7)
        assert out.clamped[0]
        np.testing.assert_allclose(out.window_center[0], [3.0, 3.0])

    def test_window_larger_than_grid(self):
        fine = torch.zeros(4, 4, 2, dtype=torch.float64)
        with pytest.raises(WindowOutOfRange):
            refine(coarse_at([0], [0], (1, 1), (1, 1)), fine, fine, w=5)

    @pytest.mark.parametrize("w", [1, 4])
    def test_bad_window(self, w):
        fine = torch.zeros(16, 16, 2, dtype=torch.float64)
        with pytest.raises(InvalidConfig):
            refine(coarse_at([0], [0]), fine, fine, w=w)

    def test_no_matches(self):
        fine = torch.zeros(16, 16, 2, dtype=torch.float64)
        out = refine(coarse_at([], []), fine, fine)
        assert len(out) == 0 and out.window == 5

    def test_subset(self):
        fine = torch.zeros(16, 16, 2, dtype=torch.float64)
        out = refine(coarse_at([0, 5], [5, 0]), fine, fine)
        kept = out.subset(np.array([False, True]))
        assert len(kept) == 1
        np.testing.assert_allclose(kept.lidar_px[0], out.lidar_px[1])


class TestSoftArgmax:

    def test_delta_at_centre(self):
        heat = np.zeros((5, 5))
        heat[2, 2] = 1.0
        dx, dy, tau2 = soft_argmax(heat)
        assert (dx, dy) == (0.0, 0.0)
        assert tau2 == pytest.approx(1e-12)

    def test_offset_peak(self):
        heat = np.zeros((3, 3))
        heat[0, 2] = 1.0
        dx, dy, _ = soft_argmax(heat)
        assert (dx, dy) == (1.0, -1.0)

    def test_even_size(self):
        with pytest.raises(InvalidConfig):
            soft_argmax(np.ones((4, 4)))

    @given(st.integers(1, 5).flatmap(lambda half: st.tuples(st.just(half), st.integers(1, half))))
    def test_symmetric_peaks(self, half_and_distance):
        half, d = half_and_distance
        heat = np.zeros((2 * half + 1, 2 * half + 1))
        heat[half, half - d] = heat[half, half + d] = 1.0
        dx, dy, tau2 = soft_argmax(heat)
        assert dx == pytest.approx(0.0, abs=1e-12) and dy == pytest.approx(0.0, abs=1e-12)
        assert tau2 == pytest.approx(d * d, abs=1e-9)


class TestMatchDump:

    def test_round_trip(self, tmp_path):
        fine = torch.zeros(16, 16, 2, dtype=torch.float64)
        out = refine(coarse_at([0, 5], [5, 0]), fine, fine)
        write_matches(tmp_path / "m.txt", out, theta_c=0.2, window=5)
        back = read_matches(tmp_path / "m.txt")
        assert back.header == {"theta_c": "0.2", "window": "5"}
        np.testing.assert_array_equal(back.lidar_px, out.lidar_px)
        np.testing.assert_array_equal(back.tau2, out.tau2)

    def test_empty_file(self, tmp_path):
        write_matches(tmp_path / "m.txt", FineMatchSet.empty(5))
        assert len(read_matches(tmp_path / "m.txt")) == 0

    def test_bad_row(self, tmp_path):
        (tmp_path / "m.txt").write_text("# window=5\n1 2 3\n")
        with pytest.raises(FormatError):
            read_matches(tmp_path / "m.txt")
