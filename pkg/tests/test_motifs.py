"""Word segmentation, embedding, clustering, signatures, transitions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choreokit import quat
from choreokit.audio import BeatGrid
from choreokit.core import antipodal_correct_rotations
from choreokit.motifs import (EmbeddingBasis, MotionWord, assign_motif,
                              assign_vector, build_motif_table,
                              build_transition_matrix, chi_square,
                              compute_signature, embed_word, fit_embedding,
                              kmeans, segment_words, template_signature,
                              timescale_word, word_vector)

from conftest import chain_skeleton, random_clip, random_unit_quats


def grid_for(beats, n_frames, fps=30.0):
    rhythmic = np.zeros((n_frames, 4))
    rhythmic[np.asarray(beats, dtype=int), 3] = 1.0
    return BeatGrid(fps, np.asarray(beats, dtype=int),
                    rhythmic, np.zeros((max(len(beats) - 1, 0), 87)))


def random_word(rng, n_frames=13, n_joints=3, span=(0, 13)):
    return MotionWord(
        root_disp=rng.normal(0, 0.3, (n_frames, 3)),
        rotations=random_unit_quats(rng, (n_frames, n_joints)),
        contacts=rng.integers(0, 2, (n_frames, 2)),
        beat_span=span,
    )


def smooth_word(rng, n_frames=13, n_joints=3):
    rot = np.empty((n_frames, n_joints, 4))
    rot[0] = random_unit_quats(rng, (n_joints,))
    for t in range(1, n_frames):
        axes = rng.normal(size=(n_joints, 3))
        axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
        steps = np.stack([quat.from_axis_angle(a, g) for a, g in
                          zip(axes, rng.uniform(0, 0.2, n_joints))])
        rot[t] = quat.mul(rot[t - 1], steps)
    return MotionWord(rng.normal(0, 0.3, (n_frames, 3)), rot,
                      np.zeros((n_frames, 2), dtype=int), (0, n_frames))


class TestSegmentWords:
    def test_even_split(self, rng):
        clip = random_clip(chain_skeleton(3), 26, rng)
        words = segment_words(clip, np.zeros((26, 2)), grid_for([0, 13, 26], 27))
        assert len(words) == 2
        assert all(w.num_frames == 13 for w in words)

    def test_leading_trailing_dropped(self, rng):
        clip = random_clip(chain_skeleton(3), 30, rng)
        words = segment_words(clip, np.zeros((30, 2)), grid_for([5, 15], 30))
        assert len(words) == 1
        assert words[0].num_frames == 10
        np.testing.assert_array_equal(words[0].rotations, clip.rotations[5:15])

    def test_frame_counting_identity(self, rng):
        # counting oracle: word lengths sum to the spanned beat range
        for _ in range(10):
            beats = np.unique(rng.integers(0, 200, 8))
            beats = beats[np.concatenate([[True], np.diff(beats) >= 2])]
            if len(beats) < 2:
                continue
            clip = random_clip(chain_skeleton(2), 200, rng)
            words = segment_words(clip, np.zeros((200, 2)), grid_for(beats, 200))
            assert sum(w.num_frames for w in words) == beats[-1] - beats[0]

    def test_too_few_beats(self, rng):
        clip = random_clip(chain_skeleton(2), 20, rng)
        with pytest.raises(ValueError, match="2 beats"):
            segment_words(clip, np.zeros((20, 2)), grid_for([4], 20))


class TestTimescale:
    def test_same_length_identity(self, rng):
        w = random_word(rng)
        out = timescale_word(w, 13)
        np.testing.assert_array_equal(out.rotations, w.rotations)
        np.testing.assert_array_equal(out.root_disp, w.root_disp)

    def test_downscale_preserves_total_displacement(self, rng):
        w = random_word(rng, n_frames=26)
        out = timescale_word(w, 13)
        assert out.num_frames == 13
        np.testing.assert_allclose(out.total_displacement(), w.total_displacement(),
                                   atol=1e-6)

    def test_upscale_preserves_rotation_path_length(self, rng):
        w = smooth_word(rng, n_frames=7)
        out = timescale_word(w, 13)

        def path_len(rot):
            return sum(float(np.sum(np.sqrt(quat.log_distance_sq(rot[t - 1], rot[t]))))
                       for t in range(1, len(rot)))

        assert path_len(out.rotations) == pytest.approx(path_len(w.rotations), abs=1e-3)


class TestEmbedding:
    def make_corpus(self, rng, n=40, n_frames_range=(8, 20)):
        words = []
        for _ in range(n):
            nf = int(rng.integers(*n_frames_range))
            words.append(smooth_word(rng, n_frames=nf))
        return words

    def test_beats_random_projection(self, rng):
        # variance-capture oracle: PCA must retain more energy than any
        # equal-rank random projection of the same corpus
        words = self.make_corpus(rng, n=30)
        basis = fit_embedding(words, dim=8)
        X = np.stack([word_vector(w, basis.word_frames) for w in words]) - basis.mean
        pca_energy = np.linalg.norm(X @ basis.projection.T) ** 2
        for seed in range(5):
            g = np.random.default_rng(seed).normal(size=(X.shape[1], 8))
            q, _ = np.linalg.qr(g)
            rand_energy = np.linalg.norm(X @ q) ** 2
            assert pca_energy > rand_energy

    def test_deterministic_for_duplicate_corpus(self, rng):
        words = self.make_corpus(rng, n=20)
        b1 = fit_embedding(words, dim=6)
        b2 = fit_embedding([w.copy() for w in words] + [w.copy() for w in words], dim=6)
        np.testing.assert_allclose(b1.projection, b2.projection, atol=1e-8)
        b3 = fit_embedding(words, dim=6)
        np.testing.assert_array_equal(b1.projection, b3.projection)

    def test_antipodal_flip_invariance(self, rng):
        words = self.make_corpus(rng, n=20)
        basis = fit_embedding(words, dim=6)
        w = words[3]
        flipped = w.copy()
        flipped.rotations = -flipped.rotations
        np.testing.assert_allclose(embed_word(w, basis), embed_word(flipped, basis),
                                   atol=1e-12)

    def test_unit_norm_and_timescale_invariance(self, rng):
        words = self.make_corpus(rng, n=20)
        basis = fit_embedding(words, dim=6)
        w = words[0]
        v = embed_word(w, basis)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(embed_word(timescale_word(w, 13), basis), v, atol=1e-9)

    def test_jittered_copy_is_nearest_neighbor(self, rng):
        words = self.make_corpus(rng, n=25)
        basis = fit_embedding(words, dim=10)
        vectors = np.stack([embed_word(w, basis) for w in words])
        target = words[7].copy()
        target.rotations = target.rotations + rng.normal(0, 1e-4, target.rotations.shape)
        target.rotations /= np.linalg.norm(target.rotations, axis=-1, keepdims=True)
        v = embed_word(target, basis)
        assert int(np.argmin(np.linalg.norm(vectors - v, axis=1))) == 7

    def test_dim_reduces_for_small_corpus(self, rng):
        words = self.make_corpus(rng, n=5)
        basis = fit_embedding(words, dim=184)
        assert basis.dim == 4  # n - 1

    def test_too_few_words(self, rng):
        with pytest.raises(ValueError, match="at least 2"):
            fit_embedding([smooth_word(rng)], dim=4)


class TestKMeans:
    def test_recovers_separated_blobs(self, rng):
        centers = np.array([[10.0, 0.0], [-10.0, 0.0], [0.0, 15.0]])
        points = np.concatenate([
            c + rng.normal(0, 0.3, (30, 2)) for c in centers])
        _, labels, _ = kmeans(points, 3, seed=1)
        for blob in range(3):
            chunk = labels[blob * 30 : (blob + 1) * 30]
            assert len(set(chunk.tolist())) == 1
        assert len(set(labels.tolist())) == 3

    def test_k1_centroid_is_mean(self, rng):
        points = rng.normal(size=(50, 4))
        centroids, _, _ = kmeans(points, 1, seed=0)
        np.testing.assert_allclose(centroids[0], points.mean(axis=0), atol=1e-12)

    def test_inertia_non_increasing(self, rng):
        points = rng.normal(size=(200, 6))
        _, _, inertia = kmeans(points, 12, seed=3)
        assert all(b <= a + 1e-9 for a, b in zip(inertia, inertia[1:]))

    def test_reproducible(self, rng):
        points = rng.normal(size=(100, 5))
        a = kmeans(points, 7, seed=42)
        b = kmeans(points, 7, seed=42)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_too_few_points(self, rng):
        with pytest.raises(ValueError):
            kmeans(rng.normal(size=(3, 2)), 5)


class TestAssign:
    def test_self_consistency_and_oracle(self, rng):
        words = [smooth_word(rng, n_frames=int(rng.integers(8, 18))) for _ in range(40)]
        table, labels = build_motif_table(words, k=5, seed=0, dim=8)
        for i in range(5):
            assert assign_motif(table.motif_words[i], table) == i
        # brute-force scan oracle on random words
        for w in words[:10]:
            v = embed_word(w, table.basis)
            dists = [float(np.sum((c - v) ** 2)) for c in table.centroids]
            assert assign_vector(v, table.centroids) == int(np.argmin(dists))

    def test_tie_breaks_to_lowest_id(self):
        centroids = np.array([[1.0, 0.0], [-1.0, 0.0]])
        assert assign_vector(np.array([0.0, 0.5]), centroids) == 0


class TestSignature:
    def test_basic_histogram(self):
        np.testing.assert_allclose(compute_signature([0, 0, 1], 2), [2 / 3, 1 / 3])

    def test_order_invariance(self, rng):
        stream = rng.integers(0, 6, 50)
        a = compute_signature(stream, 6)
        b = compute_signature(rng.permutation(stream), 6)
        np.testing.assert_allclose(a, b, atol=0)

    def test_concatenation_mixture(self, rng):
        s1 = rng.integers(0, 4, 30).tolist()
        s2 = rng.integers(0, 4, 70).tolist()
        combined = compute_signature(s1 + s2, 4)
        mix = 0.3 * compute_signature(s1, 4) + 0.7 * compute_signature(s2, 4)
        np.testing.assert_allclose(combined, mix, atol=1e-12)

    def test_empty_is_zero(self):
        np.testing.assert_array_equal(compute_signature([], 3), np.zeros(3))

    def test_template_average(self, rng):
        streams = [rng.integers(0, 5, 40).tolist() for _ in range(3)]
        t = template_signature(streams, 5)
        assert t.sum() == pytest.approx(1.0, abs=1e-9)
        same = template_signature([streams[0]] * 4, 5)
        np.testing.assert_allclose(same, compute_signature(streams[0], 5), atol=1e-12)


class TestChiSquare:
    def test_identical_zero(self, rng):
        s = compute_signature(rng.integers(0, 5, 40), 5)
        assert chi_square(s, s) == 0.0

    def test_disjoint_unit(self):
        assert chi_square([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0, abs=1e-12)

    def test_hand_value(self):
        assert chi_square([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.0666667, abs=1e-6)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            chi_square([-0.1, 1.1], [0.5, 0.5])

    def test_matches_direct_formula(self, rng):
        for _ in range(100):
            a = rng.dirichlet(np.ones(8))
            b = rng.dirichlet(np.ones(8))
            direct = 0.5 * sum(
                (a[i] - b[i]) ** 2 / (a[i] + b[i]) for i in range(8) if a[i] + b[i] > 0)
            assert chi_square(a, b) == pytest.approx(direct, abs=1e-12)

    @given(st.integers(2, 10), st.integers(0, 10 ** 6))
    @settings(max_examples=60, deadline=None)
    def test_bounded_and_symmetric(self, k, seed):
        rng = np.random.default_rng(seed)
        a = rng.dirichlet(np.ones(k))
        b = rng.dirichlet(np.ones(k))
        d = chi_square(a, b)
        assert 0.0 <= d <= 1.0 + 1e-12
        assert d == pytest.approx(chi_square(b, a), abs=1e-15)


class TestTransitions:
    def test_hand_counts(self):
        t = build_transition_matrix([[0, 1, 0, 1]], 2)
        np.testing.assert_allclose(t[0], [0.0, 1.0])
        np.testing.assert_allclose(t[1], [1.0, 0.0])

    def test_single_element_stream(self):
        t = build_transition_matrix([[1]], 3)
        np.testing.assert_array_equal(t, np.zeros((3, 3)))

    def test_rows_normalized_for_visited(self, rng):
        streams = [rng.integers(0, 6, 80).tolist() for _ in range(3)]
        t = build_transition_matrix(streams, 6)
        sums = t.sum(axis=1)
        for s in sums:
            assert s == pytest.approx(1.0, abs=1e-9) or s == 0.0

    def test_no_cross_stream_pairs(self):
        t_joint = build_transition_matrix([[0, 1], [1, 0]], 2)
        # streams [0,1] and [1,0] contribute 0->1 and 1->0 only
        np.testing.assert_allclose(t_joint, [[0, 1], [1, 0]])
