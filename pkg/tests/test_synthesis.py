"""Graph-backend synthesis: selection, stitching, style, IK cleanup."""

import numpy as np
import pytest

from choreokit import quat
from choreokit.audio import synth_beat_grid
from choreokit.core import (MotionClip, clip_positions, forward_kinematics,
                            pose_distance)
from choreokit.motifs import MotionWord, build_motif_table, timescale_word
from choreokit.synthesis import (StyleMapper, StyleParams, SynthesisPlan,
                                 apply_style, clean_foot_sliding, select_word,
                                 smooth_root_orientation, stitch, style_window,
                                 style_params_from_spectral, synthesize_graph)

from conftest import chain_skeleton, identity_clip, legged_skeleton, random_unit_quats


def bump_word(joint, amplitude, n_frames=13, n_joints=3, axis=(0, 0, 1.0)):
    """Word that swings one joint away from identity and back (sin^2 profile)."""
    rot = np.zeros((n_frames, n_joints, 4))
    rot[..., 0] = 1.0
    t = np.arange(n_frames) / (n_frames - 1)
    angles = amplitude * np.sin(np.pi * t) ** 2
    for f in range(n_frames):
        rot[f, joint] = quat.from_axis_angle(axis, float(angles[f]))
    return MotionWord(np.zeros((n_frames, 3)), rot,
                      np.zeros((n_frames, 2), dtype=int), (0, n_frames))


def bump_corpus(rng, n_clusters=3, per_cluster=6):
    words = []
    for c in range(n_clusters):
        for i in range(per_cluster):
            n = int(rng.integers(10, 16))
            words.append(bump_word(c, 0.5 + 0.08 * i, n_frames=n))
    return words


class TestSelectWord:
    def test_continuation_wins(self, rng):
        frames = random_unit_quats(rng, (30, 3))
        prev = MotionWord(np.zeros((15, 3)), frames[:15],
                          np.zeros((15, 2), dtype=int), (0, 15))
        continuation = MotionWord(np.zeros((15, 3)), frames[12:27],
                                  np.zeros((15, 2), dtype=int), (15, 30))
        others = [MotionWord(np.zeros((10, 3)), random_unit_quats(rng, (10, 3)),
                             np.zeros((10, 2), dtype=int), (0, 10)) for _ in range(4)]
        chosen = select_word(others + [continuation], prev)
        assert chosen is continuation

    def test_single_member(self, rng):
        w = bump_word(0, 0.4)
        assert select_word([w], bump_word(1, 0.2)) is w

    def test_matches_exhaustive_scan(self, rng):
        prev = MotionWord(np.zeros((8, 3)), random_unit_quats(rng, (8, 3)),
                          np.zeros((8, 2), dtype=int), (0, 8))
        members = [MotionWord(np.zeros((9, 3)), random_unit_quats(rng, (9, 3)),
                              np.zeros((9, 2), dtype=int), (0, 9)) for _ in range(12)]
        costs = []
        for m in members:
            costs.append(sum(pose_distance(prev.rotations[-3 + i], m.rotations[i])
                             for i in range(3)))
        assert select_word(members, prev) is members[int(np.argmin(costs))]

    def test_empty_cluster(self, rng):
        with pytest.raises(ValueError, match="empty cluster"):
            select_word([], bump_word(0, 0.1))


class TestStitch:
    def test_self_stitch_keeps_interior(self, rng):
        w = bump_word(1, 0.8, n_frames=13)
        out = stitch(w, w, blend_frames=3)
        np.testing.assert_array_equal(out.rotations[3:], w.rotations[3:])

    def test_junction_distance_not_increased(self, rng):
        for _ in range(10):
            a = MotionWord(np.zeros((10, 3)), random_unit_quats(rng, (10, 3)),
                           np.zeros((10, 2), dtype=int), (0, 10))
            b = MotionWord(np.zeros((10, 3)), random_unit_quats(rng, (10, 3)),
                           np.zeros((10, 2), dtype=int), (0, 10))
            before = pose_distance(a.rotations[-1], b.rotations[0])
            out = stitch(a, b, blend_frames=3)
            after = pose_distance(a.rotations[-1], out.rotations[0])
            assert after <= before + 1e-12

    def test_zero_blend_is_concatenation(self, rng):
        a = bump_word(0, 0.3)
        b = bump_word(2, 0.6)
        out = stitch(a, b, blend_frames=0)
        np.testing.assert_array_equal(out.rotations, b.rotations)

    def test_timescales_to_target(self, rng):
        a = bump_word(0, 0.3)
        b = bump_word(1, 0.5, n_frames=9)
        out = stitch(a, b, blend_frames=3, target_len=15)
        assert out.num_frames == 15


class TestStyleMapper:
    def test_deterministic_and_shape(self):
        mapper = StyleMapper(num_channels=124, seed=4)
        a = np.linspace(-1, 1, 87)
        p1 = style_params_from_spectral(a, mapper)
        p2 = style_params_from_spectral(a, mapper)
        np.testing.assert_array_equal(p1.scale, p2.scale)
        assert len(p1.scale) == 124 and len(p1.translation) == 124
        combined = np.concatenate([p1.scale, p1.translation])
        assert combined.mean() == pytest.approx(0.0, abs=1e-12)
        assert combined.std() == pytest.approx(1.0, abs=1e-9)

    def test_distinct_inputs_distinct_params(self, rng):
        mapper = StyleMapper(num_channels=12, seed=0)
        a = rng.standard_normal(87)
        b = rng.standard_normal(87)
        pa = style_params_from_spectral(a, mapper)
        pb = style_params_from_spectral(b, mapper)
        assert not np.allclose(pa.scale, pb.scale)


class TestApplyStyle:
    def test_beta_zero_bit_identity(self, rng):
        w = bump_word(1, 0.7)
        params = StyleParams(rng.normal(size=12), rng.normal(size=12), beta=0.0)
        out = apply_style(w, params)
        assert np.array_equal(out.rotations, w.rotations)

    def test_endpoints_bit_identical(self, rng):
        for _ in range(10):
            n = int(rng.integers(3, 20))
            w = MotionWord(np.zeros((n, 3)), random_unit_quats(rng, (n, 3)),
                           np.zeros((n, 2), dtype=int), (0, n))
            params = StyleParams(rng.normal(size=12), rng.normal(size=12), beta=40.0)
            out = apply_style(w, params)
            assert np.array_equal(out.rotations[0], w.rotations[0])
            assert np.array_equal(out.rotations[-1], w.rotations[-1])
            np.testing.assert_allclose(np.linalg.norm(out.rotations, axis=-1), 1.0,
                                       atol=1e-9)

    def test_worked_example(self):
        # center frame, identity quaternion, translation 0.005 on the x channel
        n = 13
        rot = np.zeros((n, 1, 4))
        rot[:, 0, 0] = 1.0
        w = MotionWord(np.zeros((n, 3)), rot, np.zeros((n, 2), dtype=int), (0, n))
        translation = np.array([0.0, 0.005, 0.0, 0.0])
        params = StyleParams(np.zeros(4), translation, beta=40.0)
        out = apply_style(w, params)
        center = out.rotations[6, 0]  # gamma = 1 exactly at the center frame
        np.testing.assert_allclose(center, [0.98058, 0.19612, 0.0, 0.0], atol=5e-6)

    def test_window_shape(self):
        g = style_window(13)
        assert g[0] == 0.0 and g[-1] == 0.0
        assert g[6] == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_parameters_rejected(self):
        w = bump_word(0, 0.0, n_frames=5, n_joints=1)
        # scale -1/beta at gamma=1 zeroes the w channel; translation stays 0
        params = StyleParams(np.array([-1.0 / 40.0] * 4), np.zeros(4), beta=40.0)
        with pytest.raises(ValueError, match="zero norm"):
            apply_style(w, params)


class TestSynthesizeGraph:
    def make_setup(self, rng, n_clusters=3):
        words = bump_corpus(rng, n_clusters=n_clusters)
        table, labels = build_motif_table(words, k=n_clusters, seed=0, dim=6)
        members = {}
        for w, c in zip(words, labels):
            members.setdefault(int(c), []).append(w)
        skeleton = chain_skeleton(3)
        return table, members, skeleton

    def test_pinned_single_motif(self, rng):
        table, members, skeleton = self.make_setup(rng)
        grid = synth_beat_grid(140, 30, 140, seed=1)
        plan = SynthesisPlan(grid, motif_ids=[1] * grid.num_intervals, seed=3)
        result = synthesize_graph(plan, table, members, skeleton)
        assert all(seg["motif"] == 1 for seg in result.timeline)
        assert result.clip.num_frames == grid.beat_frames[-1] - grid.beat_frames[0]

    def test_deterministic(self, rng):
        table, members, skeleton = self.make_setup(rng)
        grid = synth_beat_grid(120, 30, 150, seed=2)
        target = np.full(3, 1 / 3)
        plan = SynthesisPlan(grid, target_signature=target, seed=9, style="grid")
        r1 = synthesize_graph(plan, table, members, skeleton)
        r2 = synthesize_graph(plan, table, members, skeleton)
        np.testing.assert_array_equal(r1.clip.rotations, r2.clip.rotations)
        np.testing.assert_array_equal(r1.clip.root_disp, r2.clip.root_disp)
        assert r1.motif_ids == r2.motif_ids

    def test_constraints_respected(self, rng):
        from choreokit.choreography import MotifConstraint
        table, members, skeleton = self.make_setup(rng)
        grid = synth_beat_grid(120, 30, 150, seed=2)
        pins = [MotifConstraint(0, 2), MotifConstraint(3, 0)]
        plan = SynthesisPlan(grid, target_signature=np.full(3, 1 / 3),
                             constraints=pins, seed=1)
        result = synthesize_graph(plan, table, members, skeleton)
        assert result.motif_ids[0] == 2
        assert result.motif_ids[3] == 0

    def test_frame_count_matches_beat_span(self, rng):
        table, members, skeleton = self.make_setup(rng)
        for bpm in (100, 140, 200):
            grid = synth_beat_grid(bpm, 30, 180, seed=4)
            plan = SynthesisPlan(grid, target_signature=np.full(3, 1 / 3), seed=0)
            result = synthesize_graph(plan, table, members, skeleton)
            assert result.clip.num_frames == grid.beat_frames[-1] - grid.beat_frames[0]


def standing_clip_with_slide(n_frames=24, root_y=7.8, slide_per_frame=0.1,
                             knee_bend=0.35):
    """Bent-knee stance (so the legs have IK slack) whose root drifts in +x."""
    sk = legged_skeleton()
    clip = identity_clip(sk, n_frames)
    thigh = quat.from_axis_angle([1, 0, 0], knee_bend)
    shin = quat.from_axis_angle([1, 0, 0], -2 * knee_bend)
    for thigh_slot, shin_slot in ((2, 3), (5, 6)):  # left, right leg slots
        clip.rotations[:, thigh_slot] = thigh
        clip.rotations[:, shin_slot] = shin
    clip.root_disp[0] = [0.0, root_y, 0.0]
    clip.root_disp[1:, 0] = slide_per_frame  # foot slides with the root
    return clip


class TestFootCleanup:
    def test_already_clean_untouched(self):
        sk = legged_skeleton()
        clip = identity_clip(sk, 16)
        clip.root_disp[0] = [0.0, 7.5, 0.0]
        contacts = np.ones((16, 2), dtype=int)
        cleaned, flags = clean_foot_sliding(clip, contacts)
        np.testing.assert_allclose(cleaned.rotations, clip.rotations, atol=1e-6)
        assert flags == []

    def test_sliding_foot_pinned(self):
        clip = standing_clip_with_slide()
        contacts = np.ones((clip.num_frames, 2), dtype=int)
        cleaned, flags = clean_foot_sliding(clip, contacts)
        sk = clip.skeleton
        roots = cleaned.root_positions()
        for col, foot in ((0, "LeftFoot"), (1, "RightFoot")):
            node = sk.index_of(foot)
            target = forward_kinematics(clip.rotations[0], sk, roots[0])[node]
            for t in range(clip.num_frames):
                pos = forward_kinematics(cleaned.rotations[t], sk, roots[t])[node]
                assert np.linalg.norm(pos - target) < 0.1
        assert flags == []

    def test_bone_lengths_unchanged(self):
        clip = standing_clip_with_slide()
        contacts = np.ones((clip.num_frames, 2), dtype=int)
        cleaned, _ = clean_foot_sliding(clip, contacts)
        sk = clip.skeleton
        for t in range(clip.num_frames):
            pos = forward_kinematics(cleaned.rotations[t], sk, (0, 0, 0))
            for i in range(1, sk.num_nodes):
                p = sk.joints[i].parent
                expected = np.linalg.norm(np.asarray(sk.joints[i].offset))
                assert np.linalg.norm(pos[i] - pos[p]) == pytest.approx(
                    expected, abs=1e-9)

    def test_unreachable_target_flagged(self):
        clip = standing_clip_with_slide(root_y=7.9, slide_per_frame=0.4, knee_bend=0.0)
        contacts = np.ones((clip.num_frames, 2), dtype=int)
        cleaned, flags = clean_foot_sliding(clip, contacts)
        assert len(flags) > 0
        np.testing.assert_allclose(np.linalg.norm(cleaned.rotations, axis=-1), 1.0,
                                   atol=1e-9)

    def test_partial_span_blends_out(self):
        clip = standing_clip_with_slide(n_frames=30)
        contacts = np.zeros((30, 2), dtype=int)
        contacts[5:15] = 1
        cleaned, _ = clean_foot_sliding(clip, contacts, blend=3)
        # frames far outside the span are untouched
        np.testing.assert_array_equal(cleaned.rotations[0], clip.rotations[0])
        np.testing.assert_array_equal(cleaned.rotations[-1], clip.rotations[-1])
        # inside the span the foot is pinned
        sk = clip.skeleton
        roots = cleaned.root_positions()
        node = sk.index_of("LeftFoot")
        target = forward_kinematics(clip.rotations[5], sk, roots[5])[node]
        for t in range(5, 15):
            pos = forward_kinematics(cleaned.rotations[t], sk, roots[t])[node]
            assert np.linalg.norm(pos - target) < 0.1


class TestSmoothRoot:
    def test_constant_orientation_unchanged(self, rng):
        sk = chain_skeleton(3)
        clip = identity_clip(sk, 20)
        out = smooth_root_orientation(clip, 5)
        np.testing.assert_allclose(out.rotations, clip.rotations, atol=1e-12)

    def test_jitter_variance_reduced(self, rng):
        sk = chain_skeleton(2)
        n = 40
        rot = np.zeros((n, 2, 4))
        for t in range(n):
            jitter = 0.05 if t % 2 else -0.05
            rot[t, 0] = quat.from_axis_angle([0, 0, 1], jitter)
            rot[t, 1] = quat.IDENTITY
        clip = MotionClip(sk, np.zeros((n, 3)), rot, 30)
        out = smooth_root_orientation(clip, 5)
        var_before = np.var(clip.rotations[:, 0, 3])
        var_after = np.var(out.rotations[:, 0, 3])
        assert var_after < var_before
        # other joints untouched
        np.testing.assert_array_equal(out.rotations[:, 1], clip.rotations[:, 1])

    def test_window_one_is_identity(self, rng):
        sk = chain_skeleton(2)
        clip = identity_clip(sk, 10)
        clip.rotations[:] = random_unit_quats(rng, (10, 2))
        out = smooth_root_orientation(clip, 1)
        np.testing.assert_array_equal(out.rotations, clip.rotations)
