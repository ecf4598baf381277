"""Deterministic pose-level synthesis: word selection, stitching, style, cleanup.

The graph backend realizes a motif sequence by picking, per beat, the cluster
member whose first three poses best continue the previous word's last three,
time-scaling it to the beat gap, optionally applying a windowed per-channel
style transform driven by spectral features, and blending the junction.
Post-processing removes foot sliding with analytic two-bone leg IK and can
smooth the root orientation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quat
from .audio import BeatGrid
from .choreography import MotifConstraint, run_choreography
from .core import (MotionClip, Skeleton, forward_kinematics, global_rotations,
                   pose_distance)
from .motifs import MotifTable, MotionWord, timescale_word
from .motionio import detect_foot_contacts

DEFAULT_BETA = 40.0
DEFAULT_BLEND_FRAMES = 3
JUNCTION_POSES = 3


@dataclass
class StyleParams:
    """Per-channel scale/translation over the 4*J rotation components."""

    scale: np.ndarray  # (4J,)
    translation: np.ndarray  # (4J,)
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        self.scale = np.asarray(self.scale, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float)
        if self.scale.shape != self.translation.shape or self.scale.ndim != 1:
            raise ValueError("scale/translation must be matching 1-D vectors")
        if not (np.isfinite(self.scale).all() and np.isfinite(self.translation).all()):
            raise ValueError("style parameters must be finite")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


class StyleMapper:
    """Seeded fixed MLP from spectral features to normalized style parameters.

    Stands in for a trained mapper in the graph backend: one tanh hidden layer
    with weights drawn from the given seed, output standardized to zero mean
    and unit variance across the vector, split into scale and translation.
    """

    def __init__(self, num_channels: int, spectral_dim: int = 87,
                 hidden: int = 64, seed: int = 0):
        rng = np.random.default_rng(seed)
        out_dim = 2 * num_channels
        self.num_channels = num_channels
        self.w1 = rng.normal(0.0, 1.0 / np.sqrt(spectral_dim), (hidden, spectral_dim))
        self.b1 = rng.normal(0.0, 0.1, hidden)
        self.w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), (out_dim, hidden))
        self.b2 = rng.normal(0.0, 0.1, out_dim)

    def __call__(self, spectral: np.ndarray, beta: float = DEFAULT_BETA) -> StyleParams:
        return style_params_from_spectral(spectral, self, beta)


def style_params_from_spectral(spectral: np.ndarray, mapper: StyleMapper,
                               beta: float = DEFAULT_BETA) -> StyleParams:
    """Map one spectral row through the mapper; output is standardized."""
    a = np.asarray(spectral, dtype=float)
    if a.shape != (mapper.w1.shape[1],):
        raise ValueError(f"spectral vector must have length {mapper.w1.shape[1]}")
    y = mapper.w2 @ np.tanh(mapper.w1 @ a + mapper.b1) + mapper.b2
    std = y.std()
    y = (y - y.mean()) / std if std > 1e-12 else np.zeros_like(y)
    half = mapper.num_channels
    return StyleParams(y[:half], y[half:], beta)


def style_window(n: int) -> np.ndarray:
    """Raised-cosine weights: zero at both end frames, one at the center."""
    if n < 3:
        raise ValueError("style window needs at least 3 frames")
    t = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * t / (n - 1)))


def apply_style(word: MotionWord, params: StyleParams) -> MotionWord:
    """Windowed affine transform over rotation channels, renormalized per joint.

    Channel c of frame t becomes (1 + beta*g(t)*scale_c)*x + beta*g(t)*trans_c
    with g the raised-cosine window, after which each quaternion is rescaled
    to unit length. End frames have g = 0 and are left bit-identical; beta = 0
    is a bit-identity. Root displacement and contacts are untouched.
    """
    n = word.num_frames
    if n < 3:
        raise ValueError("apply_style needs words of at least 3 frames")
    channels = 4 * word.num_joints
    if params.scale.shape != (channels,):
        raise ValueError(f"style parameters sized for {len(params.scale) // 4} joints, "
                         f"word has {word.num_joints}")
    out = word.copy()
    if params.beta == 0.0:
        return out
    gamma = style_window(n)
    flat = out.rotations.reshape(n, channels)
    for t in range(n):
        g = params.beta * gamma[t]
        if g == 0.0:
            continue
        row = (1.0 + g * params.scale) * flat[t] + g * params.translation
        q = row.reshape(-1, 4)
        norms = np.linalg.norm(q, axis=1, keepdims=True)
        if np.any(norms < 1e-9):
            raise ValueError("style transform collapsed a quaternion to zero norm")
        flat[t] = (q / norms).reshape(-1)
    return out


def select_word(members: list[MotionWord], prev_word: MotionWord | None) -> MotionWord:
    """Pick the member whose head best continues prev_word's tail.

    Cost is the summed pose distance between the previous word's last three
    poses and the candidate's first three, matched in order; ties keep the
    earliest member. With no previous word the first member is returned.
    """
    if not members:
        raise ValueError("empty cluster: no candidate words")
    if prev_word is None:
        return members[0]
    tail = prev_word.rotations[-JUNCTION_POSES:]
    best, best_cost = None, np.inf
    for cand in members:
        m = min(len(tail), cand.num_frames, JUNCTION_POSES)
        cost = sum(pose_distance(tail[len(tail) - m + i], cand.rotations[i])
                   for i in range(m))
        if cost < best_cost - 1e-15:
            best, best_cost = cand, cost
    return best


def stitch(prev_word: MotionWord | None, next_word: MotionWord,
           blend_frames: int = DEFAULT_BLEND_FRAMES,
           target_len: int | None = None) -> MotionWord:
    """Time-scale next_word (when target_len is given) and blend its head.

    The first blend_frames rotations are spherically interpolated from the
    previous word's final pose with weights ramping 1 -> 0, so the junction
    pose matches exactly and the seam relaxes into the new word. Root
    displacements are relative, so continuity needs no adjustment.
    blend_frames = 0 is pure concatenation.
    """
    word = next_word if target_len is None else timescale_word(next_word, target_len)
    word = word.copy()
    if prev_word is None or blend_frames <= 0:
        return word
    anchor = prev_word.rotations[-1]
    bf = min(blend_frames, word.num_frames - 1)
    for i in range(bf):
        weight = (blend_frames - i) / blend_frames
        word.rotations[i] = quat.slerp(word.rotations[i], anchor, weight)
    return word


@dataclass
class SynthesisPlan:
    """Everything the graph backend needs to realize one clip."""

    grid: BeatGrid
    motif_ids: list[int] | None = None  # one per beat interval; None = sample
    target_signature: np.ndarray | None = None
    constraints: list[MotifConstraint] = field(default_factory=list)
    seed: int = 0
    mode: str = "deficit"
    style: str = "none"  # "none" | "grid" | "preset:<name>"
    beta: float = DEFAULT_BETA
    blend_frames: int = DEFAULT_BLEND_FRAMES


@dataclass
class SynthesisResult:
    clip: MotionClip
    contacts: np.ndarray
    motif_ids: list[int]
    timeline: list[dict]  # {"beat", "motif", "start_frame", "end_frame"}
    signature_trace: list[float]
    flags: list[dict]


STYLE_PRESETS = {"subtle": (11, 10.0), "strong": (12, DEFAULT_BETA)}  # seed, beta


def _style_for_interval(plan: SynthesisPlan, mapper: StyleMapper | None,
                        k: int, grid: BeatGrid) -> StyleParams | None:
    if plan.style == "none" or mapper is None:
        return None
    if plan.style == "grid":
        return style_params_from_spectral(grid.spectral[k], mapper, plan.beta)
    if plan.style.startswith("preset:"):
        name = plan.style.split(":", 1)[1]
        if name not in STYLE_PRESETS:
            raise ValueError(f"unknown style preset {name!r}")
        _, beta = STYLE_PRESETS[name]
        # presets reuse one fixed spectral pattern so every word styles alike
        pattern = np.sin(np.linspace(0.0, 3.0 * np.pi, grid.spectral.shape[1] or 87))
        return style_params_from_spectral(pattern, mapper, beta)
    raise ValueError(f"unknown style source {plan.style!r}")


def synthesize_graph(plan: SynthesisPlan, table: MotifTable,
                     members_by_cluster: dict[int, list[MotionWord]],
                     skeleton: Skeleton) -> SynthesisResult:
    """Realize a beat grid as motion by graph stitching over cluster members.

    Per beat interval: choose the motif (from the plan or by signature-guided
    sampling), select the best-continuing member word, time-scale it to the
    beat gap, apply style when configured, and stitch. Contact labels are
    carried from the source words and re-detected when the skeleton names
    foot joints. Deterministic for fixed inputs.
    """
    grid = plan.grid
    n_intervals = grid.num_intervals
    if n_intervals < 1:
        raise ValueError("beat grid needs at least 2 beats")

    if plan.motif_ids is not None:
        motif_ids = [int(m) for m in plan.motif_ids]
        if len(motif_ids) != n_intervals:
            raise ValueError(f"plan has {len(motif_ids)} motifs for {n_intervals} intervals")
        if plan.target_signature is not None:
            from .choreography import convergence_trace
            trace = convergence_trace(motif_ids, plan.target_signature)
        else:
            trace = []
    else:
        if plan.target_signature is None:
            raise ValueError("plan needs motif_ids or a target signature")
        motif_ids, trace = run_choreography(
            table.transition, plan.target_signature, n_intervals,
            seed=plan.seed, constraints=plan.constraints, mode=plan.mode)
    for m in motif_ids:
        if not 0 <= m < table.num_clusters:
            raise ValueError(f"motif id {m} out of range")

    mapper = None
    if plan.style != "none":
        seed = plan.seed
        if plan.style.startswith("preset:"):
            name = plan.style.split(":", 1)[1]
            if name not in STYLE_PRESETS:
                raise ValueError(f"unknown style preset {name!r}")
            seed = STYLE_PRESETS[name][0]
        mapper = StyleMapper(4 * skeleton.num_joints, spectral_dim=87, seed=seed)

    gaps = grid.interval_lengths()
    words: list[MotionWord] = []
    timeline: list[dict] = []
    prev: MotionWord | None = None
    for k in range(n_intervals):
        motif = motif_ids[k]
        if prev is None:
            chosen = table.motif_words[motif]
        else:
            members = members_by_cluster.get(motif, [])
            if not members:
                raise ValueError(f"cluster {motif} has no member words")
            chosen = select_word(members, prev)
        scaled = timescale_word(chosen, max(int(gaps[k]), 2))
        style = _style_for_interval(plan, mapper, k, grid)
        if style is not None:
            scaled = apply_style(scaled, style)
        stitched = stitch(prev, scaled, plan.blend_frames)
        words.append(stitched)
        start = int(grid.beat_frames[k])
        timeline.append({"beat": k, "motif": int(motif),
                         "start_frame": start, "end_frame": start + int(gaps[k])})
        prev = stitched

    root = np.concatenate([w.root_disp for w in words])
    rots = np.concatenate([w.rotations for w in words])
    contacts = np.concatenate([w.contacts for w in words])
    clip = MotionClip(skeleton, root, rots, grid.fps)
    try:
        contacts = detect_foot_contacts(clip)
    except ValueError:
        pass  # no named foot joints: keep the carried labels
    return SynthesisResult(clip, contacts, motif_ids, timeline, trace, [])


@dataclass(frozen=True)
class LegChain:
    hip: int
    knee: int
    ankle: int


def resolve_leg_chains(skeleton: Skeleton) -> dict[str, LegChain]:
    """Hip-knee-ankle node indices per side, walking up from the foot joints."""
    from .motionio import guess_foot_joints

    if skeleton.left_foot and skeleton.right_foot:
        feet = {"left": skeleton.left_foot, "right": skeleton.right_foot}
    else:
        left, right = guess_foot_joints(skeleton)
        feet = {"left": left, "right": right}
    chains = {}
    for side, name in feet.items():
        node = skeleton.index_of(name)
        if "toe" in name.lower():
            node = skeleton.joints[node].parent
        ankle = node
        knee = skeleton.joints[ankle].parent
        hip = skeleton.joints[knee].parent if knee >= 0 else -1
        if knee <= 0 or hip < 0:
            raise ValueError(f"cannot resolve a two-bone leg chain for {name!r}")
        chains[side] = LegChain(hip, knee, ankle)
    return chains


def _contact_spans(labels: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) spans of consecutive 1s."""
    spans = []
    start = None
    for t, v in enumerate(labels):
        if v and start is None:
            start = t
        elif not v and start is not None:
            spans.append((start, t - 1))
            start = None
    if start is not None:
        spans.append((start, len(labels) - 1))
    return spans


def _orthogonal(v: np.ndarray) -> np.ndarray:
    ref = np.array([0.0, 0.0, 1.0]) if abs(v[2]) < 0.9 * np.linalg.norm(v) else np.array([1.0, 0.0, 0.0])
    out = np.cross(v, ref)
    return out / np.linalg.norm(out)


def _shortest_arc(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Unit quaternion rotating direction u onto direction v."""
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    d = float(np.dot(u, v))
    if d > 1.0 - 1e-12:
        return quat.IDENTITY.copy()
    if d < -1.0 + 1e-12:
        return quat.from_axis_angle(_orthogonal(u), np.pi)
    axis = np.cross(u, v)
    axis = axis / np.linalg.norm(axis)
    return quat.from_axis_angle(axis, float(np.arccos(np.clip(d, -1.0, 1.0))))


def _solve_two_bone(rotations: np.ndarray, skeleton: Skeleton, chain: LegChain,
                    root_pos: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Local rotation deltas (hip, knee) placing the chain end at target.

    Knee bend stays in the original knee plane; unreachable targets clamp to
    the reachable sphere and are flagged. Deltas are local-frame quaternions
    to premultiply onto the existing local rotations.
    """
    positions = forward_kinematics(rotations, skeleton, root_pos)
    globals_q = global_rotations(rotations, skeleton)
    a, b, c = positions[chain.hip], positions[chain.knee], positions[chain.ankle]
    l1 = np.linalg.norm(b - a)
    l2 = np.linalg.norm(c - b)
    tol = 1e-9 * (l1 + l2)

    t_vec = target - a
    dist = np.linalg.norm(t_vec)
    lo, hi = abs(l1 - l2), l1 + l2
    clamped = False
    if dist < lo - tol or dist > hi + tol:
        clamped = True
    if dist < lo or dist > hi:
        dist = float(np.clip(dist, lo, hi))
        if np.linalg.norm(t_vec) < 1e-12:
            t_vec = c - a  # degenerate target on the hip: keep direction
        target = a + t_vec / np.linalg.norm(t_vec) * dist

    u = a - b  # thigh, seen from the knee
    v = c - b  # shin
    cos_cur = np.dot(u, v) / (l1 * l2)
    phi_cur = float(np.arccos(np.clip(cos_cur, -1.0, 1.0)))
    cos_new = (l1 * l1 + l2 * l2 - dist * dist) / (2.0 * l1 * l2)
    phi_new = float(np.arccos(np.clip(cos_new, -1.0, 1.0)))
    bend_axis = np.cross(v, u)
    if np.linalg.norm(bend_axis) < 1e-9 * l1 * l2:
        bend_axis = _orthogonal(u)
    else:
        bend_axis = bend_axis / np.linalg.norm(bend_axis)
    # rotating the shin about normalize(v x u) by +delta closes the knee by delta
    knee_delta_global = quat.from_axis_angle(bend_axis, phi_cur - phi_new)

    c1 = b + quat.rotate(knee_delta_global, c - b)
    hip_delta_global = _shortest_arc(c1 - a, target - a)

    hip_parent = skeleton.joints[chain.hip].parent
    parent_g = globals_q[hip_parent] if hip_parent >= 0 else quat.IDENTITY
    knee_parent_g = globals_q[chain.hip]

    hip_local_delta = quat.mul(quat.conjugate(parent_g), quat.mul(hip_delta_global, parent_g))
    knee_local_delta = quat.mul(quat.conjugate(knee_parent_g),
                                quat.mul(knee_delta_global, knee_parent_g))
    return quat.normalize(hip_local_delta), quat.normalize(knee_local_delta), clamped


def clean_foot_sliding(clip: MotionClip, contacts: np.ndarray,
                       blend: int = 3) -> tuple[MotionClip, list[dict]]:
    """Pin each foot to its position at contact-span start via two-bone leg IK.

    Corrections apply fully inside each span and ramp out over `blend` frames
    on both sides using the boundary frame's correction. Only hip and knee
    rotations change, so bone lengths are untouched. Returns the cleaned clip
    and flags for frames whose target was beyond leg reach.
    """
    contacts = np.asarray(contacts)
    if contacts.shape != (clip.num_frames, 2):
        raise ValueError("contacts must be (frames, 2)")
    chains = resolve_leg_chains(clip.skeleton)
    rot_slot = {node: slot for slot, node in enumerate(clip.skeleton.rot_indices)}
    roots = clip.root_positions()
    out = clip.copy()
    flags: list[dict] = []

    for col, side in ((0, "left"), (1, "right")):
        chain = chains[side]
        hip_slot, knee_slot = rot_slot[chain.hip], rot_slot[chain.knee]
        for start, end in _contact_spans(contacts[:, col]):
            target = forward_kinematics(clip.rotations[start], clip.skeleton,
                                        roots[start])[chain.ankle]
            deltas = {}
            for t in range(start, end + 1):
                hip_d, knee_d, clamped = _solve_two_bone(
                    clip.rotations[t], clip.skeleton, chain, roots[t], target)
                deltas[t] = (hip_d, knee_d)
                # local deltas premultiply: L' = (P^-1 D P) L
                out.rotations[t, hip_slot] = quat.normalize(
                    quat.mul(hip_d, clip.rotations[t, hip_slot]))
                out.rotations[t, knee_slot] = quat.normalize(
                    quat.mul(knee_d, clip.rotations[t, knee_slot]))
                if clamped:
                    flags.append({"frame": t, "side": side, "reason": "target beyond reach"})
            if blend <= 0:
                continue
            for boundary, direction in ((start, -1), (end, +1)):
                hip_d, knee_d = deltas[boundary]
                for step in range(1, blend + 1):
                    t = boundary + direction * step
                    if not 0 <= t < clip.num_frames or contacts[t, col]:
                        continue
                    w = (blend + 1 - step) / (blend + 1)
                    for slot, d in ((hip_slot, hip_d), (knee_slot, knee_d)):
                        corrected = quat.mul(d, clip.rotations[t, slot])
                        out.rotations[t, slot] = quat.slerp(
                            clip.rotations[t, slot], corrected, w)
    return out, flags


def smooth_root_orientation(clip: MotionClip, window: int = 5) -> MotionClip:
    """Windowed spherical averaging of the root quaternion track only.

    Each frame's root rotation becomes the normalized hemisphere-aligned mean
    of its neighborhood; window = 1 is the identity.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd number")
    out = clip.copy()
    if window == 1 or clip.num_frames == 0:
        return out
    root_slot = {node: slot for slot, node in enumerate(clip.skeleton.rot_indices)}[0]
    track = clip.rotations[:, root_slot]
    half = window // 2
    for t in range(clip.num_frames):
        lo, hi = max(0, t - half), min(clip.num_frames, t + half + 1)
        neigh = track[lo:hi].copy()
        dots = neigh @ track[t]
        neigh[dots < 0] = -neigh[dots < 0]
        mean = neigh.mean(axis=0)
        n = np.linalg.norm(mean)
        if n > 1e-9:
            out.rotations[t, root_slot] = mean / n
    return out
