"""Training loop, gradient verification, and checkpoints.

Training follows the auto-conditioning recipe: inside each window the network
is fed gt_len frames of ground truth, then self_len frames of its own
predictions, repeating. Teacher-forced steps accumulate the coherence loss,
self-fed steps the auto-conditioned loss, and completed words inside the
window contribute the perceptual term. Optimization is Adam; everything is
deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import Joint, Skeleton
from ..motifs import EmbeddingBasis
from . import autodiff as ad
from .losses import frame_loss, perceptual_loss, total_loss
from .model import NetConfig, init_params, make_input, split_head, step_raw, zero_state

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainSequence:
    """One dance with aligned conditioning; motif vectors are constant within
    each word span."""

    rhythmic: np.ndarray  # (T, 4)
    motif_vectors: np.ndarray  # (T, d)
    poses: np.ndarray  # (T, 3 + 4J)
    contacts: np.ndarray  # (T, 2)
    word_spans: list  # [(start, end)] frame ranges, end exclusive
    word_targets: np.ndarray  # (n_words, d) target motif vectors

    @property
    def num_frames(self) -> int:
        return len(self.poses)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, params: dict):
        super().__init__(message)
        self.params = params  # last finite checkpoint


def _is_teacher_forced(step: int, config: NetConfig) -> bool:
    period = config.gt_len + config.self_len
    return (step % period) < config.gt_len if period > 0 else True


def run_window(params: dict, config: NetConfig, skeleton: Skeleton,
               seq: TrainSequence, start: int, length: int,
               basis: EmbeddingBasis | None = None):
    """Losses over one window: (coherence, autoconditioned, perceptual).

    Works with plain arrays (evaluation) or Tensor parameters (training).
    The recurrence runs step by step; the frame losses are evaluated once
    over the stacked predictions to keep the graph small. Perceptual terms
    cover word spans whose frames are all predicted inside the window; None
    when there are none or no basis is given.
    """
    end = min(start + length, seq.num_frames)
    steps = end - start - 1
    if steps < 1:
        raise ValueError("window too short")
    state = zero_state(config, batch=1)
    teacher_mask = np.zeros(steps, dtype=bool)
    poses, logits_list = [], []
    last_pose, last_contact = None, None
    for i in range(steps):
        t = start + i
        teacher = _is_teacher_forced(i, config) or last_pose is None
        teacher_mask[i] = teacher
        pose_in = seq.poses[t : t + 1] if teacher else last_pose
        contact_in = seq.contacts[t : t + 1].astype(float) if teacher else last_contact
        x = make_input(seq.rhythmic[t : t + 1], seq.motif_vectors[t : t + 1],
                       pose_in, contact_in)
        raw, state = step_raw(params, x, state, config)
        root, quat_flat, logits = split_head(raw, config)
        pred_pose = ad.concat([root, quat_flat], axis=1)
        poses.append(pred_pose)
        logits_list.append(logits)
        last_pose = pred_pose
        last_contact = ad.sigmoid(logits)

    pose_block = ad.concat(poses, axis=0)  # (steps, pose_dim)
    logit_block = ad.concat(logits_list, axis=0)
    if not np.all(np.isfinite(ad.value_of(pose_block))):
        raise FloatingPointError("non-finite prediction")
    gt_poses = seq.poses[start + 1 : end]
    gt_contacts = seq.contacts[start + 1 : end]

    coherence = frame_loss(pose_block[teacher_mask], logit_block[teacher_mask],
                           gt_poses[teacher_mask], gt_contacts[teacher_mask],
                           skeleton, config)
    if np.all(teacher_mask):
        autoconditioned = 0.0
    else:
        autoconditioned = frame_loss(
            pose_block[~teacher_mask], logit_block[~teacher_mask],
            gt_poses[~teacher_mask], gt_contacts[~teacher_mask], skeleton, config)

    perceptual = None
    if basis is not None and config.lambda_perceptual != 0.0:
        terms = []
        for (ws, we), target in zip(seq.word_spans, seq.word_targets):
            if ws < start + 1 or we > end or we - ws < 2:
                continue
            roots = [poses[t - start - 1][0, :3] for t in range(ws, we)]
            rots = [poses[t - start - 1][0, 3:].reshape(config.num_joints, 4)
                    for t in range(ws, we)]
            terms.append(perceptual_loss(roots, rots, target, basis))
        if terms:
            perceptual = _mean_terms(terms)
    return coherence, autoconditioned, perceptual


def _mean_terms(terms: list):
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total / float(len(terms))


def window_loss(params: dict, config: NetConfig, skeleton: Skeleton,
                seq: TrainSequence, start: int, length: int,
                basis: EmbeddingBasis | None = None):
    coh, ac, perc = run_window(params, config, skeleton, seq, start, length, basis)
    return total_loss(coh, ac, perc, config.lambda_perceptual)


class Adam:
    """Standard Adam over a dict of parameter arrays (beta1 0.9, beta2 0.999,
    eps 1e-8)."""

    def __init__(self, params: dict[str, np.ndarray], learning_rate: float):
        self.lr = learning_rate
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - ADAM_BETA1 ** self.t
        b2c = 1.0 - ADAM_BETA2 ** self.t
        for k, g in grads.items():
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * g
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * g * g
            params[k] -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + ADAM_EPS)


def train(sequences: list[TrainSequence], config: NetConfig, skeleton: Skeleton,
          seed: int = 0, iterations: int = 500,
          basis: EmbeddingBasis | None = None,
          initial_params: dict | None = None,
          decay_every: int = 0, decay_factor: float = 0.5) -> tuple[dict, list[float]]:
    """Adam training over random windows; returns (weights, loss curve).

    Each iteration averages window losses over config.batch_size sampled
    windows; decay_every > 0 multiplies the learning rate by decay_factor at
    that cadence. Raises TrainingDiverged (carrying the last finite weights)
    if the loss stops being finite.
    """
    rng = np.random.default_rng(seed)
    params = ({k: v.copy() for k, v in initial_params.items()} if initial_params
              else init_params(config, seed))
    optimizer = Adam(params, config.learning_rate)
    curve: list[float] = []
    for it in range(iterations):
        if decay_every > 0 and it > 0 and it % decay_every == 0:
            optimizer.lr *= decay_factor
        last_good = {k: v.copy() for k, v in params.items()}
        tensors = {k: ad.Tensor(v, requires_grad=True) for k, v in params.items()}
        batch_losses = []
        for _ in range(config.batch_size):
            seq = sequences[int(rng.integers(len(sequences)))]
            max_start = max(seq.num_frames - config.window, 0)
            start = int(rng.integers(max_start + 1))
            try:
                batch_losses.append(window_loss(tensors, config, skeleton, seq,
                                                start, config.window, basis))
            except FloatingPointError as exc:
                raise TrainingDiverged(str(exc), last_good) from None
        loss = _mean_terms(batch_losses)
        value = float(ad.value_of(loss))
        if not np.isfinite(value):
            raise TrainingDiverged(f"loss diverged at iteration {it}", last_good)
        curve.append(value)
        loss.backward()
        grads = {k: t.grad if t.grad is not None else np.zeros_like(t.value)
                 for k, t in tensors.items()}
        optimizer.step(params, grads)
    return params, curve


def toy_skeleton(num_joints: int) -> Skeleton:
    """Minimal chain used by self-tests and the gradient checker."""
    joints = [Joint("j0", -1, (0.0, 0.0, 0.0))]
    for i in range(1, num_joints):
        joints.append(Joint(f"j{i}", i - 1, (1.0, 0.0, 0.0)))
    return Skeleton(tuple(joints))


def prediction_error(params: dict, config: NetConfig, seq: TrainSequence) -> float:
    """Per-joint mean geodesic error (radians) of teacher-forced next-frame
    prediction over the sequence.

    The error per joint is the quaternion-space geodesic distance
    ||log(q_pred^-1 q_true)||, i.e. half the rotation angle, matching the
    metric the losses are built on.
    """
    from .. import quat
    from .model import forward_step, make_input

    state = zero_state(config, 1)
    errors = []
    for t in range(seq.num_frames - 1):
        x = make_input(seq.rhythmic[t : t + 1], seq.motif_vectors[t : t + 1],
                       seq.poses[t : t + 1], seq.contacts[t : t + 1])
        pose, _, state = forward_step(params, x, state, config)
        pred_q = ad.value_of(pose)[0, 3:].reshape(-1, 4)
        true_q = seq.poses[t + 1, 3:].reshape(-1, 4)
        errors.append(np.sqrt(quat.log_distance_sq(pred_q, true_q)))
    return float(np.mean(errors))


def make_toy_sequence(config: NetConfig, n_frames: int, seed: int = 0,
                      beat_gap: int = 5, amplitude: float = 0.8) -> tuple[TrainSequence, EmbeddingBasis]:
    """Smooth synthetic dance plus a random orthonormal embedding basis."""
    from .. import quat

    rng = np.random.default_rng(seed)
    j = config.num_joints
    poses = np.zeros((n_frames, config.pose_dim))
    axes = rng.normal(size=(j, 3))
    axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
    freqs = rng.uniform(0.5, 1.5, j)
    phases = rng.uniform(0, 2 * np.pi, j)
    for t in range(n_frames):
        poses[t, :3] = [0.02 * np.sin(2 * np.pi * t / 40.0), 0.0, 0.02]
        for jj in range(j):
            angle = amplitude * np.sin(2 * np.pi * freqs[jj] * t / 50.0 + phases[jj])
            poses[t, 3 + 4 * jj : 7 + 4 * jj] = quat.from_axis_angle(axes[jj], angle)
    contacts = ((np.arange(n_frames) // beat_gap) % 2 == 0).astype(float)
    contacts = np.stack([contacts, 1.0 - contacts], axis=1)
    rhythmic = np.stack([
        np.cos(2 * np.pi * np.arange(n_frames) / beat_gap),
        np.sin(2 * np.pi * np.arange(n_frames) / beat_gap) ** 2,
        np.full(n_frames, 0.5),
        (np.arange(n_frames) % beat_gap == 0).astype(float),
    ], axis=1)
    spans = [(s, min(s + beat_gap, n_frames)) for s in range(0, n_frames - 1, beat_gap)]
    spans = [(s, e) for s, e in spans if e - s >= 2]
    targets = rng.normal(size=(len(spans), config.motif_dim))
    targets /= np.linalg.norm(targets, axis=-1, keepdims=True)
    motif_vectors = np.zeros((n_frames, config.motif_dim))
    for (s, e), tv in zip(spans, targets):
        motif_vectors[s:e] = tv
    flat_dim = 13 * (3 + 4 * j)
    raw = np.random.default_rng(seed + 1).normal(size=(flat_dim, config.motif_dim))
    q, _ = np.linalg.qr(raw)
    basis = EmbeddingBasis(mean=np.zeros(flat_dim), projection=q.T[: config.motif_dim],
                           word_frames=13, target_dim=config.motif_dim)
    return TrainSequence(rhythmic, motif_vectors, poses, contacts, spans, targets), basis


def gradient_check(config: NetConfig | None = None, seed: int = 0,
                   h: float = 1e-5, steps: int = 10) -> float:
    """Max relative error between analytic and central finite-difference
    gradients over every parameter entry of a tiny network.

    The relative error denominator is floored at 1e-3: central differences
    carry ~1e-10 absolute noise, so tinier gradients are compared absolutely.
    """
    if config is None:
        config = NetConfig(num_joints=2, motif_dim=4, hidden=8, layers=3,
                           gt_len=3, self_len=3)
    skeleton = toy_skeleton(config.num_joints)
    seq, basis = make_toy_sequence(config, steps + 1, seed=seed)
    params = init_params(config, seed)

    tensors = {k: ad.Tensor(v.copy(), requires_grad=True) for k, v in params.items()}
    loss = window_loss(tensors, config, skeleton, seq, 0, steps + 1, basis)
    loss.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
                for k, t in tensors.items()}

    def evaluate(p: dict) -> float:
        return float(ad.value_of(window_loss(p, config, skeleton, seq, 0,
                                             steps + 1, basis)))

    worst = 0.0
    for name, base in params.items():
        flat = base.reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + h
            up = evaluate(params)
            flat[idx] = original - h
            down = evaluate(params)
            flat[idx] = original
            numeric = (up - down) / (2.0 * h)
            ga = analytic[name].reshape(-1)[idx]
            err = abs(ga - numeric) / max(abs(ga), abs(numeric), 1e-3)
            worst = max(worst, err)
    return worst


MAGIC = b"CKPT1\n"


def save_checkpoint(params: dict[str, np.ndarray], config: NetConfig,
                    path: str | Path) -> None:
    """Binary checkpoint: JSON header (names, shapes, config) then raw
    little-endian float32 tensors in header order."""
    names = sorted(params)
    header = {
        "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "config": {
            "num_joints": config.num_joints, "motif_dim": config.motif_dim,
            "hidden": config.hidden, "layers": config.layers,
            "lambda_perceptual": config.lambda_perceptual,
            "learning_rate": config.learning_rate,
            "batch_size": config.batch_size, "window": config.window,
            "gt_len": config.gt_len, "self_len": config.self_len,
            "fk_weight": config.fk_weight, "contact_weight": config.contact_weight,
        },
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(params[n].astype("<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], NetConfig]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError("not a checkpoint file")
        (size,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(size).decode())
        params = {}
        for spec in header["tensors"]:
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4")
            params[spec["name"]] = data.astype(float).reshape(spec["shape"])
    config = NetConfig(**header["config"])
    return params, config
