"""Auto-conditioned recurrent pose generator.

A stack of gated memory cells (input/forget/output gates with sigmoid,
candidate with tanh) followed by a linear head. The input per frame is the
concatenation [rhythmic (4), motif vector (d), pose (3 + 4J), contacts (2)];
the head emits the next pose and contact logits. Quaternion blocks are
renormalized per joint, differentiated through during training. During
training the network is alternately fed ground truth and its own outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Skeleton
from . import autodiff as ad
from .geometry import normalize_quat_block

RHYTHMIC_DIM = 4
CONTACT_DIM = 2


@dataclass
class NetConfig:
    """Desk-scale defaults; full-scale values (hidden 1024, d 184, J 31,
    500k iterations) remain reachable through these fields."""

    num_joints: int
    motif_dim: int
    hidden: int = 64
    layers: int = 3
    lambda_perceptual: float = 0.5
    learning_rate: float = 1e-4
    batch_size: int = 32
    window: int = 100  # training sequence length, frames
    gt_len: int = 5  # teacher-forced span of the condition schedule
    self_len: int = 5  # self-fed span
    fk_weight: float = 1.0
    contact_weight: float = 1.0

    def __post_init__(self):
        for name in ("num_joints", "motif_dim", "hidden", "layers", "batch_size",
                     "window"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gt_len < 0 or self.self_len < 0 or self.gt_len + self.self_len < 1:
            raise ValueError("condition schedule needs gt_len + self_len >= 1")
        if self.learning_rate <= 0 or self.lambda_perceptual < 0:
            raise ValueError("bad training hyperparameters")

    @property
    def pose_dim(self) -> int:
        return 3 + 4 * self.num_joints

    @property
    def input_dim(self) -> int:
        return RHYTHMIC_DIM + self.motif_dim + self.pose_dim + CONTACT_DIM

    @property
    def output_dim(self) -> int:
        return self.pose_dim + CONTACT_DIM


def init_params(config: NetConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded uniform init scaled by fan-in; forget-gate biases start at 1."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    in_dim = config.input_dim
    h = config.hidden
    for layer in range(config.layers):
        fan_in = in_dim + h
        bound = 1.0 / np.sqrt(fan_in)
        params[f"lstm{layer}.w"] = rng.uniform(-bound, bound, (4 * h, fan_in))
        bias = np.zeros(4 * h)
        bias[h : 2 * h] = 1.0  # forget gate
        params[f"lstm{layer}.b"] = bias
        in_dim = h
    bound = 1.0 / np.sqrt(h)
    params["head.w"] = rng.uniform(-bound, bound, (config.output_dim, h))
    head_bias = np.zeros(config.output_dim)
    # bias quaternion w-components to identity so raw blocks start near unit
    # norm; renormalizing near-zero blocks is ill-conditioned
    head_bias[3 : 3 + 4 * config.num_joints : 4] = 1.0
    params["head.b"] = head_bias
    return params


def zero_state(config: NetConfig, batch: int = 1) -> list[tuple]:
    return [(np.zeros((batch, config.hidden)), np.zeros((batch, config.hidden)))
            for _ in range(config.layers)]


def step_raw(params: dict, x, state: list, config: NetConfig):
    """One recurrent step; returns (raw head output, new state).

    x: (B, input_dim); state: per-layer (h, c). With all-zero weights and
    state, the hidden output is zero and the head returns its bias.
    """
    h_dim = config.hidden
    new_state = []
    inp = x
    for layer in range(config.layers):
        w = params[f"lstm{layer}.w"]
        b = params[f"lstm{layer}.b"]
        h_prev, c_prev = state[layer]
        z = ad.concat([inp, h_prev], axis=1) @ _transpose(w) + b
        i_gate = ad.sigmoid(z[:, :h_dim])
        f_gate = ad.sigmoid(z[:, h_dim : 2 * h_dim])
        g_cand = ad.tanh(z[:, 2 * h_dim : 3 * h_dim])
        o_gate = ad.sigmoid(z[:, 3 * h_dim :])
        c = f_gate * c_prev + i_gate * g_cand
        h = o_gate * ad.tanh(c)
        new_state.append((h, c))
        inp = h
    raw = inp @ _transpose(params["head.w"]) + params["head.b"]
    return raw, new_state


def _transpose(w):
    return w.transpose() if ad.is_tensor(w) else np.asarray(w).T


def split_head(raw, config: NetConfig):
    """Raw head output -> (root displacement, unit quaternion block, contact logits)."""
    root = raw[:, :3]
    quat_flat = normalize_quat_block(raw[:, 3 : 3 + 4 * config.num_joints])
    contact_logits = raw[:, 3 + 4 * config.num_joints :]
    return root, quat_flat, contact_logits


def forward_step(params: dict, x, state: list, config: NetConfig):
    """Predict the next frame: (pose (B, 3+4J), contact probs (B, 2), state').

    The pose's quaternion block is renormalized per joint; contacts pass
    through a sigmoid (threshold at 0.5 to binarize).
    """
    x_val = ad.value_of(x)
    if x_val.ndim != 2 or x_val.shape[1] != config.input_dim:
        raise ValueError(f"input must be (batch, {config.input_dim})")
    raw, new_state = step_raw(params, x, state, config)
    root, quat_flat, contact_logits = split_head(raw, config)
    pose = ad.concat([root, quat_flat], axis=1)
    if not np.all(np.isfinite(ad.value_of(pose))):
        raise FloatingPointError("non-finite network output")
    return pose, ad.sigmoid(contact_logits), new_state


def make_input(rhythmic, motif_vec, pose, contacts):
    """Assemble n_t = [rhythmic, motif, pose, contacts] along axis 1."""
    return ad.concat([rhythmic, motif_vec, pose, contacts], axis=1)


@dataclass
class RolloutPlan:
    """Per-frame conditioning for generation: rhythmic rows and the motif
    vector (constant within each beat interval), plus beat boundaries."""

    rhythmic: np.ndarray  # (T, 4)
    motif_vectors: np.ndarray  # (T, d)
    beat_frames: np.ndarray  # boundaries for word collection


def rollout(params: dict, config: NetConfig, initial_poses: np.ndarray,
            initial_contacts: np.ndarray, plan: RolloutPlan, steps: int):
    """Generate `steps` frames, feeding predictions back as inputs.

    initial_poses (P, pose_dim) prime the state teacher-forced; generation
    continues from the last primed frame. Returns (poses (steps, pose_dim),
    contact probabilities (steps, 2), words) where words maps beat intervals
    inside the generated span to frame ranges.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    state = zero_state(config, batch=1)
    pose = initial_poses[0:1]
    contacts = initial_contacts[0:1].astype(float)
    t = 0
    for p in range(len(initial_poses)):
        x = make_input(plan.rhythmic[t : t + 1], plan.motif_vectors[t : t + 1],
                       initial_poses[p : p + 1], initial_contacts[p : p + 1].astype(float))
        pose, contact_prob, state = forward_step(params, x, state, config)
        contacts = contact_prob
        t += 1
    out_poses = np.zeros((steps, config.pose_dim))
    out_contacts = np.zeros((steps, CONTACT_DIM))
    for k in range(steps):
        out_poses[k] = ad.value_of(pose)[0]
        out_contacts[k] = ad.value_of(contacts)[0]
        x = make_input(plan.rhythmic[t : t + 1], plan.motif_vectors[t : t + 1],
                       ad.value_of(pose), ad.value_of(contacts))
        pose, contacts, state = forward_step(params, x, state, config)
        t += 1
    first = len(initial_poses)
    words = []
    boundaries = [b for b in plan.beat_frames if first <= b]
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        if b - first <= steps:
            words.append((int(a - first), int(b - first)))
    return out_poses, out_contacts, words
