"""Training objectives for the pose generator.

The frame loss combines the quaternion geodesic metric with a world-position
term through a forward-kinematic layer and a binary cross-entropy on contact
logits. The word-level perceptual term measures squared distance between the
embedding of a generated word and its target motif vector. The total is
coherence + auto-conditioned coherence + lambda * perceptual.
"""

from __future__ import annotations

import numpy as np

from ..core import Skeleton
from . import autodiff as ad
from .geometry import embed_word_vectors, fk_positions
from .model import NetConfig


def frame_loss(pred_pose, contact_logits, gt_pose: np.ndarray,
               gt_contacts: np.ndarray, skeleton: Skeleton, config: NetConfig):
    """Per-batch mean loss for one predicted frame against ground truth.

    rotation term: sum over joints of the squared quaternion log distance;
    position term (weight fk_weight): mean squared node position error with
    the root placed at the frame displacement; contact term (weight
    contact_weight): binary cross-entropy on the logits.
    """
    j = config.num_joints
    batch = ad.value_of(pred_pose).shape[0]
    pred_quats = pred_pose[:, 3:].reshape(batch, j, 4)
    gt_quats = gt_pose[:, 3:].reshape(batch, j, 4)
    rot = ad.mean(ad.tsum(ad.quat_logdist_sq(pred_quats, gt_quats), axis=1))
    total = rot
    if config.fk_weight > 0.0:
        pred_pos = fk_positions(pred_quats, skeleton, pred_pose[:, :3])
        gt_pos = fk_positions(gt_quats, skeleton, gt_pose[:, :3])
        total = total + config.fk_weight * ad.mean(
            ad.tsum((pred_pos - gt_pos) ** 2.0, axis=-1))
    if config.contact_weight > 0.0:
        total = total + config.contact_weight * bce_with_logits(
            contact_logits, gt_contacts.astype(float))
    return total


def bce_with_logits(logits, targets: np.ndarray):
    """Stable binary cross-entropy: mean(softplus(z) - z*y)."""
    z_val = ad.value_of(logits)
    zero = np.zeros_like(z_val)
    z_pos = ad.where(z_val > 0, logits, zero)
    z_abs = ad.where(z_val >= 0, logits, -1.0 * logits)
    softplus = z_pos + ad.log(1.0 + ad.exp(-1.0 * z_abs))
    return ad.mean(softplus - logits * targets)


def perceptual_loss(root_disp_frames, rotation_frames, target_vector: np.ndarray,
                    basis) -> "object":
    """Squared embedding distance between a generated word and its motif vector.

    Bounded by 4 for unit-norm embeddings.
    """
    e = embed_word_vectors(root_disp_frames, rotation_frames, basis)
    diff = e - np.asarray(target_vector, dtype=float)
    return ad.tsum(diff * diff)


def total_loss(coherence, autoconditioned, perceptual, lambda_perceptual: float):
    """coherence + autoconditioned + lambda * perceptual; perceptual may be None."""
    total = coherence + autoconditioned
    if perceptual is not None and lambda_perceptual != 0.0:
        total = total + lambda_perceptual * perceptual
    return total
