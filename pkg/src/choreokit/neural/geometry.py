"""Differentiable quaternion geometry for the pose generator.

Each function runs on Tensors and plain ndarrays alike (the autodiff helpers
fall through to numpy), and mirrors the reference implementations in
choreokit.quat / choreokit.core; parity is covered by tests.
"""

from __future__ import annotations

import numpy as np

from .. import quat
from ..core import Skeleton
from . import autodiff as ad


def qmul(a, b):
    """Hamilton product over (..., 4), either operand may be a Tensor."""
    w1, x1, y1, z1 = (a[..., i] for i in range(4))
    w2, x2, y2, z2 = (b[..., i] for i in range(4))
    return ad.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)


def rotate(q, v):
    """Rotate vectors (..., 3) by unit quaternions (..., 4); v may be constant."""
    u = q[..., 1:4]
    w = q[..., 0:1]
    t = 2.0 * _cross(u, v)
    return v + w * t + _cross(u, t)


def _cross(a, b):
    ax, ay, az = (a[..., i] for i in range(3))
    bx, by, bz = (b[..., i] for i in range(3))
    return ad.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def normalize_quat_block(flat):
    """Rescale each 4-wide block of (..., 4J) to unit norm (projection onto
    the sphere, differentiated through)."""
    shape = ad.value_of(flat).shape
    j = shape[-1] // 4
    q = flat.reshape(*shape[:-1], j, 4)
    norm = ad.sqrt(ad.tsum(q * q, axis=-1, keepdims=True))
    return (q / norm).reshape(*shape)


def fk_positions(rotations, skeleton: Skeleton, root_position):
    """World positions of every node, (..., num_nodes, 3), differentiable.

    rotations: (..., J, 4) unit quaternions in rot-slot order; root_position:
    (..., 3). Mirrors core.forward_kinematics.
    """
    rot_slot = {node: slot for slot, node in enumerate(skeleton.rot_indices)}
    positions = [None] * skeleton.num_nodes
    globals_q = [None] * skeleton.num_nodes
    positions[0] = root_position
    globals_q[0] = rotations[..., rot_slot[0], :]
    for i in range(1, skeleton.num_nodes):
        joint = skeleton.joints[i]
        p = joint.parent
        offset = np.asarray(joint.offset, dtype=float)
        positions[i] = positions[p] + rotate(globals_q[p], offset)
        if i in rot_slot:
            globals_q[i] = qmul(globals_q[p], rotations[..., rot_slot[i], :])
        else:
            globals_q[i] = globals_q[p]
    return ad.stack(positions, axis=-2)


def slerp(q0, q1, t: float):
    """Shortest-arc interpolation matching quat.slerp, differentiable in q0/q1."""
    dot = ad.tsum(q0 * q1, axis=-1, keepdims=True)
    flip = ad.value_of(dot) < 0.0
    q1 = ad.where(np.broadcast_to(flip, ad.value_of(q1).shape), -1.0 * q1, q1)
    dot = ad.where(flip, -1.0 * dot, dot)
    close = ad.value_of(dot) > 1.0 - quat.SLERP_LERP_THRESHOLD
    omega = ad.arccos(ad.minimum(dot, 1.0 - quat.SLERP_LERP_THRESHOLD))
    so = ad.sin(omega)
    w0 = ad.where(close, (1.0 - t) * _ones_like(dot), ad.sin((1.0 - t) * omega) / so)
    w1 = ad.where(close, t * _ones_like(dot), ad.sin(t * omega) / so)
    out = w0 * q0 + w1 * q1
    norm = ad.sqrt(ad.tsum(out * out, axis=-1, keepdims=True))
    return out / norm


def _ones_like(x):
    return np.ones_like(ad.value_of(x))


def sample_rotation_track(rotations_list, s: float):
    """Piecewise slerp along a list of per-frame (J, 4) rotations at time s."""
    hi = len(rotations_list) - 1
    s = float(np.clip(s, 0.0, hi))
    lo = int(np.floor(s))
    if lo == hi:
        return rotations_list[hi]
    return slerp(rotations_list[lo], rotations_list[lo + 1], s - lo)


def _antipodal_signs(values: np.ndarray) -> np.ndarray:
    """Per-frame, per-joint +-1 signs mirroring core.antipodal_correct_rotations.

    values: (T, J, 4) plain array. The decisions are data-dependent but
    piecewise constant, so they enter the graph as constants.
    """
    t, j, _ = values.shape
    signs = np.ones((t, j, 1))
    first = values[0]
    flip = first[:, 0] < 0.0
    on_equator = first[:, 0] == 0.0
    for jj in np.nonzero(on_equator)[0]:
        nz = np.nonzero(first[jj, 1:])[0]
        if len(nz) and first[jj, 1 + nz[0]] < 0.0:
            flip[jj] = True
    signs[0, flip, 0] = -1.0
    for f in range(1, t):
        prev = values[f - 1] * signs[f - 1]
        dots = np.sum(values[f] * prev, axis=-1)
        signs[f, dots < 0.0, 0] = -1.0
    return signs


def embed_word_vectors(root_disp_list, rotations_list, basis):
    """Differentiable twin of motifs.embed_word for a generated word.

    root_disp_list / rotations_list: per-frame (3,) and (J, 4) values (Tensors
    during training). Time-scales to basis.word_frames, applies the antipodal
    sign convention (signs taken from values), flattens, projects, and
    L2-normalizes.
    """
    n = len(rotations_list)
    if n < 2:
        raise ValueError("word needs at least 2 frames")
    target = basis.word_frames
    times = np.linspace(0.0, n - 1, target)

    rotations = [sample_rotation_track(rotations_list, s) for s in times]
    cum = [root_disp_list[0]]
    for d in root_disp_list[1:]:
        cum.append(cum[-1] + d)
    points = []
    for s in times:
        lo = min(int(np.floor(s)), n - 1)
        if lo >= n - 1:
            points.append(cum[n - 1])
        else:
            frac = s - lo
            points.append(cum[lo] * (1.0 - frac) + cum[lo + 1] * frac)
    disp = [points[0]] + [points[m] - points[m - 1] for m in range(1, target)]

    signs = _antipodal_signs(np.stack([ad.value_of(r) for r in rotations]))
    per_frame = []
    for f in range(target):
        flat_rot = (rotations[f] * signs[f]).reshape(-1)
        per_frame.append(ad.concat([disp[f], flat_rot], axis=-1))
    vector = ad.concat(per_frame, axis=-1) - basis.mean
    proj = _project(vector, basis.projection)
    norm = ad.sqrt(ad.tsum(proj * proj))
    return proj / norm


def _project(vector, projection: np.ndarray):
    if ad.is_tensor(vector):
        return (vector.reshape(1, -1) @ ad.Tensor(projection.T)).reshape(-1)
    return projection @ vector
