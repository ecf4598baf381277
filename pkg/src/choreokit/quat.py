"""Quaternion algebra used throughout the engine.

Conventions (fixed here, documented in every file format):
  - quaternions are stored (w, x, y, z), unit norm, right-handed rotations
  - vectors are column vectors; rotate(q, v) = q v q*
  - composition: qmul(a, b) applies b first, then a
  - Euler angles are intrinsic rotations in channel order, degrees in files

All functions accept arrays of shape (..., 4) and broadcast over leading axes.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}
_EVEN_PERMS = {(0, 1, 2), (1, 2, 0), (2, 0, 1)}


def norm(q: np.ndarray) -> np.ndarray:
    return np.linalg.norm(q, axis=-1)


def normalize(q: np.ndarray) -> np.ndarray:
    """Rescale to unit norm. Raises on near-zero or non-finite input."""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("non-finite quaternion")
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ValueError("near-zero-norm quaternion")
    return q / n


def check_unit(q: np.ndarray, tol: float = 1e-6) -> None:
    """Validate unit norm within tol; raises ValueError otherwise."""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("non-finite quaternion")
    err = np.abs(np.linalg.norm(q, axis=-1) - 1.0)
    if np.any(err > tol):
        raise ValueError(f"quaternion not unit norm (max deviation {err.max():.3e})")


def conjugate(q: np.ndarray) -> np.ndarray:
    out = np.array(q, dtype=float, copy=True)
    out[..., 1:] = -out[..., 1:]
    return out


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b (b applied first)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w1, x1, y1, z1 = (a[..., i] for i in range(4))
    w2, x2, y2, z2 = (b[..., i] for i in range(4))
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v of shape (..., 3) by unit quaternions q."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (..., 4) to rotation matrix (..., 3, 3)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = (q[..., i] for i in range(4))
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    rows = [
        np.stack([1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)], axis=-1),
        np.stack([2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)], axis=-1),
        np.stack([2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def _axis_quat(axis_idx: int, angle: np.ndarray) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    half = 0.5 * angle
    out = np.zeros(angle.shape + (4,))
    out[..., 0] = np.cos(half)
    out[..., 1 + axis_idx] = np.sin(half)
    return out


def from_euler_deg(angles: np.ndarray, order: str) -> np.ndarray:
    """Euler angles in degrees (..., 3), channel order like "ZXY", to quaternion.

    angles[..., i] belongs to axis order[i]; rotations compose intrinsically
    in channel order, matching BVH channel semantics.
    """
    if len(order) != 3 or any(c.lower() not in _AXIS_INDEX for c in order):
        raise ValueError(f"bad Euler order {order!r}")
    angles = np.radians(np.asarray(angles, dtype=float))
    q = _axis_quat(_AXIS_INDEX[order[0].lower()], angles[..., 0])
    for i in (1, 2):
        q = mul(q, _axis_quat(_AXIS_INDEX[order[i].lower()], angles[..., i]))
    return q


def to_euler_deg(q: np.ndarray, order: str) -> np.ndarray:
    """Unit quaternion to Euler angles in degrees for the given channel order.

    Near gimbal lock (middle angle at +-90 deg) the third angle is set to 0
    and the first absorbs the remaining rotation.
    """
    if len(order) != 3 or any(c.lower() not in _AXIS_INDEX for c in order):
        raise ValueError(f"bad Euler order {order!r}")
    i, j, k = (_AXIS_INDEX[c.lower()] for c in order)
    sign = 1.0 if (i, j, k) in _EVEN_PERMS else -1.0
    m = to_matrix(q)
    s2 = np.clip(sign * m[..., i, k], -1.0, 1.0)
    theta2 = np.arcsin(s2)
    locked = np.abs(s2) > 1.0 - 1e-9
    theta1 = np.where(
        locked,
        np.arctan2(sign * m[..., k, j], m[..., j, j]),
        np.arctan2(-sign * m[..., j, k], m[..., k, k]),
    )
    theta3 = np.where(locked, 0.0, np.arctan2(-sign * m[..., i, j], m[..., i, i]))
    return np.degrees(np.stack([theta1, theta2, theta3], axis=-1))


SLERP_LERP_THRESHOLD = 1e-7  # dot beyond 1 - this falls back to normalized lerp


def slerp(q0: np.ndarray, q1: np.ndarray, t) -> np.ndarray:
    """Shortest-arc spherical interpolation, elementwise over (..., 4) pairs."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    t = np.asarray(t, dtype=float)[..., np.newaxis]
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(dot < 0.0, -q1, q1)
    dot = np.abs(dot)
    # near-parallel pairs fall back to normalized lerp (slerp limit)
    close = dot > 1.0 - SLERP_LERP_THRESHOLD
    omega = np.arccos(np.minimum(dot, 1.0 - SLERP_LERP_THRESHOLD))
    so = np.sin(omega)
    w0 = np.where(close, 1.0 - t, np.sin((1.0 - t) * omega) / so)
    w1 = np.where(close, t, np.sin(t * omega) / so)
    out = w0 * q0 + w1 * q1
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def sample_sequence(quats: np.ndarray, s: float) -> np.ndarray:
    """Piecewise slerp along the time axis of quats (T, ..., 4) at time s in [0, T-1]."""
    hi = len(quats) - 1
    s = float(np.clip(s, 0.0, hi))
    lo = int(np.floor(s))
    if lo == hi:
        return quats[hi].copy()
    return slerp(quats[lo], quats[lo + 1], s - lo)


def log_distance_sq(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """Squared geodesic norm ||log(qa^-1 qb)||^2, antipodal-aware.

    qb is flipped into the hemisphere of qa before the log map, so the value
    measures rotation distance, not representation distance: it is (theta/2)^2
    for a relative rotation of angle theta in [0, pi].
    """
    check_unit(qa)
    check_unit(qb)
    rel = mul(conjugate(qa), qb)
    w = np.abs(rel[..., 0])
    s = np.linalg.norm(rel[..., 1:], axis=-1)
    # below the double-precision noise floor the rotations are identical
    s = np.where(s < 1e-14, 0.0, s)
    half_angle = np.arctan2(s, w)
    return half_angle * half_angle
