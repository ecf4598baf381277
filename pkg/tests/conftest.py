"""Shared synthetic skeletons and motion builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from choreokit import quat
from choreokit.core import Joint, MotionClip, Skeleton


def random_unit_quats(rng: np.random.Generator, shape) -> np.ndarray:
    q = rng.normal(size=tuple(shape) + (4,))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def chain_skeleton(n_joints: int, offset=(1.0, 0.0, 0.0), fps: float = 30.0) -> Skeleton:
    joints = [Joint("j0", -1, (0.0, 0.0, 0.0))]
    for i in range(1, n_joints):
        joints.append(Joint(f"j{i}", i - 1, tuple(offset)))
    joints.append(Joint(f"j{n_joints - 1}_end", n_joints - 1, tuple(offset), is_end_site=True))
    return Skeleton(tuple(joints), fps=fps)


def legged_skeleton(fps: float = 30.0) -> Skeleton:
    """Hips at the root with a spine stub and two 3-joint legs (thigh/shin 4 units)."""
    joints = (
        Joint("Hips", -1, (0.0, 0.0, 0.0)),
        Joint("Spine", 0, (0.0, 2.0, 0.0)),
        Joint("Spine_end", 1, (0.0, 2.0, 0.0), is_end_site=True),
        Joint("LeftUpLeg", 0, (1.0, 0.0, 0.0)),
        Joint("LeftLeg", 3, (0.0, -4.0, 0.0)),
        Joint("LeftFoot", 4, (0.0, -4.0, 0.0)),
        Joint("LeftFoot_end", 5, (0.0, -0.5, 1.0), is_end_site=True),
        Joint("RightUpLeg", 0, (-1.0, 0.0, 0.0)),
        Joint("RightLeg", 7, (0.0, -4.0, 0.0)),
        Joint("RightFoot", 8, (0.0, -4.0, 0.0)),
        Joint("RightFoot_end", 9, (0.0, -0.5, 1.0), is_end_site=True),
    )
    return Skeleton(joints, fps=fps, left_foot="LeftFoot", right_foot="RightFoot")


def identity_clip(skeleton: Skeleton, n_frames: int, fps: float | None = None) -> MotionClip:
    rot = np.zeros((n_frames, skeleton.num_joints, 4))
    rot[..., 0] = 1.0
    return MotionClip(skeleton, np.zeros((n_frames, 3)), rot, fps or skeleton.fps)


def random_clip(skeleton: Skeleton, n_frames: int, rng: np.random.Generator,
                fps: float | None = None, smooth: bool = False) -> MotionClip:
    """Random clip; smooth=True builds small incremental rotations per frame."""
    if smooth:
        rot = np.empty((n_frames, skeleton.num_joints, 4))
        rot[0] = random_unit_quats(rng, (skeleton.num_joints,))
        for t in range(1, n_frames):
            axes = rng.normal(size=(skeleton.num_joints, 3))
            axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
            angles = rng.uniform(0.0, 0.12, skeleton.num_joints)
            steps = np.stack([quat.from_axis_angle(a, ang) for a, ang in zip(axes, angles)])
            rot[t] = quat.mul(rot[t - 1], steps)
    else:
        rot = random_unit_quats(rng, (n_frames, skeleton.num_joints))
    disp = rng.normal(0.0, 0.3, (n_frames, 3))
    return MotionClip(skeleton, disp, rot, fps or skeleton.fps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
