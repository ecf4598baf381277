"""Skeletal data model, forward kinematics, and the pose distance metric.

A pose is a root displacement (3-vector, world units, relative to the previous
frame, expressed in the world frame) plus one unit quaternion per channeled
joint. End sites carry offsets but no rotation channels; they participate in
forward kinematics only. World units default to centimeters and are carried as
a label, never converted implicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int  # -1 for the root
    offset: tuple[float, float, float]
    is_end_site: bool = False
    channel_order: str = "ZXY"  # BVH rotation channel order, kept for round-trips


@dataclass(frozen=True)
class Skeleton:
    """Joint hierarchy in topological order (parent index < child index)."""

    joints: tuple[Joint, ...]
    fps: float = 30.0
    units: str = "cm"
    # names used by contact detection / leg IK; resolved lazily when unset
    left_foot: str | None = None
    right_foot: str | None = None

    def __post_init__(self):
        roots = [i for i, j in enumerate(self.joints) if j.parent < 0]
        if len(roots) != 1 or roots[0] != 0:
            raise ValueError("skeleton must have exactly one root at index 0")
        for i, j in enumerate(self.joints[1:], start=1):
            if not 0 <= j.parent < i:
                raise ValueError(f"joint {j.name!r} parent {j.parent} breaks topological order")

    @property
    def num_nodes(self) -> int:
        return len(self.joints)

    @property
    def rot_indices(self) -> tuple[int, ...]:
        return tuple(i for i, j in enumerate(self.joints) if not j.is_end_site)

    @property
    def num_joints(self) -> int:
        """Channeled joint count J; pose dimensionality is 3 + 4*J."""
        return len(self.rot_indices)

    @property
    def pose_dim(self) -> int:
        return 3 + 4 * self.num_joints

    def offsets(self) -> np.ndarray:
        return np.array([j.offset for j in self.joints], dtype=float)

    def index_of(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(f"no joint named {name!r}")

    def bone_lengths(self) -> np.ndarray:
        """Offset norms of all non-root nodes, in hierarchy order."""
        return np.array([np.linalg.norm(j.offset) for j in self.joints[1:]])


@dataclass
class SkeletonPose:
    """One frame: world-frame root displacement plus J unit quaternions (w,x,y,z)."""

    root_displacement: np.ndarray  # (3,)
    rotations: np.ndarray  # (J, 4)

    def validate(self, tol: float = 1e-6) -> None:
        if self.root_displacement.shape != (3,) or self.rotations.ndim != 2:
            raise ValueError("bad pose shape")
        quat.check_unit(self.rotations, tol)


@dataclass
class MotionClip:
    """Pose sequence over a fixed skeleton.

    root_disp: (T, 3) per-frame displacement; frame 0 holds the displacement
    from the world origin so accumulated positions reproduce absolute paths.
    rotations: (T, J, 4) ordered by Skeleton.rot_indices.
    """

    skeleton: Skeleton
    root_disp: np.ndarray
    rotations: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        self.root_disp = np.asarray(self.root_disp, dtype=float)
        self.rotations = np.asarray(self.rotations, dtype=float)
        if self.root_disp.shape != (len(self.rotations), 3):
            raise ValueError("root_disp and rotations frame counts differ")
        if self.rotations.ndim != 3 or self.rotations.shape[1] != self.skeleton.num_joints:
            raise ValueError("rotation array does not match skeleton joint count")

    @property
    def num_frames(self) -> int:
        return len(self.rotations)

    def pose(self, t: int) -> SkeletonPose:
        return SkeletonPose(self.root_disp[t].copy(), self.rotations[t].copy())

    def root_positions(self, start=(0.0, 0.0, 0.0)) -> np.ndarray:
        """Accumulated world root positions, (T, 3)."""
        return np.asarray(start, dtype=float) + np.cumsum(self.root_disp, axis=0)

    def copy(self) -> "MotionClip":
        return MotionClip(self.skeleton, self.root_disp.copy(), self.rotations.copy(), self.fps)


def quat_log_distance_sq(q_a: np.ndarray, q_b: np.ndarray) -> float:
    """Squared quaternion-space geodesic distance between two rotations."""
    return float(quat.log_distance_sq(np.asarray(q_a, float), np.asarray(q_b, float)))


def pose_distance(f_i, f_j, weights: np.ndarray | None = None) -> float:
    """Sum over joints of the squared log-map distance between rotations.

    Accepts SkeletonPose or raw (J, 4) arrays. Uniform joint weights by
    default; a per-joint weight vector may be supplied.
    """
    ri = f_i.rotations if isinstance(f_i, SkeletonPose) else np.asarray(f_i, float)
    rj = f_j.rotations if isinstance(f_j, SkeletonPose) else np.asarray(f_j, float)
    if ri.shape != rj.shape:
        raise ValueError("skeleton mismatch: poses have different joint counts")
    d = quat.log_distance_sq(ri, rj)
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (ri.shape[0],):
            raise ValueError("weight vector length must equal joint count")
        d = d * weights
    return float(np.sum(d))


def antipodal_correct_rotations(rotations: np.ndarray) -> np.ndarray:
    """Resolve quaternion sign per joint so consecutive frames stay close.

    Frame 0 is normalized to w >= 0 (first nonzero component positive when
    w == 0); each later frame takes whichever of q, -q has the smaller
    Euclidean distance to the previous corrected frame. Rotations are
    unchanged as rotations. Idempotent.
    """
    out = np.array(rotations, dtype=float, copy=True)
    if len(out) == 0:
        return out
    first = out[0]
    flip = first[..., 0] < 0.0
    on_equator = first[..., 0] == 0.0
    if np.any(on_equator):
        # deterministic tie-break: first nonzero of (x, y, z) must be positive
        for jj in np.nonzero(on_equator)[0]:
            v = first[jj, 1:]
            nz = np.nonzero(v)[0]
            if len(nz) and v[nz[0]] < 0.0:
                flip[jj] = True
    out[0][flip] = -out[0][flip]
    for t in range(1, len(out)):
        dots = np.sum(out[t] * out[t - 1], axis=-1)
        out[t][dots < 0.0] = -out[t][dots < 0.0]
    return out


def antipodal_correct(clip: MotionClip) -> MotionClip:
    quat.check_unit(clip.rotations)
    return MotionClip(clip.skeleton, clip.root_disp.copy(),
                      antipodal_correct_rotations(clip.rotations), clip.fps)


def forward_kinematics(pose, skeleton: Skeleton, root_position=(0.0, 0.0, 0.0)) -> np.ndarray:
    """World positions of every node, (num_nodes, 3).

    child position = parent position + parent global rotation applied to the
    child offset; child global rotation = parent global rotation composed with
    the child's local rotation. The root sits at root_position.
    """
    rotations = pose.rotations if isinstance(pose, SkeletonPose) else np.asarray(pose, float)
    rot_slot = {node: slot for slot, node in enumerate(skeleton.rot_indices)}
    n = skeleton.num_nodes
    positions = np.zeros((n, 3))
    globals_q = np.zeros((n, 4))
    positions[0] = np.asarray(root_position, dtype=float)
    globals_q[0] = rotations[rot_slot[0]]
    for i in range(1, n):
        j = skeleton.joints[i]
        p = j.parent
        positions[i] = positions[p] + quat.rotate(globals_q[p], np.asarray(j.offset, float))
        if i in rot_slot:
            globals_q[i] = quat.mul(globals_q[p], rotations[rot_slot[i]])
        else:
            globals_q[i] = globals_q[p]
    return positions


def clip_positions(clip: MotionClip, start=(0.0, 0.0, 0.0)) -> np.ndarray:
    """FK positions for every frame with accumulated root motion, (T, num_nodes, 3)."""
    roots = clip.root_positions(start)
    return np.stack([
        forward_kinematics(clip.rotations[t], clip.skeleton, roots[t])
        for t in range(clip.num_frames)
    ])


def global_rotations(rotations: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Per-node global rotations for one frame, (num_nodes, 4)."""
    rot_slot = {node: slot for slot, node in enumerate(skeleton.rot_indices)}
    out = np.zeros((skeleton.num_nodes, 4))
    out[0] = rotations[rot_slot[0]]
    for i in range(1, skeleton.num_nodes):
        p = skeleton.joints[i].parent
        if i in rot_slot:
            out[i] = quat.mul(out[p], rotations[rot_slot[i]])
        else:
            out[i] = out[p]
    return out
