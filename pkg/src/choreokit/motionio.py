"""Corpus ingestion helpers: resampling, foot-contact labels, manifests.

Foot contact labels are (T, 2) arrays of 0/1 for (left, right); a foot is in
contact when it is both low and slow. Default thresholds assume centimeter
units at 30 fps and are configurable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import quat
from .core import MotionClip, Skeleton, clip_positions

DEFAULT_HEIGHT_THRESHOLD = 3.0  # world units above ground
DEFAULT_SPEED_THRESHOLD = 0.5  # world units per frame

_FOOT_HINTS = ("toe", "foot", "ankle")


@dataclass
class CorpusEntry:
    """One ingested dance: motion, contacts, beat grid, and a genre tag."""

    entry_id: str
    clip: MotionClip
    contacts: np.ndarray  # (T, 2) int
    beats: "object"  # BeatGrid; untyped here to avoid a module cycle
    genre: str


def resample(clip: MotionClip, target_fps: float) -> MotionClip:
    """Linear time resampling to a lower frame rate.

    Quaternions are interpolated by shortest-arc slerp; root displacement is
    rebuilt from the interpolated cumulative path so total displacement is
    preserved.
    """
    if target_fps <= 0:
        raise ValueError("target_fps must be positive")
    if target_fps > clip.fps:
        raise ValueError("resample only reduces frame rate")
    n = clip.num_frames
    if n == 0:
        return MotionClip(clip.skeleton, clip.root_disp.copy(), clip.rotations.copy(), target_fps)
    ratio = target_fps / clip.fps
    m = int(np.floor((n - 1) * ratio)) + 1
    times = np.arange(m) / ratio if m > 1 else np.array([0.0])
    times = np.clip(times, 0.0, n - 1)

    rotations = np.stack([quat.sample_sequence(clip.rotations, s) for s in times])
    # renormalize to guard against interpolation drift
    rotations = rotations / np.linalg.norm(rotations, axis=-1, keepdims=True)

    cum = np.cumsum(clip.root_disp, axis=0)
    sampled = np.stack([_lerp_rows(cum, s) for s in times])
    disp = np.diff(sampled, axis=0, prepend=sampled[:1])
    disp[0] = sampled[0]
    return MotionClip(clip.skeleton, disp, rotations, target_fps)


def _lerp_rows(arr: np.ndarray, s: float) -> np.ndarray:
    hi = len(arr) - 1
    lo = int(np.floor(s))
    if lo >= hi:
        return arr[hi].copy()
    frac = s - lo
    return (1.0 - frac) * arr[lo] + frac * arr[lo + 1]


def guess_foot_joints(skeleton: Skeleton) -> tuple[str, str]:
    """Pick left/right foot joints by name: toe if present, else foot/ankle."""
    names = [j.name for j in skeleton.joints]
    found: dict[str, str] = {}
    for side in ("left", "right"):
        for hint in _FOOT_HINTS:
            matches = [n for n in names
                       if hint in n.lower() and _side_of(n) == side]
            if matches:
                found[side] = matches[0]
                break
    if "left" not in found or "right" not in found:
        raise ValueError("could not identify left/right foot joints by name")
    return found["left"], found["right"]


def _side_of(name: str) -> str | None:
    low = name.lower()
    if low.startswith("left") or low.startswith("l_") or ".l" in low or "_l_" in low:
        return "left"
    if low.startswith("right") or low.startswith("r_") or ".r" in low or "_r_" in low:
        return "right"
    return None


def detect_foot_contacts(
    clip: MotionClip,
    height_threshold: float = DEFAULT_HEIGHT_THRESHOLD,
    speed_threshold: float = DEFAULT_SPEED_THRESHOLD,
    left_foot: str | None = None,
    right_foot: str | None = None,
) -> np.ndarray:
    """Per-frame (left, right) contact labels from foot height and speed.

    contact = (world height < height_threshold) AND (speed < speed_threshold),
    with heights taken from FK over accumulated root positions. Raising either
    threshold can only add contacts.
    """
    skeleton = clip.skeleton
    if left_foot is None or right_foot is None:
        if skeleton.left_foot and skeleton.right_foot:
            left_foot, right_foot = skeleton.left_foot, skeleton.right_foot
        else:
            left_foot, right_foot = guess_foot_joints(skeleton)
    try:
        nodes = [skeleton.index_of(left_foot), skeleton.index_of(right_foot)]
    except KeyError as exc:
        raise ValueError(f"configured foot joint missing: {exc}") from None

    positions = clip_positions(clip)  # (T, nodes, 3)
    feet = positions[:, nodes, :]  # (T, 2, 3)
    heights = feet[..., 1]  # Y-up
    if len(feet) > 1:
        vel = np.linalg.norm(np.diff(feet, axis=0), axis=-1)
        speeds = np.vstack([vel[:1], vel])  # frame 0 reuses the first step
    else:
        speeds = np.zeros_like(heights)
    labels = (heights < height_threshold) & (speeds < speed_threshold)
    return labels.astype(np.int8)


@dataclass(frozen=True)
class ManifestItem:
    bvh_path: Path
    beats_path: Path
    genre: str


def load_manifest(path: str | Path) -> list[ManifestItem]:
    """Corpus manifest: JSON list of {"bvh": ..., "beats": ..., "genre": ...}.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    data = json.loads(path.read_text())
    if not isinstance(data, list):
        raise ValueError("corpus manifest must be a JSON list")
    base = path.parent
    items = []
    for i, row in enumerate(data):
        try:
            items.append(ManifestItem(
                bvh_path=base / row["bvh"],
                beats_path=base / row["beats"],
                genre=str(row["genre"]),
            ))
        except (KeyError, TypeError):
            raise ValueError(f"manifest entry {i} needs bvh/beats/genre fields") from None
    return items
