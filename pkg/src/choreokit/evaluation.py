"""Quantitative evaluation: kinematic beats, alignment ratios, signature traces.

Kinematic beats are strict local minima of the smoothed total joint speed
(sudden deceleration); alignment compares them against music beats with a
one-frame default tolerance and greedy one-to-one matching. Signature reports
trace the chi-square distance to a target over the course of a motif stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .core import MotionClip, clip_positions
from .motifs import chi_square, compute_signature

DEFAULT_SG_WINDOW = 9
DEFAULT_SG_ORDER = 3
DEFAULT_TOLERANCE = 1


def joint_speed_profile(clip: MotionClip) -> np.ndarray:
    """Per-frame total joint speed: sum over nodes of the Euclidean distance
    between consecutive world positions. Frame 0 repeats frame 1's value."""
    positions = clip_positions(clip)
    steps = np.linalg.norm(np.diff(positions, axis=0), axis=-1).sum(axis=1)
    if len(steps) == 0:
        return np.zeros(clip.num_frames)
    return np.concatenate([[steps[0]], steps])


def smooth_speed(speed: np.ndarray, window: int = DEFAULT_SG_WINDOW,
                 order: int = DEFAULT_SG_ORDER) -> np.ndarray:
    """Savitzky-Golay smoothing; window 1 is the identity filter."""
    if window % 2 == 0 or window < 1:
        raise ValueError("window must be odd and positive")
    if window == 1 or len(speed) < window:
        return np.asarray(speed, dtype=float).copy()
    return savgol_filter(speed, window, min(order, window - 1))


def kinematic_beats(clip: MotionClip, sg_window: int = DEFAULT_SG_WINDOW,
                    sg_order: int = DEFAULT_SG_ORDER,
                    prominence: float = 0.0) -> np.ndarray:
    """Frames of strict local minima of the smoothed speed curve.

    No prominence threshold is applied by default (pass one to require dips
    deeper than it); a float-noise epsilon keeps flat curves minima-free.
    """
    if clip.num_frames <= sg_window:
        raise ValueError("clip shorter than the smoothing window")
    speed = smooth_speed(joint_speed_profile(clip), sg_window, sg_order)
    eps = max(prominence, 1e-12 * max(float(np.abs(speed).max()), 1.0))
    inner = np.arange(1, len(speed) - 1)
    minima = inner[(speed[inner] + eps < speed[inner - 1])
                   & (speed[inner] + eps < speed[inner + 1])]
    return minima


@dataclass
class BeatAlignmentReport:
    kinematic_beats: np.ndarray
    music_beats: np.ndarray
    tolerance: int
    matches: list[tuple[int, int]]  # (kinematic frame, music frame)

    @property
    def ratio_kin_to_music(self) -> float:
        return len(self.kinematic_beats) / len(self.music_beats)

    @property
    def ratio_aligned(self) -> float:
        if len(self.kinematic_beats) == 0:
            return 0.0
        return len(self.matches) / len(self.kinematic_beats)


def alignment_report(kin_beats: np.ndarray, music_beats: np.ndarray,
                     tolerance: int = DEFAULT_TOLERANCE) -> BeatAlignmentReport:
    """Greedy nearest one-to-one matching within the tolerance.

    Candidate pairs are taken closest-first; each music beat may absorb at
    most one kinematic beat and vice versa.
    """
    kin = np.asarray(kin_beats, dtype=int)
    music = np.asarray(music_beats, dtype=int)
    if len(music) == 0:
        raise ValueError("music beats must be non-empty")
    pairs = [(abs(int(k) - int(m)), ki, mi)
             for ki, k in enumerate(kin) for mi, m in enumerate(music)
             if abs(int(k) - int(m)) <= tolerance]
    pairs.sort()
    used_k: set[int] = set()
    used_m: set[int] = set()
    matches = []
    for _, ki, mi in pairs:
        if ki in used_k or mi in used_m:
            continue
        used_k.add(ki)
        used_m.add(mi)
        matches.append((int(kin[ki]), int(music[mi])))
    return BeatAlignmentReport(kin, music, tolerance, matches)


@dataclass
class SignatureReport:
    rows: list[tuple[int, float]]  # (beat count, chi-square distance)
    final_distance: float


def signature_report(motif_stream, target: np.ndarray,
                     interval: int = 10) -> SignatureReport:
    """Chi-square distance to the target every `interval` beats, plus final."""
    target = np.asarray(target, dtype=float)
    stream = [int(m) for m in motif_stream]
    rows = []
    k = len(target)
    for n in range(interval, len(stream) + 1, interval):
        rows.append((n, chi_square(compute_signature(stream[:n], k), target)))
    if not stream:
        return SignatureReport([], float("nan"))
    final = chi_square(compute_signature(stream, k), target)
    if not rows or rows[-1][0] != len(stream):
        rows.append((len(stream), final))
    return SignatureReport(rows, final)


def aggregate_signature_reports(reports: list[SignatureReport]) -> SignatureReport:
    """Mean trace across runs (rows are aligned by beat count)."""
    if not reports:
        return SignatureReport([], float("nan"))
    counts = sorted({n for r in reports for n, _ in r.rows})
    by_run = [dict(r.rows) for r in reports]
    rows = [(n, float(np.mean([run[n] for run in by_run if n in run])))
            for n in counts]
    final = float(np.mean([r.final_distance for r in reports]))
    return SignatureReport(rows, final)
