"""Evaluation outputs: delimited traces with rendered figures beside them.

Each report writes a CSV, a PNG figure, and a summary JSON into the target
directory. All numbers in the figures come from the same rows as the CSV.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .core import MotionClip
from .evaluation import (BeatAlignmentReport, SignatureReport,
                         joint_speed_profile, smooth_speed)


def write_signature_report(report: SignatureReport, out_dir: str | Path,
                           label: str = "signature") -> dict:
    """Convergence trace: {label}.csv, {label}.png, {label}.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{label}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beat", "chi_square"])
        for beat, dist in report.rows:
            writer.writerow([beat, f"{dist:.9f}"])

    fig, ax = plt.subplots(figsize=(7, 4))
    if report.rows:
        beats = [r[0] for r in report.rows]
        dists = [r[1] for r in report.rows]
        ax.plot(beats, dists, marker="o", markersize=3, color="#b03030")
    ax.set_xlabel("beats generated")
    ax.set_ylabel("chi-square distance to target")
    ax.set_title("Signature convergence")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out / f"{label}.png", dpi=120)
    plt.close(fig)

    summary = {
        "final_distance": report.final_distance,
        "beats": report.rows[-1][0] if report.rows else 0,
        "csv": csv_path.name,
        "figure": f"{label}.png",
    }
    (out / f"{label}.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def write_beat_report(clip: MotionClip, report: BeatAlignmentReport,
                      out_dir: str | Path, sg_window: int = 9, sg_order: int = 3,
                      label: str = "beats") -> dict:
    """Beat alignment: speed curve CSV plus a figure marking both beat kinds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw = joint_speed_profile(clip)
    smoothed = smooth_speed(raw, sg_window, sg_order)
    csv_path = out / f"{label}.csv"
    kin_set = set(report.kinematic_beats.tolist())
    music_set = set(report.music_beats.tolist())
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "speed", "smoothed", "kinematic_beat", "music_beat"])
        for t in range(len(raw)):
            writer.writerow([t, f"{raw[t]:.6f}", f"{smoothed[t]:.6f}",
                             int(t in kin_set), int(t in music_set)])

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(raw, color="#88aa88", alpha=0.6, label="joint speed")
    ax.plot(smoothed, color="#3060b0", label="smoothed")
    for i, m in enumerate(report.music_beats):
        ax.axvline(m, color="#cc4444", linestyle="--", alpha=0.5,
                   label="music beat" if i == 0 else None)
    if len(report.kinematic_beats):
        ax.plot(report.kinematic_beats, smoothed[report.kinematic_beats], "k*",
                markersize=9, label="kinematic beat")
    ax.set_xlabel("frame")
    ax.set_ylabel("speed (units/frame)")
    ax.set_title(f"Beat alignment: {report.ratio_aligned:.1%} aligned "
                 f"(tolerance {report.tolerance} frame)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out / f"{label}.png", dpi=120)
    plt.close(fig)

    summary = {
        "num_kinematic_beats": int(len(report.kinematic_beats)),
        "num_music_beats": int(len(report.music_beats)),
        "ratio_kin_to_music": report.ratio_kin_to_music,
        "ratio_aligned": report.ratio_aligned,
        "tolerance_frames": report.tolerance,
        "csv": csv_path.name,
        "figure": f"{label}.png",
    }
    (out / f"{label}.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
