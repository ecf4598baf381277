"""BVH motion-capture text format: parsing and serialization.

Conventions: right-handed, Y-up, world units as labeled (centimeters by
default). Rotation channels are intrinsic Euler angles in degrees, composed in
per-joint channel order. Root translation channels are absolute positions and
are converted to per-frame displacements on parse (frame 0 keeps the absolute
start so accumulation reproduces the original path). Numeric fields are
written with 6 decimal places; `Frame Time:` is emitted as 1/fps.
"""

from __future__ import annotations

import numpy as np

from . import quat
from .core import Joint, MotionClip, Skeleton

_ROT_CHANNELS = {"xrotation": "x", "yrotation": "y", "zrotation": "z"}
_POS_CHANNELS = {"xposition": 0, "yposition": 1, "zposition": 2}


class BvhParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class _Lines:
    def __init__(self, text: str):
        self.raw = text.splitlines()
        self.pos = 0

    @property
    def line_no(self) -> int:
        return self.pos  # 1-based number of the last line returned

    def next(self) -> list[str]:
        while self.pos < len(self.raw):
            tokens = self.raw[self.pos].split()
            self.pos += 1
            if tokens:
                return tokens
        raise BvhParseError("unexpected end of file", len(self.raw))

    def peek(self) -> list[str] | None:
        save = self.pos
        try:
            tokens = self.next()
        except BvhParseError:
            return None
        self.pos = save
        return tokens


def _expect(lines: _Lines, keyword: str) -> list[str]:
    tokens = lines.next()
    if tokens[0].upper() != keyword.upper():
        raise BvhParseError(f"expected {keyword!r}, got {tokens[0]!r}", lines.line_no)
    return tokens


def _parse_offset(lines: _Lines) -> tuple[float, float, float]:
    tokens = _expect(lines, "OFFSET")
    if len(tokens) != 4:
        raise BvhParseError("OFFSET needs 3 values", lines.line_no)
    try:
        return tuple(float(v) for v in tokens[1:])  # type: ignore[return-value]
    except ValueError:
        raise BvhParseError("non-numeric OFFSET", lines.line_no) from None


def _parse_joint(lines: _Lines, name: str, parent: int, joints: list[Joint],
                 channels: list[tuple[int, list[str]]]) -> None:
    _expect(lines, "{")
    offset = _parse_offset(lines)
    tokens = _expect(lines, "CHANNELS")
    try:
        n_ch = int(tokens[1])
    except (IndexError, ValueError):
        raise BvhParseError("bad CHANNELS count", lines.line_no) from None
    ch_names = [c.lower() for c in tokens[2 : 2 + n_ch]]
    if len(ch_names) != n_ch:
        raise BvhParseError("CHANNELS count does not match channel list", lines.line_no)
    rot_order = "".join(_ROT_CHANNELS[c] for c in ch_names if c in _ROT_CHANNELS)
    if len(rot_order) != 3:
        raise BvhParseError(f"joint {name!r} needs exactly 3 rotation channels", lines.line_no)
    index = len(joints)
    joints.append(Joint(name, parent, offset, channel_order=rot_order.upper()))
    channels.append((index, ch_names))
    while True:
        tokens = lines.next()
        head = tokens[0].upper()
        if head == "JOINT":
            _parse_joint(lines, tokens[1], index, joints, channels)
        elif head == "END":
            _expect(lines, "{")
            end_offset = _parse_offset(lines)
            _expect(lines, "}")
            joints.append(Joint(f"{name}_end", index, end_offset, is_end_site=True))
        elif head == "}":
            return
        else:
            raise BvhParseError(f"unexpected token {tokens[0]!r} in joint block", lines.line_no)


def parse_bvh(text: str, units: str = "cm") -> MotionClip:
    """Parse BVH text into a MotionClip; raises BvhParseError with line numbers."""
    lines = _Lines(text)
    _expect(lines, "HIERARCHY")
    tokens = _expect(lines, "ROOT")
    joints: list[Joint] = []
    channels: list[tuple[int, list[str]]] = []
    _parse_joint(lines, tokens[1], -1, joints, channels)

    _expect(lines, "MOTION")
    tokens = _expect(lines, "Frames:")
    try:
        n_frames = int(tokens[1])
    except (IndexError, ValueError):
        raise BvhParseError("bad frame count", lines.line_no) from None
    tokens = lines.next()
    if [t.lower() for t in tokens[:2]] != ["frame", "time:"]:
        raise BvhParseError("expected 'Frame Time:' line", lines.line_no)
    try:
        frame_time = float(tokens[2])
    except (IndexError, ValueError):
        raise BvhParseError("bad frame time", lines.line_no) from None
    if frame_time <= 0:
        raise BvhParseError("frame time must be positive", lines.line_no)
    fps = float(round(1.0 / frame_time))

    skeleton = Skeleton(tuple(joints), fps=fps, units=units)
    total_channels = sum(len(ch) for _, ch in channels)
    root_pos = np.zeros((n_frames, 3))
    rotations = np.zeros((n_frames, skeleton.num_joints, 4))
    rot_slot = {node: slot for slot, node in enumerate(skeleton.rot_indices)}

    for f in range(n_frames):
        tokens = lines.next()
        if len(tokens) != total_channels:
            raise BvhParseError(
                f"motion row has {len(tokens)} values, expected {total_channels}", lines.line_no)
        try:
            values = np.array([float(v) for v in tokens])
        except ValueError:
            raise BvhParseError("non-numeric motion value", lines.line_no) from None
        cursor = 0
        for node, ch_names in channels:
            angles = []
            for ch in ch_names:
                v = values[cursor]
                cursor += 1
                if ch in _POS_CHANNELS:
                    if node == 0:
                        root_pos[f, _POS_CHANNELS[ch]] = v
                    # translations on non-root joints are ignored
                else:
                    angles.append(v)
            order = skeleton.joints[node].channel_order
            rotations[f, rot_slot[node]] = quat.from_euler_deg(np.array(angles), order)

    root_disp = np.diff(root_pos, axis=0, prepend=np.zeros((1, 3)))
    if n_frames:
        root_disp[0] = root_pos[0]
    return MotionClip(skeleton, root_disp, rotations, fps)


def _write_joint(skeleton: Skeleton, node: int, depth: int, out: list[str],
                 order: list[int]) -> None:
    j = skeleton.joints[node]
    indent = "  " * depth
    if j.is_end_site:
        out.append(f"{indent}End Site")
        out.append(f"{indent}{{")
        out.append(f"{indent}  OFFSET {j.offset[0]:.6f} {j.offset[1]:.6f} {j.offset[2]:.6f}")
        out.append(f"{indent}}}")
        return
    kind = "ROOT" if j.parent < 0 else "JOINT"
    out.append(f"{indent}{kind} {j.name}")
    out.append(f"{indent}{{")
    out.append(f"{indent}  OFFSET {j.offset[0]:.6f} {j.offset[1]:.6f} {j.offset[2]:.6f}")
    rot = " ".join(f"{c.upper()}rotation" for c in j.channel_order.lower())
    if j.parent < 0:
        out.append(f"{indent}  CHANNELS 6 Xposition Yposition Zposition {rot}")
    else:
        out.append(f"{indent}  CHANNELS 3 {rot}")
    order.append(node)
    for child in range(node + 1, skeleton.num_nodes):
        if skeleton.joints[child].parent == node:
            _write_joint(skeleton, child, depth + 1, out, order)
    out.append(f"{indent}}}")


def write_bvh(clip: MotionClip) -> str:
    """Serialize a MotionClip to BVH text."""
    skeleton = clip.skeleton
    out: list[str] = ["HIERARCHY"]
    order: list[int] = []
    _write_joint(skeleton, 0, 0, out, order)
    out.append("MOTION")
    out.append(f"Frames: {clip.num_frames}")
    out.append(f"Frame Time: {1.0 / clip.fps:.6f}")

    rot_slot = {node: slot for slot, node in enumerate(skeleton.rot_indices)}
    roots = clip.root_positions() if clip.num_frames else np.zeros((0, 3))
    for f in range(clip.num_frames):
        fields: list[float] = []
        for node in order:
            if node == 0:
                fields.extend(roots[f])
            angles = quat.to_euler_deg(clip.rotations[f, rot_slot[node]],
                                       skeleton.joints[node].channel_order)
            fields.extend(angles)
        out.append(" ".join(f"{v:.6f}" for v in fields))
    return "\n".join(out) + "\n"
