"""Canonical 15-joint skeleton, body-part partition and kinematic helpers.

Coordinates are meters, z up, the body initially facing +x with its left
side towards +y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientLengthError, ShapeError

JOINT_NAMES = (
    "pelvis",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
    "left_foot", "right_foot",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hand", "right_hand",
)
NUM_JOINTS = 15

PART_NAMES = ("left_leg", "right_leg", "torso", "left_arm", "right_arm")
NUM_PARTS = 5

_J = {n: i for i, n in enumerate(JOINT_NAMES)}


@dataclass(frozen=True)
class JointLayout:
    joint_names: tuple = JOINT_NAMES
    part_assignment: dict = field(default_factory=lambda: {
        0: (_J["left_hip"], _J["left_knee"], _J["left_ankle"], _J["left_foot"]),
        1: (_J["right_hip"], _J["right_knee"], _J["right_ankle"], _J["right_foot"]),
        2: (_J["pelvis"],),
        3: (_J["left_elbow"], _J["left_wrist"], _J["left_hand"]),
        4: (_J["right_elbow"], _J["right_wrist"], _J["right_hand"]),
    })

    def __post_init__(self):
        if len(self.joint_names) != NUM_JOINTS:
            raise ShapeError(f"layout needs {NUM_JOINTS} joints, got {len(self.joint_names)}")
        if sorted(self.part_assignment) != list(range(NUM_PARTS)):
            raise ShapeError("layout needs exactly 5 parts")
        flat = [j for p in range(NUM_PARTS) for j in self.part_assignment[p]]
        if sorted(flat) != list(range(NUM_JOINTS)):
            raise ShapeError("part index sets must be disjoint and cover all joints")

    def joints(self, part: int) -> tuple:
        return self.part_assignment[part]

    def part_dim(self, part: int) -> int:
        return 3 * len(self.part_assignment[part])

    @property
    def part_dims(self) -> list[int]:
        return [self.part_dim(p) for p in range(NUM_PARTS)]


DEFAULT_LAYOUT = JointLayout()


@dataclass(frozen=True)
class MotionSequence:
    fps: int
    frames: np.ndarray  # (T, 15, 3)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[1:] != (NUM_JOINTS, 3):
            raise ShapeError(f"frames must be T x 15 x 3, got {frames.shape}")
        if frames.shape[0] < 1:
            raise ShapeError("a motion sequence needs at least one frame")
        if not np.all(np.isfinite(frames)):
            raise ShapeError("frames contain non-finite coordinates")
        if int(self.fps) != self.fps or self.fps <= 0:
            raise ShapeError(f"fps must be a positive integer, got {self.fps}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", int(self.fps))

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return self.num_frames / self.fps

    def __eq__(self, other):
        if not isinstance(other, MotionSequence):
            return NotImplemented
        return self.fps == other.fps and np.array_equal(self.frames, other.frames)

    __hash__ = None


@dataclass(frozen=True)
class PartVector:
    part_id: int
    values: np.ndarray


def partition_frame(frame, layout: JointLayout = DEFAULT_LAYOUT) -> list[PartVector]:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (NUM_JOINTS, 3):
        raise ShapeError(f"frame must be 15 x 3, got {frame.shape}")
    return [PartVector(p, frame[list(layout.joints(p))].reshape(-1).copy())
            for p in range(NUM_PARTS)]


def assemble_frame(parts, layout: JointLayout = DEFAULT_LAYOUT) -> np.ndarray:
    if len(parts) != NUM_PARTS:
        raise ShapeError(f"expected 5 part vectors, got {len(parts)}")
    frame = np.empty((NUM_JOINTS, 3))
    for p, pv in enumerate(parts):
        if pv.part_id != p:
            raise ShapeError(f"part vector {p} carries part_id {pv.part_id}; parts must be in canonical order")
        vals = np.asarray(pv.values, dtype=np.float64)
        if vals.shape != (layout.part_dim(p),):
            raise ShapeError(f"part {PART_NAMES[p]} expects {layout.part_dim(p)} values, got {vals.shape}")
        frame[list(layout.joints(p))] = vals.reshape(-1, 3)
    return frame


def split_parts(frames, layout: JointLayout = DEFAULT_LAYOUT) -> list[np.ndarray]:
    """Vectorised partition: (N, 15, 3) -> five (N, part_dim) arrays."""
    frames = np.asarray(frames, dtype=np.float64)
    n = frames.shape[0]
    return [frames[:, list(layout.joints(p))].reshape(n, -1) for p in range(NUM_PARTS)]


def join_parts(part_arrays, layout: JointLayout = DEFAULT_LAYOUT) -> np.ndarray:
    n = part_arrays[0].shape[0]
    frames = np.empty((n, NUM_JOINTS, 3))
    for p, arr in enumerate(part_arrays):
        frames[:, list(layout.joints(p))] = np.asarray(arr).reshape(n, -1, 3)
    return frames


def finite_diff(seq: MotionSequence, order: int = 1) -> np.ndarray:
    """Forward differences scaled by fps; order 2 applies order 1 twice."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if seq.num_frames <= order:
        raise InsufficientLengthError(f"need more than {order} frames, got {seq.num_frames}")
    out = seq.frames
    for _ in range(order):
        out = (out[1:] - out[:-1]) * seq.fps
    return out


def root_center(seq: MotionSequence) -> tuple[MotionSequence, np.ndarray]:
    """Translate every frame so the pelvis sits at the origin.

    Returns the centered sequence and the original (T, 3) pelvis track.
    """
    root = seq.frames[:, 0, :].copy()
    centered = seq.frames - root[:, None, :]
    return MotionSequence(seq.fps, centered), root
