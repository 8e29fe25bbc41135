"""Tracklet bookkeeping: stride, length cap and the consecutive-absence stop rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

__all__ = ["Tracklet", "CAP_REACHED", "ABSENT_TWICE", "END_OF_VIDEO", "run_tracker"]

CAP_REACHED = "cap_reached"
ABSENT_TWICE = "absent_twice"
END_OF_VIDEO = "end_of_video"


@dataclass
class Tracklet:
    object_ref: str
    category: str
    entries: list = field(default_factory=list)  # (frame, BBox2D)
    termination_reason: str = END_OF_VIDEO

    @property
    def frames(self) -> list:
        return [f for f, _ in self.entries]

    def __len__(self):
        return len(self.entries)

    def to_record(self) -> dict:
        return {
            "object_ref": self.object_ref,
            "category": self.category,
            "views": [{"frame": f, "bbox": b.to_list()} for f, b in self.entries],
            "termination_reason": self.termination_reason,
        }


def run_tracker(is_visible: Callable[[int], bool], seed_frame: int, frame_count: int,
                stride: int, cap: int, absence_limit: int) -> tuple:
    """Walk forward from ``seed_frame`` every ``stride`` frames.

    The seed frame is always kept. Returns ``(frames, reason)``.
    """
    if not 0 <= seed_frame < frame_count:
        raise ValueError(f"seed frame {seed_frame} outside video of {frame_count} frames")
    frames = [seed_frame]
    if len(frames) >= cap:
        return frames, CAP_REACHED
    absent = 0
    f = seed_frame + stride
    while f < frame_count:
        if is_visible(f):
            frames.append(f)
            absent = 0
            if len(frames) >= cap:
                return frames, CAP_REACHED
        else:
            absent += 1
            if absent >= absence_limit:
                return frames, ABSENT_TWICE
        f += stride
    return frames, END_OF_VIDEO
