from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .._validation import check_positive, check_probability

__all__ = ["SamplingPolicy", "NoiseModel", "uniform_frame_indices"]


@dataclass(frozen=True)
class SamplingPolicy:
    """Frame budgets for the perception tools."""

    detection_frames: int = 64
    query_frames: int = 32
    tracking_fps: float = 2.0
    tracking_cap: int = 50
    absence_limit: int = 2

    def __post_init__(self):
        for name in ("detection_frames", "query_frames", "tracking_cap", "absence_limit"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        check_positive(self.tracking_fps, "tracking_fps")

    def tracking_stride(self, video_fps: float) -> int:
        return max(1, int(round(video_fps / self.tracking_fps)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class NoiseModel:
    """Corruptions applied by the synthetic provider; all-zero means oracle output."""

    center_sigma: float = 0.0
    box_jitter_sigma: float = 0.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0

    def __post_init__(self):
        check_positive(self.center_sigma, "center_sigma", strict=False)
        check_positive(self.box_jitter_sigma, "box_jitter_sigma", strict=False)
        check_probability(self.miss_rate, "miss_rate")
        check_probability(self.false_positive_rate, "false_positive_rate")

    @property
    def is_noiseless(self) -> bool:
        return not any(asdict(self).values())

    def to_dict(self) -> dict:
        return asdict(self)


def uniform_frame_indices(frame_count: int, n: int) -> np.ndarray:
    """``n`` evenly spaced frame indices (all frames when the video is shorter)."""
    if frame_count <= n:
        return np.arange(frame_count)
    return (np.arange(n) * frame_count) // n
