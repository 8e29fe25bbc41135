"""Perception providers: the synthetic oracle and the remote process hook."""

from .config import NoiseModel, SamplingPolicy, uniform_frame_indices
from .scene import (SceneFormatError, SceneObject, SceneSpec, load_scene, save_scene,
                    validate_scene_dict)
from .remote import RemoteProvider, provider_handler
from .synthetic import REFUSAL, InvalidSeedError, SyntheticProvider
from .tracking import ABSENT_TWICE, CAP_REACHED, END_OF_VIDEO, Tracklet, run_tracker

__all__ = [
    "NoiseModel",
    "SamplingPolicy",
    "uniform_frame_indices",
    "SceneFormatError",
    "SceneObject",
    "SceneSpec",
    "load_scene",
    "save_scene",
    "validate_scene_dict",
    "RemoteProvider",
    "provider_handler",
    "REFUSAL",
    "InvalidSeedError",
    "SyntheticProvider",
    "ABSENT_TWICE",
    "CAP_REACHED",
    "END_OF_VIDEO",
    "Tracklet",
    "run_tracker",
]
