"""Input validation helpers shared by the estimators and kernels."""

import numbers

import numpy as np
from sklearn.utils import check_array


def check_points(X, *, min_points=1, name="X"):
    """Validate an array of 3D points and return it as a float64 (n, 3) array."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=0, input_name=name)
    if X.shape[1] != 3:
        raise ValueError(f"{name} must have 3 columns, got {X.shape[1]}")
    if X.shape[0] < min_points:
        raise ValueError(
            f"{name} needs at least {min_points} points, got {X.shape[0]}"
        )
    return X


def check_vec3(v, name="point"):
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have exactly 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components: {arr.tolist()}")
    return arr


def check_frames(frames, n_samples):
    frames = np.asarray(frames)
    if frames.shape != (n_samples,):
        raise ValueError(
            f"frames must have shape ({n_samples},), got {frames.shape}"
        )
    if frames.size and not np.issubdtype(frames.dtype, np.integer):
        if not np.all(np.equal(np.mod(frames, 1), 0)):
            raise ValueError("frames must be integer frame indices")
        frames = frames.astype(np.int64)
    if frames.size and frames.min() < 0:
        raise ValueError("frame indices must be non-negative")
    return frames.astype(np.int64)


def check_positive(value, name, *, strict=True):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    if strict and not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_probability(value, name):
    value = check_positive(value, name, strict=False)
    if value > 1:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
