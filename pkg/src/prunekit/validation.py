"""Input validation helpers shared across the toolkit."""

from __future__ import annotations

import numpy as np


def as_frames(X, name="frames"):
    """Coerce to a 2-D float64 array of feature frames, rejecting NaN/Inf."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D (frames x features), got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or Inf")
    return X


def as_labels(y, n_classes=None, name="labels"):
    """Coerce to a 1-D int64 label vector, optionally range-checked."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got ndim={y.ndim}")
    if y.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.issubdtype(y.dtype, np.integer):
        rounded = np.rint(y)
        if not np.allclose(y, rounded):
            raise ValueError(f"{name} must be integer class indices")
        y = rounded
    y = y.astype(np.int64)
    if y.min() < 0:
        raise ValueError(f"{name} contains negative class indices")
    if n_classes is not None and y.max() >= n_classes:
        raise ValueError(
            f"{name} contains class {y.max()} but only {n_classes} classes exist"
        )
    return y


def frames_and_labels(corpus, require_labels=True):
    """Extract (frames, labels) from a FrameCorpus-like object or an (X, y) pair.

    Anything with ``.frames`` and ``.labels`` attributes is accepted, which keeps
    the network core decoupled from the corpus generator.  With
    ``require_labels=False`` a bare feature matrix is also accepted and the
    returned labels are None.
    """
    if hasattr(corpus, "frames") and hasattr(corpus, "labels"):
        return as_frames(corpus.frames), as_labels(corpus.labels)
    if isinstance(corpus, (tuple, list)) and len(corpus) == 2:
        return as_frames(corpus[0]), as_labels(corpus[1])
    if not require_labels:
        return as_frames(corpus), None
    raise TypeError(
        "expected a corpus with .frames/.labels or an (X, y) pair, "
        f"got {type(corpus).__name__}"
    )


def segments_of(corpus, n_frames):
    """Segment spans of a corpus, defaulting to one span covering everything."""
    segs = getattr(corpus, "segments", None)
    if segs is None:
        return [(0, n_frames)]
    out = []
    for a, b in segs:
        a, b = int(a), int(b)
        if not (0 <= a < b <= n_frames):
            raise ValueError(f"segment ({a}, {b}) out of range for {n_frames} frames")
        out.append((a, b))
    return out


def check_fraction(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
