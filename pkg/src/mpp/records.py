"""Discretised trajectories and their diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class PathRecord:
    """A sampled trajectory on a manifold.

    ``points[k]`` is the position at ``t[k]``.  The remaining arrays are
    optional per-step diagnostics: the transported frame, the velocity in
    frame components (``v``), the strict upper triangle of chi, the first
    integral ``c``, cumulative path energy and Riemannian speed.
    """

    t: np.ndarray
    points: np.ndarray
    frames: np.ndarray | None = None
    v: np.ndarray | None = None
    chi: np.ndarray | None = None
    c: np.ndarray | None = None
    energy: np.ndarray | None = None
    speed: np.ndarray | None = None
    manifold: object = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def endpoint(self):
        return self.points[-1]

    @property
    def T(self):
        return float(self.t[-1] - self.t[0])

    @property
    def chi_end(self):
        return None if self.chi is None else self.chi[-1]

    def first_integral_drift(self):
        """max_t |c(t) - c(0)| / c(0)."""
        if self.c is None:
            return float("nan")
        c0 = self.c[0]
        return float(np.max(np.abs(self.c - c0)) / c0) if c0 > 0 else float(np.max(np.abs(self.c)))


def sup_distance(a: PathRecord | np.ndarray, b: PathRecord | np.ndarray) -> float:
    """Max pointwise ambient distance between two equally sampled paths."""
    pa = a.points if isinstance(a, PathRecord) else np.asarray(a)
    pb = b.points if isinstance(b, PathRecord) else np.asarray(b)
    if pa.shape != pb.shape:
        raise ValueError(f"paths sampled differently: {pa.shape} vs {pb.shape}")
    return float(np.max(np.linalg.norm(pa - pb, axis=-1)))
