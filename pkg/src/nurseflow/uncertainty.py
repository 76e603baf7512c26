"""Box uncertainty sets around demand sample paths.

Each available sample path (an L x T demand matrix) is surrounded by an
entry-wise interval of half-width epsilon, intersected with the nonnegative
demand support by default.  The robust model only ever needs the per-entry
bounds; the vertex enumerator exists as an independent test oracle,
exploiting that a linear function on a box peaks at a corner.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterator

import numpy as np

__all__ = [
    "SamplePathSet",
    "UncertaintyBox",
    "build_uncertainty_sets",
    "pin_day",
    "enumerate_vertices",
    "box_max_linear",
]

VERTEX_DIM_LIMIT = 20  # 2**20 corners is the most we ever enumerate


@dataclass(frozen=True)
class SamplePathSet:
    """A bundle of demand sample paths sharing one (L, T) shape."""

    paths: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.paths:
            object.__setattr__(self, "paths", ())
            return
        shape = np.asarray(self.paths[0]).shape
        frozen = []
        for p in self.paths:
            arr = np.asarray(p, dtype=float)
            if arr.shape != shape or arr.ndim != 2:
                raise ValueError("all sample paths must share one L x T shape")
            if np.any(arr < 0):
                raise ValueError("demand paths must be nonnegative")
            arr = arr.copy()
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "paths", tuple(frozen))

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def num_locations(self) -> int:
        return self.paths[0].shape[0]

    @property
    def horizon(self) -> int:
        return self.paths[0].shape[1]

    def subset(self, indices) -> "SamplePathSet":
        return SamplePathSet(tuple(self.paths[k] for k in indices))


@dataclass(frozen=True)
class UncertaintyBox:
    """Per-entry demand bounds, indexed [day, location].

    Standard construction (:func:`build_uncertainty_sets` with clipping)
    keeps ``0 <= lower``; the unclipped variant used by oracle-equality
    tests may carry negative lower bounds.
    """

    lower: np.ndarray
    upper: np.ndarray
    epsilon: float

    def __post_init__(self):
        lo = np.ascontiguousarray(np.asarray(self.lower, dtype=float))
        hi = np.ascontiguousarray(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 2:
            raise ValueError("bounds must be matching (T, L) matrices")
        if np.any(hi < lo):
            raise ValueError("need lower <= upper")
        if np.any(hi - lo > 2 * self.epsilon + 1e-12):
            raise ValueError("bound width cannot exceed 2 * epsilon")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def horizon(self) -> int:
        return self.lower.shape[0]

    @property
    def num_locations(self) -> int:
        return self.lower.shape[1]


def build_uncertainty_sets(
    samples: SamplePathSet, epsilon: float, clip_support: bool = True
) -> list[UncertaintyBox]:
    """One box of half-width epsilon per sample path.

    With ``clip_support`` (the default) lower bounds are cut at zero, i.e.
    the box is intersected with the nonnegative demand support.  Setting it
    False keeps the raw interval algebra for oracle-equality tests.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    boxes = []
    for path in samples.paths:
        center = path.T  # [day, location]
        lower = center - epsilon
        if clip_support:
            lower = np.maximum(lower, 0.0)
        boxes.append(UncertaintyBox(lower=lower, upper=center + epsilon, epsilon=float(epsilon)))
    return boxes


def pin_day(box: UncertaintyBox, day: int, value: np.ndarray) -> UncertaintyBox:
    """Collapse one (1-based) day of the box to an observed demand vector."""
    lo = np.array(box.lower)
    hi = np.array(box.upper)
    lo[day - 1] = value
    hi[day - 1] = value
    return UncertaintyBox(lower=lo, upper=hi, epsilon=box.epsilon)


def enumerate_vertices(box: UncertaintyBox) -> Iterator[np.ndarray]:
    """Yield every corner of the box as an (L, T) demand path.

    Dimensions where lower == upper are collapsed, so degenerate boxes yield
    few vertices.  Refuses boxes with more free entries than
    ``VERTEX_DIM_LIMIT`` to guard against the 2**(L*T) blow-up.
    """
    lo = box.lower
    hi = box.upper
    free = np.argwhere(hi - lo > 0)
    if len(free) > VERTEX_DIM_LIMIT:
        raise ValueError(
            f"box has {len(free)} free dimensions; refusing to enumerate more than {VERTEX_DIM_LIMIT}"
        )
    base = np.array(lo)
    if len(free) == 0:
        yield base.T.copy()
        return
    for picks in product((0, 1), repeat=len(free)):
        vertex = base.copy()
        for (t, l), hi_side in zip(free, picks):
            vertex[t, l] = hi[t, l] if hi_side else lo[t, l]
        yield vertex.T.copy()  # back to (L, T)


def box_max_linear(box: UncertaintyBox, coeffs: np.ndarray) -> float:
    """Closed-form max of sum(coeffs * zeta) over the box, coeffs shaped (T, L)."""
    pos = np.maximum(coeffs, 0.0)
    neg = np.maximum(-coeffs, 0.0)
    return float(np.sum(box.upper * pos) - np.sum(box.lower * neg))
