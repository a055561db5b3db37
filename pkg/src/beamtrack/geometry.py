"""Axis-aligned boxes, segment blockage and ray casting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# overlap shorter than this (meters) counts as touching, not crossing
_TOUCH_EPS = 1e-9


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(h <= l for l, h in zip(lo, hi)):
            raise ValueError(f"degenerate box lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def around(cls, center, size) -> "Box":
        c = np.asarray(center, float)
        h = np.asarray(size, float) / 2
        return cls(tuple(c - h), tuple(c + h))

    def contains(self, p, strict: bool = True) -> bool:
        p = np.asarray(p, float)
        lo, hi = np.array(self.lo), np.array(self.hi)
        if strict:
            return bool(np.all(p > lo) and np.all(p < hi))
        return bool(np.all(p >= lo) and np.all(p <= hi))

    def footprint_overlaps(self, other: "Box", margin: float = 0.0) -> bool:
        return all(
            self.lo[k] - margin < other.hi[k] and other.lo[k] < self.hi[k] + margin for k in (0, 1)
        )

    def translated(self, v) -> "Box":
        v = np.asarray(v, float)
        return Box(tuple(np.array(self.lo) + v), tuple(np.array(self.hi) + v))


def segment_box_overlap(p1, p2, box: Box) -> float:
    """Length of the part of segment p1->p2 inside the open box interior."""
    p1 = np.asarray(p1, float)
    d = np.asarray(p2, float) - p1
    t0, t1 = 0.0, 1.0
    for k in range(3):
        lo, hi = box.lo[k], box.hi[k]
        if d[k] == 0.0:
            if not (lo < p1[k] < hi):
                return 0.0
            continue
        a = (lo - p1[k]) / d[k]
        b = (hi - p1[k]) / d[k]
        if a > b:
            a, b = b, a
        t0 = max(t0, a)
        t1 = min(t1, b)
        if t1 <= t0:
            return 0.0
    return (t1 - t0) * float(np.linalg.norm(d))


def los_blocked(p1, p2, boxes) -> bool:
    """True iff the open segment p1->p2 crosses the interior of any box.

    Grazing a face, edge or corner does not block.
    """
    return any(segment_box_overlap(p1, p2, b) > _TOUCH_EPS for b in boxes)


def cast_rays(origin, directions: np.ndarray, boxes, max_range: float) -> np.ndarray:
    """Distance to the nearest box surface along each unit direction.

    Returns an array of shape (n,) with ``inf`` where nothing is hit within
    ``max_range``. Origins inside a box hit that box's inner walls.
    """
    o = np.asarray(origin, float)
    D = np.asarray(directions, float)
    best = np.full(D.shape[0], np.inf)
    if not boxes:
        return best
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / D
        for box in boxes:
            lo = (np.array(box.lo) - o) * inv
            hi = (np.array(box.hi) - o) * inv
            # zero direction components: slab is either everything or nothing
            zero = D == 0.0
            inside = (np.array(box.lo) <= o) & (o <= np.array(box.hi))
            tmin = np.where(zero, np.where(inside, -np.inf, np.inf), np.minimum(lo, hi))
            tmax = np.where(zero, np.where(inside, np.inf, -np.inf), np.maximum(lo, hi))
            t_enter = tmin.max(axis=1)
            t_exit = tmax.min(axis=1)
            hit = t_exit >= np.maximum(t_enter, 0.0)
            t = np.where(t_enter > 0.0, t_enter, t_exit)
            t = np.where(hit & (t > 0.0), t, np.inf)
            best = np.minimum(best, t)
    best[best > max_range] = np.inf
    return best


def unit(v) -> np.ndarray:
    v = np.asarray(v, float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero-length vector")
    return v / n
