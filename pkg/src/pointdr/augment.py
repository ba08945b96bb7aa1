"""Weak and strong geometric views of a scan.

The weak view rotates about Z and rescales. The strong view adds point
dropout, uniform noise points, an axis flip and coordinate jitter on top of
the weak view, each behind its own probability gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .pc_io import IGNORED, PointCloud

NOISE = -1


@dataclass(frozen=True)
class AugmentConfig:
    rotation_range: tuple = (0.0, 360.0)
    scale_range: tuple = (0.95, 1.05)
    dropout_prob: float = 0.5
    dropout_frac_range: tuple = (0.0, 0.20)
    noise_prob: float = 0.5
    noise_count_range: tuple = (0, 2000)
    flip_prob: float = 0.5
    jitter_prob: float = 0.5
    jitter_range: tuple = (-0.05, 0.05)

    def __post_init__(self):
        for name in ("rotation_range", "scale_range", "dropout_frac_range",
                     "noise_count_range", "jitter_range"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name}: upper bound below lower bound")
        for name in ("dropout_prob", "noise_prob", "flip_prob", "jitter_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        lo, hi = self.dropout_frac_range
        if lo < 0 or hi > 1:
            raise ValueError("dropout fractions must lie in [0, 1]")
        lo, hi = self.noise_count_range
        if lo < 0 or int(lo) != lo or int(hi) != hi:
            raise ValueError("noise counts must be non-negative integers")
        if self.scale_range[0] <= 0:
            raise ValueError("scale must be positive")

    def gates_off(self) -> "AugmentConfig":
        """Copy with every strong-view gate disabled."""
        return replace(self, dropout_prob=0.0, noise_prob=0.0,
                        flip_prob=0.0, jitter_prob=0.0)


def _check(x: PointCloud):
    if len(x) == 0:
        raise ValueError("cannot augment an empty point cloud")


def _weak(x: PointCloud, cfg: AugmentConfig, rng: np.random.Generator) -> PointCloud:
    theta = math.radians(rng.uniform(*cfg.rotation_range))
    scale = rng.uniform(*cfg.scale_range)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    pts = x.points.copy()
    pts[:, :3] = (pts[:, :3] @ rot.T) * scale
    return x.replace(points=pts)


def weak_view(x: PointCloud, cfg: AugmentConfig | None = None, seed=None) -> PointCloud:
    """Random rotation about Z followed by uniform scaling."""
    _check(x)
    cfg = cfg or AugmentConfig()
    return _weak(x, cfg, np.random.default_rng(seed))


def survivor_count(n: int, frac: float) -> int:
    """``ceil((1 - frac) * n)``, robust to float round-off at exact products."""
    return n - int(math.floor(frac * n + 1e-9))


def strong_view(x: PointCloud, cfg: AugmentConfig | None = None, seed=None):
    """Weak view plus gated dropout, noise, flip and jitter.

    Returns ``(cloud, correspondence)`` where ``correspondence[i]`` is the
    index in ``x`` of output point ``i``, or ``NOISE`` for injected points.
    The random stream starts with the weak-view draws, so with every gate
    closed the result equals ``weak_view(x, cfg, seed)``.
    """
    _check(x)
    cfg = cfg or AugmentConfig()
    rng = np.random.default_rng(seed)
    w = _weak(x, cfg, rng)
    pts = w.points.copy()
    labels = None if w.labels is None else w.labels.copy()
    index = np.arange(len(w))

    # gates and magnitudes are always drawn to keep the stream layout fixed
    do_drop = rng.random() < cfg.dropout_prob
    frac = rng.uniform(*cfg.dropout_frac_range)
    if do_drop:
        n = len(pts)
        keep = np.sort(rng.choice(n, size=survivor_count(n, frac), replace=False))
        pts, index = pts[keep], index[keep]
        if labels is not None:
            labels = labels[keep]

    do_noise = rng.random() < cfg.noise_prob
    lo, hi = cfg.noise_count_range
    k = int(rng.integers(int(lo), int(hi) + 1))
    if do_noise and k:
        bmin, bmax = w.xyz.min(axis=0), w.xyz.max(axis=0)
        noise = np.empty((k, 4))
        noise[:, :3] = rng.uniform(bmin, bmax, size=(k, 3))
        noise[:, 3] = rng.uniform(0.0, 1.0, size=k)
        pts = np.vstack([pts, noise])
        index = np.concatenate([index, np.full(k, NOISE)])
        if labels is not None:
            labels = np.concatenate([labels, np.full(k, IGNORED)])

    do_flip = rng.random() < cfg.flip_prob
    axis = int(rng.integers(2))
    if do_flip:
        pts[:, axis] = -pts[:, axis]

    do_jitter = rng.random() < cfg.jitter_prob
    if do_jitter:
        pts[:, :3] += rng.uniform(*cfg.jitter_range, size=(len(pts), 3))

    return w.replace(points=pts, labels=labels), index
