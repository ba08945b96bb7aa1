"""Synthetic adverse-weather corruptions used as held-out target domains.

These are distortion generators for a test harness, not sensor models:

* ``dense_fog`` / ``light_fog`` drop every point beyond a range cap.
* ``snow`` injects near-sensor clutter labelled INVALID and relabels part of
  the ground as INVALID (snow cover).
* ``rain`` drops part of the ground (specular loss on wet surfaces) and adds
  spurious low returns labelled IGNORED.

Injected points are appended after the surviving input points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pc_io import IGNORED, INVALID, PointCloud

MODES = ("dense_fog", "light_fog", "rain", "snow")

# road, parking, sidewalk, other-ground, terrain
GROUND_CLASSES = (8, 9, 10, 11, 16)

_DEFAULT_CAP = {"dense_fog": 30.0, "light_fog": 60.0}


@dataclass(frozen=True)
class WeatherConfig:
    mode: str
    fog_range_cap: float | None = None
    snow_noise_count: int = 1000
    snow_invalid_frac: float = 0.3
    snow_noise_radius: float = 8.0
    rain_ground_drop_frac: float = 0.3
    rain_noise_count: int = 300

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown weather mode {self.mode!r}")
        if self.fog_range_cap is None:
            object.__setattr__(self, "fog_range_cap", _DEFAULT_CAP.get(self.mode, 60.0))
        if not self.fog_range_cap > 0:
            raise ValueError("fog_range_cap must be positive")
        for name in ("snow_invalid_frac", "rain_ground_drop_frac"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.snow_noise_count < 0 or self.rain_noise_count < 0:
            raise ValueError("noise counts must be non-negative")
        if not self.snow_noise_radius > 0:
            raise ValueError("snow_noise_radius must be positive")


def point_range(xyz: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", xyz, xyz))


def _take_fraction(rng, idx: np.ndarray, frac: float) -> np.ndarray:
    k = int(round(frac * idx.size))
    return np.sort(rng.choice(idx, size=k, replace=False)) if k else idx[:0]


def _fog(x: PointCloud, cfg: WeatherConfig):
    keep = point_range(x.xyz) <= cfg.fog_range_cap
    return x.points[keep], x.labels[keep]


def _snow(x: PointCloud, cfg: WeatherConfig, rng):
    pts, labels = x.points.copy(), x.labels.copy()
    ground = np.flatnonzero(np.isin(labels, GROUND_CLASSES))
    labels[_take_fraction(rng, ground, cfg.snow_invalid_frac)] = INVALID

    k = cfg.snow_noise_count
    # flakes: uniform in a ball around the sensor, above the lowest return
    direction = rng.normal(size=(k, 3))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-12)
    radius = cfg.snow_noise_radius * rng.random(k) ** (1.0 / 3.0)
    flakes = np.empty((k, 4))
    flakes[:, :3] = direction * radius[:, None]
    if len(x):
        flakes[:, 2] = np.maximum(flakes[:, 2], x.xyz[:, 2].min())
    flakes[:, 3] = rng.uniform(0.0, 1.0, size=k)
    return np.vstack([pts, flakes]), np.concatenate([labels, np.full(k, INVALID)])


def _rain(x: PointCloud, cfg: WeatherConfig, rng):
    ground = np.flatnonzero(np.isin(x.labels, GROUND_CLASSES))
    drop = _take_fraction(rng, ground, cfg.rain_ground_drop_frac)
    keep = np.ones(len(x), dtype=bool)
    keep[drop] = False
    pts, labels = x.points[keep], x.labels[keep]

    k = cfg.rain_noise_count
    if len(x):
        lo, hi = x.xyz.min(axis=0), x.xyz.max(axis=0)
        if ground.size:
            zg = float(np.median(x.xyz[ground, 2]))
        else:
            zg = float(lo[2])
    else:
        lo = hi = np.zeros(3)
        zg = 0.0
    # spurious returns scattered just above and below the wet surface
    spray = np.empty((k, 4))
    spray[:, :2] = rng.uniform(lo[:2], hi[:2], size=(k, 2))
    spray[:, 2] = zg + rng.uniform(-0.5, 0.5, size=k)
    spray[:, 3] = rng.uniform(0.0, 1.0, size=k)
    return np.vstack([pts, spray]), np.concatenate([labels, np.full(k, IGNORED)])


def corrupt(x: PointCloud, cfg: WeatherConfig, seed=None) -> PointCloud:
    if x.labels is None:
        raise ValueError("corrupt needs a labelled point cloud")
    rng = np.random.default_rng(seed)
    if cfg.mode in ("dense_fog", "light_fog"):
        pts, labels = _fog(x, cfg)
    elif cfg.mode == "snow":
        pts, labels = _snow(x, cfg, rng)
    else:
        pts, labels = _rain(x, cfg, rng)
    return PointCloud(pts, labels, weather=cfg.mode)
