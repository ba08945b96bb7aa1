"""Procedural street scenes with per-point labels.

Each scene is a road corridor seen from a sensor at the origin: a ground
plane split into road, sidewalk and terrain, box vehicles on the road,
building facades behind the sidewalks, trees (trunk + canopy), bushes, and
poles carrying traffic signs. Surfaces are sampled densely and then thinned
with a ``1 / r**2`` keep probability so the point density falls off with
range the way a spinning LiDAR's does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pc_io import PointCloud

CAR, ROAD, SIDEWALK, BUILDING, VEGETATION, TRUNK, TERRAIN, POLE, SIGN = (
    0, 8, 10, 12, 14, 15, 16, 17, 18)

SENSOR_HEIGHT = 1.7

# mean, spread of the return intensity per class
_INTENSITY = {
    CAR: (0.55, 0.15), ROAD: (0.15, 0.08), SIDEWALK: (0.3, 0.1),
    BUILDING: (0.4, 0.12), VEGETATION: (0.35, 0.15), TRUNK: (0.25, 0.1),
    TERRAIN: (0.35, 0.12), POLE: (0.5, 0.12), SIGN: (0.8, 0.1),
}


@dataclass(frozen=True)
class ToyBenchmark:
    n_train: int = 64
    n_val: int = 8
    extent: float = 45.0
    road_half_width: float = 4.0
    sidewalk_width: float = 2.5
    vehicles: tuple = (2, 6)
    buildings: tuple = (2, 5)
    trees: tuple = (3, 8)
    bushes: tuple = (2, 6)
    poles: tuple = (2, 5)
    points_per_scan: int = 900
    reference_range: float = 8.0

    def __post_init__(self):
        for name in ("vehicles", "buildings", "trees", "bushes", "poles"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name}: bad count range {(lo, hi)}")
        if self.points_per_scan < 1 or self.extent <= 0:
            raise ValueError("points_per_scan and extent must be positive")


# seeds for the two splits come from disjoint spawn keys
_SPLIT_KEY = {"train": 0, "val": 1}


def generate_toy(split: str, cfg: ToyBenchmark | None = None, seed: int = 0) -> list:
    cfg = cfg or ToyBenchmark()
    if split not in _SPLIT_KEY:
        raise ValueError(f"split must be 'train' or 'val', got {split!r}")
    n = cfg.n_train if split == "train" else cfg.n_val
    root = np.random.SeedSequence(seed, spawn_key=(_SPLIT_KEY[split],))
    return [generate_scene(cfg, np.random.default_rng(s)) for s in root.spawn(n)]


def _count(rng, bounds):
    lo, hi = bounds
    return int(rng.integers(lo, hi + 1))


def _box_surface(rng, center, size, yaw, n):
    """Uniform samples on the sides and top of an axis box rotated by ``yaw``."""
    lx, ly, lz = size
    faces = np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly])
    face = rng.choice(5, size=n, p=faces / faces.sum())
    u = rng.uniform(-0.5, 0.5, size=(n, 3)) * size
    u[face == 0, 0], u[face == 1, 0] = lx / 2, -lx / 2
    u[face == 2, 1], u[face == 3, 1] = ly / 2, -ly / 2
    u[face == 4, 2] = lz / 2
    c, s = np.cos(yaw), np.sin(yaw)
    xy = u[:, :2] @ np.array([[c, s], [-s, c]])
    return np.column_stack([xy, u[:, 2]]) + center


def _cylinder(rng, base, radius, height, n):
    a = rng.uniform(0, 2 * np.pi, n)
    z = rng.uniform(0, height, n)
    return np.column_stack([base[0] + radius * np.cos(a), base[1] + radius * np.sin(a),
                            base[2] + z])


def _blob(rng, center, radii, n):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = rng.uniform(0.6, 1.0, size=(n, 1))
    return center + d * r * radii


def generate_scene(cfg: ToyBenchmark, rng: np.random.Generator) -> PointCloud:
    ground_z = -SENSOR_HEIGHT
    R = cfg.extent
    w_road, w_side = cfg.road_half_width, cfg.sidewalk_width
    parts = []

    def add(xyz, label):
        parts.append((np.asarray(xyz, dtype=np.float64).reshape(-1, 3), label))

    # ground: dense uniform in a disc, classified by lateral offset
    n = 40000
    r = R * np.sqrt(rng.random(n))
    a = rng.uniform(0, 2 * np.pi, n)
    gx, gy = r * np.cos(a), r * np.sin(a)
    gz = ground_z + rng.normal(0, 0.02, n)
    ay = np.abs(gy)
    curb = (ay > w_road) & (ay <= w_road + w_side)
    gz[curb] += 0.15
    ground = np.column_stack([gx, gy, gz])
    add(ground[ay <= w_road], ROAD)
    add(ground[curb], SIDEWALK)
    add(ground[ay > w_road + w_side], TERRAIN)

    for _ in range(_count(rng, cfg.vehicles)):
        size = np.array([rng.uniform(3.8, 4.8), rng.uniform(1.6, 2.0), rng.uniform(1.3, 1.7)])
        lane = rng.choice([-1.0, 1.0]) * w_road / 2
        x = rng.uniform(-R * 0.8, R * 0.8)
        if abs(x) < 3.0:
            x += np.sign(x + 1e-9) * 3.0
        center = np.array([x, lane + rng.normal(0, 0.2), ground_z + size[2] / 2 + 0.15])
        add(_box_surface(rng, center, size, rng.normal(0, 0.08), 1500), CAR)

    for _ in range(_count(rng, cfg.buildings)):
        side = rng.choice([-1.0, 1.0])
        y0 = side * (w_road + w_side + rng.uniform(2.0, 6.0))
        length, height = rng.uniform(8, 20), rng.uniform(4, 12)
        x0 = rng.uniform(-R * 0.8, R * 0.8)
        m = 3000
        facade = np.column_stack([x0 + rng.uniform(-length / 2, length / 2, m),
                                  y0 + rng.normal(0, 0.05, m),
                                  ground_z + rng.uniform(0, height, m)])
        add(facade, BUILDING)

    def verge_point():
        side = rng.choice([-1.0, 1.0])
        return np.array([rng.uniform(-R * 0.8, R * 0.8),
                         side * (w_road + w_side + rng.uniform(0.5, 8.0)), ground_z])

    for _ in range(_count(rng, cfg.trees)):
        base = verge_point()
        trunk_h = rng.uniform(1.5, 3.0)
        add(_cylinder(rng, base, rng.uniform(0.15, 0.3), trunk_h, 400), TRUNK)
        crown = rng.uniform(1.5, 3.0)
        add(_blob(rng, base + [0, 0, trunk_h + crown * 0.8], np.array([crown, crown, crown * 0.8]),
                  1500), VEGETATION)

    for _ in range(_count(rng, cfg.bushes)):
        base = verge_point()
        size = rng.uniform(0.6, 1.5)
        add(_blob(rng, base + [0, 0, size * 0.5], np.array([size * 1.5, size * 1.5, size * 0.7]),
                  800), VEGETATION)

    for _ in range(_count(rng, cfg.poles)):
        side = rng.choice([-1.0, 1.0])
        base = np.array([rng.uniform(-R * 0.8, R * 0.8),
                         side * (w_road + rng.uniform(0.3, w_side - 0.3)), ground_z + 0.15])
        h = rng.uniform(3.0, 6.0)
        add(_cylinder(rng, base, 0.08, h, 400), POLE)
        plate = base + [0, 0, h]
        add(_box_surface(rng, plate, np.array([0.08, 0.8, 0.6]), 0.0, 300), SIGN)

    xyz = np.vstack([p for p, _ in parts])
    labels = np.concatenate([np.full(len(p), lab) for p, lab in parts])

    dist = np.sqrt(np.einsum("ij,ij->i", xyz, xyz))
    keep = rng.random(len(xyz)) < np.minimum(1.0, (cfg.reference_range / np.maximum(dist, 1e-6)) ** 2)
    keep &= dist > 2.0
    idx = np.flatnonzero(keep)
    if idx.size > cfg.points_per_scan:
        idx = np.sort(rng.choice(idx, size=cfg.points_per_scan, replace=False))
    xyz, labels = xyz[idx], labels[idx]

    mu = np.array([_INTENSITY[int(c)][0] for c in labels])
    sd = np.array([_INTENSITY[int(c)][1] for c in labels])
    intensity = np.clip(mu + sd * rng.normal(size=len(labels)), 0.0, 1.0)
    return PointCloud(np.column_stack([xyz, intensity]), labels, weather="clear")
