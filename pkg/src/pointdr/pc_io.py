"""SemanticKITTI-format scan and label I/O.

Scans are ``.bin`` files of little-endian float32 ``(x, y, z, intensity)``
records. Labels are ``.label`` files of little-endian uint32 words whose lower
16 bits carry the semantic raw id and upper 16 bits the instance id.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

NUM_CLASSES = 19
INVALID = 19
IGNORED = 20

CLASS_NAMES = (
    "car", "bicycle", "motorcycle", "truck", "other-vehicle", "person",
    "bicyclist", "motorcyclist", "road", "parking", "sidewalk",
    "other-ground", "building", "fence", "vegetation", "trunk", "terrain",
    "pole", "traffic-sign",
)
ALL_NAMES = CLASS_NAMES + ("invalid", "ignored")

WEATHERS = ("clear", "dense_fog", "light_fog", "rain", "snow")

_SCAN_DTYPE = np.dtype("<f4")
_LABEL_DTYPE = np.dtype("<u4")


class FormatError(ValueError):
    """Malformed scan, label or label-map file."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def is_valid_train_id(labels) -> np.ndarray:
    labels = np.asarray(labels)
    return (labels >= 0) & (labels <= IGNORED)


@dataclass(frozen=True)
class PointCloud:
    """A LiDAR scan: ``points`` is ``(N, 4)`` ``x, y, z, intensity``.

    Arrays are copied and made read-only on construction.
    """

    points: np.ndarray
    labels: np.ndarray | None = None
    weather: str | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1 and pts.size == 0:
            pts = pts.reshape(0, 4)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ValueError(f"points must have shape (N, 4), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite values")
        object.__setattr__(self, "points", _frozen(pts))
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if lab.shape[0] != pts.shape[0]:
                raise ValueError(
                    f"{lab.shape[0]} labels for {pts.shape[0]} points")
            if not np.all(is_valid_train_id(lab)):
                raise ValueError("labels contain invalid train ids")
            object.__setattr__(self, "labels", _frozen(lab))
        if self.weather is not None and self.weather not in WEATHERS:
            raise ValueError(f"unknown weather tag {self.weather!r}")

    def __len__(self):
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def replace(self, **changes) -> "PointCloud":
        kw = {"points": self.points, "labels": self.labels,
              "weather": self.weather}
        kw.update(changes)
        return PointCloud(**kw)


@dataclass(frozen=True)
class LabelMap:
    """Raw semantic id to train id remapping.

    Unknown raw ids map to ``IGNORED``.
    """

    raw_to_train: dict = field(default_factory=dict)
    raw_names: dict = field(default_factory=dict)
    class_names: tuple = ALL_NAMES

    def __post_init__(self):
        for raw, tid in self.raw_to_train.items():
            if not 0 <= raw <= 0xFFFF:
                raise ValueError(f"raw id {raw} does not fit in 16 bits")
            if not 0 <= tid <= IGNORED:
                raise ValueError(f"raw id {raw} maps to bad train id {tid}")
        lut = np.full(0x10000, IGNORED, dtype=np.int64)
        for raw, tid in self.raw_to_train.items():
            lut[raw] = tid
        lut.setflags(write=False)
        object.__setattr__(self, "_lut", lut)
        # lowest raw id per train id, unmapped ids counting as IGNORED
        inverse = np.full(IGNORED + 1, -1, dtype=np.int64)
        for tid in range(IGNORED + 1):
            hits = np.flatnonzero(lut == tid)
            if hits.size:
                inverse[tid] = hits[0]
        inverse.setflags(write=False)
        object.__setattr__(self, "_train_to_raw", inverse)

    def remap(self, raw_ids) -> np.ndarray:
        raw_ids = np.asarray(raw_ids, dtype=np.int64) & 0xFFFF
        return self._lut[raw_ids]

    def canonical_raw(self, train_ids) -> np.ndarray:
        """Lowest raw id mapping to each train id."""
        train_ids = np.asarray(train_ids, dtype=np.int64)
        out = self._train_to_raw[train_ids]
        if np.any(out < 0):
            missing = sorted(set(train_ids[out < 0].tolist()))
            raise ValueError(f"no raw id maps to train ids {missing}")
        return out

    @classmethod
    def from_file(cls, path) -> "LabelMap":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read(), source=str(path))

    @classmethod
    def parse(cls, text: str, source: str = "<string>") -> "LabelMap":
        keywords = {"ignored": IGNORED, "invalid": INVALID}
        raw_to_train, raw_names = {}, {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 2)
            if len(parts) != 3:
                raise FormatError(f"{source}:{lineno}: expected 'raw_id train_id name'")
            raw_s, tid_s, name = parts
            try:
                raw = int(raw_s)
                tid = keywords[tid_s] if tid_s in keywords else int(tid_s)
            except (ValueError, KeyError):
                raise FormatError(f"{source}:{lineno}: bad id in {line!r}") from None
            if raw in raw_to_train:
                raise FormatError(f"{source}:{lineno}: duplicate raw id {raw}")
            if not 0 <= raw <= 0xFFFF or not 0 <= tid <= IGNORED:
                raise FormatError(f"{source}:{lineno}: id out of range in {line!r}")
            raw_to_train[raw] = tid
            raw_names[raw] = name
        return cls(raw_to_train, raw_names)

    @classmethod
    def semantickitti(cls) -> "LabelMap":
        return _default_map()


@functools.lru_cache(maxsize=1)
def _default_map() -> LabelMap:
    ref = resources.files("pointdr") / "data" / "semantickitti.map"
    return LabelMap.parse(ref.read_text(encoding="utf-8"), source="semantickitti.map")


def read_scan(path, weather: str | None = None) -> PointCloud:
    size = os.path.getsize(path)
    if size % 16:
        raise FormatError(f"{path}: size {size} is not a multiple of 16 bytes")
    data = np.fromfile(path, dtype=_SCAN_DTYPE).reshape(-1, 4)
    bad = ~np.isfinite(data).all(axis=1)
    if bad.any():
        raise FormatError(f"{path}: non-finite value at point {int(np.flatnonzero(bad)[0])}")
    return PointCloud(data.astype(np.float64), weather=weather)


def write_scan(cloud: PointCloud, path) -> None:
    np.ascontiguousarray(cloud.points, dtype=_SCAN_DTYPE).tofile(path)


def read_labels(path, label_map: LabelMap | None = None) -> np.ndarray:
    label_map = label_map or LabelMap.semantickitti()
    size = os.path.getsize(path)
    if size % 4:
        raise FormatError(f"{path}: size {size} is not a multiple of 4 bytes")
    words = np.fromfile(path, dtype=_LABEL_DTYPE)
    return label_map.remap(words.astype(np.int64) & 0xFFFF)


def write_labels(labels, path, label_map: LabelMap | None = None) -> None:
    label_map = label_map or LabelMap.semantickitti()
    labels = np.asarray(labels).reshape(-1)
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    labels = labels.astype(np.int64)
    bad = ~is_valid_train_id(labels)
    if bad.any():
        raise ValueError(f"invalid train id {int(labels[bad][0])}")
    label_map.canonical_raw(labels).astype(_LABEL_DTYPE).tofile(path)


def read_labeled_scan(scan_path, label_path, label_map=None, weather=None) -> PointCloud:
    cloud = read_scan(scan_path, weather=weather)
    labels = read_labels(label_path, label_map)
    if labels.shape[0] != len(cloud):
        raise FormatError(
            f"{label_path}: {labels.shape[0]} labels for {len(cloud)} points")
    return cloud.replace(labels=labels)
