"""Scans, labels and the two augmented views.

Builds one procedural street scene, writes it in SemanticKITTI layout, reads
it back and draws a weak and a strong view from it.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from pointdr import (CLASS_NAMES, IGNORED, AugmentConfig, ToyBenchmark, generate_toy,
                     read_labels, read_scan, strong_view, weak_view, write_labels, write_scan)
from pointdr.augment import NOISE

scene = generate_toy("train", ToyBenchmark(n_train=1), seed=0)[0]
print(f"{len(scene)} points")
counts = np.bincount(scene.labels, minlength=len(CLASS_NAMES))
for c in np.flatnonzero(counts):
    print(f"  {CLASS_NAMES[c]:<14s} {counts[c]:4d}")

# %%
# A .bin scan is float32 (x, y, z, intensity) records; labels are uint32 words
# whose low 16 bits hold the raw SemanticKITTI class id.
with tempfile.TemporaryDirectory() as tmp:
    write_scan(scene, Path(tmp) / "000000.bin")
    write_labels(scene.labels, Path(tmp) / "000000.label")
    back = read_scan(Path(tmp) / "000000.bin")
    labels = read_labels(Path(tmp) / "000000.label")
print("float32 round trip max error:", np.abs(back.points - scene.points).max())
print("labels identical:", np.array_equal(labels, scene.labels))

# %%
# Weak view: rotation about z and a uniform rescale. Point count and labels
# stay put.
weak = weak_view(scene, AugmentConfig(), seed=1)
print("weak:", len(weak), "points, range ratio",
      np.round(np.linalg.norm(weak.xyz, axis=1)[:3] / np.linalg.norm(scene.xyz, axis=1)[:3], 4))

# %%
# Strong view: the weak view plus dropout, noise, flip and jitter, each behind
# a coin flip. The correspondence array maps every output point back to its
# source, with NOISE for injected points.
strong, corr = strong_view(scene, AugmentConfig(), seed=1)
print("strong:", len(strong), "points,", np.sum(corr == NOISE), "injected,",
      len(np.unique(corr[corr >= 0])), "originals kept")
print("injected points all IGNORED:", bool(np.all(strong.labels[corr == NOISE] == IGNORED)))

# With every gate closed the strong view is the weak view.
off = AugmentConfig().gates_off()
print("gates off, strong == weak:",
      np.array_equal(strong_view(scene, off, 1)[0].points, weak_view(scene, off, 1).points))
