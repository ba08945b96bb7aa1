"""Synthetic adverse weather.

Four corruptions stand in for target domains: a short and a long range cap
for dense and light fog, ground dropout plus stray returns for rain, and
near-sensor flakes plus unreadable ground for snow.
"""

# %%
import numpy as np

from pointdr import IGNORED, INVALID, ToyBenchmark, WeatherConfig, corrupt, generate_toy
from pointdr.weather import GROUND_CLASSES, MODES, point_range

scene = generate_toy("val", ToyBenchmark(n_val=1), seed=3)[0]
ground = np.isin(scene.labels, GROUND_CLASSES).sum()
print(f"clear: {len(scene)} points, {ground} ground, max range {point_range(scene.xyz).max():.1f} m")

# %%
for mode in MODES:
    out = corrupt(scene, WeatherConfig(mode), seed=0)
    print(f"{mode:<10s} {len(out):5d} points  "
          f"max range {point_range(out.xyz).max():5.1f} m  "
          f"invalid {np.sum(out.labels == INVALID):4d}  ignored {np.sum(out.labels == IGNORED):4d}  "
          f"tag {out.weather}")

# %%
# Presets are only defaults; a 10 m fog keeps just the points near the sensor.
thick = corrupt(scene, WeatherConfig("dense_fog", fog_range_cap=10.0), seed=0)
print("10 m fog keeps", len(thick), "of", len(scene), "points")
