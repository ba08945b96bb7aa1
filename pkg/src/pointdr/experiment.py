"""Clean-to-adverse-weather generalization on the toy benchmark.

Train on clean procedural scenes, then score on the clean validation scenes
and on weather-corrupted copies of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import EvalReport, ReportTable
from .model import Model
from .toy import ToyBenchmark, generate_toy
from .trainer import TrainConfig, predict_scan, train
from .weather import MODES, WeatherConfig, corrupt


def evaluate(model: Model, scans) -> ReportTable:
    """Per-weather reports for ``scans`` (grouped by their weather tag)."""
    by_weather = {}
    for scan in scans:
        rep = by_weather.setdefault(scan.weather or "clear", EvalReport(model.num_classes))
        rep.accumulate(predict_scan(model, scan), scan.labels)
    return ReportTable(by_weather)


def corrupted_split(scans, seed: int = 0, modes=MODES) -> list:
    out = []
    for mode in modes:
        cfg = WeatherConfig(mode)
        for i, scan in enumerate(scans):
            out.append(corrupt(scan, cfg, np.random.SeedSequence([seed, i, MODES.index(mode)])))
    return out


@dataclass
class Comparison:
    seed: int
    pointdr_clean: float
    pointdr_adverse: float
    baseline_clean: float
    baseline_adverse: float
    pointdr_table: ReportTable
    baseline_table: ReportTable

    @property
    def adverse_gain(self) -> float:
        return self.pointdr_adverse - self.baseline_adverse

    @property
    def clean_drop(self) -> float:
        return self.baseline_clean - self.pointdr_clean


def compare(seed: int, cfg: TrainConfig | None = None, bench: ToyBenchmark | None = None,
            log=None) -> Comparison:
    """Train PointDR and the CE baseline from the same init and data."""
    cfg = cfg or TrainConfig()
    cfg = TrainConfig(**{**cfg.__dict__, "seed": seed})
    bench = bench or ToyBenchmark()
    train_set = generate_toy("train", bench, seed)
    val = generate_toy("val", bench, seed)
    adverse = corrupted_split(val, seed)

    base_cfg = cfg.baseline()
    res_p = train(cfg.make_model(), cfg, train_set, "pointdr", log=log)
    res_b = train(base_cfg.make_model(), base_cfg, train_set, "ce", log=log)

    clean_p, clean_b = evaluate(res_p.model, val), evaluate(res_b.model, val)
    adv_p, adv_b = evaluate(res_p.model, adverse), evaluate(res_b.model, adverse)
    return Comparison(seed, clean_p.overall.miou, adv_p.overall.miou,
                      clean_b.overall.miou, adv_b.overall.miou, adv_p, adv_b)
