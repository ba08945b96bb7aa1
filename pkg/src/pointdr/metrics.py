"""Confusion-matrix IoU metrics and per-weather report tables."""

from __future__ import annotations

import io

import numpy as np

from .pc_io import CLASS_NAMES, NUM_CLASSES

WEATHER_HEADERS = {"dense_fog": "D-fog", "light_fog": "L-fog", "rain": "Rain",
                   "snow": "Snow", "clear": "Clear"}


class EvalReport:
    """Accumulates a ``C x C`` confusion matrix (rows ground truth)."""

    def __init__(self, num_classes: int = NUM_CLASSES, class_names=None):
        self.num_classes = num_classes
        self.class_names = tuple(class_names or CLASS_NAMES[:num_classes])
        self.confusion = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, predictions, labels):
        predictions = np.asarray(predictions).reshape(-1)
        labels = np.asarray(labels).reshape(-1)
        if predictions.shape != labels.shape:
            raise ValueError(
                f"{predictions.shape[0]} predictions for {labels.shape[0]} labels")
        C = self.num_classes
        keep = (labels >= 0) & (labels < C)
        pred = predictions[keep].astype(np.int64)
        if pred.size and (pred.min() < 0 or pred.max() >= C):
            raise ValueError("prediction outside the evaluation classes")
        self.confusion += np.bincount(labels[keep].astype(np.int64) * C + pred,
                                      minlength=C * C).reshape(C, C)
        return self

    def merge(self, other: "EvalReport") -> "EvalReport":
        if other.num_classes != self.num_classes:
            raise ValueError("class count mismatch")
        out = EvalReport(self.num_classes, self.class_names)
        out.confusion = self.confusion + other.confusion
        return out

    __add__ = merge

    @property
    def per_class_iou(self) -> np.ndarray:
        """IoU per class, NaN where the class never occurs."""
        tp = np.diag(self.confusion).astype(np.float64)
        denom = self.confusion.sum(0) + self.confusion.sum(1) - tp
        iou = np.full(self.num_classes, np.nan)
        defined = denom > 0
        iou[defined] = tp[defined] / denom[defined]
        return iou

    @property
    def miou(self) -> float:
        iou = self.per_class_iou
        if np.all(np.isnan(iou)):
            return float("nan")
        return float(np.nanmean(iou))


def accumulate(report: EvalReport, predictions, labels) -> None:
    report.accumulate(predictions, labels)


def merge_reports(reports) -> EvalReport:
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    out = EvalReport(reports[0].num_classes, reports[0].class_names)
    for r in reports:
        out = out.merge(r)
    return out


def _fmt(v, scale=100.0, digits=1):
    return "-" if np.isnan(v) else f"{v * scale:.{digits}f}"


class ReportTable:
    """Per-class IoU over all weathers plus per-weather mIoU columns."""

    def __init__(self, by_weather: dict):
        if not by_weather:
            raise ValueError("need at least one report")
        self.by_weather = dict(by_weather)
        self.overall = merge_reports(self.by_weather.values())

    @property
    def per_weather_miou(self) -> dict:
        return {w: r.miou for w, r in self.by_weather.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("class,iou\n")
        for name, v in zip(self.overall.class_names, self.overall.per_class_iou):
            buf.write(f"{name},{_fmt(v, 1.0, 6)}\n")
        buf.write("weather,miou\n")
        for w, v in self.per_weather_miou.items():
            buf.write(f"{w},{_fmt(v, 1.0, 6)}\n")
        buf.write(f"overall,{_fmt(self.overall.miou, 1.0, 6)}\n")
        return buf.getvalue()

    def to_text(self) -> str:
        names = list(self.overall.class_names)
        heads = [WEATHER_HEADERS.get(w, w) for w in self.by_weather]
        cols = names + heads + ["mIoU"]
        vals = [_fmt(v) for v in self.overall.per_class_iou]
        vals += [_fmt(v) for v in self.per_weather_miou.values()]
        vals.append(_fmt(self.overall.miou))
        width = [max(len(c), len(v)) for c, v in zip(cols, vals)]
        head = " ".join(c.rjust(w) for c, w in zip(cols, width))
        row = " ".join(v.rjust(w) for v, w in zip(vals, width))
        return head + "\n" + row + "\n"


def report(reports_by_weather: dict) -> ReportTable:
    return ReportTable(reports_by_weather)
