"""PointDR training loop and the cross-entropy-only baseline.

One PointDR step per batch of scans:

1. weak and strong views of every scan, featurized on their own voxel grids;
2. one forward pass over the stacked weak and strong points;
3. cross-entropy on the weak logits;
4. class-averaged weak embeddings update the memory bank;
5. strong embeddings are contrasted against the bank;
6. backward of ``ce + lambda_ct * ct`` and an SGD step.

Per-scan augmentation seeds are derived from ``(seed, epoch, step, slot,
view)``, so a run is fully determined by its config and dataset.
"""

from __future__ import annotations

import io
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .augment import AugmentConfig, strong_view, weak_view
from .model import Model, featurize
from .pc_io import NUM_CLASSES
from .pointdr_core import (LossBreakdown, MemoryBank, bank_update, class_average,
                           combine, contrastive_loss, cross_entropy)

_WEAK, _STRONG = 0, 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1.4e-4
    dampening: float = 0.0
    epochs: int = 20
    batch_size: int = 2
    lambda_ct: float = 0.1
    tau: float = 0.07
    bank_momentum: float = 0.99
    use_memory_bank: bool = True
    schedule: str = "constant"
    poly_power: float = 0.9
    seed: int = 0
    hidden: tuple = (64, 64)
    embed_dim: int = 32
    voxel_size: float = 0.5
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.schedule not in ("constant", "poly"):
            raise ValueError(f"unknown lr schedule {self.schedule!r}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @classmethod
    def full_scale(cls, **kw) -> "TrainConfig":
        """Full-scale optimizer settings (50 epochs, batch 4, lr 0.24)."""
        base = dict(lr=0.24, epochs=50, batch_size=4)
        base.update(kw)
        return cls(**base)

    @classmethod
    def oracle(cls, **kw) -> "TrainConfig":
        base = dict(lr=0.1, weight_decay=1.0e-4, dampening=0.1, epochs=500, batch_size=4,
                    schedule="poly", lambda_ct=0.0)
        base.update(kw)
        return cls(**base)

    def baseline(self) -> "TrainConfig":
        """The CE-only configuration: no contrastive term, strong gates off."""
        return replace(self, lambda_ct=0.0, augment=self.augment.gates_off())

    def make_model(self, num_classes: int = NUM_CLASSES) -> Model:
        return Model(hidden=self.hidden, embed_dim=self.embed_dim, num_classes=num_classes,
                     seed=self.seed, voxel_size=self.voxel_size)

    def make_bank(self, num_classes: int = NUM_CLASSES) -> MemoryBank:
        return MemoryBank(self.embed_dim, num_classes, self.bank_momentum)


class SGD:
    """SGD with heavy-ball momentum and L2 weight decay added to the gradient.

    Dampening scales the gradient folded into the momentum buffer, except on
    the first step, where the buffer is the gradient itself.
    """

    def __init__(self, params, momentum=0.9, weight_decay=0.0, dampening=0.0):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.dampening = dampening
        self.velocity = [np.zeros_like(p) for p in params]
        self._started = False

    def step(self, grads, lr):
        scale = 1.0 - self.dampening if self._started else 1.0
        for p, g, v in zip(self.params, grads, self.velocity):
            d = g + self.weight_decay * p
            v *= self.momentum
            v += d if scale == 1.0 else scale * d
            p -= lr * v
        self._started = True


def lr_at(cfg: TrainConfig, t: int, total: int) -> float:
    if cfg.schedule == "constant" or total <= 0:
        return cfg.lr
    return cfg.lr * (1.0 - min(t, total) / total) ** cfg.poly_power


def scan_seed(seed, epoch, step, slot, view) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, epoch, step, slot, view])


def _views(batch, cfg: TrainConfig, seeds, strong: bool):
    weak, strong_ = [], []
    for scan, (sw, ss) in zip(batch, seeds):
        w = weak_view(scan, cfg.augment, sw)
        weak.append((featurize(w, voxel_size=cfg.voxel_size), w.labels))
        if strong:
            s, _ = strong_view(scan, cfg.augment, ss)
            strong_.append((featurize(s, voxel_size=cfg.voxel_size), s.labels))
    return weak, strong_


def _stack(pairs):
    return np.vstack([f for f, _ in pairs]), np.concatenate([lab for _, lab in pairs])


def pointdr_objective(model: Model, feats_w, labels_w, feats_s, labels_s, bank: MemoryBank,
                      lambda_ct: float = 0.1, tau: float = 0.07, use_memory_bank: bool = True,
                      update_bank: bool = True) -> LossBreakdown:
    """``ce(weak) + lambda_ct * ct(strong)``; accumulates parameter gradients.

    Weak and strong points share one forward pass. The class means of the
    weak embeddings refresh the bank (when ``update_bank``) before the strong
    embeddings are scored against it; keys never receive gradient. With
    ``use_memory_bank=False`` the in-batch weak class means serve as keys.
    """
    nw = feats_w.shape[0]
    f, logits = model.forward(np.vstack([feats_w, feats_s]))
    ce, g_ce = cross_entropy(logits[:nw], labels_w)
    grad_logits = np.zeros_like(logits)
    grad_logits[:nw] = g_ce

    means, present = class_average(f[:nw], labels_w, bank.B.shape[1])
    if use_memory_bank:
        if update_bank:
            bank_update(bank, means, present)
        keys, valid = bank.B, bank.initialized
    else:
        keys, valid = means, present
    ct, g_s = contrastive_loss(f[nw:], labels_s, keys, valid, tau)
    grad_f = np.zeros_like(f)
    grad_f[nw:] = lambda_ct * g_s
    model.backward(grad_f, grad_logits)
    return combine(ce, ct, lambda_ct)


def train_step(model: Model, bank: MemoryBank, batch, cfg: TrainConfig, opt: SGD,
               lr: float, seeds) -> LossBreakdown:
    """One PointDR update on ``batch``; ``seeds`` holds a (weak, strong) pair per scan.

    With ``lambda_ct == 0`` the contrastive branch cannot move the parameters,
    so it is skipped outright, leaving the bank untouched.
    """
    if not batch:
        raise ValueError("empty batch")
    model.zero_grad()
    if cfg.lambda_ct == 0.0:
        weak, _ = _views(batch, cfg, seeds, strong=False)
        feats, labels = _stack(weak)
        _, logits = model.forward(feats)
        ce, g = cross_entropy(logits, labels)
        model.backward(None, g)
        out = combine(ce, 0.0, 0.0)
    else:
        weak, strong = _views(batch, cfg, seeds, strong=True)
        out = pointdr_objective(model, *_stack(weak), *_stack(strong), bank,
                                cfg.lambda_ct, cfg.tau, cfg.use_memory_bank)
    opt.step(model.gradients(), lr)
    return out


def ce_train_step(model: Model, batch, cfg: TrainConfig, opt: SGD, lr: float,
                  seeds) -> LossBreakdown:
    """Plain supervised step: cross-entropy on weak views only."""
    if not batch:
        raise ValueError("empty batch")
    weak, _ = _views(batch, cfg, seeds, strong=False)
    feats, labels = _stack(weak)
    model.zero_grad()
    _, logits = model.forward(feats)
    ce, g = cross_entropy(logits, labels)
    model.backward(None, g)
    opt.step(model.gradients(), lr)
    return combine(ce, 0.0, 0.0)


@dataclass
class TrainResult:
    model: Model
    bank: MemoryBank
    curve: list
    steps: list

    def curve_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,ce,ct,total,lr\n")
        for row in self.curve:
            buf.write("{epoch},{ce:.8g},{ct:.8g},{total:.8g},{lr:.8g}\n".format(**row))
        return buf.getvalue()


def train(model: Model | None, cfg: TrainConfig, dataset, objective: str = "pointdr",
          bank: MemoryBank | None = None, log=None) -> TrainResult:
    """Epoch loop over ``dataset`` (a list of labelled scans).

    ``objective`` is ``"pointdr"`` or ``"ce"`` (the supervised baseline).
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty dataset")
    if objective not in ("pointdr", "ce"):
        raise ValueError(f"unknown objective {objective!r}")
    model = model or cfg.make_model()
    bank = bank or MemoryBank(model.embed_dim, model.num_classes, cfg.bank_momentum)
    opt = SGD(model.parameters(), cfg.momentum, cfg.weight_decay, cfg.dampening)
    n = len(dataset)
    per_epoch = -(-n // cfg.batch_size)
    total = per_epoch * cfg.epochs
    t = 0
    curve, steps = [], []
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        rows = []
        for step in range(per_epoch):
            idx = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            batch = [dataset[i] for i in idx]
            seeds = [(scan_seed(cfg.seed, epoch, step, k, _WEAK),
                      scan_seed(cfg.seed, epoch, step, k, _STRONG)) for k in range(len(batch))]
            lr = lr_at(cfg, t, total)
            if objective == "pointdr":
                out = train_step(model, bank, batch, cfg, opt, lr, seeds)
            else:
                out = ce_train_step(model, batch, cfg, opt, lr, seeds)
            rows.append((out.ce, out.ct, out.total))
            steps.append(out)
            t += 1
        ce, ct, tot = np.mean(rows, axis=0)
        row = {"epoch": epoch, "ce": ce, "ct": ct, "total": tot, "lr": lr}
        curve.append(row)
        if log is not None:
            log(row)
    return TrainResult(model, bank, curve, steps)


def predict_scan(model: Model, scan) -> np.ndarray:
    return model.predict(featurize(scan, voxel_size=model.voxel_size))


# ------------------------------------------------------------- config files

_TUPLE_KEYS = {"hidden"} | {f.name for f in fields(AugmentConfig)
                            if isinstance(getattr(AugmentConfig(), f.name), tuple)}


def _coerce(key, text, default):
    if key in _TUPLE_KEYS:
        kind = int if key in ("hidden", "noise_count_range") else float
        return tuple(kind(v) for v in text.replace(",", " ").split())
    if isinstance(default, bool):
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{key}: expected a boolean, got {text!r}")
        return low in ("true", "1", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_config(text: str) -> TrainConfig:
    """Parse flat ``key = value`` lines; augmentation keys are accepted too."""
    base, aug_base = TrainConfig(), AugmentConfig()
    top = {f.name for f in fields(TrainConfig)} - {"augment"}
    aug_keys = {f.name for f in fields(AugmentConfig)}
    kw, aug_kw = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in top:
            kw[key] = _coerce(key, value, getattr(base, key))
        elif key in aug_keys:
            aug_kw[key] = _coerce(key, value, getattr(aug_base, key))
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return TrainConfig(**kw, augment=AugmentConfig(**aug_kw))


def format_config(cfg: TrainConfig) -> str:
    lines = []
    d = asdict(cfg)
    aug = d.pop("augment")
    for k, v in list(d.items()) + list(aug.items()):
        if isinstance(v, (tuple, list)):
            v = " ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
