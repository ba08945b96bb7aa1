"""Voxel-context point encoder with a projector head and a linear classifier.

All layers are plain numpy with hand-written backward passes. The network is
applied point-wise; local geometric context enters only through the voxel
statistics computed by :func:`featurize`.
"""

from __future__ import annotations

import struct

import numpy as np

from .pc_io import NUM_CLASSES, PointCloud

NORM_EPS = 1e-12

_STATS = ("log_occupancy", "height_above_min", "extent_z", "spread_xy", "spread_z")
# context scales as multiples of the base voxel size
CONTEXT_SCALES = (1, 4, 8)

FEATURE_NAMES = (
    ("height", "intensity", "range", "dx", "dy", "dz",
     "centroid_x", "centroid_y", "centroid_z")
    + tuple(f"{name}@{k}" for k in CONTEXT_SCALES for name in _STATS)
)
FEATURE_DIM = len(FEATURE_NAMES)

# scale factors bringing the raw features to O(1)
_HEIGHT_SCALE = 2.0
_RANGE_SCALE = 20.0


class NumericError(ArithmeticError):
    def __init__(self, layer: int, where: str = "forward"):
        super().__init__(f"non-finite activation in layer {layer} ({where})")
        self.layer = layer


class VoxelGrid:
    """Hash of integer voxel coordinates ``floor(p / voxel_size)`` to points.

    ``coords[v]`` is the coordinate of voxel ``v`` and ``inverse[i]`` the
    voxel holding point ``i``.
    """

    def __init__(self, xyz, voxel_size: float = 0.5):
        if not voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        self.voxel_size = float(voxel_size)
        keys = np.floor(xyz / self.voxel_size).astype(np.int64)
        self.coords, self.inverse, self.counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True)
        self.inverse = self.inverse.reshape(-1)

    def __len__(self):
        return self.coords.shape[0]

    @property
    def num_points(self) -> int:
        return self.inverse.shape[0]

    def members(self) -> dict:
        order = np.argsort(self.inverse, kind="stable")
        splits = np.split(order, np.cumsum(self.counts)[:-1])
        return {tuple(int(c) for c in self.coords[v]): splits[v]
                for v in range(len(self))}

    def mean(self, values: np.ndarray) -> np.ndarray:
        """Per-voxel mean of per-point ``values`` (rows)."""
        values = np.asarray(values, dtype=np.float64)
        out = np.zeros((len(self),) + values.shape[1:])
        np.add.at(out, self.inverse, values)
        return out / self.counts.reshape((-1,) + (1,) * (values.ndim - 1))


def _voxel_stats(grid: "VoxelGrid", xyz: np.ndarray) -> np.ndarray:
    """Per-point statistics of the voxel holding each point, ``(N, 5)``."""
    inv, vs = grid.inverse, grid.voxel_size
    zmin = np.full(len(grid), np.inf)
    zmax = np.full(len(grid), -np.inf)
    np.minimum.at(zmin, inv, xyz[:, 2])
    np.maximum.at(zmax, inv, xyz[:, 2])
    var = grid.mean((xyz - grid.mean(xyz)[inv]) ** 2)
    out = np.empty((xyz.shape[0], len(_STATS)))
    out[:, 0] = np.log1p(grid.counts[inv])
    out[:, 1] = (xyz[:, 2] - zmin[inv]) / vs
    out[:, 2] = (zmax - zmin)[inv] / vs
    out[:, 3] = np.sqrt(var[inv, 0] + var[inv, 1]) / vs
    out[:, 4] = np.sqrt(var[inv, 2]) / vs
    return out


def featurize(x: PointCloud, grid: VoxelGrid | None = None,
              voxel_size: float = 0.5) -> np.ndarray:
    """Fixed-width per-point feature matrix, shape ``(N, FEATURE_DIM)``.

    Columns are named in ``FEATURE_NAMES``: absolute height, intensity and
    range; the offset of the point from its voxel centroid and of the
    centroid from the voxel corner (both in voxel units); then occupancy and
    shape statistics of the enclosing voxel at each of ``CONTEXT_SCALES``.
    """
    if len(x) == 0:
        raise ValueError("cannot featurize an empty point cloud")
    xyz = x.xyz
    if grid is None:
        grid = VoxelGrid(xyz, voxel_size)
    elif grid.num_points != len(x):
        raise ValueError("voxel grid was built over a different cloud")
    vs = grid.voxel_size
    inv = grid.inverse
    centroid = grid.mean(xyz)

    feats = np.empty((len(x), FEATURE_DIM))
    feats[:, 0] = xyz[:, 2] / _HEIGHT_SCALE
    feats[:, 1] = x.intensity
    feats[:, 2] = np.sqrt(np.einsum("ij,ij->i", xyz, xyz)) / _RANGE_SCALE
    feats[:, 3:6] = (xyz - centroid[inv]) / vs
    feats[:, 6:9] = (centroid - grid.coords * vs)[inv] / vs
    col = 9
    for k in CONTEXT_SCALES:
        g = grid if k == 1 else VoxelGrid(xyz, vs * k)
        feats[:, col:col + len(_STATS)] = _voxel_stats(g, xyz)
        col += len(_STATS)
    return feats


class Dense:
    def __init__(self, n_in: int, n_out: int, rng=None, zero: bool = False):
        if zero or rng is None:
            self.W = np.zeros((n_in, n_out))
        else:
            limit = np.sqrt(6.0 / n_in)
            self.W = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def forward(self, x):
        return x @ self.W + self.b

    def backward(self, x, dout):
        self.dW += x.T @ dout
        self.db += dout.sum(axis=0)
        return dout @ self.W.T


class Model:
    """Encoder E, projector P and classifier G.

    ``forward`` returns unit-norm embeddings ``P(E(x))`` and logits
    ``G(E(x))``; ``backward`` accumulates parameter gradients for the most
    recent forward call.
    """

    def __init__(self, in_dim: int = FEATURE_DIM, hidden=(64, 64), embed_dim: int = 32,
                 num_classes: int = NUM_CLASSES, seed=0, voxel_size: float = 0.5,
                 zero_classifier: bool = False):
        rng = np.random.default_rng(seed)
        dims = [in_dim, *hidden, embed_dim]
        self.encoder = [Dense(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        self.projector = [Dense(embed_dim, embed_dim, rng), Dense(embed_dim, embed_dim, rng)]
        self.classifier = Dense(embed_dim, num_classes, rng, zero=zero_classifier)
        self.voxel_size = float(voxel_size)
        self._cache = None

    @property
    def layers(self) -> list:
        return [*self.encoder, *self.projector, self.classifier]

    @property
    def in_dim(self) -> int:
        return self.encoder[0].W.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.classifier.W.shape[0]

    @property
    def num_classes(self) -> int:
        return self.classifier.W.shape[1]

    def parameters(self) -> list:
        return [p for layer in self.layers for p in (layer.W, layer.b)]

    def gradients(self) -> list:
        return [g for layer in self.layers for g in (layer.dW, layer.db)]

    def zero_grad(self):
        for g in self.gradients():
            g[...] = 0.0

    def copy(self) -> "Model":
        other = Model.__new__(Model)
        other.encoder = [_copy_dense(d) for d in self.encoder]
        other.projector = [_copy_dense(d) for d in self.projector]
        other.classifier = _copy_dense(self.classifier)
        other.voxel_size = self.voxel_size
        other._cache = None
        return other

    def forward(self, feats):
        feats = np.asarray(feats, dtype=np.float64)
        if not np.all(np.isfinite(feats)):
            raise NumericError(0, "input")
        acts = [feats]
        h = feats
        layer_no = 0
        for dense in self.encoder:
            layer_no += 1
            h = np.maximum(dense.forward(h), 0.0)
            _check_finite(h, layer_no)
            acts.append(h)
        emb = h
        layer_no += 1
        p1 = np.maximum(self.projector[0].forward(emb), 0.0)
        _check_finite(p1, layer_no)
        layer_no += 1
        u = self.projector[1].forward(p1)
        _check_finite(u, layer_no)
        norm = np.linalg.norm(u, axis=1, keepdims=True)
        singular = norm[:, 0] < NORM_EPS
        f = u / np.where(singular[:, None], 1.0, norm)
        f[singular] = 0.0
        f[singular, 0] = 1.0
        layer_no += 1
        logits = self.classifier.forward(emb)
        _check_finite(logits, layer_no)
        self._cache = (acts, p1, f, norm, singular)
        return f, logits

    def backward(self, grad_f=None, grad_logits=None):
        if self._cache is None:
            raise RuntimeError("backward called without a preceding forward")
        acts, p1, f, norm, singular = self._cache
        self._cache = None
        emb = acts[-1]
        d_emb = np.zeros_like(emb)
        if grad_logits is not None:
            d_emb += self.classifier.backward(emb, np.asarray(grad_logits, dtype=np.float64))
        if grad_f is not None:
            g = np.asarray(grad_f, dtype=np.float64)
            # d(u/|u|) = (g - f (f.g)) / |u|
            du = (g - f * np.sum(f * g, axis=1, keepdims=True)) / np.where(singular[:, None], 1.0, norm)
            du[singular] = 0.0
            dp1 = self.projector[1].backward(p1, du) * (p1 > 0)
            d_emb += self.projector[0].backward(emb, dp1)
        d = d_emb
        for dense, x_in, out in zip(reversed(self.encoder), reversed(acts[:-1]), reversed(acts[1:])):
            d = dense.backward(x_in, d * (out > 0))
        return d

    def predict(self, feats) -> np.ndarray:
        _, logits = self.forward(feats)
        self._cache = None
        return np.argmax(logits, axis=1)


def _copy_dense(d: Dense) -> Dense:
    out = Dense.__new__(Dense)
    out.W, out.b = d.W.copy(), d.b.copy()
    out.dW, out.db = d.dW.copy(), d.db.copy()
    return out


def _check_finite(a, layer):
    if not np.all(np.isfinite(a)):
        raise NumericError(layer)


# ---------------------------------------------------------------- checkpoint

MAGIC = b"PDRCKPT\x00"
VERSION = 1


def save_checkpoint(path, model: Model, bank=None) -> None:
    """Write ``model`` (and optionally a memory bank) to ``path``.

    Layout, all little-endian: magic, u32 version, f64 voxel size,
    u32 layer count then ``(u32 group, u32 fan_in, u32 fan_out)`` per layer,
    float32 ``W`` and ``b`` for each layer in declaration order, then a u32
    bank flag followed by ``u32 D, u32 C, f64 momentum``, C mask bytes and
    the float32 ``D x C`` bank.
    """
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model, bank))


def checkpoint_bytes(model: Model, bank=None) -> bytes:
    groups = [0] * len(model.encoder) + [1, 1, 2]
    parts = [MAGIC, struct.pack("<Id", VERSION, model.voxel_size),
             struct.pack("<I", len(groups))]
    for g, layer in zip(groups, model.layers):
        parts.append(struct.pack("<III", g, *layer.W.shape))
    for p in model.parameters():
        parts.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    if bank is None:
        parts.append(struct.pack("<I", 0))
    else:
        D, C = bank.B.shape
        parts.append(struct.pack("<IIId", 1, D, C, bank.momentum))
        parts.append(np.asarray(bank.initialized, dtype=np.uint8).tobytes())
        parts.append(np.ascontiguousarray(bank.B, dtype="<f4").tobytes())
    return b"".join(parts)


def load_checkpoint(path):
    """Return ``(model, bank)``; ``bank`` is ``None`` if none was stored."""
    from .pointdr_core import MemoryBank

    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    pos = 8
    version, voxel_size = struct.unpack_from("<Id", buf, pos)
    pos += 12
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (n_layers,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    shapes = []
    for _ in range(n_layers):
        shapes.append(struct.unpack_from("<III", buf, pos))
        pos += 12
    groups = [g for g, _, _ in shapes]
    if groups.count(1) != 2 or groups.count(2) != 1 or groups[-1] != 2:
        raise ValueError(f"{path}: unexpected layer layout {groups}")
    enc = [s for s in shapes if s[0] == 0]
    hidden = tuple(s[2] for s in enc[:-1])
    model = Model(in_dim=enc[0][1], hidden=hidden, embed_dim=enc[-1][2],
                  num_classes=shapes[-1][2], seed=None, voxel_size=voxel_size)
    for p in model.parameters():
        n = p.size
        p[...] = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(p.shape)
        pos += 4 * n
    (has_bank,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    bank = None
    if has_bank:
        D, C, momentum = struct.unpack_from("<IId", buf, pos)
        pos += 16
        mask = np.frombuffer(buf, dtype=np.uint8, count=C, offset=pos).astype(bool)
        pos += C
        B = np.frombuffer(buf, dtype="<f4", count=D * C, offset=pos).reshape(D, C)
        pos += 4 * D * C
        bank = MemoryBank(D, C, momentum)
        bank.B[...] = B
        bank.initialized[...] = mask
    if pos != len(buf):
        raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
    return model, bank
