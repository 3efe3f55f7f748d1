"""The three singer-identification architectures, embedding extraction and similarity.

All models take N x 1 x 128 x 426 feature grids. Input standardisation
(per-row mean and std from the training split) is held in model buffers so a
checkpoint alone defines the embedding function.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import nn
from .features import COLS, ROWS, FeatureMatrix
from .nn import functional as F
from .nn.tensor import ShapeError, Tensor, concat


class ModelKind(str, enum.Enum):
    CRNN = "CRNN"
    RESNET = "RESNET"
    RES_BLSTM = "RES_BLSTM"

    @classmethod
    def parse(cls, name) -> "ModelKind":
        key = str(getattr(name, "value", name)).upper().replace("-", "_")
        aliases = {"RESNET50": "RESNET", "RESBLSTM": "RES_BLSTM", "RESIDUAL_BLSTM": "RES_BLSTM"}
        return cls(aliases.get(key, key))


@dataclass
class ArchitectureConfig:
    kind: str = "RES_BLSTM"
    width_multiplier: float = 1.0
    n_classes: int = 5
    embedding_dim: int | None = None
    fc_units: int = 1024
    dropout: float = 0.1
    # CRNN
    crnn_channels: tuple = (64, 128, 128, 128)
    gru_hidden: int = 32
    gru_layers: int = 2
    # RESNET
    resnet_stages: tuple = (3, 4, 6, 3)
    resnet_widths: tuple = (64, 128, 256, 512)
    zero_init_residual: bool = True
    # RES_BLSTM
    res_blocks: int = 2
    res_width: int = 32
    blstm_hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind).value
        self.crnn_channels = tuple(int(c) for c in self.crnn_channels)
        self.resnet_stages = tuple(int(c) for c in self.resnet_stages)
        self.resnet_widths = tuple(int(c) for c in self.resnet_widths)
        if self.width_multiplier <= 0:
            raise ValueError("width_multiplier must be positive")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        derived = self.derived_embedding_dim()
        if self.embedding_dim is None:
            self.embedding_dim = derived
        elif self.embedding_dim != derived:
            raise ValueError(f"embedding_dim {self.embedding_dim} inconsistent with the {self.kind} layout ({derived})")

    def scaled(self, width: int) -> int:
        return max(1, int(round(width * self.width_multiplier)))

    def derived_embedding_dim(self) -> int:
        if self.kind == "CRNN":
            return self.gru_hidden
        if self.kind == "RESNET":
            return 4 * self.scaled(self.resnet_widths[-1])
        return 2 * self.blstm_hidden

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d) -> "ArchitectureConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown architecture keys: {sorted(unknown)}")
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


# ----------------------------------------------------------------------- blocks


class ConvBlock(nn.Module):
    """conv -> batch norm -> ELU -> max pool -> dropout."""

    def __init__(self, c_in, c_out, stride, pool, pool_stride, p):
        self.conv = nn.Conv2d(c_in, c_out, 3, stride, 1, bias=False)
        self.bn = nn.BatchNorm2d(c_out)
        self.pool = nn.MaxPool2d(pool, pool_stride)
        self.drop = nn.Dropout(p)

    def forward(self, x):
        return self.drop(self.pool(F.elu(self.bn(self.conv(x)))))


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, c_in, width, stride, zero_init):
        out = width * self.expansion
        self.conv1 = nn.Conv2d(c_in, width, 1, 1, 0, bias=False)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = nn.Conv2d(width, width, 3, stride, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(width)
        self.conv3 = nn.Conv2d(width, out, 1, 1, 0, bias=False)
        self.bn3 = nn.BatchNorm2d(out)
        if zero_init:
            self.bn3.gamma.data[:] = 0
        self.proj = None
        if stride != 1 or c_in != out:
            self.proj = nn.Conv2d(c_in, out, 1, stride, 0, bias=False)
            self.proj_bn = nn.BatchNorm2d(out)

    def shortcut(self, x):
        return x if self.proj is None else self.proj_bn(self.proj(x))

    def forward(self, x):
        y = F.relu(self.bn1(self.conv1(x)))
        y = F.relu(self.bn2(self.conv2(y)))
        y = self.bn3(self.conv3(y))
        return F.relu(y + self.shortcut(x))


class ResidualBlock(nn.Module):
    """Two 3x3 convs with batch norm and ELU; projection shortcut when the shape changes."""

    def __init__(self, c_in, c_out, stride):
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(c_out)
        self.proj = None
        if stride != 1 or c_in != c_out:
            self.proj = nn.Conv2d(c_in, c_out, 1, stride, 0, bias=False)
            self.proj_bn = nn.BatchNorm2d(c_out)

    def forward(self, x):
        y = F.elu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        short = x if self.proj is None else self.proj_bn(self.proj(x))
        return F.elu(y + short)


# ----------------------------------------------------------------------- models


class SIDModel(nn.Module):
    """Shared front matter: input check, standardisation buffers, 1024-unit head."""

    _buffer_names = ("input_mean", "input_std")

    def __init__(self, cfg: ArchitectureConfig):
        self.cfg = cfg
        self.input_mean = np.zeros(ROWS, np.float32)
        self.input_std = np.ones(ROWS, np.float32)
        self.fc = nn.Linear(cfg.embedding_dim, cfg.fc_units)
        self.fc_drop = nn.Dropout(cfg.dropout)
        self.out = nn.Linear(cfg.fc_units, cfg.n_classes)

    def _prepare(self, x) -> Tensor:
        data = x.data if isinstance(x, Tensor) else np.asarray(x)
        if data.ndim == 3:
            data = data[:, None]
        if data.shape[1:] != (1, ROWS, COLS):
            raise ShapeError(f"expected N x 1 x {ROWS} x {COLS} input, got {data.shape}")
        z = (data - self.input_mean[None, None, :, None]) / self.input_std[None, None, :, None]
        # trailing all-zero columns are padding (features guarantee it); they stay zero
        filled = np.any(data != 0, axis=2)[:, 0]  # N x T
        valid = np.where(filled.any(axis=1), COLS - np.argmax(filled[:, ::-1], axis=1), 0)
        z = np.where(np.arange(COLS)[None, None, None, :] < valid[:, None, None, None], z, 0.0)
        return Tensor(z.astype(self.input_mean.dtype))

    def embedding(self, x) -> Tensor:
        return self.encode(self._prepare(x))

    def forward(self, x) -> Tensor:
        return self.classify(self.embedding(x))

    def classify(self, emb: Tensor) -> Tensor:
        return self.out(self.fc_drop(F.elu(self.fc(emb))))

    def encode(self, x: Tensor) -> Tensor:
        raise NotImplementedError


class CRNN(SIDModel):
    def __init__(self, cfg: ArchitectureConfig):
        super().__init__(cfg)
        ch = [cfg.scaled(c) for c in cfg.crnn_channels]
        blocks, c_in = [], 1
        for i, c in enumerate(ch):
            if i == 0:
                blocks.append(ConvBlock(c_in, c, 2, 3, 2, cfg.dropout))
            else:
                blocks.append(ConvBlock(c_in, c, 1, 2, 2, cfg.dropout))
            c_in = c
        self.blocks = blocks
        h, w = _crnn_grid(len(ch))
        self.rnn = nn.GRU(c_in * h, cfg.gru_hidden, cfg.gru_layers)

    def encode(self, x):
        for b in self.blocks:
            x = b(x)
        n, c, h, w = x.shape
        seq = x.transpose(3, 0, 1, 2).reshape(w, n, c * h)
        return self.rnn(seq)[-1]


def _crnn_grid(n_blocks: int):
    h, w = (ROWS - 1) // 2 + 1, (COLS - 1) // 2 + 1  # stride-2 conv, padding 1
    h, w = (h - 3) // 2 + 1, (w - 3) // 2 + 1
    for _ in range(n_blocks - 1):
        h, w = h // 2, w // 2
    return h, w


class ResNet(SIDModel):
    def __init__(self, cfg: ArchitectureConfig):
        super().__init__(cfg)
        stem = cfg.scaled(cfg.resnet_widths[0])
        self.stem = nn.Conv2d(1, stem, 3, 1, 1, bias=False)
        self.stem_bn = nn.BatchNorm2d(stem)
        self.pool = nn.MaxPool2d(3, 2, 1)
        blocks, c_in = [], stem
        for s, (n_blocks, width) in enumerate(zip(cfg.resnet_stages, cfg.resnet_widths)):
            width = cfg.scaled(width)
            for b in range(n_blocks):
                stride = 2 if (s > 0 and b == 0) else 1
                blocks.append(Bottleneck(c_in, width, stride, cfg.zero_init_residual))
                c_in = width * Bottleneck.expansion
        self.blocks = blocks

    def stem_forward(self, x):
        return self.pool(F.relu(self.stem_bn(self.stem(x))))

    def encode(self, x):
        x = self.stem_forward(x)
        for b in self.blocks:
            x = b(x)
        return x.mean(axis=(2, 3))


class ResBLSTM(SIDModel):
    def __init__(self, cfg: ArchitectureConfig):
        super().__init__(cfg)
        width = cfg.scaled(cfg.res_width)
        self.blocks = [ResidualBlock(1 if i == 0 else width, width, 2 if i == 0 else 1) for i in range(cfg.res_blocks)]
        self.rnn = nn.BLSTM(width, cfg.blstm_hidden)

    def encode(self, x):
        for b in self.blocks:
            x = b(x)
        seq = x.mean(axis=2).transpose(2, 0, 1)  # T x N x C
        out = self.rnn(seq)
        h = self.cfg.blstm_hidden
        return concat([out[-1, :, :h], out[0, :, h:]], axis=1)


def build_crnn(cfg: ArchitectureConfig) -> CRNN:
    if cfg.kind != "CRNN":
        raise ValueError("config kind is not CRNN")
    return CRNN(cfg)


def build_resnet(cfg: ArchitectureConfig) -> ResNet:
    if cfg.kind != "RESNET":
        raise ValueError("config kind is not RESNET")
    return ResNet(cfg)


def build_res_blstm(cfg: ArchitectureConfig) -> ResBLSTM:
    if cfg.kind != "RES_BLSTM":
        raise ValueError("config kind is not RES_BLSTM")
    return ResBLSTM(cfg)


BUILDERS = {"CRNN": build_crnn, "RESNET": build_resnet, "RES_BLSTM": build_res_blstm}


def build_model(cfg: ArchitectureConfig) -> SIDModel:
    """Seeded construction: the same config always yields the same initial weights."""
    nn.manual_seed(cfg.seed)
    return BUILDERS[cfg.kind](cfg)


# -------------------------------------------------------------------- embedding


@dataclass
class EmbeddingVector:
    values: np.ndarray
    source: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)


def embed(model: SIDModel, features) -> EmbeddingVector:
    """Inference-mode embedding of one feature grid (FeatureMatrix or 128 x 426 array)."""
    source = {}
    if isinstance(features, FeatureMatrix):
        source = {"source_id": features.source_id, "start": features.start, "end": features.end}
        data = features.data
    else:
        data = np.asarray(features)
    if data.shape != (ROWS, COLS):
        raise ShapeError(f"expected a {ROWS} x {COLS} grid, got {data.shape}")
    was = model.training
    model.eval()
    with nn.no_grad():
        vec = model.embedding(data[None, None]).data[0].copy()
    model.train(was)
    return EmbeddingVector(vec, source)


def similar(e1, e2, theta: float) -> bool:
    """Euclidean distance at most ``theta`` (inclusive)."""
    a = np.asarray(getattr(e1, "values", e1), dtype=np.float64)
    b = np.asarray(getattr(e2, "values", e2), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"embedding lengths differ: {a.shape} vs {b.shape}")
    return bool(np.linalg.norm(a - b) <= theta)


# ------------------------------------------------------------------ checkpoints


def save_model(path, model: SIDModel, **meta) -> None:
    nn.save(path, model.state_dict(), {"architecture": model.cfg.to_dict(), "seed": model.cfg.seed, **meta})


def load_model(path) -> tuple[SIDModel, dict]:
    tensors, meta = nn.load(path)
    if "architecture" not in meta:
        raise nn.CheckpointError(f"{path}: sidecar lacks an architecture config")
    model = build_model(ArchitectureConfig.from_dict(meta["architecture"]))
    model.load_state_dict(tensors)
    return model.eval(), meta
