"""Factored sign/scribe embedding model and the per-image autoencoder baseline.

Each glyph of sign j by scribe k is explained by a shared sign row Y[j]
and a shared scribe row Z[k]. A decoder renders [Y[j]; Z[k]] back to
64x64, and two discriminators score (image, embedding) pairs against one
true and one randomly drawn false embedding per example.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .corpus import Corpus
from .nncore import (
    Adam,
    BlurPool2x2,
    Conv1x1,
    Conv3x3,
    Embedding,
    Flatten,
    InstanceNorm,
    Linear,
    Module,
    ReLU,
    Reshape,
    Sequential,
    Sigmoid,
    TConv2x2,
)
from .nncore.functional import sigmoid, softplus

log = logging.getLogger(__name__)

DECODER_CHANNELS = (1024, 512, 256, 128, 64)
ENCODER_CHANNELS = (64, 128, 256, 512, 1024)
HEAD_SIZES = (64, 64, 48, 48, 32, 16, 1)
FEATURE_DIM = 16


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    d: int = 16
    lambda_sign: float = 1.0
    lambda_scribe: float = 1.0
    lr: float = 1e-4
    batch_size: int = 25
    epochs: int = 100
    seed: int = 0
    recon: bool = True
    scribe_disc: bool = True
    sign_disc: bool = True
    width: float = 1.0
    dtype: str = "float64"  # "float32" halves the cost of training

    def validate(self) -> None:
        if self.lambda_sign < 0 or self.lambda_scribe < 0:
            raise ConfigError("loss weights must be non-negative")
        if not (self.recon or self.scribe_disc or self.sign_disc):
            raise ConfigError("at least one of recon, scribe_disc, sign_disc must be enabled")
        if self.d < 1 or self.batch_size < 1 or self.epochs < 0 or self.lr <= 0 or self.width <= 0:
            raise ConfigError(f"invalid training hyperparameters: {self}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def components(self) -> list[str]:
        out = []
        if self.recon:
            out.append("recon_mse")
        if self.sign_disc:
            out.append("sign_bce")
        if self.scribe_disc:
            out.append("scribe_bce")
        return out


def scaled(channels: int, width: float) -> int:
    return max(1, int(round(channels * width)))


class Decoder(Sequential):
    """F(c0*4*4) -> 4 x (T -> 2 x (C -> I -> R)) -> 1x1 conv -> sigmoid.

    The first conv of each block halves the channel count; the transpose
    conv and the second conv keep it.
    """

    def __init__(self, in_dim: int, width: float, rng: np.random.Generator):
        super().__init__()
        ch = [scaled(c, width) for c in DECODER_CHANNELS]
        self.in_dim = in_dim
        self.add("fc", Linear(in_dim, ch[0] * 16, rng))
        self.add("unflatten", Reshape(ch[0], 4, 4))
        for b in range(4):
            c_in, c_out = ch[b], ch[b + 1]
            self.add(f"block{b + 1}", Sequential(
                ("tconv", TConv2x2(c_in, c_in, rng)),
                ("conv1", Conv3x3(c_in, c_out, rng)),
                ("norm1", InstanceNorm(c_out)),
                ("relu1", ReLU()),
                ("conv2", Conv3x3(c_out, c_out, rng)),
                ("norm2", InstanceNorm(c_out)),
                ("relu2", ReLU()),
            ))
        self.add("out", Conv1x1(ch[4], 1, rng))
        self.add("sigmoid", Sigmoid())


class Encoder(Sequential):
    """C -> 4 x (3 x (C -> R) -> M) -> F(out_dim), channels doubling per block."""

    def __init__(self, width: float, rng: np.random.Generator, out_dim: int = FEATURE_DIM):
        super().__init__()
        ch = [scaled(c, width) for c in ENCODER_CHANNELS]
        self.add("conv0", Conv3x3(1, ch[0], rng))
        for b in range(4):
            c_in, c_out = ch[b], ch[b + 1]
            self.add(f"block{b + 1}", Sequential(
                ("conv1", Conv3x3(c_in, c_out, rng)), ("relu1", ReLU()),
                ("conv2", Conv3x3(c_out, c_out, rng)), ("relu2", ReLU()),
                ("conv3", Conv3x3(c_out, c_out, rng)), ("relu3", ReLU()),
                ("pool", BlurPool2x2()),
            ))
        self.add("flatten", Flatten())
        self.add("fc", Linear(ch[4] * 16, out_dim, rng))


class Head(Sequential):
    def __init__(self, in_dim: int, rng: np.random.Generator):
        super().__init__()
        sizes = (in_dim,) + HEAD_SIZES
        for i in range(len(HEAD_SIZES)):
            self.add(f"fc{i + 1}", Linear(sizes[i], sizes[i + 1], rng))
            if i < len(HEAD_SIZES) - 1:
                self.add(f"relu{i + 1}", ReLU())


class Discriminator(Module):
    """Scores whether an embedding matches an image; returns logits."""

    def __init__(self, d: int, width: float, rng: np.random.Generator):
        super().__init__()
        self.encoder = Encoder(width, rng)
        self.head = Head(FEATURE_DIM + d, rng)

    def forward_pair(self, images: np.ndarray, emb_true: np.ndarray, emb_false: np.ndarray):
        """Logits for the true and false pairing of each image; the image is encoded once."""
        n = len(images)
        feat = self.encoder.forward(images[:, None])
        feats = np.concatenate([feat, feat])
        logits = self.head.forward(np.concatenate([feats, np.concatenate([emb_true, emb_false])], axis=1))[:, 0]
        self._cache = n
        return logits[:n], logits[n:]

    def backward_pair(self, dlogit_true: np.ndarray, dlogit_false: np.ndarray):
        n = self._pop_cache()
        dh = self.head.backward(np.concatenate([dlogit_true, dlogit_false])[:, None])
        dfeat = dh[:n, :FEATURE_DIM] + dh[n:, :FEATURE_DIM]
        self.encoder.backward(dfeat)
        return dh[:n, FEATURE_DIM:], dh[n:, FEATURE_DIM:]

    def probability(self, images: np.ndarray, emb: np.ndarray) -> np.ndarray:
        feat = self.encoder.forward(images[:, None])
        return sigmoid(self.head.forward(np.concatenate([feat, emb], axis=1))[:, 0])


@dataclass
class LossParts:
    recon_mse: float | None = None
    sign_bce: float | None = None
    scribe_bce: float | None = None
    total: float = 0.0

    def as_row(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


class FactorModel(Module):
    def __init__(self, J: int, K: int, config: TrainConfig | None = None):
        super().__init__()
        config = config or TrainConfig()
        config.validate()
        self.config = config
        rng = np.random.default_rng([config.seed, 0])
        self.sign_embeddings = Embedding(J, config.d, rng)
        self.scribe_embeddings = Embedding(K, config.d, rng)
        self.decoder = Decoder(2 * config.d, config.width, rng)
        self.sign_disc = Discriminator(config.d, config.width, rng)
        self.scribe_disc = Discriminator(config.d, config.width, rng)
        self.astype(config.dtype)

    @property
    def J(self) -> int:
        return self.sign_embeddings.weight.shape[0]

    @property
    def K(self) -> int:
        return self.scribe_embeddings.weight.shape[0]

    def sign_table(self) -> np.ndarray:
        return self.sign_embeddings.weight.value.copy()

    def scribe_table(self) -> np.ndarray:
        return self.scribe_embeddings.weight.value.copy()

    def trainable(self) -> list:
        """Parameters that receive gradient under the configured loss toggles."""
        c = self.config
        mods = []
        if c.recon or c.sign_disc:
            mods.append(self.sign_embeddings)
        if c.recon or c.scribe_disc:
            mods.append(self.scribe_embeddings)
        if c.recon:
            mods.append(self.decoder)
        if c.sign_disc:
            mods.append(self.sign_disc)
        if c.scribe_disc:
            mods.append(self.scribe_disc)
        return [p for m in mods for p in m.parameters()]

    def decode(self, sign_ids, scribe_ids) -> np.ndarray:
        Y = self.sign_embeddings.weight.value[np.asarray(sign_ids)]
        Z = self.scribe_embeddings.weight.value[np.asarray(scribe_ids)]
        return self.decode_vectors(Y, Z)

    def decode_vectors(self, Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
        Y, Z = np.atleast_2d(Y), np.atleast_2d(Z)
        if Y.shape[1] != self.config.d or Z.shape[1] != self.config.d:
            raise ValueError(f"embeddings must have dimension {self.config.d}")
        return self.decoder.forward(np.concatenate([Y, Z], axis=1))[:, 0]

    def discriminate_sign(self, images, sign_ids) -> np.ndarray:
        return self.sign_disc.probability(np.asarray(images), self.sign_embeddings.weight.value[np.asarray(sign_ids)])

    def discriminate_scribe(self, images, scribe_ids) -> np.ndarray:
        return self.scribe_disc.probability(np.asarray(images), self.scribe_embeddings.weight.value[np.asarray(scribe_ids)])

    def loss_and_grad(self, images, sign_ids, scribe_ids, neg_sign_ids, neg_scribe_ids) -> LossParts:
        """Batch-mean loss; parameter gradients are zeroed and then accumulated."""
        c = self.config
        images = np.asarray(images, dtype=c.dtype)
        n = len(images)
        j, k = np.asarray(sign_ids), np.asarray(scribe_ids)
        self.zero_grad()
        Yt, Zt = self.sign_embeddings.weight, self.scribe_embeddings.weight
        parts = LossParts()
        if c.recon:
            xhat = self.decoder.forward(np.concatenate([Yt.value[j], Zt.value[k]], axis=1))[:, 0]
            diff = xhat - images
            parts.recon_mse = float(np.mean(diff * diff))
            dinp = self.decoder.backward((2.0 / diff.size) * diff[:, None])
            np.add.at(Yt.grad, j, dinp[:, :c.d])
            np.add.at(Zt.grad, k, dinp[:, c.d:])
            parts.total += parts.recon_mse
        for enabled, lam, disc, table, pos, neg, name in (
            (c.sign_disc, c.lambda_sign, self.sign_disc, Yt, j, neg_sign_ids, "sign_bce"),
            (c.scribe_disc, c.lambda_scribe, self.scribe_disc, Zt, k, neg_scribe_ids, "scribe_bce"),
        ):
            if not enabled:
                continue
            neg = np.asarray(neg)
            if np.any(neg == pos):
                raise ValueError(f"{name}: negative id equals the true id")
            lt, lf = disc.forward_pair(images, table.value[pos], table.value[neg])
            # -log p(true) - log(1 - p(false))
            bce = softplus(-lt) + softplus(lf)
            value = float(bce.mean())
            setattr(parts, name, value)
            parts.total += lam * value
            dt, df = disc.backward_pair(lam * (sigmoid(lt) - 1.0) / n, lam * sigmoid(lf) / n)
            np.add.at(table.grad, pos, dt)
            np.add.at(table.grad, neg, df)
        return parts


def loss(model: FactorModel, image, j: int, k: int, j_neg: int, k_neg: int) -> float:
    """Single-example loss; requires j != j_neg and k != k_neg for the enabled discriminators."""
    if j == j_neg or k == k_neg:
        raise ValueError("negative sign/scribe must differ from the true one")
    return model.loss_and_grad(np.asarray(image)[None], [j], [k], [j_neg], [k_neg]).total


def sample_negatives(rng: np.random.Generator, ids: np.ndarray, count: int) -> np.ndarray:
    """Uniform over the other ``count - 1`` ids."""
    return (ids + rng.integers(1, count, size=len(ids))) % count


@dataclass
class TrainResult:
    model: Module
    log: list[dict] = field(default_factory=list)


def _check_corpus(corpus: Corpus, config: TrainConfig) -> None:
    if len(corpus) == 0:
        raise ConfigError("empty corpus")
    if config.sign_disc and corpus.J < 2:
        raise ConfigError("sign discriminator needs at least 2 signs")
    if config.scribe_disc and corpus.K < 2:
        raise ConfigError("scribe discriminator needs at least 2 scribes")


def train(corpus: Corpus, config: TrainConfig, model: FactorModel | None = None, progress=None) -> TrainResult:
    config.validate()
    _check_corpus(corpus, config)
    model = model or FactorModel(corpus.J, corpus.K, config)
    opt = Adam(model.trainable(), lr=config.lr)
    rng = np.random.default_rng([config.seed, 1])
    n = len(corpus)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sums: dict[str, float] = {}
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            j, k = corpus.sign_ids[idx], corpus.scribe_ids[idx]
            # drawn even for disabled discriminators so ablations see the same batches
            jn = sample_negatives(rng, j, corpus.J) if corpus.J > 1 else j
            kn = sample_negatives(rng, k, corpus.K) if corpus.K > 1 else k
            parts = model.loss_and_grad(corpus.images[idx], j, k, jn, kn)
            opt.step()
            for key, v in parts.as_row().items():
                sums[key] = sums.get(key, 0.0) + v * len(idx)
        row = {"epoch": epoch}
        row.update({key: sums[key] / n for key in config.components + ["total"]})
        history.append(row)
        log.info("epoch %d %s", epoch, " ".join(f"{k}={v:.6f}" for k, v in row.items() if k != "epoch"))
        if progress is not None:
            progress(row)
    return TrainResult(model, history)


class Autoencoder(Module):
    """Per-image embedding baseline: discriminator-style encoder, factor-model decoder."""

    def __init__(self, config: TrainConfig | None = None):
        super().__init__()
        config = config or TrainConfig()
        self.config = config
        rng = np.random.default_rng([config.seed, 0])
        self.encoder = Encoder(config.width, rng, out_dim=config.d)
        self.decoder = Decoder(config.d, config.width, rng)
        self.astype(config.dtype)

    def encode(self, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
        images = np.asarray(images, dtype=self.config.dtype)
        chunks = [self.encoder.forward(images[s:s + batch_size, None]) for s in range(0, len(images), batch_size)]
        return np.concatenate(chunks) if chunks else np.zeros((0, self.config.d))

    def loss_and_grad(self, images: np.ndarray) -> float:
        images = np.asarray(images, dtype=self.config.dtype)
        self.zero_grad()
        xhat = self.decoder.forward(self.encoder.forward(images[:, None]))[:, 0]
        diff = xhat - images
        dcode = self.decoder.backward((2.0 / diff.size) * diff[:, None])
        self.encoder.backward(dcode)
        return float(np.mean(diff * diff))


@dataclass
class AutoencoderResult:
    model: Autoencoder
    log: list[dict]
    image_embeddings: np.ndarray
    scribe_means: np.ndarray


def scribe_means(embeddings: np.ndarray, scribe_ids: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((K, embeddings.shape[1]))
    counts = np.bincount(scribe_ids, minlength=K)
    np.add.at(out, scribe_ids, embeddings)
    if np.any(counts == 0):
        raise ValueError("every scribe needs at least one glyph")
    return out / counts[:, None]


def train_autoencoder(corpus: Corpus, config: TrainConfig, progress=None) -> AutoencoderResult:
    if len(corpus) == 0:
        raise ConfigError("empty corpus")
    model = Autoencoder(config)
    opt = Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng([config.seed, 1])
    n = len(corpus)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            total += model.loss_and_grad(corpus.images[idx]) * len(idx)
            opt.step()
        row = {"epoch": epoch, "recon_mse": total / n, "total": total / n}
        history.append(row)
        log.info("autoencoder epoch %d recon_mse=%.6f", epoch, row["recon_mse"])
        if progress is not None:
            progress(row)
    emb = model.encode(corpus.images)
    return AutoencoderResult(model, history, emb, scribe_means(emb, corpus.scribe_ids, corpus.K))


def reconstruct_grid(model: FactorModel, scribe_ids, sign_ids, path=None) -> np.ndarray:
    """Decode every (scribe, sign) pair: rows are scribes, columns are signs."""
    scribe_ids, sign_ids = list(scribe_ids), list(sign_ids)
    bad = [k for k in scribe_ids if not 0 <= k < model.K] + [j for j in sign_ids if not 0 <= j < model.J]
    if bad:
        raise ValueError(f"unknown ids: {bad}")
    if not scribe_ids or not sign_ids:
        raise ValueError("need at least one scribe and one sign")
    kk, jj = np.meshgrid(scribe_ids, sign_ids, indexing="ij")
    cells = model.decode(jj.ravel(), kk.ravel())
    r, c = len(scribe_ids), len(sign_ids)
    grid = cells.reshape(r, c, 64, 64).transpose(0, 2, 1, 3).reshape(r * 64, c * 64)
    if path is not None:
        path = Path(path)
        img = Image.fromarray(np.round(grid * 255).astype(np.uint8), mode="L")
        img.save(path, format="PNG" if path.suffix.lower() == ".png" else "PPM")
    return grid
