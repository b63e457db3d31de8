"""Evaluation of scribe embeddings: findplace probing and QVEC alignment."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class EvalError(ValueError):
    pass


@dataclass
class EmbeddingMatrix:
    vectors: np.ndarray  # (K, d)
    ids: list[str]
    findplaces: list[str | None] | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or len(self.vectors) != len(self.ids):
            raise EvalError(f"{len(self.ids)} ids for embedding matrix of shape {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise EvalError("embedding matrix contains NaN or Inf")
        if self.findplaces is not None and len(self.findplaces) != len(self.ids):
            raise EvalError("findplace labels do not align with rows")

    def with_findplaces(self, mapping: dict[str, str]) -> "EmbeddingMatrix":
        return EmbeddingMatrix(self.vectors, list(self.ids), [mapping.get(i) for i in self.ids])


@dataclass
class ManualFeatureMatrix:
    values: np.ndarray  # (M, F)
    ids: list[str]
    names: list[str]


def read_embeddings(path) -> EmbeddingMatrix:
    """Read ``id,label,dim_0,...``; rows are keyed by label."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["id", "label"]:
        raise EvalError(f"{path}: expected header id,label,dim_0,...")
    body = [r for r in rows[1:] if r]
    try:
        vecs = np.array([[float(v) for v in r[2:]] for r in body])
    except ValueError as exc:
        raise EvalError(f"{path}: non-numeric embedding value") from exc
    return EmbeddingMatrix(vecs.reshape(len(body), len(rows[0]) - 2), [r[1] for r in body])


def write_embeddings(path, vectors: np.ndarray, labels: list[str]) -> None:
    vectors = np.asarray(vectors)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + [f"dim_{i}" for i in range(vectors.shape[1])])
        for i, (label, row) in enumerate(zip(labels, vectors)):
            w.writerow([i, label] + [repr(float(v)) for v in row])


def read_manual_features(path) -> ManualFeatureMatrix:
    """Read ``scribe,<feature>,...``; an embedding CSV is also accepted, keyed by label."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0][:2] == ["id", "label"]:
        emb = read_embeddings(path)
        return ManualFeatureMatrix(emb.vectors, list(emb.ids), rows[0][2:])
    if not rows or not rows[0] or rows[0][0] != "scribe" or len(rows[0]) < 2:
        raise EvalError(f"{path}: expected header scribe,<feature_1>,...")
    names = rows[0][1:]
    ids, vals = [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        if len(r) != len(names) + 1 or any(c.strip() == "" for c in r):
            raise EvalError(f"{path}:{lineno}: missing value")
        try:
            vals.append([float(c) for c in r[1:]])
        except ValueError as exc:
            raise EvalError(f"{path}:{lineno}: non-numeric value") from exc
        ids.append(r[0])
    return ManualFeatureMatrix(np.array(vals).reshape(len(ids), len(names)), ids, names)


def read_findplaces(path) -> dict[str, str]:
    """Scribe -> findplace, from a ``scribe,findplace`` CSV or a corpus manifest."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "scribe" not in reader.fieldnames or "findplace" not in reader.fieldnames:
            raise EvalError(f"{path}: needs scribe and findplace columns")
        out: dict[str, str] = {}
        for lineno, row in enumerate(reader, start=2):
            fp = (row["findplace"] or "").strip()
            if not fp:
                continue
            prev = out.setdefault(row["scribe"], fp)
            if prev != fp:
                raise EvalError(f"{path}:{lineno}: scribe {row['scribe']!r} has findplaces {prev!r} and {fp!r}")
    return out


# --- findplace probing -------------------------------------------------------

def filter_findplaces(emb: EmbeddingMatrix, min_scribes: int = 3) -> EmbeddingMatrix:
    """Drop rows without a findplace and findplaces with fewer than ``min_scribes`` scribes."""
    if emb.findplaces is None:
        raise EvalError("embeddings carry no findplace labels")
    counts: dict[str, int] = {}
    for fp in emb.findplaces:
        if fp:
            counts[fp] = counts.get(fp, 0) + 1
    keep = [i for i, fp in enumerate(emb.findplaces) if fp and counts[fp] >= min_scribes]
    classes = {emb.findplaces[i] for i in keep}
    if len(classes) < 2:
        raise EvalError(f"only {len(classes)} findplace class(es) with >= {min_scribes} scribes remain")
    return EmbeddingMatrix(emb.vectors[keep], [emb.ids[i] for i in keep], [emb.findplaces[i] for i in keep])


def stratified_folds(labels, k: int = 5, seed: int = 0, max_tries: int = 100) -> np.ndarray:
    """Fold index per item. Each class is shuffled and dealt round-robin, continuing
    where the previous class stopped, so fold sizes differ by at most one. Reshuffles
    until every training split contains every class."""
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    if len(labels) < k:
        raise EvalError(f"{len(labels)} items cannot fill {k} folds")
    if any(np.sum(labels == c) < 2 for c in classes):
        raise EvalError("every class needs at least 2 items to appear in all training splits")
    rng = np.random.default_rng([seed, 20])
    for _ in range(max_tries):
        fold = np.empty(len(labels), dtype=np.int64)
        offset = 0
        for c in classes:
            members = rng.permutation(np.flatnonzero(labels == c))
            fold[members] = (offset + np.arange(len(members))) % k
            offset += len(members)
        if all(set(labels[fold != f].tolist()) == set(classes) for f in range(k)):
            return fold
    raise EvalError("no stratification leaves every class in every training split")


def f1_scores(y_true, y_pred, average: str = "macro") -> float:
    """F1 over the labels present in either array. ``micro`` equals accuracy."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if average == "micro":
        return float(np.mean(y_true == y_pred))
    if average != "macro":
        raise EvalError(f"unknown average {average!r}")
    scores = []
    for c in sorted(set(y_true.tolist()) | set(y_pred.tolist())):
        tp = np.sum((y_true == c) & (y_pred == c))
        fp = np.sum((y_true != c) & (y_pred == c))
        fn = np.sum((y_true == c) & (y_pred != c))
        scores.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores))


@dataclass
class ProbeConfig:
    folds: int = 5
    inits: int = 15
    epochs: int = 500
    lr: float = 1e-3
    batch_size: int = 15
    init_std: float = 0.01
    standardize: bool = True
    average: str = "macro"
    seed: int = 0


@dataclass
class ProbeResult:
    fold_f1: list[float]
    mean_f1: float
    init_f1: np.ndarray  # (folds, inits) test F1 of every classifier
    folds: np.ndarray
    config: ProbeConfig = field(default_factory=ProbeConfig)
    policy: str = "best test F1 over random inits, per fold"


def _softmax_sgd(x: np.ndarray, y: np.ndarray, n_classes: int, cfg: ProbeConfig, rng: np.random.Generator):
    """Train ``cfg.inits`` multinomial logistic regressions in lockstep; returns (W, b) stacks."""
    n, d = x.shape
    W = rng.normal(0.0, cfg.init_std, size=(cfg.inits, d, n_classes))
    b = rng.normal(0.0, cfg.init_std, size=(cfg.inits, n_classes))
    onehot = np.eye(n_classes)[y]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            xb = x[idx]
            logits = np.einsum("nd,idc->inc", xb, W) + b[:, None, :]
            logits -= logits.max(axis=2, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=2, keepdims=True)
            g = (p - onehot[idx]) / len(idx)
            W -= cfg.lr * np.einsum("nd,inc->idc", xb, g)
            b -= cfg.lr * g.sum(axis=1)
    return W, b


def probe_findplace(emb: EmbeddingMatrix, config: ProbeConfig | None = None) -> ProbeResult:
    """k-fold cross-validated findplace classifier on (already filtered) embeddings."""
    cfg = config or ProbeConfig()
    if emb.findplaces is None or any(fp is None for fp in emb.findplaces):
        raise EvalError("every row needs a findplace; run filter_findplaces first")
    classes = sorted(set(emb.findplaces))
    if len(classes) < 2:
        raise EvalError("need at least 2 findplace classes")
    y = np.array([classes.index(fp) for fp in emb.findplaces])
    folds = stratified_folds(y, cfg.folds, cfg.seed)
    init_f1 = np.zeros((cfg.folds, cfg.inits))
    for f in range(cfg.folds):
        tr, te = folds != f, folds == f
        x_tr, x_te = emb.vectors[tr], emb.vectors[te]
        if cfg.standardize:
            mu, sd = x_tr.mean(axis=0), x_tr.std(axis=0)
            sd[sd == 0] = 1.0
            x_tr, x_te = (x_tr - mu) / sd, (x_te - mu) / sd
        rng = np.random.default_rng([cfg.seed, 21, f])
        W, b = _softmax_sgd(x_tr, y[tr], len(classes), cfg, rng)
        pred = (np.einsum("nd,idc->inc", x_te, W) + b[:, None, :]).argmax(axis=2)
        init_f1[f] = [f1_scores(y[te], p, cfg.average) for p in pred]
    fold_f1 = init_f1.max(axis=1).tolist()
    return ProbeResult(fold_f1, float(np.mean(fold_f1)), init_f1, folds, cfg)


@dataclass
class BaselineResult:
    fold_f1: list[float]
    mean_f1: float
    folds: np.ndarray


def baseline_most_common(labels, folds: int = 5, seed: int = 0, average: str = "macro") -> BaselineResult:
    """Predict each training split's modal class (ties: lexicographically first label)."""
    labels = np.asarray([str(x) for x in labels])
    if len(set(labels.tolist())) < 2:
        raise EvalError("need at least 2 classes")
    classes = sorted(set(labels.tolist()))
    y = np.array([classes.index(c) for c in labels])
    fold = stratified_folds(y, folds, seed)
    scores = []
    for f in range(folds):
        counts = np.bincount(y[fold != f], minlength=len(classes))
        modal = int(np.argmax(counts))  # argmax returns the first, i.e. lexicographically smallest, maximum
        te = y[fold == f]
        scores.append(f1_scores(te, np.full(len(te), modal), average))
    return BaselineResult(scores, float(np.mean(scores)), fold)


# --- QVEC --------------------------------------------------------------------

def correlation_matrix(manual: np.ndarray, emb: np.ndarray) -> np.ndarray:
    """(F, d) Pearson correlations across rows; zero-variance columns give 0."""
    a = manual - manual.mean(axis=0)
    b = emb - emb.mean(axis=0)
    na, nb = np.sqrt((a * a).sum(axis=0)), np.sqrt((b * b).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (a.T @ b) / np.outer(na, nb)
    r[~np.isfinite(r)] = 0.0
    r[na == 0, :] = 0.0
    r[:, nb == 0] = 0.0
    # affinely related columns saturate Cauchy-Schwarz; snap the rounding noise
    r[np.abs(r) > 1.0 - 1e-12] = np.sign(r[np.abs(r) > 1.0 - 1e-12])
    return r


@dataclass
class QvecResult:
    score: float
    alignment: list[int]  # embedding dimension assigned to each manual feature
    correlations: np.ndarray
    shared_ids: list[str]


def qvec(emb: EmbeddingMatrix, manual: ManualFeatureMatrix) -> QvecResult:
    """Many-to-one alignment: each manual feature takes its best-correlated dimension."""
    index = {s: i for i, s in enumerate(emb.ids)}
    shared = [s for s in manual.ids if s in index]
    if not shared:
        raise EvalError("no scribes shared between embeddings and manual features")
    if len(shared) < 2:
        raise EvalError("need at least 2 shared scribes for correlation")
    mrow = {s: i for i, s in enumerate(manual.ids)}
    E = emb.vectors[[index[s] for s in shared]]
    M = np.asarray(manual.values, dtype=np.float64)[[mrow[s] for s in shared]]
    r = correlation_matrix(M, E)
    align = r.argmax(axis=1)
    score = float(r[np.arange(len(align)), align].sum())
    return QvecResult(score, align.tolist(), r, shared)
