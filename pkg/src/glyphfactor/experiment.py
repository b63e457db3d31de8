"""Synthetic end-to-end comparison of model variants.

Each seed renders a synthetic corpus, trains every requested variant on it and
probes the learned scribe embeddings for findplace. QVEC is computed against
the generator's numeric style parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import load_corpus
from .eval import (
    EmbeddingMatrix,
    ManualFeatureMatrix,
    ProbeConfig,
    baseline_most_common,
    filter_findplaces,
    probe_findplace,
    qvec,
)
from .model import TrainConfig, train, train_autoencoder
from .report import BASELINE, Fragment
from .synth import STYLE_FIELDS, SynthSpec, generate

FULL = "+Recon +Scribe +Sign"
RECON_ONLY = "+Recon -Scribe -Sign"
AUTOENCODER = "Autoencoder"

# loss toggles per variant; the autoencoder is a separate model
VARIANTS: dict[str, dict] = {
    FULL: {},
    "+Recon +Scribe -Sign": {"sign_disc": False},
    "+Recon -Scribe +Sign": {"scribe_disc": False},
    RECON_ONLY: {"scribe_disc": False, "sign_disc": False},
    AUTOENCODER: {},
}


@dataclass
class ExperimentConfig:
    J: int = 6
    K: int = 9
    n_findplaces: int = 3
    density: float = 0.8
    images_per_pair: int = 1
    seeds: tuple[int, ...] = (0, 1, 2)
    variants: tuple[str, ...] = (FULL, RECON_ONLY)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(width=0.125, lr=1e-3, epochs=80, dtype="float32"))
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    keep_models: bool = False


@dataclass
class SeedResult:
    seed: int
    baseline_f1: float
    f1: dict[str, float]
    qvec: dict[str, float]
    seconds: dict[str, float]
    spec: SynthSpec | None = None
    observed: set[tuple[int, int]] = field(default_factory=set)  # (scribe, sign) cells with glyphs
    models: dict = field(default_factory=dict, repr=False)


@dataclass
class ExperimentResult:
    seeds: list[SeedResult]
    seconds: float

    def mean_f1(self, variant: str) -> float:
        return float(np.mean([s.f1[variant] for s in self.seeds]))

    def mean_qvec(self, variant: str) -> float:
        return float(np.mean([s.qvec[variant] for s in self.seeds]))

    @property
    def mean_baseline(self) -> float:
        return float(np.mean([s.baseline_f1 for s in self.seeds]))

    def fragments(self) -> list[Fragment]:
        out = []
        for v in self.seeds[0].f1:
            per_seed = [s.f1[v] for s in self.seeds]
            out.append(Fragment(v, "f1", self.mean_f1(v), {"per_seed": per_seed}))
            out.append(Fragment(v, "qvec", self.mean_qvec(v), {"per_seed": [s.qvec[v] for s in self.seeds]}))
        out.append(Fragment(BASELINE, "f1", self.mean_baseline, {"per_seed": [s.baseline_f1 for s in self.seeds]}))
        return out


def run_synthetic(config: ExperimentConfig, work_dir, progress=None) -> ExperimentResult:
    unknown = [v for v in config.variants if v not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown variants: {unknown}")
    start = time.perf_counter()
    seeds = []
    for seed in config.seeds:
        spec = SynthSpec(J=config.J, K=config.K, images_per_pair=config.images_per_pair, density=config.density,
                         n_findplaces=config.n_findplaces, seed=seed)
        sc = generate(spec, Path(work_dir) / f"seed{seed}")
        corpus = load_corpus(sc.manifest)
        findplaces = {s.scribe: s.findplace for s in sc.styles}
        styles = {s.scribe: [getattr(s, f) for f in STYLE_FIELDS] for s in sc.styles}
        manual = ManualFeatureMatrix(np.array([styles[k] for k in corpus.scribe_labels]),
                                     list(corpus.scribe_labels), list(STYLE_FIELDS))
        probe_cfg = replace(config.probe, seed=seed)
        res = SeedResult(seed, 0.0, {}, {}, {}, spec, set(sc.observed))
        for variant in config.variants:
            t0 = time.perf_counter()
            tc = replace(config.train, seed=seed, **VARIANTS[variant])
            if variant == AUTOENCODER:
                trained = train_autoencoder(corpus, tc)
                Z, model = trained.scribe_means, trained.model
            else:
                model = train(corpus, tc).model
                Z = model.scribe_table()
            if config.keep_models:
                res.models[variant] = model
            emb = filter_findplaces(EmbeddingMatrix(np.asarray(Z, dtype=np.float64), list(corpus.scribe_labels))
                                    .with_findplaces(findplaces), min_scribes=3)
            res.f1[variant] = probe_findplace(emb, probe_cfg).mean_f1
            res.qvec[variant] = qvec(EmbeddingMatrix(np.asarray(Z, dtype=np.float64), list(corpus.scribe_labels)),
                                     manual).score
            res.seconds[variant] = time.perf_counter() - t0
            if progress:
                progress(seed, variant, res)
            res.baseline_f1 = baseline_most_common(emb.findplaces, probe_cfg.folds, seed, probe_cfg.average).mean_f1
        seeds.append(res)
    return ExperimentResult(seeds, time.perf_counter() - start)
