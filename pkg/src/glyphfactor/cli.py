"""``glyphfactor <command> --config run.yaml [--key value ...]``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 failure while
running. Error lines start with ``error:``. Every command writes
``provenance_<command>.json`` (config, seed, input hashes) next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import augment_corpus
from .config import COMMANDS, ConfigError, describe, load_config
from .corpus import CorpusError, corpus_hash, corpus_stats, ingest, load_corpus, load_manifest
from .eval import (
    EvalError,
    ProbeConfig,
    baseline_most_common,
    filter_findplaces,
    probe_findplace,
    qvec,
    read_embeddings,
    read_findplaces,
    read_manual_features,
    write_embeddings,
)
from .model import (
    Autoencoder,
    FactorModel,
    TrainConfig,
    reconstruct_grid,
    train,
    train_autoencoder,
)
from .nncore import load_checkpoint, load_state, module_state, save_checkpoint
from .report import BASELINE, Fragment, emit_report
from .synth import SynthSpec, generate

log = logging.getLogger("glyphfactor")

LOG_COLUMNS = ["epoch", "recon_mse", "sign_bce", "scribe_bce", "total"]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(path.rglob("*")):
            if p.is_file() and not p.name.startswith("provenance_"):
                h.update(p.relative_to(path).as_posix().encode())
                h.update(p.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def write_provenance(out_dir: Path, command: str, cfg, inputs: dict[str, str]) -> Path:
    record = {
        "command": command,
        "version": __version__,
        "config": dataclasses.asdict(cfg),
        "seed": getattr(cfg, "seed", None),
        "inputs": {k: _sha256(Path(v)) for k, v in inputs.items() if v},
    }
    path = out_dir / f"provenance_{command}.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _require(cfg, *keys: str) -> None:
    for k in keys:
        if not getattr(cfg, k):
            raise ConfigError(f"config key {k!r} is required")


def _existing(cfg, key: str) -> Path:
    p = Path(getattr(cfg, key))
    if not p.exists():
        raise ConfigError(f"config key {key!r}: {p} does not exist")
    return p


def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands --------------------------------------------------------------------

def cmd_ingest(cfg) -> Path:
    _require(cfg, "manifest")
    src = _existing(cfg, "manifest")
    out = _out_dir(cfg)
    manifest = ingest(load_manifest(src), out, cfg.ink_is_dark)
    print(corpus_stats(manifest).summary())
    write_provenance(out, "ingest", cfg, {"manifest": str(src)})
    return out


def cmd_augment(cfg) -> Path:
    _require(cfg, "corpus")
    src = _existing(cfg, "corpus")
    out = _out_dir(cfg)
    manifest = augment_corpus(load_manifest(src, check_images=False), out)
    print(f"{len(manifest)} augmented glyphs")
    write_provenance(out, "augment", cfg, {"corpus": str(src)})
    return out


def cmd_synth(cfg) -> Path:
    out = _out_dir(cfg)
    spec = SynthSpec(J=cfg.J, K=cfg.K, images_per_pair=cfg.images_per_pair, density=cfg.density,
                     n_findplaces=cfg.n_findplaces, seed=cfg.seed)
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sc = generate(spec, out)
    print(f"{len(sc.manifest)} glyphs, {spec.J} signs, {spec.K} scribes, {spec.n_findplaces} findplaces")
    write_provenance(out, "synth", cfg, {})
    return out


def write_train_log(path: Path, rows: list[dict]) -> None:
    cols = [c for c in LOG_COLUMNS if rows and c in rows[0]]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([r["epoch"]] + [repr(float(r[c])) for c in cols[1:]])


def cmd_train(cfg) -> Path:
    _require(cfg, "corpus")
    src = _existing(cfg, "corpus")
    if cfg.model not in ("factor", "autoencoder"):
        raise ConfigError(f"config key 'model': expected factor or autoencoder, got {cfg.model!r}")
    tc = cfg.train_config()
    tc.validate()
    manifest = load_manifest(src, check_images=False)
    corpus = load_corpus(manifest)
    out = _out_dir(cfg)
    progress = lambda row: log.info("epoch %d total=%.6f", row["epoch"], row["total"])
    if cfg.model == "factor":
        res = train(corpus, tc, progress=progress)
        state = module_state(res.model)
    else:
        res = train_autoencoder(corpus, tc, progress=progress)
        state = module_state(res.model)
        state["scribe_means"] = res.scribe_means
    save_checkpoint(out / "checkpoint.gfc", state)
    meta = {
        "model": cfg.model,
        "train_config": dataclasses.asdict(tc),
        "corpus_hash": corpus_hash(manifest),
        "sign_labels": corpus.sign_labels,
        "scribe_labels": corpus.scribe_labels,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    write_train_log(out / "train_log.csv", res.log)
    write_provenance(out, "train", cfg, {"corpus": str(src)})
    if res.log:
        last = res.log[-1]
        print(" ".join(f"{k}={last[k]:.6f}" if k != "epoch" else f"epoch={last[k]}" for k in last))
    return out


def load_run(run_dir):
    """Rebuild the trained model of a ``train`` output directory; returns (model, meta, state)."""
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "meta.json").read_text(encoding="utf-8"))
    state = load_checkpoint(run_dir / "checkpoint.gfc")
    tc = TrainConfig(**meta["train_config"])
    if meta["model"] == "factor":
        model = FactorModel(len(meta["sign_labels"]), len(meta["scribe_labels"]), tc)
        load_state(model, state)
    else:
        model = Autoencoder(tc)
        load_state(model, {k: v for k, v in state.items() if k != "scribe_means"})
    return model, meta, state


def cmd_embed(cfg) -> Path:
    _require(cfg, "run")
    run = _existing(cfg, "run")
    out = Path(cfg.out or run)
    out.mkdir(parents=True, exist_ok=True)
    model, meta, state = load_run(run)
    if meta["model"] == "factor":
        write_embeddings(out / "scribe_embeddings.csv", model.scribe_table(), meta["scribe_labels"])
        write_embeddings(out / "sign_embeddings.csv", model.sign_table(), meta["sign_labels"])
    else:
        write_embeddings(out / "scribe_embeddings.csv", state["scribe_means"], meta["scribe_labels"])
    write_provenance(out, "embed", cfg, {"checkpoint": str(run / "checkpoint.gfc")})
    return out


def cmd_reconstruct(cfg) -> Path:
    _require(cfg, "run")
    run = _existing(cfg, "run")
    out = Path(cfg.out or run)
    out.mkdir(parents=True, exist_ok=True)
    model, meta, _ = load_run(run)
    if meta["model"] != "factor":
        raise ConfigError("reconstruct needs a factor-model run")

    def ids(requested: list[str], labels: list[str], what: str) -> list[int]:
        if not requested:
            return list(range(len(labels)))
        missing = [r for r in requested if r not in labels]
        if missing:
            raise ConfigError(f"config key {what!r}: unknown label(s) {', '.join(missing)}")
        return [labels.index(r) for r in requested]

    scribes = ids(cfg.scribes, meta["scribe_labels"], "scribes")
    signs = ids(cfg.signs, meta["sign_labels"], "signs")
    reconstruct_grid(model, scribes, signs, out / cfg.image)
    write_provenance(out, "reconstruct", cfg, {"checkpoint": str(run / "checkpoint.gfc")})
    return out / cfg.image


def cmd_eval_probe(cfg) -> Path:
    _require(cfg, "embeddings", "findplaces")
    emb_path, fp_path = _existing(cfg, "embeddings"), _existing(cfg, "findplaces")
    if cfg.average not in ("macro", "micro"):
        raise ConfigError(f"config key 'average': expected macro or micro, got {cfg.average!r}")
    emb = filter_findplaces(read_embeddings(emb_path).with_findplaces(read_findplaces(fp_path)), cfg.min_scribes)
    pc = ProbeConfig(folds=cfg.folds, inits=cfg.inits, epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size,
                     init_std=cfg.init_std, standardize=cfg.standardize, average=cfg.average, seed=cfg.seed)
    res = probe_findplace(emb, pc)
    base = baseline_most_common(emb.findplaces, cfg.folds, cfg.seed, cfg.average)
    out = _out_dir(cfg)
    fragments = [
        Fragment(cfg.name, "f1", res.mean_f1, {"fold_f1": res.fold_f1, "policy": res.policy}),
        Fragment(BASELINE, "f1", base.mean_f1, {"fold_f1": base.fold_f1}),
    ]
    meta = {"command": "eval-probe", "seed": cfg.seed, "average": cfg.average, "folds": cfg.folds,
            "inits": cfg.inits, "scribes": len(emb.ids), "findplaces": len(set(emb.findplaces)),
            "embeddings_sha256": _sha256(emb_path)}
    emit_report(fragments, out / "report.txt", meta)
    print(f"{cfg.name} F1 {res.mean_f1:.3f}  most-common F1 {base.mean_f1:.3f}")
    write_provenance(out, "eval-probe", cfg, {"embeddings": str(emb_path), "findplaces": str(fp_path)})
    return out / "report.txt"


def cmd_eval_qvec(cfg) -> Path:
    _require(cfg, "embeddings", "manual")
    emb_path, man_path = _existing(cfg, "embeddings"), _existing(cfg, "manual")
    res = qvec(read_embeddings(emb_path), read_manual_features(man_path))
    out = _out_dir(cfg)
    meta = {"command": "eval-qvec", "shared_scribes": len(res.shared_ids),
            "embeddings_sha256": _sha256(emb_path), "manual_sha256": _sha256(man_path)}
    emit_report([Fragment(cfg.name, "qvec", res.score, {"alignment": res.alignment})], out / "report.txt", meta)
    print(f"{cfg.name} QVEC {res.score:.4f} over {len(res.shared_ids)} scribes")
    write_provenance(out, "eval-qvec", cfg, {"embeddings": str(emb_path), "manual": str(man_path)})
    return out / "report.txt"


HANDLERS = {
    "ingest": cmd_ingest,
    "augment": cmd_augment,
    "synth": cmd_synth,
    "train": cmd_train,
    "embed": cmd_embed,
    "reconstruct": cmd_reconstruct,
    "eval-probe": cmd_eval_probe,
    "eval-qvec": cmd_eval_qvec,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


# bad input data counts as a validation error; anything else is a runtime failure
VALIDATION_ERRORS = (ConfigError, CorpusError, EvalError)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="glyphfactor", description="Factored sign/scribe glyph embeddings.")
    p.add_argument("command", choices=list(HANDLERS))
    p.add_argument("--config", help="YAML file of settings for the command")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override the output location")
    p.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    p.add_argument("--show-defaults", action="store_true", help="print the command's settings and exit")
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    if args.show_defaults:
        print(describe(args.command))
        return 0
    try:
        seed = args.seed if "seed" in {f.name for f in dataclasses.fields(COMMANDS[args.command])} else None
        if args.seed is not None and seed is None:
            raise ConfigError(f"{args.command} takes no seed")
        cfg = load_config(args.command, args.config, rest, seed=seed, out=args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        HANDLERS[args.command](cfg)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # reported as a runtime failure with its message
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
