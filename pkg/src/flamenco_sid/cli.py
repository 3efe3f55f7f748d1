"""Command-line front end: one subcommand per pipeline stage plus ``grid`` and ``pipeline``.

Every stage reads the artifacts of earlier stages from the work directory and
writes its own next to a ``config.json`` sidecar holding the exact resolved
configuration. Configuration comes from built-in defaults, then an optional
JSON file (``--config``), then flags; unknown keys are rejected.

Work directory layout::

    f0/<source_id>.csv           pitch tracks
    contour/<source_id>.json     contour-step sequences
    motifs/<singer>.json         motif dictionaries
    dataset/<FEATURE>/<KIND>/    feature files + index.json
    models/<MODEL>_<KIND>_<FEATURE>.ck
    eval/<MODEL>_<KIND>_<FEATURE>.json
    results.csv                  the experiment grid
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import FORMAT_VERSIONS, __version__
from .audio_io import (CorpusError, UnsupportedEncodingError, WavFormatError, load_manifest, load_wav, resample,
                       slice_audio)
from .contour import contours_from_track, dumps_contours, fit_clusters, loads_contours
from .features import SAMPLE_RATE, FeatureKind, ShapeError, compute_features, write_feature_file
from .mining import MotifDictionary, SequenceDatabase, build_dictionary
from .models import ArchitectureConfig, ModelKind, build_model, load_model, save_model
from .nn import CheckpointError
from .pitch import PitchTrack, extract_f0
from .synth import default_profiles, generate_corpus, load_profiles
from .training import (DATASET_ORDER, FEATURE_ORDER, MODEL_ORDER, DatasetKind, TrainConfig, build_datasets,
                       evaluate, read_dataset, results_csv, run_experiment_grid, train, write_dataset)

log = logging.getLogger("flamenco_sid.cli")

DEFAULTS = {
    "seed": 0,
    "paths": {"corpus": "corpus", "work": "work"},
    "synth": {"n_recordings": 4, "duration": 30.0, "profiles": None, "pause_prob": 0.5},
    "pitch": {"window": 2048, "hop": 256, "harmonics": 8, "decay": 0.8, "voicing": 0.2, "sample_rate": 44100},
    "contour": {"k_min": 2, "k_max": 16, "min_frames": 5, "gap_seconds": 0.25, "criterion": "mixture",
                "cluster_scope": "recording"},
    "mining": {"min_support": 5, "len_min": 3, "len_max": 12, "occurrences": "first"},
    "features": {"kind": "MELSPEC", "fft_bins": 400, "mfcc_filters": 40},
    "dataset": {"kind": "MOTIFS", "max_per_singer": None, "by_recording": False, "test_fraction": 0.2},
    "model": ArchitectureConfig().to_dict(),
    "train": {"batch_size": 64, "max_epochs": 20, "patience": 2, "lr": 0.001, "val_fraction": 0.1},
    "grid": {"models": list(MODEL_ORDER), "features": list(FEATURE_ORDER), "datasets": list(DATASET_ORDER),
             "jobs": 1},
}
# fields filled in from the data, not the user
DEFAULTS["model"].pop("n_classes")
DEFAULTS["model"].pop("embedding_dim")
DEFAULTS["model"].pop("seed")


# ------------------------------------------------------------------------- errors


class CLIError(Exception):
    category = "internal"
    exit_code = 1


class ConfigError(CLIError):
    category = "config"
    exit_code = 2


class DependencyError(CLIError):
    category = "dependency"
    exit_code = 3


class InputError(CLIError):
    category = "input"
    exit_code = 4


def require(path: Path, producer: str) -> Path:
    if not Path(path).exists():
        raise DependencyError(f"missing input artifact {path} (produced by `{producer}`)")
    return Path(path)


# ------------------------------------------------------------------------- config


def merge(base: dict, override: dict, where: str = "") -> dict:
    """Recursive update that rejects keys absent from ``base``."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        name = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {name}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {name} must be an object")
            out[key] = merge(base[key], val, name + ".")
        else:
            out[key] = val
    return out


def parse_set(items) -> dict:
    """``section.key=value`` pairs into a nested dict; values are JSON when they parse as JSON."""
    out: dict = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = out
        parts = dotted.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return out


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {args.config} is not valid JSON ({e.msg} at line {e.lineno})") from None
        cfg = merge(cfg, user)
    flags = parse_set(args.set)
    for attr, dotted in (("seed", "seed"), ("work", "paths.work"), ("corpus", "paths.corpus"),
                         ("jobs", "grid.jobs"), ("feature", "features.kind"), ("model_kind", "model.kind"),
                         ("dataset_kind", "dataset.kind"), ("cluster_scope", "contour.cluster_scope")):
        val = getattr(args, attr, None)
        if val is not None:
            flags = merge_flag(flags, dotted, val)
    cfg = merge(cfg, flags)
    validate(cfg)
    return cfg


def merge_flag(flags: dict, dotted: str, val) -> dict:
    node = flags
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = val
    return flags


def validate(cfg: dict) -> None:
    if cfg["contour"]["cluster_scope"] not in ("recording", "corpus"):
        raise ConfigError("contour.cluster_scope must be 'recording' or 'corpus'")
    if cfg["contour"]["criterion"] not in ("mixture", "sse"):
        raise ConfigError("contour.criterion must be 'mixture' or 'sse'")
    try:
        FeatureKind.parse(cfg["features"]["kind"])
        DatasetKind.parse(cfg["dataset"]["kind"])
        for key in ("models", "features", "datasets"):
            parse = {"models": ModelKind.parse, "features": FeatureKind.parse, "datasets": DatasetKind.parse}[key]
            for v in cfg["grid"][key]:
                parse(v)
        ArchitectureConfig.from_dict(cfg["model"])
        TrainConfig(**cfg["train"], seed=cfg["seed"])
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(str(e).strip("'\"")) from None
    if int(cfg["grid"]["jobs"]) < 1:
        raise ConfigError("grid.jobs must be >= 1")


def train_config(cfg) -> TrainConfig:
    return TrainConfig(**cfg["train"], seed=cfg["seed"])


def arch_dict(cfg) -> dict:
    return {**cfg["model"], "seed": cfg["seed"]}


def sidecar(cfg: dict, stage: str, **extra) -> str:
    body = {"stage": stage, "version": __version__, "formats": FORMAT_VERSIONS, "config": cfg, **extra}
    return json.dumps(body, indent=1, sort_keys=True) + "\n"


def write_sidecar(path: Path, cfg: dict, stage: str, **extra) -> None:
    Path(path).write_text(sidecar(cfg, stage, **extra))


# ------------------------------------------------------------------------- stages


def work(cfg) -> Path:
    return Path(cfg["paths"]["work"])


def corpus_of(cfg):
    path = Path(cfg["paths"]["corpus"])
    manifest = path / "manifest.json" if path.is_dir() or not path.suffix else path
    return load_manifest(require(manifest, "synth"))


def stage_f0(cfg, src=None, out=None):
    p = cfg["pitch"]
    opts = dict(window_samples=p["window"], hop_samples=p["hop"], n_harmonics=p["harmonics"], decay=p["decay"],
                voicing_threshold=p["voicing"], sample_rate=p["sample_rate"])
    if src:
        track = extract_f0(load_wav(require(Path(src), "an audio file")), **opts)
        out = Path(out or Path(src).with_suffix(".csv"))
        out.write_text(track.to_csv())
        write_sidecar(Path(f"{out}.config.json"), cfg, "f0", input=str(src))
        log.info("frames=%d voiced=%d out=%s", len(track), int(track.voiced.sum()), out)
        return
    corpus = corpus_of(cfg)
    d = work(cfg) / "f0"
    d.mkdir(parents=True, exist_ok=True)
    for rec in corpus.recordings:
        track = extract_f0(load_wav(rec.path), **opts)
        (d / f"{rec.source_id}.csv").write_text(track.to_csv())
        log.info("source=%s frames=%d voiced=%d", rec.source_id, len(track), int(track.voiced.sum()))
    write_sidecar(d / "config.json", cfg, "f0")


def _read_track(path: Path, cfg, source_id: str) -> PitchTrack:
    p = cfg["pitch"]
    return PitchTrack.from_csv(path.read_text(), p["hop"], p["sample_rate"], source_id)


def stage_contour(cfg, src=None, out=None):
    c = cfg["contour"]
    opts = dict(k_range=(c["k_min"], c["k_max"]), min_frames=c["min_frames"], gap_seconds=c["gap_seconds"],
                criterion=c["criterion"])
    if src:
        src = require(Path(src), "f0")
        model, seqs = contours_from_track(_read_track(src, cfg, src.stem), **opts)
        out = Path(out or src.with_suffix(".json"))
        out.write_text(dumps_contours(seqs, k=model.k if model else 0))
        write_sidecar(Path(f"{out}.config.json"), cfg, "contour", input=str(src))
        log.info("sequences=%d out=%s", len(seqs), out)
        return
    corpus = corpus_of(cfg)
    tracks = {r.source_id: _read_track(require(work(cfg) / "f0" / f"{r.source_id}.csv", "f0"), cfg, r.source_id)
              for r in corpus.recordings}
    shared = None
    if c["cluster_scope"] == "corpus":
        pooled = np.concatenate([t.f0_cents[t.voiced] for t in tracks.values()])
        shared = fit_clusters(pooled, opts["k_range"], c["criterion"])
        log.info("scope=corpus k=%d frames=%d", shared.k, len(pooled))
    d = work(cfg) / "contour"
    d.mkdir(parents=True, exist_ok=True)
    for sid, track in tracks.items():
        # with a shared model the cluster set must stay fixed, so no pruning
        model, seqs = contours_from_track(track, shared, prune=shared is None, **opts)
        (d / f"{sid}.json").write_text(dumps_contours(seqs, k=model.k if model else 0))
        log.info("source=%s sequences=%d k=%d", sid, len(seqs), model.k if model else 0)
    write_sidecar(d / "config.json", cfg, "contour")


def stage_mine(cfg):
    m = cfg["mining"]
    corpus = corpus_of(cfg)
    dbs = {}
    for rec in corpus.recordings:
        path = require(work(cfg) / "contour" / f"{rec.source_id}.json", "contour")
        dbs.setdefault(rec.singer, SequenceDatabase(rec.singer)).contours.extend(loads_contours(path.read_text()))
    dicts = build_dictionary([dbs[s] for s in sorted(dbs)], m["min_support"], m["len_min"], m["len_max"],
                             m["occurrences"])
    d = work(cfg) / "motifs"
    d.mkdir(parents=True, exist_ok=True)
    for dic in dicts:
        (d / f"{dic.singer}.json").write_text(dic.dumps())
        log.info("singer=%s sequences=%d motifs=%d", dic.singer, len(dbs[dic.singer]), len(dic.motifs))
    write_sidecar(d / "config.json", cfg, "mine")


def load_dictionaries(cfg, corpus) -> list[MotifDictionary]:
    d = work(cfg) / "motifs"
    return [MotifDictionary.from_dict(json.loads(require(d / f"{s}.json", "mine").read_text()))
            for s in sorted(corpus.by_singer())]


def feature_opts(cfg) -> dict:
    f = cfg["features"]
    return {"fft_bins": f["fft_bins"], "mfcc_filters": f["mfcc_filters"]}


def stage_features(cfg, src, out=None, start=None, end=None):
    if not src:
        raise ConfigError("features needs --in (corpus-wide features are built by `dataset`)")
    buf = load_wav(require(Path(src), "an audio file"))
    if start is not None or end is not None:
        buf = slice_audio(buf, start or 0.0, end if end is not None else buf.duration_seconds)
    if buf.sample_rate != SAMPLE_RATE:
        buf = resample(buf, SAMPLE_RATE)
    fm = compute_features(cfg["features"]["kind"], buf, **feature_opts(cfg))
    out = Path(out or Path(src).with_suffix(".fmtx"))
    write_feature_file(out, fm)
    write_sidecar(Path(f"{out}.config.json"), cfg, "features", input=str(src), start=start, end=end)
    log.info("kind=%s valid_frames=%d out=%s", fm.kind.name, fm.valid_frames, out)


def dataset_dir(cfg, feature=None, kind=None) -> Path:
    feature = FeatureKind.parse(feature or cfg["features"]["kind"]).name
    kind = DatasetKind.parse(kind or cfg["dataset"]["kind"]).value
    return work(cfg) / "dataset" / feature / kind


def stage_dataset(cfg):
    corpus = corpus_of(cfg)
    dicts = load_dictionaries(cfg, corpus)
    ds = cfg["dataset"]
    variants = build_datasets(corpus, dicts, cfg["features"]["kind"], cfg["seed"], ds["max_per_singer"],
                              ds["by_recording"], ds["test_fraction"], feature_opts=feature_opts(cfg))
    for kind, v in variants.items():
        out = dataset_dir(cfg, kind=kind)
        write_dataset(out, v)
        write_sidecar(out / "config.json", cfg, "dataset")
        log.info("kind=%s feature=%s n=%d out=%s", kind.value, v.feature.name, len(v), out)


def cell_name(cfg) -> str:
    return "_".join([ModelKind.parse(cfg["model"]["kind"]).value, DatasetKind.parse(cfg["dataset"]["kind"]).value,
                     FeatureKind.parse(cfg["features"]["kind"]).name])


def stage_train(cfg):
    d = dataset_dir(cfg)
    require(d / "index.json", "dataset")
    ds = read_dataset(d)
    arch = ArchitectureConfig.from_dict({**arch_dict(cfg), "n_classes": len(ds.singers)})
    model, report = train(build_model(arch), ds, train_config(cfg))
    out = work(cfg) / "models" / f"{cell_name(cfg)}.ck"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, model, singers=ds.singers, dataset=str(d), feature=ds.feature.name, kind=ds.kind.value)
    (out.parent / f"{cell_name(cfg)}.report.json").write_text(
        json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    write_sidecar(Path(f"{out}.config.json"), cfg, "train")
    log.info("best_epoch=%d stopped_epoch=%d out=%s", report.best_epoch, report.stopped_epoch, out)


def stage_eval(cfg):
    ck = require(work(cfg) / "models" / f"{cell_name(cfg)}.ck", "train")
    d = dataset_dir(cfg)
    require(d / "index.json", "dataset")
    model, meta = load_model(ck)
    ds = read_dataset(d)
    if meta.get("singers") != ds.singers:
        raise InputError(f"checkpoint {ck} was trained on singers {meta.get('singers')}, dataset has {ds.singers}")
    ev = evaluate(model, ds)
    out = work(cfg) / "eval" / f"{cell_name(cfg)}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    body = {"accuracy_pct": round(float(ev.accuracy), 6), "auc": round(float(ev.auc), 6),
            "confusion": ev.confusion.tolist(), "singers": ds.singers,
            "per_class_auc": {ds.singers[k]: round(float(v), 6) for k, v in ev.per_class_auc.items()}}
    out.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
    write_sidecar(Path(f"{out}.config.json"), cfg, "eval")
    log.info("accuracy=%.2f auc=%.4f out=%s", ev.accuracy, ev.auc, out)


def stage_grid(cfg):
    corpus = corpus_of(cfg)
    dicts = load_dictionaries(cfg, corpus)
    g, ds = cfg["grid"], cfg["dataset"]
    rows = run_experiment_grid(corpus, dicts, arch_dict(cfg), train_config(cfg), g["models"], g["features"],
                               g["datasets"], cfg["seed"], ds["max_per_singer"], ds["by_recording"], int(g["jobs"]),
                               feature_opts(cfg))
    out = work(cfg) / "results.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(results_csv(rows))
    # the worker count never changes results, so it stays out of the sidecar
    write_sidecar(Path(f"{out}.config.json"), {**cfg, "grid": {**g, "jobs": None}}, "grid")
    log.info("cells=%d out=%s", len(rows), out)


def stage_synth(cfg):
    s = cfg["synth"]
    profiles = load_profiles(require(Path(s["profiles"]), "a profiles file")) if s["profiles"] else default_profiles()
    out = Path(cfg["paths"]["corpus"])
    corpus = generate_corpus(out, profiles, s["n_recordings"], s["duration"], cfg["seed"], pause_prob=s["pause_prob"])
    write_sidecar(out / "config.json", cfg, "synth")
    log.info("recordings=%d out=%s", len(corpus.recordings), out)


def stage_pipeline(cfg):
    for name, fn in (("f0", stage_f0), ("contour", stage_contour), ("mine", stage_mine),
                     ("dataset", stage_dataset), ("train", stage_train), ("eval", stage_eval), ("grid", stage_grid)):
        log.info("stage=%s status=start", name)
        fn(cfg)


# ----------------------------------------------------------------------- plumbing


class KeyValueFormatter(logging.Formatter):
    """``level stage message`` where the stage is the emitting module's short name."""

    def format(self, record):
        stage = record.name.rsplit(".", 1)[-1]
        return f"{record.levelname.lower()} {getattr(record, 'stage', stage)} {record.getMessage()}"


class StageFilter(logging.Filter):
    def __init__(self):
        super().__init__()
        self.stage = "cli"

    def filter(self, record):
        if record.name == log.name:
            record.stage = self.stage
        return True


def build_parser() -> argparse.ArgumentParser:
    formats = " ".join(f"{k}={v}" for k, v in sorted(FORMAT_VERSIONS.items()))
    # the raw formatter keeps the version string on one line
    ap = argparse.ArgumentParser(prog="flamenco-sid", description="Singer identification from melodic motifs.",
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"flamenco-sid {__version__} formats: {formats}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file with per-stage sections")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("--work", help="work directory (paths.work)")
    common.add_argument("--corpus", help="corpus directory or manifest (paths.corpus)")
    common.add_argument("--seed", type=int)
    common.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("f0", "pitch tracks (one file with --in, else the whole corpus)"),
                           ("contour", "contour-step sequences"), ("mine", "closed motif dictionaries per singer"),
                           ("features", "feature file for one audio file"), ("dataset", "motif/random datasets"),
                           ("train", "train one (model, dataset, feature) cell"), ("eval", "evaluate that cell"),
                           ("grid", "the model x dataset x feature experiment grid"),
                           ("synth", "render the synthetic corpus"), ("pipeline", "run every stage in order")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name in ("f0", "contour", "features"):
            p.add_argument("--in", dest="src", help="single input file")
            p.add_argument("--out", help="single output file")
        if name == "features":
            p.add_argument("--start", type=float)
            p.add_argument("--end", type=float)
        if name == "contour":
            p.add_argument("--cluster-scope", choices=["recording", "corpus"])
        if name in ("features", "dataset", "train", "eval"):
            p.add_argument("--feature", help="SPEC, MELSPEC or MFCC")
        if name in ("train", "eval"):
            p.add_argument("--model-kind", help="CRNN, RESNET or RES_BLSTM")
            p.add_argument("--dataset-kind", help="MOTIFS, MOTIFS_SEGMENT or RANDOM")
        if name in ("grid", "pipeline"):
            p.add_argument("--jobs", type=int, help="parallel worker processes for grid cells")
    return ap


def run(args) -> None:
    cfg = resolve_config(args)
    cmd = args.command
    if cmd == "f0":
        stage_f0(cfg, args.src, args.out)
    elif cmd == "contour":
        stage_contour(cfg, args.src, args.out)
    elif cmd == "features":
        stage_features(cfg, args.src, args.out, args.start, args.end)
    else:
        {"mine": stage_mine, "dataset": stage_dataset, "train": stage_train, "eval": stage_eval,
         "grid": stage_grid, "synth": stage_synth, "pipeline": stage_pipeline}[cmd](cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(KeyValueFormatter())
    stage_filter = StageFilter()
    stage_filter.stage = args.command
    handler.addFilter(stage_filter)
    root = logging.getLogger("flamenco_sid")
    root.handlers[:] = [handler]
    root.setLevel(args.log_level.upper())
    root.propagate = False
    try:
        run(args)
    except CLIError as e:
        err = e
    except (WavFormatError, UnsupportedEncodingError, CorpusError, CheckpointError, ShapeError) as e:
        err = InputError(str(e))
    except FileNotFoundError as e:
        err = DependencyError(f"missing input artifact {e.filename or e}")
    except (ValueError, KeyError) as e:
        err = InputError(str(e).strip("'\""))
    except Exception as e:  # noqa: BLE001 - still one machine-readable line
        err = CLIError(f"{type(e).__name__}: {e}")
    else:
        return 0
    msg = " ".join(str(err).split())
    print(f"error category={err.category} message={json.dumps(msg)}", file=sys.stderr)
    return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
