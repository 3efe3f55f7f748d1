"""Dataset variants (motifs, motifs in 3 s context, random crops), training and evaluation."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .audio_io import AudioBuffer, Corpus, context_window, load_wav, resample, slice_audio
from .features import COLS, ROWS, SAMPLE_RATE, FeatureKind, FeatureMatrix, compute_features
from .mining import MotifDictionary
from .models import ArchitectureConfig, ModelKind, SIDModel, build_model
from .nn import functional as F
from .pitch import DEFAULT_RATE, DEFAULT_WINDOW

log = logging.getLogger(__name__)

SEGMENT_SECONDS = 3.0
TEST_FRACTION = 0.2
VAL_FRACTION = 0.1


class DatasetKind(str, enum.Enum):
    MOTIFS = "MOTIFS"
    MOTIFS_SEGMENT = "MOTIFS_SEGMENT"
    RANDOM = "RANDOM"

    @classmethod
    def parse(cls, name) -> "DatasetKind":
        key = str(getattr(name, "value", name)).upper().replace("-", "_").replace("+", "_")
        return cls({"MOTIFS_SEGMENTS": "MOTIFS_SEGMENT", "SEGMENT": "MOTIFS_SEGMENT"}.get(key, key))


@dataclass(frozen=True)
class Instance:
    source_id: str
    singer: str
    start: float  # seconds
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class DatasetVariant:
    kind: DatasetKind
    feature: FeatureKind
    singers: list[str]
    instances: list[Instance]
    labels: np.ndarray
    features: np.ndarray  # n x 128 x 426, float32
    valid_frames: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    mean: np.ndarray = field(default_factory=lambda: np.zeros(ROWS, np.float32))
    std: np.ndarray = field(default_factory=lambda: np.ones(ROWS, np.float32))
    seed: int = 0

    def __len__(self):
        return len(self.instances)

    def index_dict(self) -> dict:
        return {
            "kind": self.kind.value, "feature": self.feature.name, "singers": self.singers, "seed": self.seed,
            "instances": [{"source_id": i.source_id, "singer": i.singer, "start": round(i.start, 6),
                           "end": round(i.end, 6), "label": int(l), "valid_frames": int(v)}
                          for i, l, v in zip(self.instances, self.labels, self.valid_frames)],
            "train": self.train_idx.tolist(), "test": self.test_idx.tolist(),
            "mean": self.mean.tolist(), "std": self.std.tolist(),
        }


# ---------------------------------------------------------------------- spans


def frames_to_seconds(start_frame: int, end_frame: int, hop_seconds: float,
                      window_seconds: float = DEFAULT_WINDOW / DEFAULT_RATE) -> tuple[float, float]:
    """Time span covered by pitch frames ``[start_frame, end_frame)``.

    Frame i is centred at i*hop + window/2, so the span runs from half a hop
    before the first centre to half a hop after the last.
    """
    off = 0.5 * window_seconds - 0.5 * hop_seconds
    return max(0.0, start_frame * hop_seconds + off), end_frame * hop_seconds + off


def motif_instances(dictionaries: list[MotifDictionary], durations: dict[str, float]) -> dict[str, list[Instance]]:
    """Distinct occurrence spans per singer, sorted; duplicates across motifs are merged."""
    out = {}
    for d in dictionaries:
        spans = set()
        for m in d.motifs:
            for o in m.occurrences:
                a, b = frames_to_seconds(o.start_frame, o.end_frame, d.hop_seconds)
                b = min(b, durations.get(o.source_id, b))
                if b > a:
                    spans.add((o.source_id, round(a, 6), round(b, 6)))
        out[d.singer] = [Instance(s, d.singer, a, b) for s, a, b in sorted(spans)]
    return out


def _overlaps(a0, a1, spans) -> bool:
    return any(a0 < b1 and b0 < a1 for b0, b1 in spans)


def feasible_onsets(duration: float, length: float, spans) -> list[tuple[float, float]]:
    """Closed onset intervals ``[lo, hi]`` where a crop of ``length`` fits in
    ``[0, duration]`` without overlapping any of ``spans``."""
    free = [(0.0, duration - length)]
    if free[0][1] < 0:
        return []
    for b0, b1 in spans:
        # onsets in the open interval (b0 - length, b1) would overlap [b0, b1)
        cut_lo, cut_hi = b0 - length, b1
        nxt = []
        for lo, hi in free:
            if cut_hi <= lo or cut_lo >= hi:
                nxt.append((lo, hi))
                continue
            if lo <= cut_lo:
                nxt.append((lo, cut_lo))
            if cut_hi <= hi:
                nxt.append((cut_hi, hi))
        free = nxt
    return free


def random_instances(motifs: list[Instance], recordings: dict[str, float], forbidden: dict[str, list],
                     rng: np.random.Generator) -> list[Instance]:
    """Uniform random crops matching the durations of ``motifs``, clear of ``forbidden`` spans.

    ``recordings`` maps source_id to duration. The onset is drawn uniformly
    from the union over recordings of the onsets that avoid every forbidden
    span of that recording; a duration with no such onset is an error.
    """
    out = []
    ids = sorted(recordings)
    for m in motifs:
        dur = m.duration
        cands = [(s, lo, hi) for s in ids for lo, hi in feasible_onsets(recordings[s], dur, forbidden.get(s, []))]
        widths = np.array([hi - lo for _, lo, hi in cands])
        if not cands:
            raise ValueError(f"no room for a {dur:.2f} s random crop of {m.singer} clear of motif spans")
        if widths.sum() > 0:
            u = float(rng.uniform(0, widths.sum()))
            j = min(int(np.searchsorted(np.cumsum(widths), u, side="right")), len(cands) - 1)
            s, lo, _ = cands[j]
            a = lo + (u - (np.cumsum(widths)[j] - widths[j]))
        else:
            s, a, _ = cands[int(rng.integers(len(cands)))]
        a = round(float(a), 6)
        out.append(Instance(s, m.singer, a, round(a + dur, 6)))
    return out


# --------------------------------------------------------------------- splits


def stratified_split(labels: np.ndarray, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffle; the first round(fraction * n_c) of each class go to the held-out side."""
    keep, held = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        k = int(round(fraction * len(idx)))
        held.extend(idx[:k])
        keep.extend(idx[k:])
    return np.sort(np.array(keep, dtype=np.int64)), np.sort(np.array(held, dtype=np.int64))


def recording_split(instances: list[Instance], labels: np.ndarray, fraction: float,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Whole recordings go to the test side, per singer, until it holds >= fraction of instances."""
    test = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        recs = sorted({instances[i].source_id for i in idx})
        recs = [recs[i] for i in rng.permutation(len(recs))]
        chosen, count = set(), 0
        for r in recs[:-1]:  # always leave one recording for training
            if count >= fraction * len(idx):
                break
            chosen.add(r)
            count += sum(instances[i].source_id == r for i in idx)
        test.extend(i for i in idx if instances[i].source_id in chosen)
    test = np.sort(np.array(test, dtype=np.int64))
    train = np.setdiff1d(np.arange(len(labels)), test)
    return train, test


def standardization(features: np.ndarray, idx: np.ndarray, valid_frames=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-row mean and std over the given instances; flat rows keep std 1.

    With ``valid_frames`` only the real frames of each instance count, so the
    zero padding does not drag the statistics (the model keeps padding at zero
    after standardising).
    """
    sub = features[idx]
    if valid_frames is None:
        vals = sub.astype(np.float64).transpose(1, 0, 2).reshape(sub.shape[1], -1)
    else:
        keep = np.arange(sub.shape[2])[None, :] < np.asarray(valid_frames)[idx][:, None]
        vals = sub.transpose(1, 0, 2)[:, keep].astype(np.float64)
    if vals.shape[1] == 0:
        raise ValueError("no frames to standardise")
    mean = vals.mean(axis=1)
    std = vals.std(axis=1)
    std = np.where(std > 1e-8, std, 1.0)
    return mean.astype(np.float32), std.astype(np.float32)


# ----------------------------------------------------------------- extraction


def _feature_rows(kind: FeatureKind, audio: dict[str, AudioBuffer], instances, crop,
                  feature_opts: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
    feats = np.zeros((len(instances), ROWS, COLS), np.float32)
    valid = np.zeros(len(instances), np.int64)
    for i, inst in enumerate(instances):
        fm = compute_features(kind, crop(audio[inst.source_id], inst), **(feature_opts or {}))
        feats[i] = fm.data
        valid[i] = fm.valid_frames
    return feats, valid


def load_audio_16k(corpus: Corpus) -> dict[str, AudioBuffer]:
    out = {}
    for rec in corpus.recordings:
        buf = load_wav(rec.path)
        out[rec.source_id] = buf if buf.sample_rate == SAMPLE_RATE else resample(buf, SAMPLE_RATE)
    return out


def build_datasets(corpus: Corpus, dictionaries: list[MotifDictionary], feature, seed: int = 0,
                   max_per_singer: int | None = None, by_recording: bool = False,
                   test_fraction: float = TEST_FRACTION, kinds=None, audio: dict | None = None,
                   feature_opts: dict | None = None) -> dict:
    """Build the MOTIFS, MOTIFS_SEGMENT and RANDOM variants with a shared split.

    Motif occurrences are deduplicated by (source_id, span). With
    ``max_per_singer`` a seeded subset is kept per singer. MOTIFS and
    MOTIFS_SEGMENT are index-aligned (same instances, same split); RANDOM
    uses the same per-singer counts and the same split positions.
    ``feature_opts`` (``fft_bins``, ``mfcc_filters``) go to the extractor.
    """
    feature = FeatureKind.parse(feature)
    kinds = [DatasetKind.parse(k) for k in (kinds or list(DatasetKind))]
    audio = audio if audio is not None else load_audio_16k(corpus)
    durations = {sid: b.duration_seconds for sid, b in audio.items()}
    per_singer = motif_instances(dictionaries, durations)
    rng = np.random.default_rng([seed, 1])
    singers = []
    motifs: list[Instance] = []
    for singer in sorted(per_singer):
        inst = per_singer[singer]
        if not inst:
            log.warning("singer %s has no motif occurrences; excluded", singer)
            continue
        if max_per_singer and len(inst) > max_per_singer:
            pick = np.sort(rng.choice(len(inst), max_per_singer, replace=False))
            inst = [inst[i] for i in pick]
        singers.append(singer)
        motifs.extend(inst)
    if len(singers) < 2:
        raise ValueError("need at least two singers with motif occurrences")
    labels = np.array([singers.index(m.singer) for m in motifs], dtype=np.int64)

    forbidden: dict[str, list] = {}
    for insts in per_singer.values():
        for m in insts:
            forbidden.setdefault(m.source_id, []).append((m.start, m.end))
    by_s = corpus.by_singer()
    randoms: list[Instance] = []
    rrng = np.random.default_rng([seed, 2])
    for s in singers if DatasetKind.RANDOM in kinds else []:
        recs = {r.source_id: durations[r.source_id] for r in by_s[s]}
        randoms.extend(random_instances([m for m in motifs if m.singer == s], recs, forbidden, rrng))

    split_rng = np.random.default_rng([seed, 3])
    if by_recording:
        train_idx, test_idx = recording_split(motifs, labels, test_fraction, split_rng)
    else:
        train_idx, test_idx = stratified_split(labels, test_fraction, split_rng)

    crops = {
        DatasetKind.MOTIFS: (motifs, lambda b, m: slice_audio(b, m.start, m.end)),
        DatasetKind.MOTIFS_SEGMENT: (motifs, lambda b, m: context_window(b, m.start, m.end, SEGMENT_SECONDS)),
        DatasetKind.RANDOM: (randoms, lambda b, m: slice_audio(b, m.start, m.end)),
    }
    out = {}
    for kind in kinds:
        insts, crop = crops[kind]
        feats, valid = _feature_rows(feature, audio, insts, crop, feature_opts)
        mean, std = standardization(feats, train_idx, valid)
        out[kind] = DatasetVariant(kind, feature, list(singers), list(insts), labels.copy(), feats, valid,
                                   train_idx.copy(), test_idx.copy(), mean, std, seed)
        log.info("dataset kind=%s feature=%s n=%d train=%d test=%d", kind.value, feature.name, len(insts),
                 len(train_idx), len(test_idx))
    return out


# ------------------------------------------------------------------- training


@dataclass
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 20
    patience: int = 2
    lr: float = 0.001
    val_fraction: float = VAL_FRACTION
    seed: int = 0


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    wall_time: float = 0.0

    def to_dict(self, include_time: bool = False) -> dict:
        d = asdict(self)
        if not include_time:
            d.pop("wall_time")
        return d


def _batches(idx: np.ndarray, size: int):
    """Consecutive chunks; a trailing chunk of one instance joins the previous one."""
    chunks = [idx[i : i + size] for i in range(0, len(idx), size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def predict_logits(model: SIDModel, feats: np.ndarray, batch_size: int = 64) -> np.ndarray:
    model.eval()
    out = []
    with nn.no_grad():
        for chunk in _batches(np.arange(len(feats)), batch_size):
            out.append(model(feats[chunk][:, None]).data.astype(np.float64))
    return np.concatenate(out) if out else np.zeros((0, model.cfg.n_classes))


def _loss_acc(logits: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean()), float((logits.argmax(1) == labels).mean())


def train(model: SIDModel, dataset: DatasetVariant, hp: TrainConfig | None = None):
    """Adam on mean cross-entropy, early stopping on validation loss.

    The validation slice is a stratified ``val_fraction`` of the training
    split. Training stops after ``patience`` epochs without a new best
    validation loss, and the best-epoch weights are restored.
    """
    hp = hp or TrainConfig()
    if len(dataset.train_idx) == 0:
        raise ValueError("empty training split")
    t0 = time.perf_counter()
    rng = np.random.default_rng([hp.seed, 4])
    labels = dataset.labels
    tr_labels = labels[dataset.train_idx]
    fit_pos, val_pos = stratified_split(tr_labels, hp.val_fraction, rng)
    fit_idx, val_idx = dataset.train_idx[fit_pos], dataset.train_idx[val_pos]
    if len(val_idx) == 0:
        val_idx = fit_idx
    model.input_mean[...] = dataset.mean
    model.input_std[...] = dataset.std
    nn.manual_seed(hp.seed)  # fresh dropout stream per run
    for mod in model._modules():
        if isinstance(mod, nn.Dropout):
            mod.rng = nn.generator("dropout")
    opt = nn.Adam(model.parameters(), lr=hp.lr)
    report = TrainReport()
    best, best_state, bad = np.inf, None, 0
    feats = dataset.features
    for epoch in range(1, hp.max_epochs + 1):
        model.train()
        order = fit_idx[rng.permutation(len(fit_idx))]
        losses, correct, seen = [], 0, 0
        for chunk in _batches(order, hp.batch_size):
            opt.zero_grad()
            logits = model(feats[chunk][:, None])
            loss = F.cross_entropy(logits, labels[chunk])
            loss.backward()
            opt.step()
            losses.append(loss.item() * len(chunk))
            correct += int((logits.data.argmax(1) == labels[chunk]).sum())
            seen += len(chunk)
        v_loss, v_acc = _loss_acc(predict_logits(model, feats[val_idx], hp.batch_size), labels[val_idx])
        row = {"epoch": epoch, "train_loss": sum(losses) / seen, "train_acc": correct / seen,
               "val_loss": v_loss, "val_acc": v_acc}
        report.epochs.append(row)
        log.info("train epoch=%d train_loss=%.4f train_acc=%.3f val_loss=%.4f val_acc=%.3f",
                 epoch, row["train_loss"], row["train_acc"], v_loss, v_acc)
        if v_loss < best:
            best, bad, report.best_epoch = v_loss, 0, epoch
            best_state = {k: v.copy() for k, v in model.state_dict().items()}
        else:
            bad += 1
        report.stopped_epoch = epoch
        if bad >= hp.patience:
            break
    model.load_state_dict(best_state)
    model.eval()
    report.wall_time = time.perf_counter() - t0
    return model, report


# ----------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    accuracy: float  # percent
    auc: float
    confusion: np.ndarray
    per_class_auc: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "auc": self.auc, "confusion": self.confusion.tolist(),
                "per_class_auc": self.per_class_auc}


def roc_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Area under the ROC curve by the trapezoid rule; tied scores form one ROC step."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos, n_neg = positive.sum(), (~positive).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both positives and negatives")
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], positive[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tpr = np.r_[0.0, np.cumsum(p)[last] / n_pos]
    fpr = np.r_[0.0, np.cumsum(~p)[last] / n_neg]
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2))


def multiclass_auc(probs: np.ndarray, labels: np.ndarray, average: str = "macro") -> tuple[float, dict]:
    """One-vs-rest AUC; classes absent from ``labels`` are left out with a warning."""
    k = probs.shape[1]
    if average == "micro":
        onehot = np.eye(k, dtype=bool)[labels]
        return roc_auc(probs.ravel(), onehot.ravel()), {}
    if average != "macro":
        raise ValueError("average must be 'macro' or 'micro'")
    per = {}
    for c in range(k):
        pos = labels == c
        if not pos.any() or pos.all():
            log.warning("class %d absent from (or alone in) the test split; left out of macro AUC", c)
            continue
        per[c] = roc_auc(probs[:, c], pos)
    return (float(np.mean(list(per.values()))) if per else float("nan")), per


def evaluate(model: SIDModel, dataset: DatasetVariant, average: str = "macro", idx=None) -> EvalReport:
    idx = dataset.test_idx if idx is None else np.asarray(idx)
    if len(idx) == 0:
        raise ValueError("empty test split")
    logits = predict_logits(model, dataset.features[idx])
    z = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    labels = dataset.labels[idx]
    k = model.cfg.n_classes
    pred = probs.argmax(axis=1)
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (labels, pred), 1)
    auc, per = multiclass_auc(probs, labels, average)
    return EvalReport(100.0 * np.trace(conf) / conf.sum(), auc, conf, {int(c): a for c, a in per.items()})


# ----------------------------------------------------------------------- grid


MODEL_ORDER = ("CRNN", "RESNET", "RES_BLSTM")
FEATURE_ORDER = ("SPEC", "MELSPEC", "MFCC")
DATASET_ORDER = ("MOTIFS", "MOTIFS_SEGMENT", "RANDOM")
CSV_HEADER = ["model", "dataset", "feature", "accuracy_pct", "auc"]


def run_cell(dataset: DatasetVariant, model_kind: str, arch: dict, hp: TrainConfig) -> dict:
    cfg = ArchitectureConfig.from_dict({**arch, "kind": model_kind, "n_classes": len(dataset.singers)})
    model = build_model(cfg)
    model, report = train(model, dataset, hp)
    ev = evaluate(model, dataset)
    log.info("cell model=%s dataset=%s feature=%s accuracy=%.2f auc=%.4f epochs=%d wall=%.1fs", model_kind,
             dataset.kind.value, dataset.feature.name, ev.accuracy, ev.auc, report.stopped_epoch, report.wall_time)
    return {"model": model_kind, "dataset": dataset.kind.value, "feature": dataset.feature.name,
            "accuracy_pct": ev.accuracy, "auc": ev.auc, "report": report, "eval": ev, "state": model.state_dict(),
            "arch": cfg}


def _cell_worker(args):
    dataset, model_kind, arch, hp = args
    res = run_cell(dataset, model_kind, arch, hp)
    res.pop("state")
    return res


def run_experiment_grid(corpus: Corpus, dictionaries: list[MotifDictionary], arch: dict | None = None,
                        hp: TrainConfig | None = None, models=MODEL_ORDER, features=FEATURE_ORDER,
                        datasets=DATASET_ORDER, seed: int = 0, max_per_singer: int | None = None,
                        by_recording: bool = False, jobs: int = 1, feature_opts: dict | None = None) -> list[dict]:
    """Train and evaluate every (model, dataset, feature) cell; rows come back in grid order."""
    arch = dict(arch or {})
    hp = hp or TrainConfig(seed=seed)
    audio = load_audio_16k(corpus)
    tasks = []
    for feat in features:
        variants = build_datasets(corpus, dictionaries, feat, seed, max_per_singer, by_recording,
                                  kinds=datasets, audio=audio, feature_opts=feature_opts)
        for m in models:
            for d in datasets:
                tasks.append((variants[DatasetKind.parse(d)], ModelKind.parse(m).value, arch, hp))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_cell_worker, tasks))
    else:
        results = [_cell_worker(t) for t in tasks]
    key = {(m, d, f): i for i, (m, d, f) in enumerate(
        (ModelKind.parse(m).value, DatasetKind.parse(d).value, FeatureKind.parse(f).name)
        for m in models for d in datasets for f in features)}
    return sorted(results, key=lambda r: key[(r["model"], r["dataset"], r["feature"])])


def results_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r["model"], r["dataset"], r["feature"], f"{r['accuracy_pct']:.2f}", f"{r['auc']:.4f}"])
    return buf.getvalue()


def write_dataset(out_dir, variant: DatasetVariant) -> None:
    """FMTX file per instance plus index.json (instances, split, standardisation)."""
    from .features import write_feature_file
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, (inst, lab, v) in enumerate(zip(variant.instances, variant.labels, variant.valid_frames)):
        fm = FeatureMatrix(variant.feature, variant.features[i].astype(np.float64), int(v), inst.source_id,
                           inst.start, inst.end, int(lab))
        write_feature_file(out / f"{i:05d}.fmtx", fm)
    (out / "index.json").write_text(json.dumps(variant.index_dict(), indent=1, sort_keys=True) + "\n")


def read_dataset(out_dir) -> DatasetVariant:
    from .features import read_feature_file
    out = Path(out_dir)
    idx_path = out / "index.json"
    if not idx_path.exists():
        raise FileNotFoundError(str(idx_path))
    d = json.loads(idx_path.read_text())
    insts = [Instance(r["source_id"], r["singer"], r["start"], r["end"]) for r in d["instances"]]
    feats = np.zeros((len(insts), ROWS, COLS), np.float32)
    for i in range(len(insts)):
        feats[i] = read_feature_file(out / f"{i:05d}.fmtx").data
    return DatasetVariant(DatasetKind.parse(d["kind"]), FeatureKind.parse(d["feature"]), d["singers"], insts,
                          np.array([r["label"] for r in d["instances"]], dtype=np.int64), feats,
                          np.array([r["valid_frames"] for r in d["instances"]], dtype=np.int64),
                          np.array(d["train"], dtype=np.int64), np.array(d["test"], dtype=np.int64),
                          np.array(d["mean"], np.float32), np.array(d["std"], np.float32), int(d.get("seed", 0)))
