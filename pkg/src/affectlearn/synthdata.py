"""Seeded synthetic affect data and the three-stream batch scheduler.

Samples are drawn from a known relatedness table: an emotion is picked
uniformly, valence/arousal come from that emotion's region, AU bits are
Bernoulli draws with the table weights (a small background rate
elsewhere), and the feature vector is a fixed random linear map of the
latent block plus Gaussian noise.  Three disjointly annotated splits are
produced by stripping labels, mirroring corpora that carry only
valence/arousal, only AU, or only expression annotations.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .losses import LabeledBatch
from .relatedness import AU_IDS, EMOTIONS, N_AUS, N_EMOTIONS, CompoundClass, RelatednessTable

LATENT_DIM = N_EMOTIONS + 2 + N_AUS


def default_va_regions() -> dict[str, dict[str, tuple[float, float]]]:
    """Bundled per-emotion valence/arousal sampling boxes."""
    ref = resources.files("affectlearn.data").joinpath("va_regions.json")
    raw = json.loads(ref.read_text(encoding="utf-8"))
    return {
        emo: {"valence": tuple(r["valence"]), "arousal": tuple(r["arousal"])}
        for emo, r in raw.items()
    }


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic sampler.

    ``map_seed`` fixes the latent-to-feature linear map independently of
    the sample draws, so held-out splits can share the map while drawing
    fresh samples; it defaults to ``seed``.
    """

    table: RelatednessTable
    n_va: int = 4010
    n_au: int = 2470
    n_expr: int = 1030
    feature_dim: int = 32
    noise_sigma: float = 0.25
    au_background_rate: float = 0.02
    au_annotated_per_sample: int = 12
    overlap_fraction: float = 0.0
    domain_shift: float = 0.0
    au_label_noise: float = 0.0
    emo_label_noise: float = 0.0
    va_label_noise: float = 0.0
    seed: int = 0
    map_seed: int | None = None
    va_regions: dict = field(default_factory=default_va_regions)

    def __post_init__(self) -> None:
        for name in ("n_va", "n_au", "n_expr"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if not (0.0 <= self.au_background_rate < 0.5):
            raise ValueError("au_background_rate must lie in [0, 0.5)")
        if not (1 <= self.au_annotated_per_sample <= N_AUS):
            raise ValueError(f"au_annotated_per_sample must lie in [1, {N_AUS}]")
        if not (0.0 <= self.overlap_fraction <= 1.0):
            raise ValueError("overlap_fraction must lie in [0, 1]")
        if self.domain_shift < 0.0:
            raise ValueError("domain_shift must be nonnegative")
        for name in ("au_label_noise", "emo_label_noise"):
            if not (0.0 <= getattr(self, name) < 0.5):
                raise ValueError(f"{name} must lie in [0, 0.5)")
        if self.va_label_noise < 0.0:
            raise ValueError("va_label_noise must be nonnegative")
        missing = set(EMOTIONS) - set(self.va_regions)
        if missing:
            raise ValueError(f"va_regions missing emotions: {sorted(missing)}")

    @property
    def effective_map_seed(self) -> int:
        return self.seed if self.map_seed is None else self.map_seed


@dataclass
class DatasetSplit:
    """Feature rows plus whichever label blocks this split retains."""

    features: np.ndarray
    emo_labels: np.ndarray | None = None
    au_labels: np.ndarray | None = None
    au_mask: np.ndarray | None = None
    va_labels: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.features.shape[0]


@dataclass
class DatasetBundle:
    """The three disjointly annotated splits."""

    va: DatasetSplit
    au: DatasetSplit
    expr: DatasetSplit

    def splits(self) -> dict[str, DatasetSplit]:
        return {"va": self.va, "au": self.au, "expr": self.expr}


@dataclass
class CompoundDataset:
    """Feature rows labelled with compound-class indices."""

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.features.shape[0]


def feature_map(cfg: GeneratorConfig, split: str = "shared") -> np.ndarray:
    """The (latent, feature_dim) projection behind a split's features.

    With ``domain_shift`` zero every split shares one map.  A positive
    shift adds a split-specific seeded perturbation, mimicking corpora
    recorded under different conditions; the perturbations depend only on
    ``map_seed``, so held-out data can reproduce each domain exactly.
    """
    rng = np.random.default_rng(cfg.effective_map_seed)
    base = rng.normal(size=(LATENT_DIM, cfg.feature_dim)) / np.sqrt(LATENT_DIM)
    if cfg.domain_shift <= 0.0 or split == "shared":
        return base
    offsets = {"va": 1, "au": 2, "expr": 3, "compound": 4}
    if split not in offsets:
        raise ValueError(f"unknown split {split!r}")
    pert_rng = np.random.default_rng(
        np.random.SeedSequence((cfg.effective_map_seed, offsets[split]))
    )
    pert = pert_rng.normal(size=base.shape) / np.sqrt(LATENT_DIM)
    return base + cfg.domain_shift * pert


def _au_probabilities(table: RelatednessTable, background: float) -> np.ndarray:
    """(n_emotions, n_aus) Bernoulli parameters behind the sampler."""
    probs = np.full((N_EMOTIONS, N_AUS), background)
    weights = table.weight_matrix(weighted=True)
    probs[weights > 0] = weights[weights > 0]
    return probs


def _draw(cfg: GeneratorConfig, n: int, rng: np.random.Generator, projection: np.ndarray):
    emo = rng.integers(0, N_EMOTIONS, size=n)
    va = np.empty((n, 2))
    for idx, name in enumerate(EMOTIONS):
        rows = emo == idx
        if not rows.any():
            continue
        lo_v, hi_v = cfg.va_regions[name]["valence"]
        lo_a, hi_a = cfg.va_regions[name]["arousal"]
        va[rows, 0] = rng.uniform(lo_v, hi_v, size=int(rows.sum()))
        va[rows, 1] = rng.uniform(lo_a, hi_a, size=int(rows.sum()))
    au_p = _au_probabilities(cfg.table, cfg.au_background_rate)[emo]
    au = (rng.random((n, N_AUS)) < au_p).astype(np.float64)
    latent = np.concatenate([np.eye(N_EMOTIONS)[emo], va, au], axis=1)
    x = latent @ projection
    if cfg.noise_sigma > 0:
        x = x + cfg.noise_sigma * rng.normal(size=x.shape)
    return emo, va, au, x


def generate(cfg: GeneratorConfig) -> DatasetBundle:
    """Draw the three splits; deterministic in ``cfg.seed``.

    Each split consumes its own child stream of the seed, so the splits
    are independent of each other's sizes and of consumption order.
    """
    streams = np.random.SeedSequence(cfg.seed).spawn(4)
    rng_va = np.random.default_rng(streams[0])
    rng_au = np.random.default_rng(streams[1])
    rng_expr = np.random.default_rng(streams[2])
    rng_overlap = np.random.default_rng(streams[3])

    emo_va, va, _, x = _draw(cfg, cfg.n_va, rng_va, feature_map(cfg, "va"))
    if cfg.va_label_noise > 0.0:
        va = np.clip(va + cfg.va_label_noise * rng_va.normal(size=va.shape), -1.0, 1.0)
    va_split = DatasetSplit(features=x, va_labels=va)
    _maybe_overlap(va_split, emo_va, cfg, rng_overlap)

    _, _, au, x = _draw(cfg, cfg.n_au, rng_au, feature_map(cfg, "au"))
    mask = _annotation_mask(cfg, au.shape[0], rng_au)
    if cfg.au_label_noise > 0.0:
        # annotator error: observed bits flip, the underlying face does not
        flips = rng_au.random(au.shape) < cfg.au_label_noise
        au = np.where(flips, 1.0 - au, au)
    au_split = DatasetSplit(features=x, au_labels=au, au_mask=mask)

    emo_expr, _, _, x = _draw(cfg, cfg.n_expr, rng_expr, feature_map(cfg, "expr"))
    if cfg.emo_label_noise > 0.0:
        flips = rng_expr.random(emo_expr.shape) < cfg.emo_label_noise
        noisy = rng_expr.integers(0, N_EMOTIONS, size=emo_expr.shape)
        emo_expr = np.where(flips, noisy, emo_expr)
    expr_split = DatasetSplit(features=x, emo_labels=emo_expr)

    return DatasetBundle(va=va_split, au=au_split, expr=expr_split)


def _annotation_mask(cfg: GeneratorConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    if cfg.au_annotated_per_sample >= N_AUS:
        return np.ones((n, N_AUS))
    mask = np.zeros((n, N_AUS))
    for i in range(n):
        cols = rng.permutation(N_AUS)[: cfg.au_annotated_per_sample]
        mask[i, cols] = 1.0
    return mask


def _maybe_overlap(va_split: DatasetSplit, emo: np.ndarray,
                   cfg: GeneratorConfig, rng: np.random.Generator) -> None:
    """Expose emotion labels on a fraction of the valence/arousal split.

    Mirrors corpora annotated for both tasks; off by default, and only
    this one overlap direction is modelled.
    """
    if cfg.overlap_fraction <= 0.0:
        return
    k = int(round(cfg.overlap_fraction * va_split.n))
    if k == 0:
        return
    rows = rng.permutation(va_split.n)[:k]
    labels = np.full(va_split.n, -1, dtype=np.int64)
    labels[rows] = emo[rows]
    va_split.emo_labels = labels


def generate_coannotated(
    table: RelatednessTable,
    n_per_emotion: int,
    background_rate: float = 0.02,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Fully co-annotated (emotion, AU vector) pairs for table inference."""
    rng = np.random.default_rng(seed)
    emo = np.repeat(np.arange(N_EMOTIONS), n_per_emotion)
    au_p = _au_probabilities(table, background_rate)[emo]
    au = (rng.random((emo.size, N_AUS)) < au_p).astype(np.float64)
    return emo, au


def generate_compound(
    cfg: GeneratorConfig,
    classes: list[CompoundClass],
    n_per_class: int,
    seed: int = 0,
) -> CompoundDataset:
    """Synthetic compound-class samples through the same feature map.

    The latent emotion block blends the two constituents with a random
    mixing ratio; valence/arousal blend draws from both constituents'
    regions, and AU bits follow the class's union weights.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    projection = feature_map(cfg, "compound")
    emo_index = {name: i for i, name in enumerate(EMOTIONS)}
    au_col = {au: j for j, au in enumerate(AU_IDS)}

    blocks, labels = [], []
    for ci, cls in enumerate(classes):
        n = n_per_class
        alpha = rng.uniform(0.35, 0.65, size=n)
        z_emo = np.zeros((n, N_EMOTIONS))
        z_emo[:, emo_index[cls.emo1]] = alpha
        z_emo[:, emo_index[cls.emo2]] = 1.0 - alpha
        va = np.empty((n, 2))
        for k, dim in enumerate(("valence", "arousal")):
            lo1, hi1 = cfg.va_regions[cls.emo1][dim]
            lo2, hi2 = cfg.va_regions[cls.emo2][dim]
            va[:, k] = alpha * rng.uniform(lo1, hi1, n) + (1 - alpha) * rng.uniform(lo2, hi2, n)
        au_p = np.full((n, N_AUS), cfg.au_background_rate)
        for au, w in cls.au_weights.items():
            au_p[:, au_col[au]] = w
        au = (rng.random((n, N_AUS)) < au_p).astype(np.float64)
        latent = np.concatenate([z_emo, va, au], axis=1)
        x = latent @ projection
        if cfg.noise_sigma > 0:
            x = x + cfg.noise_sigma * rng.normal(size=x.shape)
        blocks.append(x)
        labels.append(np.full(n, ci, dtype=np.int64))

    return CompoundDataset(
        features=np.concatenate(blocks),
        labels=np.concatenate(labels),
        class_names=tuple(cls.name for cls in classes),
    )


@dataclass(frozen=True)
class BatchSchedule:
    """Per-split batch sizes so one epoch walks every (kept) sample once."""

    batch_sizes: tuple[int, int, int]  # (va, au, expr)
    iterations: int
    effective_sizes: tuple[int, int, int]

    def __post_init__(self) -> None:
        for b, eff in zip(self.batch_sizes, self.effective_sizes):
            if b * self.iterations != eff:
                raise ValueError("schedule does not exhaust its splits")


def schedule(sizes: tuple[int, int, int], iterations: int) -> BatchSchedule:
    """Derive per-split batch sizes from split sizes and an iteration count.

    Splits are trimmed to the largest multiple of ``iterations``; batch
    size ratios then approximate the size ratios.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if iterations > min(sizes):
        raise ValueError(
            f"iterations ({iterations}) exceeds the smallest split ({min(sizes)})"
        )
    batch_sizes = tuple(s // iterations for s in sizes)
    effective = tuple(b * iterations for b in batch_sizes)
    return BatchSchedule(batch_sizes=batch_sizes, iterations=iterations,
                         effective_sizes=effective)


class BatchIterator:
    """Walks one epoch of concatenated three-split batches.

    The per-split shuffle is drawn from ``epoch_seed``, so the epoch's
    batch sequence is reproducible and all kept samples appear exactly
    once.
    """

    def __init__(self, bundle: DatasetBundle, sched: BatchSchedule, epoch_seed: int):
        sizes = (bundle.va.n, bundle.au.n, bundle.expr.n)
        for size, eff in zip(sizes, sched.effective_sizes):
            if eff > size:
                raise ValueError("schedule does not fit the datasets")
        rng = np.random.default_rng(epoch_seed)
        self._orders = [
            rng.permutation(size)[:eff] for size, eff in zip(sizes, sched.effective_sizes)
        ]
        self._bundle = bundle
        self._sched = sched
        self._it = 0

    def __iter__(self):
        return self

    def __next__(self) -> LabeledBatch:
        if self._it >= self._sched.iterations:
            raise StopIteration
        batch = self.next_batch()
        return batch

    def next_batch(self) -> LabeledBatch:
        if self._it >= self._sched.iterations:
            raise ValueError("epoch exhausted")
        it = self._it
        self._it += 1
        b_va, b_au, b_expr = self._sched.batch_sizes
        idx_va = self._orders[0][it * b_va : (it + 1) * b_va]
        idx_au = self._orders[1][it * b_au : (it + 1) * b_au]
        idx_expr = self._orders[2][it * b_expr : (it + 1) * b_expr]
        return assemble_batch(self._bundle, idx_va, idx_au, idx_expr)


def assemble_batch(bundle: DatasetBundle, idx_va, idx_au, idx_expr) -> LabeledBatch:
    """Concatenate rows of the three splits into one labelled batch."""
    n_va, n_au, n_expr = len(idx_va), len(idx_au), len(idx_expr)
    n = n_va + n_au + n_expr
    features = np.concatenate([
        bundle.va.features[idx_va],
        bundle.au.features[idx_au],
        bundle.expr.features[idx_expr],
    ])
    emo = np.full(n, -1, dtype=np.int64)
    if bundle.expr.emo_labels is not None:
        emo[n_va + n_au :] = bundle.expr.emo_labels[idx_expr]
    if bundle.va.emo_labels is not None:  # overlap knob
        emo[:n_va] = bundle.va.emo_labels[idx_va]
    au_labels = np.zeros((n, N_AUS))
    au_mask = np.zeros((n, N_AUS))
    if bundle.au.au_labels is not None:
        au_labels[n_va : n_va + n_au] = bundle.au.au_labels[idx_au]
        au_mask[n_va : n_va + n_au] = bundle.au.au_mask[idx_au]
    va_labels = np.zeros((n, 2))
    va_present = np.zeros(n, dtype=bool)
    if bundle.va.va_labels is not None:
        va_labels[:n_va] = bundle.va.va_labels[idx_va]
        va_present[:n_va] = True
    return LabeledBatch(
        features=features,
        emo_labels=emo,
        au_labels=au_labels,
        au_mask=au_mask,
        va_labels=va_labels,
        va_present=va_present,
    )


# CSV serialization: one file per split, full column set, empties where a
# label block is absent.

_CSV_META = "meta.json"
_SPLIT_FILES = {"va": "va.csv", "au": "au.csv", "expr": "expr.csv"}


def _csv_header(feature_dim: int) -> list[str]:
    return (
        [f"feature_{i}" for i in range(feature_dim)]
        + ["emo"]
        + [f"au_{a}" for a in AU_IDS]
        + [f"delta_{a}" for a in AU_IDS]
        + ["valence", "arousal"]
    )


def save_datasets(bundle: DatasetBundle, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feature_dim = bundle.va.features.shape[1]
    (out_dir / _CSV_META).write_text(
        json.dumps({"feature_dim": feature_dim}) + "\n", encoding="utf-8"
    )
    for name, split in bundle.splits().items():
        _write_split(split, out_dir / _SPLIT_FILES[name], feature_dim)


def _write_split(split: DatasetSplit, path: Path, feature_dim: int) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_csv_header(feature_dim))
        for i in range(split.n):
            row = [repr(float(v)) for v in split.features[i]]
            row.append(str(int(split.emo_labels[i])) if _has_emo(split, i) else "")
            if split.au_labels is not None:
                row.extend(str(int(v)) for v in split.au_labels[i])
                row.extend(str(int(v)) for v in split.au_mask[i])
            else:
                row.extend([""] * (2 * N_AUS))
            if split.va_labels is not None:
                row.extend(repr(float(v)) for v in split.va_labels[i])
            else:
                row.extend(["", ""])
            writer.writerow(row)


def _has_emo(split: DatasetSplit, i: int) -> bool:
    return split.emo_labels is not None and split.emo_labels[i] >= 0


def load_datasets(data_dir: str | Path) -> DatasetBundle:
    data_dir = Path(data_dir)
    meta_path = data_dir / _CSV_META
    if not meta_path.exists():
        raise FileNotFoundError(f"no dataset metadata at {meta_path}")
    feature_dim = int(json.loads(meta_path.read_text(encoding="utf-8"))["feature_dim"])
    splits = {}
    for name, fname in _SPLIT_FILES.items():
        split = _read_split(data_dir / fname, feature_dim)
        if name == "au" and split.au_labels is None:
            raise ValueError(f"AU split {fname} carries no AU annotations")
        splits[name] = split
    return DatasetBundle(**splits)


def save_compound(data: CompoundDataset, path: str | Path) -> None:
    """Compound samples as CSV plus a JSON sidecar with the class names."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = data.features.shape[1]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"feature_{i}" for i in range(d)] + ["label"])
        for i in range(data.n):
            writer.writerow(
                [repr(float(v)) for v in data.features[i]] + [str(int(data.labels[i]))]
            )
    path.with_suffix(".json").write_text(
        json.dumps({"class_names": list(data.class_names)}) + "\n", encoding="utf-8"
    )


def load_compound(path: str | Path) -> CompoundDataset:
    path = Path(path)
    meta_path = path.with_suffix(".json")
    if not path.exists() or not meta_path.exists():
        raise FileNotFoundError(f"need both {path} and {meta_path}")
    class_names = tuple(json.loads(meta_path.read_text(encoding="utf-8"))["class_names"])
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise ValueError(f"unexpected columns in {path}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"compound file {path} has no data rows")
    features = np.array([[float(v) for v in row[:-1]] for row in rows])
    labels = np.array([int(row[-1]) for row in rows], dtype=np.int64)
    if labels.max() >= len(class_names):
        raise ValueError("label index outside the class list")
    return CompoundDataset(features=features, labels=labels, class_names=class_names)


def _read_split(path: Path, feature_dim: int) -> DatasetSplit:
    if not path.exists():
        raise FileNotFoundError(f"missing split file {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty split file {path}") from None
        if header != _csv_header(feature_dim):
            raise ValueError(f"unexpected columns in {path}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"split file {path} has no data rows")

    n = len(rows)
    features = np.empty((n, feature_dim))
    emo = np.full(n, -1, dtype=np.int64)
    au = np.zeros((n, N_AUS))
    mask = np.zeros((n, N_AUS))
    va = np.zeros((n, 2))
    has_emo = has_au = has_va = False
    au_start = feature_dim + 1
    delta_start = au_start + N_AUS
    va_start = delta_start + N_AUS
    for i, row in enumerate(rows):
        features[i] = [float(v) for v in row[:feature_dim]]
        if row[feature_dim]:
            emo[i] = int(row[feature_dim])
            has_emo = True
        au_cells = row[au_start:delta_start]
        delta_cells = row[delta_start:va_start]
        if any(au_cells):
            if not any(delta_cells):
                raise ValueError(f"{path}: AU labels present without delta columns")
            au[i] = [float(v) if v else 0.0 for v in au_cells]
            mask[i] = [float(v) if v else 0.0 for v in delta_cells]
            has_au = True
        if row[va_start] or row[va_start + 1]:
            va[i] = [float(row[va_start]), float(row[va_start + 1])]
            has_va = True
    return DatasetSplit(
        features=features,
        emo_labels=emo if has_emo else None,
        au_labels=au if has_au else None,
        au_mask=mask if has_au else None,
        va_labels=va if has_va else None,
    )
