"""Training loop, evaluation, single-task baselines and the ablation grid."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import coupling as coupling_mod
from . import metrics as metrics_mod
from .losses import CouplingTerms, LabeledBatch, LossBreakdown, LossWeights, aggregate_with_grads
from .network import Network, NetworkConfig, PredictionTriple, sigmoid_vjp, softmax_vjp
from .relatedness import N_AUS, N_EMOTIONS, RelatednessTable
from .synthdata import (
    BatchIterator,
    CompoundDataset,
    DatasetBundle,
    DatasetSplit,
    GeneratorConfig,
    generate,
    schedule,
)

#: Ablation rows, in reporting order.
ABLATION_VARIANTS = (
    "none",
    "co_annotation",
    "soft_co_annotation",
    "distr_matching",
    "both",
)

_EVAL_SEED_OFFSET = 977351


class NonFiniteLossError(RuntimeError):
    """Raised when a loss term stops being finite; carries diagnostic state."""

    def __init__(self, message: str, epoch: int, iteration: int, breakdown: LossBreakdown):
        super().__init__(
            f"{message} (epoch {epoch}, iteration {iteration}, breakdown {breakdown})"
        )
        self.epoch = epoch
        self.iteration = iteration
        self.breakdown = breakdown


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; plain SGD with optional momentum."""

    learning_rate: float = 1e-4
    momentum: float = 0.0
    epochs: int = 10
    iterations_per_epoch: int = 10
    weights: LossWeights = field(default_factory=LossWeights)
    coupling: coupling_mod.CouplingConfig | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.iterations_per_epoch < 1:
            raise ValueError("iterations_per_epoch must be >= 1")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class ExperimentReport:
    """Per-epoch loss series plus final metrics of one training run."""

    seed: int
    epoch_losses: list[LossBreakdown] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    label_rows_consumed: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0


def _strategy(cfg: TrainConfig, name: str) -> bool:
    return cfg.coupling is not None and name in cfg.coupling.strategies


def _apply_sgd(net: Network, lr: float, momentum: float, velocity: list[np.ndarray]) -> None:
    grads = net.grad_weights + net.grad_biases
    params = net.weights + net.biases
    for v, g, p in zip(velocity, grads, params):
        if momentum > 0.0:
            v *= momentum
            v += g
            p -= lr * v
        else:
            p -= lr * g


def train_step(
    net: Network,
    batch: LabeledBatch,
    cfg: TrainConfig,
    counts: dict | None = None,
) -> LossBreakdown:
    """One forward/coupling/backward pass; gradients are left in the buffers."""
    table = cfg.coupling.table if cfg.coupling is not None else None
    if _strategy(cfg, "co_annotation"):
        batch = coupling_mod.apply_co_annotation(batch, table)
    if _strategy(cfg, "soft_co_annotation"):
        batch = coupling_mod.apply_soft_co_annotation(
            batch, table, weighted=cfg.coupling.weighted_soft
        )

    _, preds, cache = net.forward(batch.features, train_mode=True)

    terms = None
    if _strategy(cfg, "distribution_matching"):
        terms = CouplingTerms(
            mixture=coupling_mod.mixture_target(
                preds.emo_probs, table, weighted=cfg.coupling.weighted_q
            ),
            stop_gradient_q=cfg.coupling.stop_gradient_q,
            dm_bernoulli=cfg.coupling.dm_bernoulli,
        )

    breakdown, (d_emo, d_au, d_va) = aggregate_with_grads(batch, preds, cfg.weights, terms)
    net.zero_grads()
    net.backward(
        cache,
        softmax_vjp(preds.emo_probs, d_emo),
        sigmoid_vjp(preds.au_probs, d_au),
        d_va,
    )
    if counts is not None:
        if batch.emo_labels is not None:
            counts["expr"] = counts.get("expr", 0) + int((batch.emo_labels >= 0).sum())
        if batch.au_mask is not None:
            counts["au"] = counts.get("au", 0) + int((batch.au_mask.sum(axis=1) > 0).sum())
        if batch.va_present is not None:
            counts["va"] = counts.get("va", 0) + int(batch.va_present.sum())
    return breakdown


def train(
    net: Network,
    bundle: DatasetBundle,
    cfg: TrainConfig,
    eval_bundle: DatasetBundle | None = None,
) -> ExperimentReport:
    """Train jointly on the three splits with the configured coupling.

    Every iteration concatenates one batch from each split, applies the
    enabled coupling strategies, and takes one SGD step on the weighted
    objective.  A non-finite loss aborts immediately.
    """
    started = time.perf_counter()
    sched = schedule((bundle.va.n, bundle.au.n, bundle.expr.n), cfg.iterations_per_epoch)
    velocity = [np.zeros_like(p) for p in net.weights + net.biases]
    report = ExperimentReport(seed=cfg.seed)
    counts: dict = {}

    for epoch in range(cfg.epochs):
        batches = BatchIterator(bundle, sched, epoch_seed=_epoch_seed(cfg.seed, epoch))
        epoch_totals = np.zeros(6)
        for iteration in range(sched.iterations):
            breakdown = train_step(net, batches.next_batch(), cfg, counts)
            if not np.isfinite(breakdown.total):
                raise NonFiniteLossError("non-finite loss", epoch, iteration, breakdown)
            _apply_sgd(net, cfg.learning_rate, cfg.momentum, velocity)
            epoch_totals += (
                breakdown.l_emo,
                breakdown.l_au,
                breakdown.l_va,
                breakdown.l_dm,
                breakdown.l_sca,
                breakdown.total,
            )
        epoch_totals /= sched.iterations
        report.epoch_losses.append(
            LossBreakdown(*(float(v) for v in epoch_totals))
        )

    report.label_rows_consumed = counts
    if eval_bundle is not None:
        report.metrics = evaluate_bundle(net, eval_bundle)
    report.wall_clock_s = time.perf_counter() - started
    return report


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence((seed, epoch)).generate_state(1)[0])


def predict(net: Network, features: np.ndarray) -> PredictionTriple:
    """Evaluation-mode predictions (no dropout)."""
    _, preds, _ = net.forward(features, train_mode=False)
    return preds


def evaluate(net: Network, split: DatasetSplit) -> dict:
    """Metrics for every task the split carries labels for.

    Valence/arousal predictions are clamped to [-1, 1] here, never inside
    the training loss.
    """
    if split.n == 0:
        raise ValueError("cannot evaluate an empty split")
    preds = predict(net, split.features)
    out: dict = {}
    if split.va_labels is not None:
        va = np.clip(preds.va, -1.0, 1.0)
        ccc_v = metrics_mod.ccc(split.va_labels[:, 0], va[:, 0])
        ccc_a = metrics_mod.ccc(split.va_labels[:, 1], va[:, 1])
        out["va"] = {"ccc_valence": ccc_v, "ccc_arousal": ccc_a,
                     "ccc_mean": (ccc_v + ccc_a) / 2.0}
    if split.emo_labels is not None:
        labelled = split.emo_labels >= 0
        truth = split.emo_labels[labelled]
        hard = preds.emo_probs[labelled].argmax(axis=1)
        cm = metrics_mod.confusion_matrix(truth, hard, N_EMOTIONS)
        stats = metrics_mod.confusion_stats(cm)
        per_class_f1 = [
            metrics_mod.f1_binary((truth == k).astype(float), (hard == k).astype(float))
            for k in range(N_EMOTIONS)
        ]
        f1_mean = float(np.mean(per_class_f1))
        out["expr"] = {
            "total_accuracy": stats["total_accuracy"],
            "mean_diagonal": stats["mean_diagonal"],
            "uar": stats["uar"],
            "f1_mean": f1_mean,
            "expr_score": (f1_mean + stats["uar"]) / 2.0,
        }
    if split.au_labels is not None:
        from .relatedness import AU_IDS

        hard = (preds.au_probs >= 0.5).astype(float)
        per_f1, per_acc = {}, {}
        for j, au_id in enumerate(AU_IDS):
            rows = split.au_mask[:, j] > 0
            if not rows.any():
                continue
            per_f1[au_id] = metrics_mod.f1_binary(split.au_labels[rows, j], hard[rows, j])
            per_acc[au_id] = metrics_mod.binary_accuracy(
                split.au_labels[rows, j], hard[rows, j]
            )
        f1s, accs = list(per_f1.values()), list(per_acc.values())
        composite = metrics_mod.challenge_scores(f1s, accs, 0.0, 0.0)
        out["au"] = {
            "f1_mean": float(np.mean(f1s)),
            "accuracy_mean": float(np.mean(accs)),
            "au_score": composite["au_score"],
            "per_au_f1": per_f1,
            "per_au_accuracy": per_acc,
        }
    if not out:
        raise ValueError("split carries no labels to score")
    return out


def evaluate_bundle(net: Network, bundle: DatasetBundle) -> dict:
    """Each split scored on its own task."""
    return {
        "va": evaluate(net, bundle.va)["va"],
        "au": evaluate(net, bundle.au)["au"],
        "expr": evaluate(net, bundle.expr)["expr"],
    }


#: Task -> metric used for joint-vs-single and coupling comparisons.
HEADLINE_METRICS = {"va": "ccc_mean", "au": "f1_mean", "expr": "total_accuracy"}


def headline(metrics: dict) -> dict[str, float]:
    """The one-number summary per task from an evaluation dict."""
    return {
        task: float(metrics[task][name])
        for task, name in HEADLINE_METRICS.items()
        if task in metrics
    }


def train_single_task(
    net: Network,
    split: DatasetSplit,
    task: str,
    cfg: TrainConfig,
    eval_split: DatasetSplit | None = None,
) -> ExperimentReport:
    """Train on exactly one split with only its own loss term.

    The batch never contains foreign labels, so the audit counters in the
    report show zero consumed rows for the other tasks.
    """
    if task not in ("va", "au", "expr"):
        raise ValueError(f"unknown task {task!r}")
    started = time.perf_counter()
    iters = cfg.iterations_per_epoch
    if iters > split.n:
        raise ValueError("iterations exceed the split size")
    batch_size = split.n // iters
    base_cfg = replace(cfg, coupling=None)
    velocity = [np.zeros_like(p) for p in net.weights + net.biases]
    report = ExperimentReport(seed=cfg.seed)
    counts: dict = {}

    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(_epoch_seed(cfg.seed, epoch))
        order = rng.permutation(split.n)[: batch_size * iters]
        epoch_totals = np.zeros(6)
        for iteration in range(iters):
            idx = order[iteration * batch_size : (iteration + 1) * batch_size]
            batch = _single_task_batch(split, idx, task)
            breakdown = train_step(net, batch, base_cfg, counts)
            if not np.isfinite(breakdown.total):
                raise NonFiniteLossError("non-finite loss", epoch, iteration, breakdown)
            _apply_sgd(net, cfg.learning_rate, cfg.momentum, velocity)
            epoch_totals += (
                breakdown.l_emo,
                breakdown.l_au,
                breakdown.l_va,
                breakdown.l_dm,
                breakdown.l_sca,
                breakdown.total,
            )
        epoch_totals /= iters
        report.epoch_losses.append(LossBreakdown(*(float(v) for v in epoch_totals)))

    report.label_rows_consumed = {t: counts.get(t, 0) for t in ("va", "au", "expr")}
    if eval_split is not None:
        scored = evaluate(net, eval_split)
        report.metrics = {task: scored[task]}
    report.wall_clock_s = time.perf_counter() - started
    return report


def _single_task_batch(split: DatasetSplit, idx: np.ndarray, task: str) -> LabeledBatch:
    features = split.features[idx]
    if task == "va":
        return LabeledBatch(features=features, va_labels=split.va_labels[idx],
                            va_present=np.ones(len(idx), dtype=bool))
    if task == "au":
        return LabeledBatch(features=features, au_labels=split.au_labels[idx],
                            au_mask=split.au_mask[idx])
    return LabeledBatch(features=features, emo_labels=split.emo_labels[idx])


def single_task_baselines(
    bundle: DatasetBundle,
    net_cfg: NetworkConfig,
    cfg: TrainConfig,
    eval_bundle: DatasetBundle | None = None,
) -> dict[str, ExperimentReport]:
    """Three independent single-task runs with the joint run's budget."""
    out = {}
    for task in ("va", "au", "expr"):
        net = Network(net_cfg)
        split = getattr(bundle, task)
        eval_split = getattr(eval_bundle, task) if eval_bundle is not None else None
        out[task] = train_single_task(net, split, task, cfg, eval_split)
    return out


def variant_config(cfg: TrainConfig, variant: str, table: RelatednessTable) -> TrainConfig:
    """Ablation row -> concrete coupling strategies and loss weights.

    The base config's dm/soft weights act as the enabled magnitudes; rows
    that exclude a strategy zero its weight.
    """
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}")
    strategies = {
        "none": frozenset(),
        "co_annotation": frozenset({"co_annotation"}),
        "soft_co_annotation": frozenset({"soft_co_annotation"}),
        "distr_matching": frozenset({"distribution_matching"}),
        "both": frozenset({"soft_co_annotation", "distribution_matching"}),
    }[variant]
    base_coupling = cfg.coupling
    weighted_q = base_coupling.weighted_q if base_coupling else False
    weighted_soft = base_coupling.weighted_soft if base_coupling else True
    stop_q = base_coupling.stop_gradient_q if base_coupling else False
    bern = base_coupling.dm_bernoulli if base_coupling else False
    coupling = (
        coupling_mod.CouplingConfig(
            table=table,
            strategies=strategies,
            weighted_q=weighted_q,
            weighted_soft=weighted_soft,
            stop_gradient_q=stop_q,
            dm_bernoulli=bern,
        )
        if strategies
        else None
    )
    weights = replace(
        cfg.weights,
        dm_weight=cfg.weights.dm_weight if "distribution_matching" in strategies else 0.0,
        soft_weight=cfg.weights.soft_weight if "soft_co_annotation" in strategies else 0.0,
    )
    return replace(cfg, coupling=coupling, weights=weights)


def run_ablation(
    gen_cfg: GeneratorConfig,
    net_cfg: NetworkConfig,
    cfg: TrainConfig,
    table: RelatednessTable,
    seeds: list[int],
    variants: tuple[str, ...] = ABLATION_VARIANTS,
    include_baselines: bool = True,
) -> dict:
    """The coupling-variant grid (plus single-task rows) over several seeds.

    For every seed a fresh problem instance is drawn; all variants of a
    seed share its data and network initialization, so rows are paired.
    Returns per-(variant, seed) metrics and the per-variant means.
    """
    runs: dict[str, list[dict]] = {v: [] for v in variants}
    base_runs: dict[str, list[dict]] = {t: [] for t in ("va", "au", "expr")}
    for seed in seeds:
        data_cfg = replace(gen_cfg, seed=gen_cfg.seed + seed)
        # held-out data shares the feature map but carries clean labels
        eval_cfg = replace(
            data_cfg,
            seed=data_cfg.seed + _EVAL_SEED_OFFSET,
            map_seed=data_cfg.effective_map_seed,
            au_label_noise=0.0,
            emo_label_noise=0.0,
            va_label_noise=0.0,
        )
        bundle = generate(data_cfg)
        eval_bundle = generate(eval_cfg)
        for variant in variants:
            net = Network(replace(net_cfg, seed=net_cfg.seed + seed))
            run_cfg = replace(variant_config(cfg, variant, table), seed=cfg.seed + seed)
            report = train(net, bundle, run_cfg, eval_bundle)
            runs[variant].append(report.metrics)
        if include_baselines:
            reports = single_task_baselines(
                bundle, replace(net_cfg, seed=net_cfg.seed + seed),
                replace(cfg, seed=cfg.seed + seed), eval_bundle,
            )
            for task, rep in reports.items():
                base_runs[task].append(rep.metrics)

    summary = {v: _mean_metrics(rows) for v, rows in runs.items()}
    result = {"per_seed": runs, "summary": summary, "seeds": list(seeds)}
    if include_baselines:
        result["baselines_per_seed"] = base_runs
        result["baseline_summary"] = {t: _mean_metrics(rows) for t, rows in base_runs.items()}
    return result


def _mean_metrics(rows: list[dict]) -> dict:
    """Mean of nested {task: {metric: value}} dicts across runs (scalars only)."""
    out: dict = {}
    if not rows:
        return out
    for task in rows[0]:
        out[task] = {
            m: float(np.mean([r[task][m] for r in rows]))
            for m, v in rows[0][task].items()
            if np.isscalar(v)
        }
    return out


@dataclass(frozen=True)
class FineTuneConfig:
    learning_rate: float = 0.05
    momentum: float = 0.0
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0


def fine_tune_compound(
    net: Network,
    train_data: CompoundDataset,
    cfg: FineTuneConfig,
    eval_data: CompoundDataset | None = None,
) -> tuple[Network, ExperimentReport]:
    """Swap in a fresh K-way head and fine-tune on a small compound set.

    The trunk starts from the given network's weights; the head is
    re-initialized for the compound classes.  Reports the mean confusion
    diagonal and per-class recalls on the held-out set.
    """
    k = len(train_data.class_names)
    if k < 2:
        raise ValueError("need at least 2 compound classes to fine-tune")
    started = time.perf_counter()
    ft_cfg = replace(
        net.config, head_dims=(k,) + tuple(net.config.head_dims[1:]), seed=cfg.seed
    )
    ft_net = Network(ft_cfg)
    for layer in range(ft_net.n_trunk_layers):
        ft_net.weights[layer][:] = net.weights[layer]
        ft_net.biases[layer][:] = net.biases[layer]

    n = train_data.n
    batch_size = min(cfg.batch_size, n)
    velocity = [np.zeros_like(p) for p in ft_net.weights + ft_net.biases]
    report = ExperimentReport(seed=cfg.seed)

    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(_epoch_seed(cfg.seed, epoch))
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n - batch_size + 1, batch_size):
            idx = order[start : start + batch_size]
            _, preds, cache = ft_net.forward(train_data.features[idx], train_mode=True)
            probs = preds.emo_probs
            y = train_data.labels[idx]
            p_true = probs[np.arange(len(idx)), y]
            loss = float(np.mean(-np.log(np.maximum(p_true, 1e-12))))
            if not np.isfinite(loss):
                raise NonFiniteLossError("non-finite loss", epoch, n_batches,
                                         LossBreakdown(l_emo=loss, total=loss))
            d_logits = probs.copy()
            d_logits[np.arange(len(idx)), y] -= 1.0
            d_logits /= len(idx)
            ft_net.zero_grads()
            ft_net.backward(
                cache,
                d_logits,
                np.zeros((len(idx), ft_cfg.head_dims[1])),
                np.zeros((len(idx), ft_cfg.head_dims[2])),
            )
            _apply_sgd(ft_net, cfg.learning_rate, cfg.momentum, velocity)
            epoch_loss += loss
            n_batches += 1
        report.epoch_losses.append(
            LossBreakdown(l_emo=epoch_loss / max(n_batches, 1),
                          total=epoch_loss / max(n_batches, 1))
        )

    if eval_data is not None:
        report.metrics = {"compound": evaluate_compound(ft_net, eval_data)}
    report.wall_clock_s = time.perf_counter() - started
    return ft_net, report


def default_benchmark(
    table: RelatednessTable | None = None,
) -> tuple[GeneratorConfig, NetworkConfig, TrainConfig]:
    """The desk-scale synthetic benchmark configuration.

    Set sizes keep the 401:247:103 ratio.  Feature and label noise are set
    so no task saturates and the annotation-error premise of the coupling
    strategies holds; the learning rate and loss weights are sized for the
    small tanh trunk on this data rather than the full-scale defaults.
    """
    from .relatedness import load_bundled_table

    table = table or load_bundled_table("cognitive")
    gen_cfg = GeneratorConfig(
        table=table,
        noise_sigma=1.0,
        au_label_noise=0.15,
        emo_label_noise=0.3,
    )
    net_cfg = NetworkConfig(
        input_dim=gen_cfg.feature_dim, hidden_dims=(64, 64), dropout_rate=0.0, seed=0
    )
    train_cfg = TrainConfig(
        learning_rate=0.1,
        momentum=0.0,
        epochs=30,
        iterations_per_epoch=10,
        weights=LossWeights(au_weight=3.0, va_weight=1.0, dm_weight=0.01, soft_weight=0.2),
        coupling=None,
        seed=0,
    )
    return gen_cfg, net_cfg, train_cfg


def write_loss_csv(report: ExperimentReport, path) -> None:
    """Per-epoch loss breakdown as CSV; no timestamps, byte-reproducible."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "l_emo", "l_au", "l_va", "l_dm", "l_sca", "total"])
        for epoch, bd in enumerate(report.epoch_losses):
            writer.writerow(
                [epoch]
                + [repr(v) for v in (bd.l_emo, bd.l_au, bd.l_va, bd.l_dm, bd.l_sca, bd.total)]
            )


def metrics_records(metrics: dict, split: str) -> list[dict]:
    """Flatten a nested {task: {metric: value}} dict into CSV row dicts."""
    records = []
    for task, vals in metrics.items():
        for name, value in vals.items():
            if isinstance(value, dict):
                for sub, v in value.items():
                    records.append(
                        {"task": task, "metric": f"{name}_{sub}", "split": split, "value": v}
                    )
            elif np.isscalar(value):
                records.append({"task": task, "metric": name, "split": split, "value": value})
    return records


_ABLATION_COLUMNS = (
    ("va", "ccc_valence"),
    ("va", "ccc_arousal"),
    ("va", "ccc_mean"),
    ("expr", "total_accuracy"),
    ("expr", "uar"),
    ("expr", "f1_mean"),
    ("expr", "expr_score"),
    ("au", "f1_mean"),
    ("au", "accuracy_mean"),
    ("au", "au_score"),
)


def write_ablation_csvs(result: dict, summary_path, per_seed_path) -> None:
    """Wide per-variant summary plus a long per-seed table."""
    summary_path = Path(summary_path)
    summary_path.parent.mkdir(parents=True, exist_ok=True)
    header = ["variant"] + [f"{task}_{metric}" for task, metric in _ABLATION_COLUMNS]
    with summary_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for variant, metrics in result["summary"].items():
            writer.writerow([variant] + _ablation_row(metrics))
        for task, metrics in result.get("baseline_summary", {}).items():
            writer.writerow([f"single_task_{task}"] + _ablation_row(metrics))

    with Path(per_seed_path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "seed", "task", "metric", "value"])
        sections = [(v, rows) for v, rows in result["per_seed"].items()]
        sections += [
            (f"single_task_{t}", rows)
            for t, rows in result.get("baselines_per_seed", {}).items()
        ]
        for variant, rows in sections:
            for seed, metrics in zip(result["seeds"], rows):
                for task, vals in metrics.items():
                    for name, value in vals.items():
                        if np.isscalar(value):
                            writer.writerow([variant, seed, task, name, repr(float(value))])


def _ablation_row(metrics: dict) -> list[str]:
    row = []
    for task, metric in _ABLATION_COLUMNS:
        value = metrics.get(task, {}).get(metric)
        row.append("" if value is None else repr(float(value)))
    return row


def format_ablation_table(result: dict) -> str:
    """Human-readable variant table, one row per coupling configuration."""
    header = ["variant"] + [f"{t}.{m}" for t, m in _ABLATION_COLUMNS]
    rows = [header]
    for variant, metrics in result["summary"].items():
        rows.append([variant] + [
            f"{float(v):.4f}" if v else "" for v in _ablation_row(metrics)
        ])
    for task, metrics in result.get("baseline_summary", {}).items():
        rows.append([f"single_task_{task}"] + [
            f"{float(v):.4f}" if v else "" for v in _ablation_row(metrics)
        ])
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def evaluate_compound(net: Network, data: CompoundDataset) -> dict:
    """Accuracy statistics of the K-way head on a compound set."""
    _, preds, _ = net.forward(data.features, train_mode=False)
    hard = preds.emo_probs.argmax(axis=1)
    k = net.config.head_dims[0]
    cm = metrics_mod.confusion_matrix(data.labels, hard, k)
    stats = metrics_mod.confusion_stats(cm)
    return {
        "total_accuracy": stats["total_accuracy"],
        "mean_diagonal": stats["mean_diagonal"],
        "per_class_recall": {
            name: float(r)
            for name, r in zip(data.class_names, stats["per_class_recall"])
        },
    }
