"""Command-line surface binding the modules into reproducible runs.

Every command reads an optional JSON config whose blocks override the
default benchmark settings, and writes CSV/JSON artifacts only.  All
randomness flows from explicit seeds; `train` and `ablate` refuse to run
without one.  Wall-clock timing goes to a sidecar `run.log` so the data
artifacts stay byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import coupling as coupling_mod
from . import metrics as metrics_mod
from . import trainer as trainer_mod
from . import zeroshot as zeroshot_mod
from .losses import LossWeights
from .network import Network, NetworkConfig, load_network, save_network
from .relatedness import (
    AU_IDS,
    EMOTIONS,
    RelatednessTable,
    infer_table,
    load_bundled_table,
    load_table,
    save_table,
)
from .synthdata import (
    GeneratorConfig,
    generate,
    generate_compound,
    load_compound,
    load_datasets,
    save_compound,
    save_datasets,
)


def _resolve_table(name: str | None) -> RelatednessTable:
    if name in (None, "cognitive", "empirical"):
        return load_bundled_table(name or "cognitive")
    return load_table(name)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SystemExit(f"error: cannot parse config {path}: {exc}")


def _generator_config(cfg: dict, seed_override: int | None = None) -> GeneratorConfig:
    block = dict(cfg.get("generator", {}))
    table = _resolve_table(block.pop("table", None))
    base, _, _ = trainer_mod.default_benchmark(table)
    if seed_override is not None:
        block["seed"] = seed_override
    try:
        return replace(base, **block)
    except TypeError as exc:
        raise SystemExit(f"error: bad generator config: {exc}")


def _network_config(cfg: dict, input_dim: int, seed: int) -> NetworkConfig:
    block = dict(cfg.get("network", {}))
    block.setdefault("input_dim", input_dim)
    block.setdefault("seed", seed)
    if "hidden_dims" in block:
        block["hidden_dims"] = tuple(block["hidden_dims"])
    _, base, _ = trainer_mod.default_benchmark()
    try:
        return replace(base, **block)
    except TypeError as exc:
        raise SystemExit(f"error: bad network config: {exc}")


def _coupling_config(cfg: dict) -> coupling_mod.CouplingConfig | None:
    block = dict(cfg.get("coupling", {}))
    strategies = frozenset(block.pop("strategies", ()))
    if not strategies:
        return None
    table = _resolve_table(block.pop("table", None))
    try:
        return coupling_mod.CouplingConfig(table=table, strategies=strategies, **block)
    except (TypeError, ValueError) as exc:
        raise SystemExit(f"error: bad coupling config: {exc}")


def _train_config(cfg: dict, seed: int) -> trainer_mod.TrainConfig:
    block = dict(cfg.get("train", {}))
    weights = LossWeights(**block.pop("weights", {})) if "weights" in block else None
    _, _, base = trainer_mod.default_benchmark()
    block["seed"] = seed
    block["coupling"] = _coupling_config(cfg)
    if weights is not None:
        block["weights"] = weights
    try:
        return replace(base, **block)
    except TypeError as exc:
        raise SystemExit(f"error: bad train config: {exc}")


def _log(out_dir: Path, message: str) -> None:
    with (out_dir / "run.log").open("a", encoding="utf-8") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {message}\n")


def cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    gen_cfg = _generator_config(cfg, seed_override=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    bundle = generate(gen_cfg)
    save_datasets(bundle, out_dir)
    if "compound" in cfg:
        block = dict(cfg["compound"])
        classes_spec = block.pop("classes", "default")
        if classes_spec == "default":
            classes = zeroshot_mod.default_compound_classes(gen_cfg.table)
        else:
            classes = zeroshot_mod.load_compound_classes(classes_spec, gen_cfg.table)
        seed = block.pop("seed", gen_cfg.seed + 1)
        n_train = block.pop("n_train_per_class", 20)
        n_test = block.pop("n_test_per_class", 50)
        train = generate_compound(gen_cfg, list(classes), n_train, seed=seed)
        test = generate_compound(gen_cfg, list(classes), n_test, seed=seed + 1)
        save_compound(train, out_dir / "compound_train.csv")
        save_compound(test, out_dir / "compound_test.csv")
    _log(out_dir, f"generate finished in {time.perf_counter() - started:.2f}s")
    print(f"wrote datasets to {out_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    bundle = load_datasets(args.data)
    train_cfg = _train_config(cfg, args.seed)
    net_cfg = _network_config(cfg, bundle.va.features.shape[1], args.seed)
    net = Network(net_cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    eval_bundle = load_datasets(args.eval_data) if args.eval_data else None
    report = trainer_mod.train(net, bundle, train_cfg, eval_bundle)
    trainer_mod.write_loss_csv(report, out_dir / "losses.csv")
    save_network(net, out_dir / "model.npz")
    if report.metrics:
        metrics_mod.write_metrics_csv(
            trainer_mod.metrics_records(report.metrics, "eval"), out_dir / "metrics.csv"
        )
    _log(out_dir, f"train finished in {report.wall_clock_s:.2f}s")
    print(f"wrote losses.csv and model.npz to {out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    net = load_network(args.checkpoint)
    bundle = load_datasets(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for name, split in bundle.splits().items():
        scored = trainer_mod.evaluate(net, split)
        records.extend(trainer_mod.metrics_records(scored, name))
    metrics_mod.write_metrics_csv(records, out_dir / "metrics.csv")
    print(f"wrote metrics.csv to {out_dir}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args.config)
    gen_cfg = _generator_config(cfg)
    train_cfg = _train_config(cfg, args.seed)
    net_cfg = _network_config(cfg, gen_cfg.feature_dim, args.seed)
    coupling_cfg = train_cfg.coupling
    table = coupling_cfg.table if coupling_cfg is not None else gen_cfg.table
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    result = trainer_mod.run_ablation(
        gen_cfg,
        net_cfg,
        train_cfg,
        table,
        seeds=[args.seed + i for i in range(args.seeds)],
        include_baselines=not args.no_baselines,
    )
    trainer_mod.write_ablation_csvs(
        result, out_dir / "summary.csv", out_dir / "per_seed.csv"
    )
    table_text = trainer_mod.format_ablation_table(result)
    (out_dir / "summary.txt").write_text(table_text, encoding="utf-8")
    _log(out_dir, f"ablate finished in {time.perf_counter() - started:.2f}s")
    print(table_text, end="")
    print(f"wrote summary.csv, per_seed.csv, summary.txt to {out_dir}")
    return 0


def cmd_infer_table(args) -> int:
    emo_labels, au_matrix = _read_coannotated_csv(args.samples)
    table = infer_table(emo_labels, au_matrix, threshold=args.threshold)
    save_table(table, args.out)
    print(f"wrote inferred table to {args.out}")
    return 0


def _read_coannotated_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    expected = ["emo"] + [f"au_{a}" for a in AU_IDS]
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise SystemExit(f"error: {path} must have columns {','.join(expected)}")
        rows = list(reader)
    if not rows:
        raise SystemExit(f"error: {path} has no data rows")
    emo = np.array([int(r[0]) for r in rows], dtype=np.int64)
    au = np.array([[float(v) for v in r[1:]] for r in rows])
    return emo, au


def write_coannotated_csv(emo_labels, au_matrix, path) -> None:
    """Inverse of the infer-table input reader; used by tests and scripts."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["emo"] + [f"au_{a}" for a in AU_IDS])
        for e, row in zip(emo_labels, au_matrix):
            writer.writerow([int(e)] + [str(int(v)) for v in row])


def cmd_co_annotate(args) -> int:
    table = _resolve_table(args.table)
    if args.emotion is not None:
        targets = coupling_mod.co_annotate_emotion_to_aus(args.emotion, table)
        payload = [{"au": au, "target": t, "weight": w} for au, t, w in targets]
        text = json.dumps(payload, indent=2)
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
        return 0
    if args.au_csv is None:
        raise SystemExit("error: provide --emotion or --au-csv")
    rows = _read_au_vectors(args.au_csv)
    out_path = Path(args.out) if args.out else None
    if out_path is None:
        raise SystemExit("error: --au-csv mode needs --out")
    with out_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["hard_emotion"] + [f"soft_{name}" for name in EMOTIONS])
        for vec in rows:
            hard = coupling_mod.co_annotate_aus_to_emotion(vec, table)
            soft = coupling_mod.soft_emotion_label(vec, table, weighted=not args.unweighted)
            writer.writerow([hard or ""] + [repr(float(v)) for v in soft])
    print(f"wrote co-annotations to {out_path}")
    return 0


def _read_au_vectors(path: str) -> np.ndarray:
    expected = [f"au_{a}" for a in AU_IDS]
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise SystemExit(f"error: {path} must have columns {','.join(expected)}")
        rows = [[float(v) for v in r] for r in reader]
    if not rows:
        raise SystemExit(f"error: {path} has no data rows")
    return np.array(rows)


def cmd_zero_shot(args) -> int:
    table = _resolve_table(args.table)
    if args.classes:
        classes = zeroshot_mod.load_compound_classes(args.classes, table)
    else:
        classes = zeroshot_mod.default_compound_classes(table)
    cfg = zeroshot_mod.CompoundPredictionConfig(
        classes=classes,
        table=table,
        weighted=args.weighted,
        valence_term_enabled=not args.no_valence_term,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.preds:
        preds = zeroshot_mod.read_predictions_csv(args.preds)
        labels = None
        class_names = None
    elif args.checkpoint and args.data:
        net = load_network(args.checkpoint)
        data = load_compound(args.data)
        preds = trainer_mod.predict(net, data.features)
        labels = data.labels
        class_names = data.class_names
    else:
        raise SystemExit("error: provide --preds, or --checkpoint with --data")

    names, scores, ties = zeroshot_mod.classify_batch(preds, cfg)
    zeroshot_mod.write_scores_csv(names, scores, ties, cfg, out_dir / "scores.csv")
    if labels is not None:
        name_to_idx = {n: i for i, n in enumerate(cfg.class_names)}
        aligned = [name_to_idx[class_names[t]] for t in labels]
        hard = [name_to_idx[n] for n in names]
        cm = metrics_mod.confusion_matrix(aligned, hard, len(cfg.class_names))
        stats = metrics_mod.confusion_stats(cm)
        metrics_mod.write_metrics_csv(
            [
                {"task": "compound", "metric": "total_accuracy", "split": "zero_shot",
                 "value": stats["total_accuracy"]},
                {"task": "compound", "metric": "mean_diagonal", "split": "zero_shot",
                 "value": stats["mean_diagonal"]},
            ],
            out_dir / "metrics.csv",
        )
    print(f"wrote scores.csv to {out_dir}")
    return 0


def cmd_fine_tune(args) -> int:
    cfg = _load_config(args.config)
    net = load_network(args.checkpoint)
    data_dir = Path(args.data)
    train_data = load_compound(data_dir / "compound_train.csv")
    test_path = data_dir / "compound_test.csv"
    test_data = load_compound(test_path) if test_path.exists() else None
    block = dict(cfg.get("fine_tune", {}))
    block["seed"] = args.seed
    try:
        ft_cfg = trainer_mod.FineTuneConfig(**block)
    except TypeError as exc:
        raise SystemExit(f"error: bad fine_tune config: {exc}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ft_net, report = trainer_mod.fine_tune_compound(net, train_data, ft_cfg, test_data)
    trainer_mod.write_loss_csv(report, out_dir / "losses.csv")
    save_network(ft_net, out_dir / "model.npz")
    if report.metrics:
        metrics_mod.write_metrics_csv(
            trainer_mod.metrics_records(report.metrics, "compound_test"),
            out_dir / "metrics.csv",
        )
    _log(out_dir, f"fine-tune finished in {report.wall_clock_s:.2f}s")
    print(f"wrote losses.csv and model.npz to {out_dir}")
    return 0


_CONFIG_HELP = """\
config file (JSON) blocks and keys; omitted keys fall back to the bundled
benchmark defaults:

  generator: table ('cognitive' | 'empirical' | path), n_va, n_au, n_expr,
             feature_dim, noise_sigma, au_background_rate,
             au_annotated_per_sample, overlap_fraction, domain_shift,
             au_label_noise, emo_label_noise, va_label_noise, seed, map_seed
  network:   hidden_dims, dropout_rate, seed
  train:     learning_rate, momentum, epochs, iterations_per_epoch, seed,
             weights {au_weight, va_weight, dm_weight, soft_weight}
  coupling:  strategies [co_annotation | soft_co_annotation |
             distribution_matching], table, weighted_q, weighted_soft,
             stop_gradient_q, dm_bernoulli
  compound:  n_train_per_class, n_test_per_class, seed,
             classes ('default' | path)
  fine_tune: learning_rate, momentum, epochs, batch_size
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affectlearn",
        description="Joint expression/AU/valence-arousal learning on synthetic benchmarks",
        epilog=_CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw the three synthetic splits (and compound sets)")
    p.add_argument("--config", help="JSON config with a 'generator' (and 'compound') block")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the generator seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the joint network on generated datasets")
    p.add_argument("--config", help="JSON config with network/train/coupling blocks")
    p.add_argument("--data", required=True, help="directory from `generate`")
    p.add_argument("--eval-data", help="optional held-out directory to score after training")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True, help="training seed (required)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on each split's own task")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the coupling-variant grid over several seeds")
    p.add_argument("--config", help="JSON config; defaults to the bundled benchmark")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (default 5)")
    p.add_argument("--seed", type=int, required=True, help="base seed (required)")
    p.add_argument("--no-baselines", action="store_true",
                   help="skip the single-task baseline rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("infer-table", help="infer a relatedness table from co-annotated samples")
    p.add_argument("--samples", required=True,
                   help="CSV with columns emo,au_1..au_26 (canonical ids)")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--out", required=True, help="output table JSON path")
    p.set_defaults(func=cmd_infer_table)

    p = sub.add_parser("co-annotate", help="apply the hard/soft co-annotation rules")
    p.add_argument("--table", default="cognitive",
                   help="'cognitive', 'empirical' or a table JSON path")
    p.add_argument("--emotion", help="emit the AU targets for one emotion")
    p.add_argument("--au-csv", help="CSV of full AU vectors (au_1..au_26) to label")
    p.add_argument("--unweighted", action="store_true",
                   help="use all-ones weights in the soft scores")
    p.add_argument("--out", help="output path")
    p.set_defaults(func=cmd_co_annotate)

    p = sub.add_parser("zero-shot", help="compound-expression scoring from prediction triples")
    p.add_argument("--preds", help="CSV of prediction triples")
    p.add_argument("--checkpoint", help="alternatively: a trained network checkpoint")
    p.add_argument("--data", help="compound CSV (with .json sidecar) to predict on")
    p.add_argument("--classes", help="compound-class JSON (default: bundled list)")
    p.add_argument("--table", default="cognitive")
    p.add_argument("--weighted", action="store_true",
                   help="weight the AU term by the table weights")
    p.add_argument("--no-valence-term", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_zero_shot)

    p = sub.add_parser("fine-tune", help="swap in a compound head and fine-tune")
    p.add_argument("--config", help="JSON config with a 'fine_tune' block")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True,
                   help="directory holding compound_train.csv/compound_test.csv")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_fine_tune)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
