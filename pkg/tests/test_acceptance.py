"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines; the heavyweight relative-comparison grid (criterion 7) trains
(5 coupling variants + 3 single-task baselines) x 5 seeds and stays well
inside its ten-minute budget.
"""

import math
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest

import affectlearn as al
from affectlearn import coupling as coupling_mod
from affectlearn import trainer as trainer_mod
from affectlearn import zeroshot as zeroshot_mod
from affectlearn.cli import main as cli_main
from affectlearn.losses import (
    expression_ce,
    expression_ce_grad,
    masked_au_bce,
    masked_au_bce_grad,
    va_ccc_loss,
    va_ccc_loss_grad,
)
from affectlearn.metrics import ccc, confusion_matrix, confusion_stats
from affectlearn.network import Network, NetworkConfig, gradient_check, sigmoid_vjp, softmax_vjp
from affectlearn.relatedness import AU_IDS, EMOTIONS, infer_table, load_bundled_table
from affectlearn.synthdata import (
    BatchIterator,
    generate,
    generate_coannotated,
    generate_compound,
    schedule,
)

COL = {au: j for j, au in enumerate(AU_IDS)}

GOLDEN_ROWS = {
    "neutral": {},
    "happiness": {12: 1.0, 25: 1.0, 6: 0.51},
    "sadness": {4: 1.0, 15: 1.0, 1: 0.6, 6: 0.5, 11: 0.26, 17: 0.67},
    "fear": {1: 1.0, 4: 1.0, 20: 1.0, 25: 1.0, 2: 0.57, 5: 0.63, 26: 0.33},
    "anger": {4: 1.0, 7: 1.0, 24: 1.0, 10: 0.26, 17: 0.52, 23: 0.29},
    "surprise": {1: 1.0, 2: 1.0, 25: 1.0, 26: 1.0, 5: 0.66},
    "disgust": {9: 1.0, 10: 1.0, 17: 1.0, 4: 0.31, 24: 0.26},
}


@contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {number} ({name}): FAIL")
        raise
    print(f"\nACCEPTANCE {number} ({name}): PASS")


@pytest.fixture(scope="module")
def table():
    return load_bundled_table("cognitive")


def test_criterion_1_gradient_soundness(table):
    """Analytic gradients of every loss match central finite differences."""
    with criterion(1, "gradient soundness"):
        started = time.perf_counter()
        rng = np.random.default_rng(1234)
        worst = 0.0
        losses = ("emo", "au", "va", "dm", "sca", "coanno")
        for instance in range(20):
            cfg = NetworkConfig(
                input_dim=int(rng.integers(5, 10)),
                hidden_dims=(int(rng.integers(10, 16)), int(rng.integers(8, 14))),
                dropout_rate=0.0,
                seed=int(rng.integers(2**31)),
            )
            net = Network(cfg)
            n = int(rng.integers(4, 9))
            batch = rng.normal(size=(n, cfg.input_dim))
            emo_labels = rng.integers(0, 7, size=n)
            au_labels = rng.integers(0, 2, size=(n, 17)).astype(float)
            au_mask = (rng.random((n, 17)) < 0.7).astype(float)
            va_labels = rng.uniform(-1, 1, size=(n, 2))
            soft = rng.dirichlet(np.ones(7), size=n)
            co_targets = rng.integers(0, 2, size=(n, 17)).astype(float)
            co_weights = rng.uniform(0.1, 1.0, size=(n, 17)) * (rng.random((n, 17)) < 0.5)

            def loss_fn(kind):
                def fn(net, x):
                    _, preds, cache = net.forward(x)
                    d_emo = np.zeros_like(preds.emo_probs)
                    d_au = np.zeros_like(preds.au_probs)
                    d_va = np.zeros_like(preds.va)
                    if kind == "emo":
                        loss = expression_ce(preds.emo_probs, emo_labels)
                        d_emo = expression_ce_grad(preds.emo_probs, emo_labels)
                    elif kind == "au":
                        loss = masked_au_bce(preds.au_probs, au_labels, au_mask)
                        d_au = masked_au_bce_grad(preds.au_probs, au_labels, au_mask)
                    elif kind == "va":
                        loss = va_ccc_loss(preds.va, va_labels)
                        d_va = va_ccc_loss_grad(preds.va, va_labels)
                    elif kind == "dm":
                        target = coupling_mod.mixture_target(preds.emo_probs, table)
                        loss, d_au, d_emo = coupling_mod.distribution_matching_terms(
                            preds.au_probs, preds.emo_probs, target
                        )
                    elif kind == "sca":
                        loss, d_emo = coupling_mod.soft_coannotation_terms(
                            preds.emo_probs, soft
                        )
                    else:  # weighted co-annotation BCE terms
                        loss = masked_au_bce(preds.au_probs, co_targets, co_weights)
                        d_au = masked_au_bce_grad(preds.au_probs, co_targets, co_weights)
                    net.zero_grads()
                    net.backward(
                        cache,
                        softmax_vjp(preds.emo_probs, d_emo),
                        sigmoid_vjp(preds.au_probs, d_au),
                        d_va,
                    )
                    return loss, net.get_flat_grads()

                return fn

            kind = losses[instance % len(losses)]
            err = gradient_check(net, batch, loss_fn(kind), n_coords=200, h=1e-5,
                                 seed=instance)
            worst = max(worst, err)
            # every loss also gets checked on the first instances directly
            if instance < 6:
                for extra in losses:
                    err = gradient_check(net, batch, loss_fn(extra), n_coords=200,
                                         h=1e-5, seed=100 + instance)
                    worst = max(worst, err)

        elapsed = time.perf_counter() - started
        print(f"\n  max relative error {worst:.3e} over 20+ instances, {elapsed:.1f}s")
        assert worst < 1e-4
        assert elapsed < 30.0


def test_criterion_2_ccc_oracle_suite():
    """CCC identities, degenerate rules, symmetry, bounds, hand value."""
    with criterion(2, "CCC oracle suite"):
        rng = np.random.default_rng(2)
        y = rng.normal(size=25)
        assert abs(ccc(y, y) - 1.0) <= 1e-12
        assert ccc(rng.normal(size=10), np.full(10, 0.4)) == 0.0
        for _ in range(200):
            a, b = rng.normal(size=12), rng.normal(size=12)
            assert abs(ccc(a, b) - ccc(b, a)) <= 1e-12
        for _ in range(1000):
            n = int(rng.integers(2, 50))
            a = rng.normal(size=n) * rng.uniform(0.01, 100)
            b = rng.normal(size=n) * rng.uniform(0.01, 100)
            assert abs(ccc(a, b)) <= 1.0 + 1e-12
        assert abs(ccc([1.0, -1.0], [0.5, -0.5]) - 0.8) <= 1e-12


def test_criterion_3_rule_engine_golden(table):
    """Hard co-annotation reproduces the association table both ways."""
    with criterion(3, "rule-engine golden tests"):
        for emo, expected in GOLDEN_ROWS.items():
            targets = coupling_mod.co_annotate_emotion_to_aus(emo, table)
            assert {au: w for au, _, w in targets} == expected, emo
            assert all(t == 1 for _, t, _ in targets)
        for emo in EMOTIONS:
            aus = table.entry_aus(emo)
            if not aus:
                continue
            vec = np.zeros(17)
            vec[[COL[a] for a in aus]] = 1.0
            assert coupling_mod.co_annotate_aus_to_emotion(vec, table) == emo
        # fear and surprise both fully present: the larger requirement wins
        vec = np.zeros(17)
        vec[[COL[a] for a in (1, 2, 4, 5, 20, 25, 26)]] = 1.0
        assert coupling_mod.co_annotate_aus_to_emotion(vec, table) == "fear"


def test_criterion_4_mixture_equivalence(table):
    """Mixture targets equal a brute-force double loop; worked cases exact."""
    with criterion(4, "mixture equivalence"):
        rng = np.random.default_rng(4)

        def oracle(p, weighted):
            q = np.zeros(17)
            for j, au in enumerate(AU_IDS):
                num = z = 0.0
                for i, emo in enumerate(EMOTIONS):
                    w = table.au_given_emotion(au, emo, weighted=weighted)
                    if w > 0 and p[i] > 0:
                        num += p[i] * w
                        z += w if weighted else 1.0
                q[j] = num / z if z > 0 else 0.0
            return q

        for weighted in (False, True):
            for _ in range(1000):
                p = rng.dirichlet(rng.uniform(0.5, 3.0, size=7))
                got = coupling_mod.mixture_q(p, table, weighted=weighted)
                assert np.abs(got - oracle(p, weighted)).max() <= 1e-12

        one_hot = np.zeros(7)
        one_hot[EMOTIONS.index("happiness")] = 1.0
        indicator = np.zeros(17)
        indicator[[COL[12], COL[25], COL[6]]] = 1.0
        np.testing.assert_array_equal(coupling_mod.mixture_q(one_hot, table), indicator)

        for _ in range(100):
            p = rng.dirichlet(np.ones(7))
            q2 = coupling_mod.mixture_q(p, table)[COL[2]]
            expected = (p[EMOTIONS.index("surprise")] + p[EMOTIONS.index("fear")]) / 2
            assert abs(q2 - expected) <= 1e-12


def test_criterion_5_soft_label_paper_case(table):
    """Pre-softmax evidence scores for the worked activation pattern."""
    with criterion(5, "soft-label worked case"):
        vec = np.zeros(17)
        vec[[COL[12], COL[25], COL[6]]] = 1.0
        scores = coupling_mod.emotion_scores(vec, table, weighted=True)
        assert scores[EMOTIONS.index("happiness")] == pytest.approx(1.0, abs=1e-12)
        assert scores[EMOTIONS.index("sadness")] == pytest.approx(0.5 / 4.03, abs=1e-9)


def test_criterion_6_batching_exhaustiveness(table):
    """Ratio-sized splits walk every sample exactly once per epoch."""
    with criterion(6, "batching exhaustiveness"):
        k = 3
        cfg = al.GeneratorConfig(table=table, n_va=401 * k, n_au=247 * k,
                                 n_expr=103 * k, noise_sigma=0.1, seed=6)
        bundle = generate(cfg)
        sched = schedule((bundle.va.n, bundle.au.n, bundle.expr.n), k)
        assert sched.batch_sizes == (401, 247, 103)
        seen = 0
        rows = []
        for batch in BatchIterator(bundle, sched, epoch_seed=0):
            assert batch.n == 401 + 247 + 103
            assert (batch.emo_labels >= 0).any()
            assert batch.au_mask.any()
            assert batch.va_present.any()
            rows.append(batch.features)
            seen += batch.n
        assert seen == (401 + 247 + 103) * k
        stacked = {tuple(r) for r in np.concatenate(rows)}
        everything = {
            tuple(r)
            for r in np.concatenate(
                [bundle.va.features, bundle.au.features, bundle.expr.features]
            )
        }
        assert stacked == everything


def test_criterion_7_relative_multi_task(table):
    """Joint beats single-task per task; coupling helps on 2 of 3 tasks."""
    with criterion(7, "relative multi-task claim"):
        started = time.perf_counter()
        gen_cfg, net_cfg, train_cfg = trainer_mod.default_benchmark(table)
        result = trainer_mod.run_ablation(
            gen_cfg, net_cfg, train_cfg, table,
            seeds=[0, 1, 2, 3, 4],
            variants=("none", "co_annotation", "soft_co_annotation",
                      "distr_matching", "both"),
            include_baselines=True,
        )
        elapsed = time.perf_counter() - started

        joint = trainer_mod.headline(result["summary"]["none"])
        both = trainer_mod.headline(result["summary"]["both"])
        single = {
            task: trainer_mod.headline(result["baseline_summary"][task])[task]
            for task in ("va", "au", "expr")
        }
        print(f"\n  grid runtime {elapsed:.1f}s")
        print(f"  single-task     {_fmt(single)}")
        print(f"  joint, none     {_fmt(joint)}")
        print(f"  joint, both     {_fmt(both)}")
        print(f"  joint - single  {_fmt({t: joint[t] - single[t] for t in single})}")
        print(f"  both - none     {_fmt({t: both[t] - joint[t] for t in joint})}")

        assert elapsed < 600.0
        # (a) joint training matches or beats every single-task baseline
        for task in ("va", "au", "expr"):
            assert joint[task] >= single[task], task
        # (b) the coupled run improves the mean headline on >= 2 of 3 tasks
        improvements = [both[t] - joint[t] for t in ("va", "au", "expr")]
        assert sum(delta >= 0 for delta in improvements) >= 2


def _fmt(d):
    return {k: round(float(v), 4) for k, v in d.items()}


def test_criterion_8_zero_shot_sanity(table):
    """Zero-shot compound scoring beats 2x chance; valence bonus helps."""
    with criterion(8, "zero-shot sanity"):
        gen_cfg, net_cfg, train_cfg = trainer_mod.default_benchmark(table)
        cfg = replace(
            train_cfg,
            coupling=coupling_mod.CouplingConfig(
                table=table,
                strategies=frozenset({"soft_co_annotation", "distribution_matching"}),
            ),
        )
        bundle = generate(gen_cfg)
        net = Network(net_cfg)
        trainer_mod.train(net, bundle, cfg)

        classes = zeroshot_mod.default_compound_classes(table)
        compound = generate_compound(gen_cfg, list(classes), 40, seed=500)
        preds = trainer_mod.predict(net, compound.features)

        recalls = {}
        for enabled in (True, False):
            z_cfg = zeroshot_mod.CompoundPredictionConfig(
                classes=classes, table=table, valence_term_enabled=enabled
            )
            names, _, _ = zeroshot_mod.classify_batch(preds, z_cfg)
            idx = {n: i for i, n in enumerate(z_cfg.class_names)}
            cm = confusion_matrix(
                compound.labels, [idx[n] for n in names], len(classes)
            )
            stats = confusion_stats(cm)
            hs = z_cfg.class_names.index("happily_surprised")
            recalls[enabled] = float(stats["per_class_recall"][hs])
            if enabled:
                diag = stats["mean_diagonal"]
        print(f"\n  mean diagonal {diag:.3f} (chance {1/11:.3f});"
              f" happily-surprised recall {recalls[True]:.3f} with valence term,"
              f" {recalls[False]:.3f} without")
        assert diag > 2.0 / 11.0
        assert recalls[True] > recalls[False]


def test_criterion_9_relatedness_inference(table):
    """Inference recovers generating weights and exact membership."""
    with criterion(9, "relatedness inference"):
        emo, au = generate_coannotated(table, 10_000, background_rate=0.02, seed=9)
        inferred = infer_table(emo, au, threshold=0.1)
        for emotion in EMOTIONS:
            truth = table.entries[emotion]
            assert set(inferred.entries[emotion]) == set(truth), emotion
            for au_id, link in truth.items():
                got = inferred.entries[emotion][au_id].weight
                assert abs(got - link.weight) <= 0.05, (emotion, au_id)


def test_criterion_10_cli_determinism(table, tmp_path):
    """train and ablate emit byte-identical report CSVs across reruns."""
    with criterion(10, "CLI determinism"):
        import json

        config = {
            "generator": {"n_va": 240, "n_au": 160, "n_expr": 80,
                          "noise_sigma": 0.4, "seed": 3},
            "network": {"hidden_dims": [16]},
            "train": {"epochs": 2, "iterations_per_epoch": 4},
            "coupling": {"strategies": ["soft_co_annotation", "distribution_matching"]},
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        data_dir = tmp_path / "data"
        assert cli_main(["generate", "--config", str(cfg_path),
                         "--out", str(data_dir)]) == 0

        train_outputs = []
        for name in ("t1", "t2"):
            out = tmp_path / name
            assert cli_main(["train", "--config", str(cfg_path), "--data",
                             str(data_dir), "--eval-data", str(data_dir),
                             "--out", str(out), "--seed", "12"]) == 0
            train_outputs.append(
                ((out / "losses.csv").read_bytes(), (out / "metrics.csv").read_bytes())
            )
        assert train_outputs[0] == train_outputs[1]

        ablate_outputs = []
        for name in ("a1", "a2"):
            out = tmp_path / name
            assert cli_main(["ablate", "--config", str(cfg_path), "--seeds", "2",
                             "--seed", "5", "--out", str(out)]) == 0
            ablate_outputs.append(
                ((out / "summary.csv").read_bytes(), (out / "per_seed.csv").read_bytes())
            )
        assert ablate_outputs[0] == ablate_outputs[1]
