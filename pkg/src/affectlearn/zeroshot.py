"""Zero-shot compound-expression scoring from basic-task predictions.

Each compound class (two basic emotions) receives a candidate score built
from three ingredients: the mean predicted probability of the class's
associated AUs, the predicted probabilities of the two constituent
emotions, and, for the positive-valence classes, a bonus keyed to the
sign of the predicted valence.  The argmax over classes is the zero-shot
prediction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .network import PredictionTriple
from .relatedness import (
    AU_IDS,
    EMOTIONS,
    N_AUS,
    N_EMOTIONS,
    CompoundClass,
    RelatednessTable,
    compound_union,
)


@dataclass(frozen=True)
class CompoundPredictionConfig:
    """The class list to score plus the scoring switches."""

    classes: tuple[CompoundClass, ...]
    table: RelatednessTable
    weighted: bool = False
    valence_term_enabled: bool = True

    def __post_init__(self) -> None:
        if not self.classes:
            raise ValueError("need at least one compound class")
        for cls in self.classes:
            for emo in (cls.emo1, cls.emo2):
                if emo not in self.table.entries:
                    raise ValueError(f"class {cls.name!r} references unknown emotion {emo!r}")

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(cls.name for cls in self.classes)


def default_compound_classes(table: RelatednessTable) -> tuple[CompoundClass, ...]:
    """The bundled eleven-class list, AU sets from the constituent union."""
    ref = resources.files("affectlearn.data").joinpath("compound_classes.json")
    return load_compound_classes_dict(json.loads(ref.read_text(encoding="utf-8")), table)


def load_compound_classes(path: str | Path, table: RelatednessTable) -> tuple[CompoundClass, ...]:
    """Load a class-list JSON; entries may override AU weights per class."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return load_compound_classes_dict(raw, table)


def load_compound_classes_dict(raw: dict, table: RelatednessTable) -> tuple[CompoundClass, ...]:
    classes = []
    for item in raw["classes"]:
        base = compound_union(table, item["emo1"], item["emo2"])
        au_weights = (
            {int(a): float(w) for a, w in item["au_weights"].items()}
            if "au_weights" in item
            else base.au_weights
        )
        classes.append(
            CompoundClass(
                name=item.get("name", base.name),
                emo1=item["emo1"],
                emo2=item["emo2"],
                au_weights=au_weights,
                valence_term_applies=bool(item.get("valence_term", base.valence_term_applies)),
            )
        )
    return tuple(classes)


def candidate_score(pred: PredictionTriple, cls: CompoundClass,
                    weighted: bool = False, valence_term_enabled: bool = True) -> float:
    """Score one prediction triple against one compound class.

    The AU term is the (weight-)normalized sum of the predicted
    probabilities of the class's AUs, the emotion term adds the two
    constituent probabilities, and the valence bonus contributes
    0.5 * (sign(v) + 1) when the class qualifies and v is nonzero.
    """
    emo_probs, au_probs, va = _as_rows(pred)
    scores = _score_matrix(emo_probs, au_probs, va, (cls,), weighted, valence_term_enabled)
    return float(scores[0, 0])


def classify(pred: PredictionTriple, cfg: CompoundPredictionConfig) -> tuple[str, dict[str, float]]:
    """Argmax compound class for one prediction triple, with all scores."""
    names, scores, _ = classify_batch(pred, cfg)
    return names[0], dict(zip(cfg.class_names, scores[0]))


def classify_batch(
    preds: PredictionTriple, cfg: CompoundPredictionConfig
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Vectorized scoring; returns (argmax names, score matrix, tie flags).

    An exact score tie goes to the lower-index class and is flagged.
    """
    emo_probs, au_probs, va = _as_rows(preds)
    scores = _score_matrix(emo_probs, au_probs, va, cfg.classes,
                           cfg.weighted, cfg.valence_term_enabled)
    best = scores.argmax(axis=1)
    top = scores[np.arange(scores.shape[0]), best]
    ties = (scores == top[:, None]).sum(axis=1) > 1
    names = [cfg.classes[i].name for i in best]
    return names, scores, ties


def _score_matrix(emo_probs, au_probs, va, classes, weighted, valence_term_enabled):
    n = emo_probs.shape[0]
    k = len(classes)
    au_col = {au: j for j, au in enumerate(AU_IDS)}
    emo_idx = {name: i for i, name in enumerate(EMOTIONS)}
    scores = np.zeros((n, k))
    v = va[:, 0]
    valence_bonus = np.where(v > 0, 1.0, 0.0)  # 0.5 * (sign(v) + 1), 0 exactly at v == 0
    for j, cls in enumerate(classes):
        if cls.au_weights:
            cols = [au_col[au] for au in sorted(cls.au_weights)]
            w = (
                np.array([cls.au_weights[au] for au in sorted(cls.au_weights)])
                if weighted
                else np.ones(len(cols))
            )
            scores[:, j] += au_probs[:, cols] @ w / w.sum()
        scores[:, j] += emo_probs[:, emo_idx[cls.emo1]] + emo_probs[:, emo_idx[cls.emo2]]
        if cls.valence_term_applies and valence_term_enabled:
            scores[:, j] += valence_bonus
    return scores


def _as_rows(pred: PredictionTriple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    emo = np.atleast_2d(np.asarray(pred.emo_probs, dtype=np.float64))
    au = np.atleast_2d(np.asarray(pred.au_probs, dtype=np.float64))
    va = np.atleast_2d(np.asarray(pred.va, dtype=np.float64))
    n = emo.shape[0]
    if emo.shape != (n, N_EMOTIONS) or au.shape != (n, N_AUS) or va.shape != (n, 2):
        raise ValueError("prediction blocks have inconsistent shapes")
    return emo, au, va


# CSV wire format: 7 emotion probabilities, 17 AU probabilities, valence,
# arousal per row.

PREDICTION_COLUMNS = (
    [f"p_{name}" for name in EMOTIONS] + [f"au_{a}" for a in AU_IDS] + ["valence", "arousal"]
)


def read_predictions_csv(path: str | Path) -> PredictionTriple:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty predictions file {path}") from None
        if header != PREDICTION_COLUMNS:
            raise ValueError(f"unexpected prediction columns in {path}")
        rows = np.array([[float(v) for v in row] for row in reader])
    if rows.size == 0:
        raise ValueError(f"predictions file {path} has no data rows")
    return PredictionTriple(
        emo_probs=rows[:, :N_EMOTIONS],
        au_probs=rows[:, N_EMOTIONS : N_EMOTIONS + N_AUS],
        va=rows[:, N_EMOTIONS + N_AUS :],
    )


def write_predictions_csv(preds: PredictionTriple, path: str | Path) -> None:
    emo, au, va = _as_rows(preds)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_COLUMNS)
        for i in range(emo.shape[0]):
            writer.writerow([repr(float(x)) for x in (*emo[i], *au[i], *va[i])])


def write_scores_csv(
    names: list[str], scores: np.ndarray, ties: np.ndarray,
    cfg: CompoundPredictionConfig, path: str | Path,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"score_{n}" for n in cfg.class_names] + ["prediction", "tie"])
        for i, name in enumerate(names):
            writer.writerow(
                [repr(float(s)) for s in scores[i]] + [name, str(int(ties[i]))]
            )
