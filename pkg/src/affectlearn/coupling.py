"""Task-coupling strategies tying expression and AU predictions together.

Three strategies, each independently switchable:

* hard co-annotation: an expression label pins its associated AUs as
  weighted targets, and a fully observed AU vector may pin an expression
  label by the all-entries-present rule;
* soft co-annotation: an AU vector is turned into a soft expression
  distribution via per-emotion evidence scores and a softmax;
* distribution matching: predicted AU probabilities are matched against a
  mixture of the per-emotion AU profiles weighted by the predicted
  expression probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .relatedness import N_AUS, N_EMOTIONS, RelatednessTable

LOG_EPS = 1e-12

STRATEGIES = ("co_annotation", "soft_co_annotation", "distribution_matching")


@dataclass(frozen=True)
class CouplingConfig:
    """Which strategies run, on which relatedness table, and how."""

    table: RelatednessTable
    strategies: frozenset[str] = frozenset()
    weighted_q: bool = False
    weighted_soft: bool = True
    stop_gradient_q: bool = False
    dm_bernoulli: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategies", frozenset(self.strategies))
        unknown = self.strategies - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown coupling strategies: {sorted(unknown)}")

    @property
    def enabled(self) -> bool:
        return bool(self.strategies)


def co_annotate_emotion_to_aus(
    emotion: str, table: RelatednessTable
) -> list[tuple[int, int, float]]:
    """AU targets implied by an emotion label, as (au_id, target, weight).

    Prototypical entries come back with weight 1.0, observational entries
    with their table weight; neutral implies nothing.
    """
    if emotion not in table.entries:
        raise KeyError(f"unknown emotion: {emotion!r}")
    links = table.entries[emotion]
    ordered = sorted(links, key=lambda au: (not links[au].prototypical, au))
    return [(au, 1, links[au].weight) for au in ordered]


def co_annotate_aus_to_emotion(au_vector, table: RelatednessTable) -> str | None:
    """Emotion implied by a fully observed AU activation vector, if any.

    An emotion qualifies when every one of its table entries is active.
    Among several qualifying emotions the one requiring the most entries
    wins; a residual tie, or no qualifying emotion, yields no label.
    Emotions with empty entry sets (neutral) never qualify.
    """
    active = _as_au_vector(au_vector) > 0.5
    best: str | None = None
    best_size = 0
    tied = False
    for emo in table.emotions:
        aus = table.entry_aus(emo)
        if not aus:
            continue
        idx = [table.au_ids.index(au) for au in aus]
        if not active[idx].all():
            continue
        if len(aus) > best_size:
            best, best_size, tied = emo, len(aus), False
        elif len(aus) == best_size:
            tied = True
    return None if tied else best


def emotion_scores(au_vector, table: RelatednessTable, weighted: bool = True) -> np.ndarray:
    """Per-emotion evidence scores from an AU vector, before the softmax.

    Each emotion scores the weight-normalized sum of its active entries;
    emotions without entries score 0.
    """
    au = _as_au_vector(au_vector)
    mw = table.weight_matrix(weighted=weighted)
    sums = mw.sum(axis=1)
    scores = np.zeros(len(table.emotions))
    has = sums > 0
    scores[has] = (mw[has] @ au) / sums[has]
    return scores


def soft_emotion_label(au_vector, table: RelatednessTable, weighted: bool = True) -> np.ndarray:
    """Soft expression distribution: softmax over the evidence scores."""
    s = emotion_scores(au_vector, table, weighted=weighted)
    e = np.exp(s - s.max())
    return e / e.sum()


def soft_emotion_labels(au_matrix: np.ndarray, table: RelatednessTable,
                        weighted: bool = True) -> np.ndarray:
    """Row-wise :func:`soft_emotion_label` for an (n, 17) AU matrix."""
    au_matrix = np.asarray(au_matrix, dtype=np.float64)
    mw = table.weight_matrix(weighted=weighted)
    sums = mw.sum(axis=1)
    scores = np.zeros((au_matrix.shape[0], len(table.emotions)))
    has = sums > 0
    scores[:, has] = au_matrix @ mw[has].T / sums[has]
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class MixtureTarget:
    """Mixture AU targets plus the pieces needed to push gradients through."""

    q: np.ndarray            # (n, 17)
    mw: np.ndarray           # (7, 17) per-emotion AU weights in the numerator
    z: np.ndarray            # (n, 17) per-row normalizers, 0 where unsupported


def mixture_target(emo_probs: np.ndarray, table: RelatednessTable,
                   weighted: bool = False) -> MixtureTarget:
    """Mixture of per-emotion AU profiles under the predicted emotions.

    For each AU the mixture sums p(emotion) times the emotion's AU weight
    and normalizes by the contributing emotions, i.e. those that both
    carry the AU and have nonzero predicted probability.  AUs with no
    contributing emotion get 0.
    """
    p = np.asarray(emo_probs, dtype=np.float64)
    squeeze = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != N_EMOTIONS:
        raise ValueError(f"expected {N_EMOTIONS} emotion probabilities per row")
    mw = table.weight_matrix(weighted=weighted)
    support = p > 0  # (n, 7)
    if weighted:
        z = support.astype(np.float64) @ mw
    else:
        z = support.astype(np.float64) @ (mw > 0)
    num = p @ mw
    q = np.divide(num, z, out=np.zeros_like(num), where=z > 0)
    if squeeze:
        return MixtureTarget(q=q[0], mw=mw, z=z[0])
    return MixtureTarget(q=q, mw=mw, z=z)


def mixture_q(emo_probs: np.ndarray, table: RelatednessTable,
              weighted: bool = False) -> np.ndarray:
    """The mixture targets alone; see :func:`mixture_target`."""
    return mixture_target(emo_probs, table, weighted=weighted).q


def distribution_matching_loss(au_probs: np.ndarray, q: np.ndarray,
                               bernoulli: bool = False) -> float:
    """Cross entropy of predicted AU probabilities against soft targets.

    Mean over rows of the summed ``-p * log(q + eps)`` terms; the
    ``bernoulli`` variant adds the ``-(1-p) * log(1-q+eps)`` complement.
    """
    p = np.atleast_2d(np.asarray(au_probs, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    if p.shape != q.shape:
        raise ValueError("prediction and target blocks differ in shape")
    terms = -p * np.log(q + LOG_EPS)
    if bernoulli:
        terms -= (1.0 - p) * np.log(1.0 - q + LOG_EPS)
    return float(terms.sum(axis=1).mean())


def distribution_matching_terms(
    au_probs: np.ndarray,
    emo_probs: np.ndarray,
    target: MixtureTarget,
    stop_gradient_q: bool = False,
    bernoulli: bool = False,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Distribution-matching loss with gradients on both prediction blocks.

    Returns (loss, d/d au_probs, d/d emo_probs).  The emotion gradient
    flows through the mixture targets unless ``stop_gradient_q`` is set.
    """
    p = np.atleast_2d(au_probs)
    q = np.atleast_2d(target.q)
    z = np.atleast_2d(target.z)
    n = p.shape[0]
    loss = distribution_matching_loss(p, q, bernoulli=bernoulli)
    d_au = -np.log(q + LOG_EPS) / n
    d_q = -p / (q + LOG_EPS) / n
    if bernoulli:
        d_au += np.log(1.0 - q + LOG_EPS) / n
        d_q += (1.0 - p) / (1.0 - q + LOG_EPS) / n
    if stop_gradient_q:
        d_emo = np.zeros((n, N_EMOTIONS))
    else:
        # dq_i/dp_e = mw[e, i] / z_i on the support; z treated as locally constant
        scaled = np.divide(d_q, z, out=np.zeros_like(d_q), where=z > 0)
        d_emo = scaled @ target.mw.T
    return loss, d_au, d_emo


def soft_coannotation_loss(emo_probs: np.ndarray, soft_targets: np.ndarray) -> float:
    """Cross entropy of predicted expressions against soft labels."""
    p = np.atleast_2d(np.asarray(emo_probs, dtype=np.float64))
    s = np.atleast_2d(np.asarray(soft_targets, dtype=np.float64))
    if p.shape != s.shape:
        raise ValueError("prediction and target blocks differ in shape")
    return float((-s * np.log(p + LOG_EPS)).sum(axis=1).mean())


def soft_coannotation_terms(
    emo_probs: np.ndarray, soft_targets: np.ndarray
) -> tuple[float, np.ndarray]:
    """Soft co-annotation loss and its gradient on the expression block."""
    p = np.atleast_2d(emo_probs)
    s = np.atleast_2d(soft_targets)
    loss = soft_coannotation_loss(p, s)
    d_emo = -s / (p + LOG_EPS) / p.shape[0]
    return loss, d_emo


def _as_au_vector(au_vector) -> np.ndarray:
    au = np.asarray(au_vector, dtype=np.float64).ravel()
    if au.shape != (N_AUS,):
        raise ValueError(f"expected a full vector of {N_AUS} AU activations, got {au.shape}")
    return au


# Batch-level application used by the training loop.  Both helpers derive
# their targets from the batch's ground-truth blocks only, never from
# previously derived ones.


def apply_co_annotation(batch, table: RelatednessTable):
    """Return a copy of ``batch`` with hard co-annotation targets attached.

    Expression-labelled rows gain weighted AU targets from the table row
    of their emotion.  AU-labelled rows gain an emotion label when the
    all-entries-present rule fires; AUs without an annotation count as
    inactive, since presence cannot be confirmed for them.
    """
    emo_targets = table.weight_matrix(weighted=False)   # target = activated
    emo_weights = table.weight_matrix(weighted=True)

    new = replace(batch)
    n = batch.n
    emo_labels = (
        batch.emo_labels.copy() if batch.emo_labels is not None
        else np.full(n, -1, dtype=np.int64)
    )

    has_emo = emo_labels >= 0
    if has_emo.any():
        targets = np.zeros((n, N_AUS))
        weights = np.zeros((n, N_AUS))
        targets[has_emo] = emo_targets[emo_labels[has_emo]]
        weights[has_emo] = emo_weights[emo_labels[has_emo]]
        new.coanno_au_targets = targets
        new.coanno_au_weights = weights

    if batch.au_labels is not None and batch.au_mask is not None:
        observed = batch.au_labels * batch.au_mask
        for row in np.flatnonzero(batch.au_mask.sum(axis=1) > 0):
            if emo_labels[row] >= 0:
                continue
            label = co_annotate_aus_to_emotion(observed[row], table)
            if label is not None:
                emo_labels[row] = table.emotions.index(label)
    new.emo_labels = emo_labels
    return new


def apply_soft_co_annotation(batch, table: RelatednessTable, weighted: bool = True):
    """Return a copy of ``batch`` with soft emotion targets on AU rows."""
    new = replace(batch)
    if batch.au_labels is None or batch.au_mask is None:
        return new
    rows = batch.au_mask.sum(axis=1) > 0
    if not rows.any():
        return new
    observed = batch.au_labels * batch.au_mask
    targets = np.zeros((batch.n, N_EMOTIONS))
    targets[rows] = soft_emotion_labels(observed[rows], table, weighted=weighted)
    new.soft_emo_targets = targets
    new.soft_present = rows
    return new
