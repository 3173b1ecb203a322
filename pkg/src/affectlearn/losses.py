"""Task losses and their weighted aggregate.

Three task terms (expression cross entropy, presence-masked AU binary
cross entropy, 1 - CCC on valence/arousal) plus the two coupling terms
computed in :mod:`affectlearn.coupling`.  Every loss has a paired
gradient function with respect to the predictions it consumes, so the
training loop can push exact gradients through the network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import N_VA
from .relatedness import N_AUS, N_EMOTIONS

#: Floor applied inside logarithms; predictions below it carry no gradient.
LOG_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative multipliers for the aggregate objective."""

    au_weight: float = 1.0
    va_weight: float = 1.0
    dm_weight: float = 0.0
    soft_weight: float = 0.0

    def __post_init__(self) -> None:
        for name in ("au_weight", "va_weight", "dm_weight", "soft_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class LossBreakdown:
    """Per-term loss values; ``total`` is the weighted sum."""

    l_emo: float = 0.0
    l_au: float = 0.0
    l_va: float = 0.0
    l_dm: float = 0.0
    l_sca: float = 0.0
    total: float = 0.0


@dataclass
class LabeledBatch:
    """A batch of feature rows with per-task label blocks.

    Labels are dense with explicit absence markers: ``emo_labels`` uses -1,
    the AU block relies on an all-zero mask row, valence/arousal rows are
    flagged by ``va_present``.  Coupling strategies append derived targets:
    soft emotion distributions for AU-labelled rows and weighted AU targets
    for expression-labelled rows.
    """

    features: np.ndarray                       # (n, d)
    emo_labels: np.ndarray | None = None       # (n,) int, -1 where absent
    au_labels: np.ndarray | None = None        # (n, 17) 0/1
    au_mask: np.ndarray | None = None          # (n, 17) 0/1, row of zeros = unlabelled
    va_labels: np.ndarray | None = None        # (n, 2)
    va_present: np.ndarray | None = None       # (n,) bool
    soft_emo_targets: np.ndarray | None = None  # (n, 7) rows on the simplex or zero
    soft_present: np.ndarray | None = None      # (n,) bool
    coanno_au_targets: np.ndarray | None = None  # (n, 17) 0/1
    coanno_au_weights: np.ndarray | None = None  # (n, 17) >= 0, zero = no target

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        n = self.features.shape[0]
        for name, width in (
            ("au_labels", N_AUS),
            ("au_mask", N_AUS),
            ("va_labels", N_VA),
            ("soft_emo_targets", N_EMOTIONS),
            ("coanno_au_targets", N_AUS),
            ("coanno_au_weights", N_AUS),
        ):
            block = getattr(self, name)
            if block is not None:
                block = np.asarray(block, dtype=np.float64)
                if block.shape != (n, width):
                    raise ValueError(f"{name} has shape {block.shape}, expected {(n, width)}")
                setattr(self, name, block)
        if self.emo_labels is not None:
            self.emo_labels = np.asarray(self.emo_labels, dtype=np.int64)
            if self.emo_labels.shape != (n,):
                raise ValueError("emo_labels must be one entry per row")
        if (self.au_labels is None) != (self.au_mask is None):
            raise ValueError("au_labels and au_mask must be provided together")
        for name in ("va_present", "soft_present"):
            flags = getattr(self, name)
            if flags is not None:
                flags = np.asarray(flags, dtype=bool)
                if flags.shape != (n,):
                    raise ValueError(f"{name} must be one flag per row")
                setattr(self, name, flags)
        if self.va_labels is not None and self.va_present is None:
            self.va_present = np.ones(n, dtype=bool)
        if self.soft_emo_targets is not None:
            present = self.soft_present
            rows = self.soft_emo_targets if present is None else self.soft_emo_targets[present]
            if rows.size and np.abs(rows.sum(axis=1) - 1.0).max() > 1e-9:
                raise ValueError("soft emotion target rows must sum to 1")

    @property
    def n(self) -> int:
        return self.features.shape[0]


def expression_ce(emo_probs: np.ndarray, emo_labels: np.ndarray) -> float:
    """Mean negative log probability of the true class over labelled rows."""
    labelled = emo_labels >= 0
    if not labelled.any():
        raise ValueError("no expression-labelled rows in batch")
    p = emo_probs[labelled, emo_labels[labelled]]
    return float(np.mean(-np.log(np.maximum(p, LOG_EPS))))


def expression_ce_grad(emo_probs: np.ndarray, emo_labels: np.ndarray) -> np.ndarray:
    """Gradient of :func:`expression_ce` with respect to the probabilities."""
    labelled = emo_labels >= 0
    m = int(labelled.sum())
    grad = np.zeros_like(emo_probs)
    rows = np.flatnonzero(labelled)
    cols = emo_labels[labelled]
    p = emo_probs[rows, cols]
    live = p > LOG_EPS  # floored entries carry no gradient
    grad[rows[live], cols[live]] = -1.0 / (p[live] * m)
    return grad


def masked_au_bce(au_probs: np.ndarray, au_labels: np.ndarray, au_mask: np.ndarray) -> float:
    """Presence-masked binary cross entropy, averaged per row then over rows.

    Each row is normalized by its mask sum; rows whose mask is all zero
    contribute nothing and are excluded from the row average.  The mask
    may carry fractional weights, which scale each AU's term (used for
    re-weighted co-annotation targets).
    """
    row_w = au_mask.sum(axis=1)
    scored = row_w > 0
    if not scored.any():
        return 0.0
    p = au_probs[scored]
    y = au_labels[scored]
    w = au_mask[scored]
    term = y * np.log(np.maximum(p, LOG_EPS)) + (1.0 - y) * np.log(np.maximum(1.0 - p, LOG_EPS))
    per_row = -(w * term).sum(axis=1) / row_w[scored]
    return float(per_row.mean())


def masked_au_bce_grad(
    au_probs: np.ndarray, au_labels: np.ndarray, au_mask: np.ndarray
) -> np.ndarray:
    """Gradient of :func:`masked_au_bce` with respect to the probabilities."""
    grad = np.zeros_like(au_probs)
    row_w = au_mask.sum(axis=1)
    scored = row_w > 0
    if not scored.any():
        return grad
    p = au_probs[scored]
    y = au_labels[scored]
    w = au_mask[scored]
    m = int(scored.sum())
    d = np.zeros_like(p)
    lo = p > LOG_EPS
    hi = (1.0 - p) > LOG_EPS
    np.divide(y, p, out=d, where=lo)
    d_hi = np.zeros_like(p)
    np.divide(1.0 - y, 1.0 - p, out=d_hi, where=hi)
    d -= d_hi
    grad[scored] = -(w * d) / row_w[scored][:, None] / m
    return grad


def _ccc_parts(truth: np.ndarray, pred: np.ndarray) -> tuple[float, float, float, float, float]:
    mt, mp = truth.mean(), pred.mean()
    vt = np.mean((truth - mt) ** 2)
    vp = np.mean((pred - mp) ** 2)
    cov = np.mean((truth - mt) * (pred - mp))
    return mt, mp, vt, vp, cov


def va_ccc_loss(va_pred: np.ndarray, va_labels: np.ndarray) -> float:
    """1 minus the mean concordance over the valence and arousal columns."""
    va_pred = np.asarray(va_pred, dtype=np.float64)
    va_labels = np.asarray(va_labels, dtype=np.float64)
    if va_pred.shape != va_labels.shape or va_pred.ndim != 2 or va_pred.shape[1] != N_VA:
        raise ValueError("valence/arousal blocks must both be (n, 2)")
    if va_pred.shape[0] < 2:
        raise ValueError(
            "concordance needs batch statistics; provide at least 2 valence/arousal rows"
        )
    total = 0.0
    for col in range(N_VA):
        mt, mp, vt, vp, cov = _ccc_parts(va_labels[:, col], va_pred[:, col])
        denom = vt + vp + (mt - mp) ** 2
        total += 1.0 if denom == 0.0 else 2.0 * cov / denom
    return float(1.0 - total / 2.0)


def va_ccc_loss_grad(va_pred: np.ndarray, va_labels: np.ndarray) -> np.ndarray:
    """Gradient of :func:`va_ccc_loss` with respect to the predictions."""
    n = va_pred.shape[0]
    grad = np.zeros_like(va_pred)
    for col in range(N_VA):
        truth = va_labels[:, col]
        pred = va_pred[:, col]
        mt, mp, vt, vp, cov = _ccc_parts(truth, pred)
        denom = vt + vp + (mt - mp) ** 2
        if denom == 0.0 or not np.isfinite(denom):
            continue  # flat spot of the degenerate rule, or a diverged net
        d_ccc = (2.0 / (n * denom * denom)) * (
            (truth - mt) * denom - 2.0 * cov * (pred - mt)
        )
        grad[:, col] = -0.5 * d_ccc
    return grad


@dataclass
class CouplingTerms:
    """Per-batch coupling state prepared by the training loop.

    ``mixture`` is a :class:`affectlearn.coupling.MixtureTarget` computed
    from the current expression predictions; ``dm_rows`` restricts the
    matching term to a row subset (all rows when None).
    """

    mixture: object | None = None
    dm_rows: np.ndarray | None = None
    stop_gradient_q: bool = False
    dm_bernoulli: bool = False


def aggregate(
    batch: LabeledBatch,
    preds,
    weights: LossWeights,
    coupling_terms: CouplingTerms | None = None,
) -> LossBreakdown:
    """Weighted sum of all loss terms available in the batch.

    Absent terms are zero-filled.  Hard co-annotation targets enter the AU
    term through their per-target weights; soft emotion targets and the
    mixture targets feed the two coupling terms.
    """
    breakdown, _ = _aggregate_impl(batch, preds, weights, coupling_terms, want_grads=False)
    return breakdown


def aggregate_with_grads(
    batch: LabeledBatch,
    preds,
    weights: LossWeights,
    coupling_terms: CouplingTerms | None = None,
) -> tuple[LossBreakdown, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Like :func:`aggregate` but also returns gradients on the predictions."""
    return _aggregate_impl(batch, preds, weights, coupling_terms, want_grads=True)


def _aggregate_impl(batch, preds, weights, coupling_terms, want_grads):
    from . import coupling as _coupling

    bd = LossBreakdown()
    d_emo = np.zeros_like(preds.emo_probs)
    d_au = np.zeros_like(preds.au_probs)
    d_va = np.zeros_like(preds.va)
    any_term = False

    if batch.emo_labels is not None and (batch.emo_labels >= 0).any():
        bd.l_emo = expression_ce(preds.emo_probs, batch.emo_labels)
        if want_grads:
            d_emo += expression_ce_grad(preds.emo_probs, batch.emo_labels)
        any_term = True

    au_labels, au_mask = _merged_au_targets(batch)
    if au_mask is not None and (au_mask.sum(axis=1) > 0).any():
        bd.l_au = masked_au_bce(preds.au_probs, au_labels, au_mask)
        if want_grads:
            d_au += weights.au_weight * masked_au_bce_grad(preds.au_probs, au_labels, au_mask)
        any_term = True

    if batch.va_labels is not None and batch.va_present is not None and batch.va_present.any():
        rows = batch.va_present
        bd.l_va = va_ccc_loss(preds.va[rows], batch.va_labels[rows])
        if want_grads:
            d_va[rows] += weights.va_weight * va_ccc_loss_grad(
                preds.va[rows], batch.va_labels[rows]
            )
        any_term = True

    if coupling_terms is not None and coupling_terms.mixture is not None:
        mixture = coupling_terms.mixture
        rows = coupling_terms.dm_rows
        if rows is None:
            rows = np.ones(batch.n, dtype=bool)
        if rows.any():
            sub = _coupling.MixtureTarget(
                q=mixture.q[rows], mw=mixture.mw, z=mixture.z[rows]
            )
            bd.l_dm, g_au, g_emo = _coupling.distribution_matching_terms(
                preds.au_probs[rows],
                preds.emo_probs[rows],
                sub,
                stop_gradient_q=coupling_terms.stop_gradient_q,
                bernoulli=coupling_terms.dm_bernoulli,
            )
            if want_grads:
                d_au[rows] += weights.dm_weight * g_au
                d_emo[rows] += weights.dm_weight * g_emo
            any_term = True

    if (
        batch.soft_emo_targets is not None
        and batch.soft_present is not None
        and batch.soft_present.any()
    ):
        rows = batch.soft_present
        bd.l_sca, g_emo = _coupling.soft_coannotation_terms(
            preds.emo_probs[rows], batch.soft_emo_targets[rows]
        )
        if want_grads:
            d_emo[rows] += weights.soft_weight * g_emo
        any_term = True

    if not any_term:
        raise ValueError("batch carries no labels or coupling targets for any task")

    bd.total = (
        bd.l_emo
        + weights.au_weight * bd.l_au
        + weights.va_weight * bd.l_va
        + weights.dm_weight * bd.l_dm
        + weights.soft_weight * bd.l_sca
    )
    return bd, (d_emo, d_au, d_va)


def _merged_au_targets(batch: LabeledBatch) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Merge ground-truth AU rows with co-annotated targets into one masked block."""
    have_real = batch.au_labels is not None
    have_co = batch.coanno_au_targets is not None and batch.coanno_au_weights is not None
    if not have_real and not have_co:
        return None, None
    n = batch.n
    labels = np.zeros((n, N_AUS))
    mask = np.zeros((n, N_AUS))
    if have_real:
        sel = batch.au_mask > 0
        labels[sel] = batch.au_labels[sel]
        mask[sel] = batch.au_mask[sel]
    if have_co:
        sel = batch.coanno_au_weights > 0
        if (mask[sel] > 0).any():
            raise ValueError("co-annotated AU targets overlap ground-truth AU annotations")
        labels[sel] = batch.coanno_au_targets[sel]
        mask[sel] = batch.coanno_au_weights[sel]
    return labels, mask
