"""Scikit-learn style facades over the joint trainer and zero-shot scorer.

Both classes follow the estimator protocol (``get_params``/``set_params``,
``fit``/``predict``), so they clone, grid-search and pipeline like any
other estimator.  Labels for the joint estimator arrive as a dict of
optional per-task blocks with NaN marking missing annotations, since the
whole point of the model is training across partially labelled data.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import trainer as trainer_mod
from .coupling import STRATEGIES, CouplingConfig
from .losses import LossWeights
from .network import Network, NetworkConfig
from .relatedness import RelatednessTable, load_bundled_table, load_table
from .synthdata import DatasetBundle, DatasetSplit
from .validation import check_feature_matrix, check_joint_labels
from .zeroshot import (
    CompoundPredictionConfig,
    classify_batch,
    default_compound_classes,
    load_compound_classes,
)


def _resolve_table(table) -> RelatednessTable:
    if isinstance(table, RelatednessTable):
        return table
    if table in ("cognitive", "empirical"):
        return load_bundled_table(table)
    return load_table(table)


class JointBehaviorEstimator(BaseEstimator):
    """Joint expression/AU/valence-arousal model with task coupling.

    Parameters mirror the network, optimizer and coupling knobs; ``fit``
    splits the rows into per-task pools by which labels they carry and
    trains the shared-trunk network over interleaved batches.

    Examples
    --------
    >>> est = JointBehaviorEstimator(epochs=5, seed=0)
    >>> est.fit(X, {"emotion": emo, "au": au, "va": va})   # doctest: +SKIP
    >>> est.predict(X)["emotion"]                          # doctest: +SKIP
    """

    def __init__(
        self,
        hidden_dims=(64, 64),
        dropout_rate=0.0,
        learning_rate=0.1,
        momentum=0.0,
        epochs=30,
        iterations_per_epoch=10,
        au_weight=1.0,
        va_weight=1.0,
        dm_weight=0.5,
        soft_weight=0.5,
        strategies=(),
        table="cognitive",
        weighted_q=False,
        weighted_soft=True,
        stop_gradient_q=False,
        seed=0,
    ):
        self.hidden_dims = hidden_dims
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.iterations_per_epoch = iterations_per_epoch
        self.au_weight = au_weight
        self.va_weight = va_weight
        self.dm_weight = dm_weight
        self.soft_weight = soft_weight
        self.strategies = strategies
        self.table = table
        self.weighted_q = weighted_q
        self.weighted_soft = weighted_soft
        self.stop_gradient_q = stop_gradient_q
        self.seed = seed

    def fit(self, X, y):
        X = check_feature_matrix(X)
        blocks = check_joint_labels(X, y)
        bundle = self._build_bundle(X, blocks)

        table = _resolve_table(self.table)
        strategies = frozenset(self.strategies)
        unknown = strategies - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown coupling strategies: {sorted(unknown)}")
        coupling = (
            CouplingConfig(
                table=table,
                strategies=strategies,
                weighted_q=self.weighted_q,
                weighted_soft=self.weighted_soft,
                stop_gradient_q=self.stop_gradient_q,
            )
            if strategies
            else None
        )
        weights = LossWeights(
            au_weight=self.au_weight,
            va_weight=self.va_weight,
            dm_weight=self.dm_weight if "distribution_matching" in strategies else 0.0,
            soft_weight=self.soft_weight if "soft_co_annotation" in strategies else 0.0,
        )
        sizes = (bundle.va.n, bundle.au.n, bundle.expr.n)
        iters = max(1, min(self.iterations_per_epoch, min(sizes)))
        cfg = trainer_mod.TrainConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            epochs=self.epochs,
            iterations_per_epoch=iters,
            weights=weights,
            coupling=coupling,
            seed=self.seed,
        )
        net_cfg = NetworkConfig(
            input_dim=X.shape[1],
            hidden_dims=tuple(self.hidden_dims),
            dropout_rate=self.dropout_rate,
            seed=self.seed,
        )
        self.network_ = Network(net_cfg)
        self.report_ = trainer_mod.train(self.network_, bundle, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def _build_bundle(self, X, blocks) -> DatasetBundle:
        """Route rows into per-task pools; a row may serve several tasks."""
        n = X.shape[0]
        if "va" in blocks:
            va_labels, present = blocks["va"]
            va = DatasetSplit(features=X[present], va_labels=va_labels[present])
        else:
            va = None
        if "au" in blocks:
            au_labels, mask = blocks["au"]
            rows = mask.sum(axis=1) > 0
            au = DatasetSplit(features=X[rows], au_labels=au_labels[rows], au_mask=mask[rows])
        else:
            au = None
        if "emotion" in blocks:
            emo = blocks["emotion"]
            rows = emo >= 0
            expr = DatasetSplit(features=X[rows], emo_labels=emo[rows])
        else:
            expr = None
        # the scheduler expects all three pools; an absent task contributes a
        # single unlabeled placeholder row that no loss term ever touches
        placeholder = DatasetSplit(
            features=np.zeros((1, X.shape[1])),
            va_labels=None,
        )
        return DatasetBundle(
            va=va if va is not None else placeholder,
            au=au if au is not None else placeholder,
            expr=expr if expr is not None else placeholder,
        )

    def predict(self, X) -> dict[str, np.ndarray]:
        """Hard predictions per task: emotion index, AU bits, clamped VA."""
        self._check_fitted()
        X = check_feature_matrix(X, self.n_features_in_)
        preds = trainer_mod.predict(self.network_, X)
        return {
            "emotion": preds.emo_probs.argmax(axis=1),
            "au": (preds.au_probs >= 0.5).astype(np.int64),
            "va": np.clip(preds.va, -1.0, 1.0),
        }

    def predict_proba(self, X) -> dict[str, np.ndarray]:
        """Probabilistic outputs: emotion simplex, AU sigmoids, raw VA."""
        self._check_fitted()
        X = check_feature_matrix(X, self.n_features_in_)
        preds = trainer_mod.predict(self.network_, X)
        return {"emotion": preds.emo_probs, "au": preds.au_probs, "va": preds.va}

    def score(self, X, y) -> float:
        """Mean of the per-task headline metrics over the tasks in ``y``."""
        self._check_fitted()
        X = check_feature_matrix(X, self.n_features_in_)
        blocks = check_joint_labels(X, y)
        scores = []
        if "va" in blocks:
            va_labels, present = blocks["va"]
            split = DatasetSplit(features=X[present], va_labels=va_labels[present])
            scores.append(trainer_mod.evaluate(self.network_, split)["va"]["ccc_mean"])
        if "au" in blocks:
            au_labels, mask = blocks["au"]
            rows = mask.sum(axis=1) > 0
            split = DatasetSplit(features=X[rows], au_labels=au_labels[rows], au_mask=mask[rows])
            scores.append(trainer_mod.evaluate(self.network_, split)["au"]["f1_mean"])
        if "emotion" in blocks:
            emo = blocks["emotion"]
            rows = emo >= 0
            split = DatasetSplit(features=X[rows], emo_labels=emo[rows])
            scores.append(
                trainer_mod.evaluate(self.network_, split)["expr"]["total_accuracy"]
            )
        return float(np.mean(scores))

    def _check_fitted(self) -> None:
        if not hasattr(self, "network_"):
            raise NotFittedError("this JointBehaviorEstimator is not fitted yet")


class CompoundZeroShotClassifier(BaseEstimator, ClassifierMixin):
    """Rule-based compound-expression classifier over prediction triples.

    ``X`` rows are concatenated prediction triples (7 emotion
    probabilities, 17 AU probabilities, valence, arousal).  ``fit`` only
    resolves the class list and relatedness table; there is nothing to
    learn.
    """

    def __init__(self, classes="default", table="cognitive", weighted=False,
                 valence_term=True):
        self.classes = classes
        self.table = table
        self.weighted = weighted
        self.valence_term = valence_term

    def fit(self, X=None, y=None):
        table = _resolve_table(self.table)
        if self.classes == "default":
            classes = default_compound_classes(table)
        elif isinstance(self.classes, (str,)):
            classes = load_compound_classes(self.classes, table)
        else:
            classes = tuple(self.classes)
        self.config_ = CompoundPredictionConfig(
            classes=classes,
            table=table,
            weighted=self.weighted,
            valence_term_enabled=self.valence_term,
        )
        self.classes_ = np.array(self.config_.class_names)
        return self

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        _, scores, _ = classify_batch(_triple_from_matrix(X), self.config_)
        return scores

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        names, _, _ = classify_batch(_triple_from_matrix(X), self.config_)
        return np.array(names)

    def _check_fitted(self) -> None:
        if not hasattr(self, "config_"):
            raise NotFittedError("call fit() to resolve the class list first")


def _triple_from_matrix(X):
    from .network import PredictionTriple
    from .relatedness import N_AUS, N_EMOTIONS

    X = check_feature_matrix(X, N_EMOTIONS + N_AUS + 2)
    return PredictionTriple(
        emo_probs=X[:, :N_EMOTIONS],
        au_probs=X[:, N_EMOTIONS : N_EMOTIONS + N_AUS],
        va=X[:, N_EMOTIONS + N_AUS :],
    )
