"""Estimator facades: sklearn protocol compliance and basic behavior."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from affectlearn.estimators import CompoundZeroShotClassifier, JointBehaviorEstimator
from affectlearn.relatedness import AU_IDS, EMOTIONS, load_bundled_table
from affectlearn.synthdata import GeneratorConfig, generate
from affectlearn.validation import check_feature_matrix, check_joint_labels


@pytest.fixture(scope="module")
def table():
    return load_bundled_table("cognitive")


@pytest.fixture(scope="module")
def labelled_data(table):
    """One feature matrix whose rows carry disjoint per-task labels."""
    cfg = GeneratorConfig(table=table, n_va=150, n_au=100, n_expr=80,
                          noise_sigma=0.3, seed=13)
    bundle = generate(cfg)
    X = np.concatenate([bundle.va.features, bundle.au.features, bundle.expr.features])
    n = X.shape[0]
    emotion = np.full(n, np.nan)
    emotion[250:] = bundle.expr.emo_labels
    au = np.full((n, 17), np.nan)
    au_block = np.where(bundle.au.au_mask > 0, bundle.au.au_labels, np.nan)
    au[150:250] = au_block
    va = np.full((n, 2), np.nan)
    va[:150] = bundle.va.va_labels
    return X, {"emotion": emotion, "au": au, "va": va}


class TestValidationHelpers:
    def test_feature_matrix_checks(self):
        with pytest.raises(ValueError, match="2-D"):
            check_feature_matrix(np.zeros(3))
        with pytest.raises(ValueError, match="no rows"):
            check_feature_matrix(np.zeros((0, 3)))
        with pytest.raises(ValueError, match="non-finite"):
            check_feature_matrix([[1.0, np.inf]])
        with pytest.raises(ValueError, match="expected 4"):
            check_feature_matrix(np.zeros((2, 3)), n_features=4)

    def test_label_dict_checks(self):
        X = np.zeros((4, 2))
        with pytest.raises(TypeError):
            check_joint_labels(X, np.zeros(4))
        with pytest.raises(ValueError, match="unknown label keys"):
            check_joint_labels(X, {"emotions": np.zeros(4)})
        with pytest.raises(ValueError, match="no labels"):
            check_joint_labels(X, {"emotion": np.full(4, np.nan)})
        with pytest.raises(ValueError, match="0, 1 or NaN"):
            check_joint_labels(X, {"au": np.full((4, 17), 0.3)})
        out = check_joint_labels(X, {"emotion": [0, 1, np.nan, 6]})
        assert out["emotion"].tolist() == [0, 1, -1, 6]


class TestJointBehaviorEstimator:
    def test_sklearn_protocol(self):
        est = JointBehaviorEstimator(epochs=2, seed=1)
        params = est.get_params()
        assert params["epochs"] == 2
        cloned = clone(est)
        assert cloned.get_params() == params
        est.set_params(epochs=3)
        assert est.epochs == 3

    def test_unfitted_predict_raises(self):
        with pytest.raises(NotFittedError):
            JointBehaviorEstimator().predict(np.zeros((2, 3)))

    def test_fit_predict_shapes(self, labelled_data):
        X, y = labelled_data
        est = JointBehaviorEstimator(hidden_dims=(16,), epochs=4,
                                     iterations_per_epoch=4, seed=0)
        assert est.fit(X, y) is est
        out = est.predict(X[:10])
        assert out["emotion"].shape == (10,)
        assert out["au"].shape == (10, 17)
        assert out["va"].shape == (10, 2)
        assert (np.abs(out["va"]) <= 1).all()
        proba = est.predict_proba(X[:10])
        np.testing.assert_allclose(proba["emotion"].sum(axis=1), 1.0, atol=1e-9)

    def test_score_mixes_available_tasks(self, labelled_data):
        X, y = labelled_data
        est = JointBehaviorEstimator(hidden_dims=(16,), epochs=6,
                                     iterations_per_epoch=4, seed=0)
        est.fit(X, y)
        full = est.score(X, y)
        assert -1.0 <= full <= 1.0
        emo_only = est.score(X[250:], {"emotion": y["emotion"][250:]})
        assert 0.0 <= emo_only <= 1.0

    def test_coupling_strategies_accepted(self, labelled_data):
        X, y = labelled_data
        est = JointBehaviorEstimator(
            hidden_dims=(16,), epochs=2, iterations_per_epoch=4, seed=0,
            strategies=("soft_co_annotation", "distribution_matching"),
        )
        est.fit(X, y)
        assert est.report_.epoch_losses[-1].l_dm != 0.0
        with pytest.raises(ValueError, match="unknown coupling"):
            JointBehaviorEstimator(strategies=("osmosis",)).fit(X, y)

    def test_deterministic_fit(self, labelled_data):
        X, y = labelled_data
        kw = dict(hidden_dims=(16,), epochs=3, iterations_per_epoch=4, seed=7)
        a = JointBehaviorEstimator(**kw).fit(X, y)
        b = JointBehaviorEstimator(**kw).fit(X, y)
        np.testing.assert_array_equal(
            a.network_.get_flat_params(), b.network_.get_flat_params()
        )

    def test_fit_with_single_task_labels(self, labelled_data):
        X, y = labelled_data
        est = JointBehaviorEstimator(hidden_dims=(16,), epochs=2,
                                     iterations_per_epoch=4, seed=0)
        est.fit(X[250:], {"emotion": y["emotion"][250:]})
        out = est.predict(X[:5])
        assert set(out) == {"emotion", "au", "va"}


class TestCompoundZeroShotClassifier:
    def _pred_matrix(self, table):
        from affectlearn.relatedness import compound_union

        cls = compound_union(table, "happiness", "surprise")
        row = np.zeros(7 + 17 + 2)
        row[EMOTIONS.index("happiness")] = 0.5
        row[EMOTIONS.index("surprise")] = 0.5
        for au in cls.au_weights:
            row[7 + AU_IDS.index(au)] = 1.0
        row[-2] = 0.6  # positive valence
        return row[None, :]

    def test_fit_resolves_default_classes(self):
        clf = CompoundZeroShotClassifier().fit()
        assert len(clf.classes_) == 11

    def test_predict_and_decision_function(self, table):
        clf = CompoundZeroShotClassifier().fit()
        X = self._pred_matrix(table)
        assert clf.predict(X)[0] == "happily_surprised"
        scores = clf.decision_function(X)
        assert scores.shape == (1, 11)
        assert scores[0].argmax() == list(clf.classes_).index("happily_surprised")

    def test_valence_term_param(self, table):
        on = CompoundZeroShotClassifier(valence_term=True).fit()
        off = CompoundZeroShotClassifier(valence_term=False).fit()
        X = self._pred_matrix(table)
        idx = list(on.classes_).index("happily_surprised")
        assert on.decision_function(X)[0, idx] - off.decision_function(X)[0, idx] == 1.0

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            CompoundZeroShotClassifier().predict(np.zeros((1, 26)))

    def test_clone(self):
        clf = CompoundZeroShotClassifier(weighted=True)
        assert clone(clf).get_params()["weighted"] is True
