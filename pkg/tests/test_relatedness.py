"""Relatedness tables: golden rows, lookups, inference, compound unions."""

import json

import numpy as np
import pytest

from affectlearn.relatedness import (
    AU_IDS,
    EMOTIONS,
    AuLink,
    compound_name,
    compound_union,
    infer_table,
    load_bundled_table,
    load_table,
    save_table,
    table_from_dict,
    table_to_dict,
)
from affectlearn.synthdata import generate_coannotated

# The annotator-study association rows, frozen for golden comparisons:
# emotion -> (prototypical ids, {observational id: weight}).
GOLDEN_ROWS = {
    "neutral": ((), {}),
    "happiness": ((12, 25), {6: 0.51}),
    "sadness": ((4, 15), {1: 0.6, 6: 0.5, 11: 0.26, 17: 0.67}),
    "fear": ((1, 4, 20, 25), {2: 0.57, 5: 0.63, 26: 0.33}),
    "anger": ((4, 7, 24), {10: 0.26, 17: 0.52, 23: 0.29}),
    "surprise": ((1, 2, 25, 26), {5: 0.66}),
    "disgust": ((9, 10, 17), {4: 0.31, 24: 0.26}),
}


@pytest.fixture(scope="module")
def cognitive():
    return load_bundled_table("cognitive")


@pytest.fixture(scope="module")
def empirical():
    return load_bundled_table("empirical")


class TestBundledTables:
    def test_au_id_set(self, cognitive):
        assert cognitive.au_ids == AU_IDS
        assert len(AU_IDS) == 17

    def test_every_row_matches_golden(self, cognitive):
        for emo, (protos, obs) in GOLDEN_ROWS.items():
            links = cognitive.entries[emo]
            got_protos = tuple(sorted(a for a, l in links.items() if l.prototypical))
            got_obs = {a: l.weight for a, l in links.items() if not l.prototypical}
            assert got_protos == protos, emo
            assert got_obs == obs, emo

    def test_happiness_entry(self, cognitive):
        links = cognitive.entries["happiness"]
        assert links[12] == AuLink(1.0, True)
        assert links[25] == AuLink(1.0, True)
        assert links[6] == AuLink(0.51, False)

    def test_empirical_happiness_contains_au12(self, empirical):
        assert empirical.entries["happiness"][12].weight == 0.82

    def test_empirical_all_observational(self, empirical):
        for emo in EMOTIONS:
            assert not any(l.prototypical for l in empirical.entries[emo].values())

    def test_neutral_empty(self, cognitive, empirical):
        assert cognitive.entries["neutral"] == {}
        assert empirical.entries["neutral"] == {}


class TestLookups:
    def test_au2_surprise_unweighted(self, cognitive):
        assert cognitive.au_given_emotion(2, "surprise") == 1.0

    def test_au2_fear_unweighted(self, cognitive):
        assert cognitive.au_given_emotion(2, "fear") == 1.0

    def test_au6_happiness_weighted(self, cognitive):
        assert cognitive.au_given_emotion(6, "happiness", weighted=True) == 0.51

    def test_absent_pair_is_zero(self, cognitive):
        assert cognitive.au_given_emotion(12, "sadness") == 0.0
        assert cognitive.au_given_emotion(12, "sadness", weighted=True) == 0.0

    def test_unknown_names_raise(self, cognitive):
        with pytest.raises(KeyError):
            cognitive.au_given_emotion(3, "happiness")
        with pytest.raises(KeyError):
            cognitive.au_given_emotion(12, "joy")

    def test_weight_matrix_agrees_with_lookup(self, cognitive):
        for weighted in (False, True):
            mat = cognitive.weight_matrix(weighted=weighted)
            for i, emo in enumerate(EMOTIONS):
                for j, au in enumerate(AU_IDS):
                    assert mat[i, j] == cognitive.au_given_emotion(au, emo, weighted)


class TestValidation:
    def _raw(self, cognitive):
        return table_to_dict(cognitive)

    def test_weight_out_of_range(self, cognitive):
        raw = self._raw(cognitive)
        raw["emotions"]["happiness"]["observational"] = [[6, 1.3]]
        with pytest.raises(ValueError, match="out of range"):
            table_from_dict(raw)

    def test_unknown_au_id(self, cognitive):
        raw = self._raw(cognitive)
        raw["emotions"]["happiness"]["prototypical"].append(99)
        with pytest.raises(ValueError, match="unknown AU id"):
            table_from_dict(raw)

    def test_wrong_au_count(self, cognitive):
        raw = self._raw(cognitive)
        raw["au_ids"] = raw["au_ids"][:-1]
        with pytest.raises(ValueError, match="17"):
            table_from_dict(raw)

    def test_nonempty_neutral(self, cognitive):
        raw = self._raw(cognitive)
        raw["emotions"]["neutral"]["prototypical"] = [12]
        with pytest.raises(ValueError, match="neutral"):
            table_from_dict(raw)

    def test_parse_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ValueError, match="cannot parse"):
            load_table(path)


class TestRoundTrip:
    def test_save_load_bit_exact(self, cognitive, tmp_path):
        path = tmp_path / "table.json"
        save_table(cognitive, path)
        assert load_table(path) == cognitive

    def test_inferred_table_round_trip(self, cognitive, tmp_path):
        emo, au = generate_coannotated(cognitive, 300, background_rate=0.02, seed=5)
        table = infer_table(emo, au, threshold=0.1)
        path = tmp_path / "inferred.json"
        save_table(table, path)
        assert load_table(path) == table


class TestInferTable:
    def test_frequency_example(self, cognitive):
        # 100 happy samples, 82 with AU12 active
        emo = np.full(100, EMOTIONS.index("happiness"), dtype=np.int64)
        au = np.zeros((100, 17))
        au[:82, AU_IDS.index(12)] = 1.0
        table = infer_table(emo, au, threshold=0.1)
        assert table.entries["happiness"][12].weight == pytest.approx(0.82)

    def test_below_threshold_excluded(self):
        emo = np.full(100, EMOTIONS.index("happiness"), dtype=np.int64)
        au = np.zeros((100, 17))
        au[:5, AU_IDS.index(2)] = 1.0  # 5% activation
        table = infer_table(emo, au, threshold=0.1)
        assert 2 not in table.entries["happiness"]

    def test_recovers_generating_weights(self, cognitive):
        # Bernoulli concentration: inferred weights within +-0.05 of the
        # generating parameters at N=10,000 per emotion.
        emo, au = generate_coannotated(cognitive, 10_000, background_rate=0.02, seed=11)
        table = infer_table(emo, au, threshold=0.1)
        for emotion in EMOTIONS:
            if emotion == "neutral":
                assert table.entries[emotion] == {}
                continue
            truth = cognitive.entries[emotion]
            assert set(table.entries[emotion]) == set(truth)
            for au_id, link in truth.items():
                got = table.entries[emotion][au_id].weight
                assert abs(got - link.weight) <= 0.05

    def test_permutation_invariant(self, cognitive):
        emo, au = generate_coannotated(cognitive, 200, seed=3)
        perm = np.random.default_rng(0).permutation(emo.size)
        assert infer_table(emo, au) == infer_table(emo[perm], au[perm])

    def test_empty_samples_error(self):
        with pytest.raises(ValueError, match="empty"):
            infer_table(np.array([], dtype=np.int64), np.zeros((0, 17)))

    def test_missing_emotion_warns_not_errors(self, caplog):
        emo = np.zeros(50, dtype=np.int64) + EMOTIONS.index("happiness")
        au = np.zeros((50, 17))
        with caplog.at_level("WARNING", logger="affectlearn.relatedness"):
            table = infer_table(emo, au)
        assert "no samples" in caplog.text
        assert table.entries["sadness"] == {}


class TestCompoundUnion:
    def test_happily_surprised(self, cognitive):
        cls = compound_union(cognitive, "happiness", "surprise")
        assert set(cls.au_weights) == {12, 25, 6, 1, 2, 26, 5}
        assert cls.au_weights[25] == 1.0  # prototypical in both
        assert cls.au_weights[6] == 0.51
        assert cls.au_weights[5] == 0.66
        assert cls.valence_term_applies is True
        assert cls.name == "happily_surprised"

    def test_sadly_fearful_no_valence_term(self, cognitive):
        cls = compound_union(cognitive, "sadness", "fear")
        assert cls.valence_term_applies is False

    def test_max_weight_on_collision(self, cognitive):
        # AU6: happiness 0.51, sadness 0.5 -> max 0.51
        cls = compound_union(cognitive, "happiness", "sadness")
        assert cls.au_weights[6] == 0.51

    def test_symmetric_au_weights(self, cognitive):
        names = [e for e in EMOTIONS if e != "neutral"]
        for a in names:
            for b in names:
                if a < b:
                    assert (
                        compound_union(cognitive, a, b).au_weights
                        == compound_union(cognitive, b, a).au_weights
                    )

    def test_identical_constituents_error(self, cognitive):
        with pytest.raises(ValueError, match="differ"):
            compound_union(cognitive, "happiness", "happiness")

    def test_unknown_emotion_error(self, cognitive):
        with pytest.raises(KeyError):
            compound_union(cognitive, "happiness", "boredom")

    def test_compound_naming(self):
        assert compound_name("disgust", "surprise") == "disgustedly_surprised"
        assert compound_name("fear", "anger") == "fearfully_angry"
