"""Emotion/action-unit relatedness tables and rule lookups.

A relatedness table maps each basic emotion to the action units that go
with it.  Prototypical AUs carry weight 1.0; observational AUs carry the
fraction of annotators (or of images, for empirically inferred tables)
that exhibited the activation.  Tables drive every task-coupling strategy
and the compound-class construction, so they are validated on load and
immutable afterwards.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

#: Canonical emotion order used everywhere (label 0 = neutral).
EMOTIONS: tuple[str, ...] = (
    "neutral",
    "happiness",
    "sadness",
    "fear",
    "anger",
    "surprise",
    "disgust",
)

#: Canonical 17 action-unit identifiers, ascending.
AU_IDS: tuple[int, ...] = (1, 2, 4, 5, 6, 7, 9, 10, 11, 12, 15, 17, 20, 23, 24, 25, 26)

N_EMOTIONS = len(EMOTIONS)
N_AUS = len(AU_IDS)

#: Compound classes whose score gets the positive-valence bonus by default.
DEFAULT_VALENCE_CLASSES = frozenset({"happily_surprised", "happily_disgusted"})

_ADVERB = {
    "happiness": "happily",
    "sadness": "sadly",
    "fear": "fearfully",
    "anger": "angrily",
    "surprise": "surprisedly",
    "disgust": "disgustedly",
}
_ADJECTIVE = {
    "happiness": "happy",
    "sadness": "sad",
    "fear": "fearful",
    "anger": "angry",
    "surprise": "surprised",
    "disgust": "disgusted",
}


@dataclass(frozen=True)
class AuLink:
    """One emotion-to-AU association: weight in (0, 1], prototypical flag."""

    weight: float
    prototypical: bool


@dataclass(frozen=True)
class RelatednessTable:
    """Validated, immutable emotion-to-AU association table.

    ``entries[emotion]`` maps AU id to :class:`AuLink`.  The "neutral"
    emotion always has an empty entry set.
    """

    emotions: tuple[str, ...]
    au_ids: tuple[int, ...]
    entries: dict[str, dict[int, AuLink]]

    def __post_init__(self) -> None:
        _validate_table(self)

    def entry_aus(self, emotion: str) -> tuple[int, ...]:
        """AU ids associated with ``emotion``, ascending."""
        self._check_emotion(emotion)
        return tuple(sorted(self.entries[emotion]))

    def au_given_emotion(self, au: int, emotion: str, weighted: bool = False) -> float:
        """Association strength of ``au`` under ``emotion``.

        Unweighted mode returns 1.0 for any prototypical or observational
        AU and 0.0 otherwise; weighted mode returns the table weight
        (1.0 for prototypical AUs).
        """
        self._check_emotion(emotion)
        if au not in self.au_ids:
            raise KeyError(f"unknown AU id: {au}")
        link = self.entries[emotion].get(au)
        if link is None:
            return 0.0
        return link.weight if weighted else 1.0

    def weight_matrix(self, weighted: bool = False) -> np.ndarray:
        """Dense (n_emotions, n_aus) matrix of ``au_given_emotion`` values."""
        out = np.zeros((len(self.emotions), len(self.au_ids)))
        col = {au: j for j, au in enumerate(self.au_ids)}
        for i, emo in enumerate(self.emotions):
            for au, link in self.entries[emo].items():
                out[i, col[au]] = link.weight if weighted else 1.0
        return out

    def _check_emotion(self, emotion: str) -> None:
        if emotion not in self.entries:
            raise KeyError(f"unknown emotion: {emotion!r}")


@dataclass(frozen=True)
class CompoundClass:
    """A two-emotion compound category with its associated AU weights."""

    name: str
    emo1: str
    emo2: str
    au_weights: dict[int, float]
    valence_term_applies: bool = False


def _validate_table(table: RelatednessTable) -> None:
    if len(set(table.au_ids)) != len(table.au_ids):
        raise ValueError("duplicate AU id in au_ids")
    if len(table.au_ids) != N_AUS:
        raise ValueError(f"au_ids must list exactly {N_AUS} distinct AUs, got {len(table.au_ids)}")
    if len(set(table.emotions)) != len(table.emotions):
        raise ValueError("duplicate emotion name")
    if set(table.entries) != set(table.emotions):
        raise ValueError("entries must cover exactly the listed emotions")
    au_set = set(table.au_ids)
    for emo, links in table.entries.items():
        for au, link in links.items():
            if au not in au_set:
                raise ValueError(f"unknown AU id {au} in entry for {emo!r}")
            if not (0.0 < link.weight <= 1.0):
                raise ValueError(f"weight out of range for {emo!r}/AU{au}: {link.weight}")
            if link.prototypical and link.weight != 1.0:
                raise ValueError(f"prototypical AU{au} of {emo!r} must have weight 1.0")
    if "neutral" in table.entries and table.entries["neutral"]:
        raise ValueError("neutral must have an empty entry set")


def table_from_dict(raw: dict) -> RelatednessTable:
    """Build a validated table from the JSON-file dictionary layout."""
    try:
        au_ids = tuple(int(a) for a in raw["au_ids"])
        emotions_raw = raw["emotions"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed table dictionary: {exc}") from exc
    emotions = tuple(emotions_raw)
    entries: dict[str, dict[int, AuLink]] = {}
    for emo, row in emotions_raw.items():
        links: dict[int, AuLink] = {}
        for au in row.get("prototypical", []):
            links[int(au)] = AuLink(weight=1.0, prototypical=True)
        for au, w in row.get("observational", []):
            au = int(au)
            if au in links:
                raise ValueError(f"AU{au} listed as both prototypical and observational for {emo!r}")
            links[au] = AuLink(weight=float(w), prototypical=False)
        entries[emo] = links
    return RelatednessTable(emotions=emotions, au_ids=au_ids, entries=entries)


def table_to_dict(table: RelatednessTable) -> dict:
    """Inverse of :func:`table_from_dict`."""
    emotions = {}
    for emo in table.emotions:
        links = table.entries[emo]
        emotions[emo] = {
            "prototypical": [au for au in sorted(links) if links[au].prototypical],
            "observational": [[au, links[au].weight] for au in sorted(links) if not links[au].prototypical],
        }
    return {"au_ids": list(table.au_ids), "emotions": emotions}


def load_table(path: str | Path) -> RelatednessTable:
    """Load and validate a relatedness table from a JSON file."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"cannot parse table file {path}: {exc}") from exc
    return table_from_dict(raw)


def save_table(table: RelatednessTable, path: str | Path) -> None:
    """Write a table as JSON; weights round-trip bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table_to_dict(table), fh, indent=2)
        fh.write("\n")


def load_bundled_table(name: str) -> RelatednessTable:
    """Load one of the tables shipped with the package.

    ``"cognitive"`` holds the annotator-study associations, ``"empirical"``
    the dataset-inferred ones (observational only).
    """
    files = {"cognitive": "cognitive_table.json", "empirical": "empirical_table.json"}
    if name not in files:
        raise KeyError(f"unknown bundled table {name!r}; choose from {sorted(files)}")
    ref = resources.files("affectlearn.data").joinpath(files[name])
    return table_from_dict(json.loads(ref.read_text(encoding="utf-8")))


def infer_table(
    emo_labels: np.ndarray,
    au_matrix: np.ndarray,
    threshold: float = 0.1,
    emotions: tuple[str, ...] = EMOTIONS,
    au_ids: tuple[int, ...] = AU_IDS,
) -> RelatednessTable:
    """Infer an observational table from co-annotated (emotion, AU) samples.

    For each (emotion, AU) pair the activation frequency among that
    emotion's samples is computed; the AU enters the row iff the frequency
    is at least ``threshold``.  All inferred entries are observational.
    Emotions with zero samples keep an empty row and are logged as a
    warning; entries that would land on "neutral" are dropped, since a
    neutral row is empty by definition.
    """
    emo_labels = np.asarray(emo_labels, dtype=np.int64)
    au_matrix = np.asarray(au_matrix, dtype=np.float64)
    if emo_labels.size == 0:
        raise ValueError("cannot infer a table from an empty sample set")
    if au_matrix.shape != (emo_labels.size, len(au_ids)):
        raise ValueError(
            f"AU matrix shape {au_matrix.shape} does not match "
            f"{emo_labels.size} samples x {len(au_ids)} AUs"
        )

    entries: dict[str, dict[int, AuLink]] = {emo: {} for emo in emotions}
    for idx, emo in enumerate(emotions):
        rows = au_matrix[emo_labels == idx]
        if rows.shape[0] == 0:
            logger.warning("no samples for emotion %r; row left empty", emo)
            continue
        freq = rows.mean(axis=0)
        passing = {au_ids[j]: float(freq[j]) for j in np.flatnonzero(freq >= threshold)}
        if emo == "neutral":
            if passing:
                logger.warning(
                    "dropping %d inferred entries for neutral (row is empty by definition)",
                    len(passing),
                )
            continue
        entries[emo] = {au: AuLink(weight=w, prototypical=False) for au, w in passing.items()}
    return RelatednessTable(emotions=emotions, au_ids=au_ids, entries=entries)


def compound_union(table: RelatednessTable, emo1: str, emo2: str) -> CompoundClass:
    """Compound class from two basic emotions: union of their AU entries.

    On an AU collision the larger weight wins.  The valence bonus flag is
    set from the default pair list.
    """
    for emo in (emo1, emo2):
        if emo not in table.entries:
            raise KeyError(f"unknown emotion: {emo!r}")
    if emo1 == emo2:
        raise ValueError(f"compound constituents must differ, got {emo1!r} twice")
    au_weights: dict[int, float] = {}
    for emo in (emo1, emo2):
        for au, link in table.entries[emo].items():
            au_weights[au] = max(au_weights.get(au, 0.0), link.weight)
    name = compound_name(emo1, emo2)
    return CompoundClass(
        name=name,
        emo1=emo1,
        emo2=emo2,
        au_weights=au_weights,
        valence_term_applies=name in DEFAULT_VALENCE_CLASSES,
    )


def compound_name(emo1: str, emo2: str) -> str:
    """Conventional compound-class name, e.g. ('happiness','surprise') -> 'happily_surprised'."""
    try:
        return f"{_ADVERB[emo1]}_{_ADJECTIVE[emo2]}"
    except KeyError as exc:
        raise KeyError(f"no compound naming for emotion {exc.args[0]!r}") from exc
