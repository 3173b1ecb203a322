"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .relatedness import N_AUS, N_EMOTIONS


def check_feature_matrix(X, n_features: int | None = None) -> np.ndarray:
    """Coerce to a finite float64 2-D array, optionally pinning the width."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise ValueError("feature matrix has no rows")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains non-finite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def check_joint_labels(X: np.ndarray, y: dict) -> dict:
    """Validate the label dict accepted by the joint estimator.

    Recognized keys: ``emotion`` ((n,) ints, -1 or NaN for unlabelled rows),
    ``au`` ((n, 17) of 0/1 with NaN where unannotated), ``va`` ((n, 2) with
    NaN rows where unlabelled).  At least one task must carry labels.
    """
    if not isinstance(y, dict):
        raise TypeError("y must be a dict with any of the keys 'emotion', 'au', 'va'")
    unknown = set(y) - {"emotion", "au", "va"}
    if unknown:
        raise ValueError(f"unknown label keys: {sorted(unknown)}")
    n = X.shape[0]
    out: dict = {}

    if "emotion" in y and y["emotion"] is not None:
        emo = np.asarray(y["emotion"], dtype=np.float64).ravel()
        if emo.shape != (n,):
            raise ValueError("emotion labels must be one entry per row")
        emo = np.where(np.isnan(emo), -1, emo).astype(np.int64)
        if emo.max(initial=-1) >= N_EMOTIONS or emo.min(initial=-1) < -1:
            raise ValueError(f"emotion labels must lie in [0, {N_EMOTIONS}) or be missing")
        if (emo >= 0).any():
            out["emotion"] = emo

    if "au" in y and y["au"] is not None:
        au = np.asarray(y["au"], dtype=np.float64)
        if au.shape != (n, N_AUS):
            raise ValueError(f"AU labels must have shape (n, {N_AUS})")
        mask = (~np.isnan(au)).astype(np.float64)
        filled = np.where(np.isnan(au), 0.0, au)
        if not np.isin(filled, (0.0, 1.0)).all():
            raise ValueError("AU labels must be 0, 1 or NaN")
        if mask.any():
            out["au"] = (filled, mask)

    if "va" in y and y["va"] is not None:
        va = np.asarray(y["va"], dtype=np.float64)
        if va.shape != (n, 2):
            raise ValueError("valence/arousal labels must have shape (n, 2)")
        present = ~np.isnan(va).any(axis=1)
        if (np.abs(va[present]) > 1.0).any():
            raise ValueError("valence/arousal labels must lie in [-1, 1]")
        if present.any():
            out["va"] = (np.where(np.isnan(va), 0.0, va), present)

    if not out:
        raise ValueError("no labels provided for any task")
    return out
