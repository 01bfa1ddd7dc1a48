"""CTC greedy decoding, label collapse and label-synchronous compression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import BLANK_ID


@dataclass(frozen=True)
class LsdConfig:
    tau: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")


def argmax_labels(P) -> np.ndarray:
    """Per-frame argmax; ``np.argmax`` already returns the lowest index on ties."""
    P = np.asarray(P)
    if P.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmax(P, axis=1).astype(np.int64)


def collapse(labels, blank_id: int = BLANK_ID) -> list[int]:
    """Merge consecutive duplicates, then drop blanks."""
    out = []
    prev = None
    for lab in labels:
        lab = int(lab)
        if lab != prev and lab != blank_id:
            out.append(lab)
        prev = lab
    return out


def greedy_decode(P, blank_id: int = BLANK_ID) -> list[int]:
    return collapse(argmax_labels(P), blank_id)


def lsd_compress(P, cfg: LsdConfig = LsdConfig(), blank_id: int = BLANK_ID) -> np.ndarray:
    """Drop frames whose blank probability exceeds ``cfg.tau``, then average
    maximal runs of surviving frames that share an argmax label.

    Runs are formed over the surviving subsequence, so a dropped frame never
    splits a run. Returns a (J, V) array, possibly with J == 0.
    """
    P = np.asarray(P, dtype=np.float64)
    V = P.shape[1] if P.ndim == 2 else 0
    if P.shape[0] == 0:
        return np.zeros((0, V))
    kept = P[P[:, blank_id] <= cfg.tau]
    if kept.shape[0] == 0:
        return np.zeros((0, V))
    labels = argmax_labels(kept)
    starts = np.flatnonzero(np.r_[True, labels[1:] != labels[:-1]])
    ends = np.r_[starts[1:], len(labels)]
    return np.stack([kept[s:e].mean(axis=0) for s, e in zip(starts, ends)])


class LSDCompressor(TransformerMixin, BaseEstimator):
    """Stateless transformer applying :func:`lsd_compress` to a list of posterior sequences."""

    def __init__(self, tau=0.9, blank_id=BLANK_ID):
        self.tau = tau
        self.blank_id = blank_id

    def fit(self, X, y=None):
        LsdConfig(self.tau)
        return self

    def transform(self, X):
        cfg = LsdConfig(self.tau)
        return [lsd_compress(P, cfg, self.blank_id) for P in X]
