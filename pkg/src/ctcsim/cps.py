"""Uncontrolled CTC posterior simulation from text (the comparison baseline)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import BLANK_ID, STREAM_CPS, SeedSpec, as_transcript


@dataclass(frozen=True)
class CpsConfig:
    alpha_range: tuple[float, float] = (0.6, 0.95)
    p_del: float = 0.05
    p_ins: float = 0.05
    ins_blank_frac: float = 0.5

    def __post_init__(self):
        lo, hi = self.alpha_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError(f"alpha_range must satisfy 0 < lo <= hi <= 1, got {self.alpha_range}")
        for name in ("p_del", "p_ins", "ins_blank_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def smoothed_frame(token: int, alpha: float, V: int) -> np.ndarray:
    frame = np.full(V, (1.0 - alpha) / V)
    frame[token] += alpha
    return frame


def cps_simulate(y, cfg: CpsConfig, rng: np.random.Generator, V: int,
                 blank_id: int = BLANK_ID) -> np.ndarray:
    """One label-smoothed frame per surviving token, plus random blank/duplicate insertions."""
    y = as_transcript(y, V, blank_id)
    lo, hi = cfg.alpha_range
    frames = []
    for tok in y:
        if rng.random() >= cfg.p_del:
            frames.append(smoothed_frame(int(tok), rng.uniform(lo, hi), V))
        if rng.random() < cfg.p_ins:
            if rng.random() < cfg.ins_blank_frac or not frames:
                frames.append(smoothed_frame(blank_id, rng.uniform(lo, hi), V))
            else:
                frames.append(frames[-1].copy())
    if not frames:
        return np.zeros((0, V))
    return np.stack(frames)


class CPSSimulator(TransformerMixin, BaseEstimator):
    """Maps transcripts to CPS posterior sequences; item ``i`` uses stream ``seed -> (i,)``."""

    def __init__(self, vocab_size=32, alpha_range=(0.6, 0.95), p_del=0.05, p_ins=0.05,
                 ins_blank_frac=0.5, seed=0):
        self.vocab_size = vocab_size
        self.alpha_range = alpha_range
        self.p_del = p_del
        self.p_ins = p_ins
        self.ins_blank_frac = ins_blank_frac
        self.seed = seed

    def _config(self):
        return CpsConfig(tuple(self.alpha_range), self.p_del, self.p_ins, self.ins_blank_frac)

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X):
        cfg = self._config()
        seeds = SeedSpec(self.seed)
        return [cps_simulate(t, cfg, seeds.rng(STREAM_CPS, i), self.vocab_size) for i, t in enumerate(X)]
