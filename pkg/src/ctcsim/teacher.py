"""Parametric stand-in for a teacher ASR system and its audio augmentor.

The oracle works entirely in posterior space: a noisy channel controlled by a
single level ``eta`` deletes, substitutes and inserts tokens, then renders each
emitted label as a few peaked CTC frames separated by optional blank frames.
Each token has a characteristic duration (occasionally jittered), so timing is
mostly predictable from the text while errors are not.
Realized WER rises with ``eta``; ``eta == 0`` always decodes to the transcript.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .align import wer_between
from .core import BLANK_ID, STREAM_ETA, STREAM_VARIANT, SeedSpec, as_transcript
from .ctc_ops import greedy_decode


def banded_confusion(V: int, weights=(0.35, 0.15), blank_id: int = BLANK_ID) -> np.ndarray:
    """Row-stochastic confusion over non-blank tokens, mass concentrated on id-space neighbours.

    Neighbourhoods wrap around the token ids; the diagonal and the blank column are zero
    so a sampled confusion is always a real substitution.
    """
    tokens = [v for v in range(V) if v != blank_id]
    n = len(tokens)
    C = np.zeros((V, V))
    if n == 1:
        C[:, tokens[0]] = 1.0
        return C
    for a, i in enumerate(tokens):
        for dist, w in enumerate(weights, start=1):
            for b in ((a + dist) % n, (a - dist) % n):
                if b != a:
                    C[i, tokens[b]] += w
        C[i] /= C[i].sum()
    C[blank_id, tokens] = 1.0 / n
    return C


@dataclass(frozen=True, eq=False)
class TeacherConfig:
    vocab_size: int = 32
    dur_range: tuple[int, int] = (1, 3)
    dur_jitter: float = 0.1
    blank_gap_prob: float = 0.1
    peak_range: tuple[float, float] = (0.6, 0.95)
    variants: int = 7
    eta_range: tuple[float, float] = (0.0, 0.6)
    q_del: float = 0.5
    q_ins: float = 0.5
    confusion: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        d_min, d_max = self.dur_range
        if not 0 <= d_min <= d_max or d_max < 1:
            raise ValueError(f"invalid dur_range {self.dur_range}")
        p_lo, p_hi = self.peak_range
        if not 0.5 < p_lo <= p_hi <= 1.0:
            raise ValueError(f"peak_range must satisfy 0.5 < lo <= hi <= 1, got {self.peak_range}")
        e_lo, e_hi = self.eta_range
        if not 0.0 <= e_lo <= e_hi <= 1.0:
            raise ValueError(f"invalid eta_range {self.eta_range}")
        if self.variants < 1:
            raise ValueError("need at least one variant per utterance")
        for name in ("dur_jitter", "blank_gap_prob", "q_del", "q_ins"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        C = self.confusion
        if C is None:
            C = banded_confusion(self.vocab_size)
        C = np.asarray(C, dtype=np.float64)
        if C.shape != (self.vocab_size, self.vocab_size):
            raise ValueError(f"confusion must be {self.vocab_size}x{self.vocab_size}")
        if np.any(C < 0) or np.any(np.abs(C.sum(axis=1) - 1.0) > 1e-6):
            raise ValueError("confusion rows must be non-negative and sum to 1")
        object.__setattr__(self, "confusion", C)

    def duration(self, token: int) -> int:
        """Characteristic frame count of a token, cycling through ``dur_range`` by id."""
        d_min, d_max = self.dur_range
        return d_min + token % (d_max - d_min + 1)

    def variant_etas(self, rng: np.random.Generator) -> np.ndarray:
        """One eta per variant, stratified so variant j lands in the j-th slice of eta_range."""
        lo, hi = self.eta_range
        J = self.variants
        return lo + (hi - lo) * (np.arange(J) + rng.random(J)) / J


class TeacherSample(NamedTuple):
    posteriors: np.ndarray
    hypothesis: list
    wer: float
    eta: float


class _Renderer:
    def __init__(self, cfg: TeacherConfig, rng: np.random.Generator, blank_id: int):
        self.cfg = cfg
        self.rng = rng
        self.blank = blank_id
        self.V = cfg.vocab_size
        self.frames: list[np.ndarray] = []
        self.last_label: Optional[int] = None
        nonblank = np.ones(self.V)
        nonblank[blank_id] = 0.0
        self._uniform_tokens = nonblank / nonblank.sum()

    def _frame(self, label: int, context: Optional[int]) -> np.ndarray:
        p = self.rng.uniform(*self.cfg.peak_range)
        rest = 1.0 - p
        f = np.zeros(self.V)
        if label == self.blank:
            spread = self.cfg.confusion[context] if context is not None else self._uniform_tokens
            f += rest * spread
        else:
            f[self.blank] += 0.5 * rest
            f += 0.5 * rest * self.cfg.confusion[label]
        f[label] += p
        return f

    def blanks(self, n: int, context: Optional[int]):
        for _ in range(n):
            self.frames.append(self._frame(self.blank, context))
        if n:
            self.last_label = self.blank

    def token(self, tok: int):
        gap = self.rng.random() < self.cfg.blank_gap_prob
        if self.frames and (gap or self.last_label == tok):
            self.blanks(1, tok)
        d = self.cfg.duration(tok)
        if self.rng.random() < self.cfg.dur_jitter:
            d = int(self.rng.integers(self.cfg.dur_range[0], self.cfg.dur_range[1] + 1))
        for _ in range(d):
            self.frames.append(self._frame(tok, None))
        if d:
            self.last_label = tok


def synth_posteriors(y, cfg: TeacherConfig, eta: float, rng: np.random.Generator,
                     blank_id: int = BLANK_ID) -> np.ndarray:
    """Render a noisy-channel CTC posterior sequence (T, V) for transcript ``y`` at noise ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    y = as_transcript(y, cfg.vocab_size, blank_id)
    C = cfg.confusion
    r = _Renderer(cfg, rng, blank_id)
    if rng.random() < cfg.blank_gap_prob:
        r.blanks(1, int(y[0]))
    for tok in y:
        tok = int(tok)
        if rng.random() < eta * cfg.q_del:
            continue
        emitted = tok if rng.random() >= eta else int(rng.choice(cfg.vocab_size, p=C[tok]))
        r.token(emitted)
        if rng.random() < eta * cfg.q_ins:
            r.token(int(rng.choice(cfg.vocab_size, p=C[emitted])))
    if rng.random() < cfg.blank_gap_prob:
        r.blanks(1, r.last_label if r.last_label not in (None, blank_id) else None)
    if not r.frames:
        # every token deleted: a single blank frame keeps the sequence non-empty
        r.blanks(1, None)
    return np.stack(r.frames)


def teach(y, cfg: TeacherConfig, seeds: SeedSpec, utt_index: int = 0,
          blank_id: int = BLANK_ID) -> list[TeacherSample]:
    """Run every augmented variant of one utterance through the oracle.

    Variant ``j`` draws from the (utterance, variant) stream; its eta comes from the
    stratified schedule drawn on the utterance's own stream.
    """
    y = as_transcript(y, cfg.vocab_size, blank_id)
    etas = cfg.variant_etas(seeds.rng(STREAM_ETA, utt_index))
    out = []
    for j, eta in enumerate(etas):
        P = synth_posteriors(y, cfg, float(eta), seeds.rng(STREAM_VARIANT, utt_index, j), blank_id)
        hyp = greedy_decode(P, blank_id)
        out.append(TeacherSample(P, hyp, wer_between(y.tolist(), hyp), float(eta)))
    return out
