"""Shared domain types, simplex validation and seed derivation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

BLANK_ID = 0
SIMPLEX_TOL = 1e-6

STREAM_CORPUS = 1
STREAM_ETA = 2
STREAM_VARIANT = 3
STREAM_CPS = 4
STREAM_INIT = 5
STREAM_SHUFFLE = 6


class DataError(ValueError):
    """Malformed corpus, manifest or checkpoint content."""


class NumericalError(RuntimeError):
    """Non-finite values surfaced during training or evaluation."""


@dataclass(frozen=True)
class Vocab:
    size: int
    blank_id: int = BLANK_ID
    token_labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"vocabulary needs blank plus one token, got size={self.size}")
        if not 0 <= self.blank_id < self.size:
            raise ValueError(f"blank_id {self.blank_id} outside [0, {self.size})")
        if self.token_labels is not None and len(self.token_labels) != self.size:
            raise ValueError("token_labels must have one entry per vocabulary id")

    def label(self, token: int) -> str:
        if self.token_labels is None:
            return "<b>" if token == self.blank_id else str(token)
        return self.token_labels[token]


def as_transcript(tokens: Sequence[int], vocab_size: int, blank_id: int = BLANK_ID) -> np.ndarray:
    """Validate a token sequence and return it as an int64 array."""
    y = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if y.size < 1:
        raise ValueError("transcript must contain at least one token")
    if y.min() < 0 or y.max() >= vocab_size:
        raise ValueError(f"transcript token outside [0, {vocab_size}): {y.tolist()}")
    if np.any(y == blank_id):
        raise ValueError("transcript may not contain the blank token")
    return y


@dataclass(frozen=True)
class Violation:
    frame: int
    reason: str
    value: float

    def __str__(self):
        return f"frame {self.frame}: {self.reason} ({self.value!r})"


def validate_posterior_seq(P, tol: float = SIMPLEX_TOL) -> Optional[Violation]:
    """Return the first simplex violation in ``P`` or None when every frame is valid.

    ``P`` is a (T, V) array; an empty sequence is valid.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.size == 0:
        return None
    if P.ndim != 2:
        raise ValueError(f"posterior sequence must be 2-D, got shape {P.shape}")
    for t, row in enumerate(P):
        if not np.all(np.isfinite(row)):
            return Violation(t, "non-finite entry", float("nan"))
        lo, hi = row.min(), row.max()
        if lo < -tol:
            return Violation(t, "negative entry", float(lo))
        if hi > 1.0 + tol:
            return Violation(t, "entry above one", float(hi))
        s = row.sum()
        if abs(s - 1.0) > tol:
            return Violation(t, "sum", float(s))
    return None


def one_hot(token: int, V: int) -> np.ndarray:
    if not 0 <= token < V:
        raise ValueError(f"token {token} outside [0, {V})")
    frame = np.zeros(V)
    frame[token] = 1.0
    return frame


def renormalize(P) -> np.ndarray:
    """Cast to float64 and rescale rows to sum to one (used after 32-bit storage)."""
    P = np.asarray(P, dtype=np.float64)
    if P.size == 0:
        return P.reshape(0, P.shape[-1] if P.ndim == 2 else 0)
    return P / P.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class WerBinScheme:
    """Ordered, disjoint WER intervals in percent; codes are 1-based."""

    bins: tuple[tuple[float, float], ...] = ((0.0, 6.0), (10.0, 40.0), (50.0, 150.0))

    def __post_init__(self):
        bins = tuple((float(lo), float(hi)) for lo, hi in self.bins)
        object.__setattr__(self, "bins", bins)
        if not bins:
            raise ValueError("scheme needs at least one interval")
        if bins[0][0] < 0:
            raise ValueError("WER intervals start at or above 0")
        for lo, hi in bins:
            if lo > hi:
                raise ValueError(f"interval [{lo}, {hi}] is reversed")
        for (_, hi_prev), (lo, _) in zip(bins, bins[1:]):
            if lo <= hi_prev:
                raise ValueError(f"intervals overlap or are unsorted near {lo}")

    @property
    def K(self) -> int:
        return len(self.bins)

    def interval(self, code: int) -> tuple[float, float]:
        if not 1 <= code <= self.K:
            raise ValueError(f"bin code {code} outside [1, {self.K}]")
        return self.bins[code - 1]

    def contains(self, code: int, wer_pct: float) -> bool:
        lo, hi = self.interval(code)
        return lo <= wer_pct <= hi

    def to_list(self) -> list[list[float]]:
        return [list(b) for b in self.bins]

    @classmethod
    def parse(cls, text: str) -> "WerBinScheme":
        """Parse ``"0-6,10-40,50-150"``."""
        bins = []
        for part in text.split(","):
            lo, hi = part.strip().split("-")
            bins.append((float(lo), float(hi)))
        return cls(tuple(bins))

    def format(self) -> str:
        return ",".join(f"{lo:g}-{hi:g}" for lo, hi in self.bins)


DEFAULT_SCHEME = WerBinScheme()


@dataclass(frozen=True)
class MaskedPosteriorSeq:
    padded: np.ndarray
    mask: np.ndarray

    @property
    def valid_len(self) -> int:
        return int(self.mask.sum())

    @property
    def T_train(self) -> int:
        return self.padded.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return self.padded[: self.valid_len]


@dataclass(frozen=True)
class SupervisionTuple:
    transcript: np.ndarray
    code: int
    teacher: np.ndarray
    realized_wer: float
    utt_index: int = 0
    variant_index: int = 0
    target: Optional[MaskedPosteriorSeq] = field(default=None, compare=False)

    @property
    def key(self) -> tuple[int, int]:
        return (self.utt_index, self.variant_index)


@dataclass(frozen=True)
class SeedSpec:
    """Splittable seeding: every item stream is a pure function of (global_seed, keys).

    Streams come from ``SeedSequence(global_seed, spawn_key=keys)`` so the
    processing order of items never changes what any item draws. The first key
    names the consumer (one of the ``STREAM_*`` constants).
    """

    global_seed: int = 0

    def rng(self, *keys: int) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.global_seed) & 0xFFFFFFFFFFFFFFFF,
                                     spawn_key=tuple(int(k) for k in keys))
        return np.random.default_rng(seq)
