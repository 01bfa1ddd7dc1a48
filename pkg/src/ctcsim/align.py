"""Levenshtein alignment, WER and WER-bin assignment."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .core import WerBinScheme


@dataclass(frozen=True)
class AlignmentStats:
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def edit_align(ref: Sequence, hyp: Sequence) -> AlignmentStats:
    """Unit-cost Levenshtein alignment of ``hyp`` against ``ref``.

    Backtrace prefers match/substitution, then deletion, then insertion.
    """
    ref, hyp = list(ref), list(hyp)
    n, m = len(ref), len(hyp)
    if n == 0:
        raise ValueError("reference must be non-empty (WER denominator is zero)")
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ri != hyp[j - 1])
            row[j] = min(sub, prev[j] + 1, row[j - 1] + 1)

    S = D = I = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            S += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            D += 1
            i -= 1
        else:
            I += 1
            j -= 1
    return AlignmentStats(S, D, I, n)


def wer(stats: AlignmentStats) -> float:
    """Word error rate in percent; exceeds 100 when insertions dominate."""
    if stats.ref_len < 1:
        raise ValueError("WER undefined for an empty reference")
    return float(100.0 * stats.errors / stats.ref_len)


def wer_between(ref: Sequence, hyp: Sequence) -> float:
    return wer(edit_align(ref, hyp))


def bin_assign(wer_pct: float, scheme: WerBinScheme) -> Optional[int]:
    """1-based code of the interval containing ``wer_pct``; None when it falls in a gap."""
    if wer_pct < 0:
        raise ValueError(f"WER must be non-negative, got {wer_pct}")
    for k, (lo, hi) in enumerate(scheme.bins, start=1):
        if lo <= wer_pct <= hi:
            return k
    return None
