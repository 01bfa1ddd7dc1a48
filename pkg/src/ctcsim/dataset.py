"""Build, persist and load the WER-conditioned supervision corpus.

On-disk layout (one directory):

``manifest.jsonl``
    Line 1 is a JSON header (format, version, V, blank_id, T_train, bin
    scheme, seed, blob size). Every further line is one record: utterance and
    variant index, transcript tokens, bin code, realized WER, eta, byte offset
    and frame count into the blob, and a 64-bit BLAKE2b checksum of the
    record's bytes.
``posteriors.bin``
    Little-endian float32, row-major [frame][vocab], records back to back in
    (utterance, variant) order.
"""
from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .align import bin_assign
from .core import (BLANK_ID, STREAM_CORPUS, DataError, MaskedPosteriorSeq, SeedSpec,
                   SupervisionTuple, WerBinScheme, as_transcript, renormalize)
from .teacher import TeacherConfig, teach

log = logging.getLogger(__name__)

FORMAT = "ctcsim-corpus"
VERSION = 1
MANIFEST = "manifest.jsonl"
BLOB = "posteriors.bin"
_F32 = np.dtype("<f4")


def pad_and_mask(P, T_train: int, counter: Optional[Counter] = None,
                 blank_id: int = BLANK_ID) -> MaskedPosteriorSeq:
    """Pad with blank one-hot frames (or truncate) to ``T_train`` and build a prefix mask.

    Truncation increments ``counter["truncated"]`` when a counter is given.
    """
    if T_train < 1:
        raise ValueError(f"T_train must be at least 1, got {T_train}")
    P = np.asarray(P, dtype=np.float64)
    T, V = P.shape
    if T > T_train:
        if counter is not None:
            counter["truncated"] += 1
        P, T = P[:T_train], T_train
    padded = np.zeros((T_train, V))
    padded[:, blank_id] = 1.0
    padded[:T] = P
    mask = np.zeros(T_train, dtype=np.int8)
    mask[:T] = 1
    return MaskedPosteriorSeq(padded, mask)


def checksum(buf: bytes) -> str:
    return hashlib.blake2b(buf, digest_size=8).hexdigest()


def _stored(P: np.ndarray) -> np.ndarray:
    """What survives a round trip through the float32 blob."""
    return renormalize(P.astype(_F32))


# ---------------------------------------------------------------- transcripts

def generate_corpus(size: int, vocab_size: int, length_range: tuple, seed: int,
                    blank_id: int = BLANK_ID) -> list:
    if size < 1:
        raise ValueError("corpus size must be at least 1")
    lo, hi = length_range
    if not 1 <= lo <= hi:
        raise ValueError(f"invalid length range {length_range}")
    if vocab_size < 2:
        raise ValueError("vocabulary needs blank plus one token")
    tokens = np.array([v for v in range(vocab_size) if v != blank_id])
    seeds = SeedSpec(seed)
    out = []
    for i in range(size):
        rng = seeds.rng(STREAM_CORPUS, i)
        out.append(rng.choice(tokens, size=int(rng.integers(lo, hi + 1))).astype(np.int64))
    return out


def write_transcripts(path, corpus: Sequence) -> None:
    with open(path, "w") as fh:
        for y in corpus:
            fh.write(" ".join(str(int(t)) for t in y) + "\n")


def read_transcripts(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"transcript corpus not found: {path}")
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(np.array([int(t) for t in line.split()], dtype=np.int64))
        except ValueError:
            raise DataError(f"{path}:{lineno}: expected space-separated token ids") from None
    return out


# ---------------------------------------------------------------- build

@dataclass
class BuildResult:
    header: dict
    tuples: list
    bin_counts: dict
    rejected: int = 0
    truncated: int = 0
    items: int = 0
    records: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {"items": self.items, "accepted": len(self.tuples), "rejected": self.rejected,
                "truncated": self.truncated,
                "bin_counts": {str(k): v for k, v in sorted(self.bin_counts.items())}}


def _build_chunk(args):
    start, chunk, cfg, scheme, T_train, seed = args
    seeds = SeedSpec(seed)
    out = []
    for offset, y in enumerate(chunk):
        u = start + offset
        for j, sample in enumerate(teach(y, cfg, seeds, u)):
            code = bin_assign(sample.wer, scheme)
            P = sample.posteriors
            truncated = len(P) > T_train
            out.append((u, j, code, sample.wer, sample.eta, P[:T_train].astype(_F32), truncated))
    return out


def build_dataset(corpus: Sequence, teacher_cfg: TeacherConfig, scheme: WerBinScheme,
                  T_train: int, seed: int, out_dir=None, workers: int = 1,
                  chunk_size: int = 64) -> BuildResult:
    """Run every (utterance, variant) through the teacher, bin by realized WER and
    keep tuples landing inside a bin. Writes the corpus when ``out_dir`` is given.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    if T_train < 1:
        raise ValueError("T_train must be at least 1")
    V = teacher_cfg.vocab_size
    corpus = [as_transcript(y, V) for y in corpus]
    jobs = [(s, corpus[s:s + chunk_size], teacher_cfg, scheme, T_train, seed)
            for s in range(0, len(corpus), chunk_size)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_build_chunk, jobs))
    else:
        parts = [_build_chunk(j) for j in jobs]
    items = sorted((it for part in parts for it in part), key=lambda it: (it[0], it[1]))

    counts = {k: 0 for k in range(1, scheme.K + 1)}
    rejected = truncated = 0
    tuples, records = [], []
    offset = 0
    for u, j, code, w, eta, P32, trunc in items:
        if code is None:
            rejected += 1
            continue
        truncated += trunc
        counts[code] += 1
        raw = P32.tobytes()
        records.append({"utt": u, "variant": j, "tokens": corpus[u].tolist(), "code": code,
                        "wer": w, "eta": eta, "offset": offset, "frames": int(P32.shape[0]),
                        "checksum": checksum(raw)})
        offset += len(raw)
        teacher = renormalize(P32)
        tuples.append(SupervisionTuple(corpus[u], code, teacher, w, u, j,
                                       pad_and_mask(teacher, T_train)))
    for k, n in counts.items():
        if n == 0:
            log.warning("WER bin %d received no tuples (counts: %s)", k, counts)
    header = {"format": FORMAT, "version": VERSION, "V": V, "blank_id": BLANK_ID,
              "T_train": T_train, "scheme": scheme.to_list(), "seed": seed,
              "variants": teacher_cfg.variants, "blob": BLOB, "blob_bytes": offset,
              "records": len(records)}
    result = BuildResult(header, tuples, counts, rejected, truncated, len(items), records)
    if out_dir is not None:
        write_corpus(out_dir, result, [it[5] for it in items if it[2] is not None])
    return result


def write_corpus(out_dir, result: BuildResult, blobs: Sequence[np.ndarray]) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / BLOB, "wb") as fh:
        for P32 in blobs:
            fh.write(P32.tobytes())
    with open(out_dir / MANIFEST, "w") as fh:
        fh.write(json.dumps(result.header, sort_keys=True) + "\n")
        for rec in result.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------- load

def read_header(corpus_dir) -> dict:
    path = Path(corpus_dir) / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path) as fh:
        header = json.loads(fh.readline())
    if header.get("format") != FORMAT:
        raise DataError(f"{path}: not a {FORMAT} manifest")
    if header.get("version") != VERSION:
        raise DataError(f"{path}: format version {header.get('version')} != {VERSION}")
    return header


def load_dataset(corpus_dir) -> Iterator[SupervisionTuple]:
    """Yield stored tuples (with padded, masked targets) in manifest order."""
    corpus_dir = Path(corpus_dir)
    header = read_header(corpus_dir)
    V, T_train = header["V"], header["T_train"]
    scheme = WerBinScheme(tuple(tuple(b) for b in header["scheme"]))
    blob_path = corpus_dir / header["blob"]
    if not blob_path.is_file():
        raise FileNotFoundError(f"posterior blob not found: {blob_path}")
    blob = blob_path.read_bytes()
    frame_bytes = V * _F32.itemsize
    with open(corpus_dir / MANIFEST) as fh:
        fh.readline()
        for lineno, line in enumerate(fh, start=2):
            rec = json.loads(line)
            start, n = rec["offset"], rec["frames"]
            end = start + n * frame_bytes
            if start < 0 or end > len(blob):
                raise DataError(f"line {lineno}: record bytes [{start}, {end}) outside blob of {len(blob)}")
            raw = blob[start:end]
            if checksum(raw) != rec["checksum"]:
                raise DataError(f"line {lineno}: checksum mismatch for utterance {rec['utt']} "
                                f"variant {rec['variant']}")
            code = rec["code"]
            if not 1 <= code <= scheme.K or not scheme.contains(code, rec["wer"]):
                raise DataError(f"line {lineno}: bin code {code} invalid for WER {rec['wer']}")
            teacher = renormalize(np.frombuffer(raw, dtype=_F32).reshape(n, V))
            y = np.asarray(rec["tokens"], dtype=np.int64)
            yield SupervisionTuple(y, code, teacher, rec["wer"], rec["utt"], rec["variant"],
                                   pad_and_mask(teacher, T_train))


def split_by_utterance(tuples: Sequence[SupervisionTuple], held_out_frac: float):
    """Hold out the last ``held_out_frac`` of utterance indices (all their variants)."""
    utts = sorted({t.utt_index for t in tuples})
    n_held = int(round(len(utts) * held_out_frac))
    held = set(utts[len(utts) - n_held:]) if n_held else set()
    train = [t for t in tuples if t.utt_index not in held]
    test = [t for t in tuples if t.utt_index in held]
    return train, test

