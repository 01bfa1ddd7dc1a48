"""Posterior fidelity metrics, WER-controllability evaluation and the baseline comparison report."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .align import wer_between
from .core import BLANK_ID, STREAM_CPS, SeedSpec, SupervisionTuple, WerBinScheme
from .cps import CpsConfig, cps_simulate
from .ctc_ops import greedy_decode
from .simulator.model import Params, SimArch, simulate_batch, teacher_forced_posteriors

LOG_CLAMP = 1e-12
POLICIES = ("teacher-forced", "truncate")


@dataclass(frozen=True)
class FidelityReport:
    ce: float
    kl: float
    acc: float
    prob_diff: float
    n: int

    def row(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class _Sums:
    ce: float
    kl: float
    acc: float
    prob_diff: float
    n: int

    def report(self) -> FidelityReport:
        if self.n == 0:
            raise ValueError("no valid frames to evaluate")
        return FidelityReport(self.ce / self.n, self.kl / self.n, self.acc / self.n,
                              self.prob_diff / self.n, self.n)


def entropy(P) -> np.ndarray:
    """Per-frame entropy in nats with 0 log 0 = 0."""
    P = np.asarray(P, dtype=np.float64)
    logs = np.log(np.where(P > 0, P, 1.0))
    return -(P * logs).sum(axis=-1)


def _frame_metrics(P: np.ndarray, Q: np.ndarray):
    logq = np.log(np.maximum(Q, LOG_CLAMP))
    ce = -(P * logq).sum(axis=1)
    logp = np.log(np.where(P > 0, P, 1.0))
    kl = (P * (logp - logq)).sum(axis=1)
    acc = (np.argmax(P, axis=1) == np.argmax(Q, axis=1)).astype(np.float64)
    pd = np.abs(P.max(axis=1) - Q.max(axis=1))
    return ce, kl, acc, pd


def _sums(P, Q) -> _Sums:
    ce, kl, acc, pd = _frame_metrics(P, Q)
    return _Sums(float(ce.sum()), float(kl.sum()), float(acc.sum()), float(pd.sum()), len(P))


def _combine(parts: Sequence[_Sums]) -> _Sums:
    return _Sums(sum(p.ce for p in parts), sum(p.kl for p in parts), sum(p.acc for p in parts),
                 sum(p.prob_diff for p in parts), sum(p.n for p in parts))


def fidelity(P, P_hat) -> FidelityReport:
    """Frame-averaged CE, KL, argmax agreement and peak-probability gap of ``P_hat`` against ``P``."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(P_hat, dtype=np.float64)
    if P.shape != Q.shape:
        raise ValueError(f"teacher {P.shape} and simulated {Q.shape} sequences are not frame-aligned")
    if len(P) == 0:
        raise ValueError("fidelity needs at least one frame")
    return _sums(P, Q).report()


def align_for_fidelity(P, P_hat, policy: str = "teacher-forced"):
    """Return an equal-length (teacher, simulated) pair.

    ``truncate`` keeps the common prefix; ``teacher-forced`` expects lengths that
    already match, as they do for teacher-forced simulator output.
    """
    P, Q = np.asarray(P), np.asarray(P_hat)
    if len(P) == 0 or len(Q) == 0:
        raise ValueError("cannot align an empty posterior sequence")
    if policy == "truncate":
        n = min(len(P), len(Q))
        return P[:n], Q[:n]
    if policy == "teacher-forced":
        if len(P) != len(Q):
            raise ValueError(f"teacher-forced lengths differ: {len(P)} vs {len(Q)}")
        return P, Q
    raise ValueError(f"unknown alignment policy {policy!r}; expected one of {POLICIES}")


# ---------------------------------------------------------------- chunked workers

def _chunks(n: int, size: int):
    return [(s, min(n, s + size)) for s in range(0, n, size)]


def _run(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _compare_chunk(job):
    tuples, params, arch, cps_cfg, seed = job
    seeds = SeedSpec(seed)
    sim = teacher_forced_posteriors([t.transcript for t in tuples], [t.code for t in tuples],
                                    [t.teacher for t in tuples], params, arch)
    rows = []
    for t, Q in zip(tuples, sim):
        P = t.teacher[: len(Q)]
        sim_sums = _sums(*align_for_fidelity(P, Q, "teacher-forced"))
        C = cps_simulate(t.transcript, cps_cfg, seeds.rng(STREAM_CPS, t.utt_index, t.variant_index), arch.V)
        cps_sums = _sums(*align_for_fidelity(P, C, "truncate")) if len(C) else None
        rows.append((t, sim_sums, cps_sums))
    return rows


def compare_report(teacher_set: Sequence[SupervisionTuple], cps_cfg: CpsConfig, params: Params,
                   arch: SimArch, seed: int = 0, workers: int = 1, chunk_size: int = 64):
    """Fidelity of the CPS baseline and of the teacher-forced simulator against the same teacher set.

    CPS output has no frame correspondence with the teacher, so it is compared
    under the ``truncate`` policy; a CPS draw that deleted every token
    contributes no frames. Returns (reports keyed by system, per-utterance rows).
    """
    if not teacher_set:
        raise ValueError("teacher set is empty")
    jobs = [(list(teacher_set[a:b]), params, arch, cps_cfg, seed)
            for a, b in _chunks(len(teacher_set), chunk_size)]
    rows = [r for part in _run(_compare_chunk, jobs, workers) for r in part]
    reports = {
        "cps": _combine([c for _, _, c in rows if c is not None]).report(),
        "simulator": _combine([s for _, s, _ in rows]).report(),
    }
    per_utt = []
    for t, s, c in rows:
        for system, sums in (("cps", c), ("simulator", s)):
            if sums is None:
                continue
            rep = sums.report()
            per_utt.append({"system": system, "utt": t.utt_index, "variant": t.variant_index,
                            "code": t.code, **rep.row()})
    return reports, per_utt


# ---------------------------------------------------------------- controllability

def _control_chunk(job):
    transcripts, code, params, arch = job
    outs = simulate_batch(transcripts, [code] * len(transcripts), params, arch)
    return [(wer_between(list(y), greedy_decode(P, BLANK_ID)), len(P), greedy_decode(P, BLANK_ID))
            for y, P in zip(transcripts, outs)]


def summarize(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return {"n": 0, "mean": None, "median": None, "q1": None, "q3": None}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"n": int(v.size), "mean": float(v.mean()), "median": float(med),
            "q1": float(q1), "q3": float(q3)}


@dataclass
class ControlResult:
    records: list           # (bin, utterance_id, realized_wer, frames)
    hypotheses: dict        # bin -> list of decoded hypotheses
    summary: dict           # bin -> summary statistics

    def medians(self) -> list:
        return [self.summary[k]["median"] for k in sorted(self.summary)]


def controllability_eval(params: Params, arch: SimArch, held_out: Sequence, scheme: WerBinScheme,
                         samples_per_bin: Optional[int] = None, workers: int = 1,
                         chunk_size: int = 64, utt_ids: Optional[Sequence[int]] = None) -> ControlResult:
    """Simulate every held-out transcript under each bin code, greedy-decode and score WER.

    Only (transcript, code) reach the generator.
    """
    if len(held_out) == 0:
        raise ValueError("held-out set is empty")
    held = list(held_out)[: samples_per_bin] if samples_per_bin else list(held_out)
    ids = list(utt_ids)[: len(held)] if utt_ids is not None else list(range(len(held)))
    jobs = [(held[a:b], c, params, arch)
            for c in range(1, scheme.K + 1) for a, b in _chunks(len(held), chunk_size)]
    results = _run(_control_chunk, jobs, workers)
    per_bin = {c: [] for c in range(1, scheme.K + 1)}
    for (_, c, _, _), part in zip(jobs, results):
        per_bin[c].extend(part)
    records, hyps, summary = [], {}, {}
    for c, rows in per_bin.items():
        for uid, (w, n, _) in zip(ids, rows):
            records.append((c, int(uid), float(w), int(n)))
        hyps[c] = [h for _, _, h in rows]
        summary[c] = summarize([w for w, _, _ in rows])
    return ControlResult(records, hyps, summary)


# ---------------------------------------------------------------- report files

def write_fidelity_csv(path, reports: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["system", "metric", "value"])
        for system, rep in reports.items():
            for metric in ("ce", "kl", "acc", "prob_diff", "n"):
                w.writerow([system, metric, repr(getattr(rep, metric))])


def write_fidelity_table(path, reports: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["system", "CE", "KL", "Acc", "ProbDiff", "N"])
        for system, rep in reports.items():
            w.writerow([system, f"{rep.ce:.4f}", f"{rep.kl:.4f}", f"{rep.acc:.4f}",
                        f"{rep.prob_diff:.4f}", rep.n])


def write_jsonl(path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def write_control_csv(path, result: ControlResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "utterance_id", "realized_wer", "frames"])
        for c, uid, wer, n in result.records:
            w.writerow([c, uid, repr(float(wer)), n])


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump({str(k): v for k, v in summary.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
