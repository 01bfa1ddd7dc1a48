import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctcsim.core import SeedSpec, SupervisionTuple, WerBinScheme
from ctcsim.cps import CpsConfig
from ctcsim.dataset import pad_and_mask
from ctcsim.evaluation import (align_for_fidelity, compare_report, controllability_eval, entropy,
                               fidelity, write_control_csv, write_fidelity_csv, write_summary_json)
from ctcsim.simulator import SimArch, init_params
from ctcsim.teacher import TeacherConfig, teach

from conftest import random_posteriors
from oracles import cross_entropy_loop, entropy_loop

SMALL = SimArch(V=8, K=3, enc_layers=1, dec_layers=1, d_model=16, n_heads=2, d_ff=32, max_T=16)


def test_identical_sequences():
    P = random_posteriors(np.random.default_rng(0), 10, 6)
    r = fidelity(P, P)
    assert abs(r.kl) <= 1e-12 and r.acc == 1.0 and r.prob_diff == 0.0 and r.n == 10
    assert r.ce == pytest.approx(entropy_loop(P), abs=1e-12)


def test_single_frame_arithmetic():
    r = fidelity(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))
    assert r.ce == pytest.approx(np.log(2)) and r.kl == pytest.approx(np.log(2))
    assert r.acc == 1.0 and r.prob_diff == pytest.approx(0.5)


def test_fidelity_errors():
    with pytest.raises(ValueError):
        fidelity(np.ones((2, 2)) / 2, np.ones((3, 2)) / 2)
    with pytest.raises(ValueError):
        fidelity(np.zeros((0, 2)), np.zeros((0, 2)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 20), st.booleans())
def test_kl_equals_ce_minus_entropy(seed, T, zeros):
    rng = np.random.default_rng(seed)
    P = random_posteriors(rng, T, 6)
    if zeros:
        P[:, 2] = 0.0
        P /= P.sum(axis=1, keepdims=True)
    Q = random_posteriors(rng, T, 6)
    r = fidelity(P, Q)
    assert abs(r.kl - (r.ce - entropy_loop(P))) <= 1e-9
    assert r.ce == pytest.approx(cross_entropy_loop(P, Q), abs=1e-9)
    assert r.kl >= -1e-9 and r.ce >= entropy_loop(P) - 1e-9 and r.ce >= r.kl
    assert 0.0 <= r.acc <= 1.0 and 0.0 <= r.prob_diff <= 1.0


def test_frame_permutation_invariance():
    rng = np.random.default_rng(4)
    P, Q = random_posteriors(rng, 12, 5), random_posteriors(rng, 12, 5)
    perm = rng.permutation(12)
    a, b = fidelity(P, Q), fidelity(P[perm], Q[perm])
    for f in ("ce", "kl", "acc", "prob_diff"):
        assert getattr(a, f) == pytest.approx(getattr(b, f), abs=1e-12)


def test_align_policies():
    P, Q = np.ones((5, 2)) / 2, np.ones((3, 2)) / 2
    a, b = align_for_fidelity(P, Q, "truncate")
    assert len(a) == len(b) == 3
    a, b = align_for_fidelity(P, P)
    assert a is not None and len(a) == 5
    with pytest.raises(ValueError):
        align_for_fidelity(P, Q, "teacher-forced")
    with pytest.raises(ValueError):
        align_for_fidelity(P, np.zeros((0, 2)), "truncate")
    with pytest.raises(ValueError):
        align_for_fidelity(P, P, "nearest")


def _held_out(n=6):
    cfg = TeacherConfig(vocab_size=SMALL.V, variants=2)
    rng = np.random.default_rng(1)
    out = []
    for i in range(n):
        y = rng.integers(1, SMALL.V, size=int(rng.integers(2, 5)))
        for j, s in enumerate(teach(y, cfg, SeedSpec(0), i)):
            P = s.posteriors[: SMALL.max_T]
            out.append(SupervisionTuple(y, 1 + j, P, s.wer, i, j, pad_and_mask(P, SMALL.max_T)))
    return out


def test_compare_report_schema_and_determinism():
    held = _held_out()
    p = init_params(SMALL, 0)
    reports, rows = compare_report(held, CpsConfig(), p, SMALL, seed=0, workers=1, chunk_size=4)
    assert set(reports) == {"cps", "simulator"}
    assert reports["simulator"].n == sum(t.target.valid_len for t in held)
    assert sum(r["system"] == "simulator" for r in rows) == len(held)
    again, rows2 = compare_report(held, CpsConfig(), p, SMALL, seed=0, workers=1, chunk_size=4)
    assert again == reports and rows == rows2


def test_compare_report_chunking_independent():
    held = _held_out()
    p = init_params(SMALL, 0)
    a, rows_a = compare_report(held, CpsConfig(), p, SMALL, 0, 1, 3)
    b, rows_b = compare_report(held, CpsConfig(), p, SMALL, 0, 1, 5)
    assert rows_a == rows_b
    for system in a:
        for f in ("ce", "kl", "acc", "prob_diff"):
            assert getattr(a[system], f) == pytest.approx(getattr(b[system], f), abs=1e-12)


def test_controllability_untrained_and_schema(tmp_path):
    p = init_params(SMALL, 0)
    ys = [np.array([1, 2, 3]), np.array([4, 5]), np.array([6, 7, 1, 2])]
    res = controllability_eval(p, SMALL, ys, WerBinScheme(((0, 6), (10, 40), (50, 150))), None, 1, 2)
    assert set(res.summary) == {1, 2, 3}
    assert all(res.summary[c]["n"] == 3 for c in res.summary)
    assert len(res.records) == 9
    write_control_csv(tmp_path / "c.csv", res)
    rows = list(csv.DictReader(open(tmp_path / "c.csv")))
    assert list(rows[0]) == ["bin", "utterance_id", "realized_wer", "frames"]
    float(rows[0]["realized_wer"])
    write_summary_json(tmp_path / "s.json", res.summary)
    assert set(json.load(open(tmp_path / "s.json"))) == {"1", "2", "3"}


def test_controllability_single_bin():
    p = init_params(SimArch(**{**SMALL.to_dict(), "K": 1}), 0)
    arch = SimArch(**{**SMALL.to_dict(), "K": 1})
    res = controllability_eval(p, arch, [np.array([1, 2])], WerBinScheme(((0, 200),)))
    assert list(res.summary) == [1] and res.summary[1]["n"] == 1


def test_controllability_rejects_empty():
    with pytest.raises(ValueError):
        controllability_eval(init_params(SMALL, 0), SMALL, [], WerBinScheme(((0, 6),)))


def test_fidelity_csv(tmp_path):
    r = fidelity(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))
    write_fidelity_csv(tmp_path / "f.csv", {"cps": r, "simulator": r})
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert rows[0] == ["system", "metric", "value"]
    assert {(a, b) for a, b, _ in rows[1:]} == {(s, m) for s in ("cps", "simulator")
                                                for m in ("ce", "kl", "acc", "prob_diff", "n")}
