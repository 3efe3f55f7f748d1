import json

import numpy as np
import pytest

from flamenco_sid.contour import ContourSequence, LineSegment
from flamenco_sid.mining import (MotifDictionary, SequenceDatabase, build_dictionary, locate_occurrences,
                                 mine_closed)
from oracles import brute_closed, is_subsequence


def as_map(motifs):
    return {m.pattern: m.support for m in motifs}


def random_db(rng, n_max=8, len_max=10, alpha_max=5):
    alpha = int(rng.integers(1, alpha_max + 1))
    return [list(rng.integers(0, alpha, size=int(rng.integers(0, len_max + 1)))) for _ in range(int(rng.integers(1, n_max + 1)))]


def test_spec_example():
    db = [["A", "B", "C"], ["A", "B"], ["B", "C"]]
    got = as_map(mine_closed(db, 2, 1, 3))
    assert got == {("B",): 3, ("A", "B"): 2, ("B", "C"): 2}
    assert got == brute_closed(db, 2, 1, 3)


def test_empty_and_oversized_support():
    assert mine_closed([], 2, 1, 3) == []
    assert mine_closed([[1, 2]], 2, 1, 3) == []


def test_identical_sequences_collapse_to_one_pattern():
    s = [2, -1, 2, 1]
    assert as_map(mine_closed([s] * 4, 4, 1, 12)) == {tuple(s): 4}


def test_argument_errors():
    with pytest.raises(ValueError):
        mine_closed([[1]], 1, 1, 2)
    with pytest.raises(ValueError):
        mine_closed([[1]], 2, 3, 2)


def test_output_order():
    db = [[1, 2, 3], [1, 2, 3], [1, 2], [3, 1]]
    motifs = mine_closed(db, 2, 1, 5)
    keys = [(-m.support, m.pattern) for m in motifs]
    assert keys == sorted(keys)


def test_oracle_equivalence_random():
    rng = np.random.default_rng(0)
    for _ in range(150):
        db = random_db(rng)
        ms = int(rng.integers(2, 4))
        lo = int(rng.integers(1, 4))
        hi = int(rng.integers(lo, 11))
        assert as_map(mine_closed(db, ms, lo, hi)) == brute_closed(db, ms, lo, hi)


def test_properties_anti_monotone_and_support_monotone():
    rng = np.random.default_rng(1)
    for _ in range(40):
        db = random_db(rng)
        got = mine_closed(db, 2, 1, 10)
        for m in got:
            support = sum(is_subsequence(m.pattern, s) for s in db)
            assert support == m.support
            for k in range(1, len(m.pattern)):
                assert sum(is_subsequence(m.pattern[:k], s) for s in db) >= m.support
        # any pattern present at support 3 is present at support 2 as well
        assert set(as_map(mine_closed(db, 3, 1, 10))) <= set(as_map(got))


def test_relative_support():
    db = [[1, 2, 3]] * 6 + [[4, 5, 6]] * 4
    assert as_map(mine_closed(db, 0.5, 3, 3)) == {(1, 2, 3): 6}


# ------------------------------------------------------------------ occurrences


def _seq(steps, source_id="r"):
    idx = np.concatenate([[10], 10 + np.cumsum(steps)]).astype(int)
    segs = [LineSegment(int(c), 10 * i, 10 * i + 8, 0.0) for i, c in enumerate(idx)]
    return ContourSequence(list(steps), segs, source_id)


def test_locate_examples():
    seq = _seq([2, -1, 2])
    assert locate_occurrences((2, -1, 2), seq) == [(0, 38)]
    assert locate_occurrences((2,), seq) == [(0, 18), (20, 38)]
    assert locate_occurrences((2, 2), seq) == [(0, 38)]
    assert locate_occurrences((5,), seq) == []


def test_occurrence_spans_contain_pattern():
    rng = np.random.default_rng(2)
    for _ in range(30):
        steps = [int(x) for x in rng.choice([-2, -1, 1, 2], size=12)]
        seq = _seq(steps)
        pattern = tuple(steps[i] for i in sorted(rng.choice(12, 3, replace=False)))
        for a, b in locate_occurrences(pattern, seq):
            inside = [g for g in seq.segments if g.start_frame >= a and g.end_frame <= b]
            sub = [y.cluster_index - x.cluster_index for x, y in zip(inside[:-1], inside[1:])]
            assert is_subsequence(pattern, sub)


# --------------------------------------------------------------- dictionaries


def test_dictionary_with_planted_motif():
    rng = np.random.default_rng(3)
    seqs = []
    for i in range(30):
        filler = [int(x) for x in rng.choice([-3, 3, 4, -4], size=int(rng.integers(1, 4)))]
        steps = filler + ([2, -1, 2] if rng.random() < 0.8 else []) + filler[::-1]
        seqs.append(_seq(steps, f"r{i % 3}"))
    d = build_dictionary([SequenceDatabase("A", seqs)], min_support=0.5, len_min=3, len_max=12)[0]
    sup = sum(is_subsequence((2, -1, 2), s.steps) for s in seqs)
    assert any(is_subsequence((2, -1, 2), m.pattern) and m.support == sup for m in d.motifs)


def test_disjoint_alphabets_share_nothing(caplog):
    a = SequenceDatabase("A", [_seq([1, 2, 1, 2])] * 4)
    b = SequenceDatabase("B", [_seq([-1, -2, -1])] * 4)
    empty = SequenceDatabase("C", [])
    da, db, dc = build_dictionary([a, b, empty], min_support=2, len_min=1)
    assert da.patterns() and db.patterns()
    assert not da.patterns() & db.patterns()
    assert dc.motifs == []
    assert "no sequences" in caplog.text


def test_dictionary_occurrences_and_round_trip():
    seqs = [_seq([2, -1, 2], "x"), _seq([1, 2, -1, 2], "y")]
    d = build_dictionary([SequenceDatabase("A", seqs)], min_support=2, len_min=3)[0]
    m = next(m for m in d.motifs if m.pattern == (2, -1, 2))
    assert [(o.source_id, o.start_frame, o.end_frame) for o in m.occurrences] == [("x", 0, 38), ("y", 10, 48)]
    back = MotifDictionary.from_dict(json.loads(d.dumps(config={"k": 1})))
    assert back.patterns() == d.patterns()
    assert back.motifs[0].occurrences == d.motifs[0].occurrences
    assert len({m.pattern for m in d.motifs}) == len(d.motifs)
