"""Closed sequential pattern mining (BIDE) over contour-step sequences."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

from .contour import ContourSequence

log = logging.getLogger(__name__)

DEFAULT_MIN_SUPPORT = 5
DEFAULT_LEN_MIN = 3
DEFAULT_LEN_MAX = 12


@dataclass
class SequenceDatabase:
    owner: str
    contours: list[ContourSequence] = field(default_factory=list)

    @property
    def sequences(self) -> list[list[int]]:
        return [list(c.steps) for c in self.contours]

    def __len__(self):
        return len(self.contours)


@dataclass(frozen=True)
class Occurrence:
    source_id: str
    start_frame: int
    end_frame: int


@dataclass
class Motif:
    pattern: tuple
    support: int
    occurrences: list[Occurrence] = field(default_factory=list)

    def to_dict(self):
        return {"pattern": list(self.pattern), "support": self.support,
                "occurrences": [{"source_id": o.source_id, "start_frame": o.start_frame,
                                 "end_frame": o.end_frame} for o in self.occurrences]}


@dataclass
class MotifDictionary:
    singer: str
    motifs: list[Motif] = field(default_factory=list)
    hop_seconds: float = 256 / 44100

    def patterns(self) -> set[tuple]:
        return {m.pattern for m in self.motifs}

    def to_dict(self):
        return {"singer": self.singer, "hop_seconds": self.hop_seconds,
                "motifs": [m.to_dict() for m in self.motifs]}

    @classmethod
    def from_dict(cls, d) -> "MotifDictionary":
        motifs = [Motif(tuple(m["pattern"]), int(m["support"]),
                        [Occurrence(o["source_id"], int(o["start_frame"]), int(o["end_frame"]))
                         for o in m["occurrences"]]) for m in d["motifs"]]
        return cls(d["singer"], motifs, float(d.get("hop_seconds", 256 / 44100)))

    def dumps(self, **extra) -> str:
        return json.dumps({**extra, **self.to_dict()}, indent=1, sort_keys=True) + "\n"


# --------------------------------------------------------------------------- BIDE


class _Bide:
    def __init__(self, db: Sequence[Sequence[Hashable]], min_support: int, len_min: int, len_max: int):
        self.db = [list(s) for s in db]
        self.min_support = min_support
        self.len_min = len_min
        self.len_max = len_max
        self.out: list[tuple[tuple, int]] = []

    # A projection entry is (sequence id, positions of the first instance of the prefix).

    def run(self):
        counts = Counter()
        for s in self.db:
            counts.update(set(s))
        for item in sorted(i for i, c in counts.items() if c >= self.min_support):
            proj = [(sid, (s.index(item),)) for sid, s in enumerate(self.db) if item in s]
            self._grow((item,), proj)
        self.out.sort(key=lambda pc: (-pc[1], pc[0]))
        return self.out

    def _grow(self, prefix: tuple, proj):
        support = len(proj)
        local = Counter()
        for sid, pos in proj:
            local.update(set(self.db[sid][pos[-1] + 1 :]))
        if self._backscan_prunable(prefix, proj):
            return
        forward_closed = all(c < support for c in local.values())
        if forward_closed and self.len_min <= len(prefix) <= self.len_max and not self._backward_extensible(prefix, proj):
            self.out.append((prefix, support))
        if len(prefix) >= self.len_max:
            return
        for item in sorted(i for i, c in local.items() if c >= self.min_support):
            nxt = []
            for sid, pos in proj:
                s = self.db[sid]
                try:
                    nxt.append((sid, pos + (s.index(item, pos[-1] + 1),)))
                except ValueError:
                    pass
            self._grow(prefix + (item,), nxt)

    @staticmethod
    def _last_in_first(s, prefix, first):
        """Position of each prefix item in the rightmost embedding inside the first instance."""
        n = len(prefix)
        lf = [0] * n
        lf[-1] = first[-1]
        for i in range(n - 2, -1, -1):
            j = lf[i + 1] - 1
            while s[j] != prefix[i]:
                j -= 1
            lf[i] = j
        return lf

    @staticmethod
    def _last_in_last(s, prefix):
        n = len(prefix)
        ll = [0] * n
        j = len(s) - 1
        for i in range(n - 1, -1, -1):
            while s[j] != prefix[i]:
                j -= 1
            ll[i] = j
            j -= 1
        return ll

    def _periods_share_item(self, proj, bounds) -> bool:
        """True if, for some i, one item occurs in the i-th period of every sequence."""
        n = len(bounds[0][1])
        for i in range(n):
            common = None
            for (sid, _), (lo, hi) in zip(proj, bounds):
                items = set(self.db[sid][lo[i] : hi[i]])
                common = items if common is None else common & items
                if not common:
                    break
            if common:
                return True
        return False

    def _starts(self, first):
        return [0] + [p + 1 for p in first[:-1]]

    def _backward_extensible(self, prefix, proj) -> bool:
        bounds = [(self._starts(first), self._last_in_last(self.db[sid], prefix)) for sid, first in proj]
        return self._periods_share_item(proj, bounds)

    def _backscan_prunable(self, prefix, proj) -> bool:
        bounds = [(self._starts(first), self._last_in_first(self.db[sid], prefix, first)) for sid, first in proj]
        return self._periods_share_item(proj, bounds)


def _resolve_support(min_support, n: int) -> int:
    if isinstance(min_support, float) and 0 < min_support < 1:
        import math
        return max(2, math.ceil(min_support * n))
    return int(min_support)


def mine_closed(db, min_support=DEFAULT_MIN_SUPPORT, len_min: int = DEFAULT_LEN_MIN,
                len_max: int = DEFAULT_LEN_MAX) -> list[Motif]:
    """Closed frequent subsequences of ``db`` with length in ``[len_min, len_max]``.

    ``db`` is a list of symbol sequences or a :class:`SequenceDatabase`.
    Support counts sequences, not occurrences. A float ``min_support`` in
    (0, 1) is taken relative to the database size. Output is ordered by
    support (descending) then pattern.
    """
    seqs = db.sequences if isinstance(db, SequenceDatabase) else [list(s) for s in db]
    ms = _resolve_support(min_support, len(seqs))
    if ms < 2:
        raise ValueError("min_support must be >= 2")
    if not 1 <= len_min <= len_max:
        raise ValueError("need 1 <= len_min <= len_max")
    if not seqs or ms > len(seqs):
        return []
    return [Motif(p, c) for p, c in _Bide(seqs, ms, len_min, len_max).run()]


# -------------------------------------------------------------------- occurrences


def _leftmost(steps, pattern, start=0):
    pos = []
    j = start
    for sym in pattern:
        while j < len(steps) and steps[j] != sym:
            j += 1
        if j == len(steps):
            return None
        pos.append(j)
        j += 1
    return pos


def locate_occurrences(pattern, seq: ContourSequence) -> list[tuple[int, int]]:
    """Frame spans of successive non-overlapping left-most greedy embeddings.

    An embedding matching steps p_0..p_m covers segments p_0 through p_m + 1.
    """
    spans = []
    start = 0
    while True:
        pos = _leftmost(seq.steps, pattern, start)
        if pos is None:
            return spans
        spans.append((seq.segments[pos[0]].start_frame, seq.segments[pos[-1] + 1].end_frame))
        start = pos[-1] + 1


def build_dictionary(databases, min_support=DEFAULT_MIN_SUPPORT, len_min: int = DEFAULT_LEN_MIN,
                     len_max: int = DEFAULT_LEN_MAX, occurrences: str = "first") -> list[MotifDictionary]:
    """One dictionary per singer database, with occurrence spans attached.

    ``occurrences="first"`` keeps the first embedding in each containing
    sequence; ``"all"`` keeps every non-overlapping embedding.
    """
    if occurrences not in ("first", "all"):
        raise ValueError("occurrences must be 'first' or 'all'")
    out = []
    for db in databases:
        hop = db.contours[0].hop_seconds if db.contours else 256 / 44100
        if len(db) == 0:
            log.warning("singer %s has no sequences; empty dictionary", db.owner)
            out.append(MotifDictionary(db.owner, [], hop))
            continue
        motifs = mine_closed(db, min_support, len_min, len_max)
        for m in motifs:
            for c in db.contours:
                spans = locate_occurrences(m.pattern, c)
                if occurrences == "first":
                    spans = spans[:1]
                m.occurrences.extend(Occurrence(c.source_id, a, b) for a, b in spans)
        out.append(MotifDictionary(db.owner, motifs, hop))
    return out
