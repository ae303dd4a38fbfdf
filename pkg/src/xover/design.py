"""Crossover designs: representation, class membership checks, orthogonal
arrays of type I / strength 2, and enumeration of the binary class with p = t.

A design is stored as a ``p x n`` integer layout whose entry ``(i, j)`` is
the treatment (1..t) given to subject ``j`` in period ``i``. On disk a
design is CSV with one line per subject.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    ConstructionError,
    DesignParseError,
    EnumerationSizeError,
    UnsupportedShapeError,
    ValidationError,
)

__all__ = [
    "Design",
    "OaSpec",
    "parse_design",
    "serialize_design",
    "read_design",
    "write_design",
    "is_binary",
    "is_uniform_on_subjects",
    "is_oa_type1_strength2",
    "construct_oa",
    "all_permutations",
    "count_binary_designs",
    "enumerate_binary_designs",
    "enumerate_binary_counts",
    "counts_to_design",
    "design_to_counts",
    "ENUMERATION_CAP",
]

ENUMERATION_CAP = 10**7


@dataclass(frozen=True, eq=False)
class Design:
    """A ``p x n`` crossover layout with treatments labelled ``1..t``."""

    t: int
    layout: NDArray[np.int64] = field(repr=False)

    def __post_init__(self):
        lay = np.array(self.layout, dtype=np.int64, copy=True)
        if lay.ndim != 2:
            raise ValidationError(f"layout must be 2-D (periods x subjects), got shape {lay.shape}")
        if self.t < 2:
            raise ValidationError(f"need t >= 2 treatments, got {self.t}")
        if lay.shape[0] < 2:
            raise ValidationError(f"need p >= 2 periods, got {lay.shape[0]}")
        if lay.shape[1] < 1:
            raise ValidationError("need at least one subject")
        if lay.min() < 1 or lay.max() > self.t:
            raise ValidationError(f"treatment labels must lie in 1..{self.t}")
        lay.setflags(write=False)
        object.__setattr__(self, "layout", lay)

    @classmethod
    def from_sequences(cls, sequences: Sequence[Sequence[int]], t: int) -> "Design":
        """Build from per-subject treatment sequences (each of length p)."""
        return cls(t=t, layout=np.array(sequences, dtype=np.int64).T)

    @property
    def p(self) -> int:
        return int(self.layout.shape[0])

    @property
    def n(self) -> int:
        return int(self.layout.shape[1])

    @property
    def sequences(self) -> list[tuple[int, ...]]:
        return [tuple(int(x) for x in col) for col in self.layout.T]

    def canonical(self) -> "Design":
        """Same design with subjects sorted lexicographically by sequence."""
        return Design.from_sequences(sorted(self.sequences), self.t)

    def replicate(self, m: int) -> "Design":
        """Concatenate ``m`` copies of the subject set."""
        return Design(t=self.t, layout=np.tile(self.layout, (1, m)))

    def __eq__(self, other):
        if not isinstance(other, Design):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.layout, other.layout)

    def __hash__(self):
        return hash((self.t, self.layout.shape, self.layout.tobytes()))

    def __repr__(self):
        seqs = ",".join("".join(str(x) for x in s) for s in self.sequences[:6])
        more = ",..." if self.n > 6 else ""
        return f"Design(t={self.t}, p={self.p}, n={self.n}, sequences=[{seqs}{more}])"


@dataclass(frozen=True)
class OaSpec:
    t: int
    lam: int = 1

    def __post_init__(self):
        if self.t < 3:
            raise ValidationError(f"orthogonal arrays here need t >= 3, got {self.t}")
        if self.lam < 1:
            raise ValidationError(f"lambda must be a positive integer, got {self.lam}")

    @property
    def n(self) -> int:
        return self.lam * self.t * (self.t - 1)

    @property
    def p(self) -> int:
        return self.t


def _parse_label(tok: str, t: int, lineno: int) -> tuple[int, str]:
    tok = tok.strip()
    if not tok:
        raise DesignParseError("empty field", lineno)
    if tok.isdigit():
        val, kind = int(tok), "int"
    elif len(tok) == 1 and "A" <= tok <= "Z":
        val, kind = ord(tok) - ord("A") + 1, "letter"
    else:
        raise DesignParseError(f"unrecognised treatment label {tok!r}", lineno)
    if not 1 <= val <= t:
        raise DesignParseError(f"label {tok!r} outside 1..{t}", lineno)
    return val, kind


def parse_design(text: str, t: int) -> Design:
    """Parse design CSV: one line per subject, one field per period.

    Labels are integers ``1..t`` or letters ``A..`` (A -> 1); the two styles
    may not be mixed within a file. Blank lines are ignored.
    """
    rows: list[list[int]] = []
    kinds: set[str] = set()
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DesignParseError(f"expected {width} fields, found {len(fields)}", lineno)
        row = []
        for tok in fields:
            val, kind = _parse_label(tok, t, lineno)
            kinds.add(kind)
            if len(kinds) > 1:
                raise DesignParseError("integer and letter labels mixed", lineno)
            row.append(val)
        rows.append(row)
    if not rows:
        raise DesignParseError("no subjects found")
    try:
        return Design.from_sequences(rows, t)
    except ValidationError as exc:
        raise DesignParseError(str(exc)) from exc


def serialize_design(d: Design, letters: bool = False) -> str:
    if letters and d.t > 26:
        raise ValidationError("letter labels support at most 26 treatments")
    fmt = (lambda x: chr(ord("A") + x - 1)) if letters else str
    return "".join(",".join(fmt(int(x)) for x in seq) + "\n" for seq in d.sequences)


def read_design(path, t: int) -> Design:
    with open(path, encoding="utf-8") as fh:
        return parse_design(fh.read(), t)


def write_design(d: Design, path, letters: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_design(d, letters))


def is_binary(d: Design) -> bool:
    """Every treatment appears at most once in each subject's sequence."""
    return all(len(set(seq)) == len(seq) for seq in d.sequences)


def is_uniform_on_subjects(d: Design) -> bool:
    if d.p % d.t:
        return False
    reps = d.p // d.t
    return all(
        np.array_equal(np.bincount(col, minlength=d.t + 1)[1:], np.full(d.t, reps))
        for col in d.layout.T
    )


def is_oa_type1_strength2(d: Design) -> tuple[bool, int | None]:
    """Check the type I, strength 2 orthogonal-array property.

    Every ordered pair of distinct treatments must occur exactly
    ``lambda = n / (t (t - 1))`` times in every ordered pair of distinct
    periods, and equal pairs never. Returns ``(ok, lambda)`` with
    ``lambda`` set only when ``ok``.
    """
    if d.p != d.t:
        raise UnsupportedShapeError(f"orthogonal-array check requires p == t (got p={d.p}, t={d.t})")
    t = d.t
    if d.n % (t * (t - 1)):
        return False, None
    lam = d.n // (t * (t - 1))
    lay = d.layout - 1
    for i in range(d.p):
        for k in range(d.p):
            if i == k:
                continue
            counts = np.zeros((t, t), dtype=np.int64)
            np.add.at(counts, (lay[i], lay[k]), 1)
            expected = np.full((t, t), lam)
            np.fill_diagonal(expected, 0)
            if not np.array_equal(counts, expected):
                return False, None
    return True, lam


def _is_prime(x: int) -> bool:
    return x >= 2 and all(x % f for f in range(2, math.isqrt(x) + 1))


def all_permutations(t: int) -> list[tuple[int, ...]]:
    """All ``t!`` sequences of labels 1..t in lexicographic order."""
    return list(itertools.permutations(range(1, t + 1)))


def construct_oa(spec: OaSpec) -> Design:
    """Build OA_I(n = lambda t (t-1), p = t, t, 2).

    For prime ``t`` the columns are ``(a + b i) mod t`` for ``a`` in
    ``0..t-1`` and ``b`` in ``1..t-1`` (period ``i`` in ``0..t-1``),
    repeated ``lambda`` times. Otherwise ``lambda`` must be a multiple of
    ``(t-2)!`` and the array is that many copies of all ``t!`` permutations
    divided by ``(t-2)!``.
    """
    t, lam = spec.t, spec.lam
    if _is_prime(t):
        base = [[(a + b * i) % t + 1 for i in range(t)] for a in range(t) for b in range(1, t)]
        return Design.from_sequences(base * lam, t)
    block = math.factorial(t - 2)
    if lam % block:
        raise ConstructionError(
            f"cannot build OA_I with t={t}, lambda={lam}: supported are prime t with any lambda, "
            f"or any t with lambda a multiple of (t-2)! = {block}"
        )
    return Design.from_sequences(all_permutations(t) * (lam // block), t)


def count_binary_designs(t: int, n: int) -> int:
    """Number of column multisets of size n drawn from the t! permutations."""
    k = math.factorial(t)
    return math.comb(n + k - 1, k - 1)


def _check_enum(t: int, n: int, cap: int) -> int:
    if t < 3:
        raise ValidationError(f"the binary class is defined for t >= 3, got {t}")
    if n < 1:
        raise ValidationError(f"need n >= 1 subjects, got {n}")
    total = count_binary_designs(t, n)
    if total > cap:
        raise EnumerationSizeError(
            f"{total} designs for t={t}, n={n} exceeds the enumeration cap {cap}; use exchange_search"
        )
    return total


def enumerate_binary_counts(t: int, n: int, cap: int = ENUMERATION_CAP) -> Iterator[NDArray[np.int64]]:
    """Yield each binary design as a multiplicity vector over ``all_permutations(t)``.

    Order matches :func:`enumerate_binary_designs`.
    """
    _check_enum(t, n, cap)
    k = math.factorial(t)
    for combo in itertools.combinations_with_replacement(range(k), n):
        yield np.bincount(combo, minlength=k)


def enumerate_binary_designs(t: int, n: int, cap: int = ENUMERATION_CAP) -> Iterator[Design]:
    """Yield one canonical design per multiset of permutation columns (p = t).

    Columns within a design are in lexicographic order. The stream is
    restartable: each call starts a fresh generator.
    """
    _check_enum(t, n, cap)
    perms = all_permutations(t)
    for combo in itertools.combinations_with_replacement(range(len(perms)), n):
        yield Design.from_sequences([perms[c] for c in combo], t)


def counts_to_design(counts: ArrayLike, t: int) -> Design:
    """Inverse of the multiplicity encoding used by the search routines."""
    perms = all_permutations(t)
    seqs = [perms[i] for i, c in enumerate(np.asarray(counts)) for _ in range(int(c))]
    return Design.from_sequences(seqs, t)


def design_to_counts(d: Design) -> NDArray[np.int64]:
    """Multiplicity vector over ``all_permutations(t)``; requires a binary design with p = t."""
    if d.p != d.t or not is_binary(d):
        raise UnsupportedShapeError("multiplicity encoding needs a binary design with p == t")
    index = {s: i for i, s in enumerate(all_permutations(d.t))}
    c = Counter(index[s] for s in d.sequences)
    out = np.zeros(len(index), dtype=np.int64)
    for i, k in c.items():
        out[i] = k
    return out
