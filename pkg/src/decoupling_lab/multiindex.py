"""Multi-index sets, sparse coefficient families, and the three symmetrizers.

A multi-index is a subset of slot positions 1..n held as a bit mask.  A
coefficient family maps (multi-index, coordinate tuple) pairs to real
vectors; every stored tuple is off-diagonal (pairwise-distinct entries) and
zero vectors are never stored, so the support size is exact.

Three idempotent, mutually commuting operators act on families:

* ``symmetrize``        -- average over permutations of each tuple,
* ``nullify_diagonals`` -- ingestion path that drops diagonal-touching
  entries from a raw map,
* ``index_average``     -- unify values across slot sets of equal
  cardinality via the stretch/contract maps.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

MAX_SLOTS = 32
MAX_COORD = 64
SYMMETRIZE_DEGREE_CAP = 8
INDEX_AVERAGE_SLOT_CAP = 20


class GuardExceeded(ValueError):
    """An enumeration guard (degree, slot count, variable count) was hit."""


@dataclass(frozen=True, order=True)
class MultiIndex:
    """Subset of slot positions 1..n stored as a bit mask."""

    bits: int
    n: int

    def __post_init__(self):
        if not 0 <= self.n <= MAX_SLOTS:
            raise ValueError(f"slot count {self.n} outside [0, {MAX_SLOTS}]")
        if self.bits < 0 or self.bits >> self.n:
            raise ValueError(f"bits {self.bits:#x} do not fit in {self.n} slots")

    @classmethod
    def from_slots(cls, slots, n):
        bits = 0
        for s in slots:
            if not 1 <= s <= n:
                raise ValueError(f"slot {s} outside [1, {n}]")
            bits |= 1 << (s - 1)
        return cls(bits, n)

    @classmethod
    def full(cls, k, n):
        """The main slot set [1, k]."""
        if k > n:
            raise ValueError(f"degree {k} exceeds slot count {n}")
        return cls((1 << k) - 1, n)

    @classmethod
    def empty(cls, n):
        return cls(0, n)

    def slots(self):
        """Set bits as an increasing tuple of 1-based positions."""
        return tuple(i + 1 for i in range(self.n) if self.bits >> i & 1)

    @property
    def card(self):
        return self.bits.bit_count()

    def complement(self):
        return MultiIndex(~self.bits & (1 << self.n) - 1, self.n)

    def max_slot(self):
        """Largest set position; 0 for the empty set."""
        return self.bits.bit_length()

    def intersect(self, other):
        return MultiIndex(self.bits & other.bits, self.n)

    def union(self, other):
        return MultiIndex(self.bits | other.bits, self.n)

    def contains(self, slot):
        return bool(self.bits >> (slot - 1) & 1)

    def __iter__(self):
        return iter(self.slots())


IndexTuple = tuple  # ordered coordinate indices, one per set slot


def is_off_diagonal(tup):
    return len(set(tup)) == len(tup)


def stretch(alpha: MultiIndex, tup) -> dict:
    """Place tuple entries at the set slots of ``alpha``, in slot order.

    Returns the assignment slot -> coordinate (zeros elsewhere are implied).
    """
    slots = alpha.slots()
    if len(tup) != len(slots):
        raise ValueError(f"tuple length {len(tup)} != |alpha| = {len(slots)}")
    return dict(zip(slots, tup))


def contract(alpha: MultiIndex, assignment: dict):
    """Inverse of ``stretch``: read the coordinates off the set slots."""
    slots = alpha.slots()
    if set(assignment) != set(slots):
        raise ValueError("assignment domain does not match the slot set")
    return tuple(assignment[s] for s in slots)


def _as_vector(value, d):
    v = np.asarray(value, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.shape != (d,):
        raise ValueError(f"coefficient shape {v.shape} != ({d},)")
    return v


class CoefficientFamily:
    """Finitely supported map (multi-index, coordinate tuple) -> R^d.

    Entries live off the diagonal only; diagonal tuples are rejected at
    construction (use :func:`nullify_diagonals` to ingest raw maps).  Zero
    vectors are dropped on write.  Instances are immutable after
    construction and safe to share.
    """

    __slots__ = ("n", "N", "d", "entries", "empty_term")

    def __init__(self, n, N, d, entries, empty_term=None):
        if not 0 <= n <= MAX_SLOTS:
            raise ValueError(f"slot count {n} outside [0, {MAX_SLOTS}]")
        if not 0 <= N <= MAX_COORD:
            raise ValueError(f"coordinate bound {N} outside [0, {MAX_COORD}]")
        if d < 1:
            raise ValueError("coefficient dimension must be >= 1")
        self.n = n
        self.N = N
        self.d = d
        empty = (
            np.zeros(d) if empty_term is None else _as_vector(empty_term, d)
        )
        empty.flags.writeable = False
        self.empty_term = empty

        canon = {}
        for (alpha, tup), value in entries.items() if isinstance(entries, dict) else entries:
            alpha = self._coerce_alpha(alpha)
            tup = tuple(int(i) for i in tup)
            if len(tup) != alpha.card:
                raise ValueError(f"tuple {tup} has length != |{alpha.slots()}|")
            if alpha.card == 0:
                raise ValueError("use empty_term for the degree-0 coefficient")
            if any(not 1 <= i <= N for i in tup):
                raise ValueError(f"tuple {tup} outside coordinate range [1, {N}]")
            if not is_off_diagonal(tup):
                raise ValueError(f"diagonal tuple {tup} rejected at construction")
            v = _as_vector(value, d)
            key = (alpha, tup)
            if key in canon:
                v = canon[key] + v
            canon[key] = v
        cleaned = {}
        for key in sorted(canon, key=lambda kt: (kt[0].bits, kt[1])):
            v = canon[key]
            if np.any(v != 0.0):
                v = v.copy()
                v.flags.writeable = False
                cleaned[key] = v
        self.entries = cleaned

    def _coerce_alpha(self, alpha):
        if isinstance(alpha, MultiIndex):
            if alpha.n != self.n:
                raise ValueError("multi-index slot count mismatch")
            return alpha
        return MultiIndex.from_slots(alpha, self.n)

    # -- structure ---------------------------------------------------------

    def support(self):
        """Entries in canonical order: alpha by bit value, tuples lexicographic."""
        return tuple(self.entries.items())

    def degrees(self):
        return sorted({alpha.card for alpha, _ in self.entries})

    def value(self, alpha, tup):
        alpha = self._coerce_alpha(alpha)
        return self.entries.get((alpha, tuple(tup)), np.zeros(self.d))

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, CoefficientFamily):
            return NotImplemented
        return (
            (self.n, self.N, self.d) == (other.n, other.N, other.d)
            and np.array_equal(self.empty_term, other.empty_term)
            and self.entries.keys() == other.entries.keys()
            and all(
                np.array_equal(v, other.entries[k]) for k, v in self.entries.items()
            )
        )

    def allclose(self, other, tol=1e-12):
        if (self.n, self.N, self.d) != (other.n, other.N, other.d):
            return False
        if np.max(np.abs(self.empty_term - other.empty_term), initial=0.0) > tol:
            return False
        keys = set(self.entries) | set(other.entries)
        zero = np.zeros(self.d)
        return all(
            np.max(np.abs(self.entries.get(k, zero) - other.entries.get(k, zero)))
            <= tol
            for k in keys
        )

    # -- summation brackets --------------------------------------------------

    def plain_sum(self):
        """Plain summation over the whole support plus the constant term."""
        total = self.empty_term.copy()
        for _, v in self.support():
            total += v
        return total

    def pointwise_product_sum(self, other):
        """Sum of the entrywise product of two real-valued families."""
        if self.d != 1 or other.d != 1:
            raise ValueError("pointwise product is defined for scalar families")
        total = float(self.empty_term[0] * other.empty_term[0])
        for key, v in self.entries.items():
            w = other.entries.get(key)
            if w is not None:
                total += float(v[0] * w[0])
        return total

    # -- serialization -------------------------------------------------------

    def to_json(self):
        obj = {
            "n": self.n,
            "N": self.N,
            "d": self.d,
            "empty": [x.hex() for x in self.empty_term.tolist()],
            "entries": [
                {
                    "alpha": list(alpha.slots()),
                    "tuple": list(tup),
                    "value": [x.hex() for x in v.tolist()],
                }
                for (alpha, tup), v in self.support()
            ],
        }
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        n, N, d = obj["n"], obj["N"], obj["d"]
        entries = {}
        for e in obj["entries"]:
            key = (MultiIndex.from_slots(e["alpha"], n), tuple(e["tuple"]))
            entries[key] = np.array([float.fromhex(x) for x in e["value"]])
        empty = np.array([float.fromhex(x) for x in obj["empty"]])
        return cls(n, N, d, entries, empty)


def nullify_diagonals(raw_entries, n, N, d, empty_term=None):
    """Ingest a raw sparse map, dropping every diagonal-touching entry.

    This is the only path by which diagonal input is accepted; the family
    constructor itself rejects diagonal tuples.  Idempotent by construction.
    """
    kept = {}
    for (alpha, tup), value in (
        raw_entries.items() if isinstance(raw_entries, dict) else raw_entries
    ):
        tup = tuple(int(i) for i in tup)
        if is_off_diagonal(tup):
            key = (alpha, tup)
            kept[key] = kept.get(key, 0) + np.asarray(value, dtype=np.float64)
    return CoefficientFamily(n, N, d, kept, empty_term)


def symmetrize(f: CoefficientFamily) -> CoefficientFamily:
    """Average each coefficient over all permutations of its tuple.

    Materializes all |alpha|! permutations of every supported tuple, guarded
    by |alpha| <= 8.
    """
    for alpha, _ in f.entries:
        if alpha.card > SYMMETRIZE_DEGREE_CAP:
            raise GuardExceeded(
                f"|alpha| = {alpha.card} exceeds symmetrize cap {SYMMETRIZE_DEGREE_CAP}"
            )
    orbit_sums = {}
    for (alpha, tup), v in f.entries.items():
        key = (alpha, tuple(sorted(tup)))
        orbit_sums[key] = orbit_sums.get(key, 0) + v
    out = {}
    for (alpha, sorted_tup), total in orbit_sums.items():
        mean = total / math.factorial(len(sorted_tup))
        for perm in itertools.permutations(sorted_tup):
            out[(alpha, perm)] = mean
    return CoefficientFamily(f.n, f.N, f.d, out, f.empty_term)


def index_average(f: CoefficientFamily) -> CoefficientFamily:
    """Unify coefficient values across slot sets of equal cardinality.

    Per degree k the contracted values are averaged over all C(n, k) slot
    sets and written back to every one of them, so the result is constant
    across alpha of equal cardinality after contraction.
    """
    if f.n > INDEX_AVERAGE_SLOT_CAP:
        raise GuardExceeded(
            f"slot count {f.n} exceeds index-average cap {INDEX_AVERAGE_SLOT_CAP}"
        )
    by_degree = {}
    for (alpha, tup), v in f.entries.items():
        bucket = by_degree.setdefault(alpha.card, {})
        bucket[tup] = bucket.get(tup, 0) + v
    out = {}
    for k, bucket in by_degree.items():
        count = math.comb(f.n, k)
        for alpha_slots in itertools.combinations(range(1, f.n + 1), k):
            alpha = MultiIndex.from_slots(alpha_slots, f.n)
            for tup, total in bucket.items():
                out[(alpha, tup)] = total / count
    return CoefficientFamily(f.n, f.N, f.d, out, f.empty_term)


def degree_slice_average(f: CoefficientFamily, k: int) -> dict:
    """Contracted degree-k average: tuple -> mean value over all |alpha| = k.

    Plain summation satisfies sum_k C(n,k) * sum(slice_k) = plain_sum(f)
    minus the constant term.
    """
    count = math.comb(f.n, k)
    acc = {}
    for (alpha, tup), v in f.entries.items():
        if alpha.card == k:
            acc[tup] = acc.get(tup, 0) + v
    return {tup: total / count for tup, total in acc.items()}


def is_symmetric(f: CoefficientFamily) -> bool:
    """Exact check: every orbit under tuple permutation carries one value."""
    seen = {}
    for (alpha, tup), v in f.entries.items():
        key = (alpha, tuple(sorted(tup)))
        seen.setdefault(key, []).append((tup, v))
    for (alpha, sorted_tup), members in seen.items():
        k = len(sorted_tup)
        if len(members) != math.factorial(k):
            return False
        ref = members[0][1]
        if any(not np.array_equal(v, ref) for _, v in members[1:]):
            return False
    return True


def is_tetrahedral(f: CoefficientFamily) -> bool:
    """Support restricted to main slot sets [1, k] with increasing tuples."""
    for (alpha, tup), _ in f.entries.items():
        if alpha.bits != (1 << alpha.card) - 1:
            return False
        if any(a >= b for a, b in zip(tup, tup[1:])):
            return False
    return True


@dataclass(frozen=True)
class HomogeneousSlice:
    """Degree-k coefficient table: off-diagonal tuples of length k -> R^d."""

    k: int
    N: int
    d: int
    table: dict = field(hash=False)

    def __post_init__(self):
        clean = {}
        for tup, v in self.table.items():
            tup = tuple(int(i) for i in tup)
            if len(tup) != self.k:
                raise ValueError(f"tuple {tup} has length != {self.k}")
            if not is_off_diagonal(tup):
                raise ValueError(f"diagonal tuple {tup} rejected")
            if any(not 1 <= i <= self.N for i in tup):
                raise ValueError(f"tuple {tup} outside [1, {self.N}]")
            vec = _as_vector(v, self.d)
            if np.any(vec != 0.0):
                vec.flags.writeable = False
                clean[tup] = vec
        object.__setattr__(self, "table", dict(sorted(clean.items())))

    def is_tetrahedral(self):
        return all(
            all(a < b for a, b in zip(t, t[1:])) for t in self.table
        )

    def is_symmetric(self):
        orbits = {}
        for tup, v in self.table.items():
            orbits.setdefault(tuple(sorted(tup)), []).append(v)
        return all(
            len(vs) == math.factorial(self.k)
            and all(np.array_equal(v, vs[0]) for v in vs[1:])
            for vs in orbits.values()
        )

    def symmetrized(self):
        orbit_sums = {}
        for tup, v in self.table.items():
            key = tuple(sorted(tup))
            orbit_sums[key] = orbit_sums.get(key, 0) + v
        table = {}
        for key, total in orbit_sums.items():
            mean = total / math.factorial(self.k)
            for perm in itertools.permutations(key):
                table[perm] = mean
        return HomogeneousSlice(self.k, self.N, self.d, table)

    def as_family(self, n=None):
        """Embed on the main slot set [1, k] of an n-slot family."""
        n = self.k if n is None else n
        alpha = MultiIndex.full(self.k, n)
        return CoefficientFamily(
            n, self.N, self.d, {(alpha, t): v for t, v in self.table.items()}
        )
