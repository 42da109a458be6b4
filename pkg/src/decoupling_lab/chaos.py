"""Chaos evaluation and the exact Walsh-basis oracle for Rademacher signs.

``evaluate`` computes the polynomial sum f_0 + sum over (alpha, tuple) of
coefficient times the matching matrix-entry product.  ``evaluate_sliced``
computes the same value by peeling off the largest coordinate value one at
a time (the off-diagonal support guarantees at most one slot consumes it).

For Rademacher entries the chaos is a signed polynomial in +-1 variables;
``walsh_expand`` produces its exact monomial expansion, ``exact_l2`` reads
off the second moment from orthonormality, and ``exact_modular`` averages
any functional over all sign assignments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .multiindex import (
    CoefficientFamily,
    GuardExceeded,
    HomogeneousSlice,
    MultiIndex,
    symmetrize,
)
from .randsource import SampleMatrix

VARIABLE_CAP = 22  # 2^22 sign assignments stay near a second
POLARIZE_DEGREE_CAP = 8
_ENUM_CHUNK = 1 << 16


def _matrix_values(X):
    return X.values if isinstance(X, SampleMatrix) else np.asarray(X, dtype=np.float64)


def _check_dims(f, values):
    if f.n > values.shape[0] or f.N > values.shape[1]:
        raise ValueError(
            f"family needs {f.n} x {f.N}, matrix is {values.shape[0]} x {values.shape[1]}"
        )


def evaluate(f: CoefficientFamily, X) -> np.ndarray:
    """Exact finite sum over the support, in canonical order.

    Accumulation is compensated (Kahan) so identity tests can assert at
    1e-12 regardless of support size.
    """
    values = _matrix_values(X)
    _check_dims(f, values)
    total = f.empty_term.astype(np.float64).copy()
    comp = np.zeros_like(total)
    for (alpha, tup), v in f.support():
        prod = 1.0
        for slot, coord in zip(alpha.slots(), tup):
            prod *= values[slot - 1, coord - 1]
        term = v * prod
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def evaluate_sliced(f: CoefficientFamily, X) -> np.ndarray:
    """Evaluate by recursive slicing on the largest coordinate value.

    Each entry either avoids the current bound b entirely or spends b on
    exactly one slot (tuples are off-diagonal); stripping that slot leaves a
    lower-degree family bounded by b - 1.
    """
    values = _matrix_values(X)
    _check_dims(f, values)
    entries = [
        (alpha.slots(), tup, v) for (alpha, tup), v in f.support()
    ]

    def rec(items, b):
        total = np.zeros(f.d)
        remaining = []
        for slots, tup, v in items:
            if tup:
                remaining.append((slots, tup, v))
            else:
                total = total + v  # fully stripped entry: empty product is 1
        if not remaining:
            return total
        plain = []
        stripped = {}
        for slots, tup, v in remaining:
            if b in tup:
                j = tup.index(b)
                rest = (slots[:j] + slots[j + 1 :], tup[:j] + tup[j + 1 :], v)
                stripped.setdefault(slots[j], []).append(rest)
            else:
                plain.append((slots, tup, v))
        total = total + rec(plain, b - 1)
        for slot, sub in sorted(stripped.items()):
            total = total + values[slot - 1, b - 1] * rec(sub, b - 1)
        return total

    return f.empty_term + rec(entries, f.N)


def polarize(alpha: MultiIndex, X, window=None):
    """Both sides of the polarization identity per off-diagonal tuple.

    Left: the symmetrized tensor (1/k!) sum over permutations of the slot
    products.  Right: (1/k!) sum over subsets beta of alpha of
    (-1)^(k - |beta|) times the tensor power of the summed beta rows.
    Entries may be vectors (coordinatewise products).  Returns two dicts
    keyed by tuple; the identity is algebraic, so diagonal tuples are
    included as well.
    """
    k = alpha.card
    if k > POLARIZE_DEGREE_CAP:
        raise GuardExceeded(f"degree {k} exceeds polarization cap {POLARIZE_DEGREE_CAP}")
    values = _matrix_values(X)
    W = values.shape[1] if window is None else int(window)
    slots = alpha.slots()

    subset_rows = []
    for r in range(1 << k):
        members = [slots[j] for j in range(k) if r >> j & 1]
        row_sum = np.zeros_like(values[0])
        for s in members:
            row_sum = row_sum + values[s - 1]
        subset_rows.append(((-1.0) ** (k - len(members)), row_sum))

    lhs, rhs = {}, {}
    kfact = math.factorial(k)
    entry_shape = values.shape[2:]
    for tup in itertools.product(range(1, W + 1), repeat=k):
        left = np.zeros(entry_shape)
        for perm in itertools.permutations(range(k)):
            prod = np.ones_like(left)
            for j in range(k):
                prod = prod * values[slots[j] - 1, tup[perm[j]] - 1]
            left = left + prod
        right = np.zeros_like(left)
        for sign, row_sum in subset_rows:
            prod = np.ones_like(left)
            for j in range(k):
                prod = prod * row_sum[tup[j] - 1]
            right = right + sign * prod
        lhs[tup] = left / kfact
        rhs[tup] = right / kfact
    return lhs, rhs


def homogeneous_value(fk: HomogeneousSlice, X) -> np.ndarray:
    """Plain degree-k sum: f_k(i) times the product of row-j entries at i_j.

    On a coupled matrix the identical rows make this the coupled chaos; on a
    decoupled matrix each slot reads its own row.
    """
    values = _matrix_values(X)
    if fk.k > values.shape[0] or fk.N > values.shape[1]:
        raise ValueError("slice does not fit the matrix")
    total = np.zeros(fk.d)
    for tup, v in fk.table.items():
        prod = 1.0
        for j, coord in enumerate(tup):
            prod *= values[j, coord - 1]
        total += v * prod
    return total


def decoupled_homogeneous(fk: HomogeneousSlice, X: SampleMatrix, gamma) -> np.ndarray:
    """Decoupled degree-k chaos with explicit normalization (k!)^gamma.

    Tetrahedral slices already sum over increasing tuples only, so their
    exponent is forced to zero.
    """
    if not isinstance(X, SampleMatrix) or X.mode != "decoupled":
        raise ValueError("decoupled homogeneous chaos needs a decoupled matrix")
    g = 0.0 if fk.is_tetrahedral() else float(gamma)
    return math.factorial(fk.k) ** g * homogeneous_value(fk, X)


@dataclass
class WalshPolynomial:
    """Sparse signed-monomial expansion, one coefficient vector per monomial.

    Monomial keys are frozensets of variable ids: a column index in coupled
    mode, a (row, column) pair in decoupled mode; the empty key is the
    constant term.
    """

    d: int
    terms: dict = field(default_factory=dict)

    def variables(self):
        out = set()
        for key in self.terms:
            out |= key
        return sorted(out)

    @property
    def nvars(self):
        return len(self.variables())

    def add(self, key, value):
        key = frozenset(key)
        cur = self.terms.get(key)
        new = (cur + value) if cur is not None else np.array(value, dtype=np.float64)
        if np.any(new != 0.0):
            self.terms[key] = new
        elif cur is not None:
            del self.terms[key]

    def constant(self):
        return self.terms.get(frozenset(), np.zeros(self.d))

    def evaluate(self, assignment: dict) -> np.ndarray:
        """Value at a +-1 assignment of the variables."""
        total = np.zeros(self.d)
        for key, v in self.terms.items():
            sign = 1.0
            for var in key:
                sign *= assignment[var]
            total += sign * v
        return total


def walsh_expand(f: CoefficientFamily, mode: str, var_cap=VARIABLE_CAP) -> WalshPolynomial:
    """Exact expansion of the chaos as a polynomial in +-1 entries.

    Coupled mode merges the identical rows so a variable is a column;
    repeated columns inside one term cancel in pairs (a no-op on
    off-diagonal supports, kept for safety).  Decoupled mode keys variables
    by (row, column).  ``var_cap`` guards downstream assignment
    enumeration; pass None when only orthonormality sums are wanted.
    """
    poly = WalshPolynomial(f.d)
    if np.any(f.empty_term != 0.0):
        poly.add(frozenset(), f.empty_term)
    for (alpha, tup), v in f.support():
        if mode == "coupled":
            key = set()
            for coord in tup:
                key.symmetric_difference_update({coord})
        elif mode == "decoupled":
            key = set(zip(alpha.slots(), tup))
        else:
            raise ValueError(f"mode {mode!r} not coupled/decoupled")
        poly.add(key, v)
    if var_cap is not None and poly.nvars > var_cap:
        raise GuardExceeded(
            f"{poly.nvars} sign variables exceed enumeration cap {var_cap}"
        )
    return poly


def exact_l2(p: WalshPolynomial) -> float:
    """E of the squared euclidean length: sum of squared coefficients.

    Distinct monomials in independent signs are orthonormal; the constant
    term contributes its own square.
    """
    return float(math.fsum(float(v @ v) for v in p.terms.values()))


def _assignment_values(poly, variables):
    """Yield (count, value-array) chunks over all 2^v sign assignments."""
    v = len(variables)
    index = {var: i for i, var in enumerate(variables)}
    masks = []
    coeffs = []
    const = np.zeros(poly.d)
    for key, vec in poly.terms.items():
        if not key:
            const = const + vec
            continue
        m = 0
        for var in key:
            m |= 1 << index[var]
        masks.append(m)
        coeffs.append(vec)
    total = 1 << v
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        assigns = np.arange(start, stop, dtype=np.uint64)
        vals = np.broadcast_to(const, (stop - start, poly.d)).copy()
        for m, vec in zip(masks, coeffs):
            parity = np.bitwise_count(assigns & np.uint64(m)) & 1
            signs = 1.0 - 2.0 * parity.astype(np.float64)
            vals += signs[:, None] * vec
        yield vals


def exact_modular(f: CoefficientFamily, mode, phi, target) -> float:
    """Exact Rademacher expectation of phi(norm of the chaos).

    Enumerates all sign assignments of the expansion's variables (guarded
    at 22) and averages phi(target-norm) with stable summation.
    """
    poly = walsh_expand(f, mode)
    variables = poly.variables()
    v = len(variables)
    chunk_sums = []
    for vals in _assignment_values(poly, variables):
        norms = target.norm_batch(vals)
        chunk_sums.append(float(np.sum(phi(norms))))
    return math.fsum(chunk_sums) / (1 << v)


def exact_modular_poly(poly: WalshPolynomial, phi, target) -> float:
    """Same enumeration average for a pre-built polynomial."""
    variables = poly.variables()
    if len(variables) > VARIABLE_CAP:
        raise GuardExceeded(
            f"{len(variables)} sign variables exceed enumeration cap {VARIABLE_CAP}"
        )
    chunk_sums = []
    for vals in _assignment_values(poly, variables):
        norms = target.norm_batch(vals)
        chunk_sums.append(float(np.sum(phi(norms))))
    return math.fsum(chunk_sums) / (1 << len(variables))


# -- conditional-expectation identities (exact, Rademacher rows) ------------


def sum_projection_gap(alpha: MultiIndex, beta: MultiIndex, N: int) -> float:
    """Largest deviation in the row-sum projection identity.

    For Rademacher rows, averaging the tensor of the full alpha row sum
    over the signs of the rows outside beta must reproduce the tensor of
    the (alpha intersect beta) row sum, pointwise in the conditioned rows
    and at every off-diagonal tuple.
    """
    slots = alpha.slots()
    k = len(slots)
    if k == 0:
        return 0.0
    cond_rows = [s for s in slots if beta.contains(s)]
    free_rows = [s for s in slots if not beta.contains(s)]
    if (len(cond_rows) + len(free_rows)) * N > VARIABLE_CAP:
        raise GuardExceeded("conditioning enumeration too large")

    tuples = list(itertools.permutations(range(1, N + 1), k))
    worst = 0.0
    for cond_bits in range(1 << (len(cond_rows) * N)):
        rows = {}
        for ri, s in enumerate(cond_rows):
            rows[s] = np.array(
                [1.0 - 2.0 * (cond_bits >> (ri * N + j) & 1) for j in range(N)]
            )
        # conditional side: rows outside beta average to zero
        cond_sum = np.zeros(N)
        for s in cond_rows:
            cond_sum += rows[s]
        nfree = len(free_rows) * N
        full_mean = {tup: 0.0 for tup in tuples}
        for free_bits in range(1 << nfree):
            for ri, s in enumerate(free_rows):
                rows[s] = np.array(
                    [1.0 - 2.0 * (free_bits >> (ri * N + j) & 1) for j in range(N)]
                )
            full_sum = np.zeros(N)
            for s in slots:
                full_sum += rows[s]
            for tup in tuples:
                prod = 1.0
                for coord in tup:
                    prod *= full_sum[coord - 1]
                full_mean[tup] += prod
        scale = 1.0 / (1 << nfree)
        for tup in tuples:
            prod = 1.0
            for coord in tup:
                prod *= cond_sum[coord - 1]
            worst = max(worst, abs(full_mean[tup] * scale - prod))
    return worst


def symmetrization_l2_pair(f: CoefficientFamily):
    """Decoupled second moments of the raw and symmetrized chaos.

    Symmetrizing is an orthogonal-projection step, so the second value
    never exceeds the first, with equality exactly on symmetric input.
    """
    raw = exact_l2(walsh_expand(f, "decoupled"))
    projected = exact_l2(walsh_expand(symmetrize(f), "decoupled"))
    return raw, projected


# -- coupled/decoupled L2 bridging -------------------------------------------


def coupled_decoupled_families(slices, gamma, empty_term=None):
    """Coupled family and (k!)^gamma-scaled decoupled family for given slices.

    ``slices`` maps degree k to a HomogeneousSlice supported on the main
    slot set.  Tetrahedral slices are never scaled.
    """
    if not slices:
        raise ValueError("need at least one homogeneous slice")
    n = max(slices)
    N = max(s.N for s in slices.values())
    d = next(iter(slices.values())).d
    coupled_entries = {}
    scaled_entries = {}
    for k, fk in sorted(slices.items()):
        alpha = MultiIndex.full(k, n)
        mult = 1.0 if fk.is_tetrahedral() else math.factorial(k) ** float(gamma)
        for tup, v in fk.table.items():
            coupled_entries[(alpha, tup)] = v
            scaled_entries[(alpha, tup)] = v * mult
    coupled = CoefficientFamily(n, N, d, coupled_entries, empty_term)
    scaled = CoefficientFamily(n, N, d, scaled_entries, empty_term)
    return coupled, scaled


def pin_decoupling_exponent(slice2: HomogeneousSlice) -> float:
    """Equality-achieving exponent from the enumeration oracle on degree 2.

    Solves exact_modular(coupled) = (2!)^(2 gamma) exact_modular(decoupled)
    in the squared euclidean modular, independently of ``exact_l2``.
    """
    if slice2.k != 2 or slice2.is_tetrahedral():
        raise ValueError("exponent pinning uses a symmetric degree-2 slice")
    from .banach import Lp, Power

    coupled, plain = coupled_decoupled_families({2: slice2}, 0.0)
    target = Lp(2.0, slice2.d)
    phi = Power(2.0)
    e_coupled = exact_modular(coupled, "coupled", phi, target)
    e_plain = exact_modular(plain, "decoupled", phi, target)
    if e_plain <= 0:
        raise ValueError("degenerate slice: zero second moment")
    return math.log(e_coupled / e_plain) / (2.0 * math.log(2.0))
