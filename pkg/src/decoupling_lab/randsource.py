"""Distribution specs, samplers, and coupled/decoupled sample matrices.

Every law here is symmetric about zero.  Streams come from counter-based
Philox generators keyed by (master seed, substream key), so decoupled rows
are reproducible independently of sampling order and identical inputs give
bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .multiindex import MAX_COORD, MAX_SLOTS, MultiIndex

LOGSQ_SUPPORT_START = np.e  # tail 1/(t ln^2 t) is a probability from t = e on

# starting table for the inversion of m + 2 ln m = y, uniform in y on
# [1, 44] (Philox doubles keep -ln u below ~36.8); one Newton refinement
# from the interpolated start lands far below 1e-12 relative error
_LOGSQ_Y_LO = 1.0
_LOGSQ_Y_HI = 44.0
_LOGSQ_NODES = 1 << 16
_LOGSQ_TABLE_M = None


def _logsq_table():
    global _LOGSQ_TABLE_M
    if _LOGSQ_TABLE_M is None:
        y = np.linspace(_LOGSQ_Y_LO, _LOGSQ_Y_HI, _LOGSQ_NODES)
        m = np.maximum(1.0, y - 2.0 * np.log(np.maximum(y, 1.0)))
        for _ in range(60):
            m = np.maximum(1.0, m - m * (m + 2.0 * np.log(m) - y) / (m + 2.0))
        _LOGSQ_TABLE_M = m
    return _LOGSQ_TABLE_M


@dataclass(frozen=True)
class DistributionSpec:
    """Symmetric law: an atom kind plus parameters, or a product/sum pair."""

    kind: str
    alpha: float | None = None
    shape: int | None = None
    children: tuple = ()

    _ATOMS = ("rademacher", "gaussian", "sas", "sap", "symgamma", "logsq")

    def __post_init__(self):
        if self.kind in ("prod", "sum"):
            if len(self.children) != 2:
                raise ValueError(f"{self.kind} needs exactly two child specs")
            return
        if self.kind not in self._ATOMS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "sas":
            # alpha = 2 is the Gaussian endpoint of the stable family
            if self.alpha is None or not 0 < self.alpha <= 2:
                raise ValueError(f"stable index {self.alpha} outside (0, 2]")
        if self.kind == "sap":
            if self.alpha is None or not 0 < self.alpha < 2:
                raise ValueError(f"Pareto index {self.alpha} outside (0, 2)")
        if self.kind == "symgamma":
            if self.shape is None or self.shape < 1:
                raise ValueError("symmetrized gamma needs integer shape >= 1")

    def __str__(self):
        if self.kind in ("prod", "sum"):
            return f"{self.kind}({self.children[0]},{self.children[1]})"
        if self.kind in ("sas", "sap"):
            return f"{self.kind}:{self.alpha:g}"
        if self.kind == "symgamma":
            return f"symgamma:{self.shape}"
        return self.kind


def parse_spec(text: str) -> DistributionSpec:
    """Parse the textual spec form used in configs.

    Grammar: ``rademacher | gaussian | logsq | sas:A | sap:A | symgamma:M
    | prod(a,b) | sum(a,b)`` with nesting allowed.
    """
    s = text.strip()
    for comb in ("prod", "sum"):
        if s.startswith(comb + "(") and s.endswith(")"):
            inner = s[len(comb) + 1 : -1]
            depth = 0
            for pos, ch in enumerate(inner):
                if ch == "(":
                    depth += 1
                elif ch == ")":
                    depth -= 1
                elif ch == "," and depth == 0:
                    left, right = inner[:pos], inner[pos + 1 :]
                    return DistributionSpec(
                        comb, children=(parse_spec(left), parse_spec(right))
                    )
            raise ValueError(f"malformed combinator spec {text!r}")
    if ":" in s:
        kind, _, arg = s.partition(":")
        kind = kind.strip()
        if kind == "sas" or kind == "sap":
            return DistributionSpec(kind, alpha=float(arg))
        if kind == "symgamma":
            return DistributionSpec(kind, shape=int(arg))
        raise ValueError(f"unknown parametric spec {text!r}")
    if s in ("rademacher", "gaussian", "logsq"):
        return DistributionSpec(s)
    raise ValueError(f"unknown distribution spec {text!r}")


def substream(master_seed: int, *key) -> np.random.Generator:
    """Philox generator for (master seed, key); independent across keys."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _sample_logsq_mag(u):
    """Invert the tail t -> 1/(t ln^2 t) on [e, inf), to 1e-12 relative.

    Mass 1 - 1/e sits in an atom at zero, so the tail is a full CDF.  In
    m = ln t the equation reads m + 2 ln m = -ln u with m >= 1; Newton
    iteration on this increasing concave function converges from
    m0 = max(1, y - 2 ln max(1, y)) in a handful of steps.
    """
    out = np.zeros_like(u)
    hot = u < 1.0 / np.e
    if not np.any(hot):
        return out
    uh = u[hot]
    y = np.log(uh)
    np.negative(y, out=y)
    table = _logsq_table()
    step = (_LOGSQ_NODES - 1) / (_LOGSQ_Y_HI - _LOGSQ_Y_LO)
    pos = (y - _LOGSQ_Y_LO) * step
    idx = pos.astype(np.int64)
    np.clip(idx, 0, _LOGSQ_NODES - 2, out=idx)
    frac = pos - idx
    m = table[idx]
    m += frac * (table[idx + 1] - table[idx])
    # one Newton step: m -= m (m + 2 ln m - y) / (m + 2), in place
    r = np.log(m)
    r *= 2.0
    r += m
    r -= y
    r *= m
    r /= m + 2.0
    m -= r
    np.maximum(m, 1.0, out=m)
    # t = e^m satisfies t (ln t)^2 = 1/u exactly, so read t off as 1/(u m^2)
    m *= m
    m *= uh
    np.reciprocal(m, out=m)
    out[hot] = m
    return out


def _sample(spec: DistributionSpec, size, rng: np.random.Generator):
    if spec.kind == "rademacher":
        return rng.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0
    if spec.kind == "gaussian":
        return rng.standard_normal(size)
    if spec.kind == "sas":
        # Chambers-Mallows-Stuck, symmetric case: exact in distribution
        a = spec.alpha
        u = rng.uniform(-np.pi / 2, np.pi / 2, size=size)
        w = rng.standard_exponential(size)
        x = np.sin(a * u) / np.cos(u) ** (1.0 / a)
        if a != 1.0:
            x = x * (np.cos((1.0 - a) * u) / w) ** ((1.0 - a) / a)
        return x
    if spec.kind == "sap":
        # exact inverse of the tail P(|Y| > t) = t^{-alpha}, t >= 1;
        # one uniform on (-1, 1) carries both the sign and the magnitude
        w = rng.uniform(-1.0, 1.0, size=size)
        return np.sign(w) * np.abs(w) ** (-1.0 / spec.alpha)
    if spec.kind == "symgamma":
        signs = rng.integers(0, 2, size=size) * 2 - 1
        return signs * rng.standard_gamma(spec.shape, size=size)
    if spec.kind == "logsq":
        w = rng.uniform(-1.0, 1.0, size=size)
        return np.copysign(_sample_logsq_mag(np.abs(w)), w)
    if spec.kind == "prod":
        return _sample(spec.children[0], size, rng) * _sample(
            spec.children[1], size, rng
        )
    if spec.kind == "sum":
        return _sample(spec.children[0], size, rng) + _sample(
            spec.children[1], size, rng
        )
    raise ValueError(f"unhandled spec kind {spec.kind!r}")


def sample_sequence(spec, N, rng):
    """N i.i.d. draws; ``rng`` is a Generator or a (seed, *key) tuple."""
    if not isinstance(rng, np.random.Generator):
        rng = substream(*rng) if isinstance(rng, tuple) else substream(rng)
    return _sample(spec, int(N), rng)


def sample_batch(spec, shape, rng):
    if not isinstance(rng, np.random.Generator):
        rng = substream(*rng) if isinstance(rng, tuple) else substream(rng)
    return _sample(spec, tuple(int(s) for s in shape), rng)


@dataclass(frozen=True)
class SampleMatrix:
    """n x N sample: identical rows (coupled) or independent rows (decoupled)."""

    values: np.ndarray
    mode: str
    provenance: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        v.flags.writeable = False
        if self.mode not in ("coupled", "decoupled"):
            raise ValueError(f"mode {self.mode!r} not coupled/decoupled")
        if v.ndim != 2:
            raise ValueError("sample matrix must be 2-d")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def N(self):
        return self.values.shape[1]

    def row(self, i):
        return self.values[i]


def sample_matrix(spec, n, N, mode, master_seed, key=()) -> SampleMatrix:
    """Sample an n x N matrix.

    Coupled mode draws one row from the row-0 substream and repeats it;
    decoupled mode draws each row from its own substream, so row r is the
    same sequence whichever rows accompany it.
    """
    if not 1 <= n <= MAX_SLOTS:
        raise ValueError(f"row count {n} outside [1, {MAX_SLOTS}]")
    if not 1 <= N <= MAX_COORD:
        raise ValueError(f"column count {N} outside [1, {MAX_COORD}]")
    base = tuple(key)
    if mode == "coupled":
        row = sample_sequence(spec, N, substream(master_seed, *base, 0))
        values = np.broadcast_to(row, (n, N)).copy()
    elif mode == "decoupled":
        values = np.stack(
            [
                sample_sequence(spec, N, substream(master_seed, *base, r))
                for r in range(n)
            ]
        )
    else:
        raise ValueError(f"mode {mode!r} not coupled/decoupled")
    prov = {"spec": str(spec), "seed": int(master_seed), "key": list(base)}
    return SampleMatrix(values, mode, prov)


def randomize_signs(matrix: SampleMatrix, rng) -> SampleMatrix:
    """Multiply entrywise by an independent Rademacher matrix."""
    if not isinstance(rng, np.random.Generator):
        rng = substream(*rng) if isinstance(rng, tuple) else substream(rng)
    signs = rng.integers(0, 2, size=matrix.values.shape) * 2 - 1
    prov = dict(matrix.provenance)
    prov["sign_randomized"] = True
    return SampleMatrix(matrix.values * signs, matrix.mode, prov)


def walsh(alpha: MultiIndex, beta: MultiIndex) -> int:
    """Character value (-1)^{|alpha intersect beta|}."""
    if alpha.n != beta.n:
        raise ValueError("multi-index slot counts differ")
    return -1 if (alpha.bits & beta.bits).bit_count() & 1 else 1


def ecf(samples, t_grid):
    """Empirical characteristic function, real part: mean of cos(t x)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty sample")
    t = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    return np.array([np.mean(np.cos(ti * x)) for ti in t])


def sas_cf(alpha, t_grid):
    """Target characteristic function exp(-|t|^alpha) of the stable law."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=np.float64))
    return np.exp(-np.abs(t) ** alpha)
