"""Finite-dimensional norm targets, phi-functionals, and closed-form constants."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Lp:
    """R^dim with the l^p norm; p = inf is the exact max norm."""

    p: float
    dim: int

    def __post_init__(self):
        if not (self.p >= 1):
            raise ValueError(f"norm exponent {self.p} < 1")
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")

    def norm(self, x):
        return float(self.norm_batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    def norm_batch(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.shape[-1] != self.dim:
            raise ValueError(f"vector dimension {xs.shape[-1]} != {self.dim}")
        a = np.abs(xs)
        if np.isinf(self.p):
            return a.max(axis=-1)
        if self.p == 1:
            return a.sum(axis=-1)
        if self.p == 2:
            return np.sqrt((a * a).sum(axis=-1))
        return (a**self.p).sum(axis=-1) ** (1.0 / self.p)

    def __str__(self):
        if np.isinf(self.p):
            return f"linf:{self.dim}"
        return f"lp:{self.p:g}:{self.dim}"


@dataclass(frozen=True)
class DirectSum:
    """(left (+) right) with norm (|.|_left^s + |.|_right^s)^(1/s)."""

    left: "Lp | DirectSum"
    right: "Lp | DirectSum"
    s: float

    def __post_init__(self):
        if not (self.s >= 1):
            raise ValueError(f"direct-sum exponent {self.s} < 1")

    @property
    def dim(self):
        return self.left.dim + self.right.dim

    def norm(self, x):
        return float(self.norm_batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    def norm_batch(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        if xs.shape[-1] != self.dim:
            raise ValueError(f"vector dimension {xs.shape[-1]} != {self.dim}")
        cut = self.left.dim
        a = self.left.norm_batch(xs[..., :cut])
        b = self.right.norm_batch(xs[..., cut:])
        if np.isinf(self.s):
            return np.maximum(a, b)
        return (a**self.s + b**self.s) ** (1.0 / self.s)

    def __str__(self):
        return f"dsum({self.left}, {self.right}; s={self.s:g})"


def parse_norm_target(text: str):
    """Parse "lp:P:D", "linf:D", "l1:D", or "dsum(a, b; s=S)" forms."""
    s = text.strip()
    if s.startswith("dsum(") and s.endswith(")"):
        inner = s[5:-1]
        body, _, tail = inner.rpartition(";")
        if not body or "s=" not in tail:
            raise ValueError(f"malformed direct sum {text!r}")
        sval = float(tail.strip().removeprefix("s="))
        depth = 0
        for pos, ch in enumerate(body):
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            elif ch == "," and depth == 0:
                return DirectSum(
                    parse_norm_target(body[:pos]),
                    parse_norm_target(body[pos + 1 :]),
                    sval,
                )
        raise ValueError(f"malformed direct sum {text!r}")
    parts = s.split(":")
    if parts[0] == "lp" and len(parts) == 3:
        return Lp(float(parts[1]), int(parts[2]))
    if parts[0] == "linf" and len(parts) == 2:
        return Lp(np.inf, int(parts[1]))
    if parts[0] == "l1" and len(parts) == 2:
        return Lp(1.0, int(parts[1]))
    raise ValueError(f"unknown norm target {text!r}")


@dataclass(frozen=True)
class Power:
    """phi(t) = t^p, p > 0."""

    p: float

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("power exponent must be positive")

    def __call__(self, t):
        return np.asarray(t, dtype=np.float64) ** self.p

    @property
    def convexity_exponent(self):
        """Smallest a with phi^a convex: t^(pa) is convex iff pa >= 1."""
        return 1.0 / self.p

    def __str__(self):
        return f"pow:{self.p:g}"


@dataclass(frozen=True)
class OrliczTable:
    """phi sampled on a grid with monotone linear interpolation.

    The convexity exponent a0 is a declared attribute, not inferred; the
    constructor only spot-checks that phi^a is midpoint-convex on the grid
    for a slightly above a0.
    """

    grid: tuple
    values: tuple
    a0: float

    def __post_init__(self):
        t = np.asarray(self.grid, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if t.shape != v.shape or t.ndim != 1 or t.size < 2:
            raise ValueError("grid and values must be equal-length 1-d arrays")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(v) < 0) or np.any(v < 0):
            raise ValueError("grid must increase and values be nondecreasing >= 0")
        if t[0] <= 0:
            raise ValueError("grid starts at a positive abscissa; phi(0) = 0 is implied")
        object.__setattr__(self, "grid", tuple(t.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))
        if self.a0 < 1:
            a = min(1.0, self.a0 * 1.05)
            w = v**a
            mid = 0.5 * (w[:-2] + w[2:])
            interp = np.interp(0.5 * (t[:-2] + t[2:]), t, w)
            if np.any(mid + 1e-9 < interp):
                raise ValueError("declared convexity exponent fails on the grid")

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        grid = np.concatenate(([0.0], np.asarray(self.grid)))
        vals = np.concatenate(([0.0], np.asarray(self.values)))
        out = np.interp(t, grid, vals)
        # linear continuation of the last segment beyond the grid
        slope = (vals[-1] - vals[-2]) / (grid[-1] - grid[-2])
        hi = t > grid[-1]
        if np.any(hi):
            out = np.where(hi, vals[-1] + slope * (t - grid[-1]), out)
        return out

    @property
    def convexity_exponent(self):
        return self.a0

    def __str__(self):
        return f"orlicz-table:a0={self.a0:g}"


def parse_phi(text: str):
    s = text.strip()
    if s.startswith("pow:"):
        return Power(float(s[4:]))
    raise ValueError(f"unknown phi spec {text!r}")


def hyper_constant(p, q):
    """Rademacher/Gaussian hypercontraction constant sqrt((p-1)/(q-1))."""
    if not 1 < q <= p < math.inf:
        raise ValueError(f"need 1 < q <= p < inf, got p={p}, q={q}")
    return math.sqrt((p - 1.0) / (q - 1.0))


def strong_convexity_constant(phi):
    """Martingale-domination constant (1 - a0)^(-1/a0) of a strongly convex phi."""
    a0 = phi.convexity_exponent
    if a0 >= 1:
        raise ValueError(f"convexity exponent a0 = {a0} >= 1: constant is infinite")
    if a0 <= 0:
        raise ValueError("convexity exponent must be positive")
    return (1.0 - a0) ** (-1.0 / a0)


def lower_multiplier(k, c):
    """Degree-k coupled-side multiplier (2ck)^k / k!; equals 1 at k = 0."""
    if k < 0:
        raise ValueError("degree must be >= 0")
    return (2.0 * c * k) ** k / math.factorial(k) if k else 1.0


def lattice_pmoment(vectors, p):
    """Coordinatewise (sum_i |x_i|^p)^(1/p) over a list of equal-length vectors."""
    arr = np.abs(np.asarray(vectors, dtype=np.float64))
    if arr.ndim != 2:
        raise ValueError("expected a list of equal-dimension vectors")
    if np.isinf(p):
        return arr.max(axis=0)
    return (arr**p).sum(axis=0) ** (1.0 / p)


def luxemburg_norm(sample_of_norms, phi, rel_tol=1e-9):
    """Homogenize an empirical modular: the root lam of mean phi(v/lam) = 1.

    Bisection against a doubling bracket; an all-zero sample gives 0.  For
    phi = Power(p) this is the empirical L^p norm.
    """
    v = np.abs(np.asarray(sample_of_norms, dtype=np.float64))
    if v.size == 0:
        raise ValueError("empty sample")
    if not np.any(v > 0):
        return 0.0

    def modular(lam):
        return float(np.mean(phi(v / lam)))

    hi = float(v.max())
    while modular(hi) > 1.0:
        hi *= 2.0
    lo = hi
    while modular(lo) <= 1.0:
        lo /= 2.0
        if lo < 1e-300:
            return 0.0
    # modular is decreasing in lam: modular(lo) > 1 >= modular(hi)
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if modular(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
