"""One probe per inequality: paired estimates, verdict, parameter record.

Each probe is a pure function of its arguments plus the McConfig; the two
sides of an inequality always use independent substreams (the coupled and
decoupled sides live on different probability structures), both rooted in
the one master seed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..banach import Lp, Power, lower_multiplier, strong_convexity_constant
from ..chaos import WalshPolynomial, exact_modular_poly, walsh_expand
from ..multiindex import CoefficientFamily, HomogeneousSlice, MultiIndex
from ..randsource import DistributionSpec, sample_batch, substream
from .engine import (
    CONSISTENT,
    INCONCLUSIVE,
    VIOLATED,
    Estimate,
    McConfig,
    ProbeReport,
    draw_rows,
    estimate_from_samples,
    eval_family_batch,
    exact_estimate,
    mc_estimate,
    mc_modular,
    paired_verdict,
)
from .integrals import compute_a_constant, linf2_excess_curve, moment_floor_margins

QUANTILE_LEVELS = (0.9, 0.99, 0.999)


def spec_is_integrable(spec: DistributionSpec) -> bool:
    """False when any stable/Pareto atom has index <= 1 (no first moment)."""
    if spec.kind in ("sas", "sap"):
        return spec.alpha > 1
    if spec.kind in ("prod", "sum"):
        return all(spec_is_integrable(c) for c in spec.children)
    return True


# -- deterministic default inputs --------------------------------------------


def random_symmetric_slice(k, N, d, rng, density=1.0) -> HomogeneousSlice:
    table = {}
    for comb in itertools.combinations(range(1, N + 1), k):
        if rng.random() <= density:
            v = rng.normal(size=d)
            for perm in itertools.permutations(comb):
                table[perm] = v
    return HomogeneousSlice(k, N, d, table)


def random_tetrahedral_slice(k, N, d, rng, density=1.0) -> HomogeneousSlice:
    table = {
        comb: rng.normal(size=d)
        for comb in itertools.combinations(range(1, N + 1), k)
        if rng.random() <= density
    }
    return HomogeneousSlice(k, N, d, table)


def default_slices(degrees, N, d, seed, kind="symmetric"):
    """Seeded slice set on the main slot sets, plus a degree-0 constant."""
    rng = substream(seed, 9001)
    maker = random_symmetric_slice if kind == "symmetric" else random_tetrahedral_slice
    empty = rng.normal(size=d) if 0 in degrees else np.zeros(d)
    slices = {k: maker(k, N, d, rng) for k in sorted(degrees) if k > 0}
    return slices, empty


def default_family(degrees, n, N, d, seed, kind="symmetric") -> CoefficientFamily:
    """Seeded family spread over every slot set of the requested degrees."""
    rng = substream(seed, 9002)
    entries = {}
    for k in sorted(degrees):
        if k == 0:
            continue
        for slots in itertools.combinations(range(1, n + 1), k):
            alpha = MultiIndex.from_slots(slots, n)
            if kind == "symmetric":
                for comb in itertools.combinations(range(1, N + 1), k):
                    v = rng.normal(size=d)
                    for perm in itertools.permutations(comb):
                        entries[(alpha, perm)] = v
            else:
                for comb in itertools.combinations(range(1, N + 1), k):
                    entries[(alpha, comb)] = rng.normal(size=d)
    empty = rng.normal(size=d) if 0 in degrees else np.zeros(d)
    return CoefficientFamily(n, N, d, entries, empty)


def default_vectors(count, target, seed):
    rng = substream(seed, 9003)
    x = rng.normal(size=target.dim)
    xs = rng.normal(size=(count, target.dim))
    return x, xs


# -- batched slice evaluation --------------------------------------------------


def eval_slices_batch(slices, empty_term, rows, degree_weights=None, multipliers=None):
    """sum_k m_k w_k <f_k rows^k> per replicate; rows (n, m, N) -> (m, d)."""
    m = rows.shape[1]
    d = empty_term.shape[0]
    vals = np.zeros((m, d))
    w0 = degree_weights[:, 0] if degree_weights is not None else 1.0
    vals += np.multiply.outer(np.broadcast_to(w0, (m,)), empty_term)
    for k, fk in sorted(slices.items()):
        acc = np.zeros((m, d))
        for tup, v in fk.table.items():
            prod = np.ones(m)
            for j, coord in enumerate(tup):
                prod = prod * rows[j][:, coord - 1]
            acc += prod[:, None] * v
        if degree_weights is not None:
            acc = acc * degree_weights[:, k][:, None]
        if multipliers is not None:
            acc = acc * multipliers[k]
        vals += acc
    return vals


def _walsh_degree_weights(size, kmax, rng):
    """w_k as running products of a fresh Rademacher sequence, w_0 = 1."""
    eps = rng.integers(0, 2, size=(size, kmax)) * 2.0 - 1.0
    w = np.ones((size, kmax + 1))
    w[:, 1:] = np.cumprod(eps, axis=1)
    return w


# -- probes --------------------------------------------------------------------


def probe_lower_decoupling(
    slices,
    empty_term,
    spec,
    phi,
    target,
    cfg: McConfig,
    use_walsh=False,
    multipliers="strong-convexity",
    scan_grid=None,
):
    """Decoupled mixed chaos against the coupled one with degree multipliers.

    ``multipliers="strong-convexity"`` uses (2 c k)^k / k! with c derived
    from phi; ``"exponential-scan"`` scans c_k = d^k over a geometric grid
    and reports the smallest consistent d.
    """
    kmax = max(slices) if slices else 0
    N = max((fk.N for fk in slices.values()), default=1)
    empty_term = np.asarray(empty_term, dtype=np.float64)

    def side(mode, key, mults):
        def batch(b, size):
            rows = draw_rows(spec, max(kmax, 1), N, mode, cfg.seed, key, b, size)
            if use_walsh:
                w = _walsh_degree_weights(
                    size, max(kmax, 1), substream(cfg.seed, *key, 77, b)
                )
            else:
                w = None
            vals = eval_slices_batch(slices, empty_term, rows, w, mults)
            return phi(target.norm_batch(vals))

        return mc_estimate(batch, cfg)

    lhs = side("decoupled", (11,), None)
    params = {
        "spec": str(spec),
        "phi": str(phi),
        "target": str(target),
        "degrees": sorted([0] + list(slices)) if np.any(empty_term) else sorted(slices),
        "use_walsh": bool(use_walsh),
        "multipliers": multipliers,
    }
    if multipliers == "strong-convexity":
        c = strong_convexity_constant(phi)
        h = {k: lower_multiplier(k, c) for k in slices}
        rhs = side("coupled", (12,), h)
        verdict = paired_verdict(lhs, rhs, cfg.z)
        params.update(
            {"c_phi": c, "h": {str(k): h[k] for k in sorted(h)}}
        )
        # empirically smallest consistent exponential multiplier, reported
        # alongside the proved (not tight) constant chain
        scan = scan_grid or [2.0 ** (j / 4.0) for j in range(0, 17)]
        smallest = None
        for j, dval in enumerate(scan):
            mults = {k: dval**k for k in slices}
            rhs_d = side("coupled", (13, j), mults)
            if paired_verdict(lhs, rhs_d, cfg.z) == CONSISTENT:
                smallest = dval
                break
        params["smallest_consistent_base"] = smallest
    elif multipliers == "exponential-scan":
        scan = scan_grid or [2.0 ** (j / 4.0) for j in range(0, 17)]
        smallest, rhs = None, None
        scan_rows = []
        for j, dval in enumerate(scan):
            mults = {k: dval**k for k in slices}
            rhs_d = side("coupled", (13, j), mults)
            v = paired_verdict(lhs, rhs_d, cfg.z)
            margin = rhs_d.upper(cfg.z) - lhs.lower(cfg.z)
            scan_rows.append(
                {"d": dval, "rhs_mean": rhs_d.mean, "ci_margin": margin, "verdict": v}
            )
            if v == CONSISTENT and smallest is None:
                smallest, rhs = dval, rhs_d
        if rhs is None:
            rhs = Estimate(math.nan, math.nan, cfg.replicates)
        verdict = CONSISTENT if smallest is not None else INCONCLUSIVE
        params.update({"scan": scan_rows, "smallest_consistent_base": smallest})
    else:
        raise ValueError(f"unknown multiplier mode {multipliers!r}")
    return [
        ProbeReport(
            probe="lower-decoupling",
            tag="decoupled-dominated-by-coupled",
            lhs=lhs,
            rhs=rhs,
            verdict=verdict,
            expected=CONSISTENT,
            seed=cfg.seed,
            replicates=cfg.replicates,
            params=params,
        )
    ]


def probe_symmetrization(f: CoefficientFamily, spec, phi, target, cfg: McConfig):
    """Centering, difference, and coupled-difference comparisons (1x, 2x, 4x)."""
    if not spec_is_integrable(spec):
        raise ValueError("mean-centering variant needs an integrable law")

    def diff_rows(mode, key, b, size):
        a = draw_rows(spec, f.n, f.N, mode, cfg.seed, (*key, 0), b, size)
        bb = draw_rows(spec, f.n, f.N, mode, cfg.seed, (*key, 1), b, size)
        return a - bb

    def modular(rows_fn, key, scale=1.0, walsh=False):
        def batch(b, size):
            rows = rows_fn(b, size) * scale
            if walsh:
                delta = substream(cfg.seed, *key, 78, b).integers(
                    0, 2, size=(size, f.n)
                ) * 2.0 - 1.0

                def weights(alpha):
                    w = np.ones(rows.shape[1])
                    for slot in alpha.slots():
                        w = w * delta[:, slot - 1]
                    return w

                vals = eval_family_batch(f, rows, weights)
            else:
                vals = eval_family_batch(f, rows)
            return phi(target.norm_batch(vals))

        return mc_estimate(batch, cfg)

    base = {
        "spec": str(spec),
        "phi": str(phi),
        "target": str(target),
    }
    reports = []
    # all supported laws are symmetric, so the centered matrix is the matrix
    lhs1 = mc_modular(f, spec, "decoupled", phi, target, cfg, key=(21,))
    rhs1 = modular(lambda b, s: diff_rows("decoupled", (22,), b, s), (22,))
    reports.append(
        ProbeReport(
            "symmetrization-centering",
            "centered-below-symmetrized-difference",
            lhs1,
            rhs1,
            paired_verdict(lhs1, rhs1, cfg.z),
            CONSISTENT,
            cfg.seed,
            cfg.replicates,
            dict(base, factor=1),
        )
    )
    lhs2 = modular(lambda b, s: diff_rows("decoupled", (23,), b, s), (23,))
    rhs2 = modular(
        lambda b, s: draw_rows(spec, f.n, f.N, "decoupled", cfg.seed, (24,), b, s),
        (24,),
        scale=2.0,
        walsh=True,
    )
    reports.append(
        ProbeReport(
            "symmetrization-difference",
            "difference-below-sign-weighted-double",
            lhs2,
            rhs2,
            paired_verdict(lhs2, rhs2, cfg.z),
            CONSISTENT,
            cfg.seed,
            cfg.replicates,
            dict(base, factor=2),
        )
    )
    lhs3 = modular(lambda b, s: diff_rows("coupled", (25,), b, s), (25,))
    rhs3 = modular(
        lambda b, s: draw_rows(spec, f.n, f.N, "coupled", cfg.seed, (26,), b, s),
        (26,),
        scale=4.0,
        walsh=True,
    )
    reports.append(
        ProbeReport(
            "symmetrization-coupled",
            "coupled-difference-below-sign-weighted-quadruple",
            lhs3,
            rhs3,
            paired_verdict(lhs3, rhs3, cfg.z),
            CONSISTENT,
            cfg.seed,
            cfg.replicates,
            dict(base, factor=4),
        )
    )
    return reports


def _scaled_family(f: CoefficientFamily, factor_per_degree) -> CoefficientFamily:
    entries = {
        key: v * factor_per_degree(key[0].card) for key, v in f.entries.items()
    }
    return CoefficientFamily(f.n, f.N, f.d, entries, f.empty_term)


def _entrywise_family(f: CoefficientFamily, g_factors) -> CoefficientFamily:
    """Multiply each entry by the product of its per-slot factor values."""
    entries = {}
    for (alpha, tup), v in f.entries.items():
        w = 1.0
        for slot, coord in zip(alpha.slots(), tup):
            w *= g_factors[slot - 1][coord - 1]
        entries[(alpha, tup)] = v * w
    return CoefficientFamily(f.n, f.N, f.d, entries, f.empty_term)


def probe_contraction(f, g_factors, spec, phi, target, cfg: McConfig, mode="coupled"):
    """Entrywise product-form multipliers against the uniform bound c.

    ``g_factors`` is an (n, N) array of per-slot factor values; the
    comparison side scales the matrix by c = max |g|.  Rademacher inputs are
    evaluated by exact enumeration, everything else by Monte Carlo.
    """
    g = np.asarray(g_factors, dtype=np.float64)
    if g.shape != (f.n, f.N):
        raise ValueError("factors must be given per slot and coordinate")
    c = float(np.max(np.abs(g))) if g.size else 0.0
    fg = _entrywise_family(f, g)
    fc = _scaled_family(f, lambda k: c**k)
    params = {
        "spec": str(spec),
        "phi": str(phi),
        "target": str(target),
        "mode": mode,
        "c": c,
        "route": "exact" if spec.kind == "rademacher" else "mc",
    }
    if spec.kind == "rademacher":
        lhs_poly = walsh_expand(fg, mode)
        rhs_poly = walsh_expand(fc, mode)
        lhs = exact_estimate(exact_modular_poly(lhs_poly, phi, target))
        rhs = exact_estimate(exact_modular_poly(rhs_poly, phi, target))
        verdict = CONSISTENT if lhs.mean <= rhs.mean + 1e-12 else VIOLATED
    else:
        lhs = mc_modular(fg, spec, mode, phi, target, cfg, key=(31,))
        rhs = mc_modular(fc, spec, mode, phi, target, cfg, key=(32,))
        verdict = paired_verdict(lhs, rhs, cfg.z)
    return [
        ProbeReport(
            "contraction",
            "product-form-multipliers-below-uniform-bound",
            lhs,
            rhs,
            verdict,
            CONSISTENT,
            cfg.seed,
            cfg.replicates,
            params,
        )
    ]


def probe_tail_comparison(f: CoefficientFamily, alpha, cfg: McConfig, target=None):
    """Quantile sandwich between the stable and Pareto chaos of one family."""
    if not 0 < alpha < 2:
        raise ValueError(f"stable index {alpha} outside (0, 2)")
    target = target or Lp(2.0, f.d)
    spec_x = DistributionSpec("sas", alpha=alpha)
    spec_y = DistributionSpec("sap", alpha=alpha)

    def collect(spec, key):
        out = []
        count, b = 0, 0
        while count < cfg.replicates:
            size = min(cfg.batch_size, cfg.replicates - count)
            rows = draw_rows(spec, f.n, f.N, "coupled", cfg.seed, key, b, size)
            out.append(target.norm_batch(eval_family_batch(f, rows)))
            count += size
            b += 1
        return np.concatenate(out)

    xs = collect(spec_x, (41,))
    ys = collect(spec_y, (42,))
    quantiles = {}
    k_worst = 1.0
    for level in QUANTILE_LEVELS:
        qx = float(np.quantile(xs, level))
        qy = float(np.quantile(ys, level))
        ratio = qx / qy if qy > 0 else math.inf
        quantiles[f"{level:g}"] = {"stable": qx, "pareto": qy, "ratio": ratio}
        k_worst = max(k_worst, ratio, 1.0 / ratio if ratio > 0 else math.inf)
    lhs = estimate_from_samples(xs)
    rhs = estimate_from_samples(ys)
    verdict = CONSISTENT if math.isfinite(k_worst) else INCONCLUSIVE
    return [
        ProbeReport(
            "tail-comparison",
            "stable-vs-pareto-quantile-sandwich",
            lhs,
            rhs,
            verdict,
            CONSISTENT,
            cfg.seed,
            cfg.replicates,
            {"alpha": alpha, "levels": quantiles, "K": k_worst},
        )
    ]


def probe_upper_reduction(
    spec, target, phi, cfg: McConfig, count=4, c_grid=None, seed_vectors=None
):
    """One multiplier on a signed sum against independent copies, scanning c."""
    x, xs = default_vectors(
        count, target, cfg.seed if seed_vectors is None else seed_vectors
    )

    def lhs_batch(b, size):
        rng = substream(cfg.seed, 51, b)
        X = sample_batch(spec, (size,), rng)
        eps = substream(cfg.seed, 52, b).integers(0, 2, size=(size, count)) * 2.0 - 1.0
        vals = x[None, :] + X[:, None] * (eps @ xs)
        return phi(target.norm_batch(vals))

    lhs = mc_estimate(lhs_batch, cfg)

    def rhs_for(c, j):
        def batch(b, size):
            Xi = sample_batch(spec, (size, count), substream(cfg.seed, 53, j, b))
            vals = x[None, :] + c * (Xi @ xs)
            return phi(target.norm_batch(vals))

        return mc_estimate(batch, cfg)

    grid = c_grid or [2.0 ** (j / 4.0) for j in range(0, 17)]
    scan_rows, smallest, rhs = [], None, None
    for j, c in enumerate(grid):
        rhs_c = rhs_for(c, j)
        v = paired_verdict(lhs, rhs_c, cfg.z)
        margin = rhs_c.upper(cfg.z) - lhs.lower(cfg.z)
        scan_rows.append(
            {"c": c, "rhs_mean": rhs_c.mean, "ci_margin": margin, "verdict": v}
        )
        if v == CONSISTENT and smallest is None:
            smallest, rhs = c, rhs_c
    if rhs is None:
        rhs = Estimate(math.nan, math.nan, cfg.replicates)
    verdict = CONSISTENT if smallest is not None else INCONCLUSIVE
    return [
        ProbeReport(
            "upper-reduction",
            "one-multiplier-sum-below-independent-sum",
            lhs,
            rhs,
            verdict,
            CONSISTENT,
            cfg.seed,
            cfg.replicates,
            {
                "spec": str(spec),
                "phi": str(phi),
                "target": str(target),
                "vectors": count,
                "scan": scan_rows,
                "smallest_consistent_c": smallest,
            },
        )
    ]


def probe_counterexample_linf2(cfg: McConfig, u_grid=None, c=1.0, rate=2.0):
    """Quadrature curve showing where the Gaussian comparison breaks down."""
    u_grid = list(u_grid) if u_grid is not None else [1, 2, 4, 5, 6, 7, 8, 10, 12]
    curve = linf2_excess_curve(u_grid, c=c, rate=rate)
    ratios = [pt["ratio"] for pt in curve]
    inside = [pt for pt in curve if 4.0 <= pt["u"] <= 12.0]
    monotone = all(a["ratio"] < b["ratio"] for a, b in zip(inside, inside[1:]))
    at8 = next((pt for pt in curve if pt["u"] == 8.0), None)
    exceeds = at8 is not None and at8["ratio"] > 10.0
    verdict = VIOLATED if (monotone and exceeds) else INCONCLUSIVE
    last = curve[-1]
    return [
        ProbeReport(
            "counterexample-linf2",
            "sup-norm-exponential-excess-beats-gaussian",
            exact_estimate(last["lhs_excess"]),
            exact_estimate(last["rhs_excess"]),
            verdict,
            VIOLATED,
            cfg.seed,
            cfg.replicates,
            {
                "c": c,
                "rate": rate,
                "curve": curve,
                "monotone_on_4_12": monotone,
                "ratio_at_8": None if at8 is None else at8["ratio"],
            },
        )
    ]


def probe_stable_moment_floor(alpha, s, cfg: McConfig, t_grid=None):
    """Quadrature constant, Monte Carlo cross-estimate, and the floor check.

    The plain Pareto estimator of E((|Y| - 1)^s - 1)_+ has infinite variance
    whenever 2s >= alpha, so the MC route integrates over u = v^q with
    q = alpha/(alpha - s): same mean, bounded integrand.
    """
    a_quad = compute_a_constant(alpha, s)
    q = alpha / (alpha - s)

    def batch(b, size):
        v = substream(cfg.seed, 61, b).uniform(0.0, 1.0, size=size)
        y = v ** (-q / alpha)
        g = np.maximum((y - 1.0) ** s - 1.0, 0.0)
        return (alpha / s) * q * v ** (q - 1.0) * g

    a_mc = mc_estimate(batch, cfg)
    t_grid = list(t_grid) if t_grid is not None else [j / 20.0 for j in range(1, 21)]
    margins = moment_floor_margins(alpha, s, t_grid, a=a_quad)
    floor_holds = all(m >= -1e-12 for _, m in margins)
    rel_err = abs(a_mc.mean - a_quad) / a_quad
    verdict = CONSISTENT if floor_holds and math.isfinite(a_mc.mean) else VIOLATED
    return [
        ProbeReport(
            "stable-moment-floor",
            "pareto-lower-moment-growth-floor",
            exact_estimate(a_quad),
            a_mc,
            verdict,
            CONSISTENT,
            cfg.seed,
            cfg.replicates,
            {
                "alpha": alpha,
                "s": s,
                "mc_relative_error": rel_err,
                "margins": [{"t": t, "margin": m} for t, m in margins],
                "floor_holds": floor_holds,
            },
        )
    ]


# -- value-table (non-multiplicative) second-moment identity -------------------


@dataclass(frozen=True)
class ValueTable:
    """Lookup F(i, v) on increasing index tuples and v = +-1, per degree.

    ``kind`` is "symmetric" (value shared by every ordering of a tuple) or
    "tetrahedral" (support is the increasing tuples only).
    """

    N: int
    kind: str
    tables: dict  # degree k -> {increasing tuple: (value at +1, value at -1)}
    constant: float = 0.0

    def __post_init__(self):
        if self.kind not in ("symmetric", "tetrahedral"):
            raise ValueError("kind must be symmetric or tetrahedral")
        for k, tab in self.tables.items():
            for tup in tab:
                if len(tup) != k or any(a >= b for a, b in zip(tup, tup[1:])):
                    raise ValueError(f"tuple {tup} is not increasing of length {k}")
                if max(tup) > self.N:
                    raise ValueError(f"tuple {tup} exceeds window {self.N}")


def _affine_parts(plus, minus):
    # any function of a +-1 value is affine: F(v) = a + b v
    return 0.5 * (plus + minus), 0.5 * (plus - minus)


def value_table_polynomials(F: ValueTable):
    """Coupled and decoupled sign polynomials of the value-table chaos.

    The coupled side sums over all orderings for symmetric tables; the
    decoupled side sums over the increasing tuples with the degree
    multiplier k! (symmetric) or 1 (tetrahedral).
    """
    coupled = WalshPolynomial(1)
    decoupled = WalshPolynomial(1)
    if F.constant:
        coupled.add(frozenset(), np.array([F.constant]))
        decoupled.add(frozenset(), np.array([F.constant]))
    for k, tab in sorted(F.tables.items()):
        ck = math.factorial(k) if F.kind == "symmetric" else 1.0
        for tup, (plus, minus) in sorted(tab.items()):
            a, bcoef = _affine_parts(float(plus), float(minus))
            orderings = (
                itertools.permutations(tup) if F.kind == "symmetric" else (tup,)
            )
            for perm in orderings:
                coupled.add(frozenset(), np.array([a]))
                coupled.add(frozenset(perm), np.array([bcoef]))
            decoupled.add(frozenset(), np.array([ck * a]))
            decoupled.add(
                frozenset((j + 1, c) for j, c in enumerate(tup)),
                np.array([ck * bcoef]),
            )
    return coupled, decoupled


def value_table_second_moments(F: ValueTable):
    """Both second moments by full sign enumeration."""
    coupled, decoupled = value_table_polynomials(F)
    phi, line = Power(2.0), Lp(2.0, 1)
    return (
        exact_modular_poly(coupled, phi, line),
        exact_modular_poly(decoupled, phi, line),
    )


def probe_nonmultiplicative_l2(tables, cfg: McConfig, tol=1e-10):
    """Second-moment identity for value-table chaoses, enumerated exactly."""
    worst = 0.0
    rows = []
    first = None
    for F in tables:
        ec, ed = value_table_second_moments(F)
        dev = abs(ec - ed)
        worst = max(worst, dev)
        rows.append({"kind": F.kind, "coupled": ec, "decoupled": ed, "dev": dev})
        if first is None:
            first = (ec, ed)
    verdict = CONSISTENT if worst <= tol else VIOLATED
    return [
        ProbeReport(
            "nonmultiplicative-l2",
            "value-table-second-moment-identity",
            exact_estimate(first[0] if first else 0.0),
            exact_estimate(first[1] if first else 0.0),
            verdict,
            CONSISTENT,
            cfg.seed,
            cfg.replicates,
            {"cases": rows, "worst_deviation": worst, "tolerance": tol},
        )
    ]


# -- curve probes ---------------------------------------------------------------


def running_sup_curve(spec, n_grid, cfg: McConfig, key=(71,)):
    """Per-replicate max over i <= n of |S_i|/i at the grid checkpoints.

    One stream drives all checkpoints of a replicate, so the per-decade
    increments are paired (nonnegative pathwise) and their standard errors
    are the right yardstick for growth.
    """
    grid = sorted(int(n) for n in n_grid)
    n_max = grid[-1]
    cap = max(1, (1 << 24) // n_max)  # keep a batch under ~128M doubles
    sums = np.zeros(len(grid))
    sqsums = np.zeros(len(grid))
    dsums = np.zeros(max(len(grid) - 1, 0))
    dsq = np.zeros(max(len(grid) - 1, 0))
    inv_idx = 1.0 / np.arange(1.0, n_max + 1.0)
    pick = np.array(grid) - 1
    count, b = 0, 0
    while count < cfg.replicates:
        size = min(cfg.batch_size, cap, cfg.replicates - count)
        r = sample_batch(spec, (size, n_max), substream(cfg.seed, *key, b))
        np.cumsum(r, axis=1, out=r)
        np.abs(r, out=r)
        r *= inv_idx
        np.maximum.accumulate(r, axis=1, out=r)
        checks = r[:, pick]
        sums += checks.sum(axis=0)
        sqsums += (checks * checks).sum(axis=0)
        if len(grid) > 1:
            diffs = np.diff(checks, axis=1)
            dsums += diffs.sum(axis=0)
            dsq += (diffs * diffs).sum(axis=0)
        count += size
        b += 1
    means = sums / count
    var = np.maximum(sqsums - count * means * means, 0.0) / (count - 1)
    ses = np.sqrt(var / count)
    dmeans = dsums / count
    dvar = np.maximum(dsq - count * dmeans * dmeans, 0.0) / (count - 1)
    dses = np.sqrt(dvar / count)
    return grid, means, ses, dmeans, dses, count


def probe_divergence_sup(spec, n_grid, cfg: McConfig):
    """Growth of E max |S_i|/i along the grid; verdict is spec-dependent."""
    if spec.kind not in ("logsq", "gaussian"):
        raise ValueError("divergence probe runs on the logsq or gaussian law")
    grid, means, ses, dmeans, dses, count = running_sup_curve(spec, n_grid, cfg)
    grows = bool(len(dmeans) > 0 and np.all(dmeans > 3.0 * dses))
    flat = bool(np.all(np.abs(dmeans) <= 3.0 * dses)) if len(dmeans) else True
    expected = VIOLATED if spec.kind == "logsq" else CONSISTENT
    verdict = VIOLATED if grows else (CONSISTENT if flat else INCONCLUSIVE)
    curve = [
        {"n": int(n), "mean": float(m), "se": float(s)}
        for n, m, s in zip(grid, means, ses)
    ]
    increments = [
        {"from": int(a), "to": int(b), "mean": float(m), "se": float(s)}
        for a, b, m, s in zip(grid, grid[1:], dmeans, dses)
    ]
    return [
        ProbeReport(
            "divergence-sup",
            "running-average-sup-uniform-bound",
            Estimate(float(means[-1]), float(ses[-1]), count),
            Estimate(float(means[0]), float(ses[0]), count),
            verdict,
            expected,
            cfg.seed,
            cfg.replicates,
            {"spec": str(spec), "curve": curve, "increments": increments},
        )
    ]


def probe_index_average_failure(
    spec, n_grid, cfg: McConfig, target=None, phi=None, count=4, c1=1.0
):
    """Column-averaged coefficients lose mass as the averaging depth grows.

    The fixed side keeps one row; the averaged side replaces each variable
    by the mean of n independent copies.  No single constant c1 can hold
    the fixed side below the averaged side across the whole grid.
    """
    if not spec_is_integrable(spec):
        raise ValueError("index-average probe needs an integrable law")
    target = target or Lp(2.0, 4)
    phi = phi or Power(2.0)
    x, xs = default_vectors(count, target, cfg.seed)

    def fixed_batch(b, size):
        Xi = sample_batch(spec, (size, count), substream(cfg.seed, 81, b))
        vals = x[None, :] + Xi @ xs
        return phi(target.norm_batch(vals))

    lhs = mc_estimate(fixed_batch, cfg)
    grid = sorted(int(n) for n in n_grid)
    curve = []
    rhs = None
    for idx, n in enumerate(grid):
        def avg_batch(b, size, n=n, idx=idx):
            draws = sample_batch(
                spec, (size, n, count), substream(cfg.seed, 82, idx, b)
            )
            vals = x[None, :] + c1 * (draws.mean(axis=1) @ xs)
            return phi(target.norm_batch(vals))

        est = mc_estimate(avg_batch, cfg)
        point = {"n": int(n), "mean": est.mean, "se": est.se}
        if spec.kind == "gaussian" and isinstance(phi, Power) and phi.p == 2.0 \
                and isinstance(target, Lp) and target.p == 2.0:
            exact = float(x @ x + (c1**2 / n) * np.sum(xs * xs))
            point["exact"] = exact
            point["within_3se"] = bool(abs(est.mean - exact) <= 3.0 * est.se)
        curve.append(point)
        rhs = est
    decreasing = all(
        a["mean"] - 3.0 * a["se"] > b["mean"] + 3.0 * b["se"]
        for a, b in zip(curve, curve[1:])
    )
    verdict = VIOLATED if decreasing else INCONCLUSIVE
    return [
        ProbeReport(
            "index-average-failure",
            "no-uniform-constant-for-averaged-coefficients",
            lhs,
            rhs,
            verdict,
            VIOLATED,
            cfg.seed,
            cfg.replicates,
            {
                "spec": str(spec),
                "phi": str(phi),
                "target": str(target),
                "c1": c1,
                "curve": curve,
                "strictly_decreasing": decreasing,
            },
        )
    ]
