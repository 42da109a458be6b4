"""Probe registry: names, option schemas, and config-to-probe dispatch.

Every probe name maps to exactly one inequality tag (printed in report
headers) and one builder.  Builders turn a validated option mapping into
probe calls; unknown option keys are rejected before dispatch.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..banach import parse_norm_target, parse_phi
from ..multiindex import CoefficientFamily
from ..randsource import parse_spec, substream
from .engine import McConfig
from .probes import (
    ValueTable,
    default_family,
    default_slices,
    probe_contraction,
    probe_counterexample_linf2,
    probe_divergence_sup,
    probe_index_average_failure,
    probe_lower_decoupling,
    probe_nonmultiplicative_l2,
    probe_stable_moment_floor,
    probe_symmetrization,
    probe_tail_comparison,
    probe_upper_reduction,
)

COMMON_KEYS = {"probe", "seed", "replicates", "batch_size", "confidence", "out"}


class ConfigError(ValueError):
    """Unparseable or out-of-schema experiment configuration."""


def _family_from_options(opts, cfg, n, N, d, degrees, kind):
    if "family" in opts:
        return CoefficientFamily.from_json(opts["family"])
    if "family_file" in opts:
        with open(opts["family_file"], "r", encoding="utf-8") as fh:
            return CoefficientFamily.from_json(fh.read())
    return default_family(degrees, n, N, d, cfg.seed, kind=kind)


def _slices_from_family(f: CoefficientFamily):
    slices = {}
    empty = f.empty_term
    from ..multiindex import HomogeneousSlice

    tables = {}
    for (alpha, tup), v in f.entries.items():
        if alpha.bits != (1 << alpha.card) - 1:
            raise ConfigError("slice probes need support on the main slot sets")
        tables.setdefault(alpha.card, {})[tup] = v
    for k, table in tables.items():
        slices[k] = HomogeneousSlice(k, f.N, f.d, table)
    return slices, empty


def _build_lower_decoupling(opts, cfg):
    target = parse_norm_target(opts.get("target", "lp:2:3"))
    phi = parse_phi(opts.get("phi", "pow:2"))
    spec = parse_spec(opts.get("spec", "gaussian"))
    degrees = list(opts.get("degrees", [0, 1, 2]))
    N = int(opts.get("N", 4))
    kind = opts.get("kind", "symmetric")
    if "family" in opts or "family_file" in opts:
        f = _family_from_options(opts, cfg, max(degrees), N, target.dim, degrees, kind)
        slices, empty = _slices_from_family(f)
    else:
        slices, empty = default_slices(degrees, N, target.dim, cfg.seed, kind=kind)
    return probe_lower_decoupling(
        slices,
        empty,
        spec,
        phi,
        target,
        cfg,
        use_walsh=bool(opts.get("use_walsh", False)),
        multipliers=opts.get("multipliers", "strong-convexity"),
    )


def _build_symmetrization(opts, cfg):
    target = parse_norm_target(opts.get("target", "lp:2:2"))
    phi = parse_phi(opts.get("phi", "pow:2"))
    spec = parse_spec(opts.get("spec", "gaussian"))
    n = int(opts.get("n", 2))
    N = int(opts.get("N", 3))
    degrees = list(opts.get("degrees", [1, 2]))
    f = _family_from_options(opts, cfg, n, N, target.dim, degrees, "symmetric")
    return probe_symmetrization(f, spec, phi, target, cfg)


def _build_contraction(opts, cfg):
    target = parse_norm_target(opts.get("target", "lp:2:2"))
    phi = parse_phi(opts.get("phi", "pow:2"))
    spec = parse_spec(opts.get("spec", "rademacher"))
    n = int(opts.get("n", 2))
    N = int(opts.get("N", 3))
    degrees = list(opts.get("degrees", [1, 2]))
    f = _family_from_options(opts, cfg, n, N, target.dim, degrees, "symmetric")
    if "g_const" in opts:
        g = np.full((n, N), float(opts["g_const"]))
    else:
        g = substream(cfg.seed, 9004).uniform(-1.0, 1.0, size=(n, N))
    return probe_contraction(
        f, g, spec, phi, target, cfg, mode=opts.get("mode", "coupled")
    )


def _build_tail_comparison(opts, cfg):
    alpha = float(opts.get("alpha", 1.5))
    degrees = list(opts.get("degrees", [2]))
    N = int(opts.get("N", 4))
    kind = opts.get("kind", "tetrahedral")
    n = max(degrees)
    f = _family_from_options(opts, cfg, n, N, 1, degrees, kind)
    return probe_tail_comparison(f, alpha, cfg)


def _build_upper_reduction(opts, cfg):
    target = parse_norm_target(opts.get("target", "lp:2:4"))
    phi = parse_phi(opts.get("phi", "pow:2"))
    spec = parse_spec(opts.get("spec", "gaussian"))
    return probe_upper_reduction(
        spec, target, phi, cfg, count=int(opts.get("count", 4))
    )


def _build_counterexample_linf2(opts, cfg):
    return probe_counterexample_linf2(
        cfg,
        u_grid=opts.get("u_grid"),
        c=float(opts.get("c", 1.0)),
    )


def _build_stable_moment_floor(opts, cfg):
    return probe_stable_moment_floor(
        float(opts.get("alpha", 1.5)),
        float(opts.get("s", 1.0)),
        cfg,
        t_grid=opts.get("t_grid"),
    )


def _build_nonmultiplicative(opts, cfg):
    cases = int(opts.get("cases", 50))
    N = int(opts.get("N", 4))
    kmax = int(opts.get("kmax", 2))
    rng = substream(cfg.seed, 9005)
    tables = []
    for case in range(cases):
        kind = "symmetric" if case % 2 == 0 else "tetrahedral"
        degs = {}
        for k in range(1, kmax + 1):
            tab = {
                comb: (float(rng.normal()), float(rng.normal()))
                for comb in itertools.combinations(range(1, N + 1), k)
                if rng.random() < 0.7
            }
            if tab:
                degs[k] = tab
        tables.append(ValueTable(N, kind, degs, constant=float(rng.normal())))
    return probe_nonmultiplicative_l2(tables, cfg)


def _build_divergence_sup(opts, cfg):
    spec = parse_spec(opts.get("spec", "logsq"))
    n_grid = opts.get("n_grid", [2**8, 2**12, 2**16])
    return probe_divergence_sup(spec, n_grid, cfg)


def _build_index_average(opts, cfg):
    target = parse_norm_target(opts.get("target", "lp:2:4"))
    phi = parse_phi(opts.get("phi", "pow:2"))
    spec = parse_spec(opts.get("spec", "gaussian"))
    return probe_index_average_failure(
        spec,
        opts.get("n_grid", [1, 4, 16, 64]),
        cfg,
        target=target,
        phi=phi,
        count=int(opts.get("count", 4)),
        c1=float(opts.get("c1", 1.0)),
    )


@dataclass(frozen=True)
class ProbeEntry:
    tag: str
    builder: object
    keys: frozenset


_FAMILY_KEYS = {"family", "family_file"}

PROBES = {
    "lower-decoupling": ProbeEntry(
        "decoupled-dominated-by-coupled",
        _build_lower_decoupling,
        frozenset(
            {"spec", "phi", "target", "degrees", "N", "kind", "use_walsh", "multipliers"}
            | _FAMILY_KEYS
        ),
    ),
    "symmetrization": ProbeEntry(
        "centering-and-sign-randomization-comparisons",
        _build_symmetrization,
        frozenset({"spec", "phi", "target", "n", "N", "degrees"} | _FAMILY_KEYS),
    ),
    "contraction": ProbeEntry(
        "product-form-multipliers-below-uniform-bound",
        _build_contraction,
        frozenset(
            {"spec", "phi", "target", "n", "N", "degrees", "g_const", "mode"}
            | _FAMILY_KEYS
        ),
    ),
    "tail-comparison": ProbeEntry(
        "stable-vs-pareto-quantile-sandwich",
        _build_tail_comparison,
        frozenset({"alpha", "degrees", "N", "kind"} | _FAMILY_KEYS),
    ),
    "upper-reduction": ProbeEntry(
        "one-multiplier-sum-below-independent-sum",
        _build_upper_reduction,
        frozenset({"spec", "phi", "target", "count"}),
    ),
    "counterexample-linf2": ProbeEntry(
        "sup-norm-exponential-excess-beats-gaussian",
        _build_counterexample_linf2,
        frozenset({"u_grid", "c"}),
    ),
    "stable-moment-floor": ProbeEntry(
        "pareto-lower-moment-growth-floor",
        _build_stable_moment_floor,
        frozenset({"alpha", "s", "t_grid"}),
    ),
    "nonmultiplicative-l2": ProbeEntry(
        "value-table-second-moment-identity",
        _build_nonmultiplicative,
        frozenset({"cases", "N", "kmax"}),
    ),
    "divergence-sup": ProbeEntry(
        "running-average-sup-uniform-bound",
        _build_divergence_sup,
        frozenset({"spec", "n_grid"}),
    ),
    "index-average-failure": ProbeEntry(
        "no-uniform-constant-for-averaged-coefficients",
        _build_index_average,
        frozenset({"spec", "phi", "target", "n_grid", "count", "c1"}),
    ),
}


def run_probe_config(options: dict):
    """Validate an option mapping, build the McConfig, run the probe."""
    if "probe" not in options:
        raise ConfigError("config is missing the probe name")
    name = options["probe"]
    if name not in PROBES:
        raise ConfigError(f"unknown probe {name!r}")
    entry = PROBES[name]
    allowed = COMMON_KEYS | entry.keys
    unknown = set(options) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {name}: {sorted(unknown)}")
    try:
        cfg = McConfig(
            replicates=int(options.get("replicates", 10_000)),
            seed=int(options.get("seed", 20_260_810)),
            batch_size=int(options.get("batch_size", 4096)),
            confidence=float(options.get("confidence", 0.99)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    try:
        reports = entry.builder(options, cfg)
    except ConfigError:
        raise
    except ValueError as exc:
        from ..multiindex import GuardExceeded

        if isinstance(exc, GuardExceeded):
            raise
        raise ConfigError(str(exc)) from exc
    for r in reports:
        # batch size and confidence complete the reproducibility record
        r.params.setdefault(
            "mc", {"batch_size": cfg.batch_size, "confidence": cfg.confidence}
        )
    return reports
