"""Seeded Monte Carlo estimation and paired-estimate verdicts.

Replicates are drawn batch by batch from counter-based substreams keyed by
(master seed, probe key, batch index, row), so a report is a pure function
of its configuration.  Batch reductions run in a fixed order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _normal

from ..multiindex import CoefficientFamily
from ..randsource import substream

CONSISTENT = "consistent"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class McConfig:
    replicates: int = 10_000
    seed: int = 20_260_810
    batch_size: int = 4096
    confidence: float = 0.99

    def __post_init__(self):
        if self.replicates < 100:
            raise ValueError("need at least 100 replicates")
        if not 0.5 < self.confidence < 1.0:
            raise ValueError("confidence must sit in (0.5, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")

    @property
    def z(self):
        return float(_normal.ppf(0.5 * (1.0 + self.confidence)))


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float
    m: int

    def lower(self, z):
        return self.mean - z * self.se

    def upper(self, z):
        return self.mean + z * self.se

    def as_dict(self):
        return {"mean": self.mean, "se": self.se, "m": self.m}


def estimate_from_samples(samples) -> Estimate:
    x = np.asarray(samples, dtype=np.float64).ravel()
    m = x.size
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return Estimate(mean, se, m)


def exact_estimate(value) -> Estimate:
    """Wrap a deterministically computed quantity as a zero-noise estimate."""
    return Estimate(float(value), 0.0, 1)


def mc_estimate(sample_batch, cfg: McConfig) -> Estimate:
    """Estimate E of a scalar replicate functional.

    ``sample_batch(batch_index, size)`` returns ``size`` replicate values;
    batches are accumulated in index order with stable summation.
    """
    sums, sqsums, count = [], [], 0
    b = 0
    while count < cfg.replicates:
        size = min(cfg.batch_size, cfg.replicates - count)
        vals = np.asarray(sample_batch(b, size), dtype=np.float64)
        if vals.shape != (size,):
            raise ValueError("sampler returned wrong batch shape")
        sums.append(float(np.sum(vals)))
        sqsums.append(float(np.sum(vals * vals)))
        count += size
        b += 1
    total = math.fsum(sums)
    total_sq = math.fsum(sqsums)
    mean = total / count
    var = max(total_sq - count * mean * mean, 0.0) / (count - 1)
    return Estimate(mean, math.sqrt(var / count), count)


def paired_verdict(lhs: Estimate, rhs: Estimate, z: float) -> str:
    """Verdict on "lhs <= rhs" from two independent estimates.

    Violated only when the intervals separate the wrong way; symmetric
    under swapping sides along with the inequality direction.
    """
    vals = (lhs.mean, lhs.se, rhs.mean, rhs.se)
    if not all(math.isfinite(v) for v in vals):
        return INCONCLUSIVE
    if lhs.lower(z) > rhs.upper(z):
        return VIOLATED
    return CONSISTENT


@dataclass
class ProbeReport:
    """Paired left/right estimates plus verdict for one inequality probe."""

    probe: str
    tag: str
    lhs: Estimate
    rhs: Estimate
    verdict: str
    expected: str
    seed: int
    replicates: int
    params: dict = field(default_factory=dict)

    @property
    def ratio(self):
        if self.lhs.mean == 0.0:
            return math.inf if self.rhs.mean != 0.0 else 1.0
        return self.rhs.mean / self.lhs.mean

    @property
    def as_expected(self):
        return self.verdict == self.expected

    def outcome(self):
        if self.verdict == VIOLATED and self.expected == VIOLATED:
            return "violated-as-expected"
        return self.verdict if self.as_expected else f"unexpected-{self.verdict}"

    def to_obj(self):
        return {
            "probe": self.probe,
            "tag": self.tag,
            "lhs": self.lhs.as_dict(),
            "rhs": self.rhs.as_dict(),
            "ratio": self.ratio,
            "verdict": self.verdict,
            "expected": self.expected,
            "outcome": self.outcome(),
            "seed": self.seed,
            "replicates": self.replicates,
            "params": self.params,
        }

    def to_json(self):
        return json.dumps(self.to_obj(), indent=2, allow_nan=True)

    CSV_HEADER = (
        "probe",
        "lhs_mean",
        "lhs_se",
        "rhs_mean",
        "rhs_se",
        "ratio",
        "verdict",
        "seed",
        "M",
    )

    def csv_row(self):
        return (
            self.probe,
            repr(self.lhs.mean),
            repr(self.lhs.se),
            repr(self.rhs.mean),
            repr(self.rhs.se),
            repr(self.ratio),
            self.verdict,
            str(self.seed),
            str(self.replicates),
        )


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(ProbeReport.CSV_HEADER)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def report_from_obj(obj) -> ProbeReport:
    return ProbeReport(
        probe=obj["probe"],
        tag=obj["tag"],
        lhs=Estimate(**obj["lhs"]),
        rhs=Estimate(**obj["rhs"]),
        verdict=obj["verdict"],
        expected=obj["expected"],
        seed=obj["seed"],
        replicates=obj["replicates"],
        params=obj.get("params", {}),
    )


# -- family evaluation over replicate batches --------------------------------


def draw_rows(spec, n, N, mode, seed, key, batch_index, size):
    """Rows for a batch of matrices, shape (n, size, N).

    Decoupled mode keys each row's stream by its index; coupled mode draws
    one stream and repeats it across rows.
    """
    from ..randsource import sample_batch

    if mode == "coupled":
        row = sample_batch(spec, (size, N), substream(seed, *key, batch_index, 0))
        return np.broadcast_to(row, (n, size, N))
    if mode == "decoupled":
        return np.stack(
            [
                sample_batch(spec, (size, N), substream(seed, *key, batch_index, r))
                for r in range(n)
            ]
        )
    raise ValueError(f"mode {mode!r} not coupled/decoupled")


def eval_family_batch(f: CoefficientFamily, rows, entry_weights=None):
    """Chaos values for a batch: rows (n, m, N) -> values (m, d).

    ``entry_weights`` optionally maps an entry to a per-replicate multiplier
    (used for Walsh sign systems attached to the coefficients).
    """
    m = rows.shape[1]
    vals = np.broadcast_to(f.empty_term, (m, f.d)).copy()
    for (alpha, tup), v in f.support():
        prod = np.ones(m)
        for slot, coord in zip(alpha.slots(), tup):
            prod = prod * rows[slot - 1][:, coord - 1]
        if entry_weights is not None:
            prod = prod * entry_weights(alpha)
        vals += prod[:, None] * v
    return vals


def mc_modular(f, spec, mode, phi, target, cfg: McConfig, key=()) -> Estimate:
    """Monte Carlo estimate of E phi(norm of the chaos)."""
    if f.d != target.dim:
        raise ValueError("family dimension does not match the norm target")

    def batch(b, size):
        rows = draw_rows(spec, max(f.n, 1), f.N, mode, cfg.seed, key, b, size)
        vals = eval_family_batch(f, rows)
        return phi(target.norm_batch(vals))

    return mc_estimate(batch, cfg)
