"""Monte Carlo engine, exact-identity suite, and inequality probes."""

from .engine import (
    CONSISTENT,
    INCONCLUSIVE,
    VIOLATED,
    Estimate,
    McConfig,
    ProbeReport,
    estimate_from_samples,
    exact_estimate,
    mc_estimate,
    mc_modular,
    paired_verdict,
    report_from_obj,
    reports_to_csv,
)
from .identities import GroupResult, run_identity_suite
from .integrals import (
    compute_a_constant,
    gaussian_excess,
    linf2_excess_curve,
    pareto_abs_moment,
    moment_floor_margins,
    symexp_excess,
)
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
    value_table_second_moments,
)
