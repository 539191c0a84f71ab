"""Two-level randomness testing with exact p-value category distributions,
chi-squared discrepancy limits, and corrected second-level nulls."""

__version__ = "0.1.0"

from .bitgen import (  # noqa: F401
    BitBlock,
    BitSource,
    FileSource,
    MT19937Source,
    Sha1GSource,
    SplitStreamSource,
    Well19937aSource,
    jump_streams,
    make_source,
)
from .discrepancy import (  # noqa: F401
    DiscrepancyReport,
    chi2_discrepancy,
    expected_chi2_window,
    max_ratio_dev,
    rejection_probability,
    report_from_distribution,
    risky_safe_sizes,
    safe_size_rejection_probability,
)
from .exactdist import (  # noqa: F401
    CategoryDistribution,
    CompositionCursor,
    binomial_scan_q,
    enumerate_q,
    estimate_workload,
    interval_index,
)
from .mcdist import MCTrace, mc_block_frequency_q, mc_class_q, mc_sequence_q, multinomial_sample  # noqa: F401
from .onelevel import (  # noqa: F401
    TestSpec,
    berlekamp_massey,
    block_frequency_test,
    chi2_class_statistic,
    class_spec,
    dft_test,
    frequency_test,
    linear_complexity_test,
    longest_run_class_probs,
    longest_run_test,
    overlapping_template_test,
    random_excursions_test,
)
from .twolevel import SecondLevelNull, TwoLevelResult, bin_pvalues, gof_chi2, run_two_level  # noqa: F401
