"""Published reference values used by the reproduction and acceptance checks.

Category probabilities are the printed 7-digit values; derived quantities
(delta, sizes) were published alongside them but computed from full
precision, so round-trips from the printed digits carry the propagated
print-rounding error (see interval helpers below).
"""

from __future__ import annotations

import math

import numpy as np

# Table T1: exact category distributions at n = 1e6 (three chi-squared-class
# tests), with the published delta and safe/risky sizes.
T1 = {
    "longest_run": {
        "m": 10000,
        "q": (0.0984739, 0.0993067, 0.1003668, 0.1008263, 0.1011301,
              0.1010720, 0.1007868, 0.1004239, 0.0994782, 0.0981354),
        "delta": 1.060097e-4,
        "n_safe": 20950,
        "n_risky": 234769,
    },
    "overlapping_template": {
        "m": 1032,
        "q": (0.0998142, 0.0999758, 0.1000190, 0.1000541, 0.1000879,
              0.1000979, 0.1000902, 0.1000561, 0.0999548, 0.0998500),
        "delta": 9.150630e-7,
        "n_safe": 2592207,
        "n_risky": 27032746,
    },
    "linear_complexity": {
        "m": 5000,
        "q": (0.0992755, 0.0958139, 0.0965409, 0.0994559, 0.1029601,
              0.1013597, 0.1033444, 0.1025969, 0.1004993, 0.0981534),
        "delta": 6.250910e-4,
        "n_safe": 3218,
        "n_risky": 40149,
    },
}

# Table T3: the Random Excursions test (altered procedure, 500 cycles),
# one column per |x|.
T3 = {
    1: {
        "q": (0.0994313, 0.0992651, 0.0999442, 0.1006237, 0.0999540,
              0.1006994, 0.1007053, 0.1001240, 0.0998671, 0.0993858),
        "delta": 2.654570e-5,
        "n_safe": 87494,
        "n_risky": 933714,
    },
    2: {
        "q": (0.0993668, 0.0989767, 0.0998576, 0.1000796, 0.1006024,
              0.1006013, 0.1006613, 0.1004919, 0.0998926, 0.0994698),
        "delta": 3.171128e-5,
        "n_safe": 72423,
        "n_risky": 782436,
    },
    3: {
        "q": (0.0989417, 0.0976982, 0.0994305, 0.1005629, 0.1005381,
              0.1014175, 0.1010161, 0.1014867, 0.0994729, 0.0994353),
        "delta": 1.319765e-4,
        "n_safe": 16530,
        "n_risky": 188876,
    },
    4: {
        "q": (0.0986037, 0.0959258, 0.0984995, 0.1005897, 0.1014219,
              0.1016747, 0.1026947, 0.1011569, 0.1013548, 0.0980782),
        "delta": 4.010343e-4,
        "n_safe": 5042,
        "n_risky": 62555,
    },
}

# Published Monte-Carlo estimates (with their reported standard deviations).
MC_ESTIMATES = {
    "linear_complexity_m500": {
        "n": 10 ** 6, "m": 500,
        "delta": 4.625e-6, "delta_sd": 3.231e-9,
        "u": 4.442e-3, "u_sd": 1.837e-6,
        "n_safe": 507809, "n_risky": 5353131,
    },
    "block_frequency_m128": {
        "n": 10 ** 6, "m": 128,
        "delta": 2.200e-5, "delta_sd": 1.728e-8,
        "u": 8.990e-2, "u_sd": 3.775e-6,
        "n_safe": 71802, "n_risky": 1160411,
    },
    "dft": {
        "n": 10 ** 6,
        "delta": 5.438e-4, "delta_sd": 7.419e-7,
        "u": 3.679e-2, "u_sd": 6.339e-5,
        "n_safe": 3785, "n_risky": 46084,
    },
}

# DFT binomial-scan sizes at n = 1e6 (the variant they came from is resolved
# by computation; sigma0 matches).
DFT_SCAN_SIZES = {"n_safe": 18690, "n_risky": 210628}

# Frequency-test safe size at n = 1e6 is "approximately 125,000".
FREQUENCY_SAFE_SIZE = 125000

# Rejection probability at the safe size (nu=9, significance 0.0001).
SAFE_SIZE_REJECTION = 0.001205194

# Second sample sizes used in the published qualitative two-level runs.
QUALITATIVE_SIZES = {
    "T2": {
        "longest_run": (21000, 235000),
        "overlapping_template": (2600000, 27033000),
        "linear_complexity": (3200, 40200),
    },
    "T4T5": {1: (87000, 934000), 2: (72000, 783000), 3: (16500, 190000), 4: (5000, 63000)},
    "T6": {"linear_complexity_m500": (507000, 5354000)},
    "T7": {"block_frequency": (71800, 1161000)},
    "T8": {"dft": (3700, 18600, 46100, 211000)},
    "T9": {"longest_run": 500000, "overlapping_template": 27033000, "linear_complexity": 100000},
    "T10": {"random_excursions": 2000000},
    "T12": {"linear_complexity_m500": 5354000, "block_frequency": 2000000, "dft": 100000},
}

# Workload anchors for the enumeration spaces.
WORKLOADS = {
    "overlapping_template_n1e6": 7.2e12,
    "linear_complexity_m500_n1e6": 9.0e16,
}


def size_interval_from_printed(q, nu: int = 9, digits: float = 5e-8,
                               alpha_safe: float = 0.25,
                               alpha_risky: float = 0.0001) -> dict:
    """Interval arithmetic for the safe/risky sizes given that each printed
    q_i only pins the true value to +/- `digits`.

    Propagates the q-box through delta, u and the two size formulas by
    direct extreme-point search over each bin independently (delta and u are
    monotone in each |q_i - p_i|), returning conservative integer ranges.
    """
    from .numerics import chi2_isf

    q = np.asarray(q, dtype=float)
    nu_int = nu
    p = 1.0 / (nu + 1)
    lo = q - digits
    hi = q + digits
    # widest / narrowest deviations per bin
    dev_max = np.maximum(np.abs(lo - p), np.abs(hi - p))
    crosses = (lo <= p) & (p <= hi)
    dev_min = np.where(crosses, 0.0, np.minimum(np.abs(lo - p), np.abs(hi - p)))
    delta_max = float((dev_max ** 2 / p).sum())
    delta_min = float((dev_min ** 2 / p).sum())
    u_max = float((dev_max / p).max())
    u_min = float((dev_min / p).max())
    x_safe = chi2_isf(nu_int, alpha_safe)
    x_risky = chi2_isf(nu_int, alpha_risky)
    safe_lo = math.floor((x_safe - nu_int - u_max * nu_int) / delta_max)
    safe_hi = math.floor((x_safe - nu_int - u_min * nu_int) / delta_min)
    risky_lo = math.ceil((x_risky - nu_int + u_min * nu_int) / delta_max)
    risky_hi = math.ceil((x_risky - nu_int + u_max * nu_int) / delta_min)
    return {
        "delta": (delta_min, delta_max),
        "n_safe": (safe_lo, safe_hi),
        "n_risky": (risky_lo, risky_hi),
    }
