"""Probability that a software weakness (CWE) is exploited in a 30-day window,
computed from NVD CVE->CWE mappings, the CWE View-1003 hierarchy and EPSS
scores, plus analyses of the resulting weekly series."""

from .analytics import (
    RoundingPolicy,
    SeriesSummary,
    classify_range,
    era_boundaries,
    fraction_of_points_above,
    frequency_correlation,
    score_fraction_below,
    spearman_rho,
    split_by_era,
    summarize,
)
from .metric import CveClosure, cve_closure, pecwe, pecwe_from_scores, pecwe_series, weekly_schedule
from .model import (
    NVD_NOINFO,
    NVD_OTHER,
    CveCweIndex,
    CveId,
    CweCatalog,
    CweId,
    EpssSnapshot,
    EpssVersionEra,
    PatternKind,
    PatternSegment,
    PecweSeries,
    Probability,
    RangeClass,
    default_eras,
    parse_cve_id,
    parse_cwe_id,
)
from .oracles import pecwe_bruteforce_oracle, pecwe_montecarlo_oracle
from .patterns import PatternParams, detect_patterns, detect_patterns_by_era

__version__ = "0.1.0"
