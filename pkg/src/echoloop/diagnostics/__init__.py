"""Phase-wise risk metrics: distribution bias, FEF, LC, popularity gap, polarization."""

from .clustering import KMeans, PolarizationTrace, PrincipalProjection, common_subjects, kmeans, polarization_trace
from .metrics import (
    Divergence,
    GapStats,
    Histogram,
    ObservationSet,
    PopularityIndex,
    attribute_distribution,
    catalog_fef_rate,
    distribution_divergence,
    fef_rate,
    lc_rate,
    popularity_gap,
)
from .report import DiagnosticsConfig, build_report, write_report

__all__ = [
    "KMeans", "PolarizationTrace", "PrincipalProjection", "common_subjects", "kmeans", "polarization_trace",
    "Divergence", "GapStats", "Histogram", "ObservationSet", "PopularityIndex", "attribute_distribution",
    "catalog_fef_rate", "distribution_divergence", "fef_rate", "lc_rate", "popularity_gap",
    "DiagnosticsConfig", "build_report", "write_report",
]
