//! Quantities derived from computed spectra: counting functions and the
//! regime change, multiplicities, eigenvector pairing, boundary localization
//! and the high-frequency landscape.

mod counting;
mod landscape;
mod localization;

pub use counting::{
    counting_function, loglog_slopes, loglog_slopes_with, multiplicity_groups, regime_threshold, regime_threshold_with,
    KinkFit, LineFit, MultiplicityGroup, RegimeReport, RegimeSlopes, SlopeOptions,
};
pub use landscape::{
    compare_closed_form, landscape, landscape_bound_check, BoundCheck, BoundViolation, ClosedFormComparison,
    LandscapeClosedForm, LandscapeVector, BOUND_TOLERANCE,
};
pub use localization::{
    contour_points, localization_report, pair_eigenvectors, ContourClass, ContourCounts, ContourPoint, EigenvectorPair,
    LocalizationEntry, LocalizationReport, DEFAULT_CONTOUR_EPS,
};
