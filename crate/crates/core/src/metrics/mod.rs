//! Location-aware detection and localization scoring.

mod assign;
mod report;
mod score;

pub use assign::{enumerate_assignment, hungarian, ENUMERATION_LIMIT};
pub use report::{per_class_csv, report_text, write_report};
pub use score::{
    azimuth_error, compute_metrics, evaluate_clip, match_events, CellMatch, Counts, MetricsReport, DIST_THRESHOLD,
    DOA_THRESHOLD_DEG,
};
