//! Metrics, alignment and structured reports.

mod metrics;
mod procrustes;
mod report;

pub use metrics::{
    complexity, curl_error, curl_error_interior, extrapolate, extrapolate_field, r2_score, r2_trajectory, rmse,
    rmse_fields, series_matrix, smoothness, vorticity, vps, vps_fields, RmseResult,
};
pub use procrustes::{procrustes_align, AlignmentTransform};
pub use report::{
    emit_report, json_f64, line_plot_svg, overlay_csv, phase_csv, DiagnosticReport, ReportArtifacts,
    REPORT_SCHEMA_VERSION,
};
