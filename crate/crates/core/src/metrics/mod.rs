//! Empirical coverage, prediction-set sizes over time, and their CSV/SVG
//! export.

mod coverage;
mod export;
mod svg;
mod width;

pub use coverage::{coverage_from_residuals, empirical_coverage, summarize, CoverageReport, CoverageSummary};
pub use export::{
    fmt_f64, read_coverage_csv, read_summary_csv, read_width_csv, write_coverage_csv, write_file,
    write_summary_csv, write_width_csv, CoverageRow, SummaryRow, WidthRow, COVERAGE_HEADER,
    SUMMARY_HEADER, WIDTH_HEADER,
};
pub use svg::{render_line_chart, Line, Panel};
pub use width::{band_width_integral, ellipsoid_volume, unit_ball_volume, width_series, WidthKind, WidthSeries};
