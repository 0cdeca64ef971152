//! File formats and human-readable reports.

pub mod config;
pub mod panel_csv;
pub mod report;
pub mod schools_csv;

pub use config::{RunConfig, DEFAULT_CONFIG};
pub use panel_csv::{
    read_panel, read_panel_csv, write_panel, write_panel_csv, SCHEMA_LINE, SCHEMA_VERSION,
};
pub use report::{format_estimate, format_t_stat, render_table, RenderedTable, TableLayout};
pub use schools_csv::read_schools_csv;
