//! File formats and helpers behind the `isonorm` command-line tool.

pub mod csvio;
pub mod exit;
pub mod files;
pub mod stats_file;
