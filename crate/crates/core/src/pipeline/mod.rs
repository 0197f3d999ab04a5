//! Config-driven pipeline: ingest, split, train, evaluate, predict and
//! catalog queries, plus the command-line front end.

pub mod cli;
pub mod commands;
pub mod config;
pub mod query;

pub use commands::{cmd_evaluate, cmd_ingest, cmd_predict, cmd_query, cmd_split, cmd_train, Dataset};
pub use config::{load_config, parse_config, PipelineConfig};
pub use query::{build_catalog_query, normalize_whitespace, tokens, CatalogQuery, SortOrder};
