//! Splitting, scoring and the backbone × classifier grid.

mod grid;
mod metrics;
mod split;

pub use grid::{
    evaluate_classifiers, grid_csv, heatmap_csv, run_grid, split_samples, table_row, write_grid, CellResult,
    FeatureSet, GridConfig, GridResult, GRID_HEADER,
};
pub use metrics::{confusion, metrics, ConfusionMatrix, MetricsReport};
pub use split::{allocate, stratified_split, Split};
