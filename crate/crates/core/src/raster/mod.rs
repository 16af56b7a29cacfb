//! Grids, the grid file format, band composites and normalization.

mod composite;
mod grid;
mod normalize;

pub use composite::{
    band_difference, compose, read_sources_dir, sources_from_grids, BandExpr, Recipe, SourceBand,
    Sources,
};
pub use grid::{grid_paths, read_grid, write_grid, GeoTransform, Grid};
pub use normalize::{band_ranges, normalize, BandRange, NormalizationSpec};
