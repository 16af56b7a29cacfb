//! Annotation polygons to labeled, split, augmentable patches.

mod augment;
mod extract;
mod polygon;
mod split;
mod store;

pub use augment::{
    affine_resample, apply_draw, augment, flip_horizontal, flip_vertical, sample_bilinear,
    AugmentDraw, AugmentationConfig,
};
pub use extract::{
    axis_offsets, extract_patches, window, ExtractConfig, Extraction, Patch, CHANNELS, PATCH,
    PATCH_LEN,
};
pub use polygon::{
    polygons_from_geojson, polygons_to_geojson, rasterize_polygon, read_polygons, write_polygons,
    AnnotationPolygon, Label, Mask,
};
pub use split::{split, ClassCounts, PatchSet};
pub use store::{load_patchset, save_patchset};
