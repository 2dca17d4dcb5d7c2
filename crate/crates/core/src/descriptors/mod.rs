//! Holistic image descriptors: computation from images, file ingestion of
//! precomputed vectors, and set-level preprocessing.

mod cluster;
mod io;
mod pgm;
mod pixel;
mod standardize;

pub use cluster::{cluster_conditions, MAX_ITERATIONS};
pub use io::{
    decode_binary, decode_text, encode_binary, encode_text, load_descriptors, load_labels,
    save_descriptors, save_labels, DescriptorFormat,
};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm, GrayImage};
pub use pixel::{
    area_resize, describe_images, normalize_patches, pixel_descriptor, PixelDescriptorConfig,
};
pub use standardize::{
    apply_stats, compute_stats, standardize, standardize_by_cluster, StandardizationStats,
};

pub(crate) use io::csv_err;

/// Lower bound applied to every standard deviation before dividing by it.
pub const STD_FLOOR: f64 = 1e-6;
