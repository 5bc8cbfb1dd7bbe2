//! Image files and dataset manifests.

mod image;
mod manifest;

pub use image::{decode_image, encode_netpbm, encode_pfm, read_image, write_image, ImageFormat};
pub use manifest::{Manifest, ManifestEntry, Split};
