//! File formats and the external-process protocol.

mod image_file;
mod manifest;
pub mod protocol;
mod tensor;

pub use image_file::{load_mask, load_rgb, render_overlay, save_mask, save_rgb};
pub use manifest::{load_manifest, parse_manifest, save_manifest, Manifest, ManifestEntry};
pub use tensor::{
    decode_tensor, encode_tensor, load_label_map, load_tensor, map_to_tensor, save_label_map,
    save_tensor, tensor_to_map, TENSOR_FORMAT_VERSION, TENSOR_MAGIC,
};
