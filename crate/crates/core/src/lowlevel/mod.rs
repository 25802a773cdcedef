//! Otsu thresholding and SLIC superpixels.

mod otsu;
mod slic;

pub use otsu::{binarize, otsu_threshold, quantize, OtsuResult, OTSU_BINS};
pub use slic::{rgb_to_lab, slic, SlicParams};
