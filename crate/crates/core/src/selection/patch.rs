use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{bbox_of_mask, BBox, BinaryMask, RgbImage};

/// Identifies a frame within a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameRef {
    pub video: String,
    pub index: u32,
}

impl FrameRef {
    pub fn new(video: impl Into<String>, index: u32) -> Self {
        Self {
            video: video.into(),
            index,
        }
    }
}

impl std::fmt::Display for FrameRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.video, self.index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub source_frame: FrameRef,
    pub bbox: BBox,
    pub pixels: RgbImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositePatch {
    pub image: RgbImage,
    pub mask: BinaryMask,
    pub fg_origin: FrameRef,
    pub bg_origin: FrameRef,
}

/// Places a segment of length `side` around `[lo, lo + len)` inside
/// `[0, extent)`, centered where possible and shifted inward otherwise.
fn place(lo: usize, len: usize, side: usize, extent: usize) -> (usize, usize) {
    let side = side.min(extent);
    let center2 = 2 * lo + len; // twice the center
    let start = (center2.saturating_sub(side) / 2).min(extent - side);
    (start, side)
}

/// Square box enclosing the set pixels of `mask`, side `max(w, h)` of its
/// bounding box, centered on it and shifted to stay inside the frame.
pub fn square_around(mask: &BinaryMask) -> Result<BBox> {
    let b = bbox_of_mask(mask)
        .ok_or_else(|| Error::EmptyMask("no foreground to enclose".into()))?;
    let side = b.w.max(b.h);
    let (x, w) = place(b.x, b.w, side, mask.width());
    let (y, h) = place(b.y, b.h, side, mask.height());
    Ok(BBox::new(x, y, w, h))
}

pub fn foreground_patch(frame: &RgbImage, pa: &BinaryMask, source: FrameRef) -> Result<Patch> {
    if frame.dims() != pa.dims() {
        return Err(Error::dims(frame.dims(), pa.dims()));
    }
    let bbox = square_around(pa)?;
    Ok(Patch {
        source_frame: source,
        bbox,
        pixels: frame.crop(bbox)?,
    })
}

pub const BACKGROUND_TRIES: usize = 200;

/// A frame that may donate background patches.
pub struct BackgroundSource<'a> {
    pub frame_ref: &'a FrameRef,
    pub image: &'a RgbImage,
    pub pa: &'a BinaryMask,
}

fn covered(pa: &BinaryMask, b: BBox) -> usize {
    (b.y..b.bottom())
        .map(|y| (b.x..b.right()).filter(|&x| pa.get(x, y)).count())
        .sum()
}

/// Seeded rejection sampling of a `size x size` patch free of
/// pseudo-annotated pixels. After [`BACKGROUND_TRIES`] failures the first
/// candidate with the fewest covered pixels is returned.
pub fn sample_background_patch(
    frames: &[BackgroundSource<'_>],
    size: usize,
    rng_seed: u64,
) -> Result<Patch> {
    sample_background_rect(frames, size, size, rng_seed)
}

/// [`sample_background_patch`] for a `w x h` patch; used when a foreground
/// square had to shrink to fit its frame.
pub(crate) fn sample_background_rect(
    frames: &[BackgroundSource<'_>],
    w: usize,
    h: usize,
    rng_seed: u64,
) -> Result<Patch> {
    let eligible: Vec<&BackgroundSource<'_>> = frames
        .iter()
        .filter(|f| w >= 1 && h >= 1 && f.image.width() >= w && f.image.height() >= h)
        .collect();
    if eligible.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no frame can hold a {w}x{h} background patch"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<(usize, usize, BBox)> = None;
    for _ in 0..BACKGROUND_TRIES {
        let fi = rng.gen_range(0..eligible.len());
        let f = eligible[fi];
        let x = rng.gen_range(0..=f.image.width() - w);
        let y = rng.gen_range(0..=f.image.height() - h);
        let b = BBox::new(x, y, w, h);
        let c = covered(f.pa, b);
        if best.is_none_or(|(bc, _, _)| c < bc) {
            best = Some((c, fi, b));
        }
        if c == 0 {
            break;
        }
    }
    let (_, fi, bbox) = best.expect("at least one try");
    let f = eligible[fi];
    Ok(Patch {
        source_frame: f.frame_ref.clone(),
        bbox,
        pixels: f.image.crop(bbox)?,
    })
}

/// Per-pixel select: masked pixels from `fg`, the rest from `bg`.
pub fn cut_and_paste(fg: &Patch, mask_crop: &BinaryMask, bg: &Patch) -> Result<CompositePatch> {
    let d = fg.pixels.dims();
    if mask_crop.dims() != d {
        return Err(Error::dims(d, mask_crop.dims()));
    }
    if bg.pixels.dims() != d {
        return Err(Error::dims(d, bg.pixels.dims()));
    }
    let image = RgbImage::from_fn(d.0, d.1, |x, y| {
        if mask_crop.get(x, y) {
            fg.pixels.pixel(x, y)
        } else {
            bg.pixels.pixel(x, y)
        }
    })?;
    Ok(CompositePatch {
        image,
        mask: mask_crop.clone(),
        fg_origin: fg.source_frame.clone(),
        bg_origin: bg.source_frame.clone(),
    })
}

/// Foreground patch with every pixel outside the mask zeroed.
pub fn masked_foreground(fg: &Patch, mask_crop: &BinaryMask) -> Result<RgbImage> {
    let d = fg.pixels.dims();
    if mask_crop.dims() != d {
        return Err(Error::dims(d, mask_crop.dims()));
    }
    RgbImage::from_fn(d.0, d.1, |x, y| {
        if mask_crop.get(x, y) {
            fg.pixels.pixel(x, y)
        } else {
            [0, 0, 0]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(w: usize, h: usize, b: BBox) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| b.contains(x, y)).unwrap()
    }

    #[test]
    fn single_pixel_square() {
        let m = blob(16, 16, BBox::new(4, 4, 1, 1));
        assert_eq!(square_around(&m).unwrap(), BBox::new(4, 4, 1, 1));
    }

    #[test]
    fn tall_blob_gets_square_of_its_height() {
        let m = blob(16, 16, BBox::new(6, 5, 2, 6));
        let sq = square_around(&m).unwrap();
        assert_eq!((sq.w, sq.h), (6, 6));
        assert_eq!(sq, BBox::new(4, 5, 6, 6));
    }

    #[test]
    fn corner_blob_is_shifted_inward() {
        let m = blob(16, 16, BBox::new(0, 0, 2, 5));
        let sq = square_around(&m).unwrap();
        assert_eq!(sq, BBox::new(0, 0, 5, 5));
        let m = blob(16, 16, BBox::new(14, 13, 2, 3));
        assert_eq!(square_around(&m).unwrap(), BBox::new(13, 13, 3, 3));
    }

    #[test]
    fn square_shrinks_to_frame() {
        let m = blob(10, 4, BBox::new(1, 1, 8, 2));
        let sq = square_around(&m).unwrap();
        assert_eq!(sq, BBox::new(1, 0, 8, 4));
    }

    #[test]
    fn empty_pa_has_no_patch() {
        let frame = RgbImage::filled(4, 4, [1, 1, 1]).unwrap();
        let err = foreground_patch(&frame, &BinaryMask::empty(4, 4).unwrap(), FrameRef::new("v", 0));
        assert!(matches!(err, Err(Error::EmptyMask(_))));
    }

    #[test]
    fn composite_extremes() {
        let fg = Patch {
            source_frame: FrameRef::new("a", 0),
            bbox: BBox::new(0, 0, 3, 3),
            pixels: RgbImage::filled(3, 3, [200, 0, 0]).unwrap(),
        };
        let bg = Patch {
            source_frame: FrameRef::new("a", 1),
            bbox: BBox::new(0, 0, 3, 3),
            pixels: RgbImage::filled(3, 3, [0, 0, 200]).unwrap(),
        };
        let all = cut_and_paste(&fg, &BinaryMask::full(3, 3).unwrap(), &bg).unwrap();
        assert_eq!(all.image, fg.pixels);
        let none = cut_and_paste(&fg, &BinaryMask::empty(3, 3).unwrap(), &bg).unwrap();
        assert_eq!(none.image, bg.pixels);
        assert!(cut_and_paste(&fg, &BinaryMask::empty(2, 3).unwrap(), &bg).is_err());
    }

    #[test]
    fn background_comes_from_the_only_clean_frame() {
        let img = RgbImage::filled(8, 8, [5, 5, 5]).unwrap();
        let full = BinaryMask::full(8, 8).unwrap();
        let empty = BinaryMask::empty(8, 8).unwrap();
        let (a, b) = (FrameRef::new("v", 0), FrameRef::new("v", 1));
        let sources = [
            BackgroundSource { frame_ref: &a, image: &img, pa: &full },
            BackgroundSource { frame_ref: &b, image: &img, pa: &empty },
        ];
        for seed in 0..20 {
            let p = sample_background_patch(&sources, 4, seed).unwrap();
            assert_eq!(p.source_frame, b);
        }
        assert!(sample_background_patch(&sources, 9, 0).is_err());
    }
}
