//! Deterministic reference scorers for flat-color synthetic scenes.
//!
//! They stand in for learned networks so selection can be exercised without
//! any training.

use std::collections::HashMap;

use super::{Classifier, CompositePatch, Discriminator, FrameRef, MaskedForeground};
use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Scores a composite by the fraction of seam pairs, a masked pixel next to
/// an unmasked one, that show a color edge. A cut that follows the object
/// outline on a flat scene scores 1; every seam pair running through uniform
/// color (background cut out along with the object) lowers the score.
/// Composites without any seam score 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct SeamDiscriminator;

impl SeamDiscriminator {
    pub fn seam_score(composite: &CompositePatch) -> f64 {
        let (w, h) = composite.image.dims();
        let m = &composite.mask;
        let img = &composite.image;
        let (mut pairs, mut edges) = (0usize, 0usize);
        let mut check = |a: (usize, usize), b: (usize, usize)| {
            if m.get(a.0, a.1) != m.get(b.0, b.1) {
                pairs += 1;
                if img.pixel(a.0, a.1) != img.pixel(b.0, b.1) {
                    edges += 1;
                }
            }
        };
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    check((x, y), (x + 1, y));
                }
                if y + 1 < h {
                    check((x, y), (x, y + 1));
                }
            }
        }
        if pairs == 0 {
            0.0
        } else {
            edges as f64 / pairs as f64
        }
    }
}

impl Discriminator for SeamDiscriminator {
    fn score(&self, composite: &CompositePatch) -> Result<f64> {
        Ok(Self::seam_score(composite))
    }
}

/// Pseudo-classifier with access to the scene's ground truth: the expected
/// class gets probability `|pa ∩ gt| / |gt|`, background the rest.
#[derive(Clone, Debug, Default)]
pub struct CoverageClassifier {
    truth: HashMap<FrameRef, (BinaryMask, usize)>,
    class_count: usize,
}

impl CoverageClassifier {
    pub fn new(class_count: usize) -> Self {
        Self {
            truth: HashMap::new(),
            class_count,
        }
    }

    pub fn insert(&mut self, frame: FrameRef, gt: BinaryMask, class: usize) {
        self.truth.insert(frame, (gt, class));
    }
}

impl Classifier for CoverageClassifier {
    fn classify(&self, input: &MaskedForeground<'_>) -> Result<Vec<f64>> {
        let (gt, class) = self
            .truth
            .get(input.origin)
            .ok_or_else(|| Error::Scorer(format!("no ground truth for {}", input.origin)))?;
        if *class >= self.class_count {
            return Err(Error::Scorer(format!("class {class} out of range")));
        }
        let gt_area = gt.area();
        let b = input.bbox;
        let mut hit = 0usize;
        for y in 0..b.h {
            for x in 0..b.w {
                if input.mask.get(x, y) && gt.get(b.x + x, b.y + y) {
                    hit += 1;
                }
            }
        }
        let coverage = if gt_area == 0 {
            0.0
        } else {
            hit as f64 / gt_area as f64
        };
        let mut probs = vec![0.0; self.class_count];
        probs[0] = 1.0 - coverage;
        probs[*class] += coverage;
        Ok(probs)
    }
}

/// Image-only pseudo-classifier: each class owns one color, and a class's
/// probability is the share of visible (non-black) pixels painted with it.
/// Unmatched visible pixels count as background.
#[derive(Clone, Debug)]
pub struct PaletteClassifier {
    palette: Vec<(usize, [u8; 3])>,
    class_count: usize,
}

impl PaletteClassifier {
    pub fn new(palette: Vec<(usize, [u8; 3])>) -> Result<Self> {
        if palette.iter().any(|(c, rgb)| *c == 0 || *rgb == [0, 0, 0]) {
            return Err(Error::InvalidParameter(
                "palette classes start at 1 and may not use black".into(),
            ));
        }
        let class_count = palette.iter().map(|(c, _)| c + 1).max().unwrap_or(1);
        Ok(Self {
            palette,
            class_count,
        })
    }

    /// Parses `class:r,g,b` entries separated by whitespace or `;`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("bad palette {spec:?}"));
        let mut palette = Vec::new();
        for entry in spec.split(|c: char| c == ';' || c.is_whitespace()).filter(|s| !s.is_empty()) {
            let (class, rgb) = entry.split_once(':').ok_or_else(bad)?;
            let class: usize = class.parse().map_err(|_| bad())?;
            let parts: Vec<u8> = rgb
                .split(',')
                .map(|v| v.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            let rgb: [u8; 3] = parts.try_into().map_err(|_| bad())?;
            palette.push((class, rgb));
        }
        Self::new(palette)
    }

    pub fn probabilities(&self, image: &crate::raster::RgbImage) -> Vec<f64> {
        let mut counts = vec![0usize; self.class_count];
        let mut visible = 0usize;
        for p in image.data().chunks_exact(3) {
            if p == [0, 0, 0] {
                continue;
            }
            visible += 1;
            let class = self
                .palette
                .iter()
                .find(|(_, rgb)| rgb == p)
                .map_or(0, |(c, _)| *c);
            counts[class] += 1;
        }
        if visible == 0 {
            let mut probs = vec![0.0; self.class_count];
            probs[0] = 1.0;
            return probs;
        }
        counts
            .iter()
            .map(|&c| c as f64 / visible as f64)
            .collect()
    }
}

impl Classifier for PaletteClassifier {
    fn classify(&self, input: &MaskedForeground<'_>) -> Result<Vec<f64>> {
        Ok(self.probabilities(input.image))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{BBox, RgbImage};

    fn composite(image: RgbImage, mask: BinaryMask) -> CompositePatch {
        CompositePatch {
            image,
            mask,
            fg_origin: FrameRef::new("v", 0),
            bg_origin: FrameRef::new("v", 1),
        }
    }

    #[test]
    fn exact_cut_scores_one_and_leaky_cut_less() {
        let disc = |x: usize, y: usize| (x as i32 - 4).pow(2) + (y as i32 - 4).pow(2) <= 9;
        let img = RgbImage::from_fn(9, 9, |x, y| if disc(x, y) { [200, 40, 40] } else { [20, 90, 20] })
            .unwrap();
        let exact = BinaryMask::from_fn(9, 9, disc).unwrap();
        assert_eq!(SeamDiscriminator::seam_score(&composite(img.clone(), exact)), 1.0);
        let leaky = BinaryMask::from_fn(9, 9, |x, y| disc(x, y) || x == 8).unwrap();
        let s = SeamDiscriminator::seam_score(&composite(img.clone(), leaky));
        assert!(s < 1.0 && s > 0.0, "{s}");
        assert_eq!(SeamDiscriminator::seam_score(&composite(img, BinaryMask::full(9, 9).unwrap())), 0.0);
    }

    #[test]
    fn coverage_is_fraction_of_truth() {
        let gt = BinaryMask::from_fn(8, 8, |x, y| x < 4 && y < 4).unwrap();
        let mut c = CoverageClassifier::new(3);
        let f = FrameRef::new("v", 0);
        c.insert(f.clone(), gt, 2);
        let mask = BinaryMask::from_fn(4, 4, |_, y| y < 2).unwrap();
        let img = RgbImage::filled(4, 4, [1, 1, 1]).unwrap();
        let probs = c
            .classify(&MaskedForeground {
                image: &img,
                mask: &mask,
                origin: &f,
                bbox: BBox::new(0, 0, 4, 4),
            })
            .unwrap();
        assert_eq!(probs, vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn palette_shares() {
        let p = PaletteClassifier::parse("1:255,0,0; 2:0,0,255").unwrap();
        let img = RgbImage::from_fn(4, 1, |x, _| match x {
            0 => [0, 0, 0],
            1 | 2 => [255, 0, 0],
            _ => [9, 9, 9],
        })
        .unwrap();
        let probs = p.probabilities(&img);
        assert_eq!(probs.len(), 3);
        assert!((probs[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((probs[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(PaletteClassifier::parse("0:1,2,3").is_err());
        assert!(PaletteClassifier::parse("1:1,2").is_err());
    }
}
