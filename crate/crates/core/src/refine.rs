//! Superpixel-based mask refinement.
//!
//! A blob-like initial mask is used as a selector over superpixels: a region
//! is kept when it overlaps the mask by more than `alpha` and covers less than
//! `beta` of the frame. The refined mask is the union of the kept regions, so
//! its boundary follows superpixel (and therefore image) edges.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, SuperpixelMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OverlapMode {
    /// `|p ∩ m| / |p|`
    #[default]
    OverlapRatio,
    /// `|p ∩ m| / |p ∪ m|`
    StrictIou,
}

impl std::str::FromStr for OverlapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overlap_ratio" | "overlap-ratio" => Ok(Self::OverlapRatio),
            "strict_iou" | "strict-iou" => Ok(Self::StrictIou),
            other => Err(Error::InvalidParameter(format!(
                "unknown overlap mode {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineParams {
    pub alpha: f64,
    pub beta: f64,
    pub overlap_mode: OverlapMode,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.4,
            overlap_mode: OverlapMode::OverlapRatio,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionScore {
    pub region: u32,
    pub overlap: f64,
    pub area_ratio: f64,
    pub selected: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RefineReport {
    /// Every region of the superpixel map, in region order.
    pub regions: Vec<RegionScore>,
}

impl RefineReport {
    pub fn selected_regions(&self) -> Vec<u32> {
        self.regions
            .iter()
            .filter(|r| r.selected)
            .map(|r| r.region)
            .collect()
    }
}

pub fn refine_mask(
    m_init: &BinaryMask,
    sp: &SuperpixelMap,
    params: &RefineParams,
) -> Result<(BinaryMask, RefineReport)> {
    params.validate()?;
    if m_init.dims() != sp.dims() {
        return Err(Error::dims(m_init.dims(), sp.dims()));
    }
    let n = sp.region_count();
    let mut area = vec![0usize; n];
    let mut inter = vec![0usize; n];
    for (&l, &b) in sp.labels().iter().zip(m_init.bits()) {
        area[l as usize] += 1;
        if b {
            inter[l as usize] += 1;
        }
    }
    let mask_area = m_init.area();
    let frame_area = (sp.width() * sp.height()) as f64;

    let regions: Vec<RegionScore> = (0..n)
        .map(|r| {
            let overlap = match params.overlap_mode {
                OverlapMode::OverlapRatio => inter[r] as f64 / area[r] as f64,
                OverlapMode::StrictIou => {
                    inter[r] as f64 / (area[r] + mask_area - inter[r]) as f64
                }
            };
            let area_ratio = area[r] as f64 / frame_area;
            RegionScore {
                region: r as u32,
                overlap,
                area_ratio,
                selected: overlap > params.alpha && area_ratio < params.beta,
            }
        })
        .collect();

    let bits = sp
        .labels()
        .iter()
        .map(|&l| regions[l as usize].selected)
        .collect();
    let refined = BinaryMask::new(sp.width(), sp.height(), bits)?;
    Ok((refined, RefineReport { regions }))
}

pub fn refine_batch(
    frames: &[(BinaryMask, SuperpixelMap)],
    params: &RefineParams,
) -> Result<Vec<BinaryMask>> {
    frames
        .iter()
        .enumerate()
        .map(|(i, (m, sp))| {
            refine_mask(m, sp, params)
                .map(|(r, _)| r)
                .map_err(|e| e.in_frame(i))
        })
        .collect()
}
