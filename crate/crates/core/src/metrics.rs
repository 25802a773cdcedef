//! IoU-family metrics and the region-integrity model-selection criterion.
//!
//! `IoU(∅, ∅) = 1`: two empty masks agree perfectly. This matters for
//! dataset aggregation, where correctly empty frames would otherwise be
//! punished.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, SuperpixelMap};
use crate::refine::{refine_mask, RefineParams};

fn ratio(inter: u64, union: u64) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, union) = overlap_counts(a, b)?;
    Ok(ratio(inter, union))
}

fn overlap_counts(a: &BinaryMask, b: &BinaryMask) -> Result<(u64, u64)> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&p, &q) in a.bits().iter().zip(b.bits()) {
        inter += (p && q) as u64;
        union += (p || q) as u64;
    }
    Ok((inter, union))
}

/// Per-pixel class ids, `0` being background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassLabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    class_count: usize,
}

impl ClassLabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>, class_count: usize) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "{} labels for a {width}x{height} class map",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= class_count) {
            return Err(Error::InvalidRaster(format!(
                "class {bad} not below class count {class_count}"
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            class_count,
        })
    }

    /// Binary mask as a two-class map (`1` = foreground).
    pub fn from_mask(m: &BinaryMask) -> Self {
        Self {
            width: m.width(),
            height: m.height(),
            labels: m.bits().iter().map(|&b| b as u32).collect(),
            class_count: 2,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }
}

/// Per-class intersection and union pixel counts. Merging is associative and
/// commutative, so frames can be reduced in any order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IouCounts {
    inter: Vec<u64>,
    union: Vec<u64>,
}

impl IouCounts {
    pub fn new(class_count: usize) -> Self {
        Self {
            inter: vec![0; class_count],
            union: vec![0; class_count],
        }
    }

    pub fn class_count(&self) -> usize {
        self.inter.len()
    }

    pub fn add_labels(&mut self, pred: &ClassLabelMap, reference: &ClassLabelMap) -> Result<()> {
        if pred.dims() != reference.dims() {
            return Err(Error::dims(pred.dims(), reference.dims()));
        }
        let cc = self.class_count();
        if pred.class_count != cc || reference.class_count != cc {
            return Err(Error::InvalidParameter(format!(
                "class counts {} / {} do not match {cc}",
                pred.class_count, reference.class_count
            )));
        }
        for (&p, &r) in pred.labels.iter().zip(&reference.labels) {
            let (p, r) = (p as usize, r as usize);
            if p == r {
                self.inter[p] += 1;
                self.union[p] += 1;
            } else {
                self.union[p] += 1;
                self.union[r] += 1;
            }
        }
        Ok(())
    }

    pub fn add_masks(&mut self, pred: &BinaryMask, reference: &BinaryMask) -> Result<()> {
        if self.class_count() != 2 {
            return Err(Error::InvalidParameter(
                "binary masks need two-class counts".into(),
            ));
        }
        let (inter, union) = overlap_counts(pred, reference)?;
        self.inter[1] += inter;
        self.union[1] += union;
        Ok(())
    }

    pub fn merge(&mut self, other: &IouCounts) {
        for (a, b) in self.inter.iter_mut().zip(&other.inter) {
            *a += b;
        }
        for (a, b) in self.union.iter_mut().zip(&other.union) {
            *a += b;
        }
    }

    /// IoU of every non-background class; `None` for classes absent from
    /// both prediction and reference.
    pub fn per_class(&self) -> Vec<Option<f64>> {
        (1..self.class_count())
            .map(|c| (self.union[c] > 0).then(|| self.inter[c] as f64 / self.union[c] as f64))
            .collect()
    }

    /// Mean over present classes; `1.0` when no class is present anywhere.
    pub fn mean(&self) -> f64 {
        let present: Vec<f64> = self.per_class().into_iter().flatten().collect();
        if present.is_empty() {
            1.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    }
}

pub fn miou_multiclass(
    pred: &ClassLabelMap,
    reference: &ClassLabelMap,
    class_count: usize,
) -> Result<(f64, Vec<Option<f64>>)> {
    let mut counts = IouCounts::new(class_count);
    counts.add_labels(pred, reference)?;
    Ok((counts.mean(), counts.per_class()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Sum intersections and unions over frames before dividing.
    #[default]
    Micro,
    /// Average per-frame scores.
    Macro,
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch {
            what: "aligned frame sequences",
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

/// Dataset-level IoU of binary predictions against pseudo-annotations.
pub fn miou_pa(predictions: &[BinaryMask], pas: &[BinaryMask], agg: Aggregation) -> Result<f64> {
    check_aligned(predictions.len(), pas.len())?;
    match agg {
        Aggregation::Micro => {
            let mut counts = IouCounts::new(2);
            for (i, (p, r)) in predictions.iter().zip(pas).enumerate() {
                counts.add_masks(p, r).map_err(|e| e.in_frame(i))?;
            }
            Ok(counts.mean())
        }
        Aggregation::Macro => {
            if predictions.is_empty() {
                return Ok(1.0);
            }
            let mut sum = 0.0;
            for (i, (p, r)) in predictions.iter().zip(pas).enumerate() {
                sum += iou(p, r).map_err(|e| e.in_frame(i))?;
            }
            Ok(sum / predictions.len() as f64)
        }
    }
}

/// Multi-class variant of [`miou_pa`] over class-label maps.
pub fn miou_pa_multiclass(
    predictions: &[ClassLabelMap],
    pas: &[ClassLabelMap],
    class_count: usize,
    agg: Aggregation,
) -> Result<(f64, Vec<Option<f64>>)> {
    check_aligned(predictions.len(), pas.len())?;
    match agg {
        Aggregation::Micro => {
            let mut counts = IouCounts::new(class_count);
            for (i, (p, r)) in predictions.iter().zip(pas).enumerate() {
                counts.add_labels(p, r).map_err(|e| e.in_frame(i))?;
            }
            Ok((counts.mean(), counts.per_class()))
        }
        Aggregation::Macro => {
            let mut total = IouCounts::new(class_count);
            let mut sum = 0.0;
            for (i, (p, r)) in predictions.iter().zip(pas).enumerate() {
                let mut c = IouCounts::new(class_count);
                c.add_labels(p, r).map_err(|e| e.in_frame(i))?;
                sum += c.mean();
                total.merge(&c);
            }
            let mean = if predictions.is_empty() {
                1.0
            } else {
                sum / predictions.len() as f64
            };
            Ok((mean, total.per_class()))
        }
    }
}

/// Region integrity index of one mask against its superpixel refinement.
pub fn rii(m_init: &BinaryMask, m_refine: &BinaryMask) -> Result<f64> {
    iou(m_init, m_refine)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RicParams {
    pub alpha: f64,
}

impl Default for RicParams {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

/// Region integrity criterion, unnormalized: range `[0, 1 + alpha]`.
pub fn ric(miou_pa: f64, rii: f64, params: &RicParams) -> f64 {
    miou_pa + params.alpha * rii
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalScores {
    pub miou_pa: f64,
    pub rii: f64,
    pub ric: f64,
    pub per_class_iou: Vec<Option<f64>>,
}

/// Scores raw binary predictions against pseudo-annotations.
///
/// Each prediction is refined over its frame's superpixels; the refined mask
/// is compared with the pseudo-annotation (`miou_pa`) and with the raw
/// prediction (`rii`), both aggregated with `agg`.
pub fn evaluate(
    predictions: &[BinaryMask],
    pas: &[BinaryMask],
    superpixels: &[SuperpixelMap],
    refine: &RefineParams,
    ric_params: &RicParams,
    agg: Aggregation,
) -> Result<EvalScores> {
    check_aligned(predictions.len(), pas.len())?;
    check_aligned(predictions.len(), superpixels.len())?;
    let refined = predictions
        .iter()
        .zip(superpixels)
        .enumerate()
        .map(|(i, (p, sp))| {
            refine_mask(p, sp, refine)
                .map(|(r, _)| r)
                .map_err(|e| e.in_frame(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let miou = miou_pa(&refined, pas, agg)?;
    let integrity = miou_pa(predictions, &refined, agg)?;
    let mut counts = IouCounts::new(2);
    for (p, r) in refined.iter().zip(pas) {
        counts.add_masks(p, r)?;
    }
    Ok(EvalScores {
        miou_pa: miou,
        rii: integrity,
        ric: ric(miou, integrity, ric_params),
        per_class_iou: counts.per_class(),
    })
}
