//! High-quality pseudo-annotation selection.
//!
//! Each candidate mask is cut out of its frame and pasted onto a background
//! patch from the same video. The composite passes the strict test when the
//! discriminator finds it realistic; otherwise the masked foreground alone
//! passes the relaxed test when the classifier still recognizes the expected
//! class.

mod patch;
pub mod reference;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use patch::{
    cut_and_paste, foreground_patch, masked_foreground, sample_background_patch, square_around,
    BackgroundSource, CompositePatch, FrameRef, Patch, BACKGROUND_TRIES,
};

use crate::error::{Error, Result};
use crate::raster::{mask_area, BBox, BinaryMask, RgbImage};

/// Connected PA components above this many pixels are judged separately.
pub const MIN_COMPONENT_AREA: usize = 25;

/// Classifier input: the foreground patch with non-mask pixels zeroed.
pub struct MaskedForeground<'a> {
    pub image: &'a RgbImage,
    pub mask: &'a BinaryMask,
    pub origin: &'a FrameRef,
    /// Patch location in the source frame.
    pub bbox: BBox,
}

pub trait Discriminator {
    /// Realism of a cut-and-paste composite, in `[0, 1]`.
    fn score(&self, composite: &CompositePatch) -> Result<f64>;
}

pub trait Classifier {
    /// Per-class probabilities, summing to one.
    fn classify(&self, input: &MaskedForeground<'_>) -> Result<Vec<f64>>;
}

pub struct ScorerSuite<'a> {
    pub discriminator: &'a dyn Discriminator,
    pub classifier: Option<&'a dyn Classifier>,
    pub disc_threshold: f64,
    pub cls_threshold: f64,
}

impl<'a> ScorerSuite<'a> {
    pub fn new(discriminator: &'a dyn Discriminator, classifier: Option<&'a dyn Classifier>) -> Self {
        Self {
            discriminator,
            classifier,
            disc_threshold: 0.5,
            cls_threshold: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, t) in [("disc", self.disc_threshold), ("cls", self.cls_threshold)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidParameter(format!(
                    "{name} threshold must lie in [0, 1], got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// One frame offered for selection.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub frame: FrameRef,
    pub image: RgbImage,
    pub pa: BinaryMask,
    pub expected_class: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reason {
    Strict,
    Relaxed,
    Rejected,
}

impl std::fmt::Display for Reason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reason::Strict => "strict",
            Reason::Relaxed => "relaxed",
            Reason::Rejected => "rejected",
        })
    }
}

/// Scores of one connected PA component.
#[derive(Clone, Debug, PartialEq)]
pub struct PartScore {
    pub bbox: BBox,
    pub discriminator: Option<f64>,
    pub classifier: Option<f64>,
    pub reason: Reason,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameDecision {
    pub frame: FrameRef,
    pub reason: Reason,
    pub parts: Vec<PartScore>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub decisions: Vec<FrameDecision>,
}

impl SelectionResult {
    /// Selected frames in input order.
    pub fn selected(&self) -> Vec<&FrameRef> {
        self.decisions
            .iter()
            .filter(|d| d.reason != Reason::Rejected)
            .map(|d| &d.frame)
            .collect()
    }

    pub fn is_selected(&self, i: usize) -> bool {
        self.decisions[i].reason != Reason::Rejected
    }
}

/// Components judged as separate candidates; the whole mask when no
/// component is large enough.
fn parts_of(pa: &BinaryMask) -> Vec<BinaryMask> {
    let parts: Vec<BinaryMask> = pa
        .components()
        .into_iter()
        .filter(|c| mask_area(c) > MIN_COMPONENT_AREA)
        .collect();
    if parts.is_empty() {
        vec![pa.clone()]
    } else {
        parts
    }
}

fn part_seed(seed: u64, candidate: usize, part: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((candidate as u64) << 20) | part as u64);
    rng.next_u64()
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Scorer(format!(
            "classifier probabilities must be non-negative and sum to 1, got {p:?}"
        )));
    }
    Ok(())
}

fn judge_part(
    cand: &Candidate,
    part: &BinaryMask,
    pool: &[BackgroundSource<'_>],
    scorers: &ScorerSuite<'_>,
    seed: u64,
) -> PartScore {
    let mut score = PartScore {
        bbox: BBox::new(0, 0, 1, 1),
        discriminator: None,
        classifier: None,
        reason: Reason::Rejected,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let fg = foreground_patch(&cand.image, part, cand.frame.clone())?;
        score.bbox = fg.bbox;
        let mask_crop = part.crop(fg.bbox)?;
        let bg = patch::sample_background_rect(pool, fg.bbox.w, fg.bbox.h, seed)?;
        let composite = cut_and_paste(&fg, &mask_crop, &bg)?;
        let d = scorers.discriminator.score(&composite)?;
        score.discriminator = Some(d);
        if d > scorers.disc_threshold {
            score.reason = Reason::Strict;
            return Ok(());
        }
        if let Some(classifier) = scorers.classifier {
            let masked = masked_foreground(&fg, &mask_crop)?;
            let probs = classifier.classify(&MaskedForeground {
                image: &masked,
                mask: &mask_crop,
                origin: &cand.frame,
                bbox: fg.bbox,
            })?;
            check_probabilities(&probs)?;
            let p = probs.get(cand.expected_class).copied().ok_or_else(|| {
                Error::Scorer(format!(
                    "classifier returned {} classes, expected class is {}",
                    probs.len(),
                    cand.expected_class
                ))
            })?;
            score.classifier = Some(p);
            if p > scorers.cls_threshold {
                score.reason = Reason::Relaxed;
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("{}: candidate rejected: {e}", cand.frame);
        score.reason = Reason::Rejected;
        score.error = Some(e.to_string());
    }
    score
}

/// Judges every candidate; backgrounds are drawn from `background_pool`
/// frames of the candidate's video.
pub fn select_pas(
    candidates: &[Candidate],
    background_pool: &[Candidate],
    scorers: &ScorerSuite<'_>,
    rng_seed: u64,
) -> Result<SelectionResult> {
    scorers.validate()?;
    let mut decisions = Vec::with_capacity(candidates.len());
    for (ci, cand) in candidates.iter().enumerate() {
        if cand.pa.is_empty() {
            decisions.push(FrameDecision {
                frame: cand.frame.clone(),
                reason: Reason::Rejected,
                parts: Vec::new(),
            });
            continue;
        }
        let pool: Vec<BackgroundSource<'_>> = background_pool
            .iter()
            .filter(|c| c.frame.video == cand.frame.video)
            .map(|c| BackgroundSource {
                frame_ref: &c.frame,
                image: &c.image,
                pa: &c.pa,
            })
            .collect();
        let parts: Vec<PartScore> = parts_of(&cand.pa)
            .iter()
            .enumerate()
            .map(|(pi, part)| judge_part(cand, part, &pool, scorers, part_seed(rng_seed, ci, pi)))
            .collect();
        let reason = if parts.iter().any(|p| p.reason == Reason::Rejected) {
            Reason::Rejected
        } else if parts.iter().all(|p| p.reason == Reason::Strict) {
            Reason::Strict
        } else {
            Reason::Relaxed
        };
        log::debug!("{}: {reason}", cand.frame);
        decisions.push(FrameDecision {
            frame: cand.frame.clone(),
            reason,
            parts,
        });
    }
    Ok(SelectionResult { decisions })
}
