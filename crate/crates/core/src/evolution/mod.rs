//! Iterative pseudo-annotation evolution.
//!
//! Every version selects the trustworthy pseudo-annotations, trains a model
//! on them epoch by epoch while tracking the region integrity criterion (RIC)
//! on a held-out split, and lets the best-RIC model predict the next version.
//! The loop stops once the per-version RIC maximum stops moving.

mod align;
pub mod stub;

pub use align::{align_actions, DEFAULT_ALIGN_WINDOW};

use crate::error::{Error, Result};
use crate::metrics::{evaluate, Aggregation, EvalScores, RicParams};
use crate::raster::{BinaryMask, RgbImage, SuperpixelMap};
use crate::refine::{refine_mask, RefineParams};
use crate::selection::{select_pas, Candidate, FrameRef, ScorerSuite};

/// Opaque reference to a trained model, owned by the trainer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelHandle(pub String);

impl std::fmt::Display for ModelHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub struct TrainingSample<'a> {
    pub frame: &'a FrameRef,
    pub image: &'a RgbImage,
    pub pa: &'a BinaryMask,
}

pub trait Trainer {
    /// Advances the model of `version` by one epoch on the selected samples.
    fn train_epoch(
        &mut self,
        version: usize,
        epoch: usize,
        selected: &[TrainingSample<'_>],
    ) -> Result<ModelHandle>;
}

pub trait Predictor {
    /// Binary prediction for one frame; must match the frame's dimensions.
    fn predict(&mut self, model: &ModelHandle, frame: &FrameRef, image: &RgbImage)
        -> Result<BinaryMask>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

#[derive(Clone, Debug)]
pub struct EvolutionFrame {
    pub frame: FrameRef,
    pub image: RgbImage,
    pub superpixels: SuperpixelMap,
    pub pa: BinaryMask,
    pub split: Split,
    pub class: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub epsilon_epoch: f64,
    pub epsilon_version: f64,
    pub max_epochs: usize,
    pub max_versions: usize,
    pub ric: RicParams,
    pub refine: RefineParams,
    pub aggregation: Aggregation,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            epsilon_epoch: 0.005,
            epsilon_version: 0.005,
            max_epochs: 50,
            max_versions: 5,
            ric: RicParams::default(),
            refine: RefineParams::default(),
            aggregation: Aggregation::Micro,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_epoch > 0.0 && self.epsilon_version > 0.0) {
            return Err(Error::InvalidParameter(
                "convergence tolerances must be positive".into(),
            ));
        }
        if self.max_epochs == 0 || self.max_versions == 0 {
            return Err(Error::InvalidParameter(
                "max_epochs and max_versions must be at least 1".into(),
            ));
        }
        if self.ric.alpha < 0.0 {
            return Err(Error::InvalidParameter("ric alpha must be non-negative".into()));
        }
        self.refine.validate()
    }
}

/// Outcome of one version's training loop.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLoop<S> {
    pub best_model: ModelHandle,
    pub best_epoch: usize,
    pub ric_max: f64,
    pub trace: Vec<f64>,
    /// Whatever the validator returned alongside the best epoch's scores.
    pub best_snapshot: S,
}

/// Trains until consecutive RIC values differ by less than `epsilon_epoch`
/// or `max_epochs` is reached, keeping the highest-RIC epoch. The first
/// epoch is kept when no later one strictly improves on it.
pub fn run_epoch_loop<S>(
    trainer: &mut dyn Trainer,
    version: usize,
    selected: &[TrainingSample<'_>],
    validate: &mut dyn FnMut(&ModelHandle) -> Result<(EvalScores, S)>,
    cfg: &EvolutionConfig,
) -> Result<EpochLoop<S>> {
    let mut trace = Vec::new();
    let mut best: Option<(ModelHandle, usize, f64, S)> = None;
    for epoch in 0..cfg.max_epochs {
        let model = trainer
            .train_epoch(version, epoch, selected)
            .map_err(|e| match e {
                e @ Error::Trainer { .. } => e,
                other => Error::Trainer {
                    version,
                    epoch,
                    message: other.to_string(),
                },
            })?;
        let (scores, snapshot) = validate(&model)?;
        log::debug!(
            "v{version} epoch {epoch}: miou_pa {:.4} rii {:.4} ric {:.4}",
            scores.miou_pa,
            scores.rii,
            scores.ric
        );
        let ric = scores.ric;
        if best.as_ref().is_none_or(|b| ric > b.2) {
            best = Some((model, epoch, ric, snapshot));
        }
        trace.push(ric);
        if let [.., prev, last] = trace[..] {
            if (last - prev).abs() < cfg.epsilon_epoch {
                break;
            }
        }
    }
    let (best_model, best_epoch, ric_max, best_snapshot) =
        best.expect("max_epochs >= 1 runs at least one epoch");
    Ok(EpochLoop {
        best_model,
        best_epoch,
        ric_max,
        trace,
        best_snapshot,
    })
}

/// Validation predictions of a version's best epoch together with the
/// pseudo-annotations they were scored against.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationSnapshot {
    pub frames: Vec<FrameRef>,
    pub predictions: Vec<BinaryMask>,
    pub pas: Vec<BinaryMask>,
    pub scores: EvalScores,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VersionRecord {
    pub version: usize,
    pub selected_count: usize,
    pub epoch_ric_trace: Vec<f64>,
    pub best_epoch: usize,
    pub ric_max: f64,
    pub best_model: ModelHandle,
    pub validation: ValidationSnapshot,
    /// The next pseudo-annotation version, one mask per dataset frame.
    pub pa_snapshot: Vec<BinaryMask>,
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub final_model: ModelHandle,
    pub records: Vec<VersionRecord>,
}

impl Evolution {
    /// Pseudo-annotations produced by the last version.
    pub fn final_pas(&self) -> &[BinaryMask] {
        &self.records.last().expect("at least one version").pa_snapshot
    }
}

fn predict_checked(
    predictor: &mut dyn Predictor,
    model: &ModelHandle,
    f: &EvolutionFrame,
) -> Result<BinaryMask> {
    let wrap = |message: String| Error::Predictor {
        frame: f.frame.to_string(),
        message,
    };
    let m = predictor.predict(model, &f.frame, &f.image).map_err(|e| match e {
        e @ Error::Predictor { .. } => e,
        other => wrap(other.to_string()),
    })?;
    if m.dims() != f.image.dims() {
        return Err(wrap(format!(
            "prediction is {}x{}, frame is {}x{}",
            m.width(),
            m.height(),
            f.image.width(),
            f.image.height()
        )));
    }
    Ok(m)
}

/// Runs select-train-predict cycles over `dataset`, starting from each
/// frame's `pa`.
pub fn evolve(
    dataset: &[EvolutionFrame],
    trainer: &mut dyn Trainer,
    predictor: &mut dyn Predictor,
    scorers: &ScorerSuite<'_>,
    cfg: &EvolutionConfig,
) -> Result<Evolution> {
    cfg.validate()?;
    let val_idx: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset[i].split == Split::Validation)
        .collect();
    let train_idx: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset[i].split == Split::Train)
        .collect();
    if val_idx.is_empty() {
        return Err(Error::InvalidParameter("validation split is empty".into()));
    }
    let val_sps: Vec<SuperpixelMap> = val_idx
        .iter()
        .map(|&i| dataset[i].superpixels.clone())
        .collect();

    let mut pas: Vec<BinaryMask> = dataset.iter().map(|f| f.pa.clone()).collect();
    let mut records: Vec<VersionRecord> = Vec::new();
    for version in 0..cfg.max_versions {
        let candidates: Vec<Candidate> = train_idx
            .iter()
            .map(|&i| Candidate {
                frame: dataset[i].frame.clone(),
                image: dataset[i].image.clone(),
                pa: pas[i].clone(),
                expected_class: dataset[i].class,
            })
            .collect();
        let selection = select_pas(
            &candidates,
            &candidates,
            scorers,
            cfg.seed.wrapping_add(version as u64),
        )?;
        let selected: Vec<TrainingSample<'_>> = train_idx
            .iter()
            .enumerate()
            .filter(|(k, _)| selection.is_selected(*k))
            .map(|(_, &i)| TrainingSample {
                frame: &dataset[i].frame,
                image: &dataset[i].image,
                pa: &pas[i],
            })
            .collect();
        if selected.is_empty() {
            return Err(Error::EmptySelection { version });
        }
        log::info!(
            "version {version}: {} of {} pseudo-annotations selected",
            selected.len(),
            train_idx.len()
        );

        let val_pas: Vec<BinaryMask> = val_idx.iter().map(|&i| pas[i].clone()).collect();
        let mut validate = |model: &ModelHandle| -> Result<(EvalScores, Vec<BinaryMask>)> {
            let preds = val_idx
                .iter()
                .map(|&i| predict_checked(predictor, model, &dataset[i]))
                .collect::<Result<Vec<_>>>()?;
            let scores = evaluate(&preds, &val_pas, &val_sps, &cfg.refine, &cfg.ric, cfg.aggregation)?;
            Ok((scores, preds))
        };
        let outcome = run_epoch_loop(trainer, version, &selected, &mut validate, cfg)?;
        let selected_count = selected.len();
        drop(selected);

        let next: Vec<BinaryMask> = dataset
            .iter()
            .map(|f| {
                let pred = predict_checked(predictor, &outcome.best_model, f)?;
                Ok(refine_mask(&pred, &f.superpixels, &cfg.refine)?.0)
            })
            .collect::<Result<_>>()?;

        let scores = evaluate(
            &outcome.best_snapshot,
            &val_pas,
            &val_sps,
            &cfg.refine,
            &cfg.ric,
            cfg.aggregation,
        )?;
        log::info!(
            "version {version}: best epoch {} of {}, ric_max {:.6}",
            outcome.best_epoch,
            outcome.trace.len(),
            outcome.ric_max
        );
        let prev = records.last().map(|r| r.ric_max);
        records.push(VersionRecord {
            version,
            selected_count,
            epoch_ric_trace: outcome.trace,
            best_epoch: outcome.best_epoch,
            ric_max: outcome.ric_max,
            best_model: outcome.best_model,
            validation: ValidationSnapshot {
                frames: val_idx.iter().map(|&i| dataset[i].frame.clone()).collect(),
                predictions: outcome.best_snapshot,
                pas: val_pas,
                scores,
            },
            pa_snapshot: next.clone(),
        });
        pas = next;
        if let Some(prev) = prev {
            if (outcome.ric_max - prev).abs() < cfg.epsilon_version {
                break;
            }
        }
    }
    let final_model = records
        .last()
        .map(|r| r.best_model.clone())
        .expect("max_versions >= 1");
    Ok(Evolution {
        final_model,
        records,
    })
}
