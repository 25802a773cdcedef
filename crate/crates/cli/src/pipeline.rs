//! Dataset-level subcommands: init-pa, select, metrics, evolve.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::rc::Rc;

use pa_forge::attention::{attention_maps, initial_mask, nearest_sampled, GcamRequest, PaV0Config};
use pa_forge::evolution::{self, EvolutionConfig, EvolutionFrame, Split};
use pa_forge::io::protocol::{shared, ProcessClassifier, ProcessDiscriminator, ProcessPredictor, ProcessTrainer};
use pa_forge::io::{
    load_label_map, load_manifest, load_mask, load_rgb, load_tensor, render_overlay, save_manifest, save_mask,
    save_rgb, Manifest, ManifestEntry,
};
use pa_forge::lowlevel::{slic, SlicParams};
use pa_forge::metrics::{miou_pa, Aggregation, IouCounts, RicParams};
use pa_forge::raster::{BinaryMask, SuperpixelMap};
use pa_forge::refine::refine_mask;
use pa_forge::selection::{select_pas, Candidate, Classifier, FrameRef, ScorerSuite};
use pa_forge::synth::{action_tensor_paths, actor_tensor_paths};
use pa_forge::Error;

use crate::{CliError, CliResult, EvolveArgs, InitPaArgs, MetricsArgs, ScorerOpts, SelectArgs};

const OVERLAY_COLOR: [u8; 3] = [255, 255, 0];

fn mkdir(p: &Path) -> CliResult {
    std::fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).map_err(|e| {
        Error::Io {
            path: p.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn mask_name(frame: &FrameRef) -> String {
    format!("{}_{:05}.png", frame.video, frame.index)
}

fn class_of(e: &ManifestEntry) -> CliResult<usize> {
    let label = e
        .label
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter(format!("frame {} has no class label", e.frame)))?;
    label
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("frame {}: class label {label:?} is not a number", e.frame)).into())
}

fn require_pa(m: &Manifest, e: &ManifestEntry) -> CliResult<PathBuf> {
    m.pa_path(e)
        .ok_or_else(|| Error::InvalidParameter(format!("frame {} has no pseudo-annotation", e.frame)).into())
}

/// Manifest entries with frame paths made absolute so the manifest can live
/// anywhere.
fn rebased(m: &Manifest, e: &ManifestEntry, pa: Option<PathBuf>) -> CliResult<ManifestEntry> {
    Ok(ManifestEntry {
        frame: e.frame.clone(),
        frame_path: absolute(&m.frame_path(e))?,
        pa_path: pa,
        label: e.label.clone(),
    })
}

fn gcam_request(features: &Path, gradients: &Path, class_id: u32) -> CliResult<GcamRequest> {
    Ok(GcamRequest {
        features: load_tensor(features)?,
        gradients: load_tensor(gradients)?,
        class_id,
    })
}

pub fn init_pa(a: &InitPaArgs) -> CliResult {
    let m = load_manifest(&a.manifest)?;
    let cfg = PaV0Config {
        slic: SlicParams::with_k(a.k),
        refine: a.refine.params()?,
        use_action_branch: !a.no_action,
        ..PaV0Config::default()
    };
    let pa_dir = a.out_dir.join("pa");
    mkdir(&pa_dir)?;
    if let Some(d) = &a.emit_overlay {
        mkdir(d)?;
    }

    // frames of a video in index order, for matching action slices
    let mut videos: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in m.entries.iter().enumerate() {
        videos.entry(e.frame.video.as_str()).or_default().push(i);
    }
    let mut pa_of: HashMap<usize, PathBuf> = HashMap::new();
    for (video, mut idx) in videos {
        idx.sort_by_key(|&i| m.entries[i].frame.index);
        let class = class_of(&m.entries[idx[0]])? as u32;
        let action = if cfg.use_action_branch {
            let (f, g) = action_tensor_paths(&a.attention, video);
            let maps = attention_maps(&gcam_request(&f, &g, class)?)?;
            let slot = nearest_sampled(idx.len(), maps.len())?;
            Some((maps, slot))
        } else {
            None
        };
        for (k, &i) in idx.iter().enumerate() {
            let e = &m.entries[i];
            let image = load_rgb(m.frame_path(e))?;
            let (f, g) = actor_tensor_paths(&a.attention, &e.frame);
            let actor = attention_maps(&gcam_request(&f, &g, class_of(e)? as u32)?)?;
            let action_map = action.as_ref().map(|(maps, slot)| &maps[slot[k]]);
            let m_init = initial_mask(&image, &actor[0], action_map, &cfg)
                .map_err(|err| Error::InvalidParameter(format!("frame {}: {err}", e.frame)))?;
            let sp = slic(&image, &cfg.slic)?;
            let (pa, _) = refine_mask(&m_init, &sp, &cfg.refine)?;
            let rel = PathBuf::from("pa").join(mask_name(&e.frame));
            save_mask(&pa, a.out_dir.join(&rel))?;
            if let Some(d) = &a.emit_overlay {
                save_rgb(&render_overlay(&image, &pa, OVERLAY_COLOR)?, d.join(mask_name(&e.frame)))?;
            }
            out!("{} {} {}", e.frame.video, e.frame.index, pa.area());
            pa_of.insert(i, rel);
        }
    }
    let entries = m
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| rebased(&m, e, pa_of.remove(&i)))
        .collect::<CliResult<Vec<_>>>()?;
    save_manifest(
        &Manifest {
            entries,
            base_dir: a.out_dir.clone(),
        },
        a.out_dir.join("manifest.txt"),
    )?;
    Ok(())
}

struct Scorers {
    discriminator: ProcessDiscriminator,
    classifier: Option<ProcessClassifier>,
    opts: ScorerOpts,
}

impl Scorers {
    fn spawn(opts: &ScorerOpts) -> CliResult<Self> {
        Ok(Self {
            discriminator: ProcessDiscriminator::spawn(&opts.discriminator)?,
            classifier: opts.classifier.as_deref().map(ProcessClassifier::spawn).transpose()?,
            opts: opts.clone(),
        })
    }

    fn suite(&self) -> ScorerSuite<'_> {
        let mut s = ScorerSuite::new(
            &self.discriminator,
            self.classifier.as_ref().map(|c| c as &dyn Classifier),
        );
        s.disc_threshold = self.opts.disc_threshold;
        s.cls_threshold = self.opts.cls_threshold;
        s
    }
}

fn candidates(m: &Manifest) -> CliResult<Vec<Candidate>> {
    m.entries
        .iter()
        .map(|e| {
            Ok(Candidate {
                frame: e.frame.clone(),
                image: load_rgb(m.frame_path(e))?,
                pa: load_mask(require_pa(m, e)?)?,
                expected_class: class_of(e)?,
            })
        })
        .collect()
}

fn score_field(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

pub fn select(a: &SelectArgs) -> CliResult {
    let m = load_manifest(&a.manifest)?;
    let cands = candidates(&m)?;
    let scorers = Scorers::spawn(&a.scorers)?;
    let result = select_pas(&cands, &cands, &scorers.suite(), a.seed)?;
    let mut kept = Vec::new();
    for (i, d) in result.decisions.iter().enumerate() {
        // weakest part decides the frame, so report it
        let min = |f: fn(&pa_forge::selection::PartScore) -> Option<f64>| {
            d.parts.iter().filter_map(f).reduce(f64::min)
        };
        out!(
            "{} {} {} {} {}",
            d.frame.video,
            d.frame.index,
            d.reason,
            score_field(min(|p| p.discriminator)),
            score_field(min(|p| p.classifier))
        );
        if result.is_selected(i) {
            let e = &m.entries[i];
            kept.push(rebased(&m, e, Some(absolute(&require_pa(&m, e)?)?))?);
        }
    }
    log::info!("{} of {} pseudo-annotations selected", kept.len(), cands.len());
    if let Some(out) = &a.out {
        save_manifest(
            &Manifest {
                entries: kept,
                base_dir: PathBuf::new(),
            },
            out,
        )?;
    }
    Ok(())
}

/// Paths listed one per line; relative ones resolve against the list's
/// directory. Blank lines and `#` comments are skipped.
fn read_list(path: &Path) -> CliResult<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

fn parse_aggregation(s: &str) -> CliResult<Aggregation> {
    match s {
        "micro" => Ok(Aggregation::Micro),
        "macro" => Ok(Aggregation::Macro),
        other => Err(CliError::Usage(format!("unknown aggregation {other:?}; expected micro or macro"))),
    }
}

/// The listed predictions are scored as given against the listed
/// pseudo-annotations; the region integrity compares each prediction with
/// its own superpixel refinement.
pub fn metrics(a: &MetricsArgs) -> CliResult {
    let agg = parse_aggregation(&a.aggregation)?;
    let refine = a.refine.params()?;
    let preds = read_list(&a.predictions)?
        .iter()
        .map(load_mask)
        .collect::<Result<Vec<_>, _>>()?;
    let pas = read_list(&a.pas)?
        .iter()
        .map(load_mask)
        .collect::<Result<Vec<_>, _>>()?;
    let sps: Vec<SuperpixelMap> = match (&a.labels, &a.frames) {
        (Some(l), _) => read_list(l)?
            .iter()
            .map(load_label_map)
            .collect::<Result<_, _>>()?,
        (None, Some(f)) => {
            let params = SlicParams::with_k(a.k);
            read_list(f)?
                .iter()
                .map(|p| slic(&load_rgb(p)?, &params))
                .collect::<Result<_, _>>()?
        }
        (None, None) => unreachable!("clap requires --labels or --frames"),
    };
    if sps.len() != preds.len() {
        return Err(Error::LengthMismatch {
            what: "superpixel maps per prediction",
            expected: preds.len(),
            actual: sps.len(),
        }
        .into());
    }
    let refined = preds
        .iter()
        .zip(&sps)
        .map(|(p, sp)| refine_mask(p, sp, &refine).map(|r| r.0))
        .collect::<Result<Vec<_>, _>>()?;
    let miou = miou_pa(&preds, &pas, agg)?;
    let integrity = miou_pa(&preds, &refined, agg)?;
    let ric = pa_forge::metrics::ric(miou, integrity, &RicParams { alpha: a.ric_alpha });
    let mut counts = IouCounts::new(2);
    for (p, r) in preds.iter().zip(&pas) {
        counts.add_masks(p, r)?;
    }
    let mut line = format!("miou_pa={miou}\trii={integrity}\tric={ric}");
    for (c, v) in counts.per_class().iter().enumerate() {
        line.push_str(&format!("\tiou_{}={}", c + 1, v.map_or_else(|| "-".to_string(), |v| v.to_string())));
    }
    out!("{line}");
    Ok(())
}

pub fn evolve(a: &EvolveArgs) -> CliResult {
    let m = load_manifest(&a.manifest)?;
    let refine = a.refine.params()?;
    let slic_params = SlicParams::with_k(a.k);
    let mut dataset = Vec::with_capacity(m.entries.len());
    let mut frame_paths = HashMap::new();
    for e in &m.entries {
        let path = m.frame_path(e);
        let image = load_rgb(&path)?;
        let superpixels = slic(&image, &slic_params)?;
        dataset.push(EvolutionFrame {
            frame: e.frame.clone(),
            pa: load_mask(require_pa(&m, e)?)?,
            superpixels,
            image,
            split: if a.val_videos.contains(&e.frame.video) {
                Split::Validation
            } else {
                Split::Train
            },
            class: class_of(e)?,
        });
        frame_paths.insert(e.frame.clone(), path);
    }
    let cfg = EvolutionConfig {
        epsilon_epoch: a.eps_epoch,
        epsilon_version: a.eps_version,
        max_epochs: a.max_epochs,
        max_versions: a.max_versions,
        ric: RicParams { alpha: a.ric_alpha },
        refine,
        seed: a.seed,
        ..EvolutionConfig::default()
    };

    let scorers = Scorers::spawn(&a.scorers)?;
    let trainer_proc = shared(&a.trainer)?;
    let predictor_proc = match a.predictor.as_deref() {
        None => Rc::clone(&trainer_proc),
        Some(cmd) if cmd == a.trainer => Rc::clone(&trainer_proc),
        Some(cmd) => shared(cmd)?,
    };
    let mut trainer = ProcessTrainer::new(trainer_proc, frame_paths.clone())?;
    let mut predictor = ProcessPredictor::new(predictor_proc, frame_paths)?;
    let run = evolution::evolve(&dataset, &mut trainer, &mut predictor, &scorers.suite(), &cfg)?;

    mkdir(&a.out_dir)?;
    let mut report = String::new();
    for r in &run.records {
        let line = format!("{} {} {} {:.6}", r.version, r.selected_count, r.best_epoch, r.ric_max);
        out!("{line}");
        report.push_str(&line);
        report.push('\n');
        let name = format!("pa_v{}", r.version + 1);
        write_pas(&m, &r.pa_snapshot, &a.out_dir, &name)?;
    }
    write_pas(&m, run.final_pas(), &a.out_dir, "final")?;
    let report_path = a.out_dir.join("report.txt");
    std::fs::write(&report_path, report).map_err(|e| Error::Io {
        path: report_path,
        source: e,
    })?;
    log::info!("final model {}", run.final_model);
    Ok(())
}

/// Masks under `dir/name/` plus `dir/name.txt`, a manifest pointing at them.
fn write_pas(m: &Manifest, pas: &[BinaryMask], dir: &Path, name: &str) -> CliResult {
    mkdir(&dir.join(name))?;
    let mut entries = Vec::with_capacity(pas.len());
    for (e, pa) in m.entries.iter().zip(pas) {
        let rel = PathBuf::from(name).join(mask_name(&e.frame));
        save_mask(pa, dir.join(&rel))?;
        entries.push(rebased(m, e, Some(rel))?);
    }
    save_manifest(
        &Manifest {
            entries,
            base_dir: dir.to_path_buf(),
        },
        dir.join(format!("{name}.txt")),
    )?;
    Ok(())
}
