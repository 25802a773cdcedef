//! Helpers for running the pipeline without networks: a synthetic world,
//! reference scorers and the stub model, served over the line protocol.

use std::io::{stdin, stdout};
use std::path::Path;

use pa_forge::evolution::stub::ContractingStub;
use pa_forge::evolution::{ModelHandle, Predictor};
use pa_forge::io::protocol::{composite_mask_path, serve_lines};
use pa_forge::io::{load_manifest, load_mask, load_rgb, parse_manifest, save_mask};
use pa_forge::lowlevel::{slic, SlicParams};
use pa_forge::selection::reference::{PaletteClassifier, SeamDiscriminator};
use pa_forge::selection::{CompositePatch, FrameRef};
use pa_forge::synth::{generate, palette_spec, write_world, SynthConfig};
use pa_forge::{Error, Result};

use crate::{CliError, CliResult, ScoreArgs, ScorerKind, StubModelArgs, SynthArgs};

pub fn synth(a: &SynthArgs) -> CliResult {
    let cfg = SynthConfig {
        videos: a.videos,
        frames: a.frames,
        classes: a.classes,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let world = generate(&cfg)?;
    write_world(&world, &a.out)?;
    out!("palette\t{}", palette_spec(cfg.classes));
    Ok(())
}

fn serve(handler: impl FnMut(&str) -> Result<String>) -> CliResult {
    serve_lines(stdin().lock(), stdout().lock(), handler).map_err(|e| {
        Error::Io {
            path: "<stdio>".into(),
            source: e,
        }
        .into()
    })
}

fn seam(path: &str) -> Result<String> {
    let path = Path::new(path);
    let composite = CompositePatch {
        image: load_rgb(path)?,
        mask: load_mask(composite_mask_path(path))?,
        fg_origin: FrameRef::new("request", 0),
        bg_origin: FrameRef::new("request", 0),
    };
    if composite.image.dims() != composite.mask.dims() {
        return Err(Error::InvalidParameter("composite and mask sizes differ".into()));
    }
    Ok(SeamDiscriminator::seam_score(&composite).to_string())
}

pub fn score(a: &ScoreArgs) -> CliResult {
    match a.kind {
        ScorerKind::Seam => serve(seam),
        ScorerKind::Palette => {
            let spec = a
                .palette
                .as_deref()
                .ok_or_else(|| CliError::Usage("--kind palette needs --palette".into()))?;
            let cls = PaletteClassifier::parse(spec)?;
            serve(|path| {
                let probs = cls.probabilities(&load_rgb(path)?);
                Ok(probs.iter().map(f64::to_string).collect::<Vec<_>>().join(" "))
            })
        }
    }
}

fn stub_request(stub: &mut ContractingStub, line: &str) -> Result<String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let bad = || Error::Protocol(format!("unrecognized request {line:?}"));
    match fields.as_slice() {
        ["train", v, e, list] => {
            let (v, e): (usize, usize) = (v.parse().map_err(|_| bad())?, e.parse().map_err(|_| bad())?);
            let text = std::fs::read_to_string(list).map_err(|err| Error::Io {
                path: list.into(),
                source: err,
            })?;
            if parse_manifest(&text)?.entries.is_empty() {
                return Err(Error::Protocol("empty training list".into()));
            }
            Ok(format!("stub-v{v}-e{e}"))
        }
        ["predict", handle, video, index, frame_path, out] => {
            let frame = FrameRef::new(*video, index.parse().map_err(|_| bad())?);
            let image = load_rgb(frame_path)?;
            let mask = stub.predict(&ModelHandle(handle.to_string()), &frame, &image)?;
            save_mask(&mask, out)?;
            Ok("ok".into())
        }
        _ => Err(bad()),
    }
}

pub fn stub_model(a: &StubModelArgs) -> CliResult {
    let initial = load_manifest(&a.initial)?;
    let truth = load_manifest(&a.truth)?;
    let truth_of: std::collections::HashMap<_, _> = truth
        .entries
        .iter()
        .map(|e| (e.frame.clone(), truth.pa_path(e)))
        .collect();
    let mut stub = ContractingStub::new();
    for e in &initial.entries {
        let missing = |what: &str| Error::InvalidParameter(format!("frame {} has no {what}", e.frame));
        let pa = load_mask(initial.pa_path(e).ok_or_else(|| missing("pseudo-annotation"))?)?;
        let gt_path = truth_of
            .get(&e.frame)
            .cloned()
            .flatten()
            .ok_or_else(|| missing("ground truth"))?;
        let gt = load_mask(gt_path)?;
        let sp = match a.k {
            0 => None,
            k => Some(slic(&load_rgb(initial.frame_path(e))?, &SlicParams::with_k(k))?),
        };
        let group = a.val_videos.contains(&e.frame.video) as u32;
        stub.insert_in_group(e.frame.clone(), pa, gt, sp.as_ref(), group)?;
    }
    serve(|line| stub_request(&mut stub, line))
}
