use pa_forge::attention::PaV0Config;
use pa_forge::evolution::stub::ContractingStub;
use pa_forge::evolution::{
    align_actions, evolve, EvolutionConfig, EvolutionFrame, ModelHandle, Predictor, Split, Trainer, TrainingSample,
};
use pa_forge::lowlevel::SlicParams;
use pa_forge::metrics::{evaluate, miou_pa, Aggregation, RicParams};
use pa_forge::raster::{BinaryMask, RgbImage, SuperpixelMap};
use pa_forge::refine::refine_mask;
use pa_forge::selection::reference::{CoverageClassifier, SeamDiscriminator};
use pa_forge::selection::{CompositePatch, Discriminator, FrameRef, ScorerSuite};
use pa_forge::synth::{generate, initial_dataset, SynthConfig};
use pa_forge::Result;
use proptest::prelude::*;

struct Always;
impl Discriminator for Always {
    fn score(&self, _: &CompositePatch) -> Result<f64> {
        Ok(1.0)
    }
}

/// Handle names the version; nothing is learned.
struct ByVersion;
impl Trainer for ByVersion {
    fn train_epoch(&mut self, v: usize, _: usize, _: &[TrainingSample<'_>]) -> Result<ModelHandle> {
        Ok(ModelHandle(v.to_string()))
    }
}

/// Predicts pixel-index ranges of a 20x10 frame, one range per version.
struct Ranges(Vec<(usize, usize)>);
impl Predictor for Ranges {
    fn predict(&mut self, model: &ModelHandle, _: &FrameRef, _: &RgbImage) -> Result<BinaryMask> {
        let (lo, hi) = self.0[model.0.parse::<usize>().unwrap()];
        BinaryMask::from_fn(20, 10, |x, y| (lo..hi).contains(&(y * 20 + x)))
    }
}

fn range_frame(i: u32, split: Split, lo: usize, hi: usize) -> EvolutionFrame {
    EvolutionFrame {
        frame: FrameRef::new("r", i),
        image: RgbImage::from_fn(20, 10, |x, y| [(x * 12) as u8, (y * 25) as u8, 7]).unwrap(),
        // one region per pixel, so refinement keeps any mask as it is
        superpixels: SuperpixelMap::new(20, 10, (0..200).collect(), 200).unwrap(),
        pa: BinaryMask::from_fn(20, 10, |x, y| (lo..hi).contains(&(y * 20 + x))).unwrap(),
        split,
        class: 1,
    }
}

fn range_config() -> EvolutionConfig {
    EvolutionConfig {
        max_epochs: 1,
        max_versions: 6,
        epsilon_version: 0.05,
        ric: RicParams { alpha: 0.0 },
        ..EvolutionConfig::default()
    }
}

#[test]
fn version_loop_stops_when_ric_max_settles() {
    let data = [range_frame(0, Split::Validation, 0, 60), range_frame(1, Split::Train, 0, 60)];
    // ric_max per version: 60/150, 90/150, 61/100
    let mut pred = Ranges(vec![(0, 150), (0, 90), (29, 100), (0, 200), (0, 200), (0, 200)]);
    let ev = evolve(&data, &mut ByVersion, &mut pred, &ScorerSuite::new(&Always, None), &range_config()).unwrap();
    let rics: Vec<f64> = ev.records.iter().map(|r| r.ric_max).collect();
    assert_eq!(rics.len(), 3);
    for (got, want) in rics.iter().zip([0.4, 0.6, 0.61]) {
        assert!((got - want).abs() < 1e-12, "{rics:?}");
    }
    assert_eq!(ev.final_model, ModelHandle("2".into()));
}

#[test]
fn single_version_snapshot_is_refined_prediction() {
    let data = [range_frame(0, Split::Validation, 0, 60), range_frame(1, Split::Train, 10, 40)];
    let cfg = EvolutionConfig {
        max_versions: 1,
        ..range_config()
    };
    let mut pred = Ranges(vec![(5, 77)]);
    let ev = evolve(&data, &mut ByVersion, &mut pred, &ScorerSuite::new(&Always, None), &cfg).unwrap();
    assert_eq!(ev.records.len(), 1);
    let want: Vec<BinaryMask> = data
        .iter()
        .map(|f| {
            let p = pred.predict(&ModelHandle("0".into()), &f.frame, &f.image).unwrap();
            refine_mask(&p, &f.superpixels, &cfg.refine).unwrap().0
        })
        .collect();
    assert_eq!(ev.final_pas(), &want[..]);
    assert_eq!(ev.records[0].selected_count, 1);
}

#[test]
fn evolution_on_a_synthetic_world() {
    let world = generate(&SynthConfig {
        videos: 10,
        ..SynthConfig::default()
    })
    .unwrap();
    let pa_cfg = PaV0Config {
        slic: SlicParams::with_k(64),
        ..PaV0Config::default()
    };
    let ds = initial_dataset(&world, &pa_cfg, |v| v.id.ends_with('4') || v.id.ends_with('9')).unwrap();
    let mut stub = ContractingStub::new();
    let mut cls = CoverageClassifier::new(world.config.classes + 1);
    for (f, t) in ds.frames.iter().zip(&ds.truths) {
        let group = (f.split == Split::Validation) as u32;
        stub.insert_in_group(f.frame.clone(), f.pa.clone(), t.clone(), Some(&f.superpixels), group)
            .unwrap();
        cls.insert(f.frame.clone(), t.clone(), f.class);
    }
    let suite = ScorerSuite::new(&SeamDiscriminator, Some(&cls));
    let cfg = EvolutionConfig::default();
    let run = || {
        let (mut t, mut p) = (stub.clone(), stub.clone());
        evolve(&ds.frames, &mut t, &mut p, &suite, &cfg).unwrap()
    };
    let ev = run();
    assert!(ev.records.len() >= 2);

    let initial: Vec<BinaryMask> = ds.frames.iter().map(|f| f.pa.clone()).collect();
    let mut gt = vec![miou_pa(&initial, &ds.truths, Aggregation::Micro).unwrap()];
    for r in &ev.records {
        gt.push(miou_pa(&r.pa_snapshot, &ds.truths, Aggregation::Micro).unwrap());
        let val_sps: Vec<SuperpixelMap> = ds
            .frames
            .iter()
            .filter(|f| f.split == Split::Validation)
            .map(|f| f.superpixels.clone())
            .collect();
        let s = evaluate(&r.validation.predictions, &r.validation.pas, &val_sps, &cfg.refine, &cfg.ric, cfg.aggregation)
            .unwrap();
        assert_eq!(s.ric, r.ric_max);
        let top = r.epoch_ric_trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.epoch_ric_trace[r.best_epoch], top);
        assert!(r.epoch_ric_trace[..r.best_epoch].iter().all(|&x| x < top));
    }
    assert!(gt.windows(2).all(|w| w[1] >= w[0]), "{gt:?}");
    assert!(gt.last().unwrap() > &gt[0]);
    assert_eq!(ev.final_model, ev.records.last().unwrap().best_model);

    let again = run();
    assert_eq!(again.records, ev.records);
}

/// Window votes counted directly; ties by summed confidence, then by
/// earliest first occurrence.
fn vote_oracle(labels: &[u8], window: usize, conf: Option<&[f64]>) -> Vec<u8> {
    let n = labels.len() as isize;
    let half = (window / 2) as isize;
    (0..n)
        .map(|i| {
            let mut best: Option<(usize, f64, usize, u8)> = None;
            for cand in 0..=u8::MAX {
                let Some(first) = labels.iter().position(|&l| l == cand) else { continue };
                let (mut votes, mut c) = (0usize, 0.0);
                for j in (i - half).max(0)..(i + half + 1).min(n) {
                    if labels[j as usize] == cand {
                        votes += 1;
                        c += conf.map_or(0.0, |c| c[j as usize]);
                    }
                }
                if votes == 0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bv, bc, bf, _)) => (votes, c) > (bv, bc) || ((votes, c) == (bv, bc) && first < bf),
                };
                if better {
                    best = Some((votes, c, first, cand));
                }
            }
            best.unwrap().3
        })
        .collect()
}

#[test]
fn alignment_example() {
    let seq = b"aabbbaa";
    let got = align_actions(seq, 5, None).unwrap();
    assert_eq!(got, vote_oracle(seq, 5, None));
    assert_eq!(&got, b"aabbbaa");
    assert_eq!(align_actions(b"aabaa", 3, None).unwrap(), b"aaaaa");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn alignment_matches_vote_oracle(
        seq in prop::collection::vec(0u8..4, 1..30),
        half in 0usize..5,
        with_conf in any::<bool>(),
        conf_seed in prop::collection::vec(0u8..4, 30),
    ) {
        let window = 2 * half + 1;
        // coarse confidences keep exact ties possible
        let conf: Vec<f64> = conf_seed[..seq.len()].iter().map(|&c| c as f64 * 0.25).collect();
        let conf = with_conf.then_some(&conf[..]);
        let got = align_actions(&seq, window, conf).unwrap();
        prop_assert_eq!(&got, &vote_oracle(&seq, window, conf));
        prop_assert!(got.iter().all(|l| seq.contains(l)));
    }

    #[test]
    fn constant_sequences_are_fixed(label in 0u8..9, n in 1usize..40, half in 0usize..6) {
        let seq = vec![label; n];
        prop_assert_eq!(align_actions(&seq, 2 * half + 1, None).unwrap(), seq);
    }
}
