use pa_forge::metrics::{
    evaluate, iou, miou_multiclass, miou_pa, ric, rii, Aggregation, ClassLabelMap, RicParams,
};
use pa_forge::raster::{BinaryMask, SuperpixelMap};
use pa_forge::refine::{refine_batch, refine_mask, OverlapMode, RefineParams};
use proptest::prelude::*;

/// Labels of `n` regions on a `w x h` frame, each label present at least once.
fn partition(w: usize, h: usize, n: usize) -> impl Strategy<Value = SuperpixelMap> {
    prop::collection::vec(0..n as u32, w * h).prop_map(move |mut labels| {
        for r in 0..n {
            labels[r] = r as u32;
        }
        SuperpixelMap::new(w, h, labels, n).unwrap()
    })
}

fn mask(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
    prop::collection::vec(any::<bool>(), w * h).prop_map(move |b| BinaryMask::new(w, h, b).unwrap())
}

fn params() -> impl Strategy<Value = RefineParams> {
    (0.0f64..=1.0, 0.01f64..=1.0, any::<bool>()).prop_map(|(alpha, beta, strict)| RefineParams {
        alpha,
        beta,
        overlap_mode: if strict { OverlapMode::StrictIou } else { OverlapMode::OverlapRatio },
    })
}

/// The two predicates evaluated region by region with plain counting.
fn refine_oracle(m: &BinaryMask, sp: &SuperpixelMap, p: &RefineParams) -> Vec<bool> {
    let (w, h) = m.dims();
    let m_area = m.bits().iter().filter(|&&b| b).count();
    let mut keep = vec![false; sp.region_count()];
    for r in 0..sp.region_count() as u32 {
        let (mut area, mut inter) = (0usize, 0usize);
        for y in 0..h {
            for x in 0..w {
                if sp.label(x, y) == r {
                    area += 1;
                    inter += m.get(x, y) as usize;
                }
            }
        }
        let overlap = match p.overlap_mode {
            OverlapMode::OverlapRatio => inter as f64 / area as f64,
            OverlapMode::StrictIou => inter as f64 / (area + m_area - inter) as f64,
        };
        keep[r as usize] = overlap > p.alpha && (area as f64 / (w * h) as f64) < p.beta;
    }
    sp.labels().iter().map(|&l| keep[l as usize]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn refine_equals_region_loop((m, sp) in (mask(16, 16), partition(16, 16, 6)), p in params()) {
        let (out, report) = refine_mask(&m, &sp, &p).unwrap();
        prop_assert_eq!(out.bits(), &refine_oracle(&m, &sp, &p)[..]);
        for r in &report.regions {
            prop_assert_eq!(r.selected, r.overlap > p.alpha && r.area_ratio < p.beta);
        }
        // whole superpixels only
        for r in 0..6u32 {
            let px: Vec<bool> = (0..256).filter(|&i| sp.labels()[i] == r).map(|i| out.bits()[i]).collect();
            prop_assert!(px.iter().all(|&b| b == px[0]));
        }
    }

    #[test]
    fn raising_alpha_or_lowering_beta_never_adds(
        (m, sp) in (mask(12, 12), partition(12, 12, 9)),
        p in params(),
        da in 0.0f64..0.5,
        db in 0.0f64..0.5,
    ) {
        let base = refine_mask(&m, &sp, &p).unwrap().1.selected_regions();
        let stricter = RefineParams { alpha: (p.alpha + da).min(1.0), ..p };
        let smaller = RefineParams { beta: (p.beta - db).max(0.01), ..p };
        for q in [stricter, smaller] {
            let sel = refine_mask(&m, &sp, &q).unwrap().1.selected_regions();
            prop_assert!(sel.iter().all(|r| base.contains(r)));
        }
    }

    #[test]
    fn zero_alpha_full_beta_gives_superpixel_closure((m, sp) in (mask(10, 10), partition(10, 10, 7))) {
        let p = RefineParams { alpha: 0.0, beta: 1.0, overlap_mode: OverlapMode::OverlapRatio };
        let (out, _) = refine_mask(&m, &sp, &p).unwrap();
        let touched: Vec<bool> = (0..7u32)
            .map(|r| (0..100).any(|i| sp.labels()[i] == r && m.bits()[i]))
            .collect();
        for i in 0..100 {
            let r = sp.labels()[i] as usize;
            prop_assert_eq!(out.bits()[i], touched[r]);
        }
    }

    #[test]
    fn refinement_of_an_aligned_mask_is_a_fixed_point((m, sp) in (mask(10, 10), partition(10, 10, 8))) {
        let p = RefineParams::default();
        let (first, _) = refine_mask(&m, &sp, &p).unwrap();
        let (second, _) = refine_mask(&first, &sp, &p).unwrap();
        prop_assert_eq!(&second, &first);
        prop_assert_eq!(rii(&first, &second).unwrap(), 1.0);
    }
}

#[test]
fn batch_is_elementwise() {
    let sp = SuperpixelMap::new(4, 2, vec![0, 0, 1, 1, 2, 2, 3, 3], 4).unwrap();
    let p = RefineParams::default();
    let masks = [
        BinaryMask::from_fn(4, 2, |x, _| x < 2).unwrap(),
        BinaryMask::from_fn(4, 2, |x, y| x == 0 && y == 1).unwrap(),
        BinaryMask::full(4, 2).unwrap(),
    ];
    let frames: Vec<_> = masks.iter().map(|m| (m.clone(), sp.clone())).collect();
    let got = refine_batch(&frames, &p).unwrap();
    let want: Vec<_> = masks.iter().map(|m| refine_mask(m, &sp, &p).unwrap().0).collect();
    assert_eq!(got, want);
    assert!(refine_batch(&[], &p).unwrap().is_empty());
}

fn labels(w: usize, h: usize, classes: usize) -> impl Strategy<Value = ClassLabelMap> {
    prop::collection::vec(0..classes as u32, w * h)
        .prop_map(move |l| ClassLabelMap::new(w, h, l, classes).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn multiclass_miou_matches_confusion_counts((a, b) in (labels(8, 8, 4), labels(8, 8, 4))) {
        let mut confusion = [[0usize; 4]; 4];
        for (&p, &r) in a.labels().iter().zip(b.labels()) {
            confusion[p as usize][r as usize] += 1;
        }
        let (mean, per_class) = miou_multiclass(&a, &b, 4).unwrap();
        let mut present = Vec::new();
        for c in 1..4 {
            let tp = confusion[c][c];
            let fp: usize = (0..4).filter(|&r| r != c).map(|r| confusion[c][r]).sum();
            let fn_: usize = (0..4).filter(|&p| p != c).map(|p| confusion[p][c]).sum();
            let union = tp + fp + fn_;
            let want = (union > 0).then(|| tp as f64 / union as f64);
            prop_assert_eq!(per_class[c - 1], want);
            present.extend(want);
        }
        let want_mean = if present.is_empty() { 1.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
        prop_assert!((mean - want_mean).abs() <= 1e-12);
    }

    #[test]
    fn iou_is_symmetric_and_bounded((a, b) in (mask(6, 6), mask(6, 6))) {
        let ab = iou(&a, &b).unwrap();
        prop_assert_eq!(ab, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab == 1.0, a == b);
    }
}

#[test]
fn shifted_block_iou_is_one_third() {
    let a = BinaryMask::from_fn(6, 6, |x, y| (1..3).contains(&x) && (1..3).contains(&y)).unwrap();
    let b = BinaryMask::from_fn(6, 6, |x, y| (2..4).contains(&x) && (1..3).contains(&y)).unwrap();
    assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn blob_closure_rii_is_three_quarters() {
    // 3x3 blob, refinement adds three pixels
    let blob = BinaryMask::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y)).unwrap();
    let closure = BinaryMask::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y) || (y == 0 && (1..4).contains(&x))).unwrap();
    assert_eq!(rii(&blob, &closure).unwrap(), 0.75);
}

#[test]
fn two_frame_aggregations() {
    let f = |bits: [bool; 4]| BinaryMask::new(2, 2, bits.to_vec()).unwrap();
    let preds = [f([true, true, false, false]), f([true, false, false, false])];
    let pas = [f([true, false, false, false]), f([true, false, false, false])];
    // frame IoUs 1/2 and 1; micro pools 2 / 3
    assert!((miou_pa(&preds, &pas, Aggregation::Macro).unwrap() - 0.75).abs() < 1e-12);
    assert!((miou_pa(&preds, &pas, Aggregation::Micro).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    let empty = [BinaryMask::empty(2, 2).unwrap(), BinaryMask::empty(2, 2).unwrap()];
    assert_eq!(miou_pa(&empty, &pas, Aggregation::Micro).unwrap(), 0.0);
}

#[test]
fn ric_is_linear() {
    let p = RicParams { alpha: 0.5 };
    assert_eq!(ric(0.4, 0.6, &p), 0.7);
    assert_eq!(ric(0.3, 0.0, &p), 0.3);
    assert_eq!(ric(1.0, 1.0, &p), 1.5);
}

#[test]
fn evaluate_matches_its_parts() {
    let sp = SuperpixelMap::new(4, 2, vec![0, 0, 1, 1, 0, 0, 1, 1], 2).unwrap();
    let pred = BinaryMask::from_fn(4, 2, |x, y| x < 2 && !(x == 0 && y == 0)).unwrap();
    let pa = BinaryMask::from_fn(4, 2, |x, _| x < 3).unwrap();
    let p = RefineParams::default();
    let s = evaluate(std::slice::from_ref(&pred), std::slice::from_ref(&pa), std::slice::from_ref(&sp), &p, &RicParams::default(), Aggregation::Micro).unwrap();
    let refined = refine_mask(&pred, &sp, &p).unwrap().0;
    assert_eq!(s.miou_pa, iou(&refined, &pa).unwrap());
    assert_eq!(s.rii, iou(&pred, &refined).unwrap());
    assert_eq!(s.ric, s.miou_pa + 0.5 * s.rii);
}
