use std::io::Cursor;

use pa_forge::attention::Tensor;
use pa_forge::io::protocol::{composite_mask_path, serve_lines, LineProcess};
use pa_forge::io::{
    decode_tensor, encode_tensor, load_label_map, load_manifest, load_mask, load_rgb, load_tensor, parse_manifest,
    save_label_map, save_manifest, save_mask, save_rgb, save_tensor,
};
use pa_forge::raster::{BinaryMask, RgbImage, SuperpixelMap};
use pa_forge::Error;
use proptest::prelude::*;

fn tensor() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(1usize..5, 1..=4).prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        // values representable in f32 survive exactly
        prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), n)
            .prop_map(move |d| Tensor::new(dims.clone(), d.into_iter().map(f64::from).collect()).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn tensor_bytes_round_trip(t in tensor()) {
        let bytes = encode_tensor(&t).unwrap();
        prop_assert_eq!(bytes.len(), 6 + 4 * t.rank() + 4 * t.data().len());
        prop_assert_eq!(&decode_tensor(&bytes).unwrap(), &t);
        // half the bytes read as truncated
        let cut = bytes.len() / 2;
        let truncated = matches!(decode_tensor(&bytes[..cut]), Err(Error::Truncated { .. }));
        prop_assert!(truncated);
    }

    #[test]
    fn mask_and_image_files_round_trip(
        (w, h, bits, px) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| (
            Just(w), Just(h),
            prop::collection::vec(any::<bool>(), w * h),
            prop::collection::vec(any::<u8>(), 3 * w * h),
        ))
    ) {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::new(w, h, bits).unwrap();
        save_mask(&m, dir.path().join("m.png")).unwrap();
        prop_assert_eq!(load_mask(dir.path().join("m.png")).unwrap(), m);
        let img = RgbImage::new(w, h, px).unwrap();
        save_rgb(&img, dir.path().join("i.png")).unwrap();
        prop_assert_eq!(load_rgb(dir.path().join("i.png")).unwrap(), img);
    }

    #[test]
    fn manifest_text_round_trips(
        rows in prop::collection::vec(("[a-z][a-z0-9_]{0,6}", 0u32..1000, any::<bool>(), prop::option::of("[a-z]{1,5}")), 0..12)
    ) {
        let mut text = String::from("# header\n\n");
        let mut seen = std::collections::HashSet::new();
        for (video, idx, pa, label) in &rows {
            if !seen.insert((video.clone(), *idx)) {
                continue;
            }
            let pa = if *pa { format!("pa/{video}_{idx}.png") } else { "-".into() };
            text += &format!("{video} {idx} frames/{video}_{idx}.png {pa}");
            if let Some(l) = label {
                text += &format!(" {l}");
            }
            text += "\n";
        }
        let m = parse_manifest(&text).unwrap();
        prop_assert_eq!(m.entries.len(), seen.len());
        prop_assert_eq!(parse_manifest(&m.to_text().unwrap()).unwrap().entries, m.entries);
    }
}

#[test]
fn malformed_tensors_are_named() {
    let good = encode_tensor(&Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(matches!(decode_tensor(&bad), Err(Error::BadMagic { .. })));
    let mut bad = good.clone();
    bad[4] = 9;
    assert!(matches!(decode_tensor(&bad), Err(Error::UnsupportedVersion(9))));
    let mut bad = good.clone();
    bad[5] = 5;
    assert!(matches!(decode_tensor(&bad), Err(Error::RankOutOfRange(5))));
    let mut bad = good.clone();
    bad.push(0);
    assert!(matches!(decode_tensor(&bad), Err(Error::TrailingData { .. })));
    assert!(matches!(decode_tensor(b"WS"), Err(Error::Truncated { .. })));
}

#[test]
fn tensor_and_label_map_files() {
    let dir = tempfile::tempdir().unwrap();
    let t = Tensor::new(vec![1, 2, 3], vec![0.5, -1.0, 2.0, 0.0, 3.25, 8.0]).unwrap();
    save_tensor(&t, dir.path().join("t.wstf")).unwrap();
    assert_eq!(load_tensor(dir.path().join("t.wstf")).unwrap(), t);
    let sp = SuperpixelMap::new(3, 2, vec![0, 0, 1, 2, 1, 1], 3).unwrap();
    save_label_map(&sp, dir.path().join("l.wstf")).unwrap();
    assert_eq!(load_label_map(dir.path().join("l.wstf")).unwrap(), sp);
    assert!(matches!(load_tensor(dir.path().join("missing.wstf")), Err(Error::Io { .. })));
}

#[test]
fn gray_mask_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.png");
    image::save_buffer(&p, &[0, 255, 128, 0], 2, 2, image::ColorType::L8).unwrap();
    match load_mask(&p) {
        Err(Error::MaskValue { x, y, value, .. }) => assert_eq!((x, y, value), (0, 1, 128)),
        other => panic!("expected a mask value error, got {other:?}"),
    }
    let rgb = dir.path().join("c.png");
    save_rgb(&RgbImage::filled(2, 2, [255, 255, 255]).unwrap(), &rgb).unwrap();
    assert!(matches!(load_mask(&rgb), Err(Error::Image { .. })));
}

#[test]
fn malformed_manifests_report_the_line() {
    let cases = [
        ("a 0 f.png\na 0 g.png\n", 2),
        ("# c\na x f.png\n", 2),
        ("a 0\n", 1),
        ("a 0 f.png - l extra\n", 1),
        ("a -1 f.png\n", 1),
    ];
    for (text, want) in cases {
        match parse_manifest(text) {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, want, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn manifest_paths_resolve_against_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("frames")).unwrap();
    save_rgb(&RgbImage::filled(2, 2, [1, 2, 3]).unwrap(), dir.path().join("frames/a.png")).unwrap();
    let list = dir.path().join("list.txt");
    std::fs::write(&list, "v 3 frames/a.png pa/a.png 2\n").unwrap();
    let m = load_manifest(&list).unwrap();
    let e = &m.entries[0];
    assert_eq!(m.frame_path(e), dir.path().join("frames/a.png"));
    assert_eq!(m.pa_path(e), Some(dir.path().join("pa/a.png")));
    assert_eq!(e.label.as_deref(), Some("2"));
    save_manifest(&m, dir.path().join("copy.txt")).unwrap();
    assert_eq!(load_manifest(dir.path().join("copy.txt")).unwrap().entries, m.entries);

    std::fs::write(&list, "v 3 frames/missing.png\n").unwrap();
    assert!(matches!(load_manifest(&list), Err(Error::Io { .. })));
}

#[test]
fn serving_answers_line_by_line() {
    let input = Cursor::new("ping\n\nfail now\nping\n");
    let mut out = Vec::new();
    serve_lines(input, &mut out, |l| {
        if l == "ping" {
            Ok("pong".into())
        } else {
            Err(Error::Protocol("multi\nline".into()))
        }
    })
    .unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "pong");
    assert!(lines[1].starts_with("err ") && !lines[1].contains('\n'));
    assert_eq!(lines[2], "pong");
}

#[test]
fn line_process_round_trip() {
    let mut p = LineProcess::spawn("cat").unwrap();
    assert_eq!(p.request("hello there").unwrap(), "hello there");
    assert!(matches!(p.request("err bad input"), Err(Error::Protocol(m)) if m == "bad input"));
    assert!(p.request("two\nlines").is_err());
    let mut gone = LineProcess::spawn("true").unwrap();
    assert!(matches!(gone.request("x"), Err(Error::Protocol(_))));
    assert!(LineProcess::spawn("").is_err());
}

#[test]
fn composite_mask_sits_next_to_composite() {
    assert_eq!(
        composite_mask_path(std::path::Path::new("/tmp/s/c000001.png")),
        std::path::Path::new("/tmp/s/c000001.mask.png")
    );
}
