use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use pa_forge::attention::Tensor;
use pa_forge::io::{load_label_map, load_mask, save_label_map, save_mask, save_rgb, save_tensor};
use pa_forge::raster::{BinaryMask, RgbImage, SuperpixelMap};

fn pa_forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pa-forge")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    let o = pa_forge(&["otsu", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(pa_forge(&[]).status.code(), Some(1));
    assert_eq!(pa_forge(&["metrics", "--aggregation", "median", "--predictions", "a", "--pas", "b", "--frames", "c"]).status.code(), Some(1));
}

#[test]
fn help_and_version_exit_with_zero() {
    let o = pa_forge(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["otsu", "slic", "refine", "init-pa", "select", "metrics", "evolve"] {
        assert!(stdout(&o).contains(cmd), "{cmd} missing from help");
    }
    assert_eq!(pa_forge(&["--version"]).status.code(), Some(0));
}

#[test]
fn otsu_prints_threshold_and_writes_mask() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("map.wstf");
    let data: Vec<f64> = (0..12).map(|i| if i % 4 < 2 { 0.1 } else { 0.9 }).collect();
    save_tensor(&Tensor::new(vec![3, 4], data).unwrap(), &input).unwrap();
    let out = dir.path().join("m.png");
    let o = pa_forge(&["otsu", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let threshold: f64 = text.lines().next().unwrap().strip_prefix("threshold\t").unwrap().parse().unwrap();
    assert!(threshold > 0.1 && threshold < 0.9);
    assert!(text.contains("\nbin\t") && text.contains("\nvariance\t"));
    assert_eq!(load_mask(&out).unwrap(), BinaryMask::from_fn(4, 3, |x, _| x >= 2).unwrap());

    let o = pa_forge(&["otsu", "--input", s(&dir.path().join("absent.wstf"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn slic_writes_a_label_map() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("f.png");
    save_rgb(&RgbImage::from_fn(16, 16, |x, _| if x < 8 { [250, 0, 0] } else { [0, 0, 250] }).unwrap(), &img).unwrap();
    let out = dir.path().join("l.wstf");
    let o = pa_forge(&["slic", "--image", s(&img), "--k", "4", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let sp = load_label_map(&out).unwrap();
    assert_eq!(stdout(&o), format!("regions\t{}\n", sp.region_count()));
}

#[test]
fn refine_uses_default_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    // regions: 0 and 1 are two pixels, 2 is four of the ten
    let sp = SuperpixelMap::new(5, 2, vec![0, 0, 1, 1, 2, 2, 2, 2, 3, 3], 4).unwrap();
    let labels = dir.path().join("l.wstf");
    save_label_map(&sp, &labels).unwrap();
    // half of region 0, all of region 1, all of region 2
    let mask = BinaryMask::new(5, 2, vec![true, false, true, true, true, true, true, true, false, false]).unwrap();
    let m = dir.path().join("m.png");
    save_mask(&mask, &m).unwrap();
    let out = dir.path().join("r.png");
    let o = pa_forge(&["refine", "--mask", s(&m), "--labels", s(&labels), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<Vec<String>> = stdout(&o)
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect();
    let selected: Vec<&str> = rows.iter().map(|r| r[3].as_str()).collect();
    // overlap 0.5 is not above alpha; area share 0.4 is not below beta
    assert_eq!(selected, ["0", "1", "0", "0"]);
    assert_eq!(
        load_mask(&out).unwrap(),
        BinaryMask::new(5, 2, vec![false, false, true, true, false, false, false, false, false, false]).unwrap()
    );

    let o = pa_forge(&["refine", "--mask", s(&m), "--labels", s(&labels), "--out", s(&out), "--alpha", "0.4", "--beta", "0.5"]);
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with(" 1")).count(), 3);
    let o = pa_forge(&["refine", "--mask", s(&m), "--labels", s(&labels), "--out", s(&out), "--mode", "dice"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn metrics_on_identical_lists() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines = String::new();
    let mut frames = String::new();
    for i in 0..3 {
        let m = dir.path().join(format!("m{i}.png"));
        save_mask(&BinaryMask::from_fn(8, 8, |x, y| x + y < 4 + i).unwrap(), &m).unwrap();
        let f = dir.path().join(format!("f{i}.png"));
        save_rgb(&RgbImage::from_fn(8, 8, |x, y| if x + y < 4 + i { [200, 0, 0] } else { [0, 0, 0] }).unwrap(), &f).unwrap();
        lines += &format!("m{i}.png\n");
        frames += &format!("f{i}.png\n");
    }
    std::fs::write(dir.path().join("masks.lst"), lines).unwrap();
    std::fs::write(dir.path().join("frames.lst"), frames).unwrap();
    let list = dir.path().join("masks.lst");
    let o = pa_forge(&["metrics", "--predictions", s(&list), "--pas", s(&list), "--frames", s(&dir.path().join("frames.lst")), "--k", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("miou_pa=1\t"), "{text}");
    assert!(text.contains("\tiou_1=1"));
}

#[test]
fn seam_scorer_speaks_the_line_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let composite = dir.path().join("c.png");
    save_rgb(&RgbImage::from_fn(6, 6, |x, _| if x < 3 { [200, 0, 0] } else { [0, 0, 200] }).unwrap(), &composite).unwrap();
    save_mask(&BinaryMask::from_fn(6, 6, |x, _| x < 3).unwrap(), dir.path().join("c.mask.png")).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_pa-forge"))
        .args(["score", "--kind", "seam"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, "{}", composite.display()).unwrap();
    writeln!(stdin, "{}", dir.path().join("missing.png").display()).unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "1");
    assert!(lines[1].starts_with("err "));
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn broken_contract_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = String::new();
    for (i, video) in ["a", "b"].iter().enumerate() {
        let f = dir.path().join(format!("{video}.png"));
        save_rgb(&RgbImage::from_fn(8, 8, |x, _| [x as u8 * 30, 0, 0]).unwrap(), &f).unwrap();
        save_mask(&BinaryMask::from_fn(8, 8, |x, y| x < 4 && y < 4).unwrap(), dir.path().join(format!("{video}.pa.png"))).unwrap();
        manifest += &format!("{video} {i} {video}.png {video}.pa.png 1\n");
    }
    let m = dir.path().join("list.txt");
    std::fs::write(&m, manifest).unwrap();
    // cat echoes the request path back, which is not a score
    let o = pa_forge(&[
        "evolve", "--manifest", s(&m), "--val-videos", "b", "--trainer", "cat", "--discriminator", "cat",
        "--out-dir", s(&dir.path().join("out")), "--k", "4",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
