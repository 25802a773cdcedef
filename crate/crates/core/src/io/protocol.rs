//! Newline-delimited request/response protocol for external scorers,
//! trainers and predictors.
//!
//! Each request is one line on the child's stdin and gets exactly one line
//! back on its stdout. Images travel by file path. A response starting with
//! `err` reports a failure on that item only.
//!
//! | role          | request                                                | response                    |
//! |---------------|--------------------------------------------------------|-----------------------------|
//! | discriminator | `<composite.png>` (mask beside it as `<stem>.mask.png`) | score in `[0, 1]`           |
//! | classifier    | `<masked_foreground.png>`                              | probabilities, space separated |
//! | trainer       | `train <version> <epoch> <list_path>`                  | model handle                |
//! | predictor     | `predict <handle> <video> <frame> <frame_path> <out_path>` | `ok`                     |
//!
//! The trainer's list file is a manifest of the selected frames with their
//! current pseudo-annotations.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::rc::Rc;

use tempfile::TempDir;

use super::image_file::{load_mask, save_mask, save_rgb};
use super::manifest::{save_manifest, Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::evolution::{ModelHandle, Predictor, Trainer, TrainingSample};
use crate::raster::{BinaryMask, RgbImage};
use crate::selection::{Classifier, CompositePatch, Discriminator, FrameRef, MaskedForeground};

/// A child process spoken to one line at a time.
pub struct LineProcess {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl LineProcess {
    /// Spawns `command`, split on whitespace into program and arguments.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Protocol(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self {
            command: command.to_string(),
            child,
            stdin,
            stdout,
        })
    }

    /// Sends one request line and returns the trimmed response line.
    pub fn request(&mut self, line: &str) -> Result<String> {
        if line.contains('\n') {
            return Err(Error::Protocol("request spans several lines".into()));
        }
        let lost = |e: std::io::Error| Error::Protocol(format!("{}: {e}", self.command));
        let stdin = self.stdin.as_mut().expect("stdin open until drop");
        writeln!(stdin, "{line}").and_then(|_| stdin.flush()).map_err(lost)?;
        let mut resp = String::new();
        let n = self.stdout.read_line(&mut resp).map_err(lost)?;
        if n == 0 {
            return Err(Error::Protocol(format!("{} closed its output", self.command)));
        }
        let resp = resp.trim();
        if resp == "err" || resp.starts_with("err ") {
            return Err(Error::Protocol(resp.trim_start_matches("err").trim().to_string()));
        }
        Ok(resp.to_string())
    }
}

impl Drop for LineProcess {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.wait();
    }
}

/// Serving side: answers each input line with `handler`'s result, or with
/// `err <message>` when it fails. Returns at end of input.
pub fn serve_lines<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    mut handler: impl FnMut(&str) -> Result<String>,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match handler(line) {
            Ok(resp) => writeln!(output, "{resp}")?,
            Err(e) => writeln!(output, "err {}", e.to_string().replace('\n', " "))?,
        }
        output.flush()?;
    }
    Ok(())
}

/// Sibling path where the discriminator finds a composite's mask.
pub fn composite_mask_path(composite: &Path) -> PathBuf {
    let stem = composite.file_stem().and_then(|s| s.to_str()).unwrap_or("composite");
    composite.with_file_name(format!("{stem}.mask.png"))
}

struct Scratch {
    dir: TempDir,
    counter: Cell<usize>,
}

impl Scratch {
    fn new() -> Result<Self> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        Ok(Self {
            dir,
            counter: Cell::new(0),
        })
    }

    fn next(&self, prefix: &str) -> PathBuf {
        let n = self.counter.get();
        self.counter.set(n + 1);
        self.dir.path().join(format!("{prefix}{n:06}.png"))
    }
}

fn path_str(p: &Path) -> Result<&str> {
    let s = p
        .to_str()
        .ok_or_else(|| Error::InvalidParameter(format!("non UTF-8 path {p:?}")))?;
    if s.contains(char::is_whitespace) {
        return Err(Error::InvalidParameter(format!("path {s:?} contains whitespace")));
    }
    Ok(s)
}

pub struct ProcessDiscriminator {
    proc: RefCell<LineProcess>,
    scratch: Scratch,
}

impl ProcessDiscriminator {
    pub fn spawn(command: &str) -> Result<Self> {
        Ok(Self {
            proc: RefCell::new(LineProcess::spawn(command)?),
            scratch: Scratch::new()?,
        })
    }
}

impl Discriminator for ProcessDiscriminator {
    fn score(&self, composite: &CompositePatch) -> Result<f64> {
        let path = self.scratch.next("composite");
        let mask_path = composite_mask_path(&path);
        save_rgb(&composite.image, &path)?;
        save_mask(&composite.mask, &mask_path)?;
        let resp = self.proc.borrow_mut().request(path_str(&path)?);
        let _ = std::fs::remove_file(&path);
        let _ = std::fs::remove_file(&mask_path);
        let resp = resp.map_err(|e| Error::Scorer(e.to_string()))?;
        resp.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Scorer(format!("discriminator answered {resp:?}")))
    }
}

pub struct ProcessClassifier {
    proc: RefCell<LineProcess>,
    scratch: Scratch,
}

impl ProcessClassifier {
    pub fn spawn(command: &str) -> Result<Self> {
        Ok(Self {
            proc: RefCell::new(LineProcess::spawn(command)?),
            scratch: Scratch::new()?,
        })
    }
}

impl Classifier for ProcessClassifier {
    fn classify(&self, input: &MaskedForeground<'_>) -> Result<Vec<f64>> {
        let path = self.scratch.next("foreground");
        save_rgb(input.image, &path)?;
        let resp = self.proc.borrow_mut().request(path_str(&path)?);
        let _ = std::fs::remove_file(&path);
        let resp = resp.map_err(|e| Error::Scorer(e.to_string()))?;
        resp.split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Scorer(format!("classifier answered {resp:?}")))
    }
}

/// One process serving both trainer and predictor requests.
pub type SharedProcess = Rc<RefCell<LineProcess>>;

pub fn shared(command: &str) -> Result<SharedProcess> {
    Ok(Rc::new(RefCell::new(LineProcess::spawn(command)?)))
}

pub struct ProcessTrainer {
    proc: SharedProcess,
    scratch: Scratch,
    frame_paths: HashMap<FrameRef, PathBuf>,
}

impl ProcessTrainer {
    /// `frame_paths` lets list files point at the original frames; frames
    /// missing from it are written to scratch space.
    pub fn new(proc: SharedProcess, frame_paths: HashMap<FrameRef, PathBuf>) -> Result<Self> {
        Ok(Self {
            proc,
            scratch: Scratch::new()?,
            frame_paths,
        })
    }
}

fn frame_file(
    paths: &HashMap<FrameRef, PathBuf>,
    scratch: &Scratch,
    frame: &FrameRef,
    image: &RgbImage,
) -> Result<PathBuf> {
    match paths.get(frame) {
        Some(p) => Ok(std::path::absolute(p).map_err(|e| Error::io(p, e))?),
        None => {
            let p = scratch.next("frame");
            save_rgb(image, &p)?;
            Ok(p)
        }
    }
}

impl Trainer for ProcessTrainer {
    fn train_epoch(
        &mut self,
        version: usize,
        epoch: usize,
        selected: &[TrainingSample<'_>],
    ) -> Result<ModelHandle> {
        let fail = |message: String| Error::Trainer {
            version,
            epoch,
            message,
        };
        let mut entries = Vec::with_capacity(selected.len());
        for s in selected {
            let pa_path = self.scratch.next("pa");
            save_mask(s.pa, &pa_path)?;
            entries.push(ManifestEntry {
                frame: s.frame.clone(),
                frame_path: frame_file(&self.frame_paths, &self.scratch, s.frame, s.image)?,
                pa_path: Some(pa_path),
                label: None,
            });
        }
        let list = self
            .scratch
            .dir
            .path()
            .join(format!("train_v{version}_e{epoch}.txt"));
        save_manifest(
            &Manifest {
                entries,
                base_dir: PathBuf::new(),
            },
            &list,
        )?;
        let resp = self
            .proc
            .borrow_mut()
            .request(&format!("train {version} {epoch} {}", path_str(&list)?))
            .map_err(|e| fail(e.to_string()))?;
        if resp.is_empty() || resp.contains(char::is_whitespace) {
            return Err(fail(format!("bad model handle {resp:?}")));
        }
        Ok(ModelHandle(resp))
    }
}

pub struct ProcessPredictor {
    proc: SharedProcess,
    scratch: Scratch,
    frame_paths: HashMap<FrameRef, PathBuf>,
}

impl ProcessPredictor {
    pub fn new(proc: SharedProcess, frame_paths: HashMap<FrameRef, PathBuf>) -> Result<Self> {
        Ok(Self {
            proc,
            scratch: Scratch::new()?,
            frame_paths,
        })
    }
}

impl Predictor for ProcessPredictor {
    fn predict(&mut self, model: &ModelHandle, frame: &FrameRef, image: &RgbImage) -> Result<BinaryMask> {
        let fail = |message: String| Error::Predictor {
            frame: frame.to_string(),
            message,
        };
        let frame_path = frame_file(&self.frame_paths, &self.scratch, frame, image)?;
        let out = self.scratch.next("pred");
        let req = format!(
            "predict {model} {} {} {} {}",
            frame.video,
            frame.index,
            path_str(&frame_path)?,
            path_str(&out)?
        );
        let resp = self
            .proc
            .borrow_mut()
            .request(&req)
            .map_err(|e| fail(e.to_string()))?;
        if resp != "ok" {
            return Err(fail(format!("expected ok, got {resp:?}")));
        }
        let mask = load_mask(&out).map_err(|e| fail(e.to_string()))?;
        let _ = std::fs::remove_file(&out);
        Ok(mask)
    }
}
