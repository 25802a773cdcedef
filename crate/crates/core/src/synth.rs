//! Synthetic video world with known ground truth.
//!
//! Each video shows one flat-colored disc (its actor, colored by class)
//! drifting over a flat background. Alongside the frames the world carries
//! the feature maps and gradients a network would hand to the attention
//! stage: a blurred, displaced blob per frame for the actor branch and one
//! spatiotemporal stack per video for the action branch.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    attention_maps, initial_mask, nearest_sampled, uniform_sample, GcamRequest, PaV0Config, Tensor,
};
use crate::error::{Error, Result};
use crate::evolution::{EvolutionFrame, Split};
use crate::lowlevel::slic;
use crate::raster::{BinaryMask, RgbImage};
use crate::refine::refine_mask;
use crate::selection::FrameRef;

/// Flat colors of classes `1..=PALETTE.len()`.
pub const PALETTE: [[u8; 3]; 4] = [[220, 50, 40], [40, 200, 60], [60, 80, 235], [230, 200, 30]];

pub fn class_color(class: usize) -> [u8; 3] {
    PALETTE[(class - 1) % PALETTE.len()]
}

/// `class:r,g,b` entries for [`crate::selection::reference::PaletteClassifier::parse`].
pub fn palette_spec(classes: usize) -> String {
    (1..=classes)
        .map(|c| {
            let [r, g, b] = class_color(c);
            format!("{c}:{r},{g},{b}")
        })
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub videos: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    /// Attention maps are this many times coarser than frames.
    pub attention_stride: usize,
    pub t_prime: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            videos: 20,
            frames: 8,
            width: 64,
            height: 48,
            classes: 3,
            attention_stride: 4,
            t_prime: 4,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthFrame {
    pub frame: FrameRef,
    pub image: RgbImage,
    pub truth: BinaryMask,
    /// `(m, 1, h', w')` actor-branch request.
    pub actor: GcamRequest,
}

#[derive(Clone, Debug)]
pub struct SynthVideo {
    pub id: String,
    pub class: usize,
    pub frames: Vec<SynthFrame>,
    /// `(m, t', h', w')` action-branch request over the whole clip.
    pub action: GcamRequest,
}

#[derive(Clone, Debug)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub videos: Vec<SynthVideo>,
}

impl SynthWorld {
    pub fn frames(&self) -> impl Iterator<Item = (&SynthVideo, &SynthFrame)> {
        self.videos.iter().flat_map(|v| v.frames.iter().map(move |f| (v, f)))
    }
}

struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
}

/// Two feature maps: the blob, and low-level clutter with a negative
/// gradient so the weighted sum suppresses it.
fn attention_request(
    blobs: &[Blob],
    hw: (usize, usize),
    class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GcamRequest> {
    let (h, w) = hw;
    let t = blobs.len();
    let plane = h * w;
    let mut feat = vec![0.0; 2 * t * plane];
    let mut grad = vec![0.0; 2 * t * plane];
    for (ti, b) in blobs.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 + 0.5 - b.cx, y as f64 + 0.5 - b.cy);
                let i = ti * plane + y * w + x;
                feat[i] = (-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma)).exp();
                feat[t * plane + i] = rng.gen_range(0.0..0.3);
                grad[i] = rng.gen_range(0.8..1.2);
                grad[t * plane + i] = rng.gen_range(-0.3..-0.1);
            }
        }
    }
    let dims = vec![2, t, h, w];
    Ok(GcamRequest {
        features: Tensor::new(dims.clone(), feat)?,
        gradients: Tensor::new(dims, grad)?,
        class_id: class as u32,
    })
}

fn background(rng: &mut ChaCha8Rng) -> [u8; 3] {
    let base = rng.gen_range(95..165u8);
    [
        base.saturating_add(rng.gen_range(0..20)),
        base.saturating_add(rng.gen_range(0..20)),
        base.saturating_add(rng.gen_range(0..20)),
    ]
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthWorld> {
    if cfg.videos == 0 || cfg.frames == 0 || cfg.classes == 0 {
        return Err(Error::InvalidParameter("world needs videos, frames and classes".into()));
    }
    if cfg.width < 24 || cfg.height < 24 || cfg.attention_stride == 0 {
        return Err(Error::InvalidParameter("frames must be at least 24x24".into()));
    }
    let stride = cfg.attention_stride;
    let (aw, ah) = (cfg.width.div_ceil(stride), cfg.height.div_ceil(stride));
    let sampled = uniform_sample(cfg.frames, cfg.t_prime.min(cfg.frames))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut videos = Vec::with_capacity(cfg.videos);
    for vi in 0..cfg.videos {
        let id = format!("vid{vi:03}");
        let class = 1 + vi % cfg.classes;
        let bg = background(&mut rng);
        let fg = class_color(class);
        let max_r = (cfg.width.min(cfg.height) as f64 / 4.0).min(11.0);
        let radius = rng.gen_range(max_r * 0.65..=max_r);
        let margin = radius + 1.0;
        let mut cx = rng.gen_range(margin..cfg.width as f64 - margin);
        let mut cy = rng.gen_range(margin..cfg.height as f64 - margin);
        let (mut vx, mut vy) = (rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5));
        // attention quality of this video's network, in low-res pixels
        let drift = rng.gen_range(0.2..1.1);
        let spread = rng.gen_range(0.75..1.2);
        let mut centers = Vec::with_capacity(cfg.frames);
        let mut frames = Vec::with_capacity(cfg.frames);
        for fi in 0..cfg.frames {
            let inside = |x: usize, y: usize| {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                dx * dx + dy * dy <= radius * radius
            };
            let image = RgbImage::from_fn(cfg.width, cfg.height, |x, y| if inside(x, y) { fg } else { bg })?;
            let truth = BinaryMask::from_fn(cfg.width, cfg.height, inside)?;
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let blob = Blob {
                cx: cx / stride as f64 + drift * angle.cos(),
                cy: cy / stride as f64 + drift * angle.sin(),
                sigma: radius / stride as f64 * spread * 0.8,
            };
            let actor = attention_request(&[blob], (ah, aw), class, &mut rng)?;
            centers.push((cx, cy));
            frames.push(SynthFrame {
                frame: FrameRef::new(id.clone(), fi as u32),
                image,
                truth,
                actor,
            });
            cx += vx;
            cy += vy;
            if cx < margin || cx > cfg.width as f64 - margin {
                vx = -vx;
                cx = cx.clamp(margin, cfg.width as f64 - margin);
            }
            if cy < margin || cy > cfg.height as f64 - margin {
                vy = -vy;
                cy = cy.clamp(margin, cfg.height as f64 - margin);
            }
        }
        // action attention favors the lower half of the actor
        let action_blobs: Vec<Blob> = sampled
            .iter()
            .map(|&fi| {
                let (x, y) = centers[fi];
                Blob {
                    cx: x / stride as f64,
                    cy: (y + radius * 0.4) / stride as f64,
                    sigma: radius / stride as f64 * 0.55,
                }
            })
            .collect();
        let action = attention_request(&action_blobs, (ah, aw), class, &mut rng)?;
        videos.push(SynthVideo {
            id,
            class,
            frames,
            action,
        });
    }
    Ok(SynthWorld {
        config: cfg.clone(),
        videos,
    })
}

/// Evolution inputs derived from a world: initial pseudo-annotations from
/// the attention stage, plus the hidden ground truth in the same order.
pub struct WorldDataset {
    pub frames: Vec<EvolutionFrame>,
    pub truths: Vec<BinaryMask>,
}

pub fn initial_dataset(
    world: &SynthWorld,
    cfg: &PaV0Config,
    is_validation: impl Fn(&SynthVideo) -> bool,
) -> Result<WorldDataset> {
    let mut frames = Vec::new();
    let mut truths = Vec::new();
    for v in &world.videos {
        let action = attention_maps(&v.action)?;
        let slot = nearest_sampled(v.frames.len(), action.len())?;
        let split = if is_validation(v) {
            Split::Validation
        } else {
            Split::Train
        };
        for (i, f) in v.frames.iter().enumerate() {
            let actor = attention_maps(&f.actor)?;
            let m_init = initial_mask(&f.image, &actor[0], Some(&action[slot[i]]), cfg)
                .map_err(|e| e.in_frame(frames.len()))?;
            let superpixels = slic(&f.image, &cfg.slic)?;
            let (pa, _) = refine_mask(&m_init, &superpixels, &cfg.refine)?;
            frames.push(EvolutionFrame {
                frame: f.frame.clone(),
                image: f.image.clone(),
                superpixels,
                pa,
                split,
                class: v.class,
            });
            truths.push(f.truth.clone());
        }
    }
    Ok(WorldDataset { frames, truths })
}

/// Location of the attention tensors that [`write_world`] produces.
pub fn actor_tensor_paths(dir: &Path, frame: &FrameRef) -> (PathBuf, PathBuf) {
    let base = dir.join(&frame.video);
    (
        base.join(format!("{:05}.actor.features.wstf", frame.index)),
        base.join(format!("{:05}.actor.gradients.wstf", frame.index)),
    )
}

pub fn action_tensor_paths(dir: &Path, video: &str) -> (PathBuf, PathBuf) {
    let base = dir.join(video);
    (
        base.join("action.features.wstf"),
        base.join("action.gradients.wstf"),
    )
}

/// Writes the world under `dir`:
/// `frames/`, `truth/`, `attention/`, `manifest.txt` (frames with class
/// labels) and `truth.txt` (ground-truth masks in the pseudo-annotation
/// column).
pub fn write_world(world: &SynthWorld, dir: &Path) -> Result<()> {
    use crate::io::{save_manifest, save_mask, save_rgb, save_tensor, Manifest, ManifestEntry};
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    let att = dir.join("attention");
    for sub in ["frames", "truth"] {
        mkdir(&dir.join(sub))?;
    }
    let (mut frames, mut truth) = (Vec::new(), Vec::new());
    for v in &world.videos {
        mkdir(&att.join(&v.id))?;
        let (f, g) = action_tensor_paths(&att, &v.id);
        save_tensor(&v.action.features, f)?;
        save_tensor(&v.action.gradients, g)?;
        for sf in &v.frames {
            let name = format!("{}_{:05}.png", sf.frame.video, sf.frame.index);
            let frame_rel = PathBuf::from("frames").join(&name);
            let truth_rel = PathBuf::from("truth").join(&name);
            save_rgb(&sf.image, dir.join(&frame_rel))?;
            save_mask(&sf.truth, dir.join(&truth_rel))?;
            let (f, g) = actor_tensor_paths(&att, &sf.frame);
            save_tensor(&sf.actor.features, f)?;
            save_tensor(&sf.actor.gradients, g)?;
            let label = Some(v.class.to_string());
            frames.push(ManifestEntry {
                frame: sf.frame.clone(),
                frame_path: frame_rel.clone(),
                pa_path: None,
                label: label.clone(),
            });
            truth.push(ManifestEntry {
                frame: sf.frame.clone(),
                frame_path: frame_rel,
                pa_path: Some(truth_rel),
                label,
            });
        }
    }
    save_manifest(
        &Manifest {
            entries: frames,
            base_dir: dir.to_path_buf(),
        },
        dir.join("manifest.txt"),
    )?;
    save_manifest(
        &Manifest {
            entries: truth,
            base_dir: dir.to_path_buf(),
        },
        dir.join("truth.txt"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_is_deterministic_and_well_formed() {
        let cfg = SynthConfig {
            videos: 3,
            frames: 4,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.videos.len(), 3);
        for (va, vb) in a.videos.iter().zip(&b.videos) {
            assert_eq!(va.action.features, vb.action.features);
            assert_eq!(va.action.features.dims(), &[2, 4, 12, 16]);
            for (fa, fb) in va.frames.iter().zip(&vb.frames) {
                assert_eq!(fa.image, fb.image);
                assert!(fa.truth.area() > 50);
                assert_eq!(fa.actor.features.dims(), &[2, 1, 12, 16]);
            }
        }
    }

    #[test]
    fn palette_spec_lists_classes() {
        assert_eq!(palette_spec(2), "1:220,50,40;2:40,200,60");
    }
}
