//! SLIC superpixels: k-means over CIELAB color plus pixel position.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::raster::{RgbImage, SuperpixelMap};

#[derive(Clone, Debug, PartialEq)]
pub struct SlicParams {
    /// Target number of superpixels.
    pub k: usize,
    /// Weight of spatial proximity against color similarity.
    pub compactness: f64,
    pub max_iters: usize,
    pub enforce_connectivity: bool,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            k: 400,
            compactness: 10.0,
            max_iters: 10,
            enforce_connectivity: true,
        }
    }
}

impl SlicParams {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("slic k must be at least 1".into()));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "slic compactness must be positive, got {}",
                self.compactness
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "slic max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// sRGB (D65) to CIELAB.
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    fn linear(c: u8) -> f64 {
        let c = c as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }
    fn f(t: f64) -> f64 {
        const EPS: f64 = 216.0 / 24389.0;
        const KAPPA: f64 = 24389.0 / 27.0;
        if t > EPS {
            t.cbrt()
        } else {
            (KAPPA * t + 16.0) / 116.0
        }
    }
    let (r, g, b) = (linear(rgb[0]), linear(rgb[1]), linear(rgb[2]));
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let (fx, fy, fz) = (f(x / 0.950_47), f(y), f(z / 1.088_83));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Grid of seed columns and rows whose product approximates `k` while
/// following the image aspect ratio.
fn seed_grid(width: usize, height: usize, k: usize) -> (usize, usize) {
    let rows = ((k as f64 * height as f64 / width as f64).sqrt().round() as usize)
        .clamp(1, height.min(k));
    let cols = ((k as f64 / rows as f64).round() as usize).clamp(1, width);
    (cols, rows)
}

pub fn slic(image: &RgbImage, params: &SlicParams) -> Result<SuperpixelMap> {
    params.validate()?;
    let (w, h) = image.dims();
    let n = w * h;
    if params.k > n {
        return Err(Error::InvalidParameter(format!(
            "slic k = {} exceeds pixel count {n}",
            params.k
        )));
    }

    let lab: Vec<[f64; 3]> = (0..n)
        .map(|i| rgb_to_lab(image.pixel(i % w, i / w)))
        .collect();
    let step = (n as f64 / params.k as f64).sqrt();
    let (cols, rows) = seed_grid(w, h, params.k);
    let (step_x, step_y) = (w as f64 / cols as f64, h as f64 / rows as f64);

    let gradient = |x: usize, y: usize| -> f64 {
        let at = |x: usize, y: usize| &lab[y * w + x];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        dist2(at(xr, y), at(xl, y)) + dist2(at(x, yd), at(x, yu))
    };

    // Seeds sit on pixel-center coordinates of a regular grid. They are moved
    // to the lowest-gradient pixel of their 3x3 neighborhood only when the
    // grid is coarse enough that neighborhoods cannot collide.
    let perturb = step_x.min(step_y) >= 3.0;
    let mut centers = Vec::with_capacity(cols * rows);
    for j in 0..rows {
        for i in 0..cols {
            let mut cx = (i as f64 + 0.5) * step_x - 0.5;
            let mut cy = (j as f64 + 0.5) * step_y - 0.5;
            if perturb {
                let px = (cx.round() as usize).min(w - 1);
                let py = (cy.round() as usize).min(h - 1);
                let mut best = (gradient(px, py), px, py);
                for ny in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                    for nx in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                        let g = gradient(nx, ny);
                        if g < best.0 {
                            best = (g, nx, ny);
                        }
                    }
                }
                if (best.1, best.2) != (px, py) {
                    cx = best.1 as f64;
                    cy = best.2 as f64;
                }
            }
            let p = (cy.round() as usize).min(h - 1) * w + (cx.round() as usize).min(w - 1);
            centers.push(Center {
                lab: lab[p],
                x: cx,
                y: cy,
            });
        }
    }

    // Pixels never reached by a search window keep their grid cell's label.
    let mut labels: Vec<u32> = (0..n)
        .map(|p| {
            let i = ((p % w) as f64 / step_x) as usize;
            let j = ((p / w) as f64 / step_y) as usize;
            (j.min(rows - 1) * cols + i.min(cols - 1)) as u32
        })
        .collect();

    let half_x = step.max(step_x).ceil() as isize;
    let half_y = step.max(step_y).ceil() as isize;
    let spatial_weight = (params.compactness / step).powi(2);
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..params.max_iters {
        dist.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let cx = c.x.round() as isize;
            let cy = c.y.round() as isize;
            let x0 = (cx - half_x).max(0) as usize;
            let x1 = ((cx + half_x) as usize).min(w - 1);
            let y0 = (cy - half_y).max(0) as usize;
            let y1 = ((cy + half_y) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let ds = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                    let d = dist2(&lab[p], &c.lab) + ds * spatial_weight;
                    // Strict comparison: the lowest center index wins ties.
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = ci as u32;
                    }
                }
            }
        }

        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            s[0] += lab[p][0];
            s[1] += lab[p][1];
            s[2] += lab[p][2];
            s[3] += (p % w) as f64;
            s[4] += (p / w) as f64;
            s[5] += 1.0;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                c.lab = [s[0] / s[5], s[1] / s[5], s[2] / s[5]];
                c.x = s[3] / s[5];
                c.y = s[4] / s[5];
            }
        }
    }

    if params.enforce_connectivity {
        let min_size = step * step / 4.0;
        let merged = enforce_connectivity(&labels, w, h, min_size, 2 * params.k);
        SuperpixelMap::from_raw_labels(w, h, &merged)
    } else {
        SuperpixelMap::from_raw_labels(w, h, &labels)
    }
}

/// Splits every label into its 4-connected components, then absorbs each
/// component smaller than `min_size` into the neighbor sharing the longest
/// boundary, smallest first. Absorption continues past `min_size` while more
/// than `max_regions` remain.
fn enforce_connectivity(
    labels: &[u32],
    w: usize,
    h: usize,
    min_size: f64,
    max_regions: usize,
) -> Vec<u32> {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let label = labels[start];
        let mut size = 0;
        comp[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && labels[q] == label {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        sizes.push(size);
    }

    let count = sizes.len();
    let mut adjacency: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); count];
    let mut link = |a: usize, b: usize| {
        if a != b {
            *adjacency[a].entry(b).or_insert(0) += 1;
            *adjacency[b].entry(a).or_insert(0) += 1;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                link(comp[p], comp[p + 1]);
            }
            if y + 1 < h {
                link(comp[p], comp[p + w]);
            }
        }
    }

    let mut parent: Vec<usize> = (0..count).collect();
    let mut queue: BTreeSet<(usize, usize)> = sizes.iter().copied().zip(0..).collect();
    let mut alive = count;
    while let Some(&(size, id)) = queue.first() {
        if (size as f64) >= min_size && alive <= max_regions {
            break;
        }
        let Some(target) = adjacency[id]
            .iter()
            .max_by(|(a, ba), (b, bb)| {
                ba.cmp(bb)
                    .then(sizes[**a].cmp(&sizes[**b]))
                    .then(b.cmp(a))
            })
            .map(|(&t, _)| t)
        else {
            break;
        };
        queue.remove(&(size, id));
        queue.remove(&(sizes[target], target));
        sizes[target] += size;
        parent[id] = target;
        let neighbors = std::mem::take(&mut adjacency[id]);
        adjacency[target].remove(&id);
        for (other, shared) in neighbors {
            if other == target {
                continue;
            }
            adjacency[other].remove(&id);
            *adjacency[other].entry(target).or_insert(0) += shared;
            *adjacency[target].entry(other).or_insert(0) += shared;
        }
        queue.insert((sizes[target], target));
        alive -= 1;
    }

    let root = |mut c: usize| {
        while parent[c] != c {
            c = parent[c];
        }
        c
    };
    comp.iter().map(|&c| root(c) as u32).collect()
}
