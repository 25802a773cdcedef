//! Deterministic stand-in for a segmentation network.
//!
//! [`ContractingStub`] knows every frame's initial pseudo-annotation and its
//! ground truth, and replays the evolution on its own: each version removes
//! [`CONTRACTION_RATE`] of the error area left by the previous one. Errors
//! are fixed in whole superpixels when the frame's superpixels are known and
//! in pixels otherwise. Frames share one fixing order per group, with every
//! frame's errors interleaved by their relative rank so each frame advances
//! in proportion; version `v` cuts that order where the fixed area is nearest
//! to `1 - 0.75^v` of the group's total.
//!
//! The model of version `v` learns version `v + 1`. Training starts from an
//! all-foreground guess that is cut back toward this target along
//! [`EPOCH_SCHEDULE`], reaching it exactly after a few epochs. Handles are
//! plain strings `stub-v<version>-e<epoch>`.

use std::cell::OnceCell;
use std::collections::{HashMap, VecDeque};

use super::{ModelHandle, Predictor, Trainer, TrainingSample};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RgbImage, SuperpixelMap};
use crate::selection::FrameRef;

pub const CONTRACTION_RATE: f64 = 0.25;

/// Contraction from the all-foreground guess to the target, per epoch;
/// later epochs stay at 1.
pub const EPOCH_SCHEDULE: [f64; 3] = [0.5, 0.75, 0.9];

/// 4-connected step distance of every pixel to the nearest set pixel of
/// `seed`; `usize::MAX` when `seed` is empty.
fn distance_to(seed: &BinaryMask) -> Vec<usize> {
    let (w, h) = seed.dims();
    let mut dist = vec![usize::MAX; w * h];
    let mut queue = VecDeque::new();
    for (i, &b) in seed.bits().iter().enumerate() {
        if b {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if dist[j] == usize::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    dist
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("contraction rate {rate} outside [0, 1]")))
    }
}

/// Moves `mask` toward `truth`: drops the `ceil(rate * |FP|)` false
/// positives farthest from the truth and adds the `ceil(rate * |FN|)` false
/// negatives nearest to the mask. Ties fall back to scan order, so a larger
/// rate always flips a superset of pixels.
pub fn contract_toward(mask: &BinaryMask, truth: &BinaryMask, rate: f64) -> Result<BinaryMask> {
    if mask.dims() != truth.dims() {
        return Err(Error::dims(mask.dims(), truth.dims()));
    }
    check_rate(rate)?;
    let plan = Plan::pixels(mask, truth);
    let take = |n: usize| (rate * n as f64).ceil() as usize;
    Ok(plan.apply(take(plan.fp.len()), take(plan.fn_.len())))
}

/// Error units of an initial mask in the order they get fixed.
#[derive(Clone, Debug)]
struct Plan {
    initial: BinaryMask,
    /// Pixel index -> region, for region units.
    unit_of: Option<Vec<u32>>,
    fp: Vec<usize>,
    fn_: Vec<usize>,
    /// Both lists merged by relative rank: (unit, new value, pixels changed).
    order: Vec<(usize, bool, usize)>,
}

impl Plan {
    fn new(initial: &BinaryMask, unit_of: Option<Vec<u32>>, fp: Vec<usize>, fn_: Vec<usize>, area: impl Fn(usize, bool) -> usize) -> Self {
        let pos = interleave(&[fp.len(), fn_.len()]);
        let mut order = vec![(0, false, 0); fp.len() + fn_.len()];
        for (k, &u) in fp.iter().enumerate() {
            order[pos[0][k]] = (u, false, area(u, false));
        }
        for (k, &u) in fn_.iter().enumerate() {
            order[pos[1][k]] = (u, true, area(u, true));
        }
        Self {
            initial: initial.clone(),
            unit_of,
            fp,
            fn_,
            order,
        }
    }

    fn pixels(mask: &BinaryMask, truth: &BinaryMask) -> Self {
        let to_truth = distance_to(truth);
        let to_mask = distance_to(mask);
        let (m, t) = (mask.bits(), truth.bits());
        let mut fp: Vec<usize> = (0..m.len()).filter(|&i| m[i] && !t[i]).collect();
        let mut fn_: Vec<usize> = (0..m.len()).filter(|&i| !m[i] && t[i]).collect();
        fp.sort_by_key(|&i| (std::cmp::Reverse(to_truth[i]), i));
        fn_.sort_by_key(|&i| (to_mask[i], i));
        Self::new(mask, None, fp, fn_, |_, _| 1)
    }

    /// Regions count as mask or truth by majority. Only regions without any
    /// truth pixel are false positives, so removing one never costs overlap.
    fn regions(mask: &BinaryMask, truth: &BinaryMask, sp: &SuperpixelMap) -> Self {
        let n = sp.region_count();
        let areas = sp.region_areas();
        let (mut in_mask, mut in_truth) = (vec![0usize; n], vec![0usize; n]);
        let (mut to_truth, mut to_mask) = (vec![usize::MAX; n], vec![usize::MAX; n]);
        let (dt, dm) = (distance_to(truth), distance_to(mask));
        for (i, &l) in sp.labels().iter().enumerate() {
            let l = l as usize;
            in_mask[l] += mask.bits()[i] as usize;
            in_truth[l] += truth.bits()[i] as usize;
            to_truth[l] = to_truth[l].min(dt[i]);
            to_mask[l] = to_mask[l].min(dm[i]);
        }
        let masked = |r: usize| 2 * in_mask[r] > areas[r];
        let mut fp: Vec<usize> = (0..n).filter(|&r| masked(r) && in_truth[r] == 0).collect();
        let mut fn_: Vec<usize> = (0..n)
            .filter(|&r| !masked(r) && 2 * in_truth[r] > areas[r])
            .collect();
        fp.sort_by_key(|&r| (std::cmp::Reverse(to_truth[r]), r));
        fn_.sort_by_key(|&r| (to_mask[r], r));
        let changed = |r: usize, set: bool| if set { areas[r] - in_mask[r] } else { in_mask[r] };
        Self::new(mask, Some(sp.labels().to_vec()), fp, fn_, changed)
    }

    /// Initial mask with the given units set to their new values.
    fn flip(&self, units: impl Iterator<Item = (usize, bool)>) -> BinaryMask {
        let mut bits = self.initial.bits().to_vec();
        match &self.unit_of {
            None => {
                for (i, v) in units {
                    bits[i] = v;
                }
            }
            Some(unit_of) => {
                let count = unit_of.iter().map(|&u| u as usize + 1).max().unwrap_or(0);
                let mut flip: Vec<Option<bool>> = vec![None; count];
                for (r, v) in units {
                    flip[r] = Some(v);
                }
                for (b, &u) in bits.iter_mut().zip(unit_of) {
                    if let Some(v) = flip[u as usize] {
                        *b = v;
                    }
                }
            }
        }
        BinaryMask::new(self.initial.width(), self.initial.height(), bits)
            .expect("same dimensions as the initial mask")
    }

    fn apply(&self, n_fp: usize, n_fn: usize) -> BinaryMask {
        let fp = self.fp[..n_fp].iter().map(|&u| (u, false));
        let fn_ = self.fn_[..n_fn].iter().map(|&u| (u, true));
        self.flip(fp.chain(fn_))
    }

    fn apply_first(&self, n: usize) -> BinaryMask {
        self.flip(self.order[..n].iter().map(|&(u, v, _)| (u, v)))
    }
}

fn parse_handle(h: &ModelHandle) -> Option<(usize, usize)> {
    let rest = h.0.strip_prefix("stub-v")?;
    let (v, e) = rest.split_once("-e")?;
    Some((v.parse().ok()?, e.parse().ok()?))
}

/// Position in a shared order for each of `lists[f]` items of every list,
/// ranked by (k + 0.5) / n so every list advances in proportion.
fn interleave(lists: &[usize]) -> Vec<Vec<usize>> {
    // compared exactly as (2k + 1) * n' against (2k' + 1) * n
    let mut all: Vec<(usize, usize)> = lists
        .iter()
        .enumerate()
        .flat_map(|(f, &n)| (0..n).map(move |k| (f, k)))
        .collect();
    all.sort_by(|&(fa, ka), &(fb, kb)| {
        let a = (2 * ka + 1) as u128 * lists[fb] as u128;
        let b = (2 * kb + 1) as u128 * lists[fa] as u128;
        a.cmp(&b).then(fa.cmp(&fb)).then(ka.cmp(&kb))
    });
    let mut pos: Vec<Vec<usize>> = lists.iter().map(|&n| vec![0; n]).collect();
    for (p, (f, k)) in all.into_iter().enumerate() {
        pos[f][k] = p;
    }
    pos
}

/// Fixing order of one group of frames.
#[derive(Clone, Debug)]
struct GroupOrder {
    /// Cumulative changed pixels after the first `c` units, `c = 0..=N`.
    cumulative: Vec<usize>,
}

impl GroupOrder {
    /// Units fixed after `version` contractions: the cut whose changed area
    /// is nearest to `(1 - 0.75^version)` of the total, lower on ties.
    fn cut(&self, version: usize) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0) as f64;
        let left = (1.0 - CONTRACTION_RATE).powi(version.min(4096) as i32);
        let target = total * (1.0 - left);
        let c = self.cumulative.partition_point(|&a| (a as f64) < target);
        if c == 0 {
            return 0;
        }
        if c == self.cumulative.len() {
            return c - 1;
        }
        if target - self.cumulative[c - 1] as f64 <= self.cumulative[c] as f64 - target {
            c - 1
        } else {
            c
        }
    }
}

#[derive(Clone, Debug)]
struct Schedule {
    /// Per frame: position of each of its units in its group's order.
    positions: Vec<Vec<usize>>,
    groups: HashMap<u32, GroupOrder>,
}

#[derive(Clone, Debug, Default)]
pub struct ContractingStub {
    frames: Vec<(Plan, u32)>,
    index: HashMap<FrameRef, usize>,
    schedule: OnceCell<Schedule>,
}

impl ContractingStub {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a frame in group 0.
    pub fn insert(
        &mut self,
        frame: FrameRef,
        initial_pa: BinaryMask,
        truth: BinaryMask,
        superpixels: Option<&SuperpixelMap>,
    ) -> Result<()> {
        self.insert_in_group(frame, initial_pa, truth, superpixels, 0)
    }

    /// Each group follows the schedule on its own, so a group's total error
    /// shrinks by the contraction rate per version up to one unit of rounding.
    pub fn insert_in_group(
        &mut self,
        frame: FrameRef,
        initial_pa: BinaryMask,
        truth: BinaryMask,
        superpixels: Option<&SuperpixelMap>,
        group: u32,
    ) -> Result<()> {
        if initial_pa.dims() != truth.dims() {
            return Err(Error::dims(initial_pa.dims(), truth.dims()));
        }
        let plan = match superpixels {
            Some(sp) if sp.dims() != truth.dims() => return Err(Error::dims(sp.dims(), truth.dims())),
            Some(sp) => Plan::regions(&initial_pa, &truth, sp),
            None => Plan::pixels(&initial_pa, &truth),
        };
        match self.index.get(&frame) {
            Some(&i) => self.frames[i] = (plan, group),
            None => {
                self.index.insert(frame, self.frames.len());
                self.frames.push((plan, group));
            }
        }
        self.schedule = OnceCell::new();
        Ok(())
    }

    fn schedule(&self) -> &Schedule {
        self.schedule.get_or_init(|| {
            let mut positions = vec![Vec::new(); self.frames.len()];
            let mut members: HashMap<u32, Vec<usize>> = HashMap::new();
            for (i, (_, g)) in self.frames.iter().enumerate() {
                members.entry(*g).or_default().push(i);
            }
            let mut groups = HashMap::new();
            for (g, idx) in members {
                let lens: Vec<usize> = idx.iter().map(|&i| self.frames[i].0.order.len()).collect();
                let pos = interleave(&lens);
                let mut area = vec![0usize; lens.iter().sum()];
                for (&i, p) in idx.iter().zip(&pos) {
                    for (&(_, _, a), &at) in self.frames[i].0.order.iter().zip(p) {
                        area[at] = a;
                    }
                }
                let mut cumulative = Vec::with_capacity(area.len() + 1);
                cumulative.push(0);
                for a in area {
                    cumulative.push(cumulative.last().unwrap() + a);
                }
                for (&i, p) in idx.iter().zip(pos) {
                    positions[i] = p;
                }
                groups.insert(g, GroupOrder { cumulative });
            }
            Schedule { positions, groups }
        })
    }

    /// The stub's replay of the pseudo-annotation of `version`.
    pub fn version_pa(&self, frame: &FrameRef, version: usize) -> Result<BinaryMask> {
        let &i = self.index.get(frame).ok_or_else(|| Error::Predictor {
            frame: frame.to_string(),
            message: "frame unknown to the stub model".into(),
        })?;
        let s = self.schedule();
        let (plan, g) = &self.frames[i];
        let c = s.groups[g].cut(version);
        Ok(plan.apply_first(s.positions[i].partition_point(|&p| p < c)))
    }

    /// Prediction after epoch `epoch` of version `version`.
    pub fn prediction(&self, frame: &FrameRef, version: usize, epoch: usize) -> Result<BinaryMask> {
        let target = self.version_pa(frame, version + 1)?;
        let rate = EPOCH_SCHEDULE.get(epoch).copied().unwrap_or(1.0);
        let full = BinaryMask::full(target.width(), target.height())?;
        contract_toward(&full, &target, rate)
    }
}

impl Trainer for ContractingStub {
    fn train_epoch(
        &mut self,
        version: usize,
        epoch: usize,
        selected: &[TrainingSample<'_>],
    ) -> Result<ModelHandle> {
        if selected.is_empty() {
            return Err(Error::Trainer {
                version,
                epoch,
                message: "nothing to train on".into(),
            });
        }
        Ok(ModelHandle(format!("stub-v{version}-e{epoch}")))
    }
}

impl Predictor for ContractingStub {
    fn predict(&mut self, model: &ModelHandle, frame: &FrameRef, _: &RgbImage) -> Result<BinaryMask> {
        let (v, e) = parse_handle(model).ok_or_else(|| Error::Predictor {
            frame: frame.to_string(),
            message: format!("unrecognized model handle {model}"),
        })?;
        self.prediction(frame, v, e)
    }
}
