//! Gradient-weighted class activation maps and initial pseudo-annotations.
//!
//! Feature maps and their gradients come from an external network as
//! `(m, t', h', w')` tensors. A 2D map is the `t' = 1` case of the same path.

use crate::error::{Error, Result};
use crate::lowlevel::{binarize, otsu_threshold, slic, SlicParams};
use crate::raster::{mask_union, BinaryMask, FloatMap, RgbImage};
use crate::refine::{refine_mask, RefineParams, RefineReport};

/// Dense row-major array of rank 1 to 4.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::RankOutOfRange(dims.len()));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::LengthMismatch {
                what: "tensor data",
                expected: len,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRaster("tensor holds non-finite values".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Contiguous block of the leading index.
    pub fn slab(&self, i: usize) -> &[f64] {
        let stride: usize = self.dims[1..].iter().product();
        &self.data[i * stride..(i + 1) * stride]
    }
}

/// Feature maps and gradients for one target class.
#[derive(Clone, Debug)]
pub struct GcamRequest {
    pub features: Tensor,
    pub gradients: Tensor,
    pub class_id: u32,
}

impl GcamRequest {
    fn validate(&self) -> Result<()> {
        if self.features.rank() != 4 {
            return Err(Error::InvalidParameter(format!(
                "feature stack must be rank 4 (m, t', h', w'), got rank {}",
                self.features.rank()
            )));
        }
        if self.features.dims() != self.gradients.dims() {
            return Err(Error::InvalidParameter(format!(
                "feature dims {:?} differ from gradient dims {:?}",
                self.features.dims(),
                self.gradients.dims()
            )));
        }
        Ok(())
    }
}

/// Normalization of the channel weights.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum GcamNorm {
    /// Divide by the number of spatio-temporal positions `t'·h'·w'`.
    #[default]
    PositionCount,
    /// Divide by an explicit positive constant.
    Constant(f64),
}

/// Channel weights: the normalized sum of each channel's gradients.
pub fn gcam_weights(req: &GcamRequest) -> Result<Vec<f64>> {
    gcam_weights_with(req, GcamNorm::PositionCount)
}

pub fn gcam_weights_with(req: &GcamRequest, norm: GcamNorm) -> Result<Vec<f64>> {
    req.validate()?;
    let m = req.gradients.dims()[0];
    let positions: usize = req.gradients.dims()[1..].iter().product();
    let z = match norm {
        GcamNorm::PositionCount => positions as f64,
        GcamNorm::Constant(z) if z > 0.0 && z.is_finite() => z,
        GcamNorm::Constant(z) => {
            return Err(Error::InvalidParameter(format!(
                "normalization constant must be positive, got {z}"
            )))
        }
    };
    Ok((0..m)
        .map(|c| req.gradients.slab(c).iter().sum::<f64>() / z)
        .collect())
}

/// `ReLU(Σ_m weights[m] · features[m])` as a `(t', h', w')` tensor.
pub fn gcam_map(features: &Tensor, weights: &[f64]) -> Result<Tensor> {
    if features.rank() != 4 {
        return Err(Error::InvalidParameter(format!(
            "feature stack must be rank 4, got rank {}",
            features.rank()
        )));
    }
    if weights.len() != features.dims()[0] {
        return Err(Error::LengthMismatch {
            what: "gcam weights",
            expected: features.dims()[0],
            actual: weights.len(),
        });
    }
    let plane: usize = features.dims()[1..].iter().product();
    let mut acc = vec![0.0f64; plane];
    for (c, &wt) in weights.iter().enumerate() {
        for (a, &f) in acc.iter_mut().zip(features.slab(c)) {
            *a += wt * f;
        }
    }
    for a in &mut acc {
        *a = a.max(0.0);
    }
    Tensor::new(features.dims()[1..].to_vec(), acc)
}

/// Splits a `(t', h', w')` map into `t'` frames of `w' x h'`.
pub fn split_temporal(s: &Tensor) -> Result<Vec<FloatMap>> {
    if s.rank() != 3 {
        return Err(Error::InvalidParameter(format!(
            "expected a rank-3 (t', h', w') map, got rank {}",
            s.rank()
        )));
    }
    let (t, h, w) = (s.dims()[0], s.dims()[1], s.dims()[2]);
    (0..t)
        .map(|i| FloatMap::new(w, h, s.slab(i).to_vec()))
        .collect()
}

/// Inverse of [`split_temporal`].
pub fn stack_temporal(maps: &[FloatMap]) -> Result<Tensor> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot stack zero maps".into()))?;
    let (w, h) = first.dims();
    let mut data = Vec::with_capacity(maps.len() * w * h);
    for m in maps {
        if m.dims() != (w, h) {
            return Err(Error::dims((w, h), m.dims()));
        }
        data.extend_from_slice(m.data());
    }
    Tensor::new(vec![maps.len(), h, w], data)
}

/// Indices of `t_prime` frames spread uniformly over `t`, each at the center
/// of its segment: `floor((i + 0.5) · t / t_prime)`.
pub fn uniform_sample(t: usize, t_prime: usize) -> Result<Vec<usize>> {
    if t_prime == 0 || t_prime > t {
        return Err(Error::InvalidParameter(format!(
            "cannot sample {t_prime} of {t} frames"
        )));
    }
    Ok((0..t_prime)
        .map(|i| ((2 * i + 1) * t) / (2 * t_prime))
        .collect())
}

/// Per-slice attention maps of one request: gradient weights, weighted ReLU
/// sum, temporal split.
pub fn attention_maps(req: &GcamRequest) -> Result<Vec<FloatMap>> {
    let w = gcam_weights(req)?;
    split_temporal(&gcam_map(&req.features, &w)?)
}

/// For each of `t` frames, the sampled slice whose frame index is nearest
/// (the earlier slice on ties). Frames between samples borrow the action
/// attention of their closest sampled neighbor.
pub fn nearest_sampled(t: usize, t_prime: usize) -> Result<Vec<usize>> {
    let sampled = uniform_sample(t, t_prime)?;
    Ok((0..t)
        .map(|i| {
            (0..t_prime)
                .min_by_key(|&j| (sampled[j].abs_diff(i), j))
                .expect("t_prime >= 1")
        })
        .collect())
}

/// Bilinear resize with half-pixel centers; borders clamp.
pub fn upsample_bilinear(map: &FloatMap, target_w: usize, target_h: usize) -> Result<FloatMap> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidParameter(format!(
            "target size {target_w}x{target_h} is empty"
        )));
    }
    let (sw, sh) = map.dims();
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
            .clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    FloatMap::from_fn(target_w, target_h, |x, y| {
        let (x0, x1, fx) = axis(x, sw, target_w);
        let (y0, y1, fy) = axis(y, sh, target_h);
        let top = map.get(x0, y0) * (1.0 - fx) + map.get(x1, y0) * fx;
        let bottom = map.get(x0, y1) * (1.0 - fx) + map.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaV0Config {
    pub slic: SlicParams,
    pub refine: RefineParams,
    pub use_action_branch: bool,
    /// Attention maps per clip.
    pub t_prime: usize,
}

impl Default for PaV0Config {
    fn default() -> Self {
        Self {
            slic: SlicParams::default(),
            refine: RefineParams::default(),
            use_action_branch: true,
            t_prime: 4,
        }
    }
}

fn to_frame_size(map: &FloatMap, frame: &RgbImage) -> Result<FloatMap> {
    if map.dims() == frame.dims() {
        Ok(map.clone())
    } else {
        upsample_bilinear(map, frame.width(), frame.height())
    }
}

fn branch_mask(att: &FloatMap, frame: &RgbImage, branch: &str) -> Result<BinaryMask> {
    let att = to_frame_size(att, frame)?;
    let otsu = otsu_threshold(&att).map_err(|e| match e {
        Error::DegenerateInput(msg) => Error::DegenerateInput(format!("{branch} attention: {msg}")),
        other => other,
    })?;
    Ok(binarize(&att, otsu.threshold))
}

/// Union of the Otsu-binarized actor map and, when the action branch is
/// enabled and a map is given, the action map.
pub fn initial_mask(
    frame: &RgbImage,
    actor_att: &FloatMap,
    action_att: Option<&FloatMap>,
    cfg: &PaV0Config,
) -> Result<BinaryMask> {
    let actor = branch_mask(actor_att, frame, "actor")?;
    match action_att.filter(|_| cfg.use_action_branch) {
        Some(action) => mask_union(&actor, &branch_mask(action, frame, "action")?),
        None => Ok(actor),
    }
}

/// Initial pseudo-annotation of one frame: binarized attention, refined over
/// the frame's superpixels.
pub fn generate_pa_v0(
    frame: &RgbImage,
    actor_att: &FloatMap,
    action_att: Option<&FloatMap>,
    cfg: &PaV0Config,
) -> Result<(BinaryMask, RefineReport)> {
    let m_init = initial_mask(frame, actor_att, action_att, cfg)?;
    let sp = slic(frame, &cfg.slic)?;
    refine_mask(&m_init, &sp, &cfg.refine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_borrow_nearest_slice() {
        // t = 8, t' = 4 samples frames 1, 3, 5, 7
        assert_eq!(nearest_sampled(8, 4).unwrap(), vec![0, 0, 0, 1, 1, 2, 2, 3]);
        assert_eq!(nearest_sampled(3, 1).unwrap(), vec![0, 0, 0]);
        assert!(nearest_sampled(2, 3).is_err());
    }

    fn t4(dims: [usize; 4], data: Vec<f64>) -> Tensor {
        Tensor::new(dims.to_vec(), data).unwrap()
    }

    #[test]
    fn weights_of_zero_and_constant_gradients() {
        let f = t4([2, 1, 2, 2], vec![1.0; 8]);
        let req = GcamRequest {
            features: f.clone(),
            gradients: t4([2, 1, 2, 2], vec![0.0; 8]),
            class_id: 0,
        };
        assert_eq!(gcam_weights(&req).unwrap(), vec![0.0, 0.0]);
        let req = GcamRequest {
            features: t4([1, 2, 2, 2], vec![1.0; 8]),
            gradients: t4([1, 2, 2, 2], vec![-0.25; 8]),
            class_id: 0,
        };
        assert_eq!(gcam_weights(&req).unwrap(), vec![-0.25]);
    }

    #[test]
    fn weights_reject_mismatched_dims() {
        let req = GcamRequest {
            features: t4([1, 1, 2, 2], vec![0.0; 4]),
            gradients: t4([1, 2, 1, 2], vec![0.0; 4]),
            class_id: 3,
        };
        assert!(gcam_weights(&req).is_err());
    }

    #[test]
    fn map_is_relu_of_weighted_sum() {
        let f = t4([1, 1, 2, 2], vec![-1.0, 2.0, 0.5, -3.0]);
        assert_eq!(gcam_map(&f, &[1.0]).unwrap().data(), &[0.0, 2.0, 0.5, 0.0]);
        assert!(gcam_map(&f, &[0.0]).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(gcam_map(&f, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn split_and_stack() {
        let s = Tensor::new(vec![2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let maps = split_temporal(&s).unwrap();
        assert_eq!(maps.len(), 2);
        assert_eq!(maps[1].data(), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(maps[0].get(1, 1), 3.0);
        assert_eq!(stack_temporal(&maps).unwrap(), s);
        let single = Tensor::new(vec![1, 2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(split_temporal(&single).unwrap()[0].dims(), (3, 2));
        assert!(split_temporal(&Tensor::new(vec![4], vec![0.0; 4]).unwrap()).is_err());
    }

    #[test]
    fn uniform_sampling() {
        assert_eq!(uniform_sample(10, 10).unwrap(), (0..10).collect::<Vec<_>>());
        assert_eq!(uniform_sample(10, 1).unwrap(), vec![5]);
        assert_eq!(uniform_sample(9, 3).unwrap(), vec![1, 4, 7]);
        assert!(uniform_sample(3, 4).is_err());
        assert!(uniform_sample(3, 0).is_err());
    }

    #[test]
    fn bilinear_cases() {
        let one = FloatMap::new(1, 1, vec![0.3]).unwrap();
        let up = upsample_bilinear(&one, 5, 4).unwrap();
        assert!(up.data().iter().all(|&v| v == 0.3));
        let sq = FloatMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(upsample_bilinear(&sq, 2, 2).unwrap(), sq);
        let ramp = FloatMap::new(2, 1, vec![0.0, 1.0]).unwrap();
        let up = upsample_bilinear(&ramp, 4, 1).unwrap();
        assert_eq!(up.data(), &[0.0, 0.25, 0.75, 1.0]);
        assert!(upsample_bilinear(&ramp, 0, 1).is_err());
    }

    #[test]
    fn constant_attention_names_branch() {
        let frame = RgbImage::filled(8, 8, [10, 10, 10]).unwrap();
        let good = FloatMap::from_fn(8, 8, |x, _| x as f64).unwrap();
        let flat = FloatMap::new(8, 8, vec![1.0; 64]).unwrap();
        let cfg = PaV0Config::default();
        let err = initial_mask(&frame, &good, Some(&flat), &cfg).unwrap_err();
        assert!(err.to_string().contains("action"), "{err}");
        let err = initial_mask(&frame, &flat, None, &cfg).unwrap_err();
        assert!(err.to_string().contains("actor"), "{err}");
    }
}
