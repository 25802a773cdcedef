use crate::error::{Error, Result};
use crate::raster::{BinaryMask, FloatMap};

pub const OTSU_BINS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OtsuResult {
    /// Cut point in the units of the input map. Values strictly above it are
    /// foreground.
    pub threshold: f64,
    /// Last histogram bin that belongs to the background class.
    pub bin: u8,
    /// Between-class variance at `bin`, measured on the normalized `[0, 1]`
    /// intensity scale where bin `b` has level `b / 255`.
    pub between_class_variance: f64,
}

/// Histogram bin of every value after min-max normalization to `[0, 1]`.
///
/// Returns `None` for a constant map.
pub fn quantize(map: &FloatMap) -> Option<Vec<u8>> {
    let (lo, hi) = map.range();
    if hi <= lo {
        return None;
    }
    let span = hi - lo;
    let top = (OTSU_BINS - 1) as f64;
    Some(
        map.data()
            .iter()
            .map(|&v| (((v - lo) / span) * top).round().clamp(0.0, top) as u8)
            .collect(),
    )
}

/// Between-class variance of a cut up to a constant factor:
/// `diff^2 / weight` with `diff = |s0 n1 - s1 n0|` and `weight = n0 n1`.
struct Cut {
    diff: u128,
    weight: u128,
}

impl Cut {
    fn value(&self) -> f64 {
        let d = self.diff as f64;
        d * d / self.weight as f64
    }

    /// Exact comparison when the cross products fit, floating point beyond.
    fn beats(&self, other: &Cut) -> bool {
        let exact = (|| {
            let a = self.diff.checked_mul(self.diff)?.checked_mul(other.weight)?;
            let b = other.diff.checked_mul(other.diff)?.checked_mul(self.weight)?;
            Some(a > b)
        })();
        exact.unwrap_or_else(|| self.value() > other.value())
    }
}

pub fn otsu_threshold(map: &FloatMap) -> Result<OtsuResult> {
    let bins = quantize(map).ok_or_else(|| {
        Error::DegenerateInput("constant map has no Otsu threshold".to_string())
    })?;

    let mut hist = [0u64; OTSU_BINS];
    for &b in &bins {
        hist[b as usize] += 1;
    }
    let total: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(b, &c)| b as u64 * c).sum();

    // Integer class statistics make ties exact, so the lowest qualifying bin
    // wins them deterministically.
    let norm = (total as f64 * total as f64) * ((OTSU_BINS - 1) as f64).powi(2);
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(usize, Cut)> = None;
    for (t, &count) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        n0 += count;
        s0 += t as u64 * count;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total_sum - s0;
        let diff = ((s0 as i128) * (n1 as i128) - (s1 as i128) * (n0 as i128)).unsigned_abs();
        let cut = Cut {
            diff,
            weight: n0 as u128 * n1 as u128,
        };
        if best.as_ref().is_none_or(|(_, b)| cut.beats(b)) {
            best = Some((t, cut));
        }
    }
    let (bin, cut) = best.expect("non-constant map spans bins 0 and 255, so some cut separates them");
    let between_class_variance = cut.value() / norm;

    let mut below = f64::NEG_INFINITY;
    let mut above = f64::INFINITY;
    for (&v, &b) in map.data().iter().zip(&bins) {
        if (b as usize) <= bin {
            below = below.max(v);
        } else {
            above = above.min(v);
        }
    }
    let mut threshold = below + (above - below) / 2.0;
    if threshold >= above {
        threshold = below;
    }

    Ok(OtsuResult {
        threshold,
        bin: bin as u8,
        between_class_variance,
    })
}

/// Sets every pixel whose value is strictly greater than `threshold`.
pub fn binarize(map: &FloatMap, threshold: f64) -> BinaryMask {
    let bits = map.data().iter().map(|&v| v > threshold).collect();
    BinaryMask::new(map.width(), map.height(), bits).expect("map dims are valid")
}
