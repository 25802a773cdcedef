use crate::error::{Error, Result};

pub const DEFAULT_ALIGN_WINDOW: usize = 9;

/// Majority vote of per-frame action labels over a sliding window of
/// `window` frames, clipped at the sequence ends.
///
/// Ties go to the label with the highest summed confidence when
/// `confidences` is given, then to the label whose first occurrence in the
/// whole sequence comes earliest.
pub fn align_actions<L: Clone + Eq>(
    labels: &[L],
    window: usize,
    confidences: Option<&[f64]>,
) -> Result<Vec<L>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "alignment window must be odd and at least 1, got {window}"
        )));
    }
    if let Some(c) = confidences {
        if c.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "confidences",
                expected: labels.len(),
                actual: c.len(),
            });
        }
    }
    let half = window / 2;
    let n = labels.len();
    let first_seen: Vec<usize> = (0..n)
        .map(|i| labels.iter().position(|l| *l == labels[i]).expect("label is present"))
        .collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = (i.saturating_sub(half), (i + half + 1).min(n));
        // (first index in sequence, votes, confidence)
        let mut tally: Vec<(usize, usize, f64)> = Vec::new();
        for j in lo..hi {
            let conf = confidences.map_or(0.0, |c| c[j]);
            let first = first_seen[j];
            match tally.iter_mut().find(|t| t.0 == first) {
                Some(t) => {
                    t.1 += 1;
                    t.2 += conf;
                }
                None => tally.push((first, 1, conf)),
            }
        }
        let best = tally
            .iter()
            .max_by(|a, b| {
                a.1.cmp(&b.1)
                    .then(a.2.total_cmp(&b.2))
                    .then(b.0.cmp(&a.0))
            })
            .expect("window holds at least one frame");
        out.push(labels[best.0].clone());
    }
    Ok(out)
}
