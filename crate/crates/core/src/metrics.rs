//! Mask quality measures and dataset-level aggregation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, BinaryMask};

/// Default probability clip for [`log_loss`].
pub const DEFAULT_LOG_LOSS_EPS: f64 = 1e-7;

/// Intersection over union. Two empty masks score 1.0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let (inter, union) = overlap_counts(a, b);
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

fn overlap_counts(a: &BinaryMask, b: &BinaryMask) -> (usize, usize) {
    a.as_raw()
        .iter()
        .zip(b.as_raw())
        .fold((0, 0), |(i, u), (&x, &y)| (i + (x & y) as usize, u + (x | y) as usize))
}

/// Mean binary cross-entropy of foreground probabilities against `gt`, with
/// predictions clipped to `[eps, 1 - eps]`.
pub fn log_loss(pred: &[f64], gt: &BinaryMask, eps: f64) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidData(format!(
            "{} probabilities for a mask of {} pixels",
            pred.len(),
            gt.len()
        )));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::param("eps", format!("must be in (0, 0.5), got {eps}")));
    }
    if let Some(p) = pred.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidData(format!("probability {p} is outside [0, 1]")));
    }
    let total: f64 = pred
        .iter()
        .zip(gt.as_raw())
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// IoU of one prediction/ground-truth pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub name: String,
    pub iou: f64,
    /// Both masks were empty, so `iou` is 1.0 by convention.
    pub both_empty: bool,
}

/// Per-pair IoU with mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scores: Vec<PairScore>,
    pub count: usize,
    /// `None` when there are no pairs.
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl EvalReport {
    pub fn from_scores(scores: Vec<PairScore>) -> Self {
        let count = scores.len();
        let (mean, std) = match mean_std(scores.iter().map(|s| s.iou)) {
            Some((m, s)) => (Some(m), Some(s)),
            None => (None, None),
        };
        Self {
            scores,
            count,
            mean,
            std,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["name", "iou", "both_empty"])?;
        for s in &self.scores {
            w.write_record([s.name.as_str(), &s.iou.to_string(), &s.both_empty.to_string()])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Mean and population standard deviation, or `None` for no values.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Scores `pred[i]` against `gt[i]`; pairs are named by index.
pub fn evaluate(pred: &[BinaryMask], gt: &[BinaryMask]) -> Result<EvalReport> {
    let names: Vec<String> = (0..pred.len()).map(|i| i.to_string()).collect();
    evaluate_named(&names, pred, gt)
}

/// [`evaluate`] with caller-supplied pair names.
pub fn evaluate_named(names: &[String], pred: &[BinaryMask], gt: &[BinaryMask]) -> Result<EvalReport> {
    if pred.len() != gt.len() || names.len() != pred.len() {
        return Err(Error::InvalidData(format!(
            "{} predictions, {} ground-truth masks and {} names",
            pred.len(),
            gt.len(),
            names.len()
        )));
    }
    let scores = names
        .par_iter()
        .zip(pred)
        .zip(gt)
        .map(|((name, p), g)| {
            Ok(PairScore {
                name: name.clone(),
                iou: iou(p, g)?,
                both_empty: !p.has_foreground() && !g.has_foreground(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_scores(scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(x0: u32, y0: u32) -> BinaryMask {
        BinaryMask::from_fn(3, 3, |x, y| (x0..x0 + 2).contains(&x) && (y0..y0 + 2).contains(&y))
    }

    fn arb_mask(w: u32, h: u32) -> impl Strategy<Value = BinaryMask> {
        prop::collection::vec(0u8..=1, (w * h) as usize).prop_map(move |d| BinaryMask::new(w, h, d).unwrap())
    }

    fn brute_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let mut inter = 0;
        let mut union = 0;
        for y in 0..a.height() {
            for x in 0..a.width() {
                if a.get(x, y) && b.get(x, y) {
                    inter += 1;
                }
                if a.get(x, y) || b.get(x, y) {
                    union += 1;
                }
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&block(0, 0), &block(1, 1)).unwrap(), 1.0 / 7.0);
        assert_eq!(iou(&block(0, 0), &block(0, 0)).unwrap(), 1.0);
        let a = BinaryMask::from_fn(4, 1, |x, _| x < 2);
        let b = BinaryMask::from_fn(4, 1, |x, _| x >= 2);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        assert_eq!(iou(&BinaryMask::zeros(2, 2), &BinaryMask::zeros(2, 2)).unwrap(), 1.0);
        assert_eq!(iou(&BinaryMask::zeros(2, 2), &BinaryMask::ones(2, 2)).unwrap(), 0.0);
        assert!(iou(&BinaryMask::zeros(2, 2), &BinaryMask::zeros(2, 3)).is_err());
    }

    #[test]
    fn log_loss_examples() {
        let gt = BinaryMask::from_fn(3, 3, |x, _| x == 1);
        let perfect: Vec<f64> = gt.as_raw().iter().map(|&v| v as f64).collect();
        let l = log_loss(&perfect, &gt, DEFAULT_LOG_LOSS_EPS).unwrap();
        assert!((l - -(1.0 - 1e-7f64).ln()).abs() < 1e-15);
        let half = vec![0.5; 9];
        assert!((log_loss(&half, &gt, DEFAULT_LOG_LOSS_EPS).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(log_loss(&[0.5; 8], &gt, 1e-7).is_err());
        assert!(log_loss(&[1.5; 9], &gt, 1e-7).is_err());
        assert!(log_loss(&half, &gt, 0.0).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let r = evaluate(&[block(0, 0)], &[block(0, 0)]).unwrap();
        assert_eq!((r.count, r.mean, r.std), (1, Some(1.0), Some(0.0)));
        let r = evaluate(&[block(0, 0), block(0, 0)], &[block(0, 0), BinaryMask::zeros(3, 3)]).unwrap();
        assert_eq!((r.mean, r.std), (Some(0.5), Some(0.5)));
        assert!(!r.scores[1].both_empty);
        let r = evaluate(&[], &[]).unwrap();
        assert_eq!((r.count, r.mean), (0, None));
        assert!(evaluate(&[block(0, 0)], &[]).is_err());
    }

    #[test]
    fn csv_export() {
        let r = evaluate(
            &[block(0, 0), BinaryMask::zeros(3, 3)],
            &[block(1, 1), BinaryMask::zeros(3, 3)],
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "name,iou,both_empty");
        assert!(lines[1].starts_with("0,0.142857"));
        assert_eq!(lines[2], "1,1,true");
    }

    proptest! {
        #[test]
        fn iou_matches_pixel_count(a in arb_mask(16, 16), b in arb_mask(16, 16)) {
            let got = iou(&a, &b).unwrap();
            prop_assert_eq!(got, brute_iou(&a, &b));
            prop_assert_eq!(got, iou(&b, &a).unwrap());
            if a.has_foreground() {
                prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
            }
        }

        #[test]
        fn flipping_a_disagreeing_pixel_never_helps(a in arb_mask(6, 6), b in arb_mask(6, 6), pick in any::<prop::sample::Index>()) {
            let agree: Vec<usize> = (0..36).filter(|&i| a.get_at(i) == b.get_at(i)).collect();
            prop_assume!(!agree.is_empty());
            // Make one currently-agreeing pixel disagree.
            let i = agree[pick.index(agree.len())];
            let mut worse = a.clone();
            worse.set_at(i, !a.get_at(i));
            prop_assert!(iou(&worse, &b).unwrap() <= iou(&a, &b).unwrap());
        }

        #[test]
        fn log_loss_matches_direct_sum(
            probs in prop::collection::vec(0.0f64..=1.0, 16),
            gt in arb_mask(4, 4),
        ) {
            let eps = 1e-7;
            let mut want = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                let p = p.clamp(eps, 1.0 - eps);
                want += if gt.get_at(i) { -p.ln() } else { -(1.0 - p).ln() };
            }
            want /= 16.0;
            prop_assert!((log_loss(&probs, &gt, eps).unwrap() - want).abs() < 1e-12);
        }

        #[test]
        fn constant_log_loss_is_smallest_at_foreground_fraction(gt in arb_mask(5, 5)) {
            let frac = gt.count_ones() as f64 / 25.0;
            prop_assume!(frac > 0.0 && frac < 1.0);
            let at = |p: f64| log_loss(&[p; 25], &gt, 1e-7).unwrap();
            let best = at(frac);
            for k in 1..100 {
                prop_assert!(best <= at(k as f64 / 100.0) + 1e-12);
            }
        }

        #[test]
        fn evaluate_matches_recomputed_stats(pairs in prop::collection::vec((arb_mask(4, 4), arb_mask(4, 4)), 10)) {
            let (p, g): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let r = evaluate(&p, &g).unwrap();
            let vals: Vec<f64> = p.iter().zip(&g).map(|(a, b)| brute_iou(a, b)).collect();
            let mean = vals.iter().sum::<f64>() / 10.0;
            let sq = vals.iter().map(|v| v * v).sum::<f64>() / 10.0;
            let std = (sq - mean * mean).max(0.0).sqrt();
            prop_assert!((r.mean.unwrap() - mean).abs() < 1e-12);
            prop_assert!((r.std.unwrap() - std).abs() < 1e-9);
        }
    }
}
