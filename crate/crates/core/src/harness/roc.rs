//! Receiver operating characteristics.

use crate::error::{Error, Result};

/// Operating points of a score threshold sweep, from the strictest threshold
/// (`+inf`, nothing accepted) down to the lowest score (everything accepted).
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// Descending; the first entry is `+inf`.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    /// Trapezoidal area under `tpr(fpr)`.
    pub auc: f64,
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

/// Sweeps a threshold over the union of scores; a score is accepted when it
/// is at or above the threshold. Equal scores share one operating point, which
/// makes ties contribute half a win to the area.
pub fn roc(pos: &[f64], neg: &[f64]) -> Result<RocCurve> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Argument(
            "ROC needs at least one positive and one negative score".into(),
        ));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::Argument("ROC scores must not be NaN".into()));
    }
    let mut scored: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let t = scored[i].0;
        while i < scored.len() && scored[i].0 == t {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(t);
        fpr.push(fp as f64 / nn);
        tpr.push(tp as f64 / np);
    }
    let auc = fpr
        .windows(2)
        .zip(tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) / 2.0)
        .sum();
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
    })
}

/// TPR at the largest achieved FPR not above `target_fpr`. Never
/// interpolates between operating points, so it never overstates detection.
pub fn tpr_at_fpr(curve: &RocCurve, target_fpr: f64) -> f64 {
    debug_assert!(target_fpr > 0.0 && target_fpr < 1.0);
    curve
        .fpr
        .iter()
        .zip(&curve.tpr)
        .take_while(|(&f, _)| f <= target_fpr)
        .last()
        .map_or(0.0, |(_, &t)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Fraction of (pos, neg) pairs the positive wins, ties counting half.
    fn mann_whitney(pos: &[f64], neg: &[f64]) -> f64 {
        let mut wins = 0.0;
        for &p in pos {
            for &n in neg {
                wins += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn separable() {
        let c = roc(&[10.0, 20.0], &[1.0, 2.0]).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(tpr_at_fpr(&c, 0.005), 1.0);
        assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
        assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));
    }

    #[test]
    fn identical_multisets_give_half() {
        let s = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(roc(&s, &s).unwrap().auc, 0.5);
    }

    #[test]
    fn ties_share_a_point() {
        let c = roc(&[1.0, 2.0], &[2.0, 0.0]).unwrap();
        assert_eq!(c.thresholds, vec![f64::INFINITY, 2.0, 1.0, 0.0]);
        assert_eq!(c.fpr, vec![0.0, 0.5, 0.5, 1.0]);
        assert_eq!(c.tpr, vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            // Coarse values so ties are common.
            let pos: Vec<f64> = (0..200).map(|_| (rng.random::<f64>() * 30.0).round() + 3.0).collect();
            let neg: Vec<f64> = (0..200).map(|_| (rng.random::<f64>() * 30.0).round()).collect();
            let c = roc(&pos, &neg).unwrap();
            assert!((c.auc - mann_whitney(&pos, &neg)).abs() <= 1e-9);
            assert!(c.fpr.windows(2).all(|w| w[0] <= w[1]));
            assert!(c.tpr.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn conservative_step() {
        // fpr steps 0 -> 0.5 -> 1; anything below 0.5 reads the fpr = 0 point.
        let c = roc(&[5.0, 3.0], &[4.0, 1.0]).unwrap();
        assert_eq!(tpr_at_fpr(&c, 0.1), 0.5);
        assert_eq!(tpr_at_fpr(&c, 0.5), 1.0);
        let c = roc(&[1.0], &[2.0]).unwrap();
        assert_eq!(tpr_at_fpr(&c, 0.2), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(roc(&[], &[1.0]), Err(Error::Argument(_))));
        assert!(matches!(roc(&[1.0], &[]), Err(Error::Argument(_))));
        assert!(roc(&[f64::NAN], &[1.0]).is_err());
    }
}
