//! Frame-level detection scoring: confusion counts, ROC sweeps and AUC.

use std::io::Write;

use crate::csvio::format_real;
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    /// Speech detection rate, `tp / (tp + fn)`; `None` without speech frames.
    pub fn sdr(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.tp as f64 / pos as f64)
    }

    /// False acceptance rate, `fp / (fp + tn)`; `None` without non-speech frames.
    pub fn far(&self) -> Option<f64> {
        let neg = self.fp + self.tn;
        (neg > 0).then(|| self.fp as f64 / neg as f64)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rate = |r: Option<f64>| r.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tp", "fp", "tn", "fn", "sdr", "far"])?;
        w.write_record([
            self.tp.to_string(),
            self.fp.to_string(),
            self.tn.to_string(),
            self.fn_.to_string(),
            rate(self.sdr()),
            rate(self.far()),
        ])?;
        w.flush()?;
        Ok(())
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

pub fn confusion(decisions: &[bool], labels: &[bool]) -> Result<ConfusionCounts> {
    check_len(labels.len(), decisions.len())?;
    if labels.is_empty() {
        return Err(Error::invalid("no frames to score"));
    }
    let mut c = ConfusionCounts::default();
    for (&d, &l) in decisions.iter().zip(labels) {
        match (l, d) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub far: f64,
    pub sdr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RocCurve {
    /// Sorted by FAR, then SDR, ascending.
    pub points: Vec<RocPoint>,
    /// Decision threshold of each point (`score > threshold` is speech).
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    /// Writes `threshold,far,sdr` rows followed by an `auc,<value>` line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let area = auc(self)?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["threshold", "far", "sdr"])?;
            for (p, t) in self.points.iter().zip(&self.thresholds) {
                w.write_record([format_real(*t), format_real(p.far), format_real(p.sdr)])?;
            }
            w.flush()?;
        }
        writeln!(out, "auc,{area}")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// One threshold per distinct score.
    #[default]
    Exhaustive,
    /// Thresholds at this many evenly spaced score quantiles.
    Quantiles(usize),
}

pub fn roc_sweep(scores: &[f64], labels: &[bool], mode: ThresholdMode) -> Result<RocCurve> {
    check_len(labels.len(), scores.len())?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score {i} is NaN")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let sorted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    // prefix counts over descending scores: above[k] = positives among the top k
    let mut pos_above = Vec::with_capacity(order.len() + 1);
    pos_above.push(0usize);
    for &i in &order {
        pos_above.push(pos_above.last().unwrap() + usize::from(labels[i]));
    }
    let point_at = |thr: f64| {
        let k = sorted.partition_point(|&s| s > thr);
        let tp = pos_above[k];
        RocPoint {
            far: (k - tp) as f64 / n_neg as f64,
            sdr: tp as f64 / n_pos as f64,
        }
    };

    let mut thresholds: Vec<f64> = match mode {
        ThresholdMode::Exhaustive => {
            let mut t = sorted.clone();
            t.dedup();
            t
        }
        ThresholdMode::Quantiles(n) => {
            let n = n.max(1);
            let mut t: Vec<f64> = (0..n)
                .map(|q| {
                    let pos = if n == 1 { 0 } else { q * (sorted.len() - 1) / (n - 1) };
                    sorted[pos]
                })
                .collect();
            t.dedup();
            t
        }
    };
    let mut points: Vec<RocPoint> = thresholds.iter().map(|&t| point_at(t)).collect();

    let origin = RocPoint { far: 0.0, sdr: 0.0 };
    let corner = RocPoint { far: 1.0, sdr: 1.0 };
    if points.first() != Some(&origin) {
        points.insert(0, origin);
        thresholds.insert(0, f64::INFINITY);
    }
    if points.last() != Some(&corner) {
        points.push(corner);
        thresholds.push(f64::NEG_INFINITY);
    }
    Ok(RocCurve { points, thresholds })
}

/// Trapezoidal area under the curve over FAR in `[0, 1]`.
pub fn auc(curve: &RocCurve) -> Result<f64> {
    let pts = &curve.points;
    if pts.len() < 2 {
        return Err(Error::InvalidCurve("fewer than two points".into()));
    }
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    if pts.iter().any(|p| !in_unit(p.far) || !in_unit(p.sdr)) {
        return Err(Error::InvalidCurve("point outside the unit square".into()));
    }
    if pts.windows(2).any(|w| w[1].far < w[0].far) {
        return Err(Error::InvalidCurve("points not sorted by FAR".into()));
    }
    Ok(pts
        .windows(2)
        .map(|w| (w[1].far - w[0].far) * (w[0].sdr + w[1].sdr) / 2.0)
        .sum())
}

/// Concatenates per-utterance scores and labels, skipping utterances whose
/// labels hold a single class. Returns the pooled frames and how many
/// utterances were skipped.
pub fn pool_utterances<'a, I>(utterances: I) -> (Vec<f64>, Vec<bool>, usize)
where
    I: IntoIterator<Item = (&'a [f64], &'a [bool])>,
{
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0;
    for (i, (s, l)) in utterances.into_iter().enumerate() {
        let pos = l.iter().filter(|&&x| x).count();
        if pos == 0 || pos == l.len() {
            log::warn!("utterance {i} has single-class labels; excluded from pooled ROC");
            skipped += 1;
            continue;
        }
        scores.extend_from_slice(s);
        labels.extend_from_slice(l);
    }
    (scores, labels, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svad::threshold_scores;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Probability a speech frame outscores a non-speech frame, ties half.
    fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            if !labels[i] {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    fn bools(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn confusion_cases() {
        let labels = bools(&[1, 1, 0, 0]);
        let c = confusion(&labels, &labels).unwrap();
        assert_eq!((c.sdr(), c.far()), (Some(1.0), Some(0.0)));
        let inv: Vec<bool> = labels.iter().map(|l| !l).collect();
        let c = confusion(&inv, &labels).unwrap();
        assert_eq!((c.sdr(), c.far()), (Some(0.0), Some(1.0)));
        let c = confusion(&bools(&[1, 0, 1, 0]), &labels).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!((c.sdr(), c.far()), (Some(0.5), Some(0.5)));

        let all_speech = confusion(&bools(&[1, 0]), &bools(&[1, 1])).unwrap();
        assert_eq!(all_speech.far(), None);
        assert!(confusion(&[true], &[true, false]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn auc_of_reference_curves() {
        let perfect = RocCurve {
            points: vec![
                RocPoint { far: 0.0, sdr: 0.0 },
                RocPoint { far: 0.0, sdr: 1.0 },
                RocPoint { far: 1.0, sdr: 1.0 },
            ],
            thresholds: vec![1.0, 0.5, 0.0],
        };
        assert_eq!(auc(&perfect).unwrap(), 1.0);
        let chance = RocCurve {
            points: vec![RocPoint { far: 0.0, sdr: 0.0 }, RocPoint { far: 1.0, sdr: 1.0 }],
            thresholds: vec![1.0, 0.0],
        };
        assert_eq!(auc(&chance).unwrap(), 0.5);

        let mut unsorted = chance.clone();
        unsorted.points.reverse();
        assert!(auc(&unsorted).is_err());
        let mut outside = chance.clone();
        outside.points[1].sdr = 1.5;
        assert!(auc(&outside).is_err());
        assert!(auc(&RocCurve::default()).is_err());
    }

    #[test]
    fn separated_and_constant_scores() {
        let labels = bools(&[1, 1, 0, 0, 1]);
        let curve = roc_sweep(&[0.9, 0.8, 0.1, 0.2, 0.7], &labels, ThresholdMode::Exhaustive).unwrap();
        assert!(curve.points.contains(&RocPoint { far: 0.0, sdr: 1.0 }));
        assert_eq!(auc(&curve).unwrap(), 1.0);

        let flat = roc_sweep(&[0.3; 5], &labels, ThresholdMode::Exhaustive).unwrap();
        assert_eq!(
            flat.points,
            vec![RocPoint { far: 0.0, sdr: 0.0 }, RocPoint { far: 1.0, sdr: 1.0 }]
        );
        assert_eq!(auc(&flat).unwrap(), 0.5);

        assert!(matches!(
            roc_sweep(&[0.1, 0.2], &[true, true], ThresholdMode::Exhaustive),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn sweep_matches_per_threshold_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..20 {
            let scores: Vec<f64> = (0..10).map(|_| rng.random_range(0..5) as f64).collect();
            let mut labels: Vec<bool> = (0..10).map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let curve = roc_sweep(&scores, &labels, ThresholdMode::Exhaustive).unwrap();
            for (p, &t) in curve.points.iter().zip(&curve.thresholds) {
                let c = confusion(&threshold_scores(&scores, t), &labels).unwrap();
                assert_eq!((p.far, p.sdr), (c.far().unwrap(), c.sdr().unwrap()));
            }
            let mut distinct = scores.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            for t in distinct {
                assert!(curve.thresholds.contains(&t));
            }
        }
    }

    #[test]
    fn auc_tracks_rank_statistic_on_large_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let n = 10_000;
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| rng.random_range(0.0..1.0) + if l { 0.3 } else { 0.0 })
            .collect();
        let a = auc(&roc_sweep(&scores, &labels, ThresholdMode::Exhaustive).unwrap()).unwrap();
        let mw = mann_whitney(&scores, &labels);
        assert!((a - mw).abs() < 1e-9);
        let q = auc(&roc_sweep(&scores, &labels, ThresholdMode::Quantiles(200)).unwrap()).unwrap();
        assert!((q - mw).abs() < 0.02, "{q} vs {mw}");
    }

    #[test]
    fn pooling_skips_degenerate_utterances() {
        let s1 = [0.1, 0.9];
        let l1 = [false, true];
        let s2 = [0.5, 0.4];
        let l2 = [true, true];
        let (s, l, skipped) = pool_utterances([(&s1[..], &l1[..]), (&s2[..], &l2[..])]);
        assert_eq!(s, vec![0.1, 0.9]);
        assert_eq!(l, vec![false, true]);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn csv_outputs() {
        let labels = bools(&[1, 0]);
        let curve = roc_sweep(&[0.9, 0.1], &labels, ThresholdMode::Exhaustive).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "threshold,far,sdr\n0.9,0,0\n0.1,0,1\n-inf,1,1\nauc,1\n");

        let mut buf = Vec::new();
        ConfusionCounts { tp: 3, fp: 1, tn: 0, fn_: 0 }.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tp,fp,tn,fn,sdr,far\n3,1,0,0,1,1\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn exhaustive_auc_equals_rank_statistic(data in prop::collection::vec((0u8..8, any::<bool>()), 2..120)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let curve = roc_sweep(&scores, &labels, ThresholdMode::Exhaustive).unwrap();
            let a = auc(&curve).unwrap();
            prop_assert!((a - mann_whitney(&scores, &labels)).abs() < 1e-9);

            // monotone transform invariance
            let warped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() - 3.0).collect();
            let b = auc(&roc_sweep(&warped, &labels, ThresholdMode::Exhaustive).unwrap()).unwrap();
            prop_assert!((a - b).abs() < 1e-12);

            // swapping the classes mirrors the area
            let swapped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let c = auc(&roc_sweep(&scores, &swapped, ThresholdMode::Exhaustive).unwrap()).unwrap();
            prop_assert!((a + c - 1.0).abs() < 1e-9);

            // both rates fall as the threshold rises
            for w in curve.points.windows(2) {
                prop_assert!(w[0].far <= w[1].far && w[0].sdr <= w[1].sdr);
            }
        }
    }
}
