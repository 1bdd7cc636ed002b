use super::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::nn::Network;

/// Mean binary cross-entropy over classes.
pub fn bce_loss(probabilities: &[f64], labels: &[f64]) -> Result<f64> {
    if probabilities.len() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!(
            "bce_loss: {} probabilities vs {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
        .sum();
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Counts {
    /// Ratios with empty denominators resolve to 1 when the class is
    /// entirely absent (nothing to find, nothing predicted) and 0 otherwise.
    pub fn scores(&self) -> Scores {
        let ratio = |num: usize, den: usize| {
            if den > 0 {
                num as f64 / den as f64
            } else if self.tp + self.fp + self.fn_ == 0 {
                1.0
            } else {
                0.0
            }
        };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_);
        Scores { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierMetrics {
    pub per_class: Vec<Scores>,
    pub counts: Vec<Counts>,
    pub micro: Scores,
    pub macro_: Scores,
}

pub fn metrics_from_predictions(predictions: &[Vec<bool>], labels: &[Vec<bool>]) -> Result<ClassifierMetrics> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} label rows",
            predictions.len(),
            labels.len()
        )));
    }
    let k = labels[0].len();
    let mut counts = vec![Counts::default(); k];
    for (p, y) in predictions.iter().zip(labels) {
        if p.len() != k || y.len() != k {
            return Err(Error::Shape("ragged prediction or label rows".into()));
        }
        for c in 0..k {
            match (p[c], y[c]) {
                (true, true) => counts[c].tp += 1,
                (true, false) => counts[c].fp += 1,
                (false, true) => counts[c].fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let per_class: Vec<Scores> = counts.iter().map(Counts::scores).collect();
    let total = counts.iter().fold(Counts::default(), |a, c| Counts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
    });
    let mean = |f: fn(&Scores) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(ClassifierMetrics {
        macro_: Scores {
            precision: mean(|s| s.precision),
            recall: mean(|s| s.recall),
            f1: mean(|s| s.f1),
        },
        micro: total.scores(),
        per_class,
        counts,
    })
}

pub fn predict(net: &Network, sample: &SampleRecord, threshold: f64) -> Result<Vec<bool>> {
    Ok(net
        .probabilities(&sample.image)?
        .data()
        .iter()
        .map(|&p| p > threshold)
        .collect())
}

/// Multi-label precision/recall/F1 at a fixed decision threshold.
pub fn evaluate_classifier(net: &Network, test_set: &[SampleRecord], threshold: f64) -> Result<ClassifierMetrics> {
    if test_set.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }
    let predictions = test_set
        .iter()
        .map(|s| predict(net, s, threshold))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Vec<bool>> = test_set.iter().map(|s| s.labels.clone()).collect();
    metrics_from_predictions(&predictions, &labels)
}

/// `P(label j | label i)` for every pair; `None` where class `i` never occurs.
pub fn label_cooccurrence(labels: &[Vec<bool>]) -> Result<Vec<Vec<Option<f64>>>> {
    let Some(first) = labels.first() else {
        return Err(Error::Config("empty dataset".into()));
    };
    let k = first.len();
    let mut pair = vec![vec![0usize; k]; k];
    for row in labels {
        if row.len() != k {
            return Err(Error::Shape("ragged label rows".into()));
        }
        for i in (0..k).filter(|&i| row[i]) {
            for j in (0..k).filter(|&j| row[j]) {
                pair[i][j] += 1;
            }
        }
    }
    Ok((0..k)
        .map(|i| {
            (0..k)
                .map(|j| (pair[i][i] > 0).then(|| pair[i][j] as f64 / pair[i][i] as f64))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn bce_closed_forms() {
        let y = [1.0, 0.0, 1.0];
        let p = [1.0 - 1e-12, 1e-12, 1.0 - 1e-12];
        assert!(bce_loss(&p, &y).unwrap() < 1e-11);
        let half = bce_loss(&[0.5; 4], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(&[0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn bce_matches_scalar_loop_and_logit_form() {
        let mut rng = rng_from(1, &[]);
        for _ in 0..20 {
            let z: Vec<f64> = (0..6).map(|_| rng.random_range(-4.0..4.0)).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.random_range(0..2) as f64).collect();
            let p: Vec<f64> = z.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
            let mut naive = 0.0;
            for i in 0..6 {
                naive += if y[i] == 1.0 { -p[i].ln() } else { -(1.0 - p[i]).ln() };
            }
            naive /= 6.0;
            assert!((bce_loss(&p, &y).unwrap() - naive).abs() < 1e-12);
            assert!((crate::nn::bce_with_logits(&z, &y) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_and_degenerate_classifiers() {
        let labels = vec![vec![true, false], vec![false, false], vec![true, false]];
        let m = metrics_from_predictions(&labels, &labels).unwrap();
        for s in m.per_class.iter().chain([&m.micro, &m.macro_]) {
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
        let none = vec![vec![false, false]; 3];
        let m = metrics_from_predictions(&none, &labels).unwrap();
        assert_eq!(m.micro.recall, 0.0);
        assert_eq!(m.per_class[0].recall, 0.0);
    }

    #[test]
    fn metrics_match_hand_counts() {
        let mut rng = rng_from(9, &[]);
        let rows = |rng: &mut crate::rng::Rng| -> Vec<Vec<bool>> {
            (0..20).map(|_| (0..4).map(|_| rng.random_bool(0.5)).collect()).collect()
        };
        let (pred, lab) = (rows(&mut rng), rows(&mut rng));
        let m = metrics_from_predictions(&pred, &lab).unwrap();
        let (mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0);
        let mut f1_sum = 0.0;
        for c in 0..4 {
            let mut tp = 0.0;
            let mut fp = 0.0;
            let mut fneg = 0.0;
            for i in 0..20 {
                if pred[i][c] && lab[i][c] {
                    tp += 1.0;
                }
                if pred[i][c] && !lab[i][c] {
                    fp += 1.0;
                }
                if !pred[i][c] && lab[i][c] {
                    fneg += 1.0;
                }
            }
            let (p, r) = (tp / (tp + fp), tp / (tp + fneg));
            assert!((m.per_class[c].precision - p).abs() < 1e-15);
            assert!((m.per_class[c].recall - r).abs() < 1e-15);
            f1_sum += 2.0 * p * r / (p + r);
            tp_all += tp;
            fp_all += fp;
            fn_all += fneg;
        }
        let (p, r) = (tp_all / (tp_all + fp_all), tp_all / (tp_all + fn_all));
        assert!((m.micro.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
        assert!((m.macro_.f1 - f1_sum / 4.0).abs() < 1e-12);
    }

    #[test]
    fn cooccurrence_cases() {
        let labels = vec![
            vec![true, true, false, false],
            vec![true, true, false, false],
            vec![false, false, true, false],
        ];
        let m = label_cooccurrence(&labels).unwrap();
        assert_eq!(m[0][1], Some(1.0));
        assert_eq!(m[1][0], Some(1.0));
        assert_eq!(m[0][2], Some(0.0));
        assert_eq!(m[2][2], Some(1.0));
        assert!(m[3].iter().all(Option::is_none));
        assert!(label_cooccurrence(&[]).is_err());
    }

    #[test]
    fn cooccurrence_matches_pairwise_count() {
        let mut rng = rng_from(4, &[]);
        let labels: Vec<Vec<bool>> = (0..30).map(|_| (0..5).map(|_| rng.random_bool(0.4)).collect()).collect();
        let m = label_cooccurrence(&labels).unwrap();
        for i in 0..5 {
            let with_i: Vec<&Vec<bool>> = labels.iter().filter(|r| r[i]).collect();
            for j in 0..5 {
                let both = with_i.iter().filter(|r| r[j]).count();
                let expected = (!with_i.is_empty()).then(|| both as f64 / with_i.len() as f64);
                assert_eq!(m[i][j], expected);
                if let Some(v) = m[i][j] {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
