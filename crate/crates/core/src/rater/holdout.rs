//! Repeated random holdout and training-proportion sweeps.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::seed::{derive_seed, rng_for};
use super::{fit, ClassifierSpec, Features, RaterError, RaterExample};

pub const DEFAULT_PROPORTIONS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const DEFAULT_GAP: f64 = 0.01;

/// Score of one train/test split. `degenerate` marks a single-class
/// training split, scored as a majority-class predictor with f1 = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatScore {
    pub accuracy: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedEvalResult {
    pub spec: ClassifierSpec,
    pub n_repeats: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub per_repeat: Vec<RepeatScore>,
}

impl RepeatedEvalResult {
    pub fn n_degenerate(&self) -> usize {
        self.per_repeat.iter().filter(|r| r.degenerate).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionStats {
    pub proportion: f64,
    pub n_sampled: usize,
    pub f1_mean: f64,
    pub f1_std: f64,
    /// First quartile, median, third quartile.
    pub f1_quartiles: [f64; 3],
    pub accuracy_mean: f64,
    pub n_degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: ClassifierSpec,
    pub n_repeats: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub proportions: Vec<f64>,
    pub stats: Vec<ProportionStats>,
    pub min_sufficient: Option<f64>,
    pub full_f1: f64,
    pub gap_threshold: f64,
}

/// Population mean and standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Quartiles by linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> [f64; 3] {
    if values.is_empty() {
        return [0.0; 3];
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    [at(0.25), at(0.5), at(0.75)]
}

fn train_size(n: usize, split_fraction: f64) -> usize {
    ((split_fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Trains on `train`, scores accuracy and positive-class F1 on `test`.
pub fn evaluate_split(
    examples: &[RaterExample],
    train: &[usize],
    test: &[usize],
    spec: &ClassifierSpec,
    fit_seed: u64,
) -> Result<RepeatScore, RaterError> {
    let train_data = Features::select(examples, train)?;
    let model = match fit(spec, &train_data, fit_seed) {
        Ok(m) => Some(m),
        Err(RaterError::DegenerateLabels) => None,
        Err(e) => return Err(e),
    };
    let Some(model) = model else {
        let majority = u8::from(train_data.n_positive() * 2 > train_data.n);
        let hits = test.iter().filter(|&&i| examples[i].y == majority).count();
        return Ok(RepeatScore {
            accuracy: hits as f64 / test.len() as f64,
            f1: 0.0,
            degenerate: true,
        });
    };

    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for &i in test {
        let (pred, _) = model.predict(&examples[i].x)?;
        let truth = examples[i].y;
        if pred == truth {
            correct += 1;
        }
        match (pred, truth) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fneg += 1,
            _ => {}
        }
    }
    let f1_den = 2 * tp + fp + fneg;
    Ok(RepeatScore {
        accuracy: correct as f64 / test.len() as f64,
        f1: if f1_den == 0 { 0.0 } else { 2.0 * tp as f64 / f1_den as f64 },
        degenerate: false,
    })
}

#[cfg(feature = "parallel")]
fn map_cells<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_cells<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

fn check_both_classes(examples: &[RaterExample]) -> Result<(), RaterError> {
    let pos = examples.iter().filter(|e| e.y == 1).count();
    if pos == 0 || pos == examples.len() {
        return Err(RaterError::DegenerateLabels);
    }
    Ok(())
}

fn check_split(split_fraction: f64) -> Result<(), RaterError> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(RaterError::InvalidArgument(format!("split fraction {split_fraction} not in (0, 1)")));
    }
    Ok(())
}

/// One random split per repeat, with repeat `r` shuffled by a stream keyed
/// on `(seed, r)`. The result does not depend on execution order.
pub fn repeated_holdout(
    examples: &[RaterExample],
    spec: &ClassifierSpec,
    n_repeats: usize,
    split_fraction: f64,
    seed: u64,
) -> Result<RepeatedEvalResult, RaterError> {
    spec.validate()?;
    check_split(split_fraction)?;
    if examples.len() < 10 {
        return Err(RaterError::TooFewExamples(format!("{} examples, need at least 10", examples.len())));
    }
    if n_repeats == 0 {
        return Err(RaterError::InvalidArgument("n_repeats must be positive".into()));
    }
    check_both_classes(examples)?;

    let n = examples.len();
    let n_train = train_size(n, split_fraction);
    let per_repeat = map_cells(n_repeats, |r| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_for(seed, &[r as u64]));
        let (train, test) = idx.split_at(n_train);
        evaluate_split(examples, train, test, spec, derive_seed(seed, &[r as u64, 1]))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let acc: Vec<f64> = per_repeat.iter().map(|s| s.accuracy).collect();
    let f1: Vec<f64> = per_repeat.iter().map(|s| s.f1).collect();
    let (accuracy_mean, accuracy_std) = mean_std(&acc);
    let (f1_mean, f1_std) = mean_std(&f1);
    Ok(RepeatedEvalResult {
        spec: spec.clone(),
        n_repeats,
        split_fraction,
        seed,
        accuracy_mean,
        accuracy_std,
        f1_mean,
        f1_std,
        per_repeat,
    })
}

/// For each proportion `p` and repeat `r`, samples `⌊p·n⌋` examples without
/// replacement and scores one train/test split of that subset.
pub fn proportion_sweep(
    examples: &[RaterExample],
    spec: &ClassifierSpec,
    proportions: &[f64],
    n_repeats: usize,
    split_fraction: f64,
    gap: f64,
    seed: u64,
) -> Result<SweepResult, RaterError> {
    spec.validate()?;
    check_split(split_fraction)?;
    if n_repeats == 0 {
        return Err(RaterError::InvalidArgument("n_repeats must be positive".into()));
    }
    let increasing = proportions.windows(2).all(|w| w[0] < w[1]);
    let in_range = proportions.iter().all(|&p| p > 0.0 && p <= 1.0);
    if proportions.is_empty() || !increasing || !in_range || proportions.last() != Some(&1.0) {
        return Err(RaterError::InvalidArgument(format!(
            "proportions must increase strictly within (0, 1] and end at 1.0, got {proportions:?}"
        )));
    }
    let n = examples.len();
    let smallest_test = proportions[0] * n as f64 * (1.0 - split_fraction);
    if smallest_test < 2.0 - 1e-9 {
        return Err(RaterError::TooFewExamples(format!(
            "proportion {} of {n} examples leaves {smallest_test:.2} test items, need 2",
            proportions[0]
        )));
    }

    let n_cells = proportions.len() * n_repeats;
    let cells = map_cells(n_cells, |cell| {
        let (pi, r) = (cell / n_repeats, cell % n_repeats);
        let p = proportions[pi];
        let m = ((p * n as f64) + 1e-9).floor() as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_for(seed, &[p.to_bits(), r as u64]));
        let subset = &idx[..m];
        let (train, test) = subset.split_at(train_size(m, split_fraction));
        evaluate_split(examples, train, test, spec, derive_seed(seed, &[p.to_bits(), r as u64, 1]))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let stats: Vec<ProportionStats> = proportions
        .iter()
        .enumerate()
        .map(|(pi, &p)| {
            let scores = &cells[pi * n_repeats..(pi + 1) * n_repeats];
            let f1: Vec<f64> = scores.iter().map(|s| s.f1).collect();
            let acc: Vec<f64> = scores.iter().map(|s| s.accuracy).collect();
            let (f1_mean, f1_std) = mean_std(&f1);
            ProportionStats {
                proportion: p,
                n_sampled: ((p * n as f64) + 1e-9).floor() as usize,
                f1_mean,
                f1_std,
                f1_quartiles: quartiles(&f1),
                accuracy_mean: mean_std(&acc).0,
                n_degenerate: scores.iter().filter(|s| s.degenerate).count(),
            }
        })
        .collect();

    let full_f1 = stats.last().map_or(0.0, |s| s.f1_mean);
    let mut result = SweepResult {
        spec: spec.clone(),
        n_repeats,
        split_fraction,
        seed,
        proportions: proportions.to_vec(),
        stats,
        min_sufficient: None,
        full_f1,
        gap_threshold: gap,
    };
    result.min_sufficient = min_sufficient_proportion(&result, gap);
    Ok(result)
}

/// Smallest proportion whose mean F1 is within `gap` (strictly) of the
/// full-data mean F1. The full proportion always qualifies for a positive
/// gap, so `None` only comes back for `gap <= 0` or a sweep without 1.0.
pub fn min_sufficient_proportion(sweep: &SweepResult, gap: f64) -> Option<f64> {
    let full = sweep.stats.iter().find(|s| s.proportion == 1.0)?.f1_mean;
    sweep
        .stats
        .iter()
        .find(|s| full - s.f1_mean < gap)
        .map(|s| s.proportion)
}

/// Parses `start:end:step`, e.g. `0.1:1.0:0.1`, into proportions rounded to
/// ten decimals so the grid hits 1.0 exactly.
pub fn parse_proportions(range: &str) -> Result<Vec<f64>, RaterError> {
    let bad = || RaterError::InvalidArgument(format!("proportion range {range:?} is not start:end:step"));
    let parts: Vec<f64> = range
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0 && start > 0.0 && end >= start) {
        return Err(bad());
    }
    let steps = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=steps)
        .map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rater::{gen_synthetic, LogRegParams};

    fn sweep_with(means: &[(f64, f64)]) -> SweepResult {
        SweepResult {
            spec: ClassifierSpec::logistic(),
            n_repeats: 1,
            split_fraction: 0.8,
            seed: 0,
            proportions: means.iter().map(|m| m.0).collect(),
            stats: means
                .iter()
                .map(|&(p, f)| ProportionStats {
                    proportion: p,
                    n_sampled: 0,
                    f1_mean: f,
                    f1_std: 0.0,
                    f1_quartiles: [f; 3],
                    accuracy_mean: f,
                    n_degenerate: 0,
                })
                .collect(),
            min_sufficient: None,
            full_f1: means.last().unwrap().1,
            gap_threshold: DEFAULT_GAP,
        }
    }

    #[test]
    fn min_sufficient_rule() {
        let flat = sweep_with(&[(0.1, 0.8), (0.5, 0.8), (1.0, 0.8)]);
        assert_eq!(min_sufficient_proportion(&flat, 0.01), Some(0.1));

        // 0.90 - 0.89 is exactly the gap, which does not count as below it
        let curve = sweep_with(&[(0.2, 0.70), (0.4, 0.80), (0.6, 0.89), (0.8, 0.895), (1.0, 0.90)]);
        assert_eq!(min_sufficient_proportion(&curve, 0.01), Some(0.8));
        assert_eq!(min_sufficient_proportion(&curve, 0.0101), Some(0.6));

        let jump = sweep_with(&[(0.5, 0.5), (0.9, 0.6), (1.0, 0.9)]);
        assert_eq!(min_sufficient_proportion(&jump, 0.01), Some(1.0));
        assert_eq!(min_sufficient_proportion(&jump, 0.0), None);
    }

    #[test]
    fn quartile_interpolation() {
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0, 5.0]), [2.0, 3.0, 4.0]);
        assert_eq!(quartiles(&[1.0, 2.0]), [1.25, 1.5, 1.75]);
    }

    #[test]
    fn proportion_grid() {
        let p = parse_proportions("0.1:1.0:0.1").unwrap();
        assert_eq!(p, DEFAULT_PROPORTIONS.to_vec());
        assert_eq!(parse_proportions("0.25:1:0.25").unwrap(), vec![0.25, 0.5, 0.75, 1.0]);
        assert!(parse_proportions("0.1:1.0").is_err());
    }

    /// Two well-separated groups on one axis; the label is the sign of x0
    /// except for the far-left point, which is labelled 1.
    fn ten() -> Vec<RaterExample> {
        let xs = [-10.0, -9.0, -8.0, -7.0, -6.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let ys = [1, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        xs.iter()
            .zip(ys)
            .enumerate()
            .map(|(i, (&x, y))| RaterExample {
                item_id: format!("e{i}"),
                x: vec![x],
                y,
            })
            .collect()
    }

    #[test]
    fn single_repeat_matches_hand_computation() {
        let ex = ten();
        let seed = 4;
        let mut idx: Vec<usize> = (0..10).collect();
        idx.shuffle(&mut rng_for(seed, &[0]));
        let test: Vec<usize> = idx[8..].to_vec();
        let r = repeated_holdout(&ex, &ClassifierSpec::logistic(), 1, 0.8, seed).unwrap();
        // any sensible fit puts the boundary inside the (-6, 6) gap, so
        // it predicts sign(x0) and misses only the far-left point
        let expected: Vec<u8> = test.iter().map(|&i| u8::from(ex[i].x[0] > 0.0)).collect();
        let truth: Vec<u8> = test.iter().map(|&i| ex[i].y).collect();
        let correct = expected.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let tp = expected.iter().zip(&truth).filter(|(a, b)| **a == 1 && **b == 1).count();
        let fp = expected.iter().zip(&truth).filter(|(a, b)| **a == 1 && **b == 0).count();
        let fneg = expected.iter().zip(&truth).filter(|(a, b)| **a == 0 && **b == 1).count();
        let f1 = if tp + fp + fneg == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64 };
        assert_eq!(r.per_repeat.len(), 1);
        assert_eq!(r.per_repeat[0].accuracy, correct as f64 / 2.0);
        assert_eq!(r.per_repeat[0].f1, f1);
        assert_eq!(r.accuracy_std, 0.0);
    }

    #[test]
    fn degenerate_training_split_is_flagged() {
        // nine negatives and one positive: some 8-item training splits
        // have no positive at all
        let mut ex = ten();
        for e in &mut ex {
            e.y = 0;
        }
        ex[9].y = 1;
        let r = repeated_holdout(&ex, &ClassifierSpec::logistic(), 30, 0.8, 1).unwrap();
        let flagged: Vec<_> = r.per_repeat.iter().filter(|s| s.degenerate).collect();
        assert!(!flagged.is_empty());
        assert!(flagged.iter().all(|s| s.f1 == 0.0));
        // majority class is 0, so accuracy is the share of negatives in the test split
        assert!(flagged.iter().all(|s| s.accuracy == 0.5));
        assert_eq!(r.n_degenerate(), flagged.len());
    }

    #[test]
    fn stats_recompute_from_repeats() {
        let ex = gen_synthetic(200, 4, 3.0, 0.1, 2).unwrap();
        let r = repeated_holdout(&ex, &ClassifierSpec::logistic(), 20, 0.8, 9).unwrap();
        let acc: Vec<f64> = r.per_repeat.iter().map(|s| s.accuracy).collect();
        let (m, s) = mean_std(&acc);
        assert_eq!((m, s), (r.accuracy_mean, r.accuracy_std));
        assert_eq!(r, repeated_holdout(&ex, &ClassifierSpec::logistic(), 20, 0.8, 9).unwrap());
    }

    #[test]
    fn separable_data_is_predicted_perfectly_at_every_proportion() {
        let ex = gen_synthetic(400, 2, 14.0, 0.0, 8).unwrap();
        let spec = ClassifierSpec::LogisticRegression(LogRegParams::default());
        let s = proportion_sweep(&ex, &spec, &DEFAULT_PROPORTIONS, 10, 0.8, DEFAULT_GAP, 3).unwrap();
        for st in &s.stats {
            assert_eq!(st.f1_mean, 1.0, "proportion {}", st.proportion);
        }
        assert_eq!(s.min_sufficient, Some(0.1));
        assert_eq!(s, proportion_sweep(&ex, &spec, &DEFAULT_PROPORTIONS, 10, 0.8, DEFAULT_GAP, 3).unwrap());
    }

    #[test]
    fn sweep_preconditions() {
        let ex = gen_synthetic(40, 2, 4.0, 0.0, 1).unwrap();
        let spec = ClassifierSpec::logistic();
        assert!(matches!(
            proportion_sweep(&ex, &spec, &DEFAULT_PROPORTIONS, 2, 0.8, 0.01, 0),
            Err(RaterError::TooFewExamples(_))
        ));
        assert!(matches!(
            proportion_sweep(&ex, &spec, &[0.5, 0.9], 2, 0.8, 0.01, 0),
            Err(RaterError::InvalidArgument(_))
        ));
        assert!(matches!(
            repeated_holdout(&ex[..9], &spec, 2, 0.8, 0),
            Err(RaterError::TooFewExamples(_))
        ));
    }
}
