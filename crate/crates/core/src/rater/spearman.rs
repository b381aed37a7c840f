use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::RaterError;

/// Largest sample size for which the p-value is computed by full
/// enumeration of rank permutations.
pub const EXACT_MAX_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    ExactPermutation,
    TApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: CorrelationMethod,
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn centered(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// Spearman's rho with a two-sided p-value: exact over all `n!` rank
/// permutations for `n <= 10`, Student-t approximation otherwise.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<CorrelationResult, RaterError> {
    if a.len() != b.len() {
        return Err(RaterError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 3 {
        return Err(RaterError::TooFewExamples(format!("{n} pairs, need at least 3")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(RaterError::InvalidArgument("non-finite input".into()));
    }
    let ra = centered(&average_ranks(a));
    let rb = centered(&average_ranks(b));
    let ssa: f64 = ra.iter().map(|v| v * v).sum();
    let ssb: f64 = rb.iter().map(|v| v * v).sum();
    if ssa == 0.0 || ssb == 0.0 {
        return Err(RaterError::ConstantInput);
    }
    let norm = (ssa * ssb).sqrt();
    let rho = (ra.iter().zip(&rb).map(|(x, y)| x * y).sum::<f64>() / norm).clamp(-1.0, 1.0);

    if n <= EXACT_MAX_N {
        let p_value = exact_p(&ra, &rb, norm, rho);
        Ok(CorrelationResult {
            rho,
            p_value,
            n,
            method: CorrelationMethod::ExactPermutation,
        })
    } else {
        let df = (n - 2) as f64;
        let p_value = if rho.abs() >= 1.0 {
            0.0
        } else {
            let t = rho * (df / (1.0 - rho * rho)).sqrt();
            let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
            (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
        };
        Ok(CorrelationResult {
            rho,
            p_value,
            n,
            method: CorrelationMethod::TApproximation,
        })
    }
}

/// Share of permutations of `rb` whose |rho| reaches the observed |rho|.
fn exact_p(ra: &[f64], rb: &[f64], norm: f64, rho: f64) -> f64 {
    let n = rb.len();
    let target = rho.abs() - 1e-12;
    let mut perm = rb.to_vec();
    let mut count = 0u64;
    let mut total = 0u64;
    let mut visit = |p: &[f64]| {
        let r = ra.iter().zip(p).map(|(x, y)| x * y).sum::<f64>() / norm;
        total += 1;
        if r.abs() >= target {
            count += 1;
        }
    };
    // Heap's algorithm, iterative form
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    count as f64 / total as f64
}
