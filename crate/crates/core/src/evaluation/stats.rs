//! Correlation and accuracy statistics between objective scores and MOS.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Statistics(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Statistics(format!("need at least 2 samples, got {}", a.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("statistics input"));
    }
    Ok(())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased (n - 1) sample variance.
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Pearson linear correlation coefficient.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Statistics("zero variance".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank-order correlation: Pearson on fractional ranks.
pub fn srocc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    plcc(&fractional_ranks(a), &fractional_ranks(b))
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sse / a.len() as f64).sqrt())
}

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

/// Left-tailed variance-ratio test. Returns `true` (H = 1) when the
/// residuals in `a` have significantly smaller variance than those in `b`.
pub fn f_test(residuals_a: &[f64], residuals_b: &[f64], significance: f64) -> Result<bool> {
    if residuals_a.len() < 2 || residuals_b.len() < 2 {
        return Err(Error::Statistics("F-test needs at least 2 residuals per model".into()));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "significance must lie in (0, 1), got {significance}"
        )));
    }
    if residuals_a.iter().chain(residuals_b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("F-test residuals"));
    }
    let (va, vb) = (sample_variance(residuals_a), sample_variance(residuals_b));
    if vb == 0.0 {
        return Err(Error::Statistics("reference residuals have zero variance".into()));
    }
    let dist = FisherSnedecor::new((residuals_a.len() - 1) as f64, (residuals_b.len() - 1) as f64)
        .map_err(|e| Error::Statistics(e.to_string()))?;
    Ok(va / vb < dist.inverse_cdf(significance))
}
