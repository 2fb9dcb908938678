//! Agreement statistics between predicted and real Dice, on the percent scale.

use alloc::vec::Vec;

use crate::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid("metric inputs differ in length"));
    }
    if a.len() < 2 {
        return Err(Error::invalid("metrics need at least two cases"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("metric inputs must be finite"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean absolute error ×100.
pub fn mae(predicted: &[f64], real: &[f64]) -> Result<f64> {
    check_pair(predicted, real)?;
    Ok(100.0 * predicted.iter().zip(real).map(|(p, r)| (p - r).abs()).sum::<f64>() / real.len() as f64)
}

/// Population standard deviation of `predicted - real`, ×100.
pub fn std_residual(predicted: &[f64], real: &[f64]) -> Result<f64> {
    check_pair(predicted, real)?;
    let residuals: Vec<f64> = predicted.iter().zip(real).map(|(p, r)| p - r).collect();
    let m = mean(&residuals);
    let var = residuals.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / residuals.len() as f64;
    Ok(100.0 * libm::sqrt(var))
}

/// Pearson correlation ×100. Constant input is [`Error::UndefinedCorrelation`].
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((100.0 * sab / libm::sqrt(saa * sbb)).clamp(-100.0, 100.0))
}

/// 1-based ranks, ties receiving their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = alloc::vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation ×100: Pearson on average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementMetrics {
    pub mae: f64,
    pub std_residual: f64,
    pub pearson: f64,
    pub spearman: f64,
}

/// All four statistics of `predicted` against `real`.
pub fn agreement(predicted: &[f64], real: &[f64]) -> Result<AgreementMetrics> {
    Ok(AgreementMetrics {
        mae: mae(predicted, real)?,
        std_residual: std_residual(predicted, real)?,
        pearson: pearson(predicted, real)?,
        spearman: spearman(predicted, real)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 80.0).abs() < 1e-9);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 100.0).abs() < 1e-9);
        assert!((mae(&[0.5, 0.7], &[0.6, 0.9]).unwrap() - 15.0).abs() < 1e-9);
        assert!((std_residual(&[0.5, 0.7], &[0.6, 0.9]).unwrap() - 5.0).abs() < 1e-9);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]).unwrap_err(), Error::UndefinedCorrelation);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]).unwrap_err(), Error::UndefinedCorrelation);
        assert!(mae(&[1.0], &[1.0]).is_err());
        assert!(mae(&[1.0, 2.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }
}
