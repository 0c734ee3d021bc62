//! Monte Carlo summaries and goodness-of-fit statistics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn z(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if self.se > 0.0 {
            diff / self.se
        } else if diff.abs() <= 1e-12 * target.abs().max(1.0) {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    }

    /// `|mean - target| <= k se`, with a roundoff allowance for zero-variance samples.
    pub fn within(&self, target: f64, k: f64) -> bool {
        self.z(target).abs() <= k
    }
}

pub fn mean_se(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate { mean: f64::NAN, se: f64::NAN, count: 0 };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    MeanEstimate { mean, se, count: n }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMean {
    pub re: MeanEstimate,
    pub im: MeanEstimate,
}

impl ComplexMean {
    pub fn mean(&self) -> Complex64 {
        Complex64::new(self.re.mean, self.im.mean)
    }

    /// Componentwise z-scores against `target`.
    pub fn z(&self, target: Complex64) -> (f64, f64) {
        (self.re.z(target.re), self.im.z(target.im))
    }

    pub fn within(&self, target: Complex64, k: f64) -> bool {
        self.re.within(target.re, k) && self.im.within(target.im, k)
    }
}

pub fn complex_mean(zs: &[Complex64]) -> ComplexMean {
    let re: Vec<f64> = zs.iter().map(|z| z.re).collect();
    let im: Vec<f64> = zs.iter().map(|z| z.im).collect();
    ComplexMean { re: mean_se(&re), im: mean_se(&im) }
}

/// Difference-of-means z-score for two independent samples.
pub fn two_sample_z(a: &MeanEstimate, b: &MeanEstimate) -> f64 {
    let se = (a.se * a.se + b.se * b.se).sqrt();
    let diff = a.mean - b.mean;
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Exact one-sample Kolmogorov–Smirnov distance between the empirical law
/// of `xs` and a continuous CDF.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 1.0)).collect();
    ks_statistic_weighted(&pts, cdf)
}

/// Same, for atoms `(x, weight)`. Tied points are grouped so the empirical
/// CDF jumps once per distinct value; the supremum is attained at a jump,
/// either just before or at it.
pub fn ks_statistic_weighted(atoms: &[(f64, f64)], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = atoms.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pts.iter().map(|p| p.1).sum();
    if pts.is_empty() || !(total > 0.0) {
        return f64::NAN;
    }
    let mut d: f64 = 0.0;
    let mut acc = 0.0;
    let mut i = 0;
    while i < pts.len() {
        let x = pts[i].0;
        let before = acc / total;
        while i < pts.len() && pts[i].0 == x {
            acc += pts[i].1;
            i += 1;
        }
        let after = (acc / total).min(1.0);
        let f = cdf(x);
        d = d.max((f - before).abs()).max((after - f).abs());
    }
    d
}

/// `P(K > x)` for the Kolmogorov limit law of `sqrt(n) D_n`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a one-sample KS distance `d` at sample size `n`,
/// with the usual small-sample correction of the argument.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let rn = (n as f64).sqrt();
    kolmogorov_sf(d * (rn + 0.12 + 0.11 / rn))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bins left after merging sparse ones.
    pub bins: usize,
}

fn chi_square_p(statistic: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Ok(1.0);
    }
    let law = ChiSquared::new(dof as f64).map_err(|e| Error::param(e.to_string()))?;
    Ok(law.sf(statistic))
}

/// Groups consecutive bins until each group reaches `min_size` (measured by
/// `size`); a short tail group is folded into the previous one.
fn merge_groups(len: usize, min_size: f64, size: impl Fn(usize) -> f64) -> Vec<std::ops::Range<usize>> {
    let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for i in 0..len {
        acc += size(i);
        if acc >= min_size {
            groups.push(start..i + 1);
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < len {
        match groups.last_mut() {
            Some(last) => last.end = len,
            None => groups.push(start..len),
        }
    }
    groups
}

/// Pearson goodness of fit of observed `counts` to cell probabilities
/// `probs`. Neighbouring cells are merged until each expects at least 5.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<ChiSquareTest> {
    if counts.len() != probs.len() || counts.is_empty() {
        return Err(Error::param("counts and probabilities must have the same non-zero length"));
    }
    let psum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(p >= 0.0)) || (psum - 1.0).abs() > 1e-9 {
        return Err(Error::param("cell probabilities must be >= 0 and sum to 1"));
    }
    let n: u64 = counts.iter().sum();
    let total = n as f64;
    let groups = merge_groups(counts.len(), 5.0, |i| probs[i] * total);
    let mut stat = 0.0;
    for g in &groups {
        let obs: f64 = counts[g.clone()].iter().map(|&c| c as f64).sum();
        let exp: f64 = probs[g.clone()].iter().sum::<f64>() * total;
        if exp > 0.0 {
            stat += (obs - exp) * (obs - exp) / exp;
        } else if obs > 0.0 {
            stat = f64::INFINITY;
        }
    }
    let dof = groups.len().saturating_sub(1);
    Ok(ChiSquareTest { statistic: stat, dof, p_value: chi_square_p(stat, dof)?, bins: groups.len() })
}

/// Two-sample chi-square test that two histograms come from the same law.
/// Neighbouring bins are merged until each holds at least 10 pooled counts.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquareTest> {
    let len = a.len().max(b.len());
    let get = |h: &[u64], i: usize| h.get(i).copied().unwrap_or(0) as f64;
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    if na == 0.0 || nb == 0.0 {
        return Err(Error::param("both histograms need at least one count"));
    }
    let groups = merge_groups(len, 10.0, |i| get(a, i) + get(b, i));
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let mut stat = 0.0;
    for g in &groups {
        let x: f64 = g.clone().map(|i| get(a, i)).sum();
        let y: f64 = g.clone().map(|i| get(b, i)).sum();
        if x + y > 0.0 {
            stat += (ka * x - kb * y).powi(2) / (x + y);
        }
    }
    let dof = groups.len().saturating_sub(1);
    Ok(ChiSquareTest { statistic: stat, dof, p_value: chi_square_p(stat, dof)?, bins: groups.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::Normal;

    #[test]
    fn mean_and_se() {
        let m = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let c = mean_se(&[2.0; 10]);
        assert!(c.within(2.0, 4.0));
        assert!(!c.within(2.1, 4.0));
    }

    #[test]
    fn ks_matches_textbook_formula_on_small_samples() {
        // D = max_i max(i/n - F(x_(i)), F(x_(i)) - (i-1)/n) for distinct points.
        let cdf = |x: f64| x.clamp(0.0, 1.0);
        for xs in [[0.1, 0.5, 0.2, 0.9, 0.35], [0.05, 0.06, 0.07, 0.08, 0.95], [0.9, 0.8, 0.7, 0.6, 0.5]] {
            let mut sorted = xs.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len() as f64;
            let expect = sorted
                .iter()
                .enumerate()
                .map(|(i, &x)| ((i + 1) as f64 / n - cdf(x)).max(cdf(x) - i as f64 / n))
                .fold(0.0, f64::max);
            assert!((ks_statistic(&xs, cdf) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn ks_handles_ties_and_weights() {
        let cdf = |x: f64| x.clamp(0.0, 1.0);
        // Two atoms at 0.5: the empirical CDF jumps from 0 to 1 there.
        assert!((ks_statistic(&[0.5, 0.5], cdf) - 0.5).abs() < 1e-15);
        let w = ks_statistic_weighted(&[(0.25, 3.0), (0.75, 1.0)], cdf);
        let unw = ks_statistic(&[0.25, 0.25, 0.25, 0.75], cdf);
        assert!((w - unw).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&w));
    }

    #[test]
    fn normal_sample_ks_is_small() {
        let law = Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let d = ks_statistic(&xs, |x| law.cdf(x));
        assert!(d <= 0.025, "{d}");
        assert!(ks_p_value(d, xs.len()) > 1e-3);
    }

    #[test]
    fn kolmogorov_quantiles() {
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn chi_square_examples() {
        let t = chi_square_gof(&[25, 25, 25, 25], &[0.25; 4]).unwrap();
        assert_eq!((t.statistic, t.dof), (0.0, 3));
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let bad = chi_square_gof(&[100, 0, 0, 0], &[0.25; 4]).unwrap();
        assert!(bad.p_value < 1e-10);
        assert!(chi_square_gof(&[1, 2], &[0.5, 0.4]).is_err());
        let same = chi_square_two_sample(&[10, 20, 30, 0, 1], &[10, 20, 30]).unwrap();
        assert!(same.p_value > 0.9);
        let diff = chi_square_two_sample(&[100, 0], &[0, 100]).unwrap();
        assert!(diff.p_value < 1e-10);
    }

    #[test]
    fn merging_keeps_every_bin() {
        let groups = merge_groups(7, 5.0, |i| [1.0, 1.0, 10.0, 0.0, 6.0, 1.0, 1.0][i]);
        assert_eq!(groups, vec![0..3, 3..7]);
    }
}
