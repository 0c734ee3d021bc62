//! Oracles, Monte Carlo statistics and normality diagnostics.

pub mod normality;
pub mod oracle;
pub mod report;
pub mod stats;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::brw::{LabelledTree, NodeSet};
use crate::error::{Error, Result};
use crate::measures::{dot, AtomicMeasure, ConvolvedMeasure, RescaleParams};
use crate::urns::{DrwUrn, SrwUrn};

pub use normality::{normality_report, normality_report_pooled, Averaging, NormalityReport, NormalityRow, Scaling};
pub use oracle::{MartingaleSample, MomentOracle, OracleMode};
pub use report::ReportRow;

/// Anything with a weighted characteristic sum `sum w exp(i s . x)`.
pub trait CharacteristicSum {
    fn char_sum(&self, s: &[f64]) -> Result<Complex64>;
}

impl CharacteristicSum for AtomicMeasure {
    fn char_sum(&self, s: &[f64]) -> Result<Complex64> {
        if s.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: s.len() });
        }
        Ok(self.fourier(s))
    }
}

impl CharacteristicSum for ConvolvedMeasure {
    fn char_sum(&self, s: &[f64]) -> Result<Complex64> {
        self.fourier(s)
    }
}

/// All nodes of the tree, each with its weight.
impl CharacteristicSum for LabelledTree {
    fn char_sum(&self, s: &[f64]) -> Result<Complex64> {
        LabelledTree::char_sum(self, NodeSet::All, s)
    }
}

impl CharacteristicSum for SrwUrn {
    fn char_sum(&self, s: &[f64]) -> Result<Complex64> {
        self.composition().char_sum(s)
    }
}

impl CharacteristicSum for DrwUrn {
    fn char_sum(&self, s: &[f64]) -> Result<Complex64> {
        self.composition().fourier(s)
    }
}

/// `F(s)`; at `s = 0` this is the total weight.
pub fn empirical_cf(x: &impl CharacteristicSum, s: &[f64]) -> Result<Complex64> {
    x.char_sum(s)
}

/// `exp(-i s.b/a) * fourier(normalize(m), s/a)`, the CF of the law of `(X - b)/a`.
pub fn rescaled_cf(m: &AtomicMeasure, a: f64, b: &[f64], s: &[f64]) -> Result<Complex64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param(format!("scale must be > 0, got {a}")));
    }
    if b.len() != m.dim() || s.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: b.len().min(s.len()) });
    }
    let scaled: Vec<f64> = s.iter().map(|x| x / a).collect();
    let mass = m.total_mass()?;
    Ok(Complex64::cis(-dot(s, b) / a) * m.fourier(&scaled) / mass)
}

/// Same quantity through an explicit pushforward, for cross-checking.
pub fn rescaled_cf_direct(m: &AtomicMeasure, a: f64, b: &[f64], s: &[f64]) -> Result<Complex64> {
    let p = RescaleParams::new(a, b.to_vec())?;
    Ok(m.normalize()?.rescale(&p)?.fourier(s))
}

/// Checks that a row-major `d x d` matrix is symmetric positive semidefinite.
pub fn check_psd(sigma: &[f64], d: usize) -> Result<()> {
    if sigma.len() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, got: sigma.len() });
    }
    let m = DMatrix::from_row_slice(d, d, sigma);
    let scale = sigma.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    if (&m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::param("covariance must be symmetric"));
    }
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
        return Err(Error::param("covariance must be positive semidefinite"));
    }
    Ok(())
}

/// `exp(-s^T sigma s / 2)`.
pub fn gaussian_limit_cf(s: &[f64], sigma: &[f64]) -> Result<f64> {
    let d = s.len();
    check_psd(sigma, d)?;
    Ok((-0.5 * quad(sigma, s)).exp())
}

pub(crate) fn quad(m: &[f64], s: &[f64]) -> f64 {
    let d = s.len();
    (0..d).map(|i| s[i] * (0..d).map(|j| m[i * d + j] * s[j]).sum::<f64>()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupPoint {
    pub time: f64,
    /// `max |M(s)|` over the grid.
    pub sup: f64,
}

/// Sup of `|M(s)|` over `s_grid` along a sequence of `(time, tree)` snapshots.
/// Binary oracles read the external nodes, the others all nodes.
pub fn sup_m_track(series: &[(f64, &LabelledTree)], s_grid: &[Vec<f64>], oracle: &MomentOracle) -> Result<Vec<SupPoint>> {
    for s in s_grid {
        if !oracle.in_domain(s)? {
            return Err(Error::Domain(format!("grid point {s:?} lies outside the domain")));
        }
    }
    let which = match oracle.mode() {
        OracleMode::BinaryExternal => NodeSet::External,
        _ => NodeSet::All,
    };
    series
        .iter()
        .map(|&(time, lt)| {
            let mut sup: f64 = 0.0;
            for s in s_grid {
                let f = lt.char_sum(which, s)?;
                sup = sup.max(oracle.martingale_value(f, time, s)?.value.norm());
            }
            Ok(SupPoint { time, sup })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brw::assign_labels;
    use crate::offsets::OffsetDistribution;
    use crate::trees::{grow_wrrt, grow_yule, Until};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn empirical_cf_examples() {
        let unit = OffsetDistribution::point(1.0).unwrap();
        let root = assign_labels(grow_wrrt(0, 2.0, &mut rng(1)).unwrap(), &unit, &mut rng(1));
        for s in [0.0, 0.4, 3.0] {
            assert_eq!(empirical_cf(&root, &[s]).unwrap(), Complex64::new(2.0, 0.0));
        }
        let lt = assign_labels(grow_wrrt(500, 1.0, &mut rng(2)).unwrap(), &unit, &mut rng(3));
        assert_eq!(empirical_cf(&lt, &[0.0]).unwrap(), Complex64::new(501.0, 0.0));
        // Depth histogram DFT.
        let depths = lt.tree().depths();
        let mut hist = vec![0.0; *depths.iter().max().unwrap() as usize + 1];
        for d in depths {
            hist[d as usize] += 1.0;
        }
        for s in [0.1, 0.7, -1.3] {
            let dft: Complex64 = hist.iter().enumerate().map(|(k, &h)| Complex64::cis(s * k as f64) * h).sum();
            let f = empirical_cf(&lt, &[s]).unwrap();
            assert!((f - dft).norm() < 1e-9);
            assert!((empirical_cf(&lt, &[-s]).unwrap() - f.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn rescaled_cf_examples() {
        let m = AtomicMeasure::from_atoms(1, [([0.0], 1.0), ([2.0], 3.0)]).unwrap();
        let s = [0.8];
        assert!((rescaled_cf(&m, 1.0, &[0.0], &s).unwrap() - m.normalize().unwrap().fourier(&s)).norm() < 1e-15);
        let point = AtomicMeasure::dirac(5.0, 2.0).unwrap();
        for s in [0.1, 1.0, 7.0] {
            assert!((rescaled_cf(&point, 2.5, &[5.0], &[s]).unwrap() - 1.0).norm() < 1e-12);
        }
        assert!(rescaled_cf(&m, 0.0, &[0.0], &s).is_err());
    }

    #[test]
    fn gaussian_limit_examples() {
        assert_eq!(gaussian_limit_cf(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!((gaussian_limit_cf(&[1.0], &[1.0]).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((gaussian_limit_cf(&[1.0], &[2.0]).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gaussian_limit_cf(&[1.0, 0.0], &[1.0, 2.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn sup_track_starts_at_one() {
        let eta = OffsetDistribution::normal(0.0, 1.0).unwrap();
        let oracle = MomentOracle::yule(eta.clone(), 1.0).unwrap();
        let (tree, _) = grow_yule(Until::Time(2.0), 1.0, &mut rng(4)).unwrap();
        let lt = assign_labels(tree.clone(), &eta, &mut rng(5));
        let start = assign_labels(tree.snapshot(0.0), &eta, &mut rng(5));
        let grid: Vec<Vec<f64>> = [-0.3, 0.0, 0.3].iter().map(|&s| vec![s]).collect();
        let track = sup_m_track(&[(0.0, &start), (2.0, &lt)], &grid, &oracle).unwrap();
        assert_eq!(track[0].sup, 1.0);
        let m0 = (lt.char_sum(NodeSet::All, &[0.0]).unwrap() / oracle.expected_f(2.0, &[0.0]).unwrap()).norm();
        assert!(track[1].sup >= m0);
        assert!(sup_m_track(&[(0.0, &start)], &[vec![5.0]], &oracle).is_err());
    }

    proptest! {
        #[test]
        fn rescale_commutes_with_fourier(
            atoms in prop::collection::vec((-10.0f64..10.0, 0.1f64..5.0), 1..20),
            a in 0.1f64..5.0,
            b in -5.0f64..5.0,
            s in -3.0f64..3.0,
        ) {
            let m = AtomicMeasure::from_atoms(1, atoms.iter().map(|&(x, w)| ([x], w))).unwrap();
            let lhs = rescaled_cf(&m, a, &[b], &[s]).unwrap();
            let rhs = rescaled_cf_direct(&m, a, &[b], &[s]).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
