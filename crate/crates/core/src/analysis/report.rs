//! Rows of oracle-comparison reports.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::stats::ComplexMean;

/// One Monte Carlo estimate against its oracle value. `se` and `z` belong to
/// whichever of the real and imaginary parts deviates more in SE units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: String,
    pub n_or_t: f64,
    pub s_or_u: String,
    pub estimate_re: f64,
    pub estimate_im: f64,
    pub oracle_re: f64,
    pub oracle_im: f64,
    pub se: f64,
    pub z: f64,
}

impl ReportRow {
    pub fn new(kind: impl Into<String>, n_or_t: f64, s_or_u: impl Into<String>, estimate: &ComplexMean, oracle: Complex64) -> Self {
        let (z_re, z_im) = estimate.z(oracle);
        let (se, z) = if z_re.abs() >= z_im.abs() || z_im.is_nan() { (estimate.re.se, z_re) } else { (estimate.im.se, z_im) };
        ReportRow {
            kind: kind.into(),
            n_or_t,
            s_or_u: s_or_u.into(),
            estimate_re: estimate.re.mean,
            estimate_im: estimate.im.mean,
            oracle_re: oracle.re,
            oracle_im: oracle.im,
            se,
            z,
        }
    }

    pub fn passes(&self, k: f64) -> bool {
        self.z.abs() <= k
    }
}

/// Formats a frequency or direction as `a;b;c`.
pub fn format_point(s: &[f64]) -> String {
    s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::stats::complex_mean;

    #[test]
    fn picks_the_worse_component() {
        let zs = [Complex64::new(1.0, 0.0), Complex64::new(3.0, 0.2), Complex64::new(2.0, -0.2)];
        let est = complex_mean(&zs);
        let row = ReportRow::new("demo", 1.0, format_point(&[0.1, 0.2]), &est, Complex64::new(2.0, 1.0));
        assert_eq!(row.s_or_u, "0.1;0.2");
        assert!(row.z < -4.0);
        assert!(!row.passes(4.0));
        assert_eq!(row.se, est.im.se);
    }
}
