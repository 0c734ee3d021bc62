//! Kolmogorov–Smirnov diagnostics for the Gaussian limit of rescaled label
//! laws, via one-dimensional projections.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::quad;
use super::stats::ks_statistic_weighted;
use crate::brw::{LabelledTree, NodeSet};
use crate::error::{Error, Result};
use crate::measures::{dot, Point};

/// Rescaling `x -> (x - b) / a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scaling {
    /// `a = sqrt(log n)`, `b = m log n`.
    Discrete { n: usize },
    /// `a = sqrt(t)`, `b = m t`.
    Continuous { t: f64 },
    Custom { a: f64, b: Point },
}

impl Scaling {
    /// `(a, b)` for an offset with mean `mean`.
    pub fn params(&self, mean: &Point) -> Result<(f64, Point)> {
        let scale = |x: f64| Point(mean.iter().map(|m| m * x).collect());
        match self {
            Scaling::Discrete { n } if *n >= 3 => {
                let l = (*n as f64).ln();
                Ok((l.sqrt(), scale(l)))
            }
            Scaling::Discrete { n } => Err(Error::param(format!("need n >= 3, got {n}"))),
            Scaling::Continuous { t } if *t > 0.0 && t.is_finite() => Ok((t.sqrt(), scale(*t))),
            Scaling::Continuous { t } => Err(Error::param(format!("need t > 0, got {t}"))),
            Scaling::Custom { a, b } if *a > 0.0 && b.dim() == mean.dim() => Ok((*a, b.clone())),
            Scaling::Custom { .. } => Err(Error::param("custom scaling needs a > 0 and b of matching dimension")),
        }
    }

    pub fn size(&self) -> f64 {
        match self {
            Scaling::Discrete { n } => *n as f64,
            Scaling::Continuous { t } => *t,
            Scaling::Custom { a, .. } => *a,
        }
    }
}

/// Quenched: one realization. Annealed: labels pooled over replicates, each
/// replicate's empirical law weighted equally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Quenched,
    Annealed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityRow {
    /// `n` or `t` (or `a` for custom scalings).
    pub size: f64,
    pub direction: Point,
    pub a: f64,
    /// `u . b`.
    pub shift: f64,
    /// `u^T sigma u`, the variance of the target normal law.
    pub target_var: f64,
    pub ks: f64,
    pub sample_size: usize,
    pub trees: usize,
    pub averaging: Averaging,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub rows: Vec<NormalityRow>,
}

impl NormalityReport {
    pub fn push(&mut self, row: NormalityRow) {
        self.rows.push(row);
    }

    pub fn ks_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ks).collect()
    }
}

fn target_variance(u: &[f64], sigma: &[f64]) -> Result<f64> {
    if sigma.len() != u.len() * u.len() {
        return Err(Error::DimensionMismatch { expected: u.len() * u.len(), got: sigma.len() });
    }
    if u.iter().all(|&x| x == 0.0) {
        return Err(Error::param("direction must be non-zero"));
    }
    let v = quad(sigma, u);
    if !(v > 0.0) {
        return Err(Error::Domain(format!("u^T sigma u = {v}: the offset is orthogonal to u")));
    }
    Ok(v)
}

/// Projected, rescaled labels of the selected nodes with node weights.
fn projected_atoms(lt: &LabelledTree, which: NodeSet, u: &[f64], a: f64, shift: f64) -> Result<Vec<(f64, f64)>> {
    let xs = lt.projected(which, u)?;
    let ws = lt.empirical_measure(which)?;
    Ok(xs.into_iter().zip(ws.weights()).map(|(x, &w)| ((x - shift) / a, w)).collect())
}

/// KS distance between the rescaled projected label law of one tree and
/// `N(0, u^T sigma u)`.
pub fn normality_report(
    lt: &LabelledTree,
    which: NodeSet,
    u: &[f64],
    scaling: &Scaling,
    mean: &Point,
    sigma: &[f64],
) -> Result<NormalityRow> {
    normality_report_pooled(&[lt], which, u, scaling, mean, sigma).map(|mut row| {
        row.averaging = Averaging::Quenched;
        row
    })
}

/// Annealed version over several independent trees of the same size.
pub fn normality_report_pooled(
    lts: &[&LabelledTree],
    which: NodeSet,
    u: &[f64],
    scaling: &Scaling,
    mean: &Point,
    sigma: &[f64],
) -> Result<NormalityRow> {
    if lts.is_empty() {
        return Err(Error::param("need at least one tree"));
    }
    let var = target_variance(u, sigma)?;
    let (a, b) = scaling.params(mean)?;
    if b.dim() != u.len() {
        return Err(Error::DimensionMismatch { expected: b.dim(), got: u.len() });
    }
    let shift = dot(u, &b);
    let mut atoms = Vec::new();
    for lt in lts {
        let mut part = projected_atoms(lt, which, u, a, shift)?;
        let total: f64 = part.iter().map(|p| p.1).sum();
        for p in &mut part {
            p.1 /= total;
        }
        atoms.extend(part);
    }
    let law = Normal::new(0.0, var.sqrt()).map_err(|e| Error::param(e.to_string()))?;
    let ks = ks_statistic_weighted(&atoms, |x| law.cdf(x));
    Ok(NormalityRow {
        size: scaling.size(),
        direction: Point::from(u),
        a,
        shift,
        target_var: var,
        ks,
        sample_size: atoms.len(),
        trees: lts.len(),
        averaging: if lts.len() == 1 { Averaging::Quenched } else { Averaging::Annealed },
        seeds: Vec::new(),
    })
}
