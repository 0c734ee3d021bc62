//! Offset (step) laws of the random walk, with exact characteristic
//! functions and moments, and the paired offsets used on binary trees.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{dot, Point};

const PROB_SUM_TOL: f64 = 1e-12;

/// JSON description of an offset law, e.g. `{"type":"gaussian","mean":[0],"cov":[[1]]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffsetSpec {
    Point { c: Point },
    Discrete { atoms: Vec<ProbAtom> },
    Gaussian { mean: Point, cov: Vec<Vec<f64>> },
    Uniform { lo: Point, hi: Point },
    /// Independent one-dimensional coordinates.
    Product { factors: Vec<OffsetSpec> },
    /// One-dimensional Cauchy law; infinite variance.
    #[cfg(feature = "exploratory")]
    Cauchy { loc: f64, scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbAtom {
    pub x: Point,
    pub p: f64,
}

/// Sampler callback for offsets known only through simulation.
pub type SamplerFn = dyn Fn(&mut dyn RngCore, &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum Law {
    Point(Vec<f64>),
    Discrete { points: Vec<f64>, probs: Vec<f64>, cum: Vec<f64> },
    Gaussian { mean: Vec<f64>, cov: Vec<f64>, root: Vec<f64> },
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    Product(Vec<OffsetDistribution>),
    #[cfg(feature = "exploratory")]
    Cauchy { loc: f64, scale: f64 },
    Custom(Arc<SamplerFn>),
}

#[derive(Clone, Debug)]
struct Moments {
    mean: Point,
    /// E[eta eta^T], row-major d x d.
    second: Vec<f64>,
}

/// Law of the offset eta, immutable after construction.
#[derive(Clone)]
pub struct OffsetDistribution {
    dim: usize,
    law: Law,
    spec: Option<OffsetSpec>,
    moments: Option<Moments>,
}

impl fmt::Debug for OffsetDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.spec {
            Some(spec) => f.debug_tuple("OffsetDistribution").field(spec).finish(),
            None => write!(f, "OffsetDistribution(custom sampler, dim={})", self.dim),
        }
    }
}

impl PartialEq for OffsetDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.spec.is_some() && self.spec == other.spec
    }
}

impl OffsetDistribution {
    pub fn from_spec(spec: OffsetSpec) -> Result<Self> {
        let (dim, law) = compile(&spec)?;
        let moments = law_moments(dim, &law);
        Ok(Self { dim, law, spec: Some(spec), moments })
    }

    pub fn point(c: impl Into<Point>) -> Result<Self> {
        Self::from_spec(OffsetSpec::Point { c: c.into() })
    }

    pub fn gaussian(mean: impl Into<Point>, cov: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_spec(OffsetSpec::Gaussian { mean: mean.into(), cov })
    }

    /// One-dimensional N(mean, var).
    pub fn normal(mean: f64, var: f64) -> Result<Self> {
        Self::gaussian(vec![mean], vec![vec![var]])
    }

    pub fn discrete(atoms: Vec<(Point, f64)>) -> Result<Self> {
        Self::from_spec(OffsetSpec::Discrete {
            atoms: atoms.into_iter().map(|(x, p)| ProbAtom { x, p }).collect(),
        })
    }

    pub fn uniform(lo: impl Into<Point>, hi: impl Into<Point>) -> Result<Self> {
        Self::from_spec(OffsetSpec::Uniform { lo: lo.into(), hi: hi.into() })
    }

    /// Offset known only through its sampler. Usable for simulation; every
    /// operation needing the characteristic function or moments fails with
    /// [`Error::Unsupported`].
    pub fn from_sampler<F>(dim: usize, sampler: F) -> Result<Self>
    where
        F: Fn(&mut dyn RngCore, &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::param("dimension must be >= 1"));
        }
        Ok(Self { dim, law: Law::Custom(Arc::new(sampler)), spec: None, moments: None })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> Option<&OffsetSpec> {
        self.spec.as_ref()
    }

    pub fn has_closed_form(&self) -> bool {
        match &self.law {
            Law::Custom(_) => false,
            Law::Product(fs) => fs.iter().all(|f| f.has_closed_form()),
            _ => true,
        }
    }

    /// `E eta`.
    pub fn mean(&self) -> Result<&Point> {
        self.moments
            .as_ref()
            .map(|m| &m.mean)
            .ok_or_else(|| Error::Unsupported("offset has no finite mean/second moment".into()))
    }

    /// `E[eta eta^T]`, row-major.
    pub fn second_moment(&self) -> Result<&[f64]> {
        self.moments
            .as_ref()
            .map(|m| m.second.as_slice())
            .ok_or_else(|| Error::Unsupported("offset has no finite mean/second moment".into()))
    }

    /// Characteristic function `E exp(i s.eta)`.
    ///
    /// Panics for sampler-only offsets; use [`try_cf`](Self::try_cf) when the
    /// law may be one.
    pub fn cf(&self, s: &[f64]) -> Complex64 {
        self.try_cf(s).expect("characteristic function of a sampler-only offset")
    }

    pub fn try_cf(&self, s: &[f64]) -> Result<Complex64> {
        if s.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: s.len() });
        }
        Ok(match &self.law {
            Law::Point(c) => Complex64::cis(dot(s, c)),
            // Probabilities need not sum to exactly 1 in floating point.
            Law::Discrete { .. } if s.iter().all(|&x| x == 0.0) => Complex64::new(1.0, 0.0),
            Law::Discrete { points, probs, .. } => probs
                .iter()
                .zip(points.chunks_exact(self.dim))
                .map(|(p, x)| Complex64::cis(dot(s, x)) * p)
                .sum(),
            Law::Gaussian { mean, cov, .. } => {
                let q = quad_form(cov, s);
                Complex64::from_polar((-0.5 * q).exp(), dot(s, mean))
            }
            Law::Uniform { lo, hi } => {
                let mut out = Complex64::new(1.0, 0.0);
                for ((&sj, &a), &b) in s.iter().zip(lo).zip(hi) {
                    let half = 0.5 * (b - a) * sj;
                    let sinc = if half == 0.0 { 1.0 } else { half.sin() / half };
                    out *= Complex64::cis(0.5 * (a + b) * sj) * sinc;
                }
                out
            }
            Law::Product(fs) => {
                let mut out = Complex64::new(1.0, 0.0);
                for (f, &sj) in fs.iter().zip(s) {
                    out *= f.try_cf(&[sj])?;
                }
                out
            }
            #[cfg(feature = "exploratory")]
            Law::Cauchy { loc, scale } => Complex64::from_polar((-scale * s[0].abs()).exp(), loc * s[0]),
            Law::Custom(_) => {
                return Err(Error::Unsupported(
                    "sampler-only offset has no closed-form characteristic function".into(),
                ))
            }
        })
    }

    /// Writes one draw into `out` (length `dim`).
    pub fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.law {
            Law::Point(c) => out.copy_from_slice(c),
            Law::Discrete { points, cum, .. } => {
                let k = pick_cumulative(cum, rng.random::<f64>());
                out.copy_from_slice(&points[k * self.dim..(k + 1) * self.dim]);
            }
            Law::Gaussian { mean, root, .. } => {
                let d = self.dim;
                let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..d {
                    out[i] = mean[i] + (0..d).map(|j| root[i * d + j] * z[j]).sum::<f64>();
                }
            }
            Law::Uniform { lo, hi } => {
                for ((o, &a), &b) in out.iter_mut().zip(lo).zip(hi) {
                    *o = a + (b - a) * rng.random::<f64>();
                }
            }
            Law::Product(fs) => {
                for (f, o) in fs.iter().zip(out.iter_mut()) {
                    f.sample_into(rng, std::slice::from_mut(o));
                }
            }
            #[cfg(feature = "exploratory")]
            Law::Cauchy { loc, scale } => {
                let u: f64 = rng.random();
                out[0] = loc + scale * (std::f64::consts::PI * (u - 0.5)).tan();
            }
            Law::Custom(f) => f(rng, out),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut out);
        Point(out)
    }

    /// Largest `delta` with `Re cf(r u) >= 3/4` for `|r| <= delta`, `u` the
    /// unit vector along `direction`.
    pub fn cf_domain(&self, direction: &[f64]) -> Result<CfDomain> {
        let u = unit(direction, self.dim)?;
        self.try_cf(&u)?;
        let scaled = |r: f64| -> Vec<f64> { u.iter().map(|x| x * r).collect() };
        Ok(scan_cf_domain(|r| self.cf(&scaled(r)).re))
    }
}

impl Serialize for OffsetDistribution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.spec {
            Some(spec) => spec.serialize(serializer),
            None => Err(serde::ser::Error::custom("sampler-only offsets cannot be serialized")),
        }
    }
}

impl<'de> Deserialize<'de> for OffsetDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let spec = OffsetSpec::deserialize(deserializer)?;
        OffsetDistribution::from_spec(spec).map_err(serde::de::Error::custom)
    }
}

fn compile(spec: &OffsetSpec) -> Result<(usize, Law)> {
    match spec {
        OffsetSpec::Point { c } => {
            check_dim(c.len())?;
            check_finite(c)?;
            Ok((c.len(), Law::Point(c.0.clone())))
        }
        OffsetSpec::Discrete { atoms } => {
            let first = atoms.first().ok_or_else(|| Error::param("discrete offset needs atoms"))?;
            let dim = first.x.len();
            check_dim(dim)?;
            let mut points = Vec::with_capacity(atoms.len() * dim);
            let mut probs = Vec::with_capacity(atoms.len());
            for a in atoms {
                if a.x.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: a.x.len() });
                }
                check_finite(&a.x)?;
                if !(a.p >= 0.0 && a.p.is_finite()) {
                    return Err(Error::param(format!("probability {} out of range", a.p)));
                }
                points.extend_from_slice(&a.x);
                probs.push(a.p);
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::param(format!("probabilities sum to {total}, not 1")));
            }
            let cum = cumulative(&probs);
            Ok((dim, Law::Discrete { points, probs, cum }))
        }
        OffsetSpec::Gaussian { mean, cov } => {
            let dim = mean.len();
            check_dim(dim)?;
            check_finite(mean)?;
            if cov.len() != dim || cov.iter().any(|r| r.len() != dim) {
                return Err(Error::param(format!("covariance must be {dim}x{dim}")));
            }
            let flat: Vec<f64> = cov.iter().flatten().copied().collect();
            check_finite(&flat)?;
            let root = psd_root(dim, &flat)?;
            Ok((dim, Law::Gaussian { mean: mean.0.clone(), cov: flat, root }))
        }
        OffsetSpec::Uniform { lo, hi } => {
            check_dim(lo.len())?;
            if lo.len() != hi.len() {
                return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
            }
            check_finite(lo)?;
            check_finite(hi)?;
            if lo.iter().zip(hi.iter()).any(|(a, b)| a > b) {
                return Err(Error::param("uniform box needs lo <= hi"));
            }
            Ok((lo.len(), Law::Uniform { lo: lo.0.clone(), hi: hi.0.clone() }))
        }
        OffsetSpec::Product { factors } => {
            check_dim(factors.len())?;
            let fs = factors
                .iter()
                .map(|f| {
                    let d = OffsetDistribution::from_spec(f.clone())?;
                    if d.dim != 1 {
                        return Err(Error::param("product factors must be one-dimensional"));
                    }
                    Ok(d)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((fs.len(), Law::Product(fs)))
        }
        #[cfg(feature = "exploratory")]
        OffsetSpec::Cauchy { loc, scale } => {
            if !(scale.is_finite() && *scale > 0.0 && loc.is_finite()) {
                return Err(Error::param("cauchy needs finite loc and scale > 0"));
            }
            Ok((1, Law::Cauchy { loc: *loc, scale: *scale }))
        }
    }
}

fn law_moments(dim: usize, law: &Law) -> Option<Moments> {
    let outer = |m: &[f64]| -> Vec<f64> {
        let mut o = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                o[i * dim + j] = m[i] * m[j];
            }
        }
        o
    };
    match law {
        Law::Point(c) => Some(Moments { mean: Point(c.clone()), second: outer(c) }),
        Law::Discrete { points, probs, .. } => {
            let mut mean = vec![0.0; dim];
            let mut second = vec![0.0; dim * dim];
            for (p, x) in probs.iter().zip(points.chunks_exact(dim)) {
                for i in 0..dim {
                    mean[i] += p * x[i];
                    for j in 0..dim {
                        second[i * dim + j] += p * x[i] * x[j];
                    }
                }
            }
            Some(Moments { mean: Point(mean), second })
        }
        Law::Gaussian { mean, cov, .. } => {
            let second = outer(mean).iter().zip(cov).map(|(a, b)| a + b).collect();
            Some(Moments { mean: Point(mean.clone()), second })
        }
        Law::Uniform { lo, hi } => {
            let mean: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let mut second = outer(&mean);
            for i in 0..dim {
                second[i * dim + i] += (hi[i] - lo[i]).powi(2) / 12.0;
            }
            Some(Moments { mean: Point(mean), second })
        }
        Law::Product(fs) => {
            let mut means = Vec::with_capacity(dim);
            let mut diag = Vec::with_capacity(dim);
            for f in fs {
                let m = f.moments.as_ref()?;
                means.push(m.mean[0]);
                diag.push(m.second[0]);
            }
            let mut second = outer(&means);
            for i in 0..dim {
                second[i * dim + i] = diag[i];
            }
            Some(Moments { mean: Point(means), second })
        }
        #[cfg(feature = "exploratory")]
        Law::Cauchy { .. } => None,
        Law::Custom(_) => None,
    }
}

/// Law of the pair `(eta_L, eta_R)` attached to the two children of an
/// internal node of a binary tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairSpec {
    PairIndep { l: OffsetSpec, r: OffsetSpec },
    PairDet { l: Point, r: Point },
    PairJoint { atoms: Vec<PairAtom> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairAtom {
    pub l: Point,
    pub r: Point,
    pub p: f64,
}

#[derive(Clone, Debug)]
enum PairLaw {
    Independent(OffsetDistribution, OffsetDistribution),
    Deterministic(Vec<f64>, Vec<f64>),
    Joint { left: Vec<f64>, right: Vec<f64>, probs: Vec<f64>, cum: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct PairedOffset {
    dim: usize,
    law: PairLaw,
    spec: PairSpec,
    /// `E eta_L + E eta_R` and `E[eta_L eta_L^T] + E[eta_R eta_R^T]`.
    moments: Option<Moments>,
}

impl PartialEq for PairedOffset {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl PairedOffset {
    pub fn from_spec(spec: PairSpec) -> Result<Self> {
        let (dim, law) = match &spec {
            PairSpec::PairIndep { l, r } => {
                let l = OffsetDistribution::from_spec(l.clone())?;
                let r = OffsetDistribution::from_spec(r.clone())?;
                if l.dim != r.dim {
                    return Err(Error::DimensionMismatch { expected: l.dim, got: r.dim });
                }
                (l.dim, PairLaw::Independent(l, r))
            }
            PairSpec::PairDet { l, r } => {
                check_dim(l.len())?;
                if l.len() != r.len() {
                    return Err(Error::DimensionMismatch { expected: l.len(), got: r.len() });
                }
                check_finite(l)?;
                check_finite(r)?;
                (l.len(), PairLaw::Deterministic(l.0.clone(), r.0.clone()))
            }
            PairSpec::PairJoint { atoms } => {
                let first = atoms.first().ok_or_else(|| Error::param("joint pair needs atoms"))?;
                let dim = first.l.len();
                check_dim(dim)?;
                let (mut left, mut right, mut probs) = (Vec::new(), Vec::new(), Vec::new());
                for a in atoms {
                    for p in [&a.l, &a.r] {
                        if p.len() != dim {
                            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
                        }
                        check_finite(p)?;
                    }
                    if !(a.p >= 0.0 && a.p.is_finite()) {
                        return Err(Error::param(format!("probability {} out of range", a.p)));
                    }
                    left.extend_from_slice(&a.l);
                    right.extend_from_slice(&a.r);
                    probs.push(a.p);
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::param(format!("probabilities sum to {total}, not 1")));
                }
                let cum = cumulative(&probs);
                (dim, PairLaw::Joint { left, right, probs, cum })
            }
        };
        let moments = pair_moments(dim, &law);
        Ok(Self { dim, law, spec, moments })
    }

    pub fn deterministic(l: impl Into<Point>, r: impl Into<Point>) -> Result<Self> {
        Self::from_spec(PairSpec::PairDet { l: l.into(), r: r.into() })
    }

    pub fn independent(l: &OffsetDistribution, r: &OffsetDistribution) -> Result<Self> {
        match (l.spec(), r.spec()) {
            (Some(ls), Some(rs)) => Self::from_spec(PairSpec::PairIndep { l: ls.clone(), r: rs.clone() }),
            _ => Err(Error::Unsupported("paired offsets need closed-form marginals".into())),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &PairSpec {
        &self.spec
    }

    /// `E eta_L + E eta_R`.
    pub fn mean(&self) -> Result<&Point> {
        self.moments
            .as_ref()
            .map(|m| &m.mean)
            .ok_or_else(|| Error::Unsupported("pair has no finite second moments".into()))
    }

    /// `E[eta_L eta_L^T] + E[eta_R eta_R^T]`, row-major.
    pub fn second_moment(&self) -> Result<&[f64]> {
        self.moments
            .as_ref()
            .map(|m| m.second.as_slice())
            .ok_or_else(|| Error::Unsupported("pair has no finite second moments".into()))
    }

    /// Joint characteristic function `E exp(i(s1.eta_L + s2.eta_R))`.
    pub fn joint_cf(&self, s1: &[f64], s2: &[f64]) -> Complex64 {
        match &self.law {
            PairLaw::Independent(l, r) => l.cf(s1) * r.cf(s2),
            PairLaw::Deterministic(l, r) => Complex64::cis(dot(s1, l) + dot(s2, r)),
            PairLaw::Joint { .. } if s1.iter().chain(s2).all(|&x| x == 0.0) => Complex64::new(1.0, 0.0),
            PairLaw::Joint { left, right, probs, .. } => probs
                .iter()
                .zip(left.chunks_exact(self.dim).zip(right.chunks_exact(self.dim)))
                .map(|(p, (l, r))| Complex64::cis(dot(s1, l) + dot(s2, r)) * p)
                .sum(),
        }
    }

    pub fn cf_left(&self, s: &[f64]) -> Complex64 {
        self.joint_cf(s, &vec![0.0; self.dim])
    }

    pub fn cf_right(&self, s: &[f64]) -> Complex64 {
        self.joint_cf(&vec![0.0; self.dim], s)
    }

    /// `phi_L(s) + phi_R(s) - 1`.
    pub fn tilde_cf(&self, s: &[f64]) -> Complex64 {
        self.cf_left(s) + self.cf_right(s) - 1.0
    }

    /// `E[(e^{i s1 eta_L} + e^{i s1 eta_R} - 1)(e^{i s2 eta_L} + e^{i s2 eta_R} - 1)]`.
    pub fn psi(&self, s1: &[f64], s2: &[f64]) -> Complex64 {
        let sum: Vec<f64> = s1.iter().zip(s2).map(|(a, b)| a + b).collect();
        self.joint_cf(s1, s2) + self.joint_cf(s2, s1) + self.tilde_cf(&sum) - self.tilde_cf(s1) - self.tilde_cf(s2)
    }

    pub fn sample_into<R: Rng>(&self, rng: &mut R, left: &mut [f64], right: &mut [f64]) {
        match &self.law {
            PairLaw::Independent(l, r) => {
                l.sample_into(rng, left);
                r.sample_into(rng, right);
            }
            PairLaw::Deterministic(l, r) => {
                left.copy_from_slice(l);
                right.copy_from_slice(r);
            }
            PairLaw::Joint { left: ls, right: rs, cum, .. } => {
                let k = pick_cumulative(cum, rng.random::<f64>());
                let d = self.dim;
                left.copy_from_slice(&ls[k * d..(k + 1) * d]);
                right.copy_from_slice(&rs[k * d..(k + 1) * d]);
            }
        }
    }

    pub fn sample_pair<R: Rng>(&self, rng: &mut R) -> (Point, Point) {
        let mut l = vec![0.0; self.dim];
        let mut r = vec![0.0; self.dim];
        self.sample_into(rng, &mut l, &mut r);
        (Point(l), Point(r))
    }

    /// Domain of `tilde_cf` along `direction`: `Re tilde_cf(r u) >= 3/4` for `|r| <= delta`.
    pub fn cf_domain(&self, direction: &[f64]) -> Result<CfDomain> {
        let u = unit(direction, self.dim)?;
        let scaled = |r: f64| -> Vec<f64> { u.iter().map(|x| x * r).collect() };
        Ok(scan_cf_domain(|r| self.tilde_cf(&scaled(r)).re))
    }
}

impl Serialize for PairedOffset {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.spec.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PairedOffset {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let spec = PairSpec::deserialize(deserializer)?;
        PairedOffset::from_spec(spec).map_err(serde::de::Error::custom)
    }
}

fn pair_moments(dim: usize, law: &PairLaw) -> Option<Moments> {
    let add = |a: &Moments, b: &Moments| Moments {
        mean: Point(a.mean.iter().zip(b.mean.iter()).map(|(x, y)| x + y).collect()),
        second: a.second.iter().zip(&b.second).map(|(x, y)| x + y).collect(),
    };
    match law {
        PairLaw::Independent(l, r) => Some(add(l.moments.as_ref()?, r.moments.as_ref()?)),
        PairLaw::Deterministic(l, r) => {
            let ml = law_moments(dim, &Law::Point(l.clone()))?;
            let mr = law_moments(dim, &Law::Point(r.clone()))?;
            Some(add(&ml, &mr))
        }
        PairLaw::Joint { left, right, probs, cum } => {
            let marginal = |pts: &Vec<f64>| Law::Discrete { points: pts.clone(), probs: probs.clone(), cum: cum.clone() };
            let ml = law_moments(dim, &marginal(left))?;
            let mr = law_moments(dim, &marginal(right))?;
            Some(add(&ml, &mr))
        }
    }
}

/// Interval `[-delta, delta]` on which the real part of a characteristic
/// function stays at least 3/4.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfDomain {
    pub delta: f64,
}

impl CfDomain {
    pub fn contains(&self, r: f64) -> bool {
        r.abs() <= self.delta
    }
}

const DOMAIN_LEVEL: f64 = 0.75;
const DOMAIN_RATIO: f64 = 1.0 + 1e-4;
const DOMAIN_MAX: f64 = 1e4;

/// Walks the geometric grid `r0 (1 + 1e-4)^k` and stops before the first
/// grid point where `re_cf` drops below 3/4, so the grid minimum over
/// `[0, delta]` is at least 3/4. The start point is halved until it passes.
pub fn scan_cf_domain(re_cf: impl Fn(f64) -> f64) -> CfDomain {
    let mut start = 1e-6;
    while re_cf(start) < DOMAIN_LEVEL && start > 1e-300 {
        start *= 0.5;
    }
    let mut last_good = start;
    let mut r = start;
    while r < DOMAIN_MAX {
        r *= DOMAIN_RATIO;
        if re_cf(r) < DOMAIN_LEVEL {
            return CfDomain { delta: last_good };
        }
        last_good = r;
    }
    CfDomain { delta: last_good }
}

pub(crate) fn pick_cumulative(cum: &[f64], u: f64) -> usize {
    let total = *cum.last().expect("non-empty cumulative table");
    let target = u * total;
    cum.partition_point(|&c| c <= target).min(cum.len() - 1)
}

fn cumulative(ps: &[f64]) -> Vec<f64> {
    ps.iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

fn quad_form(m: &[f64], s: &[f64]) -> f64 {
    let d = s.len();
    (0..d).map(|i| s[i] * (0..d).map(|j| m[i * d + j] * s[j]).sum::<f64>()).sum()
}

/// Symmetric square root factor `V sqrt(Lambda)` of a PSD matrix.
fn psd_root(dim: usize, flat: &[f64]) -> Result<Vec<f64>> {
    let m = DMatrix::from_row_slice(dim, dim, flat);
    if (&m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::param("covariance must be symmetric"));
    }
    let eig = SymmetricEigen::new(m.clone());
    let tol = 1e-12 * (1.0 + m.amax());
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return Err(Error::param("covariance must be positive semidefinite"));
    }
    let sqrt_l = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_l);
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[i * dim + j] = root[(i, j)];
        }
    }
    Ok(out)
}

fn unit(direction: &[f64], dim: usize) -> Result<Vec<f64>> {
    if direction.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: direction.len() });
    }
    let norm = dot(direction, direction).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::param("direction must be non-zero"));
    }
    Ok(direction.iter().map(|x| x / norm).collect())
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(Error::param("dimension must be >= 1"))
    } else {
        Ok(())
    }
}

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::param("coordinates must be finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn all_variants() -> Vec<OffsetDistribution> {
        vec![
            OffsetDistribution::point(vec![1.0]).unwrap(),
            OffsetDistribution::point(vec![1.0, -2.0]).unwrap(),
            OffsetDistribution::discrete(vec![(vec![-1.0].into(), 0.25), (vec![2.0].into(), 0.75)]).unwrap(),
            OffsetDistribution::normal(0.5, 2.0).unwrap(),
            OffsetDistribution::gaussian(vec![0.0, 1.0], vec![vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap(),
            OffsetDistribution::uniform(vec![-1.0, 0.0], vec![2.0, 0.5]).unwrap(),
            OffsetDistribution::from_spec(OffsetSpec::Product {
                factors: vec![
                    OffsetSpec::Point { c: vec![0.5].into() },
                    OffsetSpec::Uniform { lo: vec![0.0].into(), hi: vec![1.0].into() },
                ],
            })
            .unwrap(),
        ]
    }

    #[test]
    fn point_mass_cf() {
        let d = OffsetDistribution::point(vec![1.0]).unwrap();
        assert_eq!(d.cf(&[0.0]), Complex64::new(1.0, 0.0));
        let z = d.cf(&[PI]);
        assert_abs_diff_eq!(z.re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn standard_normal_cf() {
        let d = OffsetDistribution::normal(0.0, 1.0).unwrap();
        let z = d.cf(&[1.0]);
        assert_abs_diff_eq!(z.re, (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z.re, 0.60653, epsilon = 1e-5);
    }

    #[test]
    fn cf_at_zero_is_one_and_conjugate_symmetric() {
        for d in all_variants() {
            let zero = vec![0.0; d.dim()];
            assert_eq!(d.cf(&zero), Complex64::new(1.0, 0.0), "{d:?}");
            for k in 0..50 {
                let s: Vec<f64> = (0..d.dim()).map(|j| 0.37 * k as f64 - 3.0 + j as f64).collect();
                let neg: Vec<f64> = s.iter().map(|x| -x).collect();
                let (a, b) = (d.cf(&s), d.cf(&neg));
                assert!((a - b.conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cf_modulus_bounded_on_grid() {
        for d in all_variants() {
            for k in 0..1000 {
                let r = -25.0 + 0.05 * k as f64;
                let s: Vec<f64> = (0..d.dim()).map(|j| r * (1.0 + 0.5 * j as f64)).collect();
                assert!(d.cf(&s).norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn cached_moments_match_monte_carlo() {
        let n = 1_000_000usize;
        for (i, d) in all_variants().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
            let dim = d.dim();
            let mut buf = vec![0.0; dim];
            let mut s1 = vec![0.0; dim];
            let mut s2 = vec![0.0; dim * dim];
            let mut s4 = vec![0.0; dim * dim];
            for _ in 0..n {
                d.sample_into(&mut rng, &mut buf);
                for a in 0..dim {
                    s1[a] += buf[a];
                    for b in 0..dim {
                        let p = buf[a] * buf[b];
                        s2[a * dim + b] += p;
                        s4[a * dim + b] += p * p;
                    }
                }
            }
            let mean = d.mean().unwrap();
            let second = d.second_moment().unwrap();
            let nf = n as f64;
            for a in 0..dim {
                let m = s1[a] / nf;
                let var = s2[a * dim + a] / nf - m * m;
                let se = (var / nf).sqrt();
                assert!((m - mean[a]).abs() <= 4.0 * se + 1e-12, "variant {i} mean[{a}]");
                for b in 0..dim {
                    let e = s2[a * dim + b] / nf;
                    let v = s4[a * dim + b] / nf - e * e;
                    let se = (v / nf).sqrt();
                    assert!((e - second[a * dim + b]).abs() <= 4.0 * se + 1e-12, "variant {i} second[{a},{b}]");
                }
            }
        }
    }

    #[test]
    fn gaussian_sample_mean_within_clt_band() {
        let d = OffsetDistribution::normal(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn point_mass_sampling_is_constant() {
        let d = OffsetDistribution::point(vec![3.0, -1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(d.sample(&mut rng).0, vec![3.0, -1.0]);
        }
    }

    #[test]
    fn discrete_probabilities_must_sum_to_one() {
        let err = OffsetDistribution::discrete(vec![(vec![0.0].into(), 0.5), (vec![1.0].into(), 0.4)]);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn covariance_must_be_psd() {
        let err = OffsetDistribution::gaussian(vec![0.0, 0.0], vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(err.is_err());
        let ok = OffsetDistribution::gaussian(vec![0.0, 0.0], vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert!(ok.is_ok());
    }

    #[test]
    fn sampler_only_offsets_reject_cf_and_moments() {
        let d = OffsetDistribution::from_sampler(1, |rng, out| out[0] = rng.next_u32() as f64).unwrap();
        assert!(!d.has_closed_form());
        assert!(matches!(d.try_cf(&[0.1]), Err(Error::Unsupported(_))));
        assert!(matches!(d.mean(), Err(Error::Unsupported(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let _ = d.sample(&mut rng);
    }

    #[test]
    fn deterministic_pair() {
        let p = PairedOffset::deterministic(vec![-1.0], vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(p.sample_pair(&mut rng), (Point(vec![-1.0]), Point(vec![1.0])));
        for k in 0..20 {
            let s = -2.0 + 0.2 * k as f64;
            let t = p.tilde_cf(&[s]);
            assert_abs_diff_eq!(t.re, 2.0 * s.cos() - 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(t.im, 0.0, epsilon = 1e-14);
        }
        assert_eq!(p.tilde_cf(&[0.0]), Complex64::new(1.0, 0.0));
        assert_eq!(p.mean().unwrap().0, vec![0.0]);
        assert_eq!(p.second_moment().unwrap(), &[2.0]);
    }

    #[test]
    fn independent_pair_tilde_cf() {
        let l = OffsetDistribution::normal(0.0, 1.0).unwrap();
        let r = OffsetDistribution::point(vec![0.0]).unwrap();
        let p = PairedOffset::independent(&l, &r).unwrap();
        let t = p.tilde_cf(&[1.0]);
        assert_abs_diff_eq!(t.re, (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(t.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn psi_at_origin_is_one() {
        let p = PairedOffset::deterministic(vec![-1.0], vec![1.0]).unwrap();
        assert!((p.psi(&[0.0], &[0.0]) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn psi_matches_symbolic_expansion_for_deterministic_pair() {
        // eta = (-1, 1): joint cf(s1, s2) = e^{i(s2 - s1)} and tilde(s) = 2 cos s - 1, so
        // psi = 2 cos(s2 - s1) + 2 cos(s1 + s2) - 1 - 2 cos s1 - 2 cos s2 + 2.
        let p = PairedOffset::deterministic(vec![-1.0], vec![1.0]).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                let (s1, s2) = (-1.4 + 0.2 * i as f64, -1.4 + 0.2 * j as f64);
                let expect = 2.0 * (s2 - s1).cos() + 2.0 * (s1 + s2).cos() + 1.0 - 2.0 * s1.cos() - 2.0 * s2.cos();
                let got = p.psi(&[s1], &[s2]);
                assert!((got - Complex64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn psi_matches_direct_sampling() {
        let l = OffsetDistribution::normal(-0.5, 1.0).unwrap();
        let r = OffsetDistribution::normal(0.5, 0.5).unwrap();
        for (i, p) in [
            PairedOffset::independent(&l, &r).unwrap(),
            PairedOffset::from_spec(PairSpec::PairJoint {
                atoms: vec![
                    PairAtom { l: vec![-1.0].into(), r: vec![2.0].into(), p: 0.3 },
                    PairAtom { l: vec![0.5].into(), r: vec![0.0].into(), p: 0.7 },
                ],
            })
            .unwrap(),
        ]
        .into_iter()
        .enumerate()
        {
            let (s1, s2) = (0.7, -0.4);
            let mut rng = ChaCha8Rng::seed_from_u64(40 + i as u64);
            let n = 1_000_000;
            let (mut sr, mut si, mut sr2, mut si2) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..n {
                let (a, b) = p.sample_pair(&mut rng);
                let f1 = Complex64::cis(s1 * a[0]) + Complex64::cis(s1 * b[0]) - 1.0;
                let f2 = Complex64::cis(s2 * a[0]) + Complex64::cis(s2 * b[0]) - 1.0;
                let z = f1 * f2;
                sr += z.re;
                si += z.im;
                sr2 += z.re * z.re;
                si2 += z.im * z.im;
            }
            let nf = n as f64;
            let (mr, mi) = (sr / nf, si / nf);
            let (ser, sei) = (((sr2 / nf - mr * mr) / nf).sqrt(), ((si2 / nf - mi * mi) / nf).sqrt());
            let psi = p.psi(&[s1], &[s2]);
            assert!((mr - psi.re).abs() <= 4.0 * ser, "pair {i} re");
            assert!((mi - psi.im).abs() <= 4.0 * sei, "pair {i} im");
        }
    }

    #[test]
    fn cf_domains_match_analytic_inversion() {
        let pm = OffsetDistribution::point(vec![1.0]).unwrap().cf_domain(&[1.0]).unwrap();
        let exact = 0.75f64.acos();
        assert!(pm.delta <= exact && pm.delta >= exact * (1.0 - 2e-4), "{}", pm.delta);
        assert_abs_diff_eq!(exact, 0.7227, epsilon = 1e-4);

        let g = OffsetDistribution::normal(0.0, 1.0).unwrap().cf_domain(&[1.0]).unwrap();
        let exact = (2.0 * (4.0f64 / 3.0).ln()).sqrt();
        assert!(g.delta <= exact && g.delta >= exact * (1.0 - 2e-4));
        assert_abs_diff_eq!(exact, 0.7585, epsilon = 1e-4);

        let b = PairedOffset::deterministic(vec![-1.0], vec![1.0]).unwrap().cf_domain(&[1.0]).unwrap();
        let exact = (7.0f64 / 8.0).acos();
        assert!(b.delta <= exact && b.delta >= exact * (1.0 - 2e-4));
        assert_abs_diff_eq!(exact, 0.5054, epsilon = 1e-4);
    }

    #[test]
    fn cf_domain_verified_on_scan() {
        for d in all_variants() {
            let u = vec![1.0; d.dim()];
            let dom = d.cf_domain(&u).unwrap();
            assert!(dom.delta > 0.0);
            let norm = (d.dim() as f64).sqrt();
            for k in 0..=1000 {
                let r = dom.delta * k as f64 / 1000.0;
                let s: Vec<f64> = u.iter().map(|x| x / norm * r).collect();
                assert!(d.cf(&s).re >= 0.75 - 1e-6);
            }
        }
    }

    #[test]
    fn json_spec_round_trip() {
        let d: OffsetDistribution = serde_json::from_str(r#"{"type":"gaussian","mean":[0],"cov":[[1]]}"#).unwrap();
        assert_eq!(serde_json::to_string(&d).unwrap(), r#"{"type":"gaussian","mean":[0.0],"cov":[[1.0]]}"#);
        let p: PairedOffset = serde_json::from_str(r#"{"type":"pair_det","l":[-1],"r":[1]}"#).unwrap();
        assert_eq!(p.dim(), 1);
        let q: OffsetDistribution = serde_json::from_str(r#"{"type":"point","c":[1]}"#).unwrap();
        assert_eq!(q.mean().unwrap().0, vec![1.0]);
    }

    #[cfg(feature = "exploratory")]
    #[test]
    fn cauchy_has_cf_but_no_moments() {
        let d = OffsetDistribution::from_spec(OffsetSpec::Cauchy { loc: 0.0, scale: 1.0 }).unwrap();
        assert!((d.cf(&[1.0]).re - (-1.0f64).exp()).abs() < 1e-15);
        assert!(d.mean().is_err());
    }
}
