//! Finite measures on R^d kept as weighted atoms, plus the lazily
//! convolved form `initial + shifted * nu` used by deterministic-replacement urns.

use std::ops::Deref;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offsets::OffsetDistribution;

/// A colour in R^d. Deserializes from an array or, for d = 1, a bare number.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "PointRepr")]
pub struct Point(pub Vec<f64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum PointRepr {
    Scalar(f64),
    Coords(Vec<f64>),
}

impl From<PointRepr> for Point {
    fn from(r: PointRepr) -> Self {
        match r {
            PointRepr::Scalar(x) => Point(vec![x]),
            PointRepr::Coords(v) => Point(v),
        }
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Point(v.to_vec())
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point(vec![x])
    }
}

impl Point {
    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The affine map `x -> (x - b) / a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaleParams {
    pub a: f64,
    pub b: Point,
}

impl RescaleParams {
    pub fn new(a: f64, b: impl Into<Point>) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::param(format!("scale a must be > 0, got {a}")));
        }
        Ok(Self { a, b: b.into() })
    }

    pub fn identity(dim: usize) -> Self {
        Self { a: 1.0, b: Point::zeros(dim) }
    }
}

/// Append-only list of weighted atoms. Equal points are not merged.
///
/// A running prefix sum of the weights is kept alongside the atoms so a
/// weighted draw is a binary search.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    cum: Vec<f64>,
}

impl AtomicMeasure {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dimension must be >= 1"));
        }
        Ok(Self { dim, coords: Vec::new(), weights: Vec::new(), cum: Vec::new() })
    }

    pub fn with_capacity(dim: usize, atoms: usize) -> Result<Self> {
        let mut m = Self::new(dim)?;
        m.coords.reserve(atoms * dim);
        m.weights.reserve(atoms);
        m.cum.reserve(atoms);
        Ok(m)
    }

    pub fn from_atoms<P: AsRef<[f64]>>(dim: usize, atoms: impl IntoIterator<Item = (P, f64)>) -> Result<Self> {
        let mut m = Self::new(dim)?;
        for (x, w) in atoms {
            m.push(x.as_ref(), w)?;
        }
        Ok(m)
    }

    /// `w * delta_x`.
    pub fn dirac(x: impl Into<Point>, w: f64) -> Result<Self> {
        let x = x.into();
        Self::from_atoms(x.dim(), [(x.0, w)])
    }

    pub fn reserve(&mut self, atoms: usize) {
        self.coords.reserve(atoms * self.dim);
        self.weights.reserve(atoms);
        self.cum.reserve(atoms);
    }

    pub fn push(&mut self, x: &[f64], w: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidWeight(w));
        }
        self.push_unchecked(x, w);
        Ok(())
    }

    #[inline]
    pub(crate) fn push_unchecked(&mut self, x: &[f64], w: f64) {
        self.coords.extend_from_slice(x);
        self.weights.push(w);
        let prev = self.cum.last().copied().unwrap_or(0.0);
        self.cum.push(prev + w);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coords.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// Sum of weights; 0 for the empty measure.
    pub fn mass(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> Result<f64> {
        if self.is_empty() {
            Err(Error::ZeroMeasure)
        } else {
            Ok(self.mass())
        }
    }

    pub fn normalize(&self) -> Result<AtomicMeasure> {
        let total = self.total_mass()?;
        self.scaled(1.0 / total)
    }

    pub(crate) fn scaled(&self, factor: f64) -> Result<AtomicMeasure> {
        let mut out = AtomicMeasure::with_capacity(self.dim, self.len())?;
        for (x, w) in self.atoms() {
            out.push(x, w * factor)?;
        }
        Ok(out)
    }

    /// Pushforward under `x -> (x - b) / a`.
    pub fn rescale(&self, p: &RescaleParams) -> Result<AtomicMeasure> {
        if p.b.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: p.b.dim() });
        }
        if !(p.a > 0.0) {
            return Err(Error::param("scale a must be > 0"));
        }
        let mut out = AtomicMeasure::with_capacity(self.dim, self.len())?;
        let mut buf = vec![0.0; self.dim];
        for (x, w) in self.atoms() {
            for ((o, xi), bi) in buf.iter_mut().zip(x).zip(p.b.iter()) {
                *o = (xi - bi) / p.a;
            }
            out.push_unchecked(&buf, w);
        }
        Ok(out)
    }

    /// `sum_k w_k exp(i s.x_k)` by direct summation.
    pub fn fourier(&self, s: &[f64]) -> Complex64 {
        debug_assert_eq!(s.len(), self.dim);
        let (mut re, mut im) = (0.0, 0.0);
        if self.dim == 1 {
            let s0 = s[0];
            for (&x, &w) in self.coords.iter().zip(&self.weights) {
                let (sn, cs) = (s0 * x).sin_cos();
                re += w * cs;
                im += w * sn;
            }
        } else {
            for (x, w) in self.atoms() {
                let (sn, cs) = dot(s, x).sin_cos();
                re += w * cs;
                im += w * sn;
            }
        }
        Complex64::new(re, im)
    }

    /// Index of an atom drawn with probability `weight / mass`.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::ZeroMeasure);
        }
        let u: f64 = rng.random();
        Ok(self.index_at(u * self.mass()))
    }

    /// Atom whose cumulative-weight interval contains `target` (in `[0, mass)`).
    #[inline]
    pub(crate) fn index_at(&self, target: f64) -> usize {
        self.cum.partition_point(|&c| c <= target).min(self.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        let i = self.sample_index(rng)?;
        Ok(Point::from(self.point(i)))
    }

    /// The measure made of the first `len` atoms.
    pub fn prefix(&self, len: usize) -> AtomicMeasure {
        let len = len.min(self.len());
        AtomicMeasure {
            dim: self.dim,
            coords: self.coords[..len * self.dim].to_vec(),
            weights: self.weights[..len].to_vec(),
            cum: self.cum[..len].to_vec(),
        }
    }

    /// Merges atoms at bit-identical points, keeping first-appearance order.
    pub fn compact(&self) -> AtomicMeasure {
        let mut index: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
        let mut points: Vec<&[f64]> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (x, w) in self.atoms() {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            match index.get(&key) {
                Some(&k) => weights[k] += w,
                None => {
                    index.insert(key, points.len());
                    points.push(x);
                    weights.push(w);
                }
            }
        }
        let mut out = AtomicMeasure { dim: self.dim, coords: Vec::new(), weights: Vec::new(), cum: Vec::new() };
        for (x, w) in points.into_iter().zip(weights) {
            out.push_unchecked(x, w);
        }
        out
    }

    /// Convolution with `kernel`: the composition `m . r` for `r_x = L(x + eta)`.
    pub fn kernel_compose(&self, kernel: &OffsetDistribution) -> Result<ConvolvedMeasure> {
        ConvolvedMeasure::new(AtomicMeasure::new(self.dim)?, self.clone(), kernel.clone())
    }
}

/// `initial + shifted * nu`: atoms of `shifted` are centres of copies of the
/// kernel law `nu`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvolvedMeasure {
    pub(crate) initial: AtomicMeasure,
    pub(crate) shifted: AtomicMeasure,
    pub(crate) kernel: OffsetDistribution,
}

impl ConvolvedMeasure {
    pub fn new(initial: AtomicMeasure, shifted: AtomicMeasure, kernel: OffsetDistribution) -> Result<Self> {
        for d in [shifted.dim(), kernel.dim()] {
            if d != initial.dim() {
                return Err(Error::DimensionMismatch { expected: initial.dim(), got: d });
            }
        }
        Ok(Self { initial, shifted, kernel })
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn initial(&self) -> &AtomicMeasure {
        &self.initial
    }

    pub fn shifted(&self) -> &AtomicMeasure {
        &self.shifted
    }

    pub fn kernel(&self) -> &OffsetDistribution {
        &self.kernel
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty() && self.shifted.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.initial.mass() + self.shifted.mass()
    }

    /// The kernel is a probability law, so convolution keeps the shifted mass.
    pub fn total_mass(&self) -> Result<f64> {
        if self.is_empty() {
            Err(Error::ZeroMeasure)
        } else {
            Ok(self.mass())
        }
    }

    pub fn normalize(&self) -> Result<ConvolvedMeasure> {
        let total = self.total_mass()?;
        Ok(Self {
            initial: self.initial.scaled(1.0 / total)?,
            shifted: self.shifted.scaled(1.0 / total)?,
            kernel: self.kernel.clone(),
        })
    }

    /// `fourier(initial) + fourier(shifted) * cf(kernel)`.
    pub fn fourier(&self, s: &[f64]) -> Result<Complex64> {
        let phi = self.kernel.try_cf(s)?;
        Ok(self.initial.fourier(s) + self.shifted.fourier(s) * phi)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Point> {
        let pick = self.pick(rng)?;
        let mut out = vec![0.0; self.dim()];
        self.realize(pick, rng, &mut out);
        Ok(Point(out))
    }

    /// First stage of a draw: which part and which atom.
    pub(crate) fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Pick> {
        let total = self.total_mass()?;
        let target = rng.random::<f64>() * total;
        let m0 = self.initial.mass();
        if !self.initial.is_empty() && (target < m0 || self.shifted.is_empty()) {
            Ok(Pick::Initial(self.initial.index_at(target.min(m0))))
        } else {
            Ok(Pick::Shifted(self.shifted.index_at((target - m0).max(0.0))))
        }
    }

    /// Second stage: the atom itself, or the centre plus a fresh kernel draw.
    pub(crate) fn realize<R: Rng>(&self, pick: Pick, offsets: &mut R, out: &mut [f64]) {
        match pick {
            Pick::Initial(i) => out.copy_from_slice(self.initial.point(i)),
            Pick::Shifted(i) => {
                self.kernel.sample_into(offsets, out);
                for (o, c) in out.iter_mut().zip(self.shifted.point(i)) {
                    *o += c;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Pick {
    Initial(usize),
    Shifted(usize),
}

/// Either representation, as read from or written to JSON.
#[derive(Clone, Debug, PartialEq)]
pub enum Measure {
    Atomic(AtomicMeasure),
    Convolved(ConvolvedMeasure),
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Atomic(m) => m.dim(),
            Measure::Convolved(m) => m.dim(),
        }
    }

    pub fn total_mass(&self) -> Result<f64> {
        match self {
            Measure::Atomic(m) => m.total_mass(),
            Measure::Convolved(m) => m.total_mass(),
        }
    }

    pub fn normalize(&self) -> Result<Measure> {
        Ok(match self {
            Measure::Atomic(m) => Measure::Atomic(m.normalize()?),
            Measure::Convolved(m) => Measure::Convolved(m.normalize()?),
        })
    }

    pub fn fourier(&self, s: &[f64]) -> Result<Complex64> {
        match self {
            Measure::Atomic(m) => Ok(m.fourier(s)),
            Measure::Convolved(m) => m.fourier(s),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Point> {
        match self {
            Measure::Atomic(m) => m.sample(rng),
            Measure::Convolved(m) => m.sample(rng),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomJson {
    x: Point,
    w: f64,
}

/// `{"dim": d, "atoms": [{"x": [...], "w": ...}], "kernel": <offset spec or null>}`.
///
/// With a kernel, `atoms` are the kernel centres and the optional `initial`
/// list holds the unconvolved part.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureJson {
    dim: usize,
    atoms: Vec<AtomJson>,
    kernel: Option<OffsetDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial: Option<Vec<AtomJson>>,
}

fn atoms_json(m: &AtomicMeasure) -> Vec<AtomJson> {
    m.atoms().map(|(x, w)| AtomJson { x: Point::from(x), w }).collect()
}

fn atoms_from_json(dim: usize, atoms: Vec<AtomJson>) -> Result<AtomicMeasure> {
    AtomicMeasure::from_atoms(dim, atoms.into_iter().map(|a| (a.x.0, a.w)))
}

impl Serialize for Measure {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let json = match self {
            Measure::Atomic(m) => MeasureJson { dim: m.dim(), atoms: atoms_json(m), kernel: None, initial: None },
            Measure::Convolved(m) => MeasureJson {
                dim: m.dim(),
                atoms: atoms_json(&m.shifted),
                kernel: Some(m.kernel.clone()),
                initial: (!m.initial.is_empty()).then(|| atoms_json(&m.initial)),
            },
        };
        json.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let json = MeasureJson::deserialize(deserializer)?;
        let dim = json.dim;
        let atoms = atoms_from_json(dim, json.atoms).map_err(D::Error::custom)?;
        match json.kernel {
            None => {
                if json.initial.is_some() {
                    return Err(D::Error::custom("`initial` requires a kernel"));
                }
                Ok(Measure::Atomic(atoms))
            }
            Some(kernel) => {
                let initial = atoms_from_json(dim, json.initial.unwrap_or_default()).map_err(D::Error::custom)?;
                ConvolvedMeasure::new(initial, atoms, kernel).map(Measure::Convolved).map_err(D::Error::custom)
            }
        }
    }
}

impl Serialize for AtomicMeasure {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureJson { dim: self.dim, atoms: atoms_json(self), kernel: None, initial: None }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AtomicMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match Measure::deserialize(deserializer)? {
            Measure::Atomic(m) => Ok(m),
            Measure::Convolved(_) => Err(D::Error::custom("expected an atomic measure (kernel must be null)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn m1(atoms: &[(f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::from_atoms(1, atoms.iter().map(|&(x, w)| ([x], w))).unwrap()
    }

    #[test]
    fn total_mass_examples() {
        assert_eq!(m1(&[(0.0, 2.0)]).total_mass().unwrap(), 2.0);
        assert_eq!(m1(&[(0.0, 1.0), (1.0, 3.0)]).total_mass().unwrap(), 4.0);
        let c = ConvolvedMeasure::new(
            m1(&[(0.0, 1.5)]),
            m1(&[(1.0, 1.0), (2.0, 2.0)]),
            OffsetDistribution::normal(0.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(c.total_mass().unwrap(), 4.5);
        assert!(matches!(m1(&[]).total_mass(), Err(Error::ZeroMeasure)));
    }

    #[test]
    fn normalize_examples() {
        let n = m1(&[(0.0, 2.0), (1.0, 2.0)]).normalize().unwrap();
        assert_eq!(n.weights(), &[0.5, 0.5]);
        let n = m1(&[(5.0, 7.0)]).normalize().unwrap();
        assert_eq!((n.point(0)[0], n.weight(0)), (5.0, 1.0));
        let c = ConvolvedMeasure::new(m1(&[(0.0, 1.0)]), m1(&[(1.0, 3.0)]), OffsetDistribution::point(vec![0.0]).unwrap())
            .unwrap()
            .normalize()
            .unwrap();
        assert_eq!(c.initial().weight(0), 0.25);
        assert_eq!(c.shifted().weight(0), 0.75);
        assert!(m1(&[]).normalize().is_err());
    }

    #[test]
    fn rescale_examples() {
        let m = m1(&[(3.0, 1.0), (-1.0, 2.0)]);
        assert_eq!(m.rescale(&RescaleParams::identity(1)).unwrap(), m);
        let r = m1(&[(3.0, 1.0)]).rescale(&RescaleParams::new(2.0, 1.0).unwrap()).unwrap();
        assert_eq!(r.point(0)[0], 1.0);
        assert!(RescaleParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn fourier_examples() {
        let m = m1(&[(0.3, 1.0), (-2.0, 2.5)]);
        assert_eq!(m.fourier(&[0.0]), Complex64::new(3.5, 0.0));
        let z = m1(&[(1.0, 1.0)]).fourier(&[PI]);
        assert_abs_diff_eq!(z.re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn convolved_fourier_matches_direct_sampling() {
        let c = ConvolvedMeasure::new(
            m1(&[(0.5, 1.0)]),
            m1(&[(0.0, 1.0), (2.0, 2.0)]),
            OffsetDistribution::normal(0.3, 1.0).unwrap(),
        )
        .unwrap();
        let s = 0.8;
        let exact = c.normalize().unwrap().fourier(&[s]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let (mut sr, mut si, mut sr2, mut si2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = c.sample(&mut rng).unwrap()[0];
            let (sn, cs) = (s * x).sin_cos();
            sr += cs;
            si += sn;
            sr2 += cs * cs;
            si2 += sn * sn;
        }
        let nf = n as f64;
        let (mr, mi) = (sr / nf, si / nf);
        assert!((mr - exact.re).abs() <= 4.0 * ((sr2 / nf - mr * mr) / nf).sqrt());
        assert!((mi - exact.im).abs() <= 4.0 * ((si2 / nf - mi * mi) / nf).sqrt());
    }

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let single = m1(&[(4.0, 0.2)]);
        for _ in 0..20 {
            assert_eq!(single.sample(&mut rng).unwrap()[0], 4.0);
        }
        let two = m1(&[(0.0, 1.0), (1.0, 3.0)]);
        let n = 100_000;
        let hits = (0..n).filter(|_| two.sample(&mut rng).unwrap()[0] == 1.0).count() as f64;
        let p = hits / n as f64;
        assert!((p - 0.75).abs() <= 4.0 * (0.75 * 0.25 / n as f64).sqrt());

        let c = m1(&[(0.0, 1.0)]).kernel_compose(&OffsetDistribution::point(vec![1.0]).unwrap()).unwrap();
        for _ in 0..20 {
            assert_eq!(c.sample(&mut rng).unwrap()[0], 1.0);
        }
    }

    #[test]
    fn sampling_passes_chi_square() {
        let weights = [1.0, 2.0, 0.5, 4.0, 2.5];
        let m = AtomicMeasure::from_atoms(1, weights.iter().enumerate().map(|(i, &w)| ([i as f64], w))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut counts = [0u64; 5];
        for _ in 0..n {
            counts[m.sample_index(&mut rng).unwrap()] += 1;
        }
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let test = crate::analysis::stats::chi_square_gof(&counts, &probs).unwrap();
        assert!(test.p_value >= 1e-3, "{test:?}");
    }

    #[test]
    fn kernel_compose_examples() {
        let m = m1(&[(0.0, 1.0), (3.0, 2.0)]);
        let zero = OffsetDistribution::point(vec![0.0]).unwrap();
        let c = m.kernel_compose(&zero).unwrap();
        assert_eq!(c.total_mass().unwrap(), m.total_mass().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = c.sample(&mut rng).unwrap()[0];
            assert!(x == 0.0 || x == 3.0);
        }
        let g = OffsetDistribution::normal(1.0, 2.0).unwrap();
        let c = m.kernel_compose(&g).unwrap();
        for k in 0..20 {
            let s = [-2.0 + 0.2 * k as f64];
            let lhs = c.fourier(&s).unwrap();
            let rhs = m.fourier(&s) * g.cf(&s);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn compact_merges_equal_points() {
        let m = m1(&[(1.0, 1.0), (2.0, 1.0), (1.0, 0.5)]);
        let c = m.compact();
        assert_eq!(c.len(), 2);
        assert_eq!(c.weights(), &[1.5, 1.0]);
        assert_eq!(c.total_mass().unwrap(), m.total_mass().unwrap());
    }

    #[test]
    fn construction_errors() {
        let mut m = AtomicMeasure::new(2).unwrap();
        assert!(matches!(m.push(&[1.0], 1.0), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.push(&[1.0, 2.0], 0.0), Err(Error::InvalidWeight(_))));
        assert!(matches!(m.push(&[1.0, 2.0], f64::NAN), Err(Error::InvalidWeight(_))));
    }

    #[test]
    fn json_format() {
        let m = Measure::Atomic(m1(&[(0.0, 2.0)]));
        let js = serde_json::to_string(&m).unwrap();
        assert_eq!(js, r#"{"dim":1,"atoms":[{"x":[0.0],"w":2.0}],"kernel":null}"#);
        assert_eq!(serde_json::from_str::<Measure>(&js).unwrap(), m);
        let c: Measure =
            serde_json::from_str(r#"{"dim":1,"atoms":[{"x":[1],"w":1}],"kernel":{"type":"point","c":[1]},"initial":[{"x":0,"w":2}]}"#)
                .unwrap();
        assert_eq!(c.total_mass().unwrap(), 3.0);
        assert!(serde_json::from_str::<Measure>(r#"{"dim":1,"atoms":[{"x":[1],"w":-1}],"kernel":null}"#).is_err());
    }

    fn arb_measure() -> impl Strategy<Value = AtomicMeasure> {
        (1usize..4).prop_flat_map(|d| {
            prop::collection::vec((prop::collection::vec(-10.0f64..10.0, d), 0.01f64..5.0), 1..12)
                .prop_map(move |atoms| AtomicMeasure::from_atoms(d, atoms).unwrap())
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(m in arb_measure()) {
            let a = m.normalize().unwrap();
            let b = a.normalize().unwrap();
            prop_assert!((a.mass() - 1.0).abs() < 1e-12);
            for (wa, wb) in a.weights().iter().zip(b.weights()) {
                prop_assert!((wa - wb).abs() < 1e-12);
            }
        }

        #[test]
        fn fourier_at_zero_is_mass(m in arb_measure()) {
            let z = m.fourier(&vec![0.0; m.dim()]);
            prop_assert!((z.re - m.mass()).abs() <= 1e-12 * m.mass());
            prop_assert_eq!(z.im, 0.0);
        }

        #[test]
        fn rescale_commutes_with_fourier(m in arb_measure(), a in 0.1f64..10.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = m.dim();
            let b: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = RescaleParams::new(a, b.clone()).unwrap();
            let lhs = m.rescale(&p).unwrap().fourier(&s);
            let s_over_a: Vec<f64> = s.iter().map(|x| x / a).collect();
            let rhs = Complex64::cis(-dot(&s, &b) / a) * m.fourier(&s_over_a);
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + m.mass()));
        }
    }
}
