//! Measure-valued Pólya urns of random-walk type.
//!
//! * [`SrwUrn`]: draw a ball, return it, add one ball of colour
//!   `drawn + eta` (single random replacement).
//! * [`DrwUrn`]: draw a colour `z`, add the whole law of `z + eta`
//!   (deterministic replacement). The composition is kept as centres plus
//!   the kernel, so each step stays O(log n).
//!
//! Transporting an SRW composition through the kernel gives a DRW urn
//! process ([`lux_transport`]).

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, ConvolvedMeasure, Point};
use crate::offsets::OffsetDistribution;
use crate::rng::{run_replicates, Stream, Streams};

#[derive(Clone, Debug)]
pub struct SrwUrn {
    composition: AtomicMeasure,
    offset: OffsetDistribution,
    initial_atoms: usize,
    step: usize,
    history: Option<Vec<usize>>,
    scratch: Vec<f64>,
}

impl SrwUrn {
    pub fn new(mu0: AtomicMeasure, offset: OffsetDistribution) -> Result<Self> {
        if mu0.dim() != offset.dim() {
            return Err(Error::DimensionMismatch { expected: mu0.dim(), got: offset.dim() });
        }
        mu0.total_mass()?;
        let d = mu0.dim();
        Ok(SrwUrn { initial_atoms: mu0.len(), composition: mu0, offset, step: 0, history: None, scratch: vec![0.0; d] })
    }

    /// Keeps the index of every drawn ball.
    pub fn with_history(mut self) -> Self {
        self.history = Some(Vec::new());
        self
    }

    pub fn reserve(&mut self, steps: usize) {
        self.composition.reserve(steps);
    }

    pub fn composition(&self) -> &AtomicMeasure {
        &self.composition
    }

    pub fn offset(&self) -> &OffsetDistribution {
        &self.offset
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn history(&self) -> Option<&[usize]> {
        self.history.as_deref()
    }

    /// Composition after `k` steps (`k <= steps()`); atoms are only appended.
    pub fn composition_at(&self, k: usize) -> Result<AtomicMeasure> {
        if k > self.step {
            return Err(Error::param(format!("step {k} not reached yet (at {})", self.step)));
        }
        Ok(self.composition.prefix(self.initial_atoms + k))
    }

    /// One draw: the ball index comes from `select`, the offset from `offsets`.
    pub fn step<R1: Rng + ?Sized, R2: Rng>(&mut self, select: &mut R1, offsets: &mut R2) -> Result<()> {
        let i = self.composition.sample_index(select)?;
        self.offset.sample_into(offsets, &mut self.scratch);
        for (o, x) in self.scratch.iter_mut().zip(self.composition.point(i)) {
            *o += x;
        }
        self.composition.push_unchecked(&self.scratch, 1.0);
        if let Some(h) = self.history.as_mut() {
            h.push(i);
        }
        self.step += 1;
        Ok(())
    }

    pub fn run<R1: Rng + ?Sized, R2: Rng>(&mut self, steps: usize, select: &mut R1, offsets: &mut R2) -> Result<()> {
        self.reserve(steps);
        for _ in 0..steps {
            self.step(select, offsets)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DrwUrn {
    composition: ConvolvedMeasure,
    initial_centres: usize,
    step: usize,
    scratch: Vec<f64>,
}

impl DrwUrn {
    /// Urn started from `initial` (atoms plus kernel-shifted centres).
    pub fn new(initial: ConvolvedMeasure) -> Result<Self> {
        initial.total_mass()?;
        let d = initial.dim();
        Ok(DrwUrn { initial_centres: initial.shifted().len(), composition: initial, step: 0, scratch: vec![0.0; d] })
    }

    /// Urn started from the atomic measure `mu0`, replacement kernel `kernel`.
    pub fn from_atomic(mu0: AtomicMeasure, kernel: OffsetDistribution) -> Result<Self> {
        let empty = AtomicMeasure::new(mu0.dim())?;
        Self::new(ConvolvedMeasure::new(mu0, empty, kernel)?)
    }

    pub fn composition(&self) -> &ConvolvedMeasure {
        &self.composition
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    /// Centres `Z_1..Z_n` added so far.
    pub fn centres(&self) -> AtomicMeasure {
        let all = self.composition.shifted();
        let mut out = AtomicMeasure::with_capacity(all.dim(), self.step).expect("dimension already checked");
        for i in self.initial_centres..all.len() {
            out.push_unchecked(all.point(i), all.weight(i));
        }
        out
    }

    /// Draws `Z` from the composition and adds the law of `Z + eta`.
    pub fn step<R1: Rng + ?Sized, R2: Rng>(&mut self, select: &mut R1, offsets: &mut R2) -> Result<()> {
        let pick = self.composition.pick(select)?;
        self.composition.realize(pick, offsets, &mut self.scratch);
        self.composition.shifted.push_unchecked(&self.scratch, 1.0);
        self.step += 1;
        Ok(())
    }

    pub fn run<R1: Rng + ?Sized, R2: Rng>(&mut self, steps: usize, select: &mut R1, offsets: &mut R2) -> Result<()> {
        for _ in 0..steps {
            self.step(select, offsets)?;
        }
        Ok(())
    }
}

/// The SRW composition pushed through the replacement kernel.
pub fn lux_transport(srw: &SrwUrn) -> Result<ConvolvedMeasure> {
    srw.composition.kernel_compose(&srw.offset)
}

/// Same, at an earlier step of the trace.
pub fn lux_transport_at(srw: &SrwUrn, k: usize) -> Result<ConvolvedMeasure> {
    srw.composition_at(k)?.kernel_compose(&srw.offset)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub n: usize,
    /// The frequency actually used, `s / sqrt(log n)`.
    pub s_n: Point,
    pub median: f64,
    pub mean: f64,
    pub se: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftTable {
    pub rows: Vec<DriftRow>,
}

/// Gap `|normalized CF of urn a - normalized CF of urn b|` at `s / sqrt(log n)`
/// for SRW urns started from two initial measures of equal mass.
///
/// Both urns of a pair share the same random streams, so they grow the same
/// genealogy with the same offsets and differ only through their starting
/// colours.
pub fn initial_condition_drift(
    mu0_a: &AtomicMeasure,
    mu0_b: &AtomicMeasure,
    offset: &OffsetDistribution,
    n_grid: &[usize],
    s: &[f64],
    pairs: usize,
    streams: &Streams,
    workers: usize,
) -> Result<DriftTable> {
    let (ma, mb) = (mu0_a.total_mass()?, mu0_b.total_mass()?);
    if (ma - mb).abs() > 1e-12 * ma.max(mb) {
        return Err(Error::param(format!("initial masses differ: {ma} vs {mb}")));
    }
    if s.len() != offset.dim() || mu0_a.dim() != offset.dim() || mu0_b.dim() != offset.dim() {
        return Err(Error::DimensionMismatch { expected: offset.dim(), got: s.len() });
    }
    if pairs == 0 {
        return Err(Error::param("need at least one replicate pair"));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.first().is_none_or(|&n| n < 2) {
        return Err(Error::param("the n grid must be non-empty with n >= 2"));
    }
    let freqs: Vec<Vec<f64>> = grid.iter().map(|&n| s.iter().map(|x| x / (n as f64).ln().sqrt()).collect()).collect();
    let horizon = *grid.last().expect("non-empty");

    let gaps: Vec<Result<Vec<f64>>> = run_replicates(pairs, workers, |rep| {
        let mut a = SrwUrn::new(mu0_a.clone(), offset.clone())?;
        let mut b = SrwUrn::new(mu0_b.clone(), offset.clone())?;
        a.reserve(horizon);
        b.reserve(horizon);
        let (mut sel_a, mut off_a) = (streams.rng(rep, Stream::Tree), streams.rng(rep, Stream::Offsets));
        let (mut sel_b, mut off_b) = (sel_a.clone(), off_a.clone());
        let mut out = Vec::with_capacity(grid.len());
        let mut done = 0;
        for (&n, sn) in grid.iter().zip(&freqs) {
            a.run(n - done, &mut sel_a, &mut off_a)?;
            b.run(n - done, &mut sel_b, &mut off_b)?;
            done = n;
            out.push(normalized_gap(a.composition(), b.composition(), sn));
        }
        Ok(out)
    });
    let gaps: Vec<Vec<f64>> = gaps.into_iter().collect::<Result<_>>()?;

    let rows = grid
        .iter()
        .zip(freqs)
        .enumerate()
        .map(|(j, (&n, sn))| {
            let mut col: Vec<f64> = gaps.iter().map(|g| g[j]).collect();
            let mean = col.iter().sum::<f64>() / pairs as f64;
            let var = if pairs > 1 { col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (pairs - 1) as f64 } else { 0.0 };
            col.sort_by(f64::total_cmp);
            DriftRow { n, s_n: Point(sn), median: median_sorted(&col), mean, se: (var / pairs as f64).sqrt(), pairs }
        })
        .collect();
    Ok(DriftTable { rows })
}

fn normalized_gap(a: &AtomicMeasure, b: &AtomicMeasure, s: &[f64]) -> f64 {
    let fa: Complex64 = a.fourier(s) / a.mass();
    let fb: Complex64 = b.fourier(s) / b.mass();
    (fa - fb).norm()
}

fn median_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brw::{assign_labels, NodeSet};
    use crate::trees::grow_wrrt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn delta0(rho: f64) -> AtomicMeasure {
        AtomicMeasure::dirac(0.0, rho).unwrap()
    }

    #[test]
    fn unit_steps_stay_below_depth() {
        let mut urn = SrwUrn::new(delta0(1.0), OffsetDistribution::point(1.0).unwrap()).unwrap();
        urn.run(3, &mut rng(1), &mut rng(2)).unwrap();
        assert!(urn.composition().atoms().all(|(x, _)| [0.0, 1.0, 2.0, 3.0].contains(&x[0])));
    }

    #[test]
    fn mass_bookkeeping() {
        let eta = OffsetDistribution::normal(0.0, 1.0).unwrap();
        for rho in [0.4, 1.0, 3.0] {
            let mut srw = SrwUrn::new(delta0(rho), eta.clone()).unwrap();
            let mut drw = DrwUrn::from_atomic(delta0(rho), eta.clone()).unwrap();
            let (mut a, mut b) = (rng(3), rng(4));
            for n in 1..=200 {
                srw.step(&mut a, &mut b).unwrap();
                drw.step(&mut a, &mut b).unwrap();
                assert!((srw.composition().mass() - (rho + n as f64)).abs() < 1e-9);
                assert!((drw.composition().mass() - (rho + n as f64)).abs() < 1e-9);
                assert_eq!(lux_transport(&srw).unwrap().mass(), srw.composition().mass());
            }
        }
    }

    #[test]
    fn srw_trace_equals_wrrt_walk_bit_for_bit() {
        let eta = OffsetDistribution::normal(0.3, 1.7).unwrap();
        for rho in [1.0, 2.5] {
            let n = 2_000;
            let tree = grow_wrrt(n, rho, &mut rng(10)).unwrap();
            let lt = assign_labels(tree, &eta, &mut rng(11));
            let walk = lt.empirical_measure(NodeSet::All).unwrap();

            let mut urn = SrwUrn::new(delta0(rho), eta.clone()).unwrap();
            let mut off = rng(11);
            // The labelling draws a root offset it never uses.
            eta.sample(&mut off);
            urn.run(n, &mut rng(10), &mut off).unwrap();
            let bits = |m: &AtomicMeasure| m.coords().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(urn.composition()), bits(&walk));
            assert_eq!(urn.composition().weights(), walk.weights());
        }
    }

    #[test]
    fn drw_centres_are_srw_draws() {
        let unit = OffsetDistribution::point(1.0).unwrap();
        let rho = 2.0;
        let mut srw = SrwUrn::new(delta0(rho), unit.clone()).unwrap().with_history();
        let mut drw = DrwUrn::from_atomic(delta0(rho), unit).unwrap();
        srw.run(500, &mut rng(5), &mut rng(6)).unwrap();
        drw.run(500, &mut rng(5), &mut rng(6)).unwrap();
        let drawn: Vec<f64> = srw.history().unwrap().iter().map(|&i| srw.composition().point(i)[0]).collect();
        let centres: Vec<f64> = drw.centres().coords().to_vec();
        assert_eq!(drawn, centres);
    }

    #[test]
    fn drw_fourier_identity() {
        let eta = OffsetDistribution::normal(0.2, 0.5).unwrap();
        let mu0 = AtomicMeasure::from_atoms(1, [([0.0], 1.0), ([3.0], 0.5)]).unwrap();
        let mut drw = DrwUrn::from_atomic(mu0.clone(), eta.clone()).unwrap();
        drw.run(300, &mut rng(7), &mut rng(8)).unwrap();
        for s in [-1.0, 0.0, 0.3, 2.0] {
            let direct = mu0.fourier(&[s]) + eta.cf(&[s]) * drw.centres().fourier(&[s]);
            assert!((drw.composition().fourier(&[s]).unwrap() - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn point_kernel_transport_is_a_shift() {
        let c = 0.75;
        let mut urn = SrwUrn::new(delta0(1.0), OffsetDistribution::point(c).unwrap()).unwrap();
        urn.run(100, &mut rng(1), &mut rng(2)).unwrap();
        let lux = lux_transport(&urn).unwrap();
        let shifted = AtomicMeasure::from_atoms(1, urn.composition().atoms().map(|(x, w)| ([x[0] + c], w))).unwrap();
        for s in [0.1, 0.5, 1.3] {
            assert!((lux.fourier(&[s]).unwrap() - shifted.fourier(&[s])).norm() < 1e-9);
        }
        assert_eq!(lux_transport_at(&urn, 0).unwrap().mass(), 1.0);
        assert!(lux_transport_at(&urn, 101).is_err());
    }

    #[test]
    fn lux_transport_matches_direct_drw_in_mean() {
        let eta = OffsetDistribution::normal(0.0, 1.0).unwrap();
        let streams = Streams::new(2024);
        let reps = 2_000;
        let n = 40;
        let s = [0.3];
        let mut lux = Vec::with_capacity(reps);
        let mut direct = Vec::with_capacity(reps);
        for r in 0..reps as u64 {
            let mut srw = SrwUrn::new(delta0(1.0), eta.clone()).unwrap();
            srw.run(n, &mut streams.rng(r, Stream::Tree), &mut streams.rng(r, Stream::Offsets)).unwrap();
            lux.push(lux_transport(&srw).unwrap().fourier(&s).unwrap());
            let start = delta0(1.0).kernel_compose(&eta).unwrap();
            let mut drw = DrwUrn::new(start).unwrap();
            drw.run(n, &mut streams.rng(r, Stream::Clock), &mut streams.rng(r, Stream::Aux)).unwrap();
            direct.push(drw.composition().fourier(&s).unwrap());
        }
        for part in [|z: &Complex64| z.re, |z: &Complex64| z.im] {
            let a: Vec<f64> = lux.iter().map(part).collect();
            let b: Vec<f64> = direct.iter().map(part).collect();
            let (ma, va) = mean_var(&a);
            let (mb, vb) = mean_var(&b);
            let se = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
            assert!((ma - mb).abs() <= 4.0 * se + 1e-12, "{ma} vs {mb}, se {se}");
        }
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64)
    }

    #[test]
    fn drift_edge_cases() {
        let eta = OffsetDistribution::point(1.0).unwrap();
        let streams = Streams::new(1);
        let a = delta0(1.0);
        let b = AtomicMeasure::dirac(10.0, 1.0).unwrap();
        let heavy = AtomicMeasure::dirac(10.0, 2.0).unwrap();
        assert!(initial_condition_drift(&a, &heavy, &eta, &[10], &[0.3], 5, &streams, 1).is_err());
        assert!(initial_condition_drift(&a, &b, &eta, &[1], &[0.3], 5, &streams, 1).is_err());
        let same = initial_condition_drift(&a, &a, &eta, &[10, 100], &[0.3], 20, &streams, 1).unwrap();
        assert!(same.rows.iter().all(|r| r.mean == 0.0));
        let zero = initial_condition_drift(&a, &b, &eta, &[10, 100], &[0.0], 20, &streams, 1).unwrap();
        assert!(zero.rows.iter().all(|r| r.mean == 0.0 && r.median == 0.0));
    }

    #[test]
    fn drift_shrinks_with_n() {
        let eta = OffsetDistribution::point(1.0).unwrap();
        let table = initial_condition_drift(
            &delta0(1.0),
            &AtomicMeasure::dirac(10.0, 1.0).unwrap(),
            &eta,
            &[100, 1_000],
            &[0.3],
            50,
            &Streams::new(9),
            1,
        )
        .unwrap();
        assert!(table.rows[1].median < table.rows[0].median);
    }
}
