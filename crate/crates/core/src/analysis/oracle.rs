//! Closed-form first and second moments of the characteristic sums
//! `F(s) = sum_v w_v exp(i s . X_v)`.
//!
//! Discrete-time moments are computed by their defining one-step
//! recursions, which keeps everything in complex arithmetic without Gamma
//! functions of complex argument. Gamma-ratio forms are available as real
//! cross-checks when the characteristic function is real.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::measures::Point;
use crate::offsets::{OffsetDistribution, PairedOffset};

/// Second-moment denominators below this are refused.
pub const MIN_DENOMINATOR: f64 = 1e-6;
/// Martingale denominators below this are refused.
pub const MIN_EXPECTATION: f64 = 1e-300;
/// Longest discrete recursion the oracle will run.
pub const MAX_RECURSION: usize = 100_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Weighted Yule tree, time `t`.
    Continuous,
    /// Weighted random recursive tree, size `n`.
    Discrete,
    /// External nodes of a binary Yule tree, time `t`.
    BinaryExternal,
}

#[derive(Clone, Debug, PartialEq)]
enum Law {
    Single(OffsetDistribution),
    Paired(PairedOffset),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentOracle {
    law: Law,
    rho: f64,
    mode: OracleMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSample {
    pub s: Point,
    pub value: Complex64,
    /// `t` or `n`.
    pub time: f64,
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("time must be finite and >= 0, got {t}")))
    }
}

impl MomentOracle {
    pub fn yule(offset: OffsetDistribution, rho: f64) -> Result<Self> {
        Self::single(offset, rho, OracleMode::Continuous)
    }

    pub fn rrt(offset: OffsetDistribution, rho: f64) -> Result<Self> {
        Self::single(offset, rho, OracleMode::Discrete)
    }

    pub fn binary(pair: PairedOffset) -> Result<Self> {
        Ok(MomentOracle { law: Law::Paired(pair), rho: 1.0, mode: OracleMode::BinaryExternal })
    }

    fn single(offset: OffsetDistribution, rho: f64, mode: OracleMode) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::param(format!("root weight must be > 0, got {rho}")));
        }
        offset.try_cf(&vec![0.0; offset.dim()])?;
        Ok(MomentOracle { law: Law::Single(offset), rho, mode })
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        match &self.law {
            Law::Single(d) => d.dim(),
            Law::Paired(p) => p.dim(),
        }
    }

    /// The exponent rate: the offset CF, or `phi_L + phi_R - 1` for pairs.
    pub fn phi(&self, s: &[f64]) -> Result<Complex64> {
        if s.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: s.len() });
        }
        match &self.law {
            Law::Single(d) => d.try_cf(s),
            Law::Paired(p) => Ok(p.tilde_cf(s)),
        }
    }

    /// Covariance of the Gaussian limit: `E[eta eta^T]`, or the sum over both
    /// sides for pairs.
    pub fn limit_covariance(&self) -> Result<Vec<f64>> {
        match &self.law {
            Law::Single(d) => d.second_moment().map(<[f64]>::to_vec),
            Law::Paired(p) => p.second_moment().map(<[f64]>::to_vec),
        }
    }

    pub fn limit_mean(&self) -> Result<Point> {
        match &self.law {
            Law::Single(d) => d.mean().cloned(),
            Law::Paired(p) => p.mean().cloned(),
        }
    }

    /// Whether `s` lies in the neighbourhood of 0 along its own direction on
    /// which the real part of the rate stays at least 3/4.
    pub fn in_domain(&self, s: &[f64]) -> Result<bool> {
        let r = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            return Ok(true);
        }
        Ok(self.domain_radius(s)? >= r)
    }

    /// Radius of the domain along the direction of `s`.
    pub fn domain_radius(&self, direction: &[f64]) -> Result<f64> {
        let dom = match &self.law {
            Law::Single(d) => d.cf_domain(direction)?,
            Law::Paired(p) => p.cf_domain(direction)?,
        };
        Ok(dom.delta)
    }

    fn require_domain(&self, s: &[f64]) -> Result<()> {
        if self.in_domain(s)? {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "s = {s:?} lies outside the domain (radius {:.6} along its direction); use a smaller s",
                self.domain_radius(s)?
            )))
        }
    }

    fn denominator(&self, s1: &[f64], s2: &[f64]) -> Result<Complex64> {
        self.require_domain(s1)?;
        self.require_domain(s2)?;
        let den = self.phi(s1)? + self.phi(s2)? - self.phi(&add(s1, s2))?;
        if den.norm() < MIN_DENOMINATOR {
            return Err(Error::Domain(format!("second-moment denominator {den} is too small; shrink s")));
        }
        Ok(den)
    }

    /// `rho exp(t phi(s))`.
    pub fn expected_f_yule(&self, t: f64, s: &[f64]) -> Result<Complex64> {
        check_time(t)?;
        Ok(self.rho * (self.phi(s)? * t).exp())
    }

    /// `rho^2 e^{t(a+b)} + rho c / (a+b-c) (e^{t(a+b)} - e^{tc})` with
    /// `a, b, c = phi(s1), phi(s2), phi(s1+s2)`.
    pub fn expected_ff_yule(&self, t: f64, s1: &[f64], s2: &[f64]) -> Result<Complex64> {
        check_time(t)?;
        let den = self.denominator(s1, s2)?;
        let (a, b, cc) = (self.phi(s1)?, self.phi(s2)?, self.phi(&add(s1, s2))?);
        let grow = ((a + b) * t).exp();
        Ok(self.rho * self.rho * grow + self.rho * cc / den * (grow - (cc * t).exp()))
    }

    /// `rho prod_{k<n} (k + rho + phi(s)) / (k + rho)`; exactly `n + rho` when `phi(s) = 1`.
    pub fn expected_f_rrt(&self, n: usize, s: &[f64]) -> Result<Complex64> {
        if n > MAX_RECURSION {
            return Err(Error::param(format!("n = {n} exceeds the recursion cap {MAX_RECURSION}")));
        }
        let phi = self.phi(s)?;
        Ok(self.f_rrt_with(n, phi))
    }

    fn f_rrt_with(&self, n: usize, phi: Complex64) -> Complex64 {
        if phi == c(1.0) {
            return c(n as f64 + self.rho);
        }
        let mut acc = c(self.rho);
        for k in 0..n {
            let base = k as f64 + self.rho;
            acc *= (base + phi) / base;
        }
        acc
    }

    /// Forward recursion for `E F_n(s1) F_n(s2)`, seeded at `rho^2`.
    pub fn expected_ff_rrt(&self, n: usize, s1: &[f64], s2: &[f64]) -> Result<Complex64> {
        if n > MAX_RECURSION {
            return Err(Error::param(format!("n = {n} exceeds the recursion cap {MAX_RECURSION}")));
        }
        let (a, b, cc) = (self.phi(s1)?, self.phi(s2)?, self.phi(&add(s1, s2))?);
        if a == c(1.0) && b == c(1.0) {
            let m = n as f64 + self.rho;
            return Ok(c(m * m));
        }
        let mut second = c(self.rho * self.rho);
        let mut first = c(self.rho);
        for k in 0..n {
            let base = k as f64 + self.rho;
            second = second * (base + a + b) / base + cc * first / base;
            first *= (base + cc) / base;
        }
        Ok(second)
    }

    fn real_rates(&self, ss: &[&[f64]]) -> Result<Vec<f64>> {
        ss.iter()
            .map(|s| {
                let z = self.phi(s)?;
                if z.im.abs() > 1e-15 {
                    Err(Error::Unsupported("Gamma-ratio form needs a real characteristic function".into()))
                } else {
                    Ok(z.re)
                }
            })
            .collect()
    }

    /// `rho Gamma(n+rho+a) Gamma(rho) / (Gamma(n+rho) Gamma(rho+a))` for real `a = phi(s)`.
    pub fn expected_f_rrt_gamma(&self, n: usize, s: &[f64]) -> Result<f64> {
        let a = self.real_rates(&[s])?[0];
        let rho = self.rho;
        if rho + a <= 0.0 {
            return Err(Error::Domain("Gamma arguments must be positive".into()));
        }
        let n = n as f64;
        Ok(rho * (ln_gamma(n + rho + a) + ln_gamma(rho) - ln_gamma(n + rho) - ln_gamma(rho + a)).exp())
    }

    /// Gamma-ratio closed form of the discrete second moment for real rates:
    ///
    /// `G(n+rho+a+b)/G(n+rho) [rho^2 G(rho)/G(rho+a+b)
    ///   + sum_{k=1}^n G(k+rho+c-1)/G(k+rho+a+b) G(rho+1) c / G(rho+c)]`.
    pub fn expected_ff_rrt_gamma(&self, n: usize, s1: &[f64], s2: &[f64]) -> Result<f64> {
        let sum = add(s1, s2);
        let r = self.real_rates(&[s1, s2, &sum])?;
        let (ab, cc, rho) = (r[0] + r[1], r[2], self.rho);
        if rho + ab <= 0.0 || rho + cc <= 0.0 {
            return Err(Error::Domain("Gamma arguments must be positive".into()));
        }
        let nf = n as f64;
        let lead = ln_gamma(nf + rho + ab) - ln_gamma(nf + rho);
        let mut total = rho * rho * (lead + ln_gamma(rho) - ln_gamma(rho + ab)).exp();
        let coef = ln_gamma(rho + 1.0) - ln_gamma(rho + cc);
        for k in 1..=n {
            let kf = k as f64;
            total += cc * (lead + ln_gamma(kf + rho + cc - 1.0) - ln_gamma(kf + rho + ab) + coef).exp();
        }
        Ok(total)
    }

    /// `exp(t tilde_phi(s))`, expected external characteristic sum of a binary Yule tree.
    pub fn expected_fe_binary(&self, t: f64, s: &[f64]) -> Result<Complex64> {
        check_time(t)?;
        self.require_paired()?;
        Ok((self.phi(s)? * t).exp())
    }

    /// `(J(s1,s2) + J(s2,s1)) / D e^{t(a+b)} - psi / D e^{tc}`, with `J` the
    /// joint CF of the pair and `a, b, c` the tilde rates at `s1, s2, s1+s2`.
    pub fn expected_fefe_binary(&self, t: f64, s1: &[f64], s2: &[f64]) -> Result<Complex64> {
        check_time(t)?;
        let pair = self.require_paired()?;
        let den = self.denominator(s1, s2)?;
        let (a, b, cc) = (self.phi(s1)?, self.phi(s2)?, self.phi(&add(s1, s2))?);
        let cross = pair.joint_cf(s1, s2) + pair.joint_cf(s2, s1);
        Ok(cross / den * ((a + b) * t).exp() - pair.psi(s1, s2) / den * (cc * t).exp())
    }

    fn require_paired(&self) -> Result<&PairedOffset> {
        match &self.law {
            Law::Paired(p) => Ok(p),
            Law::Single(_) => Err(Error::param("binary moments need a paired offset")),
        }
    }

    /// `E F(s)` at time `t` (or size `n = t`) in this oracle's mode.
    pub fn expected_f(&self, time: f64, s: &[f64]) -> Result<Complex64> {
        match self.mode {
            OracleMode::Continuous => self.expected_f_yule(time, s),
            OracleMode::Discrete => self.expected_f_rrt(discrete_time(time)?, s),
            OracleMode::BinaryExternal => self.expected_fe_binary(time, s),
        }
    }

    /// `E F(s1) F(s2)` in this oracle's mode.
    pub fn expected_ff(&self, time: f64, s1: &[f64], s2: &[f64]) -> Result<Complex64> {
        match self.mode {
            OracleMode::Continuous => self.expected_ff_yule(time, s1, s2),
            OracleMode::Discrete => self.expected_ff_rrt(discrete_time(time)?, s1, s2),
            OracleMode::BinaryExternal => self.expected_fefe_binary(time, s1, s2),
        }
    }

    /// `M(s) = F(s) / E F(s)` for an observed characteristic sum `f`.
    pub fn martingale_value(&self, f: Complex64, time: f64, s: &[f64]) -> Result<MartingaleSample> {
        let ef = self.expected_f(time, s)?;
        if !(ef.norm() >= MIN_EXPECTATION) {
            return Err(Error::Overflow(format!("|E F| = {} is below {MIN_EXPECTATION}", ef.norm())));
        }
        Ok(MartingaleSample { s: Point::from(s), value: f / ef, time })
    }
}

fn discrete_time(time: f64) -> Result<usize> {
    if time >= 0.0 && time.fract() == 0.0 && time <= MAX_RECURSION as f64 {
        Ok(time as usize)
    } else {
        Err(Error::param(format!("discrete size must be a non-negative integer, got {time}")))
    }
}
