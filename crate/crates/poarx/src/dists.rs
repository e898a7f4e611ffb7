//! Scalar Poisson primitives: log-pmf, CDF, quantile, and sampling.
//!
//! Counts are `u64`, intensities are strictly positive finite `f64`. The CDF
//! is a compensated forward sum of pmf terms rather than an incomplete-gamma
//! call; the quantile walks the same sum, so `quantile(cdf(y)) == y` holds
//! exactly along the scanned range.

use rand::Rng;

use crate::error::{Error, Result};

/// ln(y!) for y = 0..=20, correctly rounded.
const LN_FACTORIAL: [f64; 21] = [
    0.0,
    0.0,
    std::f64::consts::LN_2,
    1.791759469228055,
    3.1780538303479458,
    4.787491742782046,
    6.579251212010101,
    8.525161361065415,
    10.60460290274525,
    12.801827480081469,
    15.104412573075516,
    17.502307845873887,
    19.987214495661885,
    22.552163853123425,
    25.19122118273868,
    27.89927138384089,
    30.671860106080672,
    33.50507345013689,
    36.39544520803305,
    39.339884187199495,
    42.335616460753485,
];

/// Intensity threshold under which sampling inverts the CDF directly.
const INVERSION_MAX_LAMBDA: f64 = 30.0;

/// ln(y!), exact table for y ≤ 20 and log-gamma beyond.
pub fn ln_factorial(y: u64) -> f64 {
    if y <= 20 {
        LN_FACTORIAL[y as usize]
    } else {
        statrs::function::gamma::ln_gamma(y as f64 + 1.0)
    }
}

/// A Poisson distribution with validated intensity λ > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poisson {
    lambda: f64,
}

impl Poisson {
    /// Requires a finite, strictly positive intensity.
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::domain(format!(
                "Poisson intensity must be finite and > 0, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// log P(Y = y) = −λ + y·ln λ − ln(y!).
    pub fn log_pmf(&self, y: u64) -> f64 {
        if y == 0 {
            return -self.lambda;
        }
        -self.lambda + y as f64 * self.lambda.ln() - ln_factorial(y)
    }

    pub fn pmf(&self, y: u64) -> f64 {
        self.log_pmf(y).exp()
    }

    /// P(Y ≤ y) by compensated forward summation of pmf terms.
    pub fn cdf(&self, y: u64) -> f64 {
        let mut sum = KahanSum::new();
        for k in 0..=y {
            sum.add(self.pmf(k));
        }
        sum.value().min(1.0)
    }

    /// CDF extended by the convention F(−1) = 0, used for rectangle
    /// differencing at the zero boundary.
    pub fn cdf_signed(&self, y: i64) -> f64 {
        if y < 0 {
            0.0
        } else {
            self.cdf(y as u64)
        }
    }

    /// Smallest y with F(y) ≥ u. Requires 0 ≤ u < 1.
    pub fn quantile(&self, u: f64) -> Result<u64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::domain(format!(
                "quantile probability must lie in [0, 1), got {u}"
            )));
        }
        let mut sum = KahanSum::new();
        // Beyond this point the remaining tail mass is far below f64
        // resolution; the scan terminates there if u sits in that tail.
        let cap = (self.lambda + 15.0 * self.lambda.sqrt() + 200.0).ceil() as u64;
        for k in 0..cap {
            sum.add(self.pmf(k));
            if sum.value() >= u {
                return Ok(k);
            }
        }
        Ok(cap)
    }

    /// Smallest y with 1 − F(y) < `tail`; truncation point for pmf vectors.
    pub fn truncation_point(&self, tail: f64) -> u64 {
        self.quantile((1.0 - tail).clamp(0.0, 1.0 - 1e-16))
            .expect("truncation probability is in [0, 1)")
    }

    /// Draw a count: CDF inversion for small λ, transformed rejection
    /// (Hörmann's PTRS) for large λ.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.lambda <= INVERSION_MAX_LAMBDA {
            let u: f64 = rng.random();
            self.quantile(u).expect("uniform draw is in [0, 1)")
        } else {
            self.sample_ptrs(rng)
        }
    }

    fn sample_ptrs<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let lambda = self.lambda;
        let log_lambda = lambda.ln();
        let b = 0.931 + 2.53 * lambda.sqrt();
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let v_r = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u: f64 = rng.random::<f64>() - 0.5;
            let v: f64 = rng.random();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
            if us >= 0.07 && v <= v_r {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let accept = (v * inv_alpha / (a / (us * us) + b)).ln()
                <= k * log_lambda - lambda - ln_factorial(k as u64);
            if accept {
                return k as u64;
            }
        }
    }
}

/// Compensated (Kahan) accumulator for long sums of small terms.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(&mut self, term: f64) {
        let y = term - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}
