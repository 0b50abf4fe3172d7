//! Normalized Hermite polynomials H_n (orthonormal under the standard normal
//! density, with H_1(y) = -y), shift/stretch expansions, and the series form
//! of the conditional mean.
//!
//! All evaluation goes through the three-term recurrence
//! `√(n+1)·H_{n+1}(y) + y·H_n(y) + √n·H_{n-1}(y) = 0`.

use crate::error::{Error, Result};

/// Highest polynomial degree accepted anywhere in the crate.
pub const MAX_DEGREE: usize = 300;

/// H_n(y).
pub fn eval(n: usize, y: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = next_term(k, y, cur, prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// H_0(y), ..., H_N(y).
pub fn batch(max_degree: usize, y: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_degree + 1);
    let mut prev = 0.0;
    let mut cur = 1.0;
    out.push(cur);
    for k in 0..max_degree {
        let next = next_term(k, y, cur, prev);
        prev = cur;
        cur = next;
        out.push(cur);
    }
    out
}

#[inline]
fn next_term(k: usize, y: f64, cur: f64, prev: f64) -> f64 {
    let kf = k as f64;
    -(y * cur) / (kf + 1.0).sqrt() - (kf / (kf + 1.0)).sqrt() * prev
}

/// s^p·H_p(a/s) for p = 0..=max_degree.
///
/// This is a polynomial in (a, s²), so it stays finite as s → 0, where it
/// tends to (-a)^p/√p!.
pub fn scaled_batch(max_degree: usize, a: f64, s: f64) -> Vec<f64> {
    let s2 = s * s;
    let mut out = Vec::with_capacity(max_degree + 1);
    let mut prev = 0.0;
    let mut cur = 1.0;
    out.push(cur);
    for k in 0..max_degree {
        let kf = k as f64;
        let next = -(a * cur) / (kf + 1.0).sqrt() - s2 * (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        out.push(cur);
    }
    out
}

/// Coefficients c_0..c_p such that H_p(a + b·y) = Σ c_n·H_n(y), for 0 ≤ b ≤ 1:
/// c_n = √C(p,n)·(1-b²)^{(p-n)/2}·b^n·H_{p-n}(a/√(1-b²)).
///
/// At b = 1 the factor (1-b²)^{(p-n)/2}·H_{p-n}(a/√(1-b²)) is taken at its
/// limit (-a)^{p-n}/√(p-n)!, which reduces to the identity when a = 0.
pub fn shift_stretch(p: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    check_scale(b)?;
    check_degree(p)?;
    let s = (1.0 - b * b).max(0.0).sqrt();
    let scaled = scaled_batch(p, a, s);
    let mut coeffs = Vec::with_capacity(p + 1);
    let mut binom = 1.0_f64;
    let mut b_pow = 1.0_f64;
    for n in 0..=p {
        if n > 0 {
            binom *= (p - n + 1) as f64 / n as f64;
            b_pow *= b;
        }
        coeffs.push(binom.sqrt() * b_pow * scaled[p - n]);
    }
    Ok(coeffs)
}

fn check_scale(b: f64) -> Result<()> {
    if (0.0..=1.0).contains(&b) {
        Ok(())
    } else {
        Err(Error::ScaleOutOfRange(b))
    }
}

fn check_degree(p: usize) -> Result<()> {
    if p > MAX_DEGREE {
        Err(Error::DegreeTooLarge(p))
    } else {
        Ok(())
    }
}

/// Truncated expansion φ(y) ≈ Σ_{p≤P} φ_p·H_p(y).
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteSeries {
    coeffs: Vec<f64>,
}

impl HermiteSeries {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidInput("empty hermite series".into()));
        }
        check_degree(coeffs.len() - 1)?;
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite hermite coefficient {bad}"
            )));
        }
        Ok(HermiteSeries { coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, y: f64) -> f64 {
        batch(self.degree(), y)
            .iter()
            .zip(&self.coeffs)
            .map(|(h, c)| h * c)
            .sum()
    }

    /// φ'(y) = -Σ_{p≥1} φ_p·√p·H_{p-1}(y).
    pub fn derivative(&self, y: f64) -> f64 {
        let h = batch(self.degree(), y);
        -self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(p, c)| c * (p as f64).sqrt() * h[p - 1])
            .sum::<f64>()
    }

    /// E[φ(Y)] for Y ~ N(y*, σ²_SK):
    /// Σ_p φ_p·(1-σ²_SK)^{p/2}·H_p(y*/√(1-σ²_SK)).
    pub fn conditional_mean(&self, y_star: f64, sigma_sk: f64) -> Result<f64> {
        check_scale(sigma_sk)?;
        let s = (1.0 - sigma_sk * sigma_sk).max(0.0).sqrt();
        if s == 0.0 {
            // No conditioning information: only the prior mean survives.
            return Ok(self.coeffs[0]);
        }
        Ok(scaled_batch(self.degree(), y_star, s)
            .iter()
            .zip(&self.coeffs)
            .map(|(k, c)| k * c)
            .sum())
    }
}
