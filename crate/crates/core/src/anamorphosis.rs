//! Gaussian anamorphosis z = φ(y): the monotone map from a standard normal
//! score to the raw variable, with its inverse and derivative.

use crate::error::{Error, Result};
use crate::gauss;
use crate::hermite::{self, HermiteSeries};

/// Gaussian coordinate where empirical tails reach their configured bounds.
pub const TAIL_Y: f64 = 8.0;
/// Gaussian domain checked for monotonicity of analytic and empirical forms.
pub const CHECK_DOMAIN: (f64, f64) = (-TAIL_Y, TAIL_Y);
/// Gaussian domain on which a Hermite form uses its series; beyond it the
/// form continues linearly with the boundary slope.
pub const HERMITE_DOMAIN: (f64, f64) = (-6.0, 6.0);
/// Largest Gaussian error that rounding in the series may cause when it is
/// inverted; the series domain shrinks until this holds at its ends.
pub const HERMITE_INVERSE_TOL: f64 = 1e-10;
/// Step of that shrinking.
const HERMITE_TRIM_STEP: f64 = 0.01;
/// Grid size of the monotonicity check.
pub const CHECK_POINTS: usize = 10_000;
/// Nodes of the Gauss–Hermite rule used for series coefficients.
pub const HERMITE_FIT_NODES: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum Anamorphosis {
    /// φ(y) = e^{μ + σy}.
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    /// φ(y) = -ln(1 - G(y))/λ.
    Exponential {
        lambda: f64,
    },
    Empirical(EmpiricalTable),
    Hermite(HermiteForm),
}

/// Piecewise-linear anamorphosis through (z_k, y_k) with linear tails.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTable {
    z: Vec<f64>,
    y: Vec<f64>,
    z_min: f64,
    z_max: f64,
    y_low: f64,
    y_high: f64,
}

/// Truncated Hermite expansion on a checked Gaussian domain, with linear
/// continuation outside it (a truncated series oscillates in the far tails).
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteForm {
    series: HermiteSeries,
    y_range: (f64, f64),
    z_range: (f64, f64),
    slopes: (f64, f64),
}

/// Tail bounds for `fit_empirical`; `None` picks the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TailBounds {
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
}

impl Anamorphosis {
    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lognormal needs finite mu and sigma > 0 (got {mu}, {sigma})"
            )));
        }
        Ok(Anamorphosis::Lognormal { mu, sigma })
    }

    pub fn exponential(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidInput(format!(
                "exponential needs lambda > 0 (got {lambda})"
            )));
        }
        Ok(Anamorphosis::Exponential { lambda })
    }

    /// Hermite form from explicit coefficients, checked for monotonicity on
    /// `HERMITE_DOMAIN`.
    pub fn hermite(series: HermiteSeries) -> Result<Self> {
        HermiteForm::new(series, HERMITE_DOMAIN).map(Anamorphosis::Hermite)
    }

    /// Normal-score table from raw values with optional declustering weights.
    ///
    /// Each sorted value gets the centered cumulative weight p_k, and its score
    /// is G⁻¹(p_k); tied values share the average score of their block.
    pub fn fit_empirical(
        values: &[f64],
        weights: Option<&[f64]>,
        tails: TailBounds,
    ) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample value".into()));
        }
        let n = values.len();
        let uniform;
        let weights = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "{} weights for {n} values",
                        w.len()
                    )));
                }
                if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::InvalidInput("weights must be >= 0".into()));
                }
                let total: f64 = w.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "weights sum to {total}, expected 1"
                    )));
                }
                w
            }
            None => {
                uniform = vec![1.0 / n.max(1) as f64; n];
                &uniform[..]
            }
        };
        // Zero-weight samples carry no probability mass.
        let mut order: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
        if order.len() < 2 {
            return Err(Error::DegenerateData(
                "need at least two weighted values".into(),
            ));
        }
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

        let mut z = Vec::new();
        let mut y = Vec::new();
        let mut cumulative = 0.0;
        let mut i = 0;
        while i < order.len() {
            let value = values[order[i]];
            let mut score_sum = 0.0;
            let mut count = 0usize;
            while i < order.len() && values[order[i]] == value {
                let w = weights[order[i]];
                score_sum += gauss::quantile(cumulative + 0.5 * w);
                cumulative += w;
                count += 1;
                i += 1;
            }
            z.push(value);
            y.push(score_sum / count as f64);
        }
        if z.len() < 2 {
            return Err(Error::DegenerateData("all values are equal".into()));
        }
        let (lo, hi) = (z[0], z[z.len() - 1]);
        let spread = hi - lo;
        let z_min = tails.z_min.unwrap_or(lo - 0.01 * spread);
        let z_max = tails.z_max.unwrap_or(if hi > 0.0 {
            1.5 * hi
        } else {
            hi + 0.5 * spread
        });
        if !(z_min < lo && z_max > hi) {
            return Err(Error::InvalidInput(format!(
                "tail bounds ({z_min}, {z_max}) must enclose the data range ({lo}, {hi})"
            )));
        }
        let y_low = (-TAIL_Y).min(y[0] - 1.0);
        let y_high = TAIL_Y.max(y[y.len() - 1] + 1.0);
        Ok(Anamorphosis::Empirical(EmpiricalTable {
            z,
            y,
            z_min,
            z_max,
            y_low,
            y_high,
        }))
    }

    /// Hermite expansion of this anamorphosis to degree `degree`, with
    /// coefficients φ_n = ∫φ(y)H_n(y)g(y)dy by Gauss–Hermite quadrature.
    pub fn fit_hermite(&self, degree: usize) -> Result<Self> {
        let coeffs = self.hermite_coefficients(degree)?;
        Anamorphosis::hermite(HermiteSeries::new(coeffs)?)
    }

    /// φ_0..φ_P without building (or checking) a Hermite form.
    pub fn hermite_coefficients(&self, degree: usize) -> Result<Vec<f64>> {
        if degree == 0 {
            return Err(Error::InvalidInput("hermite degree must be >= 1".into()));
        }
        if degree > hermite::MAX_DEGREE {
            return Err(Error::DegreeTooLarge(degree));
        }
        let rule = gauss::rule(HERMITE_FIT_NODES);
        let mut coeffs = vec![0.0; degree + 1];
        for (t, w) in rule.iter().filter(|&(_, w)| w > 0.0) {
            let wf = w * self.backward(t);
            for (c, h) in coeffs.iter_mut().zip(hermite::batch(degree, t)) {
                *c += wf * h;
            }
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::QuadratureFailure(
                "non-finite hermite coefficient".into(),
            ));
        }
        if coeffs[degree].abs() > coeffs[1].abs() {
            return Err(Error::QuadratureFailure(format!(
                "hermite coefficients do not decay: |φ_{degree}| = {:e} > |φ_1| = {:e}",
                coeffs[degree].abs(),
                coeffs[1].abs()
            )));
        }
        Ok(coeffs)
    }

    /// φ(y).
    pub fn backward(&self, y: f64) -> f64 {
        match self {
            Anamorphosis::Lognormal { mu, sigma } => (mu + sigma * y).exp(),
            Anamorphosis::Exponential { lambda } => -gauss::log_sf(y) / lambda,
            Anamorphosis::Empirical(t) => t.backward(y),
            Anamorphosis::Hermite(h) => h.backward(y),
        }
    }

    /// φ⁻¹(z).
    pub fn forward(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::OutOfSupport(z));
        }
        match self {
            Anamorphosis::Lognormal { mu, sigma } => {
                if z > 0.0 {
                    Ok((z.ln() - mu) / sigma)
                } else {
                    Err(Error::OutOfSupport(z))
                }
            }
            Anamorphosis::Exponential { lambda } => {
                if z <= 0.0 {
                    return Err(Error::OutOfSupport(z));
                }
                let p = -(-lambda * z).exp_m1();
                if p < 0.5 {
                    Ok(gauss::quantile(p))
                } else {
                    Ok(gauss::upper_quantile((-lambda * z).exp()))
                }
            }
            Anamorphosis::Empirical(t) => t.forward(z),
            Anamorphosis::Hermite(h) => h.forward(z),
        }
    }

    /// φ'(y).
    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            Anamorphosis::Lognormal { mu, sigma } => sigma * (mu + sigma * y).exp(),
            Anamorphosis::Exponential { lambda } => 1.0 / (lambda * gauss::mills_ratio(y)),
            Anamorphosis::Empirical(t) => t.derivative(y),
            Anamorphosis::Hermite(h) => h.derivative(y),
        }
    }

    /// Open interval of raw values reachable by φ (the support of Z).
    pub fn support(&self) -> (f64, f64) {
        match self {
            Anamorphosis::Lognormal { .. } | Anamorphosis::Exponential { .. } => {
                (0.0, f64::INFINITY)
            }
            Anamorphosis::Empirical(t) => (t.z_min, t.z_max),
            Anamorphosis::Hermite(_) => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Whether `z` lies in the support.
    pub fn in_support(&self, z: f64) -> bool {
        let (lo, hi) = self.support();
        match self {
            Anamorphosis::Lognormal { .. } | Anamorphosis::Exponential { .. } => z > lo && z < hi,
            Anamorphosis::Hermite(_) => z.is_finite(),
            _ => z >= lo && z <= hi,
        }
    }

    /// Verifies strict monotonicity of φ on a regular grid over `domain`.
    pub fn check_monotone(&self, domain: (f64, f64), points: usize) -> Result<()> {
        check_monotone_fn(|y| self.backward(y), domain, points)
    }

    /// Gaussian coordinates where φ′ jumps (empty for smooth forms).
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Anamorphosis::Lognormal { .. } | Anamorphosis::Exponential { .. } => Vec::new(),
            Anamorphosis::Empirical(t) => {
                let mut k = Vec::with_capacity(t.y.len() + 2);
                k.push(t.y_low);
                k.extend_from_slice(&t.y);
                k.push(t.y_high);
                k
            }
            Anamorphosis::Hermite(h) => vec![h.y_range.0, h.y_range.1],
        }
    }

    pub fn as_hermite(&self) -> Option<&HermiteSeries> {
        match self {
            Anamorphosis::Hermite(h) => Some(&h.series),
            _ => None,
        }
    }
}

fn check_monotone_fn(f: impl Fn(f64) -> f64, domain: (f64, f64), points: usize) -> Result<()> {
    let (lo, hi) = domain;
    let step = (hi - lo) / (points - 1) as f64;
    let mut prev = f(lo);
    for k in 1..points {
        let y = lo + step * k as f64;
        let cur = f(y);
        if !(cur > prev) {
            return Err(Error::NonMonotone(format!(
                "φ({y:.4}) = {cur} does not exceed φ({:.4}) = {prev}",
                y - step
            )));
        }
        prev = cur;
    }
    Ok(())
}

impl EmpiricalTable {
    pub fn z_values(&self) -> &[f64] {
        &self.z
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.z_min, self.z_max)
    }

    // Knots including the tail anchors.
    fn knot(&self, k: usize) -> (f64, f64) {
        let n = self.z.len();
        match k {
            0 => (self.y_low, self.z_min),
            k if k == n + 1 => (self.y_high, self.z_max),
            k => (self.y[k - 1], self.z[k - 1]),
        }
    }

    /// Segment index s such that knots s and s+1 bracket y.
    fn segment_for_y(&self, y: f64) -> usize {
        let n = self.z.len();
        if y < self.y_low {
            return 0;
        }
        if y >= self.y_high {
            return n;
        }
        if y < self.y[0] {
            return 0;
        }
        // y[k-1] <= y < y[k]
        let k = self.y.partition_point(|&v| v <= y);
        k.min(n)
    }

    fn slope(&self, seg: usize) -> f64 {
        let (y0, z0) = self.knot(seg);
        let (y1, z1) = self.knot(seg + 1);
        (z1 - z0) / (y1 - y0)
    }

    fn backward(&self, y: f64) -> f64 {
        let seg = self.segment_for_y(y);
        let (y0, z0) = self.knot(seg);
        z0 + self.slope(seg) * (y - y0)
    }

    fn derivative(&self, y: f64) -> f64 {
        self.slope(self.segment_for_y(y))
    }

    fn forward(&self, z: f64) -> Result<f64> {
        if !(z >= self.z_min && z <= self.z_max) {
            return Err(Error::OutOfSupport(z));
        }
        let n = self.z.len();
        let seg = if z < self.z[0] {
            0
        } else if z >= self.z[n - 1] {
            n
        } else {
            self.z.partition_point(|&v| v <= z)
        };
        let (y0, z0) = self.knot(seg);
        Ok(y0 + (z - z0) / self.slope(seg))
    }
}

/// Rounding bound of the series at y divided by its slope.
fn inverse_error(series: &HermiteSeries, y: f64) -> f64 {
    let size: f64 = hermite::batch(series.degree(), y)
        .iter()
        .zip(series.coeffs())
        .map(|(h, c)| (h * c).abs())
        .sum();
    let d = series.derivative(y);
    if d > 0.0 {
        f64::EPSILON * size / d
    } else {
        f64::INFINITY
    }
}

fn trim_to_invertible(series: &HermiteSeries, (mut lo, mut hi): (f64, f64)) -> (f64, f64) {
    while lo + HERMITE_TRIM_STEP < hi && inverse_error(series, lo) > HERMITE_INVERSE_TOL {
        lo += HERMITE_TRIM_STEP;
    }
    while hi - HERMITE_TRIM_STEP > lo && inverse_error(series, hi) > HERMITE_INVERSE_TOL {
        hi -= HERMITE_TRIM_STEP;
    }
    (lo, hi)
}

impl HermiteForm {
    pub fn new(series: HermiteSeries, y_range: (f64, f64)) -> Result<Self> {
        check_monotone_fn(|y| series.eval(y), y_range, CHECK_POINTS)?;
        let y_range = trim_to_invertible(&series, y_range);
        let slopes = (series.derivative(y_range.0), series.derivative(y_range.1));
        if !(slopes.0 > 0.0 && slopes.1 > 0.0) {
            return Err(Error::NonMonotone(format!(
                "series slope at the domain ends is {} and {}",
                slopes.0, slopes.1
            )));
        }
        let z_range = (series.eval(y_range.0), series.eval(y_range.1));
        Ok(HermiteForm {
            series,
            y_range,
            z_range,
            slopes,
        })
    }

    pub fn series(&self) -> &HermiteSeries {
        &self.series
    }

    /// Gaussian interval where the series itself is used.
    pub fn domain(&self) -> (f64, f64) {
        self.y_range
    }

    fn backward(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        if y < lo {
            self.z_range.0 + self.slopes.0 * (y - lo)
        } else if y > hi {
            self.z_range.1 + self.slopes.1 * (y - hi)
        } else {
            self.series.eval(y)
        }
    }

    fn derivative(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        if y < lo {
            self.slopes.0
        } else if y > hi {
            self.slopes.1
        } else {
            self.series.derivative(y)
        }
    }

    fn forward(&self, z: f64) -> Result<f64> {
        let (z_lo, z_hi) = self.z_range;
        if z < z_lo {
            return Ok(self.y_range.0 + (z - z_lo) / self.slopes.0);
        }
        if z > z_hi {
            return Ok(self.y_range.1 + (z - z_hi) / self.slopes.1);
        }
        let (mut lo, mut hi) = self.y_range;
        // Safeguarded Newton: bisection keeps the bracket.
        let mut y = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.series.eval(y) - z;
            if f == 0.0 {
                return Ok(y);
            }
            if f < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let d = self.series.derivative(y);
            let newton = y - f / d;
            let next = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - y).abs() <= 1e-15 * y.abs().max(1.0) || hi - lo <= 1e-15 {
                return Ok(next);
            }
            y = next;
        }
        Ok(y)
    }
}
