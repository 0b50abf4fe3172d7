//! Point-support conditional laws Z | data = φ(Y), Y ~ N(y*_SK, σ²_SK):
//! density, distribution, moments, pair covariances and volume variance.

use rayon::prelude::*;

use crate::anamorphosis::Anamorphosis;
use crate::error::{Error, Result};
use crate::gauss;
use crate::kriging::{Grid, KrigedField};
use crate::quad;

/// SK variances below this are treated as a point mass.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;
/// First Gauss–Hermite order for 1D moments; doubled up to `MAX_ORDER`.
pub const BASE_ORDER: usize = 128;
pub const MAX_ORDER: usize = 1024;
/// Relative change between successive orders accepted as converged.
pub const CONVERGENCE_TOL: f64 = 1e-8;
/// Order per axis of the tensor rule for pair covariances.
pub const PAIR_ORDER: usize = 128;
/// Per-axis weights below this are dropped from the tensor rule.
/// Most negative eigenvalue of a 2×2 Σ_SK accepted as rounding.
pub const PAIR_PSD_TOL: f64 = 1e-10;
pub const PAIR_MIN_WEIGHT: f64 = 1e-22;
/// Half-width in standard units of the piecewise integration for kinked φ.
const KINKED_HALF_WIDTH: f64 = 12.0;
/// Tolerance on σ² above 1 or below 0 before a law is rejected.
const VARIANCE_SLACK: f64 = 1e-9;

/// Conditional law of Z at one location.
#[derive(Debug, Clone, Copy)]
pub struct PointLaw<'a> {
    pub y_star: f64,
    pub sigma2: f64,
    pub ana: &'a Anamorphosis,
}

impl<'a> PointLaw<'a> {
    pub fn new(y_star: f64, sigma2: f64, ana: &'a Anamorphosis) -> Result<Self> {
        if !y_star.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite SK mean {y_star}")));
        }
        if !(-VARIANCE_SLACK..=1.0 + VARIANCE_SLACK).contains(&sigma2) {
            return Err(Error::InvalidInput(format!(
                "SK variance {sigma2} outside [0, 1]"
            )));
        }
        Ok(PointLaw {
            y_star,
            sigma2: sigma2.clamp(0.0, 1.0),
            ana,
        })
    }

    /// Prior law N(0, 1).
    pub fn prior(ana: &'a Anamorphosis) -> Self {
        PointLaw {
            y_star: 0.0,
            sigma2: 1.0,
            ana,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma2 < DEGENERATE_VARIANCE
    }

    pub fn sigma(&self) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            self.sigma2.sqrt()
        }
    }

    /// f(z) = g((φ⁻¹(z) − y*)/σ)/σ / φ′(φ⁻¹(z)); zero outside the support.
    pub fn pdf(&self, z: f64) -> Result<f64> {
        if self.is_degenerate() {
            return Err(Error::DegenerateLaw);
        }
        if !self.ana.in_support(z) {
            return Ok(0.0);
        }
        let y = self.ana.forward(z)?;
        let s = self.sigma();
        let d = self.ana.derivative(y);
        Ok(gauss::pdf((y - self.y_star) / s) / s / d)
    }

    /// F(z) = G((φ⁻¹(z) − y*)/σ).
    pub fn cdf(&self, z: f64) -> Result<f64> {
        if self.is_degenerate() {
            return Err(Error::DegenerateLaw);
        }
        let (lo, hi) = self.ana.support();
        if z <= lo {
            return Ok(0.0);
        }
        if z >= hi {
            return Ok(1.0);
        }
        match self.ana.forward(z) {
            Ok(y) => Ok(gauss::cdf((y - self.y_star) / self.sigma())),
            Err(Error::OutOfSupport(_)) => Ok(if z < lo { 0.0 } else { 1.0 }),
            Err(e) => Err(e),
        }
    }

    /// Step-aware distribution function: a degenerate law jumps at φ(y*).
    pub fn cdf_or_step(&self, z: f64) -> f64 {
        match self.cdf(z) {
            Ok(p) => p,
            Err(_) => {
                if z >= self.ana.backward(self.y_star) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// p-quantile φ(y* + σG⁻¹(p)).
    pub fn quantile(&self, p: f64) -> f64 {
        self.ana
            .backward(self.y_star + self.sigma() * gauss::quantile(p))
    }

    /// E[Z^n | data].
    pub fn moment(&self, n: u32) -> Result<f64> {
        if n == 0 {
            return Ok(1.0);
        }
        if self.is_degenerate() {
            return Ok(self.ana.backward(self.y_star).powi(n as i32));
        }
        let s = self.sigma();
        let f = |t: f64| self.ana.backward(self.y_star + s * t).powi(n as i32);
        let kinks = self.ana.kinks();
        if kinks.is_empty() {
            gauss_hermite_converged(f)
        } else {
            Ok(kinked_expectation(f, &kinks, self.y_star, s)?)
        }
    }

    pub fn mean(&self) -> Result<f64> {
        self.moment(1)
    }

    /// E[(Z − E Z)² | data], integrated in centred form.
    pub fn variance(&self) -> Result<f64> {
        if self.is_degenerate() {
            return Ok(0.0);
        }
        let m = self.mean()?;
        let s = self.sigma();
        let f = |t: f64| {
            let d = self.ana.backward(self.y_star + s * t) - m;
            d * d
        };
        let kinks = self.ana.kinks();
        let v = if kinks.is_empty() {
            gauss_hermite_converged(f)?
        } else {
            kinked_expectation(f, &kinks, self.y_star, s)?
        };
        Ok(v.max(0.0))
    }
}

/// ∫f g by Gauss–Hermite, doubling the order until two successive values
/// agree to `CONVERGENCE_TOL`.
fn gauss_hermite_converged<F: Fn(f64) -> f64>(f: F) -> Result<f64> {
    let mut order = BASE_ORDER;
    let mut prev = gauss::rule(order).integrate(&f);
    while order < MAX_ORDER {
        order *= 2;
        let cur = gauss::rule(order).integrate(&f);
        if !cur.is_finite() {
            break;
        }
        if (cur - prev).abs() <= CONVERGENCE_TOL * cur.abs().max(f64::MIN_POSITIVE) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::QuadratureFailure(format!(
        "gauss-hermite moment did not converge by order {MAX_ORDER}"
    )))
}

/// ∫f(t)g(t)dt split at the images of φ's kinks, adaptive Gauss–Kronrod.
fn kinked_expectation<F: Fn(f64) -> f64>(f: F, kinks: &[f64], y_star: f64, s: f64) -> Result<f64> {
    let mut br = vec![-KINKED_HALF_WIDTH];
    br.extend(
        kinks
            .iter()
            .map(|k| (k - y_star) / s)
            .filter(|t| t.abs() < KINKED_HALF_WIDTH),
    );
    br.push(KINKED_HALF_WIDTH);
    br.sort_by(f64::total_cmp);
    let e = quad::integrate_pieces(|t| f(t) * gauss::pdf(t), &br, 1e-12, 1e-15, 200);
    if !e.converged || !e.value.is_finite() {
        return Err(Error::QuadratureFailure(format!(
            "piecewise moment integral: error estimate {:e}",
            e.error
        )));
    }
    Ok(e.value)
}

/// Cov(Z_i, Z_j | data) for jointly Gaussian errors with SK cross-covariance
/// `rho_sk`, by a tensor Gauss–Hermite rule after Cholesky of the 2×2 Σ_SK.
pub fn pair_covariance(a: &PointLaw, b: &PointLaw, rho_sk: f64) -> Result<f64> {
    // Entries are on the unit-sill scale, so rounding noise is absolute.
    let tr = a.sigma2 + b.sigma2;
    let min_eig = 0.5 * (tr - ((a.sigma2 - b.sigma2).powi(2) + 4.0 * rho_sk * rho_sk).sqrt());
    if min_eig < -PAIR_PSD_TOL {
        return Err(Error::NotPsd(min_eig));
    }
    if a.is_degenerate() || b.is_degenerate() {
        return Ok(0.0);
    }
    let s1 = a.sigma();
    let l21 = (rho_sk / s1).clamp(-b.sigma(), b.sigma());
    let l22 = (b.sigma2 - l21 * l21).max(0.0).sqrt();
    let rule = gauss::rule(PAIR_ORDER);
    let nodes: Vec<(f64, f64)> = rule.significant(PAIR_MIN_WEIGHT).collect();
    let wsum: f64 = nodes.iter().map(|n| n.1).sum();

    // Means under the same rule, so that the centred sum vanishes exactly
    // when the errors are independent.
    let phi_a: Vec<f64> = nodes
        .iter()
        .map(|&(t, _)| a.ana.backward(a.y_star + s1 * t))
        .collect();
    let mean_a = nodes.iter().zip(&phi_a).map(|(n, p)| n.1 * p).sum::<f64>() / wsum;
    let m = nodes.len();
    let mut phi_b = Vec::with_capacity(m * m);
    for &(ti, _) in &nodes {
        for &(tk, _) in &nodes {
            phi_b.push(b.ana.backward(b.y_star + l21 * ti + l22 * tk));
        }
    }
    let weighted_row = |i: usize, shift: f64| -> f64 {
        nodes
            .iter()
            .zip(&phi_b[i * m..(i + 1) * m])
            .map(|(n, p)| n.1 * (p - shift))
            .sum()
    };
    let mean_b = (0..m)
        .map(|i| nodes[i].1 * weighted_row(i, 0.0))
        .sum::<f64>()
        / (wsum * wsum);
    let cov = (0..m)
        .map(|i| nodes[i].1 * (phi_a[i] - mean_a) * weighted_row(i, mean_b))
        .sum::<f64>()
        / (wsum * wsum);
    if !cov.is_finite() {
        return Err(Error::QuadratureFailure(
            "non-finite pair covariance".into(),
        ));
    }
    Ok(cov)
}

/// Node set of an averaging volume, uniform weights 1/|V|.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeSpec {
    nodes: Vec<usize>,
}

impl VolumeSpec {
    pub fn new(nodes: Vec<usize>, node_count: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("empty volume".into()));
        }
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("repeated node in volume".into()));
        }
        if let Some(&bad) = sorted.iter().find(|&&i| i >= node_count) {
            return Err(Error::InvalidInput(format!(
                "volume node {bad} outside a grid of {node_count} nodes"
            )));
        }
        Ok(VolumeSpec { nodes })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tiling of the grid into blocks of `block` nodes per axis, row-major
    /// over block indices. Edge blocks are smaller when the grid does not
    /// divide evenly.
    pub fn tiles(grid: &Grid, block: [usize; 3]) -> Result<Vec<VolumeSpec>> {
        if block.contains(&0) {
            return Err(Error::InvalidInput(format!("block size {block:?}")));
        }
        let counts: Vec<usize> = (0..3).map(|a| grid.n[a].div_ceil(block[a])).collect();
        let mut out = Vec::with_capacity(counts.iter().product());
        for bz in 0..counts[2] {
            for by in 0..counts[1] {
                for bx in 0..counts[0] {
                    let mut nodes = Vec::new();
                    for iz in bz * block[2]..((bz + 1) * block[2]).min(grid.n[2]) {
                        for iy in by * block[1]..((by + 1) * block[1]).min(grid.n[1]) {
                            for ix in bx * block[0]..((bx + 1) * block[0]).min(grid.n[0]) {
                                nodes.push(grid.index(ix, iy, iz));
                            }
                        }
                    }
                    out.push(VolumeSpec { nodes });
                }
            }
        }
        Ok(out)
    }
}

/// Law at grid node `i` of a kriged field.
pub fn node_law<'a>(field: &KrigedField, i: usize, ana: &'a Anamorphosis) -> Result<PointLaw<'a>> {
    PointLaw::new(field.y_star()[i], field.sigma2()[i], ana)
}

/// Var(Z_V | data) = (1/|V|²) Σ_i Σ_j Cov(Z_i, Z_j | data).
pub fn volume_variance(field: &KrigedField, vol: &VolumeSpec, ana: &Anamorphosis) -> Result<f64> {
    let nodes = vol.nodes();
    let laws = nodes
        .iter()
        .map(|&i| node_law(field, i, ana))
        .collect::<Result<Vec<_>>>()?;
    // Row sums over j ≥ i, then summed in row order for determinism.
    let rows = (0..nodes.len())
        .into_par_iter()
        .map(|a| {
            let mut row = laws[a].variance()?;
            for b in a + 1..nodes.len() {
                let rho = field.sk_cross_covariance(nodes[a], nodes[b]);
                row += 2.0 * pair_covariance(&laws[a], &laws[b], rho)?;
            }
            Ok(row)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = nodes.len() as f64;
    Ok((rows.iter().sum::<f64>() / (n * n)).max(0.0))
}

/// Conditional mean at every node.
pub fn conditional_mean_map(field: &KrigedField, ana: &Anamorphosis) -> Result<Vec<f64>> {
    (0..field.len())
        .into_par_iter()
        .map(|i| node_law(field, i, ana)?.mean())
        .collect()
}

/// Conditional variance at every node.
pub fn conditional_variance_map(field: &KrigedField, ana: &Anamorphosis) -> Result<Vec<f64>> {
    (0..field.len())
        .into_par_iter()
        .map(|i| node_law(field, i, ana)?.variance())
        .collect()
}
