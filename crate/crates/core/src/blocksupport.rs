//! Distribution of the volume average Z_V = (1/n)·Σφ(Y_i) for jointly
//! Gaussian Y ~ N(y*_SK, Σ_SK).
//!
//! With Y = μ + L·t (L lower Cholesky factor), fixing t_1..t_{n-1} leaves
//! Y_n ~ N(m_n, L_nn²), and the sum constraint Σφ(Y_i) = s pins Y_n to
//! φ⁻¹(s − Σ_{i<n} φ(Y_i)). The density of the sum is then
//!
//! f_S(s) = E_t[ g((y_n − m_n)/L_nn) / (L_nn·φ′(y_n)) ],
//!
//! integrated exactly (nested adaptive quadrature, n ≤ 4) or by Monte-Carlo.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::anamorphosis::Anamorphosis;
use crate::conditional::{node_law, PointLaw, VolumeSpec, DEGENERATE_VARIANCE};
use crate::error::{Error, Result};
use crate::gauss;
use crate::kriging::KrigedField;
use crate::linalg::{check_psd, cholesky_with_jitter, min_eigenvalue};
use crate::quad;
use crate::rng;

/// Largest node count for nested exact integration.
pub const MAX_EXACT_DIM: usize = 4;
/// Integration bounds of each standardized Gaussian coordinate.
pub const GAUSS_BOUND: f64 = 8.0;
/// Relative tolerance per integration level.
pub const EXACT_REL_TOL: f64 = 1e-6;
const EXACT_ABS_TOL: f64 = 1e-13;
const EXACT_MAX_INTERVALS: usize = 64;
const EXACT_PANELS: usize = 4;
/// Minimum number of Monte-Carlo draws.
pub const MIN_DRAWS: usize = 1_000;
/// Antithetic pairs per RNG stream.
pub const MC_CHUNK_PAIRS: usize = 8_192;
/// Tolerance on negative eigenvalues of Σ_SK.
pub const PSD_TOL: f64 = 1e-8;
/// Lower probability bound used to start cdf integration.
const CDF_TAIL: f64 = 1e-12;

/// Joint conditional law of the nodes of one volume.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLaw {
    y_star: Vec<f64>,
    sigma: DMatrix<f64>,
}

/// Density with its Monte-Carlo standard error (0 for exact values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub z: f64,
    pub density: f64,
    pub se: f64,
}

/// Distribution function value with propagated standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    pub z: f64,
    pub cdf: f64,
    pub se: f64,
}

impl Probability {
    /// P(Z_V > z).
    pub fn exceedance(&self) -> f64 {
        1.0 - self.cdf
    }
}

impl BlockLaw {
    pub fn new(y_star: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = y_star.len();
        if n == 0 {
            return Err(Error::InvalidInput(
                "block law needs at least one node".into(),
            ));
        }
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "covariance is {}×{} for {n} nodes",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
            }
            if !(sigma[(i, i)] >= -PSD_TOL && sigma[(i, i)] <= 1.0 + PSD_TOL) {
                return Err(Error::InvalidInput(format!(
                    "SK variance {} outside [0, 1]",
                    sigma[(i, i)]
                )));
            }
        }
        check_psd(&sigma, PSD_TOL)?;
        Ok(BlockLaw { y_star, sigma })
    }

    pub fn len(&self) -> usize {
        self.y_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_star.is_empty()
    }

    pub fn y_star(&self) -> &[f64] {
        &self.y_star
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    fn node_law<'a>(&self, i: usize, ana: &'a Anamorphosis) -> Result<PointLaw<'a>> {
        PointLaw::new(self.y_star[i], self.sigma[(i, i)], ana)
    }

    /// Splits fixed nodes off and factorizes the rest, putting last the node
    /// with the largest conditional variance given the others.
    fn reduce(&self, ana: &Anamorphosis) -> Result<Reduced> {
        let n = self.len();
        let mut constant = 0.0;
        let mut active = Vec::new();
        for i in 0..n {
            if self.sigma[(i, i)] < DEGENERATE_VARIANCE {
                constant += ana.backward(self.y_star[i]);
            } else {
                active.push(i);
            }
        }
        if active.is_empty() {
            return Err(Error::DegenerateLaw);
        }
        let m = active.len();
        let mut best: Option<(f64, Vec<usize>, DMatrix<f64>)> = None;
        for c in 0..m {
            let mut order: Vec<usize> =
                active.iter().copied().filter(|&i| i != active[c]).collect();
            order.push(active[c]);
            let sub = DMatrix::from_fn(m, m, |a, b| self.sigma[(order[a], order[b])]);
            let Some(f) = cholesky_with_jitter(&sub, 1.0) else {
                return Err(Error::NotPsd(min_eigenvalue(&sub)));
            };
            let l = f.chol.l();
            let lnn = l[(m - 1, m - 1)];
            if best.as_ref().is_none_or(|b| lnn > b.0) {
                best = Some((lnn, order, l));
            }
        }
        let (lnn, order, l) = best.expect("at least one active node");
        if !(lnn * lnn >= DEGENERATE_VARIANCE) {
            return Err(Error::DegenerateLaw);
        }
        Ok(Reduced {
            constant,
            mu: order.iter().map(|&i| self.y_star[i]).collect(),
            l,
            total: n,
        })
    }
}

/// Joint law of the volume's nodes from a kriged field.
pub fn make_block_law(field: &KrigedField, vol: &VolumeSpec) -> Result<BlockLaw> {
    let y = vol.nodes().iter().map(|&i| field.y_star()[i]).collect();
    BlockLaw::new(y, field.sk_covariance_matrix(vol.nodes()))
}

#[derive(Debug, Clone)]
struct Reduced {
    /// Σφ over nodes with zero SK variance.
    constant: f64,
    mu: Vec<f64>,
    l: DMatrix<f64>,
    total: usize,
}

impl Reduced {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    /// (Σφ(y_i) over fixed and leading nodes, m_n) for leading coordinates t.
    fn partial(&self, ana: &Anamorphosis, t: &[f64]) -> (f64, f64) {
        let m = self.dim();
        let mut acc = self.constant;
        for i in 0..m - 1 {
            let mut y = self.mu[i];
            for (k, tk) in t.iter().enumerate().take(i + 1) {
                y += self.l[(i, k)] * tk;
            }
            acc += ana.backward(y);
        }
        let mut mn = self.mu[m - 1];
        for (k, tk) in t.iter().enumerate() {
            mn += self.l[(m - 1, k)] * tk;
        }
        (acc, mn)
    }

    /// Conditional density of the sum at `s`, given the leading coordinates.
    #[inline]
    fn fiber_density(&self, ana: &Anamorphosis, s: f64, acc: f64, mn: f64) -> f64 {
        let r = s - acc;
        if !ana.in_support(r) {
            return 0.0;
        }
        let Ok(y) = ana.forward(r) else {
            return 0.0;
        };
        let d = ana.derivative(y);
        if !(d > 0.0 && d.is_finite()) {
            return 0.0;
        }
        let lnn = self.l[(self.dim() - 1, self.dim() - 1)];
        let v = gauss::pdf((y - mn) / lnn) / (lnn * d);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }

    /// Conditional distribution function of the sum at `s`.
    #[inline]
    fn fiber_cdf(&self, ana: &Anamorphosis, s: f64, acc: f64, mn: f64) -> f64 {
        let r = s - acc;
        let (lo, hi) = ana.support();
        if r <= lo {
            return 0.0;
        }
        if r >= hi {
            return 1.0;
        }
        match ana.forward(r) {
            Ok(y) => {
                let lnn = self.l[(self.dim() - 1, self.dim() - 1)];
                gauss::cdf((y - mn) / lnn)
            }
            Err(_) => 0.0,
        }
    }

    /// E_t[leaf(Σφ(y_i), m_n)] over the leading coordinates, integrating one
    /// coordinate per level. `acc` and `mn` carry the contributions of the
    /// coordinates already fixed. Each level is restricted to the range where
    /// the remaining nodes can still reach the sum `s`; the density also needs
    /// the upper cut (`two_sided`), the distribution function only the lower.
    #[allow(clippy::too_many_arguments)]
    fn nested<L: Fn(f64, f64) -> f64 + Copy>(
        &self,
        ana: &Anamorphosis,
        leaf: L,
        s: f64,
        two_sided: bool,
        level: usize,
        t: [f64; MAX_EXACT_DIM],
        acc: f64,
        mn: f64,
    ) -> f64 {
        let m = self.dim();
        if level + 1 == m {
            return leaf(acc, mn);
        }
        let mut base = self.mu[level];
        for (k, tk) in t.iter().enumerate().take(level) {
            base += self.l[(level, k)] * tk;
        }
        let lll = self.l[(level, level)];
        let Some((a, b)) = self.level_range(ana, s, two_sided, level, acc, base, lll) else {
            return 0.0;
        };
        quad::integrate_split(
            |x| {
                let mut tt = t;
                tt[level] = x;
                let acc = acc + ana.backward(base + lll * x);
                let mn = mn + self.l[(m - 1, level)] * x;
                gauss::pdf(x) * self.nested(ana, leaf, s, two_sided, level + 1, tt, acc, mn)
            },
            a,
            b,
            EXACT_PANELS,
            EXACT_REL_TOL,
            EXACT_ABS_TOL,
            EXACT_MAX_INTERVALS,
        )
        .value
    }

    /// Interval of the level coordinate where φ(base + lll·x) leaves room for
    /// the later nodes, or None when it is empty.
    #[allow(clippy::too_many_arguments)]
    fn level_range(
        &self,
        ana: &Anamorphosis,
        s: f64,
        two_sided: bool,
        level: usize,
        acc: f64,
        base: f64,
        lll: f64,
    ) -> Option<(f64, f64)> {
        let later = (self.dim() - 1 - level) as f64;
        let (lo, hi) = ana.support();
        let mut a = -GAUSS_BOUND;
        let mut b = GAUSS_BOUND;
        let to_x = |y: f64| (y - base) / lll;
        if lo.is_finite() {
            let top = s - acc - later * lo;
            if top <= lo {
                return None;
            }
            if top < hi {
                if let Ok(y) = ana.forward(top) {
                    b = b.min(to_x(y));
                }
            }
        }
        if two_sided && hi.is_finite() {
            let bottom = s - acc - later * hi;
            if bottom >= hi {
                return None;
            }
            if bottom > lo {
                if let Ok(y) = ana.forward(bottom) {
                    a = a.max(to_x(y));
                }
            }
        }
        (a < b).then_some((a, b))
    }

    fn start(&self) -> (f64, f64) {
        (self.constant, self.mu[self.dim() - 1])
    }
}

/// Density of the average at `z` by nested adaptive Gauss–Kronrod
/// integration over the leading Gaussian coordinates.
pub fn block_pdf_exact(bl: &BlockLaw, ana: &Anamorphosis, z: f64) -> Result<f64> {
    if bl.len() > MAX_EXACT_DIM {
        return Err(Error::DimensionTooLarge(bl.len()));
    }
    if bl.len() == 1 {
        return bl.node_law(0, ana)?.pdf(z);
    }
    let red = bl.reduce(ana)?;
    let n = red.total as f64;
    let s = n * z;
    let (acc, mn) = red.start();
    let leaf = |acc, mn| red.fiber_density(ana, s, acc, mn);
    Ok(n * red.nested(ana, leaf, s, true, 0, [0.0; MAX_EXACT_DIM], acc, mn))
}

/// P(Z_V ≤ z) by the same nested integration, with the conditional
/// Gaussian distribution function of the last node as the innermost term.
pub fn block_cdf_exact(bl: &BlockLaw, ana: &Anamorphosis, z: f64) -> Result<f64> {
    if bl.len() > MAX_EXACT_DIM {
        return Err(Error::DimensionTooLarge(bl.len()));
    }
    if bl.len() == 1 {
        return Ok(bl.node_law(0, ana)?.cdf_or_step(z));
    }
    let red = bl.reduce(ana)?;
    let s = red.total as f64 * z;
    let (acc, mn) = red.start();
    let leaf = |acc, mn| red.fiber_cdf(ana, s, acc, mn);
    Ok(red
        .nested(ana, leaf, s, false, 0, [0.0; MAX_EXACT_DIM], acc, mn)
        .clamp(0.0, 1.0))
}

/// Exact densities at several points, evaluated in parallel.
pub fn block_pdf_exact_curve(
    bl: &BlockLaw,
    ana: &Anamorphosis,
    zs: &[f64],
) -> Result<Vec<Density>> {
    zs.par_iter()
        .map(|&z| {
            Ok(Density {
                z,
                density: block_pdf_exact(bl, ana, z)?,
                se: 0.0,
            })
        })
        .collect()
}

/// Monte-Carlo estimate of the density of the average at `z`.
pub fn block_pdf_mc(
    bl: &BlockLaw,
    ana: &Anamorphosis,
    z: f64,
    draws: usize,
    seed: u64,
) -> Result<Density> {
    Ok(block_pdf_mc_curve(bl, ana, &[z], draws, seed)?[0])
}

/// Monte-Carlo densities at several points from one shared set of draws.
///
/// Leading coordinates are drawn in antithetic pairs (t, −t); each pair's
/// average is one sample, and the standard error is their std/√pairs.
/// Draws are split into fixed chunks with their own RNG streams and summed
/// in chunk order, so the result depends only on (seed, draws).
pub fn block_pdf_mc_curve(
    bl: &BlockLaw,
    ana: &Anamorphosis,
    zs: &[f64],
    draws: usize,
    seed: u64,
) -> Result<Vec<Density>> {
    if draws < MIN_DRAWS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_DRAWS} draws, got {draws}"
        )));
    }
    if bl.len() == 1 {
        let law = bl.node_law(0, ana)?;
        return zs
            .iter()
            .map(|&z| {
                Ok(Density {
                    z,
                    density: law.pdf(z)?,
                    se: 0.0,
                })
            })
            .collect();
    }
    let red = bl.reduce(ana)?;
    let n = red.total as f64;
    let lead = red.dim() - 1;
    let pairs = draws.div_ceil(2);
    let chunks = pairs.div_ceil(MC_CHUNK_PAIRS);
    let sums: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK_PAIRS.min(pairs - c * MC_CHUNK_PAIRS);
            let mut rng = rng::stream(seed, c as u64);
            let mut acc = vec![(0.0, 0.0); zs.len()];
            let mut t = [0.0; MAX_EXACT_DIM];
            let mut neg = [0.0; MAX_EXACT_DIM];
            let mut eval = vec![0.0; zs.len()];
            for _ in 0..count {
                for k in 0..lead {
                    t[k] = rng::standard_normal(&mut rng);
                    neg[k] = -t[k];
                }
                eval.iter_mut().for_each(|e| *e = 0.0);
                for tt in [&t, &neg] {
                    let (sum, mn) = red.partial(ana, &tt[..lead]);
                    for (e, &z) in eval.iter_mut().zip(zs) {
                        *e += 0.5 * red.fiber_density(ana, n * z, sum, mn);
                    }
                }
                for (a, e) in acc.iter_mut().zip(&eval) {
                    a.0 += e;
                    a.1 += e * e;
                }
            }
            acc
        })
        .collect();
    let pf = pairs as f64;
    Ok(zs
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let (s1, s2) = sums
                .iter()
                .fold((0.0, 0.0), |a, c| (a.0 + c[k].0, a.1 + c[k].1));
            let mean = s1 / pf;
            let var = ((s2 / pf - mean * mean) * pf / (pf - 1.0).max(1.0)).max(0.0);
            Density {
                z,
                density: n * mean,
                se: n * (var / pf).sqrt(),
            }
        })
        .collect())
}

/// Lower starting point for cdf integration: the average cannot fall below
/// it except with probability of order 1e-12.
pub fn lower_bound(bl: &BlockLaw, ana: &Anamorphosis) -> Result<f64> {
    let n = bl.len() as f64;
    let mut fixed = 0.0;
    let mut active = 0usize;
    let mut min_q = f64::INFINITY;
    for i in 0..bl.len() {
        let law = bl.node_law(i, ana)?;
        if law.is_degenerate() {
            fixed += ana.backward(law.y_star);
        } else {
            active += 1;
            min_q = min_q.min(law.quantile(CDF_TAIL));
        }
    }
    if active == 0 {
        return Err(Error::DegenerateLaw);
    }
    let bound = (fixed + active as f64 * min_q) / n;
    let (lo, _) = ana.support();
    Ok(if lo.is_finite() { bound.max(lo) } else { bound })
}

/// Distribution function of the average at the (sorted or unsorted) points
/// `zs`, by trapezoid integration of a density over an adaptively refined
/// grid starting at `lower_bound`. The standard error adds pointwise errors
/// with their trapezoid weights, which bounds it under common random numbers.
pub fn cdf_from_density<F>(pdf: F, z_lo: f64, zs: &[f64]) -> Result<Vec<Probability>>
where
    F: Fn(&[f64]) -> Result<Vec<Density>>,
{
    const INITIAL: usize = 64;
    const ROUNDS: usize = 8;
    const MAX_POINTS: usize = 4_096;
    const LOCAL_TOL: f64 = 1e-5;
    let z_hi = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if zs.is_empty() {
        return Ok(Vec::new());
    }
    if z_hi <= z_lo {
        return Ok(zs
            .iter()
            .map(|&z| Probability {
                z,
                cdf: 0.0,
                se: 0.0,
            })
            .collect());
    }
    let mut grid: Vec<f64> = (0..=INITIAL)
        .map(|k| z_lo + (z_hi - z_lo) * k as f64 / INITIAL as f64)
        .chain(zs.iter().copied().filter(|&z| z > z_lo))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut vals: Vec<Density> = pdf(&grid)?;
    // active[k]: interval k (between vals[k] and vals[k+1]) is still checked
    let mut active = vec![true; vals.len() - 1];
    for _ in 0..ROUNDS {
        if vals.len() >= MAX_POINTS || !active.iter().any(|&a| a) {
            break;
        }
        let mids: Vec<f64> = (0..active.len())
            .filter(|&k| active[k])
            .map(|k| 0.5 * (vals[k].z + vals[k + 1].z))
            .collect();
        let mut mid_vals = pdf(&mids)?.into_iter();
        let mut next = Vec::with_capacity(vals.len() + mids.len());
        let mut next_active = Vec::with_capacity(active.len() + mids.len());
        for k in 0..active.len() {
            next.push(vals[k]);
            if !active[k] {
                next_active.push(false);
                continue;
            }
            let m = mid_vals.next().expect("one midpoint per active interval");
            let h = vals[k + 1].z - vals[k].z;
            let local = (0.5 * (vals[k].density + vals[k + 1].density) - m.density).abs() * h;
            if local > LOCAL_TOL {
                next.push(m);
                next_active.extend([true, true]);
            } else {
                next_active.push(false);
            }
        }
        next.push(*vals.last().expect("grid is nonempty"));
        vals = next;
        active = next_active;
    }
    let mut cum = Vec::with_capacity(vals.len());
    let (mut p, mut e) = (0.0, 0.0);
    cum.push((vals[0].z, 0.0, 0.0));
    for w in vals.windows(2) {
        let h = w[1].z - w[0].z;
        p += 0.5 * h * (w[0].density + w[1].density);
        e += 0.5 * h * (w[0].se + w[1].se);
        cum.push((w[1].z, p, e));
    }
    Ok(zs
        .iter()
        .map(|&z| {
            if z <= z_lo {
                return Probability {
                    z,
                    cdf: 0.0,
                    se: 0.0,
                };
            }
            let k = cum.partition_point(|c| c.0 < z).min(cum.len() - 1);
            Probability {
                z,
                cdf: cum[k].1.clamp(0.0, 1.0),
                se: cum[k].2,
            }
        })
        .collect())
}

/// P(Z_V ≤ z) from the Monte-Carlo density; n = 1 uses the point cdf.
pub fn block_cdf(
    bl: &BlockLaw,
    ana: &Anamorphosis,
    z: f64,
    draws: usize,
    seed: u64,
) -> Result<Probability> {
    Ok(block_cdf_curve(bl, ana, &[z], draws, seed)?[0])
}

pub fn block_cdf_curve(
    bl: &BlockLaw,
    ana: &Anamorphosis,
    zs: &[f64],
    draws: usize,
    seed: u64,
) -> Result<Vec<Probability>> {
    if bl.len() == 1 {
        let law = bl.node_law(0, ana)?;
        return Ok(zs
            .iter()
            .map(|&z| Probability {
                z,
                cdf: law.cdf_or_step(z),
                se: 0.0,
            })
            .collect());
    }
    let lo = lower_bound(bl, ana)?;
    cdf_from_density(|g| block_pdf_mc_curve(bl, ana, g, draws, seed), lo, zs)
}

/// Exact distribution function at several points, evaluated in parallel.
pub fn block_cdf_exact_curve(
    bl: &BlockLaw,
    ana: &Anamorphosis,
    zs: &[f64],
) -> Result<Vec<Probability>> {
    zs.par_iter()
        .map(|&z| {
            Ok(Probability {
                z,
                cdf: block_cdf_exact(bl, ana, z)?,
                se: 0.0,
            })
        })
        .collect()
}

/// Conditional laws of the block's nodes.
pub fn node_laws<'a>(
    field: &KrigedField,
    vol: &VolumeSpec,
    ana: &'a Anamorphosis,
) -> Result<Vec<PointLaw<'a>>> {
    vol.nodes()
        .iter()
        .map(|&i| node_law(field, i, ana))
        .collect()
}
