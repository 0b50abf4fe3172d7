//! Standard normal density, distribution and quantile functions, and
//! Gauss–Hermite rules for integrals against the standard normal density.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Mutex, OnceLock};

use libm::erfc;
use statrs::function::erf::erfc_inv;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density g(x).
#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function G(x).
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail 1 - G(x), accurate for large positive x.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// G⁻¹(p).
pub fn quantile(p: f64) -> f64 {
    if p > 0.5 {
        -lower_quantile(1.0 - p)
    } else {
        lower_quantile(p)
    }
}

/// Inverse of the upper tail: x such that 1 - G(x) = q.
pub fn upper_quantile(q: f64) -> f64 {
    if q > 0.5 {
        lower_quantile(1.0 - q)
    } else {
        -lower_quantile(q)
    }
}

/// G⁻¹(p) for p ≤ 1/2: rational approximation refined by one Halley step.
fn lower_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    let density = pdf(x);
    if density <= 0.0 {
        return x;
    }
    let u = (cdf(x) - p) / density;
    x - u / (1.0 + 0.5 * x * u)
}

/// Mills ratio (1 - G(x)) / g(x).
pub fn mills_ratio(x: f64) -> f64 {
    if x < 5.0 {
        return sf(x) / pdf(x);
    }
    // Laplace continued fraction 1/(x + 1/(x + 2/(x + 3/(x + ...)))).
    let mut t = x;
    for k in (1..=80).rev() {
        t = x + k as f64 / t;
    }
    1.0 / t
}

/// ln(1 - G(x)), finite far into the upper tail.
pub fn log_sf(x: f64) -> f64 {
    if x < 5.0 {
        if x < 0.0 {
            (-cdf(x)).ln_1p()
        } else {
            sf(x).ln()
        }
    } else {
        -0.5 * x * x - 0.5 * (2.0 * PI).ln() + mills_ratio(x).ln()
    }
}

/// Gauss–Hermite rule for ∫ f(t) g(t) dt, with g the standard normal density.
///
/// Weights sum to one. Nodes are ordered ascending. Weights of the outermost
/// nodes of large rules underflow to zero, which is harmless for integrands
/// of at most exponential growth.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes an `n`-node rule by Newton iteration on the orthonormal
    /// (physicists') Hermite recurrence, with rescaling to avoid overflow.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a Gauss-Hermite rule needs at least one node");
        let half = n.div_ceil(2);
        let mut phys_nodes = vec![0.0_f64; n];
        let mut phys_log_w = vec![0.0_f64; n];
        let nf = n as f64;
        let bound = (2.0 * nf + 2.0).sqrt();
        for i in 0..half {
            // i-th largest root: bracket by Sturm counts, then polish by Newton.
            let mut z = sturm_root(n, n - 1 - i, bound);
            for _ in 0..8 {
                let (ratio, _) = newton_ratio(n, z);
                let z_prev = z;
                z -= ratio;
                if (z - z_prev).abs() <= 1e-16 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, log_pp) = newton_ratio(n, z);
            phys_nodes[i] = z;
            phys_log_w[i] = 2f64.ln() - 2.0 * log_pp;
            phys_nodes[n - 1 - i] = -z;
            phys_log_w[n - 1 - i] = phys_log_w[i];
        }
        // Descending physicists' roots -> ascending probabilists' nodes.
        let log_sqrt_pi = 0.5 * PI.ln();
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in (0..n).rev() {
            nodes.push(SQRT_2 * phys_nodes[i]);
            weights.push((phys_log_w[i] - log_sqrt_pi).exp());
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussHermite { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node/weight pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Node/weight pairs whose weight is at least `min_weight`.
    pub fn significant(&self, min_weight: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.iter().filter(move |&(_, w)| w >= min_weight)
    }

    /// ∫ f(t) g(t) dt.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(t, w)| w * f(t))
            .sum()
    }
}

/// Eigenvalue `k` (ascending) of the symmetric tridiagonal Jacobi matrix of
/// the physicists' Hermite polynomials, by bisection on Sturm counts.
fn sturm_root(n: usize, k: usize, bound: f64) -> f64 {
    // Number of eigenvalues strictly below x.
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = -x;
        if d < 0.0 {
            count += 1;
        }
        for j in 1..n {
            let b2 = j as f64 / 2.0;
            let prev = if d == 0.0 { f64::MIN_POSITIVE } else { d };
            d = -x - b2 / prev;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Returns (p_n / p_n', ln|p_n'|) for the orthonormal physicists' Hermite
/// polynomial of degree `n` at `x`.
fn newton_ratio(n: usize, x: f64) -> (f64, f64) {
    const BIG: f64 = 1e200;
    let mut log_scale = 0.0;
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = x * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
        if p1.abs() > BIG {
            p1 /= BIG;
            p2 /= BIG;
            log_scale += BIG.ln();
        }
    }
    let pp = (2.0 * n as f64).sqrt() * p2;
    (p1 / pp, pp.abs().ln() + log_scale)
}

/// Shared rule of the given order, built once per process.
pub fn rule(n: usize) -> &'static GaussHermite {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static GaussHermite>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| Box::leak(Box::new(GaussHermite::new(n))))
}
