//! Synthetic replica experiment: simulate a truth, sample it, krige, and
//! compare the analytic conditional results against LU conditional
//! simulations of the same law.

use std::time::Instant;

use rayon::prelude::*;

use crate::anamorphosis::Anamorphosis;
use crate::blocksupport::{self, BlockLaw};
use crate::conditional::{self, VolumeSpec};
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::kriging::{krige_field, Grid, KrigedField, SampleSet};
use crate::rng;
use crate::simulate::{self, RealizationSet};

/// Intervals of the exact cdf table used for KS distances.
pub const CDF_TABLE: usize = 120;

/// Inputs of a replica run.
#[derive(Debug, Clone)]
pub struct ReplicaConfig {
    pub grid: Grid,
    pub model: CovarianceModel,
    pub ana: Anamorphosis,
    pub samples: usize,
    pub realizations: usize,
    /// Seeds the truth, the sampling and the conditional realizations.
    pub sim_seed: u64,
    /// Block size in nodes per axis for the volume-variance check.
    pub block: [usize; 3],
    /// Nodes of the block-distribution check; chosen automatically if None.
    pub block_nodes: Option<Vec<usize>>,
    pub mc_draws: usize,
    pub mc_seed: u64,
    /// Points at which Monte-Carlo and exact block densities are compared.
    pub mc_points: usize,
    /// Nodes with smaller SK variance are left out of the node scatter.
    pub min_sigma2: f64,
    pub allow_large: bool,
}

impl ReplicaConfig {
    /// 64×64 grid at spacing 5, 0.1·nugget + 0.9·sph(100), exponential
    /// anamorphosis with λ = 1/0.8, 100 samples, 2,000 realizations.
    pub fn desk_scale() -> Self {
        ReplicaConfig {
            grid: Grid::planar([0.0, 0.0], 5.0, 64, 64).expect("valid grid"),
            model: "0.1 nugget + 0.9 sph(100)".parse().expect("valid model"),
            ana: Anamorphosis::exponential(1.0 / 0.8).expect("valid lambda"),
            samples: 100,
            realizations: 2_000,
            sim_seed: 11,
            block: [8, 8, 1],
            block_nodes: None,
            mc_draws: 1_000_000,
            mc_seed: 13,
            mc_points: 50,
            min_sigma2: 0.05,
            allow_large: false,
        }
    }
}

/// Tags of the seeds derived from `sim_seed`.
const TRUTH_TAG: u64 = 1;
const SAMPLE_TAG: u64 = 2;

/// Everything produced by the simulation side of a replica.
#[derive(Debug, Clone)]
pub struct Replica {
    pub config: ReplicaConfig,
    pub truth: RealizationSet,
    pub samples: SampleSet,
    pub field: KrigedField,
    /// Conditional realizations, Gaussian scale.
    pub gaussian: RealizationSet,
    /// Conditional realizations, raw scale.
    pub raw: RealizationSet,
    pub seconds: f64,
}

pub fn build_replica(config: &ReplicaConfig) -> Result<Replica> {
    let start = Instant::now();
    let truth_g = simulate::lu_unconditional(
        &config.grid,
        &config.model,
        1,
        rng::derive_seed(config.sim_seed, TRUTH_TAG),
        config.allow_large,
    )?;
    let truth = simulate::backtransform(&truth_g, &config.ana);
    let samples = simulate::sample_from_realization(
        &truth,
        0,
        config.samples,
        rng::derive_seed(config.sim_seed, SAMPLE_TAG),
        &config.ana,
    )?;
    let field = krige_field(&samples, &config.model, &config.grid)?;
    let gaussian = simulate::lu_conditional(
        &field,
        config.realizations,
        config.sim_seed,
        config.allow_large,
    )?;
    let raw = simulate::backtransform(&gaussian, &config.ana);
    Ok(Replica {
        config: config.clone(),
        truth,
        samples,
        field,
        gaussian,
        raw,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Pearson correlation; NaN if either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Mean over points of |simulated − analytic| / |analytic|.
pub fn mean_relative_deviation(analytic: &[f64], simulated: &[f64]) -> f64 {
    let n = analytic.len() as f64;
    analytic
        .iter()
        .zip(simulated)
        .map(|(a, s)| (s - a).abs() / a.abs())
        .sum::<f64>()
        / n
}

/// Kolmogorov–Smirnov distance between a sample and a reference cdf.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Sample variance and its standard error from the fourth central moment.
pub fn variance_with_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (var, se)
}

/// One analytic-versus-simulated comparison point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub id: usize,
    pub analytic: f64,
    pub simulated: f64,
    pub se: f64,
}

/// Node-wise conditional mean and variance against ensemble statistics.
#[derive(Debug, Clone)]
pub struct NodeScatter {
    pub mean: Vec<Pair>,
    pub variance: Vec<Pair>,
}

pub fn node_scatter(rep: &Replica) -> Result<NodeScatter> {
    let ana = &rep.config.ana;
    let means = conditional::conditional_mean_map(&rep.field, ana)?;
    let vars = conditional::conditional_variance_map(&rep.field, ana)?;
    let (sim_mean, sim_var) = rep.raw.node_moments();
    let r = rep.raw.count() as f64;
    let mut out = NodeScatter {
        mean: Vec::new(),
        variance: Vec::new(),
    };
    for i in 0..rep.field.len() {
        if rep.field.sigma2()[i] < rep.config.min_sigma2 {
            continue;
        }
        out.mean.push(Pair {
            id: i,
            analytic: means[i],
            simulated: sim_mean[i],
            se: (sim_var[i] / r).sqrt(),
        });
        let node: Vec<f64> = rep.raw.node(i).collect();
        let (_, se) = variance_with_se(&node);
        out.variance.push(Pair {
            id: i,
            analytic: vars[i],
            simulated: sim_var[i],
            se,
        });
    }
    Ok(out)
}

/// Analytic volume variance against the variance of re-blocked realizations.
pub fn block_variance_scatter(rep: &Replica) -> Result<Vec<Pair>> {
    let vols = VolumeSpec::tiles(rep.field.grid(), rep.config.block)?;
    vols.iter()
        .enumerate()
        .map(|(b, vol)| {
            let analytic = conditional::volume_variance(&rep.field, vol, &rep.config.ana)?;
            let avg = simulate::block_average(&rep.raw, vol);
            let (simulated, se) = variance_with_se(&avg);
            Ok(Pair {
                id: b,
                analytic,
                simulated,
                se,
            })
        })
        .collect()
}

/// Four nodes forming the 2×2 square nearest the grid centre whose nodes
/// all have SK variance at least `min_sigma2`.
pub fn default_block_nodes(field: &KrigedField, min_sigma2: f64) -> Result<Vec<usize>> {
    let g = field.grid();
    if g.n[0] < 2 || g.n[1] < 2 {
        return Err(Error::InvalidInput("grid too small for a 2×2 block".into()));
    }
    let (cx, cy) = ((g.n[0] - 2) as f64 / 2.0, (g.n[1] - 2) as f64 / 2.0);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for iy in 0..g.n[1] - 1 {
        for ix in 0..g.n[0] - 1 {
            let nodes = vec![
                g.index(ix, iy, 0),
                g.index(ix + 1, iy, 0),
                g.index(ix, iy + 1, 0),
                g.index(ix + 1, iy + 1, 0),
            ];
            if nodes.iter().any(|&i| field.sigma2()[i] < min_sigma2) {
                continue;
            }
            let d = (ix as f64 - cx).powi(2) + (iy as f64 - cy).powi(2);
            if best.as_ref().is_none_or(|b| d < b.0) {
                best = Some((d, nodes));
            }
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::InvalidInput("no 2×2 block away from the samples".into()))
}

/// Block-distribution comparison for a small node set.
#[derive(Debug, Clone)]
pub struct BlockDistribution {
    pub nodes: Vec<usize>,
    pub averages: Vec<f64>,
    pub ks: f64,
    /// (z, exact density, Monte-Carlo density, standard error).
    pub curve: Vec<(f64, f64, f64, f64)>,
    pub max_z_score: f64,
}

pub fn block_distribution(rep: &Replica) -> Result<BlockDistribution> {
    let cfg = &rep.config;
    let nodes = match &cfg.block_nodes {
        Some(n) => n.clone(),
        None => default_block_nodes(&rep.field, cfg.min_sigma2)?,
    };
    let vol = VolumeSpec::new(nodes.clone(), rep.field.len())?;
    let bl = blocksupport::make_block_law(&rep.field, &vol)?;
    let averages = simulate::block_average(&rep.raw, &vol);
    let mut sorted = averages.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    let (lo, hi) = (q(0.0), q(1.0));

    // Exact cdf on a fine grid, interpolated at the simulated averages.
    let table_z: Vec<f64> = (0..=CDF_TABLE)
        .map(|k| lo + (hi - lo) * k as f64 / CDF_TABLE as f64)
        .collect();
    let table = blocksupport::block_cdf_exact_curve(&bl, &cfg.ana, &table_z)?;
    let interp = |z: f64| -> f64 {
        let k = table.partition_point(|p| p.z < z);
        if k == 0 {
            return table[0].cdf;
        }
        if k >= table.len() {
            return table[table.len() - 1].cdf;
        }
        let (a, b) = (table[k - 1], table[k]);
        a.cdf + (b.cdf - a.cdf) * (z - a.z) / (b.z - a.z)
    };
    let ks = ks_distance(&averages, interp);

    let (zl, zh) = (q(0.005), q(0.995));
    let m = cfg.mc_points.max(2);
    let zs: Vec<f64> = (0..m)
        .map(|k| zl + (zh - zl) * k as f64 / (m - 1) as f64)
        .collect();
    let exact = blocksupport::block_pdf_exact_curve(&bl, &cfg.ana, &zs)?;
    let mc = blocksupport::block_pdf_mc_curve(&bl, &cfg.ana, &zs, cfg.mc_draws, cfg.mc_seed)?;
    let curve: Vec<_> = exact
        .iter()
        .zip(&mc)
        .map(|(e, m)| (e.z, e.density, m.density, m.se))
        .collect();
    let max_z_score = curve
        .iter()
        .map(|c| (c.1 - c.2).abs() / c.3.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(BlockDistribution {
        nodes,
        averages,
        ks,
        curve,
        max_z_score,
    })
}

/// Pass/fail line of the agreement report.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// True if `value` must be at least `threshold`, false if at most.
    pub at_least: bool,
}

impl Criterion {
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Criterion {
            name: name.into(),
            value,
            threshold,
            at_least: true,
        }
    }

    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Criterion {
            name: name.into(),
            value,
            threshold,
            at_least: false,
        }
    }

    pub fn passed(&self) -> bool {
        if self.at_least {
            self.value >= self.threshold
        } else {
            self.value <= self.threshold
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.6} ({} {})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            if self.at_least { ">=" } else { "<=" },
            self.threshold
        )
    }
}

/// Full agreement report of a replica.
#[derive(Debug, Clone)]
pub struct Report {
    pub nodes: NodeScatter,
    pub blocks: Vec<Pair>,
    pub distribution: BlockDistribution,
    pub criteria: Vec<Criterion>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(Criterion::passed)
    }
}

fn values(p: &[Pair]) -> (Vec<f64>, Vec<f64>) {
    p.iter().map(|x| (x.analytic, x.simulated)).unzip()
}

pub fn report(rep: &Replica) -> Result<Report> {
    let nodes = node_scatter(rep)?;
    let blocks = block_variance_scatter(rep)?;
    let distribution = block_distribution(rep)?;
    let (am, sm) = values(&nodes.mean);
    let (av, sv) = values(&nodes.variance);
    let within = blocks
        .par_iter()
        .filter(|b| (b.analytic - b.simulated).abs() <= 4.0 * b.se)
        .count();
    let criteria = vec![
        Criterion::at_least("node mean pearson r", pearson(&am, &sm), 0.99),
        Criterion::at_most(
            "node mean relative deviation",
            mean_relative_deviation(&am, &sm),
            0.05,
        ),
        Criterion::at_least("node variance pearson r", pearson(&av, &sv), 0.98),
        Criterion::at_most(
            "node variance relative deviation",
            mean_relative_deviation(&av, &sv),
            0.05,
        ),
        Criterion::at_least(
            "blocks within 4 SE of volume variance",
            within as f64 / blocks.len() as f64,
            0.95,
        ),
        Criterion::at_most("block average KS distance", distribution.ks, 0.05),
        Criterion::at_most("max |exact - MC| / SE", distribution.max_z_score, 4.0),
    ];
    Ok(Report {
        nodes,
        blocks,
        distribution,
        criteria,
    })
}

/// Exact block law used by the distribution check.
pub fn block_law(rep: &Replica, nodes: &[usize]) -> Result<BlockLaw> {
    let vol = VolumeSpec::new(nodes.to_vec(), rep.field.len())?;
    blocksupport::make_block_law(&rep.field, &vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistics_helpers() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &a) - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &neg) + 1.0).abs() < 1e-15);
        assert!((mean_relative_deviation(&[1.0, 2.0], &[1.1, 1.8]) - 0.1).abs() < 1e-12);
        let u: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
        assert!(ks_distance(&u, |x| x.clamp(0.0, 1.0)) <= 0.5e-3 + 1e-12);
        let (v, se) = variance_with_se(&[1.0, -1.0, 1.0, -1.0]);
        assert!((v - 4.0 / 3.0).abs() < 1e-12 && se >= 0.0);
    }
}
