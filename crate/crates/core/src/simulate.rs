//! LU (Cholesky) simulation of Gaussian fields on a grid, unconditional and
//! conditional, plus the post-processing used to validate analytic results.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::seq::index;
use rayon::prelude::*;

use crate::anamorphosis::Anamorphosis;
use crate::conditional::{VolumeSpec, DEGENERATE_VARIANCE};
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::kriging::{Grid, KrigedField, SampleSet};
use crate::linalg::{cholesky_with_jitter, min_eigenvalue};
use crate::rng;

/// Node count above which simulation needs `allow_large`.
pub const NODE_CAP: usize = 4_096;
/// Magic bytes of the realization file format.
pub const MAGIC: &[u8; 6] = b"MGVOL1";

/// R realizations of a field over a grid, stored realization-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationSet {
    grid: Grid,
    count: usize,
    seed: u64,
    values: Vec<f64>,
}

impl RealizationSet {
    pub fn new(grid: Grid, count: usize, seed: u64, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * count {
            return Err(Error::InvalidInput(format!(
                "{} values for {} nodes × {count} realizations",
                values.len(),
                grid.len()
            )));
        }
        Ok(RealizationSet {
            grid,
            count,
            seed,
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn realization(&self, k: usize) -> &[f64] {
        let n = self.nodes();
        &self.values[k * n..(k + 1) * n]
    }

    /// Values of node `i` across realizations.
    pub fn node(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(i).step_by(self.nodes()).copied()
    }

    /// Ensemble mean and (unbiased) variance per node.
    pub fn node_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let r = self.count as f64;
        (0..self.nodes())
            .into_par_iter()
            .map(|i| {
                let mean = self.node(i).sum::<f64>() / r;
                let ss: f64 = self.node(i).map(|v| (v - mean) * (v - mean)).sum();
                (mean, ss / (r - 1.0).max(1.0))
            })
            .unzip()
    }

    /// Writes `MGVOL1`, node count and R as little-endian u64, then the
    /// values as little-endian f64, realization by realization.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.nodes() as u64).to_le_bytes())?;
        w.write_all(&(self.count as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a file written by `write_binary` for a known grid.
    pub fn read_binary<R: Read>(mut r: R, grid: Grid, seed: u64) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::parse("not a realization file"));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let nodes = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let count = u64::from_le_bytes(word) as usize;
        if nodes != grid.len() {
            return Err(Error::InvalidInput(format!(
                "file has {nodes} nodes, grid has {}",
                grid.len()
            )));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != nodes * count * 8 {
            return Err(Error::parse("truncated realization file"));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        RealizationSet::new(grid, count, seed, values)
    }
}

fn check_cap(nodes: usize, allow_large: bool) -> Result<()> {
    if nodes > NODE_CAP && !allow_large {
        return Err(Error::GridTooLarge {
            nodes,
            cap: NODE_CAP,
        });
    }
    Ok(())
}

/// Standard normal matrix (dim × count); column r comes from stream r.
fn normals(dim: usize, count: usize, seed: u64) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(dim, count);
    w.as_mut_slice()
        .par_chunks_mut(dim.max(1))
        .enumerate()
        .for_each(|(r, col)| {
            let mut g = rng::stream(seed, r as u64);
            for v in col {
                *v = rng::standard_normal(&mut g);
            }
        });
    w
}

/// Unconditional realizations L·w with L the Cholesky factor of the grid
/// covariance.
pub fn lu_unconditional(
    grid: &Grid,
    model: &CovarianceModel,
    count: usize,
    seed: u64,
    allow_large: bool,
) -> Result<RealizationSet> {
    let n = grid.len();
    check_cap(n, allow_large)?;
    let c = model.cov_matrix_unchecked(&grid.points());
    let factor = cholesky_with_jitter(&c, model.total_sill())
        .ok_or_else(|| Error::NotPsd(min_eigenvalue(&c)))?;
    drop(c);
    let l = factor.chol.l();
    let w = normals(n, count, seed);
    let sim = l * w;
    RealizationSet::new(*grid, count, seed, sim.as_slice().to_vec())
}

/// Conditional realizations drawn directly from N(y*_SK, Σ_SK) over the
/// grid. Nodes with zero SK variance (samples) are fixed at y*_SK.
pub fn lu_conditional(
    field: &KrigedField,
    count: usize,
    seed: u64,
    allow_large: bool,
) -> Result<RealizationSet> {
    let n = field.len();
    check_cap(n, allow_large)?;
    let free: Vec<usize> = (0..n)
        .filter(|&i| field.sigma2()[i] >= DEGENERATE_VARIANCE)
        .collect();
    let full = field.full_sk_covariance();
    let m = free.len();
    let sub = DMatrix::from_fn(m, m, |a, b| full[(free[a], free[b])]);
    drop(full);
    let mut values = Vec::with_capacity(n * count);
    if m == 0 {
        for _ in 0..count {
            values.extend_from_slice(field.y_star());
        }
    } else {
        let factor =
            cholesky_with_jitter(&sub, 1.0).ok_or_else(|| Error::NotPsd(min_eigenvalue(&sub)))?;
        drop(sub);
        let l = factor.chol.l();
        let sim = l * normals(m, count, seed);
        for r in 0..count {
            let start = values.len();
            values.extend_from_slice(field.y_star());
            let col = sim.column(r);
            for (k, &i) in free.iter().enumerate() {
                values[start + i] += col[k];
            }
        }
    }
    RealizationSet::new(*field.grid(), count, seed, values)
}

/// Applies φ node-wise.
pub fn backtransform(set: &RealizationSet, ana: &Anamorphosis) -> RealizationSet {
    let values = set.values.par_iter().map(|&y| ana.backward(y)).collect();
    RealizationSet {
        grid: set.grid,
        count: set.count,
        seed: set.seed,
        values,
    }
}

/// Mean over the volume's nodes, per realization.
pub fn block_average(set: &RealizationSet, vol: &VolumeSpec) -> Vec<f64> {
    let inv = 1.0 / vol.len() as f64;
    (0..set.count)
        .map(|k| {
            let r = set.realization(k);
            vol.nodes().iter().map(|&i| r[i]).sum::<f64>() * inv
        })
        .collect()
}

/// `count` distinct nodes drawn uniformly from raw realization `k`; scores
/// are φ⁻¹ of the drawn values. Samples are listed in node order.
pub fn sample_from_realization(
    set: &RealizationSet,
    k: usize,
    count: usize,
    seed: u64,
    ana: &Anamorphosis,
) -> Result<SampleSet> {
    let n = set.nodes();
    if count > n {
        return Err(Error::CountExceedsNodes {
            requested: count,
            available: n,
        });
    }
    if k >= set.count {
        return Err(Error::InvalidInput(format!(
            "realization {k} of {}",
            set.count
        )));
    }
    let mut g = rng::stream(seed, 0);
    let mut picks = index::sample(&mut g, n, count).into_vec();
    picks.sort_unstable();
    let r = set.realization(k);
    let positions = picks.iter().map(|&i| set.grid.point(i)).collect();
    let values = picks.iter().map(|&i| r[i]).collect();
    SampleSet::from_raw(positions, values, ana)
}
