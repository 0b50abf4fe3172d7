//! Simple kriging of Gaussian scores with a zero mean: SK mean and variance
//! per target, and the SK error cross-covariance Σ_SK between targets.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::anamorphosis::Anamorphosis;
use crate::covariance::{check_distinct, CovarianceModel, Point};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, Factor};

/// Tolerance on the unit total sill required of the Gaussian model.
pub const SILL_TOLERANCE: f64 = 1e-9;
/// Clamping of σ²_SK by more than this counts as a warning.
pub const CLAMP_WARN: f64 = 1e-8;

/// Conditioning observations: positions, raw values and Gaussian scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    positions: Vec<Point>,
    values: Vec<f64>,
    scores: Vec<f64>,
}

impl SampleSet {
    pub fn new(positions: Vec<Point>, values: Vec<f64>, scores: Vec<f64>) -> Result<Self> {
        if positions.len() != values.len() || positions.len() != scores.len() {
            return Err(Error::InvalidInput(format!(
                "sample lists differ in length ({}, {}, {})",
                positions.len(),
                values.len(),
                scores.len()
            )));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample coordinate".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite gaussian score".into()));
        }
        check_distinct(&positions)?;
        Ok(SampleSet {
            positions,
            values,
            scores,
        })
    }

    /// Scores computed as φ⁻¹ of the raw values.
    pub fn from_raw(positions: Vec<Point>, values: Vec<f64>, ana: &Anamorphosis) -> Result<Self> {
        let scores = values
            .iter()
            .map(|&z| ana.forward(z))
            .collect::<Result<Vec<_>>>()?;
        SampleSet::new(positions, values, scores)
    }

    pub fn empty() -> Self {
        SampleSet::default()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Copy without sample `k`.
    pub fn without(&self, k: usize) -> SampleSet {
        let keep = |v: &[f64]| {
            v.iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, x)| *x)
                .collect::<Vec<_>>()
        };
        SampleSet {
            positions: self
                .positions
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, p)| *p)
                .collect(),
            values: keep(&self.values),
            scores: keep(&self.scores),
        }
    }
}

/// Regular grid of nodes. Index = ix + nx·(iy + ny·iz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub n: [usize; 3],
}

impl Grid {
    pub fn new(origin: [f64; 3], spacing: [f64; 3], n: [usize; 3]) -> Result<Self> {
        if n.contains(&0) {
            return Err(Error::InvalidInput(format!("empty grid {n:?}")));
        }
        if origin.iter().any(|v| !v.is_finite())
            || spacing.iter().any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidInput(
                "grid origin must be finite and spacing > 0".into(),
            ));
        }
        Ok(Grid { origin, spacing, n })
    }

    /// nx × ny grid in the plane z = 0.
    pub fn planar(origin: [f64; 2], spacing: f64, nx: usize, ny: usize) -> Result<Self> {
        Grid::new(
            [origin[0], origin[1], 0.0],
            [spacing, spacing, spacing],
            [nx, ny, 1],
        )
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_planar(&self) -> bool {
        self.n[2] == 1
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.n[0] * (iy + self.n[1] * iz)
    }

    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let ix = idx % self.n[0];
        let rest = idx / self.n[0];
        [ix, rest % self.n[1], rest / self.n[1]]
    }

    pub fn point(&self, idx: usize) -> Point {
        let ijk = self.ijk(idx);
        Point([
            self.origin[0] + ijk[0] as f64 * self.spacing[0],
            self.origin[1] + ijk[1] as f64 * self.spacing[1],
            self.origin[2] + ijk[2] as f64 * self.spacing[2],
        ])
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Node within half a spacing of `p` on every axis, if any.
    pub fn node_at(&self, p: &Point) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for (a, slot) in ijk.iter_mut().enumerate() {
            let f = (p.0[a] - self.origin[a]) / self.spacing[a];
            let r = f.round();
            if r < 0.0 || r >= self.n[a] as f64 || (f - r).abs() > 1e-6 {
                return None;
            }
            *slot = r as usize;
        }
        Some(self.index(ijk[0], ijk[1], ijk[2]))
    }
}

/// Factorized SK system for one (samples, model) pair.
#[derive(Debug, Clone)]
pub struct KrigingSystem {
    model: CovarianceModel,
    positions: Vec<Point>,
    scores: DVector<f64>,
    factor: Option<Factor>,
    /// L⁻¹y, so that y* = (L⁻¹k)ᵀ(L⁻¹y).
    whitened_scores: DVector<f64>,
}

fn check_unit_sill(model: &CovarianceModel) -> Result<()> {
    let sill = model.total_sill();
    if (sill - 1.0).abs() > SILL_TOLERANCE {
        return Err(Error::InvalidModel(format!(
            "gaussian scores need a total sill of 1, got {sill}"
        )));
    }
    Ok(())
}

impl KrigingSystem {
    pub fn new(samples: &SampleSet, model: &CovarianceModel) -> Result<Self> {
        check_unit_sill(model)?;
        let positions = samples.positions().to_vec();
        let scores = DVector::from_column_slice(samples.scores());
        let (factor, whitened_scores) = if positions.is_empty() {
            (None, DVector::zeros(0))
        } else {
            let c = model.cov_matrix(&positions)?;
            let f = cholesky_with_jitter(&c, model.total_sill()).ok_or(Error::SingularSystem)?;
            let w = f
                .chol
                .l_dirty()
                .solve_lower_triangular(&scores)
                .ok_or(Error::SingularSystem)?;
            (Some(f), w)
        };
        Ok(KrigingSystem {
            model: model.clone(),
            positions,
            scores,
            factor,
            whitened_scores,
        })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn sample_count(&self) -> usize {
        self.positions.len()
    }

    /// Jitter added to the sample covariance diagonal (0 if none).
    pub fn jitter(&self) -> f64 {
        self.factor.as_ref().map_or(0.0, |f| f.jitter)
    }

    /// L⁻¹k for the covariance vector k between the samples and `target`.
    pub fn whitened(&self, target: &Point) -> DVector<f64> {
        let k = DVector::from_iterator(
            self.positions.len(),
            self.positions.iter().map(|p| self.model.cov(p, target)),
        );
        match &self.factor {
            None => k,
            Some(f) => f
                .chol
                .l_dirty()
                .solve_lower_triangular(&k)
                .expect("cholesky factor has a nonzero diagonal"),
        }
    }

    /// L⁻¹K for many targets at once (samples × targets).
    pub fn whitened_many(&self, targets: &[Point]) -> DMatrix<f64> {
        let k = self.model.cross_matrix(&self.positions, targets);
        match &self.factor {
            None => k,
            Some(f) => f
                .chol
                .l_dirty()
                .solve_lower_triangular(&k)
                .expect("cholesky factor has a nonzero diagonal"),
        }
    }

    /// SK weights C⁻¹k for `target`.
    pub fn weights(&self, target: &Point) -> DVector<f64> {
        let k = DVector::from_iterator(
            self.positions.len(),
            self.positions.iter().map(|p| self.model.cov(p, target)),
        );
        match &self.factor {
            None => k,
            Some(f) => f.chol.solve(&k),
        }
    }

    /// (y*_SK, σ²_SK, amount clamped) at `target`.
    fn krige_raw(&self, target: &Point) -> (f64, f64, f64) {
        let w = self.whitened(target);
        let y_star = w.dot(&self.whitened_scores);
        let raw = self.model.cov(target, target) - w.norm_squared();
        let sigma2 = raw.clamp(0.0, 1.0);
        (y_star, sigma2, (sigma2 - raw).abs())
    }

    /// (y*_SK, σ²_SK) at `target`, σ² clamped to [0, 1].
    pub fn krige(&self, target: &Point) -> (f64, f64) {
        let (y, s, _) = self.krige_raw(target);
        (y, s)
    }

    /// σ_SK(u_i, u_j) = C(u_i, u_j) − k_iᵀC⁻¹k_j.
    pub fn cross_covariance(&self, a: &Point, b: &Point) -> f64 {
        self.model.cov(a, b) - self.whitened(a).dot(&self.whitened(b))
    }

    pub fn sample_scores(&self) -> &DVector<f64> {
        &self.scores
    }
}

/// SK mean and variance at one target using every sample.
pub fn simple_krige(
    samples: &SampleSet,
    model: &CovarianceModel,
    target: &Point,
) -> Result<(f64, f64)> {
    Ok(KrigingSystem::new(samples, model)?.krige(target))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KrigingOptions {
    /// Use only the nearest samples per node. Cross-covariances then describe
    /// the errors of these local estimators, and Σ_SK is no longer the
    /// conditional covariance of the multi-Gaussian model.
    pub max_samples: Option<usize>,
}

#[derive(Debug, Clone)]
enum Neighbourhood {
    /// L⁻¹K over all nodes (samples × nodes).
    Global(DMatrix<f64>),
    /// Per node: sample indices and SK weights.
    Local(Vec<(Vec<usize>, Vec<f64>)>),
}

/// SK results on a grid, with the machinery for Σ_SK entries between nodes.
#[derive(Debug, Clone)]
pub struct KrigedField {
    grid: Grid,
    system: KrigingSystem,
    y_star: Vec<f64>,
    sigma2: Vec<f64>,
    clamp_warnings: usize,
    neighbourhood: Neighbourhood,
    nodes: Vec<Point>,
}

/// Kriges every grid node with a global neighbourhood.
pub fn krige_field(
    samples: &SampleSet,
    model: &CovarianceModel,
    grid: &Grid,
) -> Result<KrigedField> {
    krige_field_with(samples, model, grid, KrigingOptions::default())
}

pub fn krige_field_with(
    samples: &SampleSet,
    model: &CovarianceModel,
    grid: &Grid,
    options: KrigingOptions,
) -> Result<KrigedField> {
    let system = KrigingSystem::new(samples, model)?;
    let nodes = grid.points();
    let local = options.max_samples.filter(|&m| m < samples.len());
    match local {
        None => {
            let w = system.whitened_many(&nodes);
            let mut y_star = Vec::with_capacity(nodes.len());
            let mut sigma2 = Vec::with_capacity(nodes.len());
            let mut clamp_warnings = 0;
            for (j, node) in nodes.iter().enumerate() {
                let col = w.column(j);
                y_star.push(col.dot(&system.whitened_scores));
                let raw = model.cov(node, node) - col.norm_squared();
                let s = raw.clamp(0.0, 1.0);
                if (s - raw).abs() > CLAMP_WARN {
                    clamp_warnings += 1;
                }
                sigma2.push(s);
            }
            Ok(KrigedField {
                grid: *grid,
                system,
                y_star,
                sigma2,
                clamp_warnings,
                neighbourhood: Neighbourhood::Global(w),
                nodes,
            })
        }
        Some(m) => {
            let results = nodes
                .par_iter()
                .map(|node| local_krige(samples, model, node, m))
                .collect::<Result<Vec<_>>>()?;
            let mut y_star = Vec::with_capacity(nodes.len());
            let mut sigma2 = Vec::with_capacity(nodes.len());
            let mut per_node = Vec::with_capacity(nodes.len());
            let mut clamp_warnings = 0;
            for (y, raw, idx, lambda) in results {
                let s = raw.clamp(0.0, 1.0);
                if (s - raw).abs() > CLAMP_WARN {
                    clamp_warnings += 1;
                }
                y_star.push(y);
                sigma2.push(s);
                per_node.push((idx, lambda));
            }
            Ok(KrigedField {
                grid: *grid,
                system,
                y_star,
                sigma2,
                clamp_warnings,
                neighbourhood: Neighbourhood::Local(per_node),
                nodes,
            })
        }
    }
}

type LocalResult = (f64, f64, Vec<usize>, Vec<f64>);

fn local_krige(
    samples: &SampleSet,
    model: &CovarianceModel,
    target: &Point,
    max: usize,
) -> Result<LocalResult> {
    let pos = samples.positions();
    let mut idx: Vec<usize> = (0..pos.len()).collect();
    idx.sort_by(|&a, &b| {
        pos[a]
            .distance(target)
            .total_cmp(&pos[b].distance(target))
            .then(a.cmp(&b))
    });
    idx.truncate(max);
    idx.sort_unstable();
    let pts: Vec<Point> = idx.iter().map(|&i| pos[i]).collect();
    let c = model.cov_matrix(&pts)?;
    let f = cholesky_with_jitter(&c, model.total_sill()).ok_or(Error::SingularSystem)?;
    let k = DVector::from_iterator(pts.len(), pts.iter().map(|p| model.cov(p, target)));
    let lambda = f.chol.solve(&k);
    let y: f64 = idx
        .iter()
        .zip(lambda.iter())
        .map(|(&i, l)| l * samples.scores()[i])
        .sum();
    let raw = model.cov(target, target) - lambda.dot(&k);
    Ok((y, raw, idx, lambda.iter().copied().collect()))
}

impl KrigedField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn system(&self) -> &KrigingSystem {
        &self.system
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

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    /// Nodes whose σ²_SK was clamped by more than `CLAMP_WARN`.
    pub fn clamp_warnings(&self) -> usize {
        self.clamp_warnings
    }

    pub fn is_global(&self) -> bool {
        matches!(self.neighbourhood, Neighbourhood::Global(_))
    }

    /// σ_SK between grid nodes `i` and `j`.
    pub fn sk_cross_covariance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.sigma2[i];
        }
        let model = self.system.model();
        let c = model.cov(&self.nodes[i], &self.nodes[j]);
        match &self.neighbourhood {
            Neighbourhood::Global(w) => c - w.column(i).dot(&w.column(j)),
            Neighbourhood::Local(per_node) => {
                // Cov(Y_i − λ_iᵀY, Y_j − λ_jᵀY)
                let pos = self.system.positions.as_slice();
                let (si, li) = &per_node[i];
                let (sj, lj) = &per_node[j];
                let mut v = c;
                for (&a, la) in si.iter().zip(li) {
                    v -= la * model.cov(&pos[a], &self.nodes[j]);
                }
                for (&b, lb) in sj.iter().zip(lj) {
                    v -= lb * model.cov(&pos[b], &self.nodes[i]);
                }
                for (&a, la) in si.iter().zip(li) {
                    for (&b, lb) in sj.iter().zip(lj) {
                        v += la * lb * model.cov(&pos[a], &pos[b]);
                    }
                }
                v
            }
        }
    }

    /// σ_SK between arbitrary points, through the global system.
    pub fn sk_cross_covariance_points(&self, a: &Point, b: &Point) -> f64 {
        self.system.cross_covariance(a, b)
    }

    /// Σ_SK restricted to `nodes`.
    pub fn sk_covariance_matrix(&self, nodes: &[usize]) -> DMatrix<f64> {
        let n = nodes.len();
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = self.sk_cross_covariance(nodes[a], nodes[b]);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        m
    }

    /// Σ_SK over the full grid.
    pub fn full_sk_covariance(&self) -> DMatrix<f64> {
        match &self.neighbourhood {
            Neighbourhood::Global(w) => {
                let mut m = self.system.model().cov_matrix_unchecked(&self.nodes);
                m.gemm_tr(-1.0, w, w, 1.0);
                for (i, s) in self.sigma2.iter().enumerate() {
                    m[(i, i)] = *s;
                }
                m
            }
            Neighbourhood::Local(_) => {
                let all: Vec<usize> = (0..self.len()).collect();
                self.sk_covariance_matrix(&all)
            }
        }
    }
}
