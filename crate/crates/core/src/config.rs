//! Run configuration: one TOML file with fixed sections, unknown keys rejected.
//!
//! ```toml
//! [data]
//! samples = "samples.csv"   # x,y[,z],value[,weight]
//! out = "out"
//!
//! [grid]
//! origin = [0.0, 0.0]
//! spacing = 5.0
//! nx = 64
//! ny = 64
//!
//! [covariance]
//! structures = "0.1 nugget + 0.9 sph(100)"
//!
//! [anamorphosis]
//! form = "exponential"
//! lambda = 1.25
//!
//! [block]
//! size = [8, 8]
//! nodes = [[31, 31], [32, 31], [31, 32], [32, 32]]
//!
//! [mc]
//! draws = 1000000
//! seed = 13
//!
//! [simulate]
//! realizations = 2000
//! seed = 11
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::anamorphosis::{Anamorphosis, TailBounds};
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::kriging::{Grid, KrigingOptions};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    pub grid: GridSection,
    pub covariance: CovarianceSection,
    pub anamorphosis: AnamorphosisSection,
    #[serde(default)]
    pub kriging: KrigingSection,
    #[serde(default)]
    pub block: BlockSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub validate: ValidateSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Sample file, relative to the config file.
    pub samples: Option<PathBuf>,
    /// Output directory, relative to the config file.
    pub out: Option<PathBuf>,
}

/// Scalar or per-axis list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub origin: Vec<f64>,
    pub spacing: OneOrMany,
    pub nx: usize,
    pub ny: usize,
    pub nz: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSection {
    pub structures: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnamorphosisForm {
    Lognormal,
    Exponential,
    Empirical,
    /// Hermite expansion of the empirical fit; needs `hermite_degree`.
    Hermite,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnamorphosisSection {
    pub form: AnamorphosisForm,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    pub zmin: Option<f64>,
    pub zmax: Option<f64>,
    /// Replace the form by its Hermite expansion of this degree.
    pub hermite_degree: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrigingSection {
    pub max_samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSection {
    /// Tiling in nodes per axis.
    #[serde(default = "default_block_size")]
    pub size: Vec<usize>,
    /// Node indices (ix, iy[, iz]) of the volume for block distributions.
    #[serde(default)]
    pub nodes: Vec<Vec<usize>>,
    /// "min:max:steps"
    pub zgrid: Option<String>,
    #[serde(default)]
    pub method: BlockMethod,
}

fn default_block_size() -> Vec<usize> {
    vec![8, 8]
}

impl Default for BlockSection {
    fn default() -> Self {
        BlockSection {
            size: default_block_size(),
            nodes: Vec::new(),
            zgrid: None,
            method: BlockMethod::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockMethod {
    /// Exact up to four nodes, Monte-Carlo above.
    #[default]
    Auto,
    Exact,
    Mc,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_draws() -> usize {
    1_000_000
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            draws: default_draws(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_large: bool,
}

fn default_realizations() -> usize {
    2_000
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            realizations: default_realizations(),
            seed: 0,
            allow_large: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    /// Samples drawn from the synthetic truth.
    #[serde(default = "default_validate_samples")]
    pub samples: usize,
    #[serde(default = "default_min_sigma2")]
    pub min_sigma2: f64,
    /// Points of the exact-versus-Monte-Carlo density comparison.
    #[serde(default = "default_mc_points")]
    pub mc_points: usize,
}

fn default_validate_samples() -> usize {
    100
}

fn default_min_sigma2() -> f64 {
    0.05
}

fn default_mc_points() -> usize {
    50
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            samples: default_validate_samples(),
            min_sigma2: default_min_sigma2(),
            mc_points: default_mc_points(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(s) = &cfg.data.samples {
            let p = base.join(s);
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "sample file {} not found",
                    p.display()
                )));
            }
            cfg.data.samples = Some(p);
        }
        cfg.data.out = Some(base.join(cfg.data.out.as_deref().unwrap_or(Path::new("."))));
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        let dim = if g.nz.is_some() { 3 } else { 2 };
        let n = [g.nx, g.ny, g.nz.unwrap_or(1)];
        let mut origin = [0.0; 3];
        match g.origin.len() {
            0 => {}
            k if k == dim => origin[..dim].copy_from_slice(&g.origin),
            _ => return Err(Error::Config(format!("grid.origin needs {dim} entries"))),
        }
        let spacing = match &g.spacing {
            OneOrMany::One(s) => [*s; 3],
            OneOrMany::Many(v) if v.len() == dim => {
                let mut s = [v[0]; 3];
                s[..dim].copy_from_slice(v);
                s
            }
            OneOrMany::Many(_) => {
                return Err(Error::Config(format!("grid.spacing needs {dim} entries")))
            }
        };
        Grid::new(origin, spacing, n)
    }

    pub fn model(&self) -> Result<CovarianceModel> {
        self.covariance.structures.parse()
    }

    /// The configured anamorphosis; `values` and `weights` feed the
    /// empirical form.
    pub fn anamorphosis(&self, values: Option<(&[f64], Option<&[f64]>)>) -> Result<Anamorphosis> {
        let a = &self.anamorphosis;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("anamorphosis.{name} is required")))
        };
        let base = match a.form {
            AnamorphosisForm::Lognormal => {
                Anamorphosis::lognormal(need(a.mu, "mu")?, need(a.sigma, "sigma")?)?
            }
            AnamorphosisForm::Exponential => Anamorphosis::exponential(need(a.lambda, "lambda")?)?,
            AnamorphosisForm::Empirical | AnamorphosisForm::Hermite => {
                let (v, w) = values.ok_or_else(|| {
                    Error::Config("an empirical or hermite anamorphosis needs data.samples".into())
                })?;
                Anamorphosis::fit_empirical(
                    v,
                    w,
                    TailBounds {
                        z_min: a.zmin,
                        z_max: a.zmax,
                    },
                )?
            }
        };
        match (a.form, a.hermite_degree) {
            (_, Some(p)) => base.fit_hermite(p),
            (AnamorphosisForm::Hermite, None) => Err(Error::Config(
                "form = \"hermite\" needs anamorphosis.hermite_degree".into(),
            )),
            _ => Ok(base),
        }
    }

    pub fn kriging_options(&self) -> KrigingOptions {
        KrigingOptions {
            max_samples: self.kriging.max_samples,
        }
    }

    /// Block tiling as three per-axis node counts.
    pub fn block_size(&self) -> Result<[usize; 3]> {
        let s = &self.block.size;
        if s.is_empty() || s.len() > 3 {
            return Err(Error::Config("block.size needs 2 or 3 entries".into()));
        }
        let mut b = [1usize; 3];
        b[..s.len()].copy_from_slice(s);
        Ok(b)
    }

    /// Flat indices of `block.nodes` on `grid`.
    pub fn block_nodes(&self, grid: &Grid) -> Result<Vec<usize>> {
        self.block
            .nodes
            .iter()
            .map(|ijk| {
                if ijk.is_empty() || ijk.len() > 3 {
                    return Err(Error::Config(format!("bad block node {ijk:?}")));
                }
                let mut c = [0usize; 3];
                c[..ijk.len()].copy_from_slice(ijk);
                if (0..3).any(|a| c[a] >= grid.n[a]) {
                    return Err(Error::Config(format!("block node {ijk:?} is off the grid")));
                }
                Ok(grid.index(c[0], c[1], c[2]))
            })
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.data.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

/// Parses "min:max:steps" into `steps` equally spaced points.
pub fn parse_zgrid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Config(format!("zgrid {s:?} is not min:max:steps"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) || steps < 2 {
        return Err(bad());
    }
    Ok((0..steps)
        .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
        .collect())
}
