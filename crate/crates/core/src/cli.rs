//! Batch commands behind the `mgvol` binary.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::anamorphosis::Anamorphosis;
use crate::blocksupport::{self, Density, Probability};
use crate::conditional::{self, VolumeSpec};
use crate::config::{self, BlockMethod, RunConfig};
use crate::covariance::Point;
use crate::error::{Error, ErrorClass, Result};
use crate::kriging::{krige_field_with, Grid, KrigedField, SampleSet};
use crate::simulate;
use crate::validate::{self, Pair, ReplicaConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Default number of points of a block-distribution curve.
const DEFAULT_Z_STEPS: usize = 101;
/// Upper quantile of each node used for the default curve range.
const UPPER_Q: f64 = 1.0 - 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Transform,
    Krige,
    Moments,
    Volvar,
    Blockdist,
    Simulate,
    Validate,
}

#[derive(Debug, Parser)]
#[command(
    name = "mgvol",
    version,
    about = "Multi-Gaussian conditional and block-support laws"
)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, overriding data.out.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the command's random source (mc.seed or simulate.seed).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub allow_large: bool,
    /// Block-distribution points as min:max:steps.
    #[arg(long)]
    pub zgrid: Option<String>,
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Done,
    ValidationFailed,
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(&args) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::ValidationFailed) => EXIT_VALIDATION,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Input => EXIT_INPUT,
        ErrorClass::Numerical => EXIT_NUMERICAL,
    }
}

pub fn run(args: &Args) -> Result<Outcome> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.data.out = Some(out.clone());
    }
    if let Some(d) = args.draws {
        cfg.mc.draws = d;
    }
    if let Some(s) = args.seed {
        match args.command {
            Command::Simulate | Command::Validate => cfg.simulate.seed = s,
            _ => cfg.mc.seed = s,
        }
    }
    if let Some(z) = &args.zgrid {
        cfg.block.zgrid = Some(z.clone());
    }
    cfg.simulate.allow_large |= args.allow_large;
    let out = cfg.out_dir();
    fs::create_dir_all(&out)?;
    match args.command {
        Command::Transform => cmd_transform(&cfg, &out),
        Command::Krige => cmd_krige(&cfg, &out),
        Command::Moments => cmd_moments(&cfg, &out),
        Command::Volvar => cmd_volvar(&cfg, &out),
        Command::Blockdist => cmd_blockdist(&cfg, &out),
        Command::Simulate => cmd_simulate(&cfg, &out),
        Command::Validate => cmd_validate(&cfg, &out),
    }
}

/// Raw samples as read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSamples {
    pub dim: usize,
    pub positions: Vec<Point>,
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

/// Reads `x,y[,z],value[,weight]` with a header row.
pub fn read_samples(path: &Path) -> Result<RawSamples> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (x, y, v) = match (col("x"), col("y"), col("value")) {
        (Some(x), Some(y), Some(v)) => (x, y, v),
        _ => {
            return Err(Error::InvalidInput(format!(
                "{} needs x, y and value columns",
                path.display()
            )))
        }
    };
    let z = col("z");
    let w = col("weight");
    let mut out = RawSamples {
        dim: if z.is_some() { 3 } else { 2 },
        positions: Vec::new(),
        values: Vec::new(),
        weights: w.map(|_| Vec::new()),
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            let s = rec.get(k).unwrap_or("");
            s.parse().map_err(|_| {
                Error::parse(format!("{}:{}: bad number {s:?}", path.display(), line + 2))
            })
        };
        let zc = match z {
            Some(k) => num(k)?,
            None => 0.0,
        };
        out.positions.push(Point::new(num(x)?, num(y)?, zc));
        out.values.push(num(v)?);
        if let (Some(k), Some(ws)) = (w, out.weights.as_mut()) {
            ws.push(num(k)?);
        }
    }
    if out.values.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} has no samples",
            path.display()
        )));
    }
    if out.values.iter().all(|&v| v == out.values[0]) {
        return Err(Error::DegenerateData("all sample values are equal".into()));
    }
    Ok(out)
}

/// Shortest round-trip text of a float, in exponent form outside
/// [1e-4, 1e16).
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `ix,iy[,iz],x,y[,z],<columns>` for every grid node.
pub fn write_map(path: &Path, grid: &Grid, columns: &[(&str, &[f64])]) -> Result<()> {
    let planar = grid.is_planar();
    let mut w = create(path)?;
    let mut head: Vec<&str> = if planar {
        vec!["ix", "iy", "x", "y"]
    } else {
        vec!["ix", "iy", "iz", "x", "y", "z"]
    };
    head.extend(columns.iter().map(|c| c.0));
    writeln!(w, "{}", head.join(","))?;
    for i in 0..grid.len() {
        let [ix, iy, iz] = grid.ijk(i);
        let p = grid.point(i);
        let mut row = if planar {
            vec![
                ix.to_string(),
                iy.to_string(),
                fmt_num(p.x()),
                fmt_num(p.y()),
            ]
        } else {
            vec![
                ix.to_string(),
                iy.to_string(),
                iz.to_string(),
                fmt_num(p.x()),
                fmt_num(p.y()),
                fmt_num(p.z()),
            ]
        };
        row.extend(columns.iter().map(|c| fmt_num(c.1[i])));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn write_rows(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{header}")?;
    for r in rows {
        let cells: Vec<String> = r.into_iter().map(fmt_num).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn write_pairs(path: &Path, pairs: &[Pair]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "id,analytic,simulated,se")?;
    for p in pairs {
        writeln!(
            w,
            "{},{},{},{}",
            p.id,
            fmt_num(p.analytic),
            fmt_num(p.simulated),
            fmt_num(p.se)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn load_samples(cfg: &RunConfig) -> Result<Option<RawSamples>> {
    cfg.data.samples.as_deref().map(read_samples).transpose()
}

fn anamorphosis(cfg: &RunConfig, raw: Option<&RawSamples>) -> Result<Anamorphosis> {
    cfg.anamorphosis(raw.map(|r| (r.values.as_slice(), r.weights.as_deref())))
}

/// Kriged field from the configured samples, or the no-data field.
fn load_field(cfg: &RunConfig) -> Result<(KrigedField, Anamorphosis)> {
    let raw = load_samples(cfg)?;
    let ana = anamorphosis(cfg, raw.as_ref())?;
    let samples = match raw {
        Some(r) => SampleSet::from_raw(r.positions, r.values, &ana)?,
        None => SampleSet::empty(),
    };
    let field = krige_field_with(&samples, &cfg.model()?, &cfg.grid()?, cfg.kriging_options())?;
    if field.clamp_warnings() > 0 {
        eprintln!(
            "warning: {} nodes had slightly negative SK variance clamped to zero",
            field.clamp_warnings()
        );
    }
    Ok((field, ana))
}

pub fn cmd_transform(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let raw =
        load_samples(cfg)?.ok_or_else(|| Error::Config("transform needs data.samples".into()))?;
    let ana = anamorphosis(cfg, Some(&raw))?;
    let scores = raw
        .values
        .iter()
        .map(|&v| ana.forward(v))
        .collect::<Result<Vec<f64>>>()?;
    let mut worst: f64 = 0.0;
    let mut w = create(&out.join("scores.csv"))?;
    let coords = if raw.dim == 3 { "x,y,z" } else { "x,y" };
    writeln!(w, "{coords},value,normal_score,roundtrip_error")?;
    for ((p, &v), &s) in raw.positions.iter().zip(&raw.values).zip(&scores) {
        let err = (ana.backward(s) - v).abs();
        worst = worst.max(err);
        let mut row = vec![fmt_num(p.x()), fmt_num(p.y())];
        if raw.dim == 3 {
            row.push(fmt_num(p.z()));
        }
        row.extend([fmt_num(v), fmt_num(s), fmt_num(err)]);
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    println!(
        "transformed {} samples, max round-trip error {}",
        scores.len(),
        fmt_num(worst)
    );
    Ok(Outcome::Done)
}

pub fn cmd_krige(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let (field, _) = load_field(cfg)?;
    write_map(
        &out.join("krige.csv"),
        field.grid(),
        &[("y_star", field.y_star()), ("sigma2", field.sigma2())],
    )?;
    Ok(Outcome::Done)
}

pub fn cmd_moments(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let (field, ana) = load_field(cfg)?;
    let mean = conditional::conditional_mean_map(&field, &ana)?;
    let var = conditional::conditional_variance_map(&field, &ana)?;
    write_map(
        &out.join("moments.csv"),
        field.grid(),
        &[("mean", &mean), ("variance", &var)],
    )?;
    Ok(Outcome::Done)
}

pub fn cmd_volvar(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let (field, ana) = load_field(cfg)?;
    let grid = *field.grid();
    let block = cfg.block_size()?;
    let vols = VolumeSpec::tiles(&grid, block)?;
    let counts: Vec<usize> = (0..3).map(|a| grid.n[a].div_ceil(block[a])).collect();
    let planar = grid.is_planar();
    let mut w = create(&out.join("volvar.csv"))?;
    writeln!(
        w,
        "{}",
        if planar {
            "bx,by,x,y,nodes,mean,volume_variance"
        } else {
            "bx,by,bz,x,y,z,nodes,mean,volume_variance"
        }
    )?;
    for (b, vol) in vols.iter().enumerate() {
        let var = conditional::volume_variance(&field, vol, &ana)?;
        let mut mean = 0.0;
        let mut centre = [0.0; 3];
        for &i in vol.nodes() {
            mean += conditional::node_law(&field, i, &ana)?.mean()?;
            let p = grid.point(i);
            for (a, c) in centre.iter_mut().enumerate() {
                *c += p.0[a];
            }
        }
        let k = vol.len() as f64;
        let (bx, by, bz) = (
            b % counts[0],
            (b / counts[0]) % counts[1],
            b / (counts[0] * counts[1]),
        );
        let mut row = vec![bx.to_string(), by.to_string()];
        if !planar {
            row.push(bz.to_string());
        }
        let dims = if planar { 2 } else { 3 };
        row.extend(centre[..dims].iter().map(|c| fmt_num(c / k)));
        row.extend([vol.len().to_string(), fmt_num(mean / k), fmt_num(var)]);
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(Outcome::Done)
}

/// Default z points: from the lower cdf bound to the mean of the nodes'
/// upper quantiles.
fn default_zs(bl: &blocksupport::BlockLaw, ana: &Anamorphosis) -> Result<Vec<f64>> {
    let lo = blocksupport::lower_bound(bl, ana)?;
    let n = bl.len();
    let mut hi = 0.0;
    for i in 0..n {
        let law =
            conditional::PointLaw::new(bl.y_star()[i], bl.covariance()[(i, i)].max(0.0), ana)?;
        hi += law.quantile(UPPER_Q);
    }
    hi /= n as f64;
    if !(hi > lo) {
        return Err(Error::DegenerateLaw);
    }
    Ok((0..DEFAULT_Z_STEPS)
        .map(|k| lo + (hi - lo) * k as f64 / (DEFAULT_Z_STEPS - 1) as f64)
        .collect())
}

pub fn cmd_blockdist(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let (field, ana) = load_field(cfg)?;
    let nodes = cfg.block_nodes(field.grid())?;
    if nodes.is_empty() {
        return Err(Error::Config("blockdist needs block.nodes".into()));
    }
    let vol = VolumeSpec::new(nodes, field.len())?;
    let bl = blocksupport::make_block_law(&field, &vol)?;
    let zs = match &cfg.block.zgrid {
        Some(s) => config::parse_zgrid(s)?,
        None => default_zs(&bl, &ana)?,
    };
    let exact = match cfg.block.method {
        BlockMethod::Exact => true,
        BlockMethod::Mc => false,
        BlockMethod::Auto => bl.len() <= blocksupport::MAX_EXACT_DIM,
    };
    let (pdf, cdf): (Vec<Density>, Vec<Probability>) = if exact {
        (
            blocksupport::block_pdf_exact_curve(&bl, &ana, &zs)?,
            blocksupport::block_cdf_exact_curve(&bl, &ana, &zs)?,
        )
    } else {
        (
            blocksupport::block_pdf_mc_curve(&bl, &ana, &zs, cfg.mc.draws, cfg.mc.seed)?,
            blocksupport::block_cdf_curve(&bl, &ana, &zs, cfg.mc.draws, cfg.mc.seed)?,
        )
    };
    write_rows(
        &out.join("blockdist_pdf.csv"),
        "z,density,se",
        pdf.iter().map(|d| vec![d.z, d.density, d.se]),
    )?;
    write_rows(
        &out.join("blockdist_cdf.csv"),
        "z,cdf,se",
        cdf.iter().map(|p| vec![p.z, p.cdf, p.se]),
    )?;
    Ok(Outcome::Done)
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let s = &cfg.simulate;
    let (set, ana) = if cfg.data.samples.is_some() {
        let (field, ana) = load_field(cfg)?;
        (
            simulate::lu_conditional(&field, s.realizations, s.seed, s.allow_large)?,
            ana,
        )
    } else {
        let ana = anamorphosis(cfg, None)?;
        (
            simulate::lu_unconditional(
                &cfg.grid()?,
                &cfg.model()?,
                s.realizations,
                s.seed,
                s.allow_large,
            )?,
            ana,
        )
    };
    set.write_binary(create(&out.join("realizations.bin"))?)?;
    let (gm, gv) = set.node_moments();
    let (rm, rv) = simulate::backtransform(&set, &ana).node_moments();
    write_map(
        &out.join("simulate_summary.csv"),
        set.grid(),
        &[
            ("gaussian_mean", &gm),
            ("gaussian_variance", &gv),
            ("mean", &rm),
            ("variance", &rv),
        ],
    )?;
    Ok(Outcome::Done)
}

/// Replica inputs from a run configuration.
pub fn replica_config(cfg: &RunConfig) -> Result<ReplicaConfig> {
    if cfg.data.samples.is_some() {
        return Err(Error::Config(
            "validate draws its own samples; remove data.samples".into(),
        ));
    }
    let grid = cfg.grid()?;
    let nodes = cfg.block_nodes(&grid)?;
    Ok(ReplicaConfig {
        grid,
        model: cfg.model()?,
        ana: anamorphosis(cfg, None)?,
        samples: cfg.validate.samples,
        realizations: cfg.simulate.realizations,
        sim_seed: cfg.simulate.seed,
        block: cfg.block_size()?,
        block_nodes: if nodes.is_empty() { None } else { Some(nodes) },
        mc_draws: cfg.mc.draws,
        mc_seed: cfg.mc.seed,
        mc_points: cfg.validate.mc_points,
        min_sigma2: cfg.validate.min_sigma2,
        allow_large: cfg.simulate.allow_large,
    })
}

pub fn cmd_validate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let rep = validate::build_replica(&replica_config(cfg)?)?;
    let report = validate::report(&rep)?;
    write_pairs(&out.join("node_mean_scatter.csv"), &report.nodes.mean)?;
    write_pairs(
        &out.join("node_variance_scatter.csv"),
        &report.nodes.variance,
    )?;
    write_pairs(&out.join("block_variance_scatter.csv"), &report.blocks)?;
    let d = &report.distribution;
    write_rows(
        &out.join("block_pdf_compare.csv"),
        "z,exact,mc,se",
        d.curve.iter().map(|c| vec![c.0, c.1, c.2, c.3]),
    )?;
    write_rows(
        &out.join("block_averages.csv"),
        "average",
        d.averages.iter().map(|&a| vec![a]),
    )?;
    let mut w = create(&out.join("report.txt"))?;
    let nodes: Vec<String> = d.nodes.iter().map(|n| n.to_string()).collect();
    writeln!(w, "block distribution nodes: {}", nodes.join(" "))?;
    for c in &report.criteria {
        writeln!(w, "{}", c.line())?;
        println!("{}", c.line());
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    writeln!(w, "overall: {verdict}")?;
    w.flush()?;
    println!("overall: {verdict} ({:.1} s)", rep.seconds);
    Ok(if report.passed() {
        Outcome::Done
    } else {
        Outcome::ValidationFailed
    })
}
