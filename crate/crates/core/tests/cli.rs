use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mgvol::cli::fmt_num;
use tempfile::TempDir;

const SAMPLES: &str = "x,y,value\n0,0,0.8\n12,3,2.5\n4,17,1.1\n19,19,0.35\n";

fn config(samples: Option<&str>, extra: &str) -> String {
    let data = match samples {
        Some(s) => format!("[data]\nsamples = \"{s}\"\nout = \"out\"\n"),
        None => "[data]\nout = \"out\"\n".to_string(),
    };
    format!(
        r#"{data}
[grid]
spacing = 2.5
nx = 10
ny = 9
[covariance]
structures = "0.2 nugget + 0.8 sph(20)"
{extra}"#
    )
}

const LOGNORMAL: &str = "[anamorphosis]\nform = \"lognormal\"\nmu = 0.3\nsigma = 0.7\n";
const EXPONENTIAL: &str = "[anamorphosis]\nform = \"exponential\"\nlambda = 1.25\n";

struct Run {
    dir: TempDir,
}

impl Run {
    fn new(cfg: &str, samples: Option<&str>) -> Run {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), cfg).unwrap();
        if let Some(s) = samples {
            fs::write(dir.path().join("samples.csv"), s).unwrap();
        }
        Run { dir }
    }

    fn exec(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_mgvol"))
            .args(args)
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .output()
            .unwrap()
    }

    fn code(&self, args: &[&str]) -> i32 {
        let o = self.exec(args);
        o.status.code().unwrap()
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap()).collect())
        .collect();
    (head, rows)
}

fn column(head: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let k = head.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[k]).collect()
}

fn reemit(path: &Path) -> String {
    let (head, rows) = read_table(path);
    let mut s = head.join(",") + "\n";
    for r in rows {
        let cells: Vec<String> = r.into_iter().map(fmt_num).collect();
        s += &(cells.join(",") + "\n");
    }
    s
}

#[test]
fn transform_writes_lognormal_scores() {
    let run = Run::new(&config(Some("samples.csv"), LOGNORMAL), Some(SAMPLES));
    assert_eq!(run.code(&["transform"]), 0);
    let (head, rows) = read_table(&run.out("scores.csv"));
    assert_eq!(head, ["x", "y", "value", "normal_score", "roundtrip_error"]);
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let expect = (r[2].ln() - 0.3) / 0.7;
        assert!((r[3] - expect).abs() < 1e-12, "{} {}", r[3], expect);
        assert!(r[4] < 1e-12);
    }
}

#[test]
fn input_errors_exit_with_code_two() {
    let empty = Run::new(&config(Some("samples.csv"), LOGNORMAL), Some("x,y,value\n"));
    assert_eq!(empty.code(&["transform"]), 2);

    let constant = "x,y,value\n0,0,3\n5,5,3\n9,1,3\n";
    let empirical = "[anamorphosis]\nform = \"empirical\"\n";
    let run = Run::new(&config(Some("samples.csv"), empirical), Some(constant));
    let o = run.exec(&["transform"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));

    let unknown = config(None, &format!("{LOGNORMAL}colour = \"red\"\n"));
    assert_eq!(Run::new(&unknown, None).code(&["krige"]), 2);

    let missing = Run::new(&config(Some("nowhere.csv"), LOGNORMAL), None);
    assert_eq!(missing.code(&["krige"]), 2);

    let run = Run::new(&config(None, LOGNORMAL), None);
    assert_eq!(run.code(&["plot"]), 2);
    assert_eq!(run.code(&["blockdist"]), 2);
}

#[test]
fn maps_round_trip_byte_for_byte() {
    let extra = format!("{EXPONENTIAL}[block]\nsize = [5, 3]\n");
    let run = Run::new(&config(Some("samples.csv"), &extra), Some(SAMPLES));
    for cmd in ["krige", "moments", "volvar"] {
        assert_eq!(run.code(&[cmd]), 0, "{cmd}");
    }
    for name in ["krige.csv", "moments.csv", "volvar.csv"] {
        let path = run.out(name);
        assert_eq!(reemit(&path), fs::read_to_string(&path).unwrap(), "{name}");
    }
    let (head, rows) = read_table(&run.out("krige.csv"));
    assert_eq!(rows.len(), 90);
    let s2 = column(&head, &rows, "sigma2");
    assert!(s2.iter().all(|&v| (0.0..=1.0).contains(&v)));
    // (0,0) carries a sample.
    assert!(s2[0].abs() < 1e-12);
    let (head, rows) = read_table(&run.out("volvar.csv"));
    assert_eq!(rows.len(), 2 * 3);
    assert!(column(&head, &rows, "volume_variance")
        .iter()
        .all(|&v| v > 0.0));
}

#[test]
fn blockdist_curves_are_consistent() {
    let extra = format!("{EXPONENTIAL}[block]\nnodes = [[4, 4], [5, 4], [4, 5], [5, 5]]\n");
    let run = Run::new(&config(Some("samples.csv"), &extra), Some(SAMPLES));
    assert_eq!(run.code(&["blockdist", "--zgrid", "0:6:61"]), 0);
    let (head, rows) = read_table(&run.out("blockdist_pdf.csv"));
    assert_eq!(rows.len(), 61);
    let d = column(&head, &rows, "density");
    assert!(d.iter().all(|&v| v >= 0.0));
    let (head, rows) = read_table(&run.out("blockdist_cdf.csv"));
    let c = column(&head, &rows, "cdf");
    assert!(c.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    // Trapezoid of the density against the cdf increment.
    let h = 0.1;
    let mass: f64 = d.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    assert!(
        (mass - (c[60] - c[0])).abs() < 1e-2,
        "{mass} {}",
        c[60] - c[0]
    );
}

#[test]
fn simulate_writes_binary_and_is_seeded() {
    let extra = format!("{EXPONENTIAL}[simulate]\nrealizations = 20\nseed = 5\n");
    let run = Run::new(&config(Some("samples.csv"), &extra), Some(SAMPLES));
    assert_eq!(run.code(&["simulate"]), 0);
    let first = fs::read(run.out("realizations.bin")).unwrap();
    assert_eq!(&first[..6], b"MGVOL1");
    assert_eq!(u64::from_le_bytes(first[6..14].try_into().unwrap()), 90);
    assert_eq!(u64::from_le_bytes(first[14..22].try_into().unwrap()), 20);
    assert_eq!(first.len(), 22 + 90 * 20 * 8);
    assert_eq!(run.code(&["simulate"]), 0);
    assert_eq!(first, fs::read(run.out("realizations.bin")).unwrap());
    assert_eq!(run.code(&["simulate", "--seed", "6"]), 0);
    assert_ne!(first, fs::read(run.out("realizations.bin")).unwrap());
    let path = run.out("simulate_summary.csv");
    assert_eq!(reemit(&path), fs::read_to_string(&path).unwrap());
}

const VALIDATE_FILES: [&str; 6] = [
    "node_mean_scatter.csv",
    "node_variance_scatter.csv",
    "block_variance_scatter.csv",
    "block_pdf_compare.csv",
    "block_averages.csv",
    "report.txt",
];

fn small_validate(model: &str) -> String {
    format!(
        r#"[data]
out = "out"
[grid]
spacing = 5.0
nx = 16
ny = 16
[covariance]
structures = "{model}"
{EXPONENTIAL}
[block]
size = [4, 4]
[mc]
draws = 20000
seed = 3
[simulate]
realizations = 200
seed = 9
[validate]
samples = 12
mc_points = 10
"#
    )
}

#[test]
fn validate_is_reproducible() {
    let run = Run::new(&small_validate("0.1 nugget + 0.9 sph(40)"), None);
    let first = run.code(&["validate"]);
    assert!(first == 0 || first == 1, "{first}");
    let before: Vec<Vec<u8>> = VALIDATE_FILES
        .iter()
        .map(|f| fs::read(run.out(f)).unwrap())
        .collect();
    assert_eq!(run.code(&["validate"]), first);
    for (f, b) in VALIDATE_FILES.iter().zip(before) {
        assert_eq!(b, fs::read(run.out(f)).unwrap(), "{f}");
    }
}

#[test]
fn pure_nugget_variance_is_flat_and_matched() {
    let run = Run::new(&small_validate("1.0 nugget"), None);
    let code = run.code(&["validate"]);
    assert!(code == 0 || code == 1, "{code}");
    let (head, rows) = read_table(&run.out("node_variance_scatter.csv"));
    let analytic = column(&head, &rows, "analytic");
    let simulated = column(&head, &rows, "simulated");
    let se = column(&head, &rows, "se");
    assert!(!analytic.is_empty());
    assert!(analytic
        .iter()
        .all(|&a| (a - analytic[0]).abs() < 1e-12 * analytic[0]));
    let within = (0..analytic.len())
        .filter(|&i| (simulated[i] - analytic[i]).abs() <= 4.0 * se[i])
        .count();
    assert!(
        within as f64 >= 0.95 * analytic.len() as f64,
        "{within}/{}",
        analytic.len()
    );
}
