//! Stationary covariance models built from nested structures.
//!
//! A model such as `0.1 nugget + 0.9 sph(100)` is a sum of structures, each a
//! sill times a unit correlation function of the anisotropic reduced lag.
//! Ranges are practical ranges: the exponential and gaussian structures reach
//! 5% of their sill at reduced distance 1.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Two points closer than this are the same location.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// A location in up to three dimensions; unused coordinates are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point([x, y, z])
    }

    pub const fn xy(x: f64, y: f64) -> Self {
        Point([x, y, 0.0])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn lag(&self, other: &Point) -> [f64; 3] {
        [
            other.0[0] - self.0[0],
            other.0[1] - self.0[1],
            other.0[2] - self.0[2],
        ]
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let h = self.lag(other);
        (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    Nugget,
    Spherical,
    Exponential,
    Gaussian,
}

impl StructureKind {
    fn keyword(self) -> &'static str {
        match self {
            StructureKind::Nugget => "nugget",
            StructureKind::Spherical => "sph",
            StructureKind::Exponential => "exp",
            StructureKind::Gaussian => "gau",
        }
    }

    /// Unit correlation at reduced distance `r`.
    #[inline]
    fn correlation(self, r: f64) -> f64 {
        match self {
            StructureKind::Nugget => 0.0,
            StructureKind::Spherical => {
                if r < 1.0 {
                    1.0 - 1.5 * r + 0.5 * r * r * r
                } else {
                    0.0
                }
            }
            StructureKind::Exponential => (-3.0 * r).exp(),
            StructureKind::Gaussian => (-3.0 * r * r).exp(),
        }
    }
}

impl FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nugget" | "nugg" | "nug" => Ok(StructureKind::Nugget),
            "sph" | "spherical" => Ok(StructureKind::Spherical),
            "exp" | "exponential" => Ok(StructureKind::Exponential),
            "gau" | "gauss" | "gaussian" => Ok(StructureKind::Gaussian),
            other => Err(Error::parse(format!("unknown structure kind `{other}`"))),
        }
    }
}

/// One nested structure: sill, principal ranges and rotation angles (degrees).
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    kind: StructureKind,
    sill: f64,
    ranges: [f64; 3],
    angles: [f64; 3],
    // Rows are the rotated principal axes divided by their ranges.
    axes: [[f64; 3]; 3],
}

impl Structure {
    pub fn nugget(sill: f64) -> Result<Self> {
        Self::anisotropic(StructureKind::Nugget, sill, [1.0; 3], [0.0; 3])
    }

    pub fn isotropic(kind: StructureKind, sill: f64, range: f64) -> Result<Self> {
        Self::anisotropic(kind, sill, [range; 3], [0.0; 3])
    }

    /// `ranges` are (major, minor, vertical); `angles` are azimuth (clockwise
    /// from +y), dip and rake.
    pub fn anisotropic(
        kind: StructureKind,
        sill: f64,
        ranges: [f64; 3],
        angles: [f64; 3],
    ) -> Result<Self> {
        if !(sill.is_finite() && sill >= 0.0) {
            return Err(Error::InvalidModel(format!("sill {sill} must be >= 0")));
        }
        if kind != StructureKind::Nugget && ranges.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidModel(format!(
                "ranges {ranges:?} must be positive"
            )));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidModel("non-finite rotation angle".into()));
        }
        let [az, dip, rake] = angles.map(f64::to_radians);
        let major0 = [az.sin(), az.cos(), 0.0];
        let minor0 = [az.cos(), -az.sin(), 0.0];
        let vert0 = [0.0, 0.0, 1.0];
        let major = lin(dip.cos(), &major0, -dip.sin(), &vert0);
        let vert1 = lin(dip.sin(), &major0, dip.cos(), &vert0);
        let minor = lin(rake.cos(), &minor0, rake.sin(), &vert1);
        let vert = lin(-rake.sin(), &minor0, rake.cos(), &vert1);
        let scale = |v: [f64; 3], r: f64| v.map(|c| c / r);
        Ok(Structure {
            kind,
            sill,
            ranges,
            angles,
            axes: [
                scale(major, ranges[0]),
                scale(minor, ranges[1]),
                scale(vert, ranges[2]),
            ],
        })
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    pub fn sill(&self) -> f64 {
        self.sill
    }

    pub fn ranges(&self) -> [f64; 3] {
        self.ranges
    }

    pub fn angles(&self) -> [f64; 3] {
        self.angles
    }

    #[inline]
    fn reduced_distance(&self, h: &[f64; 3]) -> f64 {
        self.axes
            .iter()
            .map(|a| {
                let c = a[0] * h[0] + a[1] * h[1] + a[2] * h[2];
                c * c
            })
            .sum::<f64>()
            .sqrt()
    }

    #[inline]
    fn covariance(&self, h: &[f64; 3], same_point: bool) -> f64 {
        match self.kind {
            StructureKind::Nugget => {
                if same_point {
                    self.sill
                } else {
                    0.0
                }
            }
            kind => self.sill * kind.correlation(self.reduced_distance(h)),
        }
    }
}

fn lin(a: f64, u: &[f64; 3], b: f64, v: &[f64; 3]) -> [f64; 3] {
    [
        a * u[0] + b * v[0],
        a * u[1] + b * v[1],
        a * u[2] + b * v[2],
    ]
}

/// Sum of nested stationary structures.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    structures: Vec<Structure>,
    total_sill: f64,
}

impl CovarianceModel {
    pub fn new(structures: Vec<Structure>) -> Result<Self> {
        if structures.is_empty() {
            return Err(Error::InvalidModel("no structures".into()));
        }
        let total_sill = structures.iter().map(|s| s.sill).sum();
        Ok(CovarianceModel {
            structures,
            total_sill,
        })
    }

    pub fn structures(&self) -> &[Structure] {
        &self.structures
    }

    pub fn total_sill(&self) -> f64 {
        self.total_sill
    }

    /// Largest range over all structures and axes; beyond it every
    /// range-bounded structure has decayed.
    pub fn max_range(&self) -> f64 {
        self.structures
            .iter()
            .filter(|s| s.kind != StructureKind::Nugget)
            .flat_map(|s| s.ranges)
            .fold(0.0, f64::max)
    }

    /// C(u_a, u_b).
    pub fn cov(&self, a: &Point, b: &Point) -> f64 {
        let h = a.lag(b);
        let same = a.distance(b) <= DUPLICATE_TOLERANCE;
        self.structures.iter().map(|s| s.covariance(&h, same)).sum()
    }

    /// Covariance matrix of a point set, rejecting coincident points.
    pub fn cov_matrix(&self, points: &[Point]) -> Result<DMatrix<f64>> {
        check_distinct(points)?;
        Ok(self.cov_matrix_unchecked(points))
    }

    /// Covariance matrix for points already known to be distinct.
    pub fn cov_matrix_unchecked(&self, points: &[Point]) -> DMatrix<f64> {
        let n = points.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            m[(j, j)] = self.total_sill;
            for i in j + 1..n {
                let c = self.cov(&points[i], &points[j]);
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        m
    }

    /// Rectangular matrix with entries C(rows[i], cols[j]).
    pub fn cross_matrix(&self, rows: &[Point], cols: &[Point]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.cov(&rows[i], &cols[j]))
    }
}

/// Fails with `DuplicatePoints` if two points coincide within tolerance.
pub fn check_distinct(points: &[Point]) -> Result<()> {
    for j in 0..points.len() {
        for i in j + 1..points.len() {
            if points[i].distance(&points[j]) <= DUPLICATE_TOLERANCE {
                return Err(Error::DuplicatePoints {
                    first: j,
                    second: i,
                    tolerance: DUPLICATE_TOLERANCE,
                });
            }
        }
    }
    Ok(())
}

impl FromStr for CovarianceModel {
    type Err = Error;

    /// Grammar: `<sill> <kind>(<range>[,<range>,<range>][; <az>,<dip>,<rake>])`
    /// terms joined by `+`; `nugget` takes no parenthesised part.
    fn from_str(s: &str) -> Result<Self> {
        let mut structures = Vec::new();
        for term in s.split('+') {
            structures.push(parse_structure(term.trim())?);
        }
        CovarianceModel::new(structures)
    }
}

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(format!("bad number `{}`: {e}", t.trim())))
        })
        .collect()
}

fn parse_structure(term: &str) -> Result<Structure> {
    if term.is_empty() {
        return Err(Error::parse("empty covariance term"));
    }
    // Longest numeric prefix that parses as the sill.
    let numeric_len = term
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-')))
        .unwrap_or(term.len());
    let (sill, rest) = match (1..=numeric_len)
        .rev()
        .find_map(|n| term[..n].parse::<f64>().ok().map(|v| (v, &term[n..])))
    {
        Some((v, rest)) => (v, rest),
        None => (1.0, term),
    };
    let rest = rest
        .trim_start()
        .trim_start_matches(['*', '·'])
        .trim_start();
    let (kind_text, args) = match rest.find('(') {
        Some(open) => {
            let close = rest
                .rfind(')')
                .ok_or_else(|| Error::parse(format!("unclosed `(` in `{term}`")))?;
            if !rest[close + 1..].trim().is_empty() {
                return Err(Error::parse(format!("trailing text in `{term}`")));
            }
            (rest[..open].trim(), Some(&rest[open + 1..close]))
        }
        None => (rest.trim(), None),
    };
    let kind: StructureKind = kind_text.parse()?;
    if kind == StructureKind::Nugget {
        if args.is_some_and(|a| !a.trim().is_empty()) {
            return Err(Error::parse("nugget takes no range"));
        }
        return Structure::nugget(sill);
    }
    let args = args.ok_or_else(|| Error::parse(format!("`{kind_text}` needs a range")))?;
    let (range_text, angle_text) = match args.split_once(';') {
        Some((r, a)) => (r, Some(a)),
        None => (args, None),
    };
    let ranges = match parse_numbers(range_text)?.as_slice() {
        [r] => [*r; 3],
        [a, b] => [*a, *b, *b],
        [a, b, c] => [*a, *b, *c],
        other => {
            return Err(Error::parse(format!(
                "expected 1-3 ranges, got {}",
                other.len()
            )))
        }
    };
    let angles = match angle_text {
        None => [0.0; 3],
        Some(t) => match parse_numbers(t)?.as_slice() {
            [a] => [*a, 0.0, 0.0],
            [a, b] => [*a, *b, 0.0],
            [a, b, c] => [*a, *b, *c],
            other => {
                return Err(Error::parse(format!(
                    "expected 1-3 angles, got {}",
                    other.len()
                )))
            }
        },
    };
    Structure::anisotropic(kind, sill, ranges, angles)
}

impl fmt::Display for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.structures.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{} {}", s.sill, s.kind.keyword())?;
            if s.kind != StructureKind::Nugget {
                let [a, b, c] = s.ranges;
                write!(f, "({a},{b},{c}")?;
                if s.angles != [0.0; 3] {
                    let [az, dip, rake] = s.angles;
                    write!(f, "; {az},{dip},{rake}")?;
                }
                f.write_str(")")?;
            }
        }
        Ok(())
    }
}
