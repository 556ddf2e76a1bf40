//! Crystallite orientation sets and weighted powder averages.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::num::{deg, lit, to_f64, Real};
use crate::spinsys::EulerAngles;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation<T> {
    pub euler: EulerAngles<T>,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationSet<T> {
    pub entries: Vec<Orientation<T>>,
    pub scheme: String,
    pub n_ab: usize,
    pub n_gamma: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scheme {
    /// Fibonacci lattice on the sphere with golden-angle azimuths.
    GoldenSpiral,
    /// Zaremba–Conroy–Wolfsberg lattice; the count is raised to the next Fibonacci number.
    Zcw,
    /// `cos β_i = 1 − 2i/n`, α = 0.
    Grid,
    /// Whitespace-separated `alpha_deg beta_deg weight [gamma_deg]` lines. With a
    /// gamma column the listed orientations are used as they are.
    File(String),
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "golden" | "golden-spiral" => Ok(Scheme::GoldenSpiral),
            "zcw" | "zcw-like" => Ok(Scheme::Zcw),
            "grid" => Ok(Scheme::Grid),
            _ => match s.strip_prefix("file=") {
                Some(path) => Ok(Scheme::File(path.to_string())),
                None => Err(Error::Config(format!("unknown powder scheme '{s}'"))),
            },
        }
    }
}

/// `scheme:n_ab:n_gamma`, e.g. `golden:144:5` or `file=rep.txt:0:5`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowderSpec {
    pub scheme: Scheme,
    pub n_ab: usize,
    pub n_gamma: usize,
}

impl FromStr for PowderSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.rsplitn(3, ':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("powder spec '{s}' is not scheme:n_ab:n_gamma")));
        }
        let count =
            |x: &str| x.parse::<usize>().map_err(|_| Error::Config(format!("bad count '{x}' in powder spec '{s}'")));
        Ok(Self { scheme: parts[2].parse()?, n_ab: count(parts[1])?, n_gamma: count(parts[0])? })
    }
}

impl PowderSpec {
    pub fn generate<T: Real>(&self) -> Result<OrientationSet<T>> {
        generate_orientations(&self.scheme, self.n_ab, self.n_gamma)
    }
}

fn fibonacci_at_least(n: usize) -> (usize, usize) {
    // (F_m, F_{m-2})
    let (mut a, mut b, mut c) = (1usize, 1usize, 2usize);
    while c < n {
        (a, b, c) = (b, c, b + c);
    }
    (c, a)
}

pub fn generate_orientations<T: Real>(scheme: &Scheme, n_ab: usize, n_gamma: usize) -> Result<OrientationSet<T>> {
    if n_gamma == 0 {
        return Err(Error::Config("n_gamma must be at least 1".into()));
    }
    let (ab, name): (Vec<(f64, f64, f64)>, String) = match scheme {
        Scheme::File(path) => {
            let rows = parse_orientation_file(&std::fs::read_to_string(Path::new(path))?)?;
            if rows[0].3.is_some() {
                let total: f64 = rows.iter().map(|r| r.2).sum();
                let entries = rows
                    .iter()
                    .map(|&(a, b, w, g)| Orientation {
                        euler: EulerAngles::new(lit(a), lit(b), lit(g.unwrap_or(0.0))),
                        weight: lit(w / total),
                    })
                    .collect();
                return Ok(OrientationSet { n_ab: rows.len(), n_gamma: 1, scheme: "file".into(), entries });
            }
            (rows.into_iter().map(|(a, b, w, _)| (a, b, w)).collect(), "file".into())
        }
        _ if n_ab == 0 => return Err(Error::Config("n_ab must be at least 1".into())),
        Scheme::GoldenSpiral => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            let n = n_ab as f64;
            let pts = (0..n_ab)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n;
                    ((golden * i as f64).rem_euclid(std::f64::consts::TAU), z.acos(), 1.0)
                })
                .collect();
            (pts, "golden".into())
        }
        Scheme::Zcw => {
            let (n, g) = fibonacci_at_least(n_ab);
            let pts = (0..n)
                .map(|i| {
                    let a = std::f64::consts::TAU * ((i * g) % n) as f64 / n as f64;
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                    (a, z.acos(), 1.0)
                })
                .collect();
            (pts, "zcw".into())
        }
        Scheme::Grid => {
            let pts = (0..n_ab)
                .map(|i| {
                    let z = 1.0 - 2.0 * i as f64 / n_ab as f64;
                    (0.0, z.acos(), 1.0)
                })
                .collect();
            (pts, "grid".into())
        }
    };
    let total: f64 = ab.iter().map(|p| p.2).sum();
    let mut entries = Vec::with_capacity(ab.len() * n_gamma);
    for &(a, b, w) in &ab {
        for j in 0..n_gamma {
            let g = std::f64::consts::TAU * j as f64 / n_gamma as f64;
            entries.push(Orientation {
                euler: EulerAngles::new(lit(a), lit(b), lit(g)),
                weight: lit(w / total / n_gamma as f64),
            });
        }
    }
    Ok(OrientationSet { n_ab: ab.len(), n_gamma, scheme: name, entries })
}

/// `(alpha, beta, weight, gamma)`, angles in radians.
pub type OrientationRow = (f64, f64, f64, Option<f64>);

/// Parses `alpha_deg beta_deg weight [gamma_deg]` lines into radians; `#` starts a comment.
pub fn parse_orientation_file(text: &str) -> Result<Vec<OrientationRow>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let row = match v.as_deref() {
            Ok([a, b, w]) => (a.to_radians(), b.to_radians(), *w, None),
            Ok([a, b, w, g]) => (a.to_radians(), b.to_radians(), *w, Some(g.to_radians())),
            _ => (0.0, 0.0, f64::NAN, None),
        };
        let consistent = out.first().map_or(true, |f: &(f64, f64, f64, Option<f64>)| f.3.is_some() == row.3.is_some());
        if !(row.2 > 0.0 && row.2.is_finite()) || !consistent {
            return Err(Error::Config(format!(
                "orientation file line {}: expected 'alpha beta weight [gamma]' with positive weight",
                no + 1
            )));
        }
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::Config("orientation file has no entries".into()));
    }
    Ok(out)
}

impl<T: Real> OrientationSet<T> {
    /// A single crystallite of unit weight.
    pub fn single(euler: EulerAngles<T>) -> Self {
        Self { entries: vec![Orientation { euler, weight: T::one() }], scheme: "single".into(), n_ab: 1, n_gamma: 1 }
    }

    pub fn single_degrees(a: f64, b: f64, g: f64) -> Self {
        Self::single(EulerAngles::new(deg(a), deg(b), deg(g)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn label(&self) -> String {
        format!("{}:{}:{}", self.scheme, self.n_ab, self.n_gamma)
    }
}

/// `Σ wᵢ vᵢ` in entry order.
pub fn powder_average<T: Real>(values: &[T], set: &OrientationSet<T>) -> Result<T> {
    if values.len() != set.len() {
        return Err(Error::Domain(format!("{} values for {} crystallites", values.len(), set.len())));
    }
    Ok(values.iter().zip(&set.entries).fold(T::zero(), |acc, (v, o)| acc + *v * o.weight))
}

/// Weighted average of per-crystallite vectors, reduced in entry order.
pub fn powder_average_vec<T: Real>(values: &[Vec<T>], set: &OrientationSet<T>) -> Result<Vec<T>> {
    if values.len() != set.len() {
        return Err(Error::Domain(format!("{} values for {} crystallites", values.len(), set.len())));
    }
    let n = values.first().map_or(0, Vec::len);
    let mut acc = vec![T::zero(); n];
    for (v, o) in values.iter().zip(&set.entries) {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += *x * o.weight;
        }
    }
    Ok(acc)
}

/// Sum of weights minus one.
pub fn weight_defect<T: Real>(set: &OrientationSet<T>) -> f64 {
    set.entries.iter().map(|o| to_f64(o.weight)).sum::<f64>() - 1.0
}
