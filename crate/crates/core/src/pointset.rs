//! Finite point sets with a known minimal distance.
//!
//! Every constructor runs an exhaustive pairwise check, so a [`PointSet`]
//! in hand always satisfies `|x - y| >= min_dist` for all distinct points.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Consecutive rejections after which random sequential adsorption stops.
pub const RSA_REJECTION_BUDGET: usize = 5_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    min_dist: f64,
    label: String,
}

/// Result of an exhaustive minimal-distance scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinDistance {
    Finite(f64),
    /// Fewer than two points: there is no pair, the minimum is `+inf`.
    SinglePoint,
}

impl MinDistance {
    pub fn value(self) -> f64 {
        match self {
            MinDistance::Finite(v) => v,
            MinDistance::SinglePoint => f64::INFINITY,
        }
    }

    pub fn is_single_point(self) -> bool {
        matches!(self, MinDistance::SinglePoint)
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl PointSet {
    /// Builds a point set from flat coordinates (`dim` values per point),
    /// checking every pair against `min_dist`.
    pub fn new(dim: usize, coords: Vec<f64>, min_dist: f64, label: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "need a non-empty coordinate list with a multiple of {dim} entries, got {}",
                coords.len()
            )));
        }
        if !(min_dist > 0.0) || !min_dist.is_finite() {
            return Err(Error::invalid(format!("min_dist must be positive, got {min_dist}")));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("coordinates must be finite"));
        }
        let ps = PointSet {
            dim,
            coords,
            min_dist,
            label: label.into(),
        };
        ps.check_pairs()?;
        Ok(ps)
    }

    /// Builds a point set from explicit points, declaring the exact minimal
    /// pairwise distance (or 1 for a single point).
    pub fn from_points(points: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("points have inconsistent dimensions"));
        }
        let coords: Vec<f64> = points.iter().flatten().copied().collect();
        let min = exact_min_distance(dim.max(1), &coords);
        let declared = match min {
            MinDistance::Finite(v) => v,
            MinDistance::SinglePoint => 1.0,
        };
        PointSet::new(dim, coords, declared, label)
    }

    fn check_pairs(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dist(self.point(i), self.point(j));
                if !(d >= self.min_dist) {
                    return Err(Error::MinDistanceViolated {
                        i,
                        j,
                        dist: d,
                        min_dist: self.min_dist,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn min_dist(&self) -> f64 {
        self.min_dist
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Same points in the order given by `perm` (`perm[i]` is the old index
    /// of the new point `i`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::invalid("permutation length differs from point count"));
        }
        let mut seen = vec![false; perm.len()];
        let mut coords = Vec::with_capacity(self.coords.len());
        for &p in perm {
            if p >= seen.len() || seen[p] {
                return Err(Error::invalid("not a permutation"));
            }
            seen[p] = true;
            coords.extend_from_slice(self.point(p));
        }
        Ok(PointSet {
            dim: self.dim,
            coords,
            min_dist: self.min_dist,
            label: format!("{} (permuted)", self.label),
        })
    }

    /// CSV with a `# dim=.. min_dist=.. label=..` header and one row per
    /// point, 17 significant digits per coordinate.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# dim={} min_dist={} label={}\n",
            self.dim,
            fmt17(self.min_dist),
            self.label
        );
        for p in self.points() {
            let row: Vec<String> = p.iter().map(|&c| fmt17(c)).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty point-set CSV".into()))??;
        let rest = header
            .strip_prefix("# ")
            .ok_or_else(|| Error::Config(format!("bad CSV header: {header}")))?;
        let (dim, min_dist, label) = parse_header(rest)?;
        let mut coords = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad coordinate in `{line}`: {e}")))?;
            if row.len() != dim {
                return Err(Error::Config(format!("row `{line}` does not have {dim} columns")));
            }
            coords.extend(row);
        }
        PointSet::new(dim, coords, min_dist, label)
    }
}

fn parse_header(rest: &str) -> Result<(usize, f64, String)> {
    let bad = || Error::Config(format!("bad CSV header: # {rest}"));
    let rest = rest.strip_prefix("dim=").ok_or_else(bad)?;
    let (dim, rest) = rest.split_once(' ').ok_or_else(bad)?;
    let rest = rest.strip_prefix("min_dist=").ok_or_else(bad)?;
    let (min_dist, rest) = rest.split_once(' ').ok_or_else(bad)?;
    let label = rest.strip_prefix("label=").ok_or_else(bad)?;
    let dim = dim.parse().map_err(|_| bad())?;
    let min_dist = min_dist.parse().map_err(|_| bad())?;
    Ok((dim, min_dist, label.to_string()))
}

/// Scientific notation with 17 significant digits (round-trips any f64).
pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn exact_min_distance(dim: usize, coords: &[f64]) -> MinDistance {
    let n = coords.len() / dim;
    if n < 2 {
        return MinDistance::SinglePoint;
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        let a = &coords[i * dim..(i + 1) * dim];
        for j in (i + 1)..n {
            best = best.min(dist(a, &coords[j * dim..(j + 1) * dim]));
        }
    }
    MinDistance::Finite(best)
}

/// Exact minimum over all pairwise distances.
pub fn verify_min_distance(ps: &PointSet) -> MinDistance {
    exact_min_distance(ps.dim, &ps.coords)
}

/// Points of `spacing * Z^dim` in the closed ball of `radius` about the
/// origin, in lexicographic order of their integer coordinates.
pub fn lattice(dim: usize, spacing: f64, radius: f64) -> Result<PointSet> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("radius must be non-negative, got {radius}")));
    }
    let m = (radius / spacing).floor() as i64;
    let mut idx = vec![-m; dim];
    let mut coords = Vec::new();
    // Relative slack so boundary points like (radius, 0) are kept.
    let r2 = (radius / spacing).powi(2) * (1.0 + 1e-12);
    loop {
        let sumsq: i64 = idx.iter().map(|i| i * i).sum();
        if sumsq as f64 <= r2 {
            coords.extend(idx.iter().map(|&i| i as f64 * spacing));
        }
        // odometer increment
        let mut k = dim;
        loop {
            if k == 0 {
                let label = format!("lattice dim={dim} spacing={spacing} radius={radius}");
                return with_verified_min(dim, coords, spacing, label);
            }
            k -= 1;
            if idx[k] < m {
                idx[k] += 1;
                break;
            }
            idx[k] = -m;
        }
    }
}

/// Declares `min(nominal, exact minimum)`: floating-point subtraction of
/// generated coordinates can land one ulp below the nominal spacing.
fn with_verified_min(dim: usize, coords: Vec<f64>, nominal: f64, label: String) -> Result<PointSet> {
    let declared = match exact_min_distance(dim, &coords) {
        MinDistance::Finite(v) => v.min(nominal),
        MinDistance::SinglePoint => nominal,
    };
    PointSet::new(dim, coords, declared, label)
}

/// Letters of the Fibonacci substitution word `L -> LS, S -> L` started from
/// `L`; `true` marks a long letter.
pub fn fibonacci_word(len: usize) -> Vec<bool> {
    let mut word = vec![true];
    while word.len() < len {
        word = word
            .iter()
            .flat_map(|&long| if long { vec![true, false] } else { vec![true] })
            .collect();
    }
    word.truncate(len);
    word
}

/// Left endpoints of the first tiles of the Fibonacci tiling with tile
/// lengths `golden_ratio * short_len` and `short_len`, starting at 0.
pub fn fibonacci_chain(n_points: usize, short_len: f64) -> Result<PointSet> {
    if n_points < 2 {
        return Err(Error::invalid("a Fibonacci chain needs at least 2 points"));
    }
    if !(short_len > 0.0) || !short_len.is_finite() {
        return Err(Error::invalid(format!("short_len must be positive, got {short_len}")));
    }
    let long_len = 0.5 * (1.0 + 5f64.sqrt()) * short_len;
    let mut coords = Vec::with_capacity(n_points);
    let mut x = 0.0;
    coords.push(x);
    for long in fibonacci_word(n_points - 1) {
        x += if long { long_len } else { short_len };
        coords.push(x);
    }
    let label = format!("fibonacci n_points={n_points} short_len={short_len}");
    with_verified_min(1, coords, short_len, label)
}

/// Random sequential adsorption in the closed ball of `radius`: uniform
/// candidates are accepted when at distance `>= min_dist` from every
/// accepted point; the run stops after [`RSA_REJECTION_BUDGET`] consecutive
/// rejections.
pub fn hardcore_random(dim: usize, min_dist: f64, radius: f64, seed: u64) -> Result<PointSet> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !(min_dist > 0.0) || !min_dist.is_finite() {
        return Err(Error::invalid(format!("min_dist must be positive, got {min_dist}")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::EmptyPointSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<f64> = Vec::new();
    let mut cand = vec![0.0; dim];
    let mut rejections = 0;
    while rejections < RSA_REJECTION_BUDGET {
        // uniform in the ball by rejection from the cube
        loop {
            for c in cand.iter_mut() {
                *c = rng.random_range(-radius..=radius);
            }
            if cand.iter().map(|c| c * c).sum::<f64>() <= radius * radius {
                break;
            }
        }
        let ok = coords.chunks_exact(dim).all(|p| dist(p, &cand) >= min_dist);
        if ok {
            coords.extend_from_slice(&cand);
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    if coords.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let label = format!("hardcore dim={dim} min_dist={min_dist} radius={radius} seed={seed}");
    PointSet::new(dim, coords, min_dist, label)
}
