//! Per-site randomness: amplitudes (model A) and dislocations (model B).
//!
//! Distributions have finite support so that means, variances and full
//! configuration enumeration are exact. Draws are counter-based: the value
//! at site `i` is a function of `(seed, stream, i)` only.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::PointSet;

const PROB_TOL: f64 = 1e-12;

/// A finite-support probability law.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrete<T> {
    support: Vec<T>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl<T: Clone> Discrete<T> {
    pub fn new(support: Vec<T>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::MalformedDistribution("empty support".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::MalformedDistribution(format!(
                "{} support values but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::MalformedDistribution("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::MalformedDistribution(format!("probabilities sum to {total}")));
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Discrete {
            support,
            probs,
            cumulative,
        })
    }

    pub fn uniform(support: Vec<T>) -> Result<Self> {
        let n = support.len();
        Discrete::new(support, vec![1.0 / n as f64; n])
    }

    pub fn point_mass(value: T) -> Self {
        Discrete::new(vec![value], vec![1.0]).expect("point mass is a valid law")
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Index of the support value selected by a uniform `u` in `[0, 1)`.
    pub fn index_for(&self, u: f64) -> usize {
        let last = self.support.len() - 1;
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(last)
            .min(last)
    }
}

impl Discrete<Complex64> {
    pub fn mean(&self) -> Complex64 {
        self.support.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(v, p)| v.norm_sqr() * p)
            .sum()
    }
}

/// Model A: complex amplitudes, one law per site.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSpec {
    pub default: Option<Discrete<Complex64>>,
    pub overrides: BTreeMap<usize, Discrete<Complex64>>,
}

/// Model B: dislocation vectors with `|w| <= delta` on every support point.
#[derive(Debug, Clone, PartialEq)]
pub struct DislocationSpec {
    dim: usize,
    pub default: Option<Discrete<Vec<f64>>>,
    pub overrides: BTreeMap<usize, Discrete<Vec<f64>>>,
    delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScattererSpec {
    Amplitudes(AmplitudeSpec),
    Dislocations(DislocationSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    A,
    B,
}

/// Uniform bounds `|mean| <= m`, `|eta - mean| <= b` and `k = 2 m b + b^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeBounds {
    pub m: f64,
    pub b: f64,
    pub k: f64,
}

impl AmplitudeSpec {
    pub fn iid(law: Discrete<Complex64>) -> Self {
        AmplitudeSpec {
            default: Some(law),
            overrides: BTreeMap::new(),
        }
    }

    /// Symmetric Bernoulli amplitudes `+-1`.
    pub fn bernoulli_pm1() -> Self {
        Self::iid(
            Discrete::uniform(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)])
                .expect("valid law"),
        )
    }

    pub fn constant(value: Complex64) -> Self {
        Self::iid(Discrete::point_mass(value))
    }

    pub fn with_override(mut self, site: usize, law: Discrete<Complex64>) -> Self {
        self.overrides.insert(site, law);
        self
    }

    pub fn site(&self, i: usize) -> Result<&Discrete<Complex64>> {
        self.overrides
            .get(&i)
            .or(self.default.as_ref())
            .ok_or(Error::MissingSite(i))
    }

    pub fn laws(&self) -> impl Iterator<Item = &Discrete<Complex64>> {
        self.default.iter().chain(self.overrides.values())
    }

    pub fn validate(&self) -> Result<()> {
        for law in self.laws() {
            if law.support().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::MalformedDistribution("non-finite amplitude".into()));
            }
        }
        Ok(())
    }
}

impl DislocationSpec {
    /// `delta = None` takes the largest support norm.
    pub fn new(
        dim: usize,
        default: Option<Discrete<Vec<f64>>>,
        overrides: BTreeMap<usize, Discrete<Vec<f64>>>,
        delta: Option<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dislocation dimension must be at least 1"));
        }
        let mut spec = DislocationSpec {
            dim,
            default,
            overrides,
            delta: 0.0,
        };
        for law in spec.laws() {
            for w in law.support() {
                if w.len() != dim {
                    return Err(Error::MalformedDistribution(format!(
                        "dislocation {w:?} is not {dim}-dimensional"
                    )));
                }
                if w.iter().any(|c| !c.is_finite()) {
                    return Err(Error::MalformedDistribution("non-finite dislocation".into()));
                }
            }
        }
        let actual = spec.max_norm();
        spec.delta = match delta {
            Some(d) if d >= actual && d.is_finite() => d,
            Some(d) => {
                return Err(Error::MalformedDistribution(format!(
                    "declared delta {d} is below the largest dislocation norm {actual}"
                )))
            }
            None => actual,
        };
        Ok(spec)
    }

    /// i.i.d. two-point law `+-delta0 * e_1`.
    pub fn two_point(dim: usize, delta0: f64) -> Result<Self> {
        let mut plus = vec![0.0; dim];
        let mut minus = vec![0.0; dim];
        if dim > 0 {
            plus[0] = delta0;
            minus[0] = -delta0;
        }
        let law = Discrete::uniform(vec![plus, minus])?;
        DislocationSpec::new(dim, Some(law), BTreeMap::new(), None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn site(&self, i: usize) -> Result<&Discrete<Vec<f64>>> {
        self.overrides
            .get(&i)
            .or(self.default.as_ref())
            .ok_or(Error::MissingSite(i))
    }

    pub fn laws(&self) -> impl Iterator<Item = &Discrete<Vec<f64>>> {
        self.default.iter().chain(self.overrides.values())
    }

    fn max_norm(&self) -> f64 {
        self.laws()
            .flat_map(|l| l.support().iter())
            .map(|w| w.iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

impl ScattererSpec {
    pub fn model(&self) -> Model {
        match self {
            ScattererSpec::Amplitudes(_) => Model::A,
            ScattererSpec::Dislocations(_) => Model::B,
        }
    }

    /// Support size of the law at each site of a point set with `n` sites.
    pub fn support_sizes(&self, n: usize) -> Result<Vec<usize>> {
        (0..n)
            .map(|i| match self {
                ScattererSpec::Amplitudes(s) => s.site(i).map(|l| l.len()),
                ScattererSpec::Dislocations(s) => s.site(i).map(|l| l.len()),
            })
            .collect()
    }

    /// Probability of support index `j` at site `i`.
    pub fn prob(&self, i: usize, j: usize) -> Result<f64> {
        Ok(match self {
            ScattererSpec::Amplitudes(s) => s.site(i)?.probs()[j],
            ScattererSpec::Dislocations(s) => s.site(i)?.probs()[j],
        })
    }

    /// Checks coverage of every site of `ps` and dimension compatibility.
    pub fn check_against(&self, ps: &PointSet) -> Result<()> {
        match self {
            ScattererSpec::Amplitudes(s) => {
                s.validate()?;
                for i in 0..ps.len() {
                    s.site(i)?;
                }
            }
            ScattererSpec::Dislocations(s) => {
                if s.dim() != ps.dim() {
                    return Err(Error::invalid(format!(
                        "dislocations are {}-dimensional, point set is {}-dimensional",
                        s.dim(),
                        ps.dim()
                    )));
                }
                for i in 0..ps.len() {
                    s.site(i)?;
                }
            }
        }
        Ok(())
    }

    /// Largest site index that has an explicit override.
    pub fn max_override(&self) -> Option<usize> {
        match self {
            ScattererSpec::Amplitudes(s) => s.overrides.keys().next_back().copied(),
            ScattererSpec::Dislocations(s) => s.overrides.keys().next_back().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleValues {
    Amplitudes(Vec<Complex64>),
    /// Flat storage, `dim` entries per site.
    Dislocations { dim: usize, flat: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub seed: u64,
    pub stream: u64,
    pub values: SampleValues,
}

impl Sample {
    pub fn model(&self) -> Model {
        match self.values {
            SampleValues::Amplitudes(_) => Model::A,
            SampleValues::Dislocations { .. } => Model::B,
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            SampleValues::Amplitudes(v) => v.len(),
            SampleValues::Dislocations { dim, flat } => flat.len() / dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn amplitudes(&self) -> Option<&[Complex64]> {
        match &self.values {
            SampleValues::Amplitudes(v) => Some(v),
            _ => None,
        }
    }

    pub fn dislocations(&self) -> Option<&[f64]> {
        match &self.values {
            SampleValues::Dislocations { flat, .. } => Some(flat),
            _ => None,
        }
    }
}

fn unit_interval(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Counter-based source of per-site uniforms.
struct SiteStream(ChaCha8Rng);

impl SiteStream {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SiteStream(rng)
    }

    /// Uniform for site `i` (the `i`-th 64-bit word of the stream).
    fn at(&mut self, i: usize) -> f64 {
        self.0.set_word_pos(2 * i as u128);
        unit_interval(self.0.next_u64())
    }

    /// Uniforms for sites `0, 1, 2, ...` in order.
    fn next(&mut self) -> f64 {
        unit_interval(self.0.next_u64())
    }
}

/// Support indices drawn for every site; site `i` depends only on
/// `(seed, stream, i)`.
pub fn draw_indices(spec: &ScattererSpec, n: usize, seed: u64, stream: u64) -> Result<Vec<usize>> {
    let mut src = SiteStream::new(seed, stream);
    (0..n)
        .map(|i| {
            let u = src.next();
            Ok(match spec {
                ScattererSpec::Amplitudes(s) => s.site(i)?.index_for(u),
                ScattererSpec::Dislocations(s) => s.site(i)?.index_for(u),
            })
        })
        .collect()
}

/// The support index of a single site, without drawing the others.
pub fn draw_site_index(spec: &ScattererSpec, i: usize, seed: u64, stream: u64) -> Result<usize> {
    let u = SiteStream::new(seed, stream).at(i);
    Ok(match spec {
        ScattererSpec::Amplitudes(s) => s.site(i)?.index_for(u),
        ScattererSpec::Dislocations(s) => s.site(i)?.index_for(u),
    })
}

/// Realization from explicit support indices.
pub fn sample_from_indices(spec: &ScattererSpec, indices: &[usize], seed: u64, stream: u64) -> Result<Sample> {
    let values = match spec {
        ScattererSpec::Amplitudes(s) => SampleValues::Amplitudes(
            indices
                .iter()
                .enumerate()
                .map(|(i, &j)| Ok(s.site(i)?.support()[j]))
                .collect::<Result<_>>()?,
        ),
        ScattererSpec::Dislocations(s) => {
            let mut flat = Vec::with_capacity(indices.len() * s.dim());
            for (i, &j) in indices.iter().enumerate() {
                flat.extend_from_slice(&s.site(i)?.support()[j]);
            }
            SampleValues::Dislocations { dim: s.dim(), flat }
        }
    };
    Ok(Sample { seed, stream, values })
}

/// Independent draw at every site of `ps` (stream 0).
pub fn sample(spec: &ScattererSpec, ps: &PointSet, seed: u64) -> Result<Sample> {
    sample_stream(spec, ps, seed, 0)
}

/// Independent draw on a numbered stream; Monte Carlo sample `j` uses
/// stream `j`.
pub fn sample_stream(spec: &ScattererSpec, ps: &PointSet, seed: u64, stream: u64) -> Result<Sample> {
    spec.check_against(ps)?;
    let idx = draw_indices(spec, ps.len(), seed, stream)?;
    sample_from_indices(spec, &idx, seed, stream)
}

/// Exact `M`, `B`, `K` over every site law.
pub fn bounds_of(spec: &AmplitudeSpec) -> AmplitudeBounds {
    let mut m: f64 = 0.0;
    let mut b: f64 = 0.0;
    for law in spec.laws() {
        let mean = law.mean();
        m = m.max(mean.norm());
        for v in law.support() {
            b = b.max((v - mean).norm());
        }
    }
    AmplitudeBounds {
        m,
        b,
        k: 2.0 * m * b + b * b,
    }
}

/// Largest dislocation norm over all laws.
pub fn delta_of(spec: &DislocationSpec) -> f64 {
    spec.max_norm()
}

// ---- JSON document -------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LawDoc {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

/// `{"kind":"A"|"B","default":{"support":[...],"probs":[...]},"overrides":{"<i>":{...}},"delta":x}`
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScattererDoc {
    pub kind: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<LawDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, LawDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn amplitude_law(doc: &LawDoc) -> Result<Discrete<Complex64>> {
    let support = doc
        .support
        .iter()
        .map(|v| match v.as_slice() {
            [re, im] => Ok(Complex64::new(*re, *im)),
            [re] => Ok(Complex64::new(*re, 0.0)),
            _ => Err(Error::MalformedDistribution(format!(
                "amplitude {v:?} must be [re, im]"
            ))),
        })
        .collect::<Result<_>>()?;
    Discrete::new(support, doc.probs.clone())
}

fn parse_overrides<T>(
    doc: &BTreeMap<String, LawDoc>,
    f: impl Fn(&LawDoc) -> Result<T>,
) -> Result<BTreeMap<usize, T>> {
    doc.iter()
        .map(|(k, v)| {
            let i = k
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("override key `{k}` is not a site index")))?;
            Ok((i, f(v)?))
        })
        .collect()
}

impl ScattererDoc {
    /// `dim` is the point-set dimension (used for model B).
    pub fn build(&self, dim: usize) -> Result<ScattererSpec> {
        match self.kind {
            Model::A => {
                if self.delta.is_some() {
                    return Err(Error::Config("`delta` is only valid for kind B".into()));
                }
                let spec = AmplitudeSpec {
                    default: self.default.as_ref().map(amplitude_law).transpose()?,
                    overrides: parse_overrides(&self.overrides, amplitude_law)?,
                };
                spec.validate()?;
                Ok(ScattererSpec::Amplitudes(spec))
            }
            Model::B => {
                let law = |d: &LawDoc| Discrete::new(d.support.clone(), d.probs.clone());
                let default = self.default.as_ref().map(law).transpose()?;
                let overrides = parse_overrides(&self.overrides, law)?;
                Ok(ScattererSpec::Dislocations(DislocationSpec::new(
                    dim, default, overrides, self.delta,
                )?))
            }
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
