//! Step distributions on `Z^d` and seeded, reproducible increment streams.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

/// Tolerance on total mass for floating-point step laws.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Support sizes above this use alias sampling; smaller ones use a cumulative scan.
pub const ALIAS_THRESHOLD: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("negative probability {prob} at atom {site}")]
    NegativeProbability { site: Site, prob: f64 },
    #[error("step distribution has empty support")]
    EmptySupport,
    #[error("atom {site} has dimension {got}, expected {expected}")]
    DimensionMismatch { site: Site, got: usize, expected: usize },
    #[error("probabilities sum to {total}, expected 1")]
    MassNotOne { total: f64 },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("preset parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("cannot parse probability `{0}`")]
    BadProbability(String),
}

/// A point of the integer lattice `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn origin(dim: usize) -> Self {
        Site(vec![0; dim])
    }

    pub fn unit(dim: usize, axis: usize, sign: i64) -> Self {
        let mut c = vec![0; dim];
        c[axis] = sign;
        Site(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// Infinity norm.
    pub fn radius(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

impl From<Vec<i64>> for Site {
    fn from(v: Vec<i64>) -> Self {
        Site(v)
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c:+}")?;
        }
        f.write_str(")")
    }
}

/// A probability given either exactly (a rational, including terminating
/// decimals parsed from text) or as a double.
#[derive(Clone, Debug, PartialEq)]
pub enum Probability {
    Exact(BigRational),
    Float(f64),
}

impl Probability {
    pub fn ratio(num: i64, den: i64) -> Self {
        Probability::Exact(BigRational::new(num.into(), den.into()))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Probability::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Probability::Float(x) => *x,
        }
    }

    fn is_negative(&self) -> bool {
        match self {
            Probability::Exact(r) => r.is_negative(),
            Probability::Float(x) => *x < 0.0 || x.is_nan(),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Probability::Exact(r) => r.is_zero(),
            Probability::Float(x) => *x == 0.0,
        }
    }
}

impl From<f64> for Probability {
    fn from(x: f64) -> Self {
        Probability::Float(x)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probability::Exact(r) => write!(f, "{r}"),
            Probability::Float(x) => write!(f, "{x}"),
        }
    }
}

impl FromStr for Probability {
    type Err = WalkError;

    /// Accepts `a/b`, terminating decimals such as `0.25` (kept exact), and
    /// anything else `f64` parses (exponent forms, kept as a double).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let bad = || WalkError::BadProbability(s.to_string());
        if let Some((num, den)) = t.split_once('/') {
            let num: BigInt = num.trim().parse().map_err(|_| bad())?;
            let den: BigInt = den.trim().parse().map_err(|_| bad())?;
            if den.is_zero() {
                return Err(bad());
            }
            return Ok(Probability::Exact(BigRational::new(num, den)));
        }
        if let Some(r) = parse_decimal(t) {
            return Ok(Probability::Exact(r));
        }
        t.parse::<f64>().map(Probability::Float).map_err(|_| bad())
    }
}

fn parse_decimal(t: &str) -> Option<BigRational> {
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let den = num_traits::pow(BigInt::from(10), frac.len());
    let r = BigRational::new(num, den);
    Some(if neg { -r } else { r })
}

#[derive(Clone, Debug)]
enum Sampler {
    Scan(Vec<f64>),
    Alias(WeightedAliasIndex<f64>),
}

impl Sampler {
    fn build(probs: &[f64]) -> Self {
        if probs.len() > ALIAS_THRESHOLD {
            Sampler::Alias(WeightedAliasIndex::new(probs.to_vec()).expect("validated weights"))
        } else {
            let mut acc = 0.0;
            let mut cum: Vec<f64> = probs
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            if let Some(last) = cum.last_mut() {
                *last = f64::INFINITY;
            }
            Sampler::Scan(cum)
        }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Sampler::Scan(cum) => {
                if cum.len() == 1 {
                    return 0;
                }
                let u: f64 = rng.random();
                cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
            }
            Sampler::Alias(alias) => alias.sample(rng),
        }
    }
}

/// Finite-support law of a single increment `X_i`.
#[derive(Clone, Debug)]
pub struct StepDistribution {
    dim: usize,
    atoms: Vec<Site>,
    probs: Vec<f64>,
    exact: Option<Vec<BigRational>>,
    max_radius: i64,
    sampler: Sampler,
}

impl PartialEq for StepDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.atoms == other.atoms && self.probs == other.probs
    }
}

/// Validates and normalizes a list of atoms into a [`StepDistribution`].
///
/// Duplicate sites are merged by summing their probability and zero-mass
/// atoms are dropped. When every probability is exact and they sum to exactly
/// one the distribution keeps its rational weights.
pub fn validate_distribution(
    atoms: &[(Site, Probability)],
    dim: usize,
) -> Result<StepDistribution, WalkError> {
    if atoms.is_empty() || dim == 0 {
        return Err(WalkError::EmptySupport);
    }
    for (site, p) in atoms {
        if site.dim() != dim {
            return Err(WalkError::DimensionMismatch {
                site: site.clone(),
                got: site.dim(),
                expected: dim,
            });
        }
        if p.is_negative() {
            return Err(WalkError::NegativeProbability { site: site.clone(), prob: p.to_f64() });
        }
    }

    let all_exact = atoms.iter().all(|(_, p)| matches!(p, Probability::Exact(_)));
    let mut exact_merged: BTreeMap<Site, BigRational> = BTreeMap::new();
    let mut float_merged: BTreeMap<Site, f64> = BTreeMap::new();
    for (site, p) in atoms.iter().filter(|(_, p)| !p.is_zero()) {
        if let Probability::Exact(r) = p {
            *exact_merged.entry(site.clone()).or_insert_with(BigRational::zero) += r;
        }
        *float_merged.entry(site.clone()).or_insert(0.0) += p.to_f64();
    }
    if float_merged.is_empty() {
        return Err(WalkError::EmptySupport);
    }

    let exact_total: Option<BigRational> =
        all_exact.then(|| exact_merged.values().fold(BigRational::zero(), |a, b| a + b));
    if let Some(total) = &exact_total {
        if total.is_one() {
            let sites: Vec<Site> = exact_merged.keys().cloned().collect();
            let exact: Vec<BigRational> = exact_merged.into_values().collect();
            let probs: Vec<f64> = exact.iter().map(|r| r.to_f64().unwrap()).collect();
            return Ok(StepDistribution::assemble(dim, sites, probs, Some(exact)));
        }
    }

    let total: f64 = float_merged.values().sum();
    if !total.is_finite() || (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(WalkError::MassNotOne { total });
    }
    let sites: Vec<Site> = float_merged.keys().cloned().collect();
    let probs: Vec<f64> = float_merged.values().map(|p| p / total).collect();
    Ok(StepDistribution::assemble(dim, sites, probs, None))
}

impl StepDistribution {
    fn assemble(
        dim: usize,
        atoms: Vec<Site>,
        probs: Vec<f64>,
        exact: Option<Vec<BigRational>>,
    ) -> Self {
        let max_radius = atoms.iter().map(Site::radius).max().unwrap_or(0);
        let sampler = Sampler::build(&probs);
        StepDistribution { dim, atoms, probs, exact, max_radius, sampler }
    }

    /// Simple symmetric walk: `±e_i` with probability `1/(2d)` each.
    pub fn simple(dim: usize) -> Result<Self, WalkError> {
        if dim == 0 {
            return Err(WalkError::ParameterOutOfRange("simple walk needs d >= 1".into()));
        }
        let atoms: Vec<(Site, Probability)> = (0..dim)
            .flat_map(|axis| [-1, 1].map(|s| (Site::unit(dim, axis, s), Probability::ratio(1, 2 * dim as i64))))
            .collect();
        validate_distribution(&atoms, dim)
    }

    /// One-dimensional nearest-neighbour walk stepping `+1` with probability `p`.
    pub fn biased1d(p: Probability) -> Result<Self, WalkError> {
        let x = p.to_f64();
        if !(x > 0.0 && x < 1.0) {
            return Err(WalkError::ParameterOutOfRange(format!("biased1d needs p in (0,1), got {p}")));
        }
        let q = match &p {
            Probability::Exact(r) => Probability::Exact(BigRational::one() - r),
            Probability::Float(x) => Probability::Float(1.0 - x),
        };
        validate_distribution(&[(Site(vec![1]), p), (Site(vec![-1]), q)], 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Site] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Rational weights, present only when the law was given exactly.
    pub fn exact_probs(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn max_radius(&self) -> i64 {
        self.max_radius
    }

    pub fn uses_alias(&self) -> bool {
        matches!(self.sampler, Sampler::Alias(_))
    }

    pub fn drift(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (site, p) in self.atoms.iter().zip(&self.probs) {
            for (acc, &c) in m.iter_mut().zip(site.coords()) {
                *acc += p * c as f64;
            }
        }
        m
    }

    pub fn is_centered(&self) -> bool {
        self.drift().iter().all(|m| m.abs() < 1e-12)
    }

    /// Rank of the step covariance matrix (the dimension the walk actually spreads in).
    pub fn covariance_rank(&self) -> usize {
        let d = self.dim;
        let mean = self.drift();
        let mut cov = vec![vec![0.0; d]; d];
        for (site, p) in self.atoms.iter().zip(&self.probs) {
            for a in 0..d {
                for b in 0..d {
                    cov[a][b] += p * (site.0[a] as f64 - mean[a]) * (site.0[b] as f64 - mean[b]);
                }
            }
        }
        matrix_rank(cov, 1e-10)
    }

    #[inline]
    pub(crate) fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }
}

fn matrix_rank(mut m: Vec<Vec<f64>>, tol: f64) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..cols {
        let pivot = (rank..rows).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()));
        let Some(pivot) = pivot else { break };
        if m[pivot][col].abs() <= tol {
            continue;
        }
        m.swap(rank, pivot);
        for r in 0..rows {
            if r != rank {
                let factor = m[r][col] / m[rank][col];
                for c in col..cols {
                    m[r][c] -= factor * m[rank][c];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Builds a named distribution. `simple` needs `dim`, `biased1d` needs `p`;
/// `custom` distributions go through [`validate_distribution`] instead.
pub fn preset(
    name: &str,
    dim: Option<usize>,
    p: Option<Probability>,
) -> Result<StepDistribution, WalkError> {
    match name {
        "simple" => StepDistribution::simple(dim.unwrap_or(1)),
        "biased1d" => {
            let p = p.ok_or_else(|| WalkError::ParameterOutOfRange("biased1d needs p".into()))?;
            StepDistribution::biased1d(p)
        }
        "custom" => Err(WalkError::ParameterOutOfRange("custom preset needs an atom list".into())),
        other => Err(WalkError::UnknownPreset(other.to_string())),
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream for `(seed, replica)`:
/// `mix64(seed ^ mix64(replica + 1) · φ)`, fed to `Xoshiro256PlusPlus::seed_from_u64`
/// which expands it through SplitMix64.
pub fn stream_key(seed: u64, replica: u64) -> u64 {
    mix64(seed ^ mix64(replica.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn replica_rng(seed: u64, replica: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(stream_key(seed, replica))
}

/// Reproducible source of increments for one replica.
#[derive(Clone, Debug)]
pub struct WalkGenerator<'a> {
    dist: &'a StepDistribution,
    seed: u64,
    replica: u64,
    rng: Xoshiro256PlusPlus,
}

impl<'a> WalkGenerator<'a> {
    pub fn new(dist: &'a StepDistribution, seed: u64, replica: u64) -> Self {
        WalkGenerator { dist, seed, replica, rng: replica_rng(seed, replica) }
    }

    pub fn dist(&self) -> &'a StepDistribution {
        self.dist
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    /// Rewinds to the beginning of this replica's stream.
    pub fn restart(&mut self) {
        self.rng = replica_rng(self.seed, self.replica);
    }

    /// Index into `dist().atoms()` of the next increment.
    #[inline]
    pub fn next_index(&mut self) -> usize {
        self.dist.sample_index(&mut self.rng)
    }

    #[inline]
    pub fn next_step(&mut self) -> &'a Site {
        let i = self.next_index();
        &self.dist.atoms[i]
    }
}

/// Iterator over exactly `n` increments of a generator.
pub struct Steps<'g, 'a> {
    gen: &'g mut WalkGenerator<'a>,
    remaining: u64,
}

impl<'a> Iterator for Steps<'_, 'a> {
    type Item = &'a Site;

    fn next(&mut self) -> Option<&'a Site> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.gen.next_step())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Steps<'_, '_> {}

pub fn generate_steps<'g, 'a>(gen: &'g mut WalkGenerator<'a>, n: u64) -> Steps<'g, 'a> {
    Steps { gen, remaining: n }
}
