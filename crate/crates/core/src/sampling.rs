//! Finite samples from the exact tables or from direct samplers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::distr::Distribution;
use rand::{Rng, RngCore};
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use crate::distributions::OutcomeDistribution;
use crate::error::{invalid, Error, Result};
use crate::fock::{FockState, ProblemShape};
use crate::interferometer::Interferometer;
use crate::rng::Seed;

/// Where a sample came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSource {
    pub generator: String,
    pub seed: Option<Seed>,
}

impl SampleSource {
    pub fn new(generator: impl Into<String>, seed: Seed) -> Self {
        SampleSource {
            generator: generator.into(),
            seed: Some(seed),
        }
    }

    pub fn external(generator: impl Into<String>) -> Self {
        SampleSource {
            generator: generator.into(),
            seed: None,
        }
    }
}

impl std::fmt::Display for SampleSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.seed {
            Some(seed) => write!(f, "{}@{seed}", self.generator),
            None => f.write_str(&self.generator),
        }
    }
}

/// Histogram of `N_m` observed outcomes keyed by state rank.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    shape: ProblemShape,
    counts: BTreeMap<u64, u64>,
    total: u64,
    source: SampleSource,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    m: usize,
    n: usize,
    n_m: u64,
    seed: Option<Seed>,
    provenance: String,
}

impl SampleSet {
    /// Zero counts are dropped; every rank must lie in `[0, D)`.
    pub fn from_counts(
        shape: ProblemShape,
        mut counts: BTreeMap<u64, u64>,
        source: SampleSource,
    ) -> Result<Self> {
        counts.retain(|_, c| *c > 0);
        if let Some((&rank, _)) = counts.range(shape.dim()..).next() {
            return Err(Error::RankOutOfRange {
                rank,
                dim: shape.dim(),
            });
        }
        let total = counts.values().sum();
        Ok(SampleSet {
            shape,
            counts,
            total,
            source,
        })
    }

    fn from_ranks(shape: ProblemShape, ranks: impl Iterator<Item = u64>, source: SampleSource) -> Self {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for r in ranks {
            *counts.entry(r).or_insert(0) += 1;
            total += 1;
        }
        SampleSet {
            shape,
            counts,
            total,
            source,
        }
    }

    pub fn shape(&self) -> &ProblemShape {
        &self.shape
    }

    /// Number of shots `N_m`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct observed states.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, rank: u64) -> u64 {
        self.counts.get(&rank).copied().unwrap_or(0)
    }

    /// `(rank, count)` pairs in ascending rank order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&r, &c)| (r, c))
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn source(&self) -> &SampleSource {
        &self.source
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,count\n");
        for (r, c) in self.iter() {
            let _ = writeln!(out, "{r},{c}");
        }
        out
    }

    /// Writes `path` as CSV and `path.json` as the sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv())?;
        let sidecar = Sidecar {
            m: self.shape.modes(),
            n: self.shape.particles(),
            n_m: self.total,
            seed: self.source.seed,
            provenance: self.source.generator.clone(),
        };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let format_err = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)
            .map_err(|e| format_err(format!("sidecar: {e}")))?;
        let shape = ProblemShape::new(sidecar.m, sidecar.n)?;
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("rank,count") {
            return Err(format_err("expected header \"rank,count\"".into()));
        }
        let mut counts = BTreeMap::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parse = || -> Option<(u64, u64)> {
                let (r, c) = line.split_once(',')?;
                Some((r.trim().parse().ok()?, c.trim().parse().ok()?))
            };
            let (r, c) = parse().ok_or_else(|| format_err(format!("bad row {}: {line}", i + 2)))?;
            if counts.insert(r, c).is_some() {
                return Err(format_err(format!("rank {r} listed twice")));
            }
        }
        let source = SampleSource {
            generator: sidecar.provenance,
            seed: sidecar.seed,
        };
        let set = SampleSet::from_counts(shape, counts, source)?;
        if set.total != sidecar.n_m {
            return Err(format_err(format!(
                "counts sum to {} but sidecar says n_m = {}",
                set.total, sidecar.n_m
            )));
        }
        Ok(set)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Bhattacharyya coefficient between two empirical distributions.
pub fn sample_fidelity(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch("samples have different shapes".into()));
    }
    if a.total == 0 || b.total == 0 {
        return Err(invalid("fidelity of an empty sample"));
    }
    let (small, large) = if a.distinct() <= b.distinct() { (a, b) } else { (b, a) };
    let overlap: f64 = small
        .iter()
        .map(|(r, c)| ((c * large.count(r)) as f64).sqrt())
        .sum();
    Ok(overlap / ((a.total as f64) * (b.total as f64)).sqrt())
}

/// Lookup strategy for table draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrawMethod {
    Cumulative,
    Alias,
    /// Alias table when `N_m > D / 10`, cumulative search otherwise.
    Auto,
}

/// Reusable sampler over one exact table.
pub struct TableSampler<'a> {
    dist: &'a OutcomeDistribution,
    label: String,
    cdf: OnceLock<Vec<f64>>,
    alias: OnceLock<WeightedAliasIndex<f64>>,
}

impl<'a> TableSampler<'a> {
    pub fn new(dist: &'a OutcomeDistribution) -> Self {
        let label = serde_json::to_value(dist.source().kind)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_else(|| "table".into());
        TableSampler {
            dist,
            label,
            cdf: OnceLock::new(),
            alias: OnceLock::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn cdf(&self) -> &[f64] {
        self.cdf.get_or_init(|| {
            let mut acc = 0.0;
            self.dist
                .probs()
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect()
        })
    }

    fn alias(&self) -> Result<&WeightedAliasIndex<f64>> {
        if let Some(a) = self.alias.get() {
            return Ok(a);
        }
        let table = WeightedAliasIndex::new(self.dist.probs().to_vec())
            .map_err(|e| invalid(format!("alias table: {e}")))?;
        Ok(self.alias.get_or_init(|| table))
    }

    pub fn draw(&self, n_m: u64, seed: Seed) -> Result<SampleSet> {
        self.draw_with(n_m, seed, DrawMethod::Auto)
    }

    pub fn draw_with(&self, n_m: u64, seed: Seed, method: DrawMethod) -> Result<SampleSet> {
        if n_m == 0 {
            return Err(invalid("sample size must be at least 1"));
        }
        let shape = self.dist.shape().clone();
        let method = match method {
            DrawMethod::Auto if n_m > shape.dim() / 10 => DrawMethod::Alias,
            DrawMethod::Auto => DrawMethod::Cumulative,
            m => m,
        };
        let mut rng = seed.rng();
        let source = SampleSource::new(self.label.clone(), seed);
        Ok(match method {
            DrawMethod::Alias => {
                let alias = self.alias()?;
                SampleSet::from_ranks(
                    shape,
                    (0..n_m).map(|_| alias.sample(&mut rng) as u64),
                    source,
                )
            }
            _ => {
                let cdf = self.cdf();
                let total = *cdf.last().expect("tables are nonempty");
                SampleSet::from_ranks(
                    shape,
                    (0..n_m).map(|_| {
                        let u = rng.random::<f64>() * total;
                        // first entry whose cumulative mass exceeds u; it has p > 0
                        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u64
                    }),
                    source,
                )
            }
        })
    }
}

/// `N_m` i.i.d. outcomes from an exact table.
pub fn draw_from_table(dist: &OutcomeDistribution, n_m: u64, seed: Seed) -> Result<SampleSet> {
    TableSampler::new(dist).draw(n_m, seed)
}

/// Independent-particle sampler for single-occupancy inputs; needs no table.
pub fn draw_distinguishable_direct(
    u: &Interferometer,
    input: &FockState,
    n_m: u64,
    seed: Seed,
) -> Result<SampleSet> {
    if n_m == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    if input.modes() != u.modes() {
        return Err(Error::ShapeMismatch("input and interferometer sizes differ".into()));
    }
    if input.occupations().iter().any(|&o| o > 1) {
        return Err(Error::Unsupported(
            "distinguishable sampling needs at most one particle per input mode".into(),
        ));
    }
    let shape = ProblemShape::new(u.modes(), input.particles())?;
    let m = u.modes();
    let columns: Vec<Vec<f64>> = input
        .mode_list()
        .into_iter()
        .map(|i| {
            let mut acc = 0.0;
            (0..m)
                .map(|j| {
                    acc += u.unitary()[(j, i)].norm_sqr();
                    acc
                })
                .collect()
        })
        .collect();
    let mut rng = seed.rng();
    let mut outs = vec![0u8; columns.len()];
    let ranks: Vec<u64> = (0..n_m)
        .map(|_| {
            for (o, cdf) in outs.iter_mut().zip(&columns) {
                let x = rng.random::<f64>() * cdf[m - 1];
                *o = cdf.partition_point(|&c| c <= x).min(m - 1) as u8;
            }
            outs.sort_unstable();
            shape.rank_sorted_modes(&outs)
        })
        .collect();
    Ok(SampleSet::from_ranks(
        shape,
        ranks.into_iter(),
        SampleSource::new("distinguishable", seed),
    ))
}

/// Uniform ranks in `[0, D)` by rejection from the next power of two.
pub fn draw_uniform(modes: usize, particles: usize, n_m: u64, seed: Seed) -> Result<SampleSet> {
    if n_m == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    let shape = ProblemShape::new(modes, particles)?;
    let d = shape.dim();
    let mask = if d <= 1 { 0 } else { u64::MAX >> (d - 1).leading_zeros() };
    let mut rng = seed.rng();
    let ranks: Vec<u64> = (0..n_m)
        .map(|_| loop {
            let x = rng.next_u64() & mask;
            if x < d {
                break x;
            }
        })
        .collect();
    Ok(SampleSet::from_ranks(
        shape,
        ranks.into_iter(),
        SampleSource::new("uniform", seed),
    ))
}
