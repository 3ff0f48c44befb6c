//! Certification campaigns and plot-ready data.
//!
//! A campaign fixes a device (Haar or trapped-ion unitary plus an input
//! state), computes its exact tables once, and then repeats `n_s`
//! independent runs. Each run draws a reference sample from the device,
//! grows bubbles from it, draws one sample per target sampler, and compares
//! the two through the partition with the two-sample chi-squared test.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coarsegrain::{build_bubbles, BubbleParams, BubblePartition, RadiusSchedule};
use crate::distributions::{
    boson_distribution, distinguishable_distribution, DistributionSource, Fnv1a,
    OutcomeDistribution, SamplerKind,
};
use crate::error::{invalid, Error, Result};
use crate::fock::{FockState, ProblemShape};
use crate::interferometer::{
    haar_unitary, perturb_hamiltonian, perturb_timing, Interferometer, IonChain, NoiseLaw,
    NoiseModel, Provenance, YB171_MASS,
};
use crate::rng::{RoleTag, Seed};
use crate::sampling::{draw_uniform, sample_fidelity, SampleSet, TableSampler};
use crate::stats::{campaign_summary, certify, chi2_pdf, mean_std, TestReport};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    #[default]
    Yb171,
}

impl Species {
    pub fn mass(self) -> f64 {
        match self {
            Species::Yb171 => YB171_MASS,
        }
    }
}

/// The device under test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    Haar {
        m: usize,
        n: usize,
        seed: u64,
    },
    /// Transverse phonons of an `m`-ion chain; frequencies in rad/s, `tau` in s.
    Ion {
        m: usize,
        n: usize,
        omega_z: f64,
        omega_x: f64,
        #[serde(default)]
        species: Species,
        tau: f64,
    },
    /// A unitary saved by `gen-unitary` or `ion-chain`.
    File {
        path: PathBuf,
        n: usize,
    },
}

impl SystemConfig {
    pub fn particles(&self) -> usize {
        match self {
            SystemConfig::Haar { n, .. }
            | SystemConfig::Ion { n, .. }
            | SystemConfig::File { n, .. } => *n,
        }
    }
}

/// A sampler compared against the device's reference sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum TargetRole {
    /// A second, independent sample from the same device.
    Quantum2,
    Noisy { model: NoiseModel, strength: f64 },
    Distinguishable,
    Uniform,
}

impl TargetRole {
    pub fn label(&self) -> String {
        match self {
            TargetRole::Quantum2 => "quantum2".into(),
            TargetRole::Noisy { model, strength } => {
                let model = match model {
                    NoiseModel::Timing => "timing",
                    NoiseModel::Hamiltonian => "hamiltonian",
                };
                format!("noisy_{model}_{strength}")
            }
            TargetRole::Distinguishable => "distinguishable".into(),
            TargetRole::Uniform => "uniform".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub system: SystemConfig,
    /// Input occupations; defaults to one particle in each of the first `n` modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<u8>>,
    pub n_m: u64,
    pub n_s: u64,
    pub targets: Vec<TargetRole>,
    pub target_n_b: Vec<usize>,
    pub alpha: f64,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    #[serde(default)]
    pub schedule: RadiusSchedule,
    /// Grow one partition per target from the first run and reuse it.
    #[serde(default)]
    pub fixed_partition: bool,
    /// Draw a fresh noisy device in every run instead of once per campaign.
    #[serde(default)]
    pub renoise_per_run: bool,
    #[serde(default)]
    pub noise_law: NoiseLaw,
}

fn default_min_count() -> u64 {
    10
}

impl CampaignConfig {
    /// Null-plus-fraud campaign on a Haar device with the defaults used
    /// throughout: `N_m = 10^4`, `alpha = 0.01`.
    pub fn haar(m: usize, n: usize, seed: u64) -> Self {
        CampaignConfig {
            system: SystemConfig::Haar { m, n, seed },
            input: None,
            n_m: 10_000,
            n_s: 100,
            targets: vec![
                TargetRole::Quantum2,
                TargetRole::Distinguishable,
                TargetRole::Uniform,
            ],
            target_n_b: vec![40],
            alpha: 0.01,
            master_seed: 1,
            output_dir: None,
            min_count: default_min_count(),
            schedule: RadiusSchedule::default(),
            fixed_partition: false,
            renoise_per_run: false,
            noise_law: NoiseLaw::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: CampaignConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_m == 0 {
            return Err(invalid("n_m must be at least 1"));
        }
        if self.n_s == 0 {
            return Err(invalid("n_s must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.targets.is_empty() {
            return Err(invalid("at least one target sampler is required"));
        }
        if self.target_n_b.is_empty() || self.target_n_b.iter().any(|&b| b < 2) {
            return Err(invalid("target_n_b needs entries of at least 2"));
        }
        let noisy = self
            .targets
            .iter()
            .filter(|t| matches!(t, TargetRole::Noisy { .. }))
            .count();
        if noisy > usize::from(u8::MAX) + 1 {
            return Err(invalid("too many noisy targets"));
        }
        for t in &self.targets {
            if let TargetRole::Noisy { model, strength } = t {
                if !(strength.is_finite() && *strength >= 0.0) {
                    return Err(invalid(format!("noise strength must be nonnegative, got {strength}")));
                }
                if *model == NoiseModel::Timing && !matches!(self.system, SystemConfig::Ion { .. }) {
                    return Err(invalid("timing noise needs an ion system"));
                }
            }
        }
        let n = self.system.particles();
        if n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if let Some(input) = &self.input {
            let total: usize = input.iter().map(|&x| usize::from(x)).sum();
            if total != n {
                return Err(invalid(format!("input holds {total} particles but n = {n}")));
            }
            let m = match &self.system {
                SystemConfig::Haar { m, .. } | SystemConfig::Ion { m, .. } => Some(*m),
                SystemConfig::File { .. } => None,
            };
            if m.is_some_and(|m| m != input.len()) {
                return Err(invalid("input length differs from the number of modes"));
            }
        }
        Ok(())
    }

    fn bubble_params(&self, target: usize) -> BubbleParams {
        BubbleParams::new(target)
            .with_min_count(self.min_count)
            .with_schedule(self.schedule)
    }
}

/// One comparison within a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub role: String,
    pub target_n_b: usize,
    #[serde(flatten)]
    pub report: TestReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: u64,
    /// Realized bin count for each entry of `target_n_b`.
    pub n_b: Vec<usize>,
    /// Raw-sample fidelity between the reference sample and each target's sample.
    pub fidelity: Vec<f64>,
    pub tests: Vec<TestRecord>,
}

/// Pass rate and p-value moments for one `(role, target_n_b)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub role: String,
    pub target_n_b: usize,
    pub mean_n_b: f64,
    pub runs: usize,
    /// Percent.
    pub pass_rate: f64,
    pub p_mean: f64,
    pub p_std: f64,
    pub chi2_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub role: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub m: usize,
    pub n: usize,
    pub dim: u64,
    pub input: FockState,
    pub unitary: Provenance,
    pub summary: Vec<SummaryRow>,
    pub fidelity: Vec<FidelityRow>,
    pub runs: Vec<RunRecord>,
}

impl CampaignReport {
    pub fn row(&self, role: &str, target_n_b: usize) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.role == role && r.target_n_b == target_n_b)
    }

    /// Every test for one `(role, target_n_b)` pair, in run order.
    pub fn tests<'a>(&'a self, role: &'a str, target_n_b: usize) -> impl Iterator<Item = &'a TestRecord> + 'a {
        self.runs
            .iter()
            .flat_map(|r| r.tests.iter())
            .filter(move |t| t.role == role && t.target_n_b == target_n_b)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

enum Sampler {
    Table(usize),
    Uniform,
    /// Re-perturbed each run; holds the index of the noisy target.
    FreshNoise(u8, f64),
}

/// A campaign with its device and exact tables ready.
pub struct Campaign {
    cfg: CampaignConfig,
    device: Interferometer,
    input: FockState,
    shape: ProblemShape,
    tables: Vec<OutcomeDistribution>,
    samplers: Vec<Sampler>,
}

fn build_device(cfg: &CampaignConfig) -> Result<(Interferometer, Option<(IonChain, f64)>)> {
    match &cfg.system {
        SystemConfig::Haar { m, seed, .. } => Ok((haar_unitary(*m, *seed)?, None)),
        SystemConfig::Ion {
            m,
            omega_z,
            omega_x,
            species,
            tau,
            ..
        } => {
            let chain = IonChain::new(*m, species.mass(), *omega_z, *omega_x)?;
            let u = chain.evolve(*tau)?;
            Ok((u, Some((chain, *tau))))
        }
        SystemConfig::File { path, .. } => Ok((Interferometer::load(path)?, None)),
    }
}

fn table_key(u: &Interferometer, input: &FockState, kind: &str) -> u64 {
    let mut h = Fnv1a::new();
    h.update(kind.as_bytes());
    h.update(input.occupations());
    for z in u.unitary().iter() {
        h.update(&z.re.to_le_bytes());
        h.update(&z.im.to_le_bytes());
    }
    h.finish()
}

/// Loads a cached table for `(u, input, kind)` from `dir`, or computes and stores it.
fn cached_table(
    dir: Option<&Path>,
    u: &Interferometer,
    input: &FockState,
    kind: SamplerKind,
) -> Result<OutcomeDistribution> {
    let compute = || match kind {
        SamplerKind::Distinguishable => distinguishable_distribution(u, input),
        _ => boson_distribution(u, input),
    };
    let Some(dir) = dir else { return compute() };
    let name = match kind {
        SamplerKind::Distinguishable => "distinguishable",
        _ => "boson",
    };
    let path = dir.join(format!(
        "{name}_{}_{}_{:016x}.bsd",
        u.modes(),
        input.particles(),
        table_key(u, input, name)
    ));
    let source = DistributionSource {
        kind,
        input: Some(input.clone()),
        unitary: Some(u.provenance().clone()),
    };
    if path.exists() {
        if let Ok(table) = OutcomeDistribution::load(&path) {
            if table.shape().modes() == u.modes() && table.shape().particles() == input.particles() {
                return Ok(table.with_source(source));
            }
        }
    }
    let table = compute()?;
    fs::create_dir_all(dir)?;
    table.save(&path)?;
    Ok(table)
}

fn noisy_device(
    cfg: &CampaignConfig,
    device: &Interferometer,
    chain: Option<&(IonChain, f64)>,
    model: NoiseModel,
    strength: f64,
    seed: Seed,
) -> Result<Interferometer> {
    match model {
        NoiseModel::Hamiltonian => perturb_hamiltonian(device, strength, seed, cfg.noise_law),
        NoiseModel::Timing => {
            let (chain, tau) = chain.ok_or_else(|| invalid("timing noise needs an ion system"))?;
            perturb_timing(chain, *tau, strength)
        }
    }
}

impl Campaign {
    /// Builds the device and every exact table the targets need.
    pub fn prepare(cfg: CampaignConfig) -> Result<Self> {
        cfg.validate()?;
        let (device, chain) = build_device(&cfg)?;
        let m = device.modes();
        let n = cfg.system.particles();
        let input = match &cfg.input {
            Some(occ) => FockState::new(occ.clone()),
            None => FockState::single_occupancy(m, n)?,
        };
        if input.modes() != m {
            return Err(invalid(format!("input has {} modes, device has {m}", input.modes())));
        }
        let shape = ProblemShape::new(m, n)?;
        let cache = cfg.output_dir.as_ref().map(|d| d.join("tables"));
        let cache = cache.as_deref();

        let mut tables = vec![cached_table(cache, &device, &input, SamplerKind::Boson)?];
        let mut samplers = Vec::new();
        let mut noisy_index = 0u8;
        for target in &cfg.targets {
            samplers.push(match *target {
                TargetRole::Quantum2 => Sampler::Table(0),
                TargetRole::Uniform => Sampler::Uniform,
                TargetRole::Distinguishable => {
                    tables.push(cached_table(cache, &device, &input, SamplerKind::Distinguishable)?);
                    Sampler::Table(tables.len() - 1)
                }
                TargetRole::Noisy { model, strength } => {
                    let k = noisy_index;
                    noisy_index = noisy_index.wrapping_add(1);
                    if cfg.renoise_per_run && model == NoiseModel::Hamiltonian {
                        Sampler::FreshNoise(k, strength)
                    } else {
                        let seed = Seed::derive(cfg.master_seed, 0, RoleTag::NoiseDevice(k));
                        let u = noisy_device(&cfg, &device, chain.as_ref(), model, strength, seed)?;
                        tables.push(cached_table(cache, &u, &input, SamplerKind::Boson)?);
                        Sampler::Table(tables.len() - 1)
                    }
                }
            });
        }
        Ok(Campaign {
            cfg,
            device,
            input,
            shape,
            tables,
            samplers,
        })
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.cfg
    }

    pub fn device(&self) -> &Interferometer {
        &self.device
    }

    pub fn input(&self) -> &FockState {
        &self.input
    }

    /// Exact bosonic table of the device.
    pub fn boson_table(&self) -> &OutcomeDistribution {
        &self.tables[0]
    }

    /// Exact table behind a target, if it has one.
    pub fn target_table(&self, target: usize) -> Option<&OutcomeDistribution> {
        match self.samplers.get(target)? {
            Sampler::Table(i) => Some(&self.tables[*i]),
            _ => None,
        }
    }

    fn role_tag(&self, target: usize) -> RoleTag {
        match self.cfg.targets[target] {
            TargetRole::Quantum2 => RoleTag::Sample2,
            TargetRole::Distinguishable => RoleTag::Distinguishable,
            TargetRole::Uniform => RoleTag::Uniform,
            TargetRole::Noisy { .. } => {
                let k = self.cfg.targets[..target]
                    .iter()
                    .filter(|t| matches!(t, TargetRole::Noisy { .. }))
                    .count();
                RoleTag::Noisy(k as u8)
            }
        }
    }

    fn reference_sample(&self, samplers: &[TableSampler<'_>], run: u64) -> Result<SampleSet> {
        let seed = Seed::derive(self.cfg.master_seed, run, RoleTag::Sample1);
        samplers[0].draw(self.cfg.n_m, seed)
    }

    fn target_sample(&self, samplers: &[TableSampler<'_>], target: usize, run: u64) -> Result<SampleSet> {
        let seed = Seed::derive(self.cfg.master_seed, run, self.role_tag(target));
        let n_m = self.cfg.n_m;
        match self.samplers[target] {
            Sampler::Table(i) => samplers[i].draw(n_m, seed),
            Sampler::Uniform => draw_uniform(self.shape.modes(), self.shape.particles(), n_m, seed),
            Sampler::FreshNoise(k, strength) => {
                let noise = Seed::derive(self.cfg.master_seed, run, RoleTag::NoiseDevice(k));
                let u = perturb_hamiltonian(&self.device, strength, noise, self.cfg.noise_law)?;
                let table = boson_distribution(&u, &self.input)?;
                TableSampler::new(&table).draw(n_m, seed)
            }
        }
    }

    fn partitions(&self, sample: &SampleSet) -> Result<Vec<BubblePartition>> {
        self.cfg
            .target_n_b
            .iter()
            .map(|&t| {
                let mut params = self.cfg.bubble_params(t);
                params.construction_sample = Some(sample.source().to_string());
                build_bubbles(sample, &params)
            })
            .collect()
    }

    fn samplers(&self) -> Vec<TableSampler<'_>> {
        self.tables
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let owner = self
                    .samplers
                    .iter()
                    .position(|s| matches!(s, Sampler::Table(j) if *j == i));
                let label = match owner {
                    Some(k) if i > 0 => self.cfg.targets[k].label(),
                    _ => "quantum".to_string(),
                };
                TableSampler::new(t).with_label(label)
            })
            .collect()
    }

    fn run_one(
        &self,
        samplers: &[TableSampler<'_>],
        fixed: Option<&[BubblePartition]>,
        run: u64,
    ) -> Result<RunRecord> {
        let s1 = self.reference_sample(samplers, run)?;
        let grown;
        let partitions = match fixed {
            Some(p) => p,
            None => {
                grown = self.partitions(&s1)?;
                &grown[..]
            }
        };
        let reference: Vec<_> = partitions
            .iter()
            .map(|p| p.coarse_grain_sample(&s1))
            .collect::<Result<_>>()?;
        let mut tests = Vec::new();
        let mut fidelity = Vec::new();
        for (k, target) in self.cfg.targets.iter().enumerate() {
            let s2 = self.target_sample(samplers, k, run)?;
            fidelity.push(sample_fidelity(&s1, &s2)?);
            let role = target.label();
            for ((p, c1), &t) in partitions.iter().zip(&reference).zip(&self.cfg.target_n_b) {
                let c2 = p.coarse_grain_sample(&s2)?;
                let report = certify(
                    c1,
                    &c2,
                    self.cfg.alpha,
                    format!("run{run}/sample1"),
                    format!("run{run}/{role}"),
                )?;
                tests.push(TestRecord {
                    role: role.clone(),
                    target_n_b: t,
                    report,
                });
            }
        }
        Ok(RunRecord {
            run,
            n_b: partitions.iter().map(BubblePartition::len).collect(),
            fidelity,
            tests,
        })
    }

    /// Executes all runs. Runs are independent and may execute in any order;
    /// records are collected in run order.
    pub fn run(&self) -> Result<CampaignReport> {
        let samplers = self.samplers();
        let fixed = if self.cfg.fixed_partition {
            let s1 = self.reference_sample(&samplers, 1)?;
            Some(self.partitions(&s1).map_err(|e| Error::Run {
                run: 1,
                source: Box::new(e),
            })?)
        } else {
            None
        };
        let one = |run: u64| {
            self.run_one(&samplers, fixed.as_deref(), run)
                .map_err(|e| Error::Run {
                    run,
                    source: Box::new(e),
                })
        };
        #[cfg(feature = "parallel")]
        let runs: Vec<RunRecord> = {
            use rayon::prelude::*;
            (1..=self.cfg.n_s).into_par_iter().map(one).collect::<Result<_>>()?
        };
        #[cfg(not(feature = "parallel"))]
        let runs: Vec<RunRecord> = (1..=self.cfg.n_s).map(one).collect::<Result<_>>()?;
        self.report(runs)
    }

    fn report(&self, runs: Vec<RunRecord>) -> Result<CampaignReport> {
        let mut summary = Vec::new();
        for target in &self.cfg.targets {
            let role = target.label();
            for (ti, &t) in self.cfg.target_n_b.iter().enumerate() {
                let reports: Vec<TestReport> = runs
                    .iter()
                    .flat_map(|r| r.tests.iter())
                    .filter(|x| x.role == role && x.target_n_b == t)
                    .map(|x| x.report.clone())
                    .collect();
                let s = campaign_summary(&reports)?;
                let (mean_n_b, _) = mean_std(runs.iter().map(|r| r.n_b[ti] as f64));
                let (chi2_mean, _) = mean_std(reports.iter().map(|r| r.chi2));
                summary.push(SummaryRow {
                    role: role.clone(),
                    target_n_b: t,
                    mean_n_b,
                    runs: s.runs,
                    pass_rate: s.pass_rate,
                    p_mean: s.p_mean,
                    p_std: s.p_std,
                    chi2_mean,
                });
            }
        }
        let fidelity = self
            .cfg
            .targets
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let (mean, std) = mean_std(runs.iter().map(|r| r.fidelity[k]));
                FidelityRow {
                    role: t.label(),
                    mean,
                    std,
                }
            })
            .collect();
        let mut config = self.cfg.clone();
        config.output_dir = None;
        Ok(CampaignReport {
            config,
            m: self.shape.modes(),
            n: self.shape.particles(),
            dim: self.shape.dim(),
            input: self.input.clone(),
            unitary: self.device.provenance().clone(),
            summary,
            fidelity,
            runs,
        })
    }

    /// Saves the first run's samples and partitions for figure data.
    pub fn save_first_run(&self, dir: &Path) -> Result<()> {
        let samplers = self.samplers();
        let s1 = self.reference_sample(&samplers, 1)?;
        let samples = dir.join("samples");
        let partitions = dir.join("partitions");
        fs::create_dir_all(&samples)?;
        fs::create_dir_all(&partitions)?;
        s1.save(samples.join("sample1.csv"))?;
        for k in 0..self.cfg.targets.len() {
            let s2 = self.target_sample(&samplers, k, 1)?;
            s2.save(samples.join(format!("{}.csv", self.cfg.targets[k].label())))?;
        }
        for (p, t) in self.partitions(&s1)?.iter().zip(&self.cfg.target_n_b) {
            p.save(partitions.join(format!("nb{t}.json")))?;
        }
        Ok(())
    }
}

/// Prepares and runs a campaign. With an output directory, also writes
/// `report.json`, the cached tables and the first run's artifacts.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport> {
    let campaign = Campaign::prepare(cfg.clone())?;
    let report = campaign.run()?;
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), report.to_json()?)?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
        campaign.save_first_run(dir)?;
    }
    Ok(report)
}

/// `sqrt(N_m p (1 - p)) / N_m`, the multinomial standard deviation of a bin frequency.
pub fn multinomial_sigma(count: u64, total: u64) -> f64 {
    let n = total as f64;
    let p = count as f64 / n;
    (n * p * (1.0 - p)).sqrt() / n
}

/// Histogram of `values` over `bins` equal cells spanning `[lo, hi]`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if v < lo || v > hi || !v.is_finite() {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Files written by [`emit_figure_data`].
#[derive(Clone, Debug, Default)]
pub struct FigureFiles {
    pub coarse: Vec<PathBuf>,
    pub chi2: Vec<PathBuf>,
    pub p_values: Vec<PathBuf>,
    pub summary: PathBuf,
}

const HISTOGRAM_BINS: usize = 30;
const P_VALUE_BINS: usize = 20;

/// Writes plot-ready CSV tables for the campaign stored in `dir` into `out`:
///
/// * `coarse_nb<T>.csv`: per-bin probabilities of the first run's samples
///   with multinomial error bars, plus the coarse-grained exact tables;
/// * `chi2_<role>_nb<T>.csv`: histogram density of the statistics with the
///   chi-squared density (averaged over the runs' degrees of freedom);
/// * `pvalues_<role>_nb<T>.csv`: p-value histogram;
/// * `summary.csv`: pass rates and p-value moments.
pub fn emit_figure_data(dir: &Path, out: &Path) -> Result<FigureFiles> {
    let report_path = dir.join("report.json");
    if !report_path.exists() {
        return Err(invalid(format!("no campaign report at {}", report_path.display())));
    }
    let report = CampaignReport::load(&report_path)?;
    fs::create_dir_all(out)?;
    let mut files = FigureFiles::default();

    let shape = ProblemShape::new(report.m, report.n)?;
    let samples_dir = dir.join("samples");
    let mut series: Vec<(String, SampleSet)> = Vec::new();
    let reference = samples_dir.join("sample1.csv");
    if !reference.exists() {
        return Err(invalid(format!("missing artifact {}", reference.display())));
    }
    series.push(("sample1".into(), SampleSet::load(&reference)?));
    for t in &report.config.targets {
        let path = samples_dir.join(format!("{}.csv", t.label()));
        if !path.exists() {
            return Err(invalid(format!("missing artifact {}", path.display())));
        }
        series.push((t.label(), SampleSet::load(&path)?));
    }
    let tables = load_tables(&dir.join("tables"), &shape)?;
    for &t in &report.config.target_n_b {
        let path = dir.join("partitions").join(format!("nb{t}.json"));
        if !path.exists() {
            return Err(invalid(format!("missing artifact {}", path.display())));
        }
        let partition = BubblePartition::load(&path)?;
        let mut csv = String::from("series,bin,count,probability,sigma\n");
        for (name, sample) in &series {
            let coarse = partition.coarse_grain_sample(sample)?;
            let total = coarse.total();
            for (b, &c) in coarse.masses().iter().enumerate() {
                let p = c as f64 / total as f64;
                let sigma = multinomial_sigma(c, total);
                let _ = writeln!(csv, "{name},{b},{c},{p},{sigma}");
            }
        }
        for (name, table) in &tables {
            let coarse = partition.coarse_grain_table(table)?;
            for (b, &p) in coarse.masses().iter().enumerate() {
                let _ = writeln!(csv, "{name},{b},,{p},");
            }
        }
        let path = out.join(format!("coarse_nb{t}.csv"));
        fs::write(&path, csv)?;
        files.coarse.push(path);
    }

    for target in &report.config.targets {
        let role = target.label();
        for &t in &report.config.target_n_b {
            let tests: Vec<&TestRecord> = report.tests(&role, t).collect();
            let chi2: Vec<f64> = tests.iter().map(|x| x.report.chi2).collect();
            let dfs: Vec<f64> = tests.iter().map(|x| f64::from(x.report.df)).collect();
            let hi = chi2.iter().copied().fold(0.0, f64::max).max(1.0) * 1.001;
            let counts = histogram(&chi2, 0.0, hi, HISTOGRAM_BINS);
            let width = hi / HISTOGRAM_BINS as f64;
            let mut csv = String::from("bin_lo,bin_hi,count,density,chi2_density\n");
            for (b, &c) in counts.iter().enumerate() {
                let lo = b as f64 * width;
                let mid = lo + 0.5 * width;
                let density = c as f64 / (chi2.len() as f64 * width);
                let theory = dfs.iter().map(|&df| chi2_pdf(mid, df)).sum::<f64>() / dfs.len() as f64;
                let _ = writeln!(csv, "{lo},{},{c},{density},{theory}", lo + width);
            }
            let path = out.join(format!("chi2_{role}_nb{t}.csv"));
            fs::write(&path, csv)?;
            files.chi2.push(path);

            let p: Vec<f64> = tests.iter().map(|x| x.report.p_value).collect();
            let counts = histogram(&p, 0.0, 1.0, P_VALUE_BINS);
            let mut csv = String::from("bin_lo,bin_hi,count\n");
            for (b, &c) in counts.iter().enumerate() {
                let lo = b as f64 / P_VALUE_BINS as f64;
                let _ = writeln!(csv, "{lo},{},{c}", lo + 1.0 / P_VALUE_BINS as f64);
            }
            let path = out.join(format!("pvalues_{role}_nb{t}.csv"));
            fs::write(&path, csv)?;
            files.p_values.push(path);
        }
    }

    let mut csv = String::from("role,target_n_b,mean_n_b,runs,pass_rate,p_mean,p_std,chi2_mean,fidelity_mean,fidelity_std\n");
    let fidelity: BTreeMap<&str, &FidelityRow> =
        report.fidelity.iter().map(|f| (f.role.as_str(), f)).collect();
    for r in &report.summary {
        let (fm, fs_) = fidelity
            .get(r.role.as_str())
            .map(|f| (f.mean, f.std))
            .unwrap_or((f64::NAN, f64::NAN));
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{fm},{fs_}",
            r.role, r.target_n_b, r.mean_n_b, r.runs, r.pass_rate, r.p_mean, r.p_std, r.chi2_mean
        );
    }
    files.summary = out.join("summary.csv");
    fs::write(&files.summary, csv)?;
    Ok(files)
}

/// Exact tables cached by a campaign, named by kind and hash.
fn load_tables(dir: &Path, shape: &ProblemShape) -> Result<Vec<(String, OutcomeDistribution)>> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bsd"))
        .collect();
    entries.sort();
    for path in entries {
        let table = OutcomeDistribution::load(&path)?;
        if table.shape() != shape {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
        out.push((format!("exact_{stem}"), table));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::chi2_cdf_real;

    fn small(n_s: u64) -> CampaignConfig {
        let mut cfg = CampaignConfig::haar(8, 3, 5);
        cfg.n_m = 2000;
        cfg.n_s = n_s;
        cfg.target_n_b = vec![8, 15];
        cfg.master_seed = 42;
        cfg
    }

    #[test]
    fn config_validation() {
        assert!(small(1).validate().is_ok());
        let mut bad = small(1);
        bad.alpha = 1.0;
        assert!(bad.validate().unwrap_err().is_validation());
        let mut bad = small(1);
        bad.n_m = 0;
        assert!(bad.validate().is_err());
        let mut bad = small(0);
        bad.n_s = 0;
        assert!(bad.validate().is_err());
        let mut bad = small(1);
        bad.targets.push(TargetRole::Noisy {
            model: NoiseModel::Timing,
            strength: 0.03,
        });
        assert!(bad.validate().is_err());
        let mut bad = small(1);
        bad.input = Some(vec![1, 1, 0, 0, 0, 0, 0, 0]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let mut cfg = small(3);
        cfg.targets.push(TargetRole::Noisy {
            model: NoiseModel::Hamiltonian,
            strength: 0.01,
        });
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"role\":\"noisy\""));
        assert_eq!(CampaignConfig::from_json(&text).unwrap(), cfg);
        let minimal = r#"{"system":{"kind":"haar","m":6,"n":2,"seed":1},"n_m":100,"n_s":2,
            "targets":[{"role":"quantum2"}],"target_n_b":[5],"alpha":0.01,"master_seed":3}"#;
        let cfg = CampaignConfig::from_json(minimal).unwrap();
        assert_eq!(cfg.min_count, 10);
        assert_eq!(cfg.schedule, RadiusSchedule::default());
    }

    #[test]
    fn single_run_report() {
        let report = run_campaign(&small(1)).unwrap();
        assert_eq!(report.runs.len(), 1);
        assert_eq!(report.runs[0].tests.len(), 6);
        assert_eq!(report.summary.len(), 6);
        assert_eq!(report.dim, 120);
        assert!(report.runs[0].fidelity.iter().all(|f| (0.0..=1.0).contains(f)));
    }

    #[test]
    fn campaigns_are_deterministic() {
        let a = run_campaign(&small(6)).unwrap().to_json().unwrap();
        let b = run_campaign(&small(6)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let mut other = small(6);
        other.master_seed = 43;
        assert_ne!(run_campaign(&other).unwrap().to_json().unwrap(), a);
    }

    #[test]
    fn runs_do_not_depend_on_campaign_length() {
        let short = run_campaign(&small(2)).unwrap();
        let long = run_campaign(&small(5)).unwrap();
        assert_eq!(short.runs[..], long.runs[..2]);
    }

    #[test]
    fn fixed_partition_reuses_bins() {
        let mut cfg = small(4);
        cfg.fixed_partition = true;
        let report = run_campaign(&cfg).unwrap();
        assert!(report.runs.windows(2).all(|w| w[0].n_b == w[1].n_b));
    }

    #[test]
    fn figure_data_from_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(40);
        cfg.output_dir = Some(dir.path().to_path_buf());
        let report = run_campaign(&cfg).unwrap();
        assert!(dir.path().join("report.json").exists());
        let out = dir.path().join("figures");
        let files = emit_figure_data(dir.path(), &out).unwrap();
        assert_eq!(files.coarse.len(), 2);

        let text = fs::read_to_string(&files.coarse[0]).unwrap();
        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            *sums.entry(f[0].to_string()).or_default() += f[3].parse::<f64>().unwrap();
            if !f[2].is_empty() {
                let count: u64 = f[2].parse().unwrap();
                let sigma: f64 = f[4].parse().unwrap();
                let p = count as f64 / 2000.0;
                assert!((sigma - (2000.0 * p * (1.0 - p)).sqrt() / 2000.0).abs() < 1e-15);
            }
        }
        assert!(sums.len() >= 5);
        assert!(sums.values().all(|s| (s - 1.0).abs() < 1e-9));

        let p_hist = fs::read_to_string(&files.p_values[0]).unwrap();
        let total: u64 = p_hist
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(total, 40);
        assert!(report.row("uniform", 15).unwrap().pass_rate < 100.0);

        assert!(emit_figure_data(&dir.path().join("missing"), &out).is_err());
    }

    #[test]
    fn null_statistics_follow_chi2() {
        let mut cfg = small(120);
        cfg.targets = vec![TargetRole::Quantum2];
        cfg.target_n_b = vec![10];
        let report = run_campaign(&cfg).unwrap();
        let tests: Vec<_> = report.tests("quantum2", 10).collect();
        let stats: Vec<f64> = tests.iter().map(|t| t.report.chi2).collect();
        let dfs: Vec<f64> = tests.iter().map(|t| f64::from(t.report.df)).collect();
        let mixture = |x: f64| dfs.iter().map(|&d| chi2_cdf_real(x, d)).sum::<f64>() / dfs.len() as f64;
        let d = crate::stats::ks_statistic(&stats, mixture);
        assert!(crate::stats::ks_p_value(d, stats.len()) > 1e-3);
    }

    #[test]
    fn multinomial_sigma_formula() {
        assert_eq!(multinomial_sigma(0, 100), 0.0);
        assert!((multinomial_sigma(50, 100) - 0.05).abs() < 1e-15);
        assert_eq!(histogram(&[0.0, 0.5, 1.0, 2.0], 0.0, 1.0, 2), vec![1, 2]);
    }
}
