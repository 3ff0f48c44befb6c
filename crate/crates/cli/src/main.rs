mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use bosoncert::coarsegrain::{build_bubbles, BubbleParams, BubblePartition};
use bosoncert::distributions::{
    boson_distribution, distinguishable_distribution, uniform_distribution, OutcomeDistribution,
};
use bosoncert::fock::FockState;
use bosoncert::harness::{emit_figure_data, run_campaign, CampaignConfig, CampaignReport};
use bosoncert::interferometer::{
    haar_unitary, perturb_hamiltonian, perturb_timing, IonChain, Interferometer, NoiseLaw,
    YB171_MASS,
};
use bosoncert::rng::Seed;
use bosoncert::sampling::{draw_from_table, draw_uniform, SampleSet};
use bosoncert::stats::certify;
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] bosoncert::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Json(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Boson-sampling simulation and coarse-grained chi-squared certification.
#[derive(Parser)]
#[command(name = "bosoncert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableKind {
    Boson,
    Distinguishable,
    Uniform,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a Haar-random unitary and save it as JSON.
    GenUnitary {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phonon-hopping unitary of a trapped-ion chain (frequencies in rad/s, tau in s).
    #[command(name = "ion-chain", rename_all = "snake_case")]
    IonChain {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        omega_z: f64,
        #[arg(long)]
        omega_x: f64,
        #[arg(long)]
        tau: f64,
        /// Relative error on tau.
        #[arg(long)]
        timing_error: Option<f64>,
        /// Relative Hamiltonian noise strength; needs --seed.
        #[arg(long, requires = "seed")]
        hamiltonian_noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact output distribution, written in the binary table format.
    Simulate {
        #[arg(long, value_enum, default_value = "boson")]
        kind: TableKind,
        /// Unitary JSON; not needed for the uniform table.
        #[arg(long)]
        unitary: Option<PathBuf>,
        /// Comma-separated input occupations, e.g. 1,1,0,0.
        #[arg(long, conflicts_with = "n")]
        input: Option<String>,
        /// Photon number, one photon in each of the first n modes.
        #[arg(long)]
        n: Option<usize>,
        /// Mode count for the uniform table.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw samples from a table (or uniformly with --m and --n) into CSV.
    #[command(rename_all = "snake_case")]
    Sample {
        #[arg(long, required_unless_present = "m")]
        table: Option<PathBuf>,
        #[arg(long, requires = "n", conflicts_with = "table")]
        m: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        n_m: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grow a bubble partition from a sample and optionally coarse-grain more samples.
    #[command(rename_all = "snake_case")]
    Coarsegrain {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        target_n_b: usize,
        #[arg(long, default_value_t = 10)]
        min_count: u64,
        #[arg(long)]
        out: PathBuf,
        /// Samples whose bin counts are printed as JSON.
        #[arg(long, num_args = 1..)]
        apply: Vec<PathBuf>,
    },
    /// Two-sample chi-squared test on one pair of samples.
    #[command(rename_all = "snake_case")]
    Certify {
        #[arg(long)]
        sample1: PathBuf,
        #[arg(long)]
        sample2: PathBuf,
        /// Existing partition; otherwise one is grown from sample1.
        #[arg(long, conflicts_with = "target_n_b")]
        partition: Option<PathBuf>,
        #[arg(long, required_unless_present = "partition")]
        target_n_b: Option<usize>,
        #[arg(long, default_value_t = 10)]
        min_count: u64,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
    /// Full campaign. Takes `--config FILE` and `--<field> VALUE` overrides
    /// for any config field (dotted names reach nested fields, e.g. --system.seed).
    Campaign {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "ARGS")]
        args: Vec<String>,
    },
    /// Plot-ready CSV tables from a campaign output directory.
    EmitPlots {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

const CONFIG_FIELDS: &[&str] = &[
    "system",
    "input",
    "n_m",
    "n_s",
    "targets",
    "target_n_b",
    "alpha",
    "master_seed",
    "output_dir",
    "min_count",
    "schedule",
    "fixed_partition",
    "renoise_per_run",
    "noise_law",
];

fn parse_occupations(s: &str) -> Result<FockState> {
    let occ = s
        .split(',')
        .map(|t| t.trim().parse::<u8>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("bad input state '{s}': {e}")))?;
    Ok(FockState::new(occ))
}

/// Builds the campaign config from defaults, an optional file and overrides.
fn campaign_config(args: &[String]) -> Result<CampaignConfig> {
    let (path, pairs) = overrides::parse_pairs(args)?;
    let mut value = match path {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => serde_json::to_value(CampaignConfig::haar(40, 5, 1))?,
    };
    for (key, raw) in &pairs {
        overrides::apply(&mut value, key, raw, CONFIG_FIELDS)?;
    }
    let cfg: CampaignConfig = serde_json::from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(report: &CampaignReport) {
    println!("(M, N) = ({}, {}), D = {}", report.m, report.n, report.dim);
    println!(
        "{:<28} {:>6} {:>8} {:>6} {:>9} {:>7} {:>7}",
        "role", "N_B", "mean N_B", "runs", "pass %", "p mean", "p std"
    );
    for r in &report.summary {
        println!(
            "{:<28} {:>6} {:>8.1} {:>6} {:>9.1} {:>7.3} {:>7.3}",
            r.role, r.target_n_b, r.mean_n_b, r.runs, r.pass_rate, r.p_mean, r.p_std
        );
    }
    for f in &report.fidelity {
        println!("fidelity {:<19} {:.4} +- {:.4}", f.role, f.mean, f.std);
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenUnitary { m, seed, out } => {
            haar_unitary(m, seed)?.save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::IonChain {
            m,
            omega_z,
            omega_x,
            tau,
            timing_error,
            hamiltonian_noise,
            seed,
            out,
        } => {
            let chain = IonChain::new(m, YB171_MASS, omega_z, omega_x)?;
            let mut u = match timing_error {
                Some(e) => perturb_timing(&chain, tau, e)?,
                None => chain.evolve(tau)?,
            };
            if let (Some(eta), Some(seed)) = (hamiltonian_noise, seed) {
                u = perturb_hamiltonian(&u, eta, seed, NoiseLaw::Gaussian)?;
            }
            u.save(&out)?;
            println!("wrote {} (residual {:.2e})", out.display(), u.unitarity_residual());
        }
        Command::Simulate {
            kind,
            unitary,
            input,
            n,
            m,
            out,
        } => {
            let u = unitary.map(Interferometer::load).transpose()?;
            let modes = m.or(u.as_ref().map(Interferometer::modes));
            let input = match (input, n, modes) {
                (Some(s), _, _) => parse_occupations(&s)?,
                (None, Some(n), Some(m)) => FockState::single_occupancy(m, n)?,
                _ => return Err(CliError::Usage("give --input, or --n with a mode count".into())),
            };
            let table: OutcomeDistribution = match (kind, &u) {
                (TableKind::Boson, Some(u)) => boson_distribution(u, &input)?,
                (TableKind::Distinguishable, Some(u)) => distinguishable_distribution(u, &input)?,
                (TableKind::Uniform, _) => uniform_distribution(input.modes(), input.particles())?,
                _ => return Err(CliError::Usage("--unitary is required for this kind".into())),
            };
            table.save(&out)?;
            println!("wrote {} ({} outcomes)", out.display(), table.probs().len());
        }
        Command::Sample {
            table,
            m,
            n,
            n_m,
            seed,
            stream,
            out,
        } => {
            let seed = Seed::new(seed, stream);
            let sample = match (table, m, n) {
                (Some(t), _, _) => draw_from_table(&OutcomeDistribution::load(t)?, n_m, seed)?,
                (None, Some(m), Some(n)) => draw_uniform(m, n, n_m, seed)?,
                _ => return Err(CliError::Usage("give --table, or --m and --n".into())),
            };
            sample.save(&out)?;
            println!("wrote {} ({} distinct outcomes)", out.display(), sample.distinct());
        }
        Command::Coarsegrain {
            sample,
            target_n_b,
            min_count,
            out,
            apply,
        } => {
            let s = SampleSet::load(&sample)?;
            let params = BubbleParams::new(target_n_b).with_min_count(min_count);
            let partition = build_bubbles(&s, &params)?;
            partition.save(&out)?;
            eprintln!("wrote {} ({} bins)", out.display(), partition.len());
            let mut counts = serde_json::Map::new();
            for path in apply.iter().chain(std::iter::once(&sample)) {
                let c = partition.coarse_grain_sample(&SampleSet::load(path)?)?;
                counts.insert(path.display().to_string(), serde_json::to_value(c.masses())?);
            }
            println!("{}", serde_json::to_string_pretty(&counts)?);
        }
        Command::Certify {
            sample1,
            sample2,
            partition,
            target_n_b,
            min_count,
            alpha,
        } => {
            let s1 = SampleSet::load(&sample1)?;
            let s2 = SampleSet::load(&sample2)?;
            let partition = match (partition, target_n_b) {
                (Some(p), _) => BubblePartition::load(p)?,
                (None, Some(t)) => build_bubbles(&s1, &BubbleParams::new(t).with_min_count(min_count))?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let report = certify(
                &partition.coarse_grain_sample(&s1)?,
                &partition.coarse_grain_sample(&s2)?,
                alpha,
                s1.source().to_string(),
                s2.source().to_string(),
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Campaign { args } => {
            let cfg = campaign_config(&args)?;
            let report = run_campaign(&cfg)?;
            print_summary(&report);
            if let Some(dir) = &cfg.output_dir {
                println!("artifacts in {}", dir.display());
            }
        }
        Command::EmitPlots { dir, out } => {
            let files = emit_figure_data(&dir, &out)?;
            for f in files.coarse.iter().chain(&files.chi2).chain(&files.p_values) {
                println!("{}", f.display());
            }
            println!("{}", files.summary.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
