//! `apohf`: run single trials or sweeps against simulated raters, or serve
//! live sessions over HTTP.

use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use apohf_core::domain::{load_contextual, load_domain};
use apohf_core::env::SyntheticKind;
use apohf_core::harness::{EnvironmentSpec, PolicyKind, PolicySpec, SuiteOutcome, SuiteSpec};
use apohf_core::oracle::{ContextualUtility, UtilityTable};
use apohf_core::uncertainty::UncertaintyMode;
use apohf_service::{EmbedConfig, ServiceConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "apohf",
    version,
    about = "Preference-driven optimization with a neural dueling bandit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One trial of one policy.
    Run(RunArgs),
    /// A sweep over policies, exploration weights and noise levels.
    Suite(SuiteArgs),
    /// HTTP service for live sessions.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Synthetic {
    Linear,
    Quadratic,
    Contextual,
}

#[derive(Args)]
struct EnvArgs {
    /// Embedding file, one {"id","text","embedding"} object per line.
    #[arg(long, conflicts_with = "contextual", requires = "scores")]
    domain: Option<PathBuf>,
    /// Contextual file, one {"context_id","context_text","candidates"} object per line.
    #[arg(long, requires = "scores")]
    contextual: Option<PathBuf>,
    /// Utility table matching --domain or --contextual.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Generated environment, used when no files are given.
    #[arg(long, value_enum, default_value = "linear")]
    synthetic: Synthetic,
    #[arg(long, default_value_t = 200)]
    arms: usize,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    contexts: usize,
    #[arg(long, default_value_t = 20)]
    candidates: usize,
    #[arg(long, default_value_t = 5)]
    context_dim: usize,
    #[arg(long, default_value_t = 5)]
    response_dim: usize,
}

impl EnvArgs {
    fn environment(&self) -> Result<EnvironmentSpec> {
        let open = |p: &Path| {
            File::open(p)
                .map(BufReader::new)
                .with_context(|| format!("opening {}", p.display()))
        };
        let scores = || {
            self.scores
                .as_deref()
                .context("--scores is required with a domain file")
        };
        if let Some(path) = &self.domain {
            let domain =
                load_domain(open(path)?).with_context(|| format!("loading {}", path.display()))?;
            let utility =
                UtilityTable::from_jsonl(open(scores()?)?, &domain).context("loading --scores")?;
            return Ok(EnvironmentSpec::Fixed { domain, utility });
        }
        if let Some(path) = &self.contextual {
            let domain = load_contextual(open(path)?)
                .with_context(|| format!("loading {}", path.display()))?;
            let utility = ContextualUtility::from_jsonl(open(scores()?)?, &domain)
                .context("loading --scores")?;
            return Ok(EnvironmentSpec::Contextual { domain, utility });
        }
        if self.scores.is_some() {
            bail!("--scores needs --domain or --contextual");
        }
        Ok(match self.synthetic {
            Synthetic::Linear => EnvironmentSpec::Synthetic {
                kind: SyntheticKind::Linear,
                arms: self.arms,
                dim: self.dim,
            },
            Synthetic::Quadratic => EnvironmentSpec::Synthetic {
                kind: SyntheticKind::Quadratic,
                arms: self.arms,
                dim: self.dim,
            },
            Synthetic::Contextual => EnvironmentSpec::SyntheticContextual {
                contexts: self.contexts,
                candidates: self.candidates,
                context_dim: self.context_dim,
                response_dim: self.response_dim,
            },
        })
    }
}

#[derive(Args)]
struct CommonArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Regularization weight, shared by the network loss and the confidence matrix.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 150)]
    horizon: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confidence matrix: full or diag. Defaults to full for small networks.
    #[arg(long)]
    uncertainty: Option<UncertaintyMode>,
    #[arg(long, value_enum, default_value = "on")]
    exclude_first: Toggle,
    /// Training epochs per network refit.
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    /// Bootstrap-resample the history for each ensemble member (doublets only).
    #[arg(long)]
    bootstrap: bool,
    /// Scale embeddings to unit length.
    #[arg(long)]
    unit_norm: bool,
    /// Keep raw utilities instead of standardizing them.
    #[arg(long)]
    raw_scores: bool,
    /// Directory for results.json and results.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn policy(&self, kind: PolicyKind, nu: f64) -> PolicySpec {
        PolicySpec {
            kind,
            nu,
            lambda: self.lambda,
            uncertainty: self.uncertainty,
            exclude_first: matches!(self.exclude_first, Toggle::On),
            bootstrap: self.bootstrap,
        }
    }

    fn suite(&self, trials: usize) -> Result<SuiteSpec> {
        let mut spec = SuiteSpec::new(self.env.environment()?);
        spec.horizon = self.horizon;
        spec.trials = trials;
        spec.seed = self.seed;
        spec.unit_norm = self.unit_norm;
        spec.normalize = !self.raw_scores;
        spec.train.epochs = self.epochs;
        spec.train.l2_lambda = self.lambda;
        spec.threads = self.threads;
        Ok(spec)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "apohf")]
    policy: PolicyKind,
    /// Exploration weight.
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Scale of the rater's preference noise.
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated policies.
    #[arg(long, value_delimiter = ',', default_value = "apohf,random")]
    policy: Vec<PolicyKind>,
    /// Comma-separated exploration weights.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    nu: Vec<f64>,
    /// Comma-separated noise scales.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    noise_scale: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "APOHF_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Where session snapshots live.
    #[arg(long, env = "APOHF_DATA_DIR", default_value = "apohf-data")]
    data_dir: PathBuf,
    /// Directory that `domain_ref` requests may read from.
    #[arg(long, env = "APOHF_DOMAINS_DIR")]
    domains_dir: Option<PathBuf>,
    /// Embedding endpoint for sessions created from plain texts.
    #[arg(long, env = "APOHF_EMBED_URL")]
    embed_url: Option<String>,
    #[arg(long, env = "APOHF_EMBED_RETRIES", default_value_t = 3)]
    embed_retries: u32,
    #[arg(long, env = "APOHF_EMBED_BACKOFF_MS", default_value_t = 200)]
    embed_backoff_ms: u64,
}

fn report(outcome: &SuiteOutcome, out: Option<&Path>) -> Result<()> {
    for cell in &outcome.results.cells {
        match cell.final_summary() {
            Some(last) => println!(
                "{:<28} t={:<4} score {:>8.3} ± {:.3}  ({}/{} trials)",
                cell.label,
                last.t,
                last.true_score,
                last.se,
                cell.completed_trials,
                cell.completed_trials + cell.failures.len()
            ),
            None => println!("{:<28} no completed trials", cell.label),
        }
        for f in &cell.failures {
            eprintln!("{}: trial {} failed: {}", cell.label, f.trial, f.error);
        }
    }
    if let Some(dir) = out {
        let (json, csv) = outcome.write_to(dir)?;
        println!("wrote {} and {}", json.display(), csv.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let policy = args.common.policy(args.policy, args.nu);
            let spec = args
                .common
                .suite(1)?
                .grid(&[policy], &[], &[args.noise_scale]);
            let outcome = spec.run()?;
            if let Some(trial) = outcome.trials[0][0].as_ref() {
                let last = trial.final_iteration();
                println!(
                    "best {} after {} iterations: true score {:.3} (domain max {:.3})",
                    last.best_id, last.t, last.true_score, trial.domain_max
                );
            }
            report(&outcome, args.common.out.as_deref())
        }
        Command::Suite(args) => {
            let base: Vec<PolicySpec> = args
                .policy
                .iter()
                .map(|&k| args.common.policy(k, args.nu[0]))
                .collect();
            let spec = args
                .common
                .suite(args.trials)?
                .grid(&base, &args.nu, &args.noise_scale);
            report(&spec.run()?, args.common.out.as_deref())
        }
        Command::Serve(args) => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| "info".into()),
                )
                .init();
            let embedding = args.embed_url.map(|url| EmbedConfig {
                retries: args.embed_retries,
                backoff: Duration::from_millis(args.embed_backoff_ms),
                ..EmbedConfig::new(url)
            });
            let config = ServiceConfig {
                bind: args.bind,
                data_dir: args.data_dir,
                domains_dir: args.domains_dir,
                embedding,
            };
            tokio::runtime::Runtime::new()?.block_on(apohf_service::serve(config))?;
            Ok(())
        }
    }
}
