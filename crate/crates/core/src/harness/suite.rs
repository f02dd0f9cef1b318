use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{run_contextual_trial, run_trial, PolicyKind, PolicySpec, RunConfig, TrialResult};
use crate::domain::{ArmDomain, ContextualDomain};
use crate::env::{synthetic, synthetic_contextual, SyntheticKind};
use crate::error::{Error, Result};
use crate::math::{derive_seed, streams};
use crate::net::TrainConfig;
use crate::oracle::{BtlOracle, ContextualUtility, OracleConfig, UtilityTable};

/// Where the arms and utilities come from. Synthetic environments are redrawn
/// for every trial from the trial seed, so all cells of trial `i` face the
/// same environment; file-backed ones are shared by all trials.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvironmentSpec {
    Synthetic {
        kind: SyntheticKind,
        arms: usize,
        dim: usize,
    },
    SyntheticContextual {
        contexts: usize,
        candidates: usize,
        context_dim: usize,
        response_dim: usize,
    },
    Fixed {
        domain: ArmDomain,
        utility: UtilityTable,
    },
    Contextual {
        domain: ContextualDomain,
        utility: ContextualUtility,
    },
}

enum Instance {
    Fixed(ArmDomain, UtilityTable),
    Contextual(ContextualDomain, ContextualUtility),
}

impl EnvironmentSpec {
    /// Plain-data description written into result files.
    pub fn describe(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            Self::Synthetic { kind, arms, dim } => {
                json!({"type": "synthetic", "utility": kind, "arms": arms, "dim": dim})
            }
            Self::SyntheticContextual {
                contexts,
                candidates,
                context_dim,
                response_dim,
            } => json!({
                "type": "synthetic-contextual",
                "contexts": contexts,
                "candidates": candidates,
                "context_dim": context_dim,
                "response_dim": response_dim,
            }),
            Self::Fixed { domain, .. } => json!({
                "type": "file",
                "arms": domain.len(),
                "dim": domain.dim(),
                "domain_sha256": domain.content_hash(),
            }),
            Self::Contextual { domain, .. } => json!({
                "type": "contextual-file",
                "contexts": domain.len(),
                "dim": domain.dim(),
                "domain_sha256": domain.content_hash(),
            }),
        }
    }

    fn instantiate(&self, seed: u64) -> Result<Instance> {
        Ok(match self {
            Self::Synthetic { kind, arms, dim } => {
                let (d, u) = synthetic(*kind, *arms, *dim, seed)?;
                Instance::Fixed(d, u)
            }
            Self::SyntheticContextual {
                contexts,
                candidates,
                context_dim,
                response_dim,
            } => {
                let (d, u) = synthetic_contextual(
                    *contexts,
                    *candidates,
                    *context_dim,
                    *response_dim,
                    seed,
                )?;
                Instance::Contextual(d, u)
            }
            Self::Fixed { domain, utility } => Instance::Fixed(domain.clone(), utility.clone()),
            Self::Contextual { domain, utility } => {
                Instance::Contextual(domain.clone(), utility.clone())
            }
        })
    }
}

/// One curve of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub label: String,
    pub policy: PolicySpec,
    pub noise_scale: f64,
}

impl CellSpec {
    pub fn new(policy: PolicySpec, noise_scale: f64) -> Self {
        let label = match policy.kind {
            PolicyKind::Apohf | PolicyKind::Linear => {
                format!("{} nu={} s={}", policy.kind, policy.nu, noise_scale)
            }
            _ => format!("{} s={}", policy.kind, noise_scale),
        };
        Self {
            label,
            policy,
            noise_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec {
    pub horizon: u64,
    pub trials: usize,
    pub seed: u64,
    pub unit_norm: bool,
    pub normalize: bool,
    pub train: TrainConfig,
    pub environment: EnvironmentSpec,
    pub cells: Vec<CellSpec>,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
}

impl SuiteSpec {
    pub fn new(environment: EnvironmentSpec) -> Self {
        let run = RunConfig::default();
        Self {
            horizon: run.horizon,
            trials: run.trials,
            seed: run.seed,
            unit_norm: false,
            normalize: true,
            train: run.train,
            environment,
            cells: Vec::new(),
            threads: None,
        }
    }

    /// Cartesian sweep. ν only multiplies the policies that use it.
    pub fn grid(mut self, base: &[PolicySpec], nus: &[f64], noise_scales: &[f64]) -> Self {
        for &s in noise_scales {
            for spec in base {
                if matches!(spec.kind, PolicyKind::Apohf | PolicyKind::Linear) && !nus.is_empty() {
                    for &nu in nus {
                        self.cells.push(CellSpec::new(spec.clone().with_nu(nu), s));
                    }
                } else {
                    self.cells.push(CellSpec::new(spec.clone(), s));
                }
            }
        }
        self
    }

    pub fn with_cell(mut self, cell: CellSpec) -> Self {
        self.cells.push(cell);
        self
    }

    /// Seed shared by every cell for trial `i`, so cells face the same
    /// environments and oracle draws.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, &[streams::TRIAL, trial as u64])
    }

    pub fn run_config(&self, cell: &CellSpec, trial: usize) -> RunConfig {
        let seed = self.trial_seed(trial);
        RunConfig {
            horizon: self.horizon,
            seed,
            trials: self.trials,
            policy: cell.policy.clone(),
            oracle: OracleConfig {
                normalize: self.normalize,
                noise_scale: cell.noise_scale,
                seed,
            },
            train: self.train.clone(),
            unit_norm: self.unit_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("the sweep has no cells".into()));
        }
        let mut labels = std::collections::HashSet::new();
        for cell in &self.cells {
            if !labels.insert(cell.label.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate cell label {:?}",
                    cell.label
                )));
            }
            let mut probe = self.run_config(cell, 0);
            probe.trials = self.trials;
            probe.validate()?;
        }
        Ok(())
    }

    /// One trial of one cell.
    pub fn run_one(&self, cell: &CellSpec, trial: usize) -> Result<TrialResult> {
        let config = self.run_config(cell, trial);
        match self.environment.instantiate(config.seed)? {
            Instance::Fixed(domain, utility) => {
                let oracle = BtlOracle::new(utility, config.oracle.clone())?;
                let mut policy = cell
                    .policy
                    .build(domain.dim(), &config.train, config.seed)?;
                run_trial(policy.as_mut(), &domain, &oracle, &config)
            }
            Instance::Contextual(domain, utility) => {
                let oracle = BtlOracle::contextual(utility, config.oracle.clone())?;
                let mut policy = cell
                    .policy
                    .build(domain.dim(), &config.train, config.seed)?;
                run_contextual_trial(policy.as_mut(), &domain, &oracle, &config)
            }
        }
    }

    /// Runs every (cell, trial) pair, concurrently across trials, and
    /// aggregates. A failing trial is recorded against its cell; the rest of
    /// the sweep carries on.
    pub fn run(&self) -> Result<SuiteOutcome> {
        self.validate()?;
        let jobs: Vec<(usize, usize)> = (0..self.cells.len())
            .flat_map(|c| (0..self.trials).map(move |t| (c, t)))
            .collect();
        let slots: Vec<Mutex<Option<Result<TrialResult>>>> =
            jobs.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .clamp(1, jobs.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let j = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(c, t)) = jobs.get(j) else { break };
                    let outcome = self.run_one(&self.cells[c], t);
                    *slots[j].lock().expect("result slot") = Some(outcome);
                });
            }
        });
        let mut outcomes = slots
            .into_iter()
            .map(|m| m.into_inner().expect("result slot").expect("every job ran"));
        let mut trials = Vec::with_capacity(self.cells.len());
        let mut cells = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            let mut ok = Vec::with_capacity(self.trials);
            let mut failures = Vec::new();
            for trial in 0..self.trials {
                match outcomes.next().expect("job per trial") {
                    Ok(r) => ok.push(Some(r)),
                    Err(e) => {
                        failures.push(CellFailure {
                            trial,
                            error: e.to_string(),
                        });
                        ok.push(None);
                    }
                }
            }
            cells.push(CellResult::aggregate(cell, &ok, failures));
            trials.push(ok);
        }
        Ok(SuiteOutcome {
            results: ResultsFile {
                config: SuiteConfigRecord {
                    horizon: self.horizon,
                    trials: self.trials,
                    seed: self.seed,
                    unit_norm: self.unit_norm,
                    normalize: self.normalize,
                    train: self.train.clone(),
                    environment: self.environment.describe(),
                },
                cells,
            },
            trials,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfigRecord {
    pub horizon: u64,
    pub trials: usize,
    pub seed: u64,
    pub unit_norm: bool,
    pub normalize: bool,
    pub train: TrainConfig,
    pub environment: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub nu: f64,
    pub lambda: f64,
    pub noise_scale: f64,
    pub exclude_first: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<crate::uncertainty::UncertaintyMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub t: u64,
    /// Most frequently reported arm across trials (ties to the smallest id).
    pub best_id: String,
    /// Mean across trials.
    pub true_score: f64,
    /// Standard error of that mean.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub label: String,
    pub policy: PolicyKind,
    pub params: CellParams,
    pub completed_trials: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<CellFailure>,
    pub iterations: Vec<IterationSummary>,
}

/// Sample mean and standard error of the mean (0 for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl CellResult {
    fn aggregate(
        cell: &CellSpec,
        trials: &[Option<TrialResult>],
        failures: Vec<CellFailure>,
    ) -> Self {
        let done: Vec<&TrialResult> = trials.iter().flatten().collect();
        let horizon = done.first().map_or(0, |r| r.iterations.len());
        let iterations = (0..horizon)
            .map(|i| {
                let scores: Vec<f64> = done.iter().map(|r| r.iterations[i].true_score).collect();
                let (mean, se) = mean_and_se(&scores);
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for r in &done {
                    *counts.entry(r.iterations[i].best_id.as_str()).or_default() += 1;
                }
                let top = counts.values().copied().max().unwrap_or(0);
                let best_id = counts
                    .iter()
                    .find(|(_, &c)| c == top)
                    .map(|(id, _)| (*id).to_owned())
                    .unwrap_or_default();
                IterationSummary {
                    t: done[0].iterations[i].t,
                    best_id,
                    true_score: mean,
                    se,
                }
            })
            .collect();
        Self {
            label: cell.label.clone(),
            policy: cell.policy.kind,
            params: CellParams {
                nu: cell.policy.nu,
                lambda: cell.policy.lambda,
                noise_scale: cell.noise_scale,
                exclude_first: cell.policy.exclude_first,
                uncertainty: cell.policy.uncertainty,
            },
            completed_trials: done.len(),
            failures,
            iterations,
        }
    }

    pub fn final_summary(&self) -> Option<&IterationSummary> {
        self.iterations.last()
    }
}

/// The sweep's output file: configuration plus one aggregated curve per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub config: SuiteConfigRecord,
    pub cells: Vec<CellResult>,
}

impl ResultsFile {
    pub fn cell(&self, label: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }
}

pub struct SuiteOutcome {
    pub results: ResultsFile,
    /// Per cell, per trial; `None` where the trial failed.
    pub trials: Vec<Vec<Option<TrialResult>>>,
}

impl SuiteOutcome {
    pub fn cell_trials(&self, label: &str) -> Option<&[Option<TrialResult>]> {
        let i = self.results.cells.iter().position(|c| c.label == label)?;
        Some(&self.trials[i])
    }

    /// Per-trial rows `(cell, trial, t, best_id, true_score)`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cell", "trial", "t", "best_id", "true_score"])
            .map_err(csv_error)?;
        for (cell, trials) in self.results.cells.iter().zip(&self.trials) {
            for (i, trial) in trials.iter().enumerate() {
                for it in trial.iter().flat_map(|r| &r.iterations) {
                    w.write_record([
                        cell.label.as_str(),
                        &i.to_string(),
                        &it.t.to_string(),
                        &it.best_id,
                        &it.true_score.to_string(),
                    ])
                    .map_err(csv_error)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Writes `results.json` and `results.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join("results.json");
        let csv = dir.join("results.csv");
        std::fs::write(&json, self.results.to_json())?;
        std::fs::write(&csv, self.to_csv()?)?;
        Ok((json, csv))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
