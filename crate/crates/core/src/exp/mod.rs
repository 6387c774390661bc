//! Experiment recipes, TOML scenarios and metric output.

pub mod config;
pub mod output;
pub mod recipes;

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::adversary::LongRangeConfig;
use crate::netsim::{Sim, SimError};
use crate::rules::Violation;

pub use config::{apply_overrides, check_monitors, ScenarioConfig};
pub use output::{git_describe, scenario_digest, write_outputs, Manifest, Table};
pub use recipes::*;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("unknown experiment {name}; available: {}", Experiment::NAMES.join(", "))]
    UnknownExperiment { name: String },
    #[error("bad override: {0}")]
    BadOverride(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExpError {
    /// Configuration problems exit with status 2.
    pub fn is_usage(&self) -> bool {
        matches!(self, ExpError::UnknownExperiment { .. } | ExpError::BadOverride(_) | ExpError::Parse(_) | ExpError::Invalid(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Fairness,
    VariableDiff,
    SelfishTable,
    PrivateHeatmap,
    Spam,
    LongRange,
}

impl Experiment {
    pub const NAMES: [&'static str; 6] = ["fairness", "variable-diff", "selfish-table", "private-heatmap", "spam", "long-range"];
    pub const ALL: [Experiment; 6] =
        [Experiment::Fairness, Experiment::VariableDiff, Experiment::SelfishTable, Experiment::PrivateHeatmap, Experiment::Spam, Experiment::LongRange];

    pub fn name(self) -> &'static str {
        Self::NAMES[Self::ALL.iter().position(|&e| e == self).expect("listed")]
    }

    pub fn default_seeds(self) -> u64 {
        match self {
            Experiment::Fairness => 3,
            Experiment::VariableDiff => 1,
            Experiment::Spam => 5,
            Experiment::SelfishTable | Experiment::PrivateHeatmap | Experiment::LongRange => 10,
        }
    }
}

impl FromStr for Experiment {
    type Err = ExpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let i = Self::NAMES.iter().position(|&n| n == s).ok_or_else(|| ExpError::UnknownExperiment { name: s.to_string() })?;
        Ok(Self::ALL[i])
    }
}

/// Result of one experiment or scenario run, ready to be written out.
#[derive(Clone, Debug)]
pub struct Report {
    pub name: String,
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    pub table: Table,
    pub summary: Vec<String>,
    pub violations: Vec<Violation>,
    pub elapsed_secs: f64,
}

impl Report {
    pub fn digest(&self) -> crate::ledger::Digest {
        scenario_digest(&self.name, &self.params, &self.seeds)
    }

    pub fn csv(&self) -> String {
        self.table.to_csv(&self.digest())
    }

    pub fn write(&self, dir: &Path) -> Result<std::path::PathBuf, ExpError> {
        let manifest = Manifest {
            experiment: self.name.clone(),
            params: self.params.clone(),
            seeds: self.seeds.clone(),
            scenario_digest: self.digest().to_hex(),
            git_describe: git_describe(),
            runtime_secs: self.elapsed_secs,
            csv: format!("{}.csv", self.name),
            violations: self.violations.len(),
        };
        Ok(write_outputs(dir, &self.name, &self.table, &manifest, &self.violations)?)
    }
}

fn params_json<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("configs serialize")
}

/// Validates the recipe and its overrides without running anything.
pub fn prepare_experiment(name: &str, overrides: &[String]) -> Result<(Experiment, serde_json::Value), ExpError> {
    let exp: Experiment = name.parse()?;
    let params = match exp {
        Experiment::Fairness => params_json(&apply_overrides(&FairnessConfig::default(), overrides)?),
        Experiment::VariableDiff => params_json(&apply_overrides(&VariableDiffConfig::default(), overrides)?),
        Experiment::SelfishTable => params_json(&apply_overrides(&SelfishTableConfig::default(), overrides)?),
        Experiment::PrivateHeatmap => params_json(&apply_overrides(&PrivateHeatmapConfig::default(), overrides)?),
        Experiment::Spam => params_json(&apply_overrides(&SpamSweepConfig::default(), overrides)?),
        Experiment::LongRange => params_json(&apply_overrides(&LongRangeConfig::default(), overrides)?),
    };
    Ok((exp, params))
}

pub fn run_experiment(name: &str, overrides: &[String], seeds: Option<u64>) -> Result<Report, ExpError> {
    let (exp, params) = prepare_experiment(name, overrides)?;
    let seeds: Vec<u64> = (0..seeds.unwrap_or_else(|| exp.default_seeds())).collect();
    let start = Instant::now();
    let invalid = |e: serde_json::Error| ExpError::Invalid(e.to_string());
    let (table, summary) = match exp {
        Experiment::Fairness => {
            let cfg: FairnessConfig = serde_json::from_value(params.clone()).map_err(invalid)?;
            let (runs, t) = fairness(&cfg, &seeds);
            let bad = runs.iter().filter(|r| r.violation.is_some()).count();
            (t, vec![format!("fairness violations: {bad}/{} seeds", runs.len())])
        }
        Experiment::VariableDiff => {
            let cfg: VariableDiffConfig = serde_json::from_value(params.clone()).map_err(invalid)?;
            let (runs, t) = variable_diff(&cfg, &seeds);
            let s = runs
                .iter()
                .map(|r| {
                    format!(
                        "seed {}: bitcoin epochs {} (liveness violations {}), fruitchain epochs {} (liveness violations {}), minotaur deviation {:.3}",
                        r.seed,
                        r.bitcoin.epochs_completed,
                        r.bitcoin_liveness_violations,
                        r.fruitchain.epochs_completed,
                        r.fruitchain_liveness_violations,
                        r.minotaur_deviation
                    )
                })
                .collect();
            (t, s)
        }
        Experiment::SelfishTable => {
            let cfg: SelfishTableConfig = serde_json::from_value(params.clone()).map_err(invalid)?;
            let (cells, t) = selfish_table(&cfg, &seeds);
            (t, vec![format!("{} cells", cells.len())])
        }
        Experiment::PrivateHeatmap => {
            let cfg: PrivateHeatmapConfig = serde_json::from_value(params.clone()).map_err(invalid)?;
            let (cells, t) = private_heatmap(&cfg, &seeds);
            let worst = cells.iter().filter(|c| c.beta_s + c.beta_w <= 0.9 + 1e-9).map(|c| c.mean()).fold(0.0, f64::max);
            (t, vec![format!("{} cells; largest mean length with beta_s + beta_w <= 0.9: {worst:.1}", cells.len())])
        }
        Experiment::Spam => {
            let cfg: SpamSweepConfig = serde_json::from_value(params.clone()).map_err(invalid)?;
            let (points, t) = spam_sweep(&cfg, &seeds);
            (t, points.iter().map(|p| format!("filtered {} latency {}: {:.4}", p.filtered, p.extra_latency, p.normalized_spam)).collect())
        }
        Experiment::LongRange => {
            let cfg: LongRangeConfig = serde_json::from_value(params.clone()).map_err(invalid)?;
            let (runs, t) = long_range(&cfg, &seeds);
            let adopted = runs.iter().filter(|r| r.adopted_mc || r.adopted_bg).count();
            let overtaken = runs.iter().filter(|r| r.overtake_slot.is_some()).count();
            (t, vec![format!("adoptions: {adopted}; longest-chain overtakes: {overtaken}/{}", runs.len())])
        }
    };
    Ok(Report { name: exp.name().to_string(), params, seeds, table, summary, violations: Vec::new(), elapsed_secs: start.elapsed().as_secs_f64() })
}

/// Runs every seed of a TOML scenario and gathers per-slot traces and monitor
/// violations.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Report, ExpError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut table = Table::new(&[
        ("seed", "id"),
        ("slot", "slot"),
        ("honest_queries", "queries"),
        ("honest_difficulty", "difficulty"),
        ("min_height", "blocks"),
        ("max_height", "blocks"),
    ]);
    let mut violations = Vec::new();
    let mut summary = Vec::new();
    for &seed in &cfg.seeds {
        let sim = Sim::new(cfg.scenario(seed))?.run();
        let v = check_monitors(&sim, &cfg.monitors);
        summary.push(format!("seed {seed}: {} violations", v.len()));
        violations.extend(v);
        for (r, (m, tips)) in sim.trace.mining.iter().zip(&sim.trace.log.tips).enumerate() {
            let heights = tips.iter().map(|&t| sim.global.height(t));
            let (lo, hi) = heights.fold((u32::MAX, 0), |(lo, hi), h| (lo.min(h), hi.max(h)));
            table.push(vec![
                seed.to_string(),
                (r + 1).to_string(),
                m.honest_queries.to_string(),
                output::num(m.honest_difficulty),
                lo.to_string(),
                hi.to_string(),
            ]);
        }
    }
    Ok(Report {
        name: cfg.name.clone(),
        params: params_json(cfg),
        seeds: cfg.seeds.clone(),
        table,
        summary,
        violations,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
