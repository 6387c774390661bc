use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ExpError;
use crate::epoch::Setup;
use crate::ledger::PartyId;
use crate::netsim::{DelayPolicy, Scenario, Sim, Topology};
use crate::node::NodeConfig;
use crate::params::{ParticipationSchedule, ProtocolParams};
use crate::rules::{monitor_cp, monitor_ecq, monitor_freshness, SelectionRule, Violation};
use crate::stake::StakeDistribution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub epoch_len: u64,
    pub kappa: u64,
    #[serde(default = "one")]
    pub delta_net: u64,
    pub f_w: f64,
    pub f_s: f64,
    pub omega: f64,
    pub epochs: u64,
    pub k_cp: Option<u64>,
    pub s_bg: Option<u64>,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
}

fn one() -> u64 {
    1
}

impl ProtocolSection {
    pub fn params(&self) -> ProtocolParams {
        let mut p = ProtocolParams::with_defaults(self.epoch_len, self.kappa, self.delta_net, self.f_w, self.f_s, self.omega, self.epochs);
        if let Some(k) = self.k_cp {
            p.k_cp = k;
        }
        if let Some(s) = self.s_bg {
            p.s_bg = s;
        }
        if let Some(l) = self.lambda {
            p.lambda = l;
        }
        if let Some(e) = self.epsilon {
            p.epsilon = e;
            p.sigma = 4.0 * e;
        }
        p
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSpec {
    #[default]
    Mc,
    Bg,
    Longest,
}

impl RuleSpec {
    pub fn rule(self, p: &ProtocolParams) -> SelectionRule {
        match self {
            RuleSpec::Mc => SelectionRule::Mc { k: p.k_cp as u32 },
            RuleSpec::Bg => SelectionRule::Bg { k: p.k_cp as u32, s: p.s_bg },
            RuleSpec::Longest => SelectionRule::Longest,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySpec {
    #[default]
    Mesh,
    Line,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelaySpec {
    #[default]
    Max,
    Uniform,
    Fixed(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub nodes: u32,
    pub rule: RuleSpec,
    pub topology: TopologySpec,
    pub delay: DelaySpec,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection { nodes: 4, rule: RuleSpec::Mc, topology: TopologySpec::Mesh, delay: DelaySpec::Max }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSpec {
    #[default]
    Constant,
    Halving,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningSection {
    pub queries_per_node: u64,
    pub schedule: ScheduleSpec,
    /// The first this many nodes form the tagged subset.
    pub subset_nodes: u32,
    /// Multiple of the true epoch-1 query count used as the estimate.
    pub estimate_factor: f64,
}

impl Default for MiningSection {
    fn default() -> Self {
        MiningSection { queries_per_node: 10, schedule: ScheduleSpec::Constant, subset_nodes: 0, estimate_factor: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorSection {
    pub common_prefix: bool,
    pub chain_quality: bool,
    pub freshness: bool,
    /// Treat any violation as a failed run.
    pub assert: bool,
}

impl Default for MonitorSection {
    fn default() -> Self {
        MonitorSection { common_prefix: true, chain_quality: true, freshness: true, assert: false }
    }
}

/// An honest Minotaur run described in TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub mining: MiningSection,
    #[serde(default)]
    pub monitors: MonitorSection,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, ExpError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExpError> {
        let p = self.protocol.params();
        p.check_structure().map_err(|e| ExpError::Invalid(e.to_string()))?;
        if self.network.nodes == 0 {
            return Err(ExpError::Invalid("network.nodes must be positive".into()));
        }
        if self.mining.subset_nodes > self.network.nodes {
            return Err(ExpError::Invalid("mining.subset_nodes exceeds network.nodes".into()));
        }
        if self.mining.estimate_factor <= 0.0 {
            return Err(ExpError::Invalid("mining.estimate_factor must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(ExpError::Invalid("seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn scenario(&self, seed: u64) -> Scenario {
        let p = self.protocol.params();
        let n = self.network.nodes;
        let slots = p.total_slots();
        let honest = self.mining.queries_per_node * n as u64;
        let participation = match self.mining.schedule {
            ScheduleSpec::Constant => ParticipationSchedule::constant(slots as usize, honest, honest),
            ScheduleSpec::Halving => ParticipationSchedule::halving(p.epochs, p.epoch_len, honest, 0),
        };
        let actual = StakeDistribution::from_f64((0..n).map(|i| (PartyId(i), 1.0))).expect("positive stake");
        let h1 = (honest as f64 * self.mining.estimate_factor).max(1.0);
        let rule = self.network.rule.rule(&p);
        let setup = Arc::new(Setup::new(p, seed, actual, h1));
        let nodes = (0..n).map(|i| NodeConfig::new(PartyId(i), rule)).collect();
        let mut s = Scenario::honest(setup, nodes, participation, seed);
        s.subset = (0..n).map(|i| i < self.mining.subset_nodes).collect();
        if self.network.topology == TopologySpec::Line {
            s.topology = Topology::line(n as usize, 0);
        }
        s.delay = match self.network.delay {
            DelaySpec::Max => DelayPolicy::Max,
            DelaySpec::Uniform => DelayPolicy::Uniform,
            DelaySpec::Fixed(d) => DelayPolicy::Fixed(d),
        };
        s
    }
}

/// Runs the safety monitors on a finished honest simulation.
pub fn check_monitors(sim: &Sim, monitors: &MonitorSection) -> Vec<Violation> {
    let p = &sim.scenario.setup.params;
    let mut out = Vec::new();
    if monitors.common_prefix {
        out.extend(monitor_cp(&sim.global, &sim.trace.log, p.kappa));
    }
    if monitors.chain_quality {
        let honest = &sim.trace.honest;
        for &tip in sim.trace.log.tips.last().into_iter().flatten() {
            out.extend(monitor_ecq(&sim.global, tip, p.kappa, |party| honest.contains(&party)));
        }
    }
    if monitors.freshness {
        out.extend(monitor_freshness(&sim.global, &sim.trace.log, &sim.trace.honest_pow(), p.kappa, 2 * p.kappa + p.delta_net));
    }
    out
}

/// Applies `key=value` overrides, with dotted keys for nested tables. Values
/// parse as TOML literals and fall back to strings.
pub fn apply_overrides<T: Serialize + DeserializeOwned>(base: &T, overrides: &[String]) -> Result<T, ExpError> {
    let mut value = toml::Value::try_from(base).map_err(|e| ExpError::Invalid(e.to_string()))?;
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| ExpError::BadOverride(item.clone()))?;
        let parsed =
            toml::from_str::<toml::Table>(&format!("v = {raw}")).ok().and_then(|mut t| t.remove("v")).unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut slot = &mut value;
        for part in key.trim().split('.') {
            slot = slot.as_table_mut().and_then(|t| t.get_mut(part)).ok_or_else(|| ExpError::BadOverride(format!("unknown key {key}")))?;
        }
        *slot = parsed;
    }
    value.try_into().map_err(|e: toml::de::Error| ExpError::BadOverride(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "honest"
seeds = [1, 2]

[protocol]
epoch_len = 100
kappa = 25
f_w = 0.3
f_s = 0.3
omega = 0.5
epochs = 3

[network]
nodes = 3
delay = { fixed = 1 }

[monitors]
assert = true
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = ScenarioConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.network.delay, DelaySpec::Fixed(1));
        let s = cfg.scenario(1);
        assert_eq!(s.nodes.len(), 3);
        assert_eq!(s.slots, 300);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(ScenarioConfig::from_toml("name = 1"), Err(ExpError::Parse(_))));
        let bad = SAMPLE.replace("epoch_len = 100", "epoch_len = 10");
        assert!(matches!(ScenarioConfig::from_toml(&bad), Err(ExpError::Invalid(_))));
        let extra = SAMPLE.replace("[monitors]", "[monitors]\nbogus = 1");
        assert!(ScenarioConfig::from_toml(&extra).is_err());
    }

    #[test]
    fn overrides_nested_keys() {
        let cfg = ScenarioConfig::from_toml(SAMPLE).unwrap();
        let out = apply_overrides(&cfg, &["protocol.omega=0.25".into(), "network.rule=bg".into(), "seeds=[7]".into()]).unwrap();
        assert_eq!(out.protocol.omega, 0.25);
        assert_eq!(out.network.rule, RuleSpec::Bg);
        assert_eq!(out.seeds, vec![7]);
        assert!(matches!(apply_overrides(&cfg, &["protocol.nope=1".into()]), Err(ExpError::BadOverride(_))));
        assert!(matches!(apply_overrides(&cfg, &["novalue".into()]), Err(ExpError::BadOverride(_))));
    }

    #[test]
    fn honest_run_has_no_violations() {
        let cfg = ScenarioConfig::from_toml(SAMPLE).unwrap();
        let sim = Sim::new(cfg.scenario(1)).unwrap().run();
        assert!(check_monitors(&sim, &cfg.monitors).is_empty());
    }
}
