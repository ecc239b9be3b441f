//! Case study and parameter sweeps comparing the scheduling schemes.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    aoi_reward_fn, exhaustive_oracle, shortest_path_policy, PolicyKind, ShortestPathOptions,
};
use crate::env::{average, ActionSequence, EpisodeTrace, Env, RewardScale};
use crate::error::{Error, Result};
use crate::learner::{env_reward, greedy_policy, train};
use crate::plot::{PlotData, Series};
use crate::scenario::{generate_random, GeneratorParams, LearnerConfig, Scenario};

/// Builds the policy `kind` for `env` (training it if needed) and rolls it
/// out over the scenario horizon.
pub fn evaluate_policy(env: &Env, kind: PolicyKind, config: &LearnerConfig) -> Result<EpisodeTrace> {
    let horizon = env.scenario().horizon;
    match kind {
        PolicyKind::VoiOptimal => {
            let (q, _) = train(env, config, &env_reward)?;
            env.rollout(&mut greedy_policy(&q), horizon)
        }
        PolicyKind::AoiOptimal => {
            let reward = aoi_reward_fn(env.penalty());
            let (q, _) = train(env, config, &reward)?;
            env.rollout(&mut greedy_policy(&q), horizon)
        }
        PolicyKind::ShortestPath => {
            let mut policy = shortest_path_policy(env.scenario(), ShortestPathOptions::default())?;
            env.rollout(&mut policy, horizon)
        }
        PolicyKind::Oracle => {
            let best = exhaustive_oracle(env, horizon, config.discount, &env_reward)?;
            env.rollout(&mut ActionSequence::new(best.actions), horizon)
        }
    }
}

/// Per-slot VoI statistics of one policy, averaged over training seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySeries {
    pub policy: PolicyKind,
    /// Mean over nodes of the VoI after each slot, bits/s.
    pub mean_voi: Vec<f64>,
    /// Minimum over nodes of the VoI after each slot, bits/s.
    pub min_voi: Vec<f64>,
    /// One trace per seed, in seed order.
    pub traces: Vec<EpisodeTrace>,
}

impl PolicySeries {
    pub fn time_avg_mean_voi(&self) -> f64 {
        average(&self.mean_voi)
    }

    pub fn time_avg_min_voi(&self) -> f64 {
        average(&self.min_voi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudy {
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub series: Vec<PolicySeries>,
}

/// Training length for the case study. The network is small enough that the
/// full-length schedule is cheap, and shorter runs often settle on a tour
/// that never reaches every node.
pub const CASE_STUDY_EPISODES: u64 = 1_000_000;

const CASE_POLICIES: [PolicyKind; 3] = [
    PolicyKind::VoiOptimal,
    PolicyKind::AoiOptimal,
    PolicyKind::ShortestPath,
];

/// Trains the two learners once per seed, builds the shortest-path walk, and
/// rolls all three out on `scenario`.
pub fn run_case_study(
    scenario: &Scenario,
    config: &LearnerConfig,
    seeds: &[u64],
    scale: RewardScale,
) -> Result<CaseStudy> {
    scenario.validate()?;
    let env = Env::new(scenario.clone(), config.penalty).with_reward_scale(scale);
    let jobs: Vec<(PolicyKind, u64)> = CASE_POLICIES
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let traces: Vec<EpisodeTrace> = jobs
        .par_iter()
        .map(|&(kind, seed)| {
            evaluate_policy(&env, kind, &config.clone().with_seed(seed))
                .map_err(|e| Error::Instance { seed, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;

    let horizon = scenario.horizon;
    let series = CASE_POLICIES
        .iter()
        .enumerate()
        .map(|(k, &policy)| {
            let traces = traces[k * seeds.len()..(k + 1) * seeds.len()].to_vec();
            let per_slot = |f: fn(&EpisodeTrace) -> Vec<f64>| -> Vec<f64> {
                let all: Vec<Vec<f64>> = traces.iter().map(f).collect();
                (0..horizon)
                    .map(|t| average(&all.iter().map(|s| s[t]).collect::<Vec<_>>()))
                    .collect()
            };
            PolicySeries {
                policy,
                mean_voi: per_slot(EpisodeTrace::mean_voi_series),
                min_voi: per_slot(EpisodeTrace::min_voi_series),
                traces,
            }
        })
        .collect();
    Ok(CaseStudy {
        scenario: scenario.clone(),
        seeds: seeds.to_vec(),
        series,
    })
}

impl CaseStudy {
    pub fn get(&self, policy: PolicyKind) -> Option<&PolicySeries> {
        self.series.iter().find(|s| s.policy == policy)
    }

    /// Long-format table: `policy,t,mean_voi,min_voi`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["policy", "t", "mean_voi", "min_voi"])?;
        for s in &self.series {
            for (t, (mean, min)) in s.mean_voi.iter().zip(&s.min_voi).enumerate() {
                w.write_record([
                    s.policy.name().to_string(),
                    (t + 1).to_string(),
                    mean.to_string(),
                    min.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn plot_data(&self) -> PlotData {
        PlotData {
            title: "Average VoI over time".into(),
            x_label: "Time slot".into(),
            y_label: "Average VoI among nodes (bits/s)".into(),
            series: self
                .series
                .iter()
                .map(|s| Series {
                    name: s.policy.name().into(),
                    points: s
                        .mean_voi
                        .iter()
                        .enumerate()
                        .map(|(t, &v)| ((t + 1) as f64, v))
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    TxPower,
    RhoHalfwidth,
    NodeCount,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::TxPower => "tx_power",
            SweepVariable::RhoHalfwidth => "rho_halfwidth",
            SweepVariable::NodeCount => "node_count",
        }
    }

    pub fn axis_label(self) -> &'static str {
        match self {
            SweepVariable::TxPower => "Transmit power (W)",
            SweepVariable::RhoHalfwidth => "Correlation half-width Δρ",
            SweepVariable::NodeCount => "Number of nodes",
        }
    }

    fn apply(self, base: &GeneratorParams, value: f64) -> Result<GeneratorParams> {
        let mut p = base.clone();
        match self {
            SweepVariable::TxPower => p.tx_power = value,
            SweepVariable::RhoHalfwidth => p.rho_halfwidth = value,
            SweepVariable::NodeCount => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::invariant("values", format!("node count {value} is not a positive integer")));
                }
                p.node_count = value as usize;
            }
        }
        Ok(p)
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One parameter sweep: for every value, `instances_per_point` random
/// networks are drawn and every policy is evaluated on each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub sweep_variable: SweepVariable,
    pub values: Vec<f64>,
    pub instances_per_point: usize,
    #[serde(default)]
    pub base: GeneratorParams,
    #[serde(default)]
    pub learner: LearnerConfig,
    pub policies: Vec<PolicyKind>,
    /// Instance seeds. Empty means `learner.seed + i` for instance `i`.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invariant("values", "at least one sweep value is required"));
        }
        if self.instances_per_point < 1 {
            return Err(Error::invariant("instances_per_point", "must be >= 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::invariant("policies", "at least one policy is required"));
        }
        if !self.seeds.is_empty() && self.seeds.len() != self.instances_per_point {
            return Err(Error::invariant(
                "seeds",
                format!("expected {} seeds, found {}", self.instances_per_point, self.seeds.len()),
            ));
        }
        self.learner.validate()
    }

    pub fn instance_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.instances_per_point as u64)
                .map(|i| self.learner.rng_seed.wrapping_add(i))
                .collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: SweepSpec = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Time averages of one policy on one network instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceResult {
    pub value: f64,
    pub seed: u64,
    pub policy: PolicyKind,
    pub time_avg_min_voi: f64,
    pub time_avg_mean_voi: f64,
}

/// Across-instance statistics of one (sweep value, policy) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub value: f64,
    pub policy: PolicyKind,
    pub instances: usize,
    pub mean_min_voi: f64,
    pub stderr_min_voi: f64,
    pub mean_mean_voi: f64,
    pub stderr_mean_voi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub variable: SweepVariable,
    /// Ordered by sweep value, then by policy as listed in the spec.
    pub rows: Vec<RunStats>,
    pub instances: Vec<InstanceResult>,
}

/// Mean and standard error of the mean (sample standard deviation over √n).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn run_sweep(spec: &SweepSpec, scale: RewardScale) -> Result<SweepTable> {
    spec.validate()?;
    let seeds = spec.instance_seeds();
    let jobs: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();

    let per_instance: Vec<Vec<InstanceResult>> = jobs
        .par_iter()
        .map(|&(value, seed)| {
            run_instance(spec, value, seed, scale).map_err(|e| Error::Instance {
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let instances: Vec<InstanceResult> = per_instance.into_iter().flatten().collect();

    let mut rows = Vec::with_capacity(spec.values.len() * spec.policies.len());
    for &value in &spec.values {
        for &policy in &spec.policies {
            let cell: Vec<&InstanceResult> = instances
                .iter()
                .filter(|r| r.value == value && r.policy == policy)
                .collect();
            let mins: Vec<f64> = cell.iter().map(|r| r.time_avg_min_voi).collect();
            let means: Vec<f64> = cell.iter().map(|r| r.time_avg_mean_voi).collect();
            let (mean_min_voi, stderr_min_voi) = mean_stderr(&mins);
            let (mean_mean_voi, stderr_mean_voi) = mean_stderr(&means);
            rows.push(RunStats {
                value,
                policy,
                instances: cell.len(),
                mean_min_voi,
                stderr_min_voi,
                mean_mean_voi,
                stderr_mean_voi,
            });
        }
    }
    Ok(SweepTable {
        variable: spec.sweep_variable,
        rows,
        instances,
    })
}

fn run_instance(spec: &SweepSpec, value: f64, seed: u64, scale: RewardScale) -> Result<Vec<InstanceResult>> {
    let params = spec.sweep_variable.apply(&spec.base, value)?;
    let scenario = generate_random(&params, seed)?;
    let config = spec.learner.clone().with_seed(seed);
    let env = Env::new(scenario, config.penalty).with_reward_scale(scale);
    spec.policies
        .iter()
        .map(|&policy| {
            let trace = evaluate_policy(&env, policy, &config)?;
            Ok(InstanceResult {
                value,
                seed,
                policy,
                time_avg_min_voi: trace.time_avg_min_voi(),
                time_avg_mean_voi: trace.time_avg_mean_voi(),
            })
        })
        .collect()
}

pub const SWEEP_HEADER: [&str; 8] = [
    "sweep_variable",
    "value",
    "policy",
    "instances",
    "mean_min_voi",
    "stderr_min_voi",
    "mean_mean_voi",
    "stderr_mean_voi",
];

impl SweepTable {
    pub fn get(&self, value: f64, policy: PolicyKind) -> Option<&RunStats> {
        self.rows.iter().find(|r| r.value == value && r.policy == policy)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SWEEP_HEADER)?;
        for r in &self.rows {
            w.write_record([
                self.variable.name().to_string(),
                r.value.to_string(),
                r.policy.name().to_string(),
                r.instances.to_string(),
                r.mean_min_voi.to_string(),
                r.stderr_min_voi.to_string(),
                r.mean_mean_voi.to_string(),
                r.stderr_mean_voi.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-instance results: `sweep_variable,value,seed,policy,time_avg_min_voi,time_avg_mean_voi`.
    pub fn write_instances_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sweep_variable", "value", "seed", "policy", "time_avg_min_voi", "time_avg_mean_voi"])?;
        for r in &self.instances {
            w.write_record([
                self.variable.name().to_string(),
                r.value.to_string(),
                r.seed.to_string(),
                r.policy.name().to_string(),
                r.time_avg_min_voi.to_string(),
                r.time_avg_mean_voi.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn plot_data(&self) -> PlotData {
        let mut series: Vec<Series> = Vec::new();
        for r in &self.rows {
            let name = r.policy.name();
            let idx = match series.iter().position(|s| s.name == name) {
                Some(i) => i,
                None => {
                    series.push(Series {
                        name: name.into(),
                        points: Vec::new(),
                    });
                    series.len() - 1
                }
            };
            series[idx].points.push((r.value, r.mean_min_voi));
        }
        PlotData {
            title: format!("Time-average minimum VoI vs {}", self.variable.name()),
            x_label: self.variable.axis_label().into(),
            y_label: "Time-average minimum VoI (bits/s)".into(),
            series,
        }
    }
}
