//! Declarative Monte-Carlo experiments and the minimax stress test.
//!
//! An experiment is a grid of instances (a sweep over one job's difficulty,
//! or over the horizon) crossed with one or more policy arms. Every
//! `(grid point, arm, replication)` triple is an independent episode whose
//! seed is derived from the base seed, the grid coordinate and the
//! replication index. Arms at the same grid point share seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocator::{run_episode_summary, PolicyOptions};
use crate::error::{Error, Result};
use crate::estimator::Weighting;
use crate::exec::Executor;
use crate::init::run_modified_summary;
use crate::io::{atomic_write, fmt_f64};
use crate::model::ProblemInstance;
use crate::seeding::{derive_seed, float_key};
use crate::stats;

pub const DEFAULT_REPLICATIONS: usize = 300;

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

fn default_arms() -> Vec<ArmConfig> {
    vec![ArmConfig::new("weighted", Weighting::Weighted)]
}

/// Which difficulty is swept, and over which values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// One-based job index (`2` sweeps `ν_2`).
    pub job: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl Sweep {
    pub fn values(job: usize, values: Vec<f64>) -> Self {
        Self {
            job,
            values: Some(values),
            start: None,
            end: None,
            points: None,
        }
    }

    pub fn linspace(job: usize, start: f64, end: f64, points: usize) -> Self {
        Self {
            job,
            values: None,
            start: Some(start),
            end: Some(end),
            points: Some(points),
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        match (&self.values, self.start, self.end, self.points) {
            (Some(v), None, None, None) => Ok(v.clone()),
            (None, Some(a), Some(b), Some(p)) if p >= 1 => Ok(if p == 1 {
                vec![a]
            } else {
                (0..p).map(|i| a + (b - a) * i as f64 / (p - 1) as f64).collect()
            }),
            _ => Err(Error::InvalidConfig(
                "sweep needs either `values` or `start`, `end` and `points`".into(),
            )),
        }
    }
}

/// One policy variant compared in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    #[serde(default)]
    pub mode: Weighting,
    /// Known `ν̲_{k,0}`; absent means the self-initializing algorithm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bounds: Option<Vec<f64>>,
    /// Known bounds as `fraction · min{1, ν_k}`, which follows a sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl ArmConfig {
    pub fn new(name: &str, mode: Weighting) -> Self {
        Self {
            name: name.to_string(),
            mode,
            lower_bounds: None,
            lower_bound_fraction: None,
            delta: None,
        }
    }

    fn known_bounds(&self, instance: &ProblemInstance) -> Option<Vec<f64>> {
        if let Some(b) = &self.lower_bounds {
            return Some(b.clone());
        }
        self.lower_bound_fraction.map(|f| {
            (0..instance.num_jobs())
                .map(|k| f * instance.nu(k).min(1.0))
                .collect()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    /// Difficulty template; `null` marks an unbounded job.
    pub nus: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub horizons: Vec<u64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_arms")]
    pub arms: Vec<ArmConfig>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// One instance of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// Swept difficulty, or the horizon when only horizons vary.
    pub value: f64,
    pub nus: Vec<Option<f64>>,
    pub horizon: u64,
}

impl ExperimentConfig {
    /// Reads a TOML (`.toml`) or JSON document.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text)?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.nus.is_empty() {
            return bad("`nus` must not be empty");
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return bad("`horizons` must be a non-empty list of positive integers");
        }
        if self.replications == 0 {
            return bad("`replications` must be at least 1");
        }
        if self.arms.is_empty() {
            return bad("at least one arm is required");
        }
        for (i, arm) in self.arms.iter().enumerate() {
            if arm.name.is_empty() || self.arms[..i].iter().any(|a| a.name == arm.name) {
                return bad("arm names must be non-empty and unique");
            }
            if arm.lower_bounds.is_some() && arm.lower_bound_fraction.is_some() {
                return bad("an arm takes `lower_bounds` or `lower_bound_fraction`, not both");
            }
            if let Some(b) = &arm.lower_bounds {
                if b.len() != self.nus.len() {
                    return bad("`lower_bounds` must have one entry per job");
                }
            }
            if let Some(d) = arm.delta {
                if !(d > 0.0 && d < 1.0) {
                    return Err(Error::InvalidDelta(d));
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.job == 0 || sweep.job > self.nus.len() {
                return bad("`sweep.job` is a one-based job index");
            }
            if sweep.grid()?.is_empty() {
                return bad("sweep grid must not be empty");
            }
            if self.horizons.len() > 1 {
                return bad("a difficulty sweep takes a single horizon");
            }
        }
        Ok(())
    }

    pub fn grid_points(&self) -> Result<Vec<GridPoint>> {
        self.validate()?;
        Ok(match &self.sweep {
            Some(sweep) => sweep
                .grid()?
                .into_iter()
                .map(|v| {
                    let mut nus = self.nus.clone();
                    nus[sweep.job - 1] = Some(v);
                    GridPoint {
                        value: v,
                        nus,
                        horizon: self.horizons[0],
                    }
                })
                .collect(),
            None => self
                .horizons
                .iter()
                .map(|&n| GridPoint {
                    value: n as f64,
                    nus: self.nus.clone(),
                    horizon: n,
                })
                .collect(),
        })
    }
}

/// Aggregate for one grid point and arm.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub grid_value: f64,
    pub horizon: u64,
    pub arm: String,
    pub mean_regret: f64,
    pub stderr: f64,
    pub reps: usize,
    /// Final cumulative regret of each replication, in replication order.
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub id: String,
    pub points: Vec<PointResult>,
}

impl ExperimentResult {
    pub fn point(&self, grid_value: f64, arm: &str) -> Option<&PointResult> {
        self.points.iter().find(|p| p.grid_value == grid_value && p.arm == arm)
    }

    /// `grid_value,arm,mean_regret,stderr,reps` with LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid_value,arm,mean_regret,stderr,reps\n");
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(p.grid_value),
                p.arm,
                fmt_f64(p.mean_regret),
                fmt_f64(p.stderr),
                p.reps
            )
            .unwrap();
        }
        out
    }
}

/// Final cumulative pseudo-regret of one episode of `arm` on `instance`.
fn episode_regret(instance: &ProblemInstance, arm: &ArmConfig, seed: u64) -> Result<f64> {
    let options = PolicyOptions {
        mode: arm.mode,
        delta_override: arm.delta,
        record_intervals: false,
        seed,
        alphas: Vec::new(),
    };
    let summary = match arm.known_bounds(instance) {
        Some(bounds) => run_episode_summary(instance, &bounds, &options)?,
        None => run_modified_summary(instance, &options)?,
    };
    Ok(summary.cumulative_regret)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(config, &Executor::default())
}

/// Runs every `(grid point, arm, replication)` episode on `exec` and
/// aggregates in a fixed order, so the result does not depend on scheduling.
pub fn run_experiment_with(config: &ExperimentConfig, exec: &Executor) -> Result<ExperimentResult> {
    let points = config.grid_points()?;
    let instances = points
        .iter()
        .map(|p| ProblemInstance::new(&p.nus, p.horizon, config.base_seed))
        .collect::<Result<Vec<_>>>()?;
    let reps = config.replications;
    let arms = config.arms.len();

    let regrets = exec.map(points.len() * arms * reps, |task| {
        let rep = task % reps;
        let arm = (task / reps) % arms;
        let point = task / (reps * arms);
        let seed = derive_seed(config.base_seed, float_key(points[point].value), rep as u64);
        episode_regret(&instances[point], &config.arms[arm], seed)
    });
    let regrets = regrets.into_iter().collect::<Result<Vec<_>>>()?;

    let mut result = ExperimentResult {
        id: config.id.clone(),
        points: Vec::with_capacity(points.len() * arms),
    };
    for (chunk, (point, arm)) in regrets
        .chunks(reps)
        .zip(points.iter().flat_map(|p| config.arms.iter().map(move |a| (p, a))))
    {
        result.points.push(PointResult {
            grid_value: point.value,
            horizon: point.horizon,
            arm: arm.name.clone(),
            mean_regret: stats::mean(chunk),
            stderr: stats::std_error(chunk),
            reps,
            samples: chunk.to_vec(),
        });
    }
    Ok(result)
}

pub fn emit_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    atomic_write(path, result.to_csv().as_bytes())
}

/// The adversarial family: instance `k` has `ν_j = 2` for `j ≠ k` and
/// `ν_k = 2/(1+ε)` with `ε = sqrt(K/(8n))`.
pub fn minimax_family(horizon: u64, num_jobs: usize) -> Result<Vec<ProblemInstance>> {
    if num_jobs < 2 || (num_jobs as u64) > 8 * horizon {
        return Err(Error::MinimaxPrecondition {
            horizon,
            jobs: num_jobs,
        });
    }
    let eps = minimax_epsilon(horizon, num_jobs);
    (0..num_jobs)
        .map(|k| {
            let nus: Vec<f64> = (0..num_jobs)
                .map(|j| if j == k { 2.0 / (1.0 + eps) } else { 2.0 })
                .collect();
            ProblemInstance::from_finite(&nus, horizon, 0)
        })
        .collect()
}

pub fn minimax_epsilon(horizon: u64, num_jobs: usize) -> f64 {
    (num_jobs as f64 / (8.0 * horizon as f64)).sqrt()
}

/// The universal lower bound `sqrt(nK)/(16√2)` on the worst-case regret.
pub fn minimax_lower_bound(horizon: u64, num_jobs: usize) -> f64 {
    (horizon as f64 * num_jobs as f64).sqrt() / (16.0 * 2.0_f64.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxReport {
    pub horizon: u64,
    pub num_jobs: usize,
    pub epsilon: f64,
    /// Mean and standard error of `R_n` on each family member.
    pub members: Vec<(f64, f64)>,
    pub reps: usize,
    pub sup_regret: f64,
    /// `sup_regret / sqrt(nK)`.
    pub ratio: f64,
    pub lower_bound: f64,
}

impl MinimaxReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("member,mean_regret,stderr,reps\n");
        for (k, (m, se)) in self.members.iter().enumerate() {
            writeln!(out, "{},{},{},{}", k + 1, fmt_f64(*m), fmt_f64(*se), self.reps).unwrap();
        }
        out
    }
}

/// Runs the self-initializing policy on every family member and reports the
/// worst mean regret.
pub fn minimax_stress(horizon: u64, num_jobs: usize, reps: usize, seed: u64, exec: &Executor) -> Result<MinimaxReport> {
    let family = minimax_family(horizon, num_jobs)?;
    if reps == 0 {
        return Err(Error::InvalidConfig("`reps` must be at least 1".into()));
    }
    let arm = ArmConfig::new("weighted", Weighting::Weighted);
    let regrets = exec.map(family.len() * reps, |task| {
        let (member, rep) = (task / reps, task % reps);
        episode_regret(&family[member], &arm, derive_seed(seed, member as u64, rep as u64))
    });
    let regrets = regrets.into_iter().collect::<Result<Vec<_>>>()?;
    let members: Vec<(f64, f64)> = regrets
        .chunks(reps)
        .map(|c| (stats::mean(c), stats::std_error(c)))
        .collect();
    let sup_regret = members.iter().map(|m| m.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(MinimaxReport {
        horizon,
        num_jobs,
        epsilon: minimax_epsilon(horizon, num_jobs),
        members,
        reps,
        sup_regret,
        ratio: sup_regret / (horizon as f64 * num_jobs as f64).sqrt(),
        lower_bound: minimax_lower_bound(horizon, num_jobs),
    })
}

/// Experiment layouts matching the four synthetic studies with `K = 2`.
pub mod presets {
    use super::*;

    fn base(id: &str, nus: &[f64], horizons: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            id: id.to_string(),
            nus: nus.iter().copied().map(Some).collect(),
            sweep: None,
            horizons,
            replications: DEFAULT_REPLICATIONS,
            arms: default_arms(),
            base_seed: 0,
            output: None,
        }
    }

    /// Regret against `ν_2 ∈ [2, 10]` with `ν_1 = 2`, `n = 10⁴`.
    pub fn tl() -> ExperimentConfig {
        ExperimentConfig {
            sweep: Some(Sweep::linspace(2, 2.0, 10.0, 17)),
            ..base("tl", &[2.0, 2.0], vec![10_000])
        }
    }

    /// `R_n` for `ν = (0.4, 0.6)` across horizons up to `10⁶`.
    pub fn tr() -> ExperimentConfig {
        base(
            "tr",
            &[0.4, 0.6],
            vec![1_000, 3_000, 10_000, 30_000, 100_000, 300_000, 1_000_000],
        )
    }

    /// Regret against `ν_2 ∈ [0.4, 1]` with `ν_1 = 0.4`, `n = 10⁵`.
    pub fn bl() -> ExperimentConfig {
        ExperimentConfig {
            sweep: Some(Sweep::linspace(2, 0.4, 1.0, 13)),
            ..base("bl", &[0.4, 0.4], vec![100_000])
        }
    }

    /// Weighted against unweighted estimation for `ν = (0.4, 0.6)`.
    pub fn br() -> ExperimentConfig {
        ExperimentConfig {
            arms: vec![
                ArmConfig::new("weighted", Weighting::Weighted),
                ArmConfig::new("unweighted", Weighting::Unweighted),
            ],
            ..base("br", &[0.4, 0.6], vec![10_000, 25_000, 50_000, 75_000, 100_000])
        }
    }

    pub fn by_name(name: &str) -> Option<ExperimentConfig> {
        match name {
            "tl" => Some(tl()),
            "tr" => Some(tr()),
            "bl" => Some(bl()),
            "br" => Some(br()),
            _ => None,
        }
    }
}
