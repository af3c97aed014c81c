//! The optimistic allocation policy and its episode runner.
//!
//! Each step the policy treats every job as being as easy as its current
//! lower bound `ν̲_k` allows and fills the budget greedily, easiest first:
//! `M_k = min{ν̲_k, remaining}`. Any budget left after all jobs are served
//! stays unallocated.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::episode::{Episode, EpisodeSummary, Start};
use crate::error::Result;
use crate::estimator::{default_delta, EstimatorState, Weighting};
use crate::init::InitRecord;
use crate::io::{atomic_write, fmt_f64};
use crate::model::{optimal_profile, Allocation, Observation, ProblemInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptions {
    pub mode: Weighting,
    /// Replaces the default `δ = (nK)^{-2}`.
    pub delta_override: Option<f64>,
    /// Keep a copy of every estimator after each step.
    pub record_intervals: bool,
    pub seed: u64,
    /// Thresholds `α` for the `U_α(t)` diagnostics.
    pub alphas: Vec<f64>,
}

impl Default for PolicyOptions {
    fn default() -> Self {
        Self {
            mode: Weighting::Weighted,
            delta_override: None,
            record_intervals: false,
            seed: 0,
            alphas: vec![0.1, 0.3],
        }
    }
}

impl PolicyOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// One simulated step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Total allocation per job, initializer share included.
    pub alloc: Allocation,
    pub obs: Observation,
    pub regret: f64,
    /// Estimator states after the step; `None` entries are jobs still initializing.
    pub snapshots: Option<Vec<Option<EstimatorState>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMeta {
    pub instance: ProblemInstance,
    pub instance_digest: String,
    pub options: PolicyOptions,
    pub delta: f64,
    pub realized_successes: u64,
    pub init_records: Vec<InitRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub steps: Vec<StepRecord>,
    pub cumulative_regret: Vec<f64>,
    pub final_states: Vec<Option<EstimatorState>>,
    pub meta: TraceMeta,
}

impl RunTrace {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }

    /// Columns `t, M_1..M_K, X_1..X_K, r_t, cumregret`, then `L_k, U_k` pairs
    /// when intervals were recorded. Uninitialized jobs leave `L_k, U_k` empty.
    pub fn to_csv(&self) -> String {
        let k = self.meta.instance.num_jobs();
        let with_intervals = self.steps.first().is_some_and(|s| s.snapshots.is_some());
        let mut out = String::from("t");
        for j in 1..=k {
            write!(out, ",M_{j}").unwrap();
        }
        for j in 1..=k {
            write!(out, ",X_{j}").unwrap();
        }
        out.push_str(",r_t,cumregret");
        if with_intervals {
            for j in 1..=k {
                write!(out, ",L_{j},U_{j}").unwrap();
            }
        }
        out.push('\n');

        for (i, (step, cum)) in self.steps.iter().zip(&self.cumulative_regret).enumerate() {
            write!(out, "{}", i + 1).unwrap();
            for &m in step.alloc.as_slice() {
                write!(out, ",{}", fmt_f64(m)).unwrap();
            }
            for &x in &step.obs.0 {
                write!(out, ",{}", u8::from(x)).unwrap();
            }
            write!(out, ",{},{}", fmt_f64(step.regret), fmt_f64(*cum)).unwrap();
            if let Some(states) = step.snapshots.as_ref().filter(|_| with_intervals) {
                for s in states {
                    match s {
                        Some(s) => write!(out, ",{},{}", fmt_f64(s.lower_recip()), fmt_f64(s.upper_recip())).unwrap(),
                        None => out.push_str(",,"),
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_csv().as_bytes())
    }

    /// Metadata (instance, options, initializer records) as pretty JSON.
    pub fn meta_json(&self) -> String {
        serde_json::to_string_pretty(&self.meta).expect("metadata serialization is infallible")
    }
}

/// Greedy optimistic allocation from reciprocal lower bounds `L_k = 1/ν̲_k`.
///
/// Jobs with `L_k = 0` are excluded and receive nothing.
pub fn allocate(lower_recips: &[f64]) -> Allocation {
    allocate_with_budget(lower_recips, 1.0)
}

/// [`allocate`] against a budget below one.
pub fn allocate_with_budget(lower_recips: &[f64], budget: f64) -> Allocation {
    let mut out = vec![0.0; lower_recips.len()];
    let mut order = Vec::with_capacity(lower_recips.len());
    allocate_into(lower_recips, budget, &mut order, &mut out);
    Allocation(out)
}

pub(crate) fn allocate_into(lower_recips: &[f64], budget: f64, order: &mut Vec<usize>, out: &mut [f64]) {
    order.clear();
    order.extend((0..lower_recips.len()).filter(|&k| lower_recips[k] > 0.0));
    // stable: equal bounds keep the lowest index first
    order.sort_by(|&a, &b| lower_recips[b].total_cmp(&lower_recips[a]));
    out.fill(0.0);
    let mut remaining = budget.max(0.0);
    for &k in order.iter() {
        let m = (1.0 / lower_recips[k]).min(remaining);
        out[k] = m;
        remaining = (remaining - m).max(0.0);
    }
}

/// Runs the policy for the instance's horizon from known lower bounds `ν̲_{k,0}`.
pub fn run_episode(instance: &ProblemInstance, initial_lower_bounds: &[f64], options: &PolicyOptions) -> Result<RunTrace> {
    Episode::new(instance, Start::Known(initial_lower_bounds), options)?.run_traced()
}

/// [`run_episode`] without the per-step trace.
pub fn run_episode_summary(
    instance: &ProblemInstance,
    initial_lower_bounds: &[f64],
    options: &PolicyOptions,
) -> Result<EpisodeSummary> {
    Episode::new(instance, Start::Known(initial_lower_bounds), options)?.run_summary()
}

/// The problem-dependent regret bound for horizon `n`, using the true difficulties.
///
/// Returns `+∞` when a gap it divides by is not positive. The bracket term
/// that needs a gap to a fully allocated job is dropped when no job is fully
/// allocated.
pub fn theorem1_bound(instance: &ProblemInstance, initial_lower_bounds: &[f64], n: u64) -> f64 {
    let k_total = instance.num_jobs();
    let profile = optimal_profile(instance);
    let ell = profile.ell;
    let delta = default_delta(n, k_total);
    let log_n = (n as f64).ln();

    struct Job {
        lower0: f64,
        eta: f64,
        c1: f64,
        c2: f64,
    }
    let jobs: Vec<Job> = profile
        .sort_order
        .iter()
        .map(|&k| {
            let lower0 = initial_lower_bounds[k];
            let eta = instance.nu(k).min(1.0) / lower0;
            let delta_tilde = delta / (48.0 * eta.powi(4) * (n as f64).powi(6));
            let log_term = (2.0 / delta_tilde).ln();
            Job {
                lower0,
                eta,
                c1: 27.0 * log_term,
                c2: 6.0 * log_term,
            }
        })
        .collect();

    let learn_full = |r: usize| jobs[r].c1 * jobs[r].eta * (1.0 + log_n);
    // u for job at rank r against the gap to rank j
    let log_u_term = |j: usize, r: usize| -> Option<f64> {
        let gap = profile.gap(j, r);
        (gap > 0.0).then(|| {
            let u = jobs[r].c1 / (jobs[r].lower0 * gap);
            jobs[r].c1 * jobs[r].eta * (1.0 + u.ln())
        })
    };

    let mut bound = 1.0 + (0..ell).map(learn_full).sum::<f64>();
    if ell < k_total {
        let overflow = ell;
        let mut bracket = 0.0;
        for r in overflow + 1..k_total {
            let gap = profile.gap(overflow, r);
            if gap <= 0.0 {
                return f64::INFINITY;
            }
            bracket += jobs[r].c2 / (jobs[r].lower0 * gap);
        }
        bracket += (0..=overflow).map(learn_full).sum::<f64>();
        for r in overflow + 1..k_total {
            match log_u_term(overflow, r) {
                Some(v) => bracket += v,
                None => return f64::INFINITY,
            }
        }
        if ell >= 1 {
            let last_full = ell - 1;
            for r in overflow..k_total {
                match log_u_term(last_full, r) {
                    Some(v) => bracket += v,
                    None => return f64::INFINITY,
                }
            }
        }
        bound += bracket;
    }
    bound
}
