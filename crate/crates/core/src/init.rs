//! Halving initialization of the lower bounds and the self-initializing policy.
//!
//! A halving initializer allocates `2^{-1}, 2^{-2}, …` to one job and stops at
//! the first failure, returning that allocation as `ν̲_0`. Since a failure is
//! only possible when the allocation is below `ν`, the result is strictly
//! below the true difficulty.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{PolicyOptions, RunTrace};
use crate::episode::{Episode, EpisodeSummary, Start};
use crate::error::Result;
use crate::exec::Executor;
use crate::model::{success_prob, ProblemInstance};
use crate::seeding;
use crate::stats;

/// Iteration cap; beyond this the allocation is negligible in double precision.
pub const MAX_HALVINGS: u32 = 64;

/// Outcome of one halving initializer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitRecord {
    pub job: usize,
    /// Global step at which the initializer made its first allocation.
    pub start_step: u64,
    /// Number of allocations made, `τ`.
    pub steps_used: u32,
    /// `ν̲_0 = 2^{-τ}`.
    pub lower_bound: f64,
    /// Allocation at each local step, `2^{-1}, …, 2^{-τ}`.
    pub consumption: Vec<f64>,
    /// The iteration cap was hit without observing a failure.
    pub capped: bool,
}

/// Incremental halving initializer, fed one outcome at a time.
#[derive(Debug, Clone, Default)]
pub struct Halving {
    consumption: Vec<f64>,
    result: Option<f64>,
    capped: bool,
}

impl Halving {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocation for the next local step, or `None` once finished.
    pub fn next_allocation(&self) -> Option<f64> {
        match self.result {
            Some(_) => None,
            None => Some(halving_amount(self.consumption.len() as u32 + 1)),
        }
    }

    /// Records the outcome of the pending allocation; returns `ν̲_0` when done.
    pub fn observe(&mut self, x: bool) -> Option<f64> {
        let m = self.next_allocation()?;
        self.consumption.push(m);
        if !x {
            self.result = Some(m);
        } else if self.consumption.len() as u32 >= MAX_HALVINGS {
            self.capped = true;
            self.result = Some(m);
        }
        self.result
    }

    pub fn lower_bound(&self) -> Option<f64> {
        self.result
    }

    pub fn into_record(self, job: usize, start_step: u64) -> InitRecord {
        InitRecord {
            job,
            start_step,
            steps_used: self.consumption.len() as u32,
            lower_bound: self.result.unwrap_or(f64::NAN),
            consumption: self.consumption,
            capped: self.capped,
        }
    }
}

#[inline]
fn halving_amount(local_step: u32) -> f64 {
    0.5_f64.powi(local_step as i32)
}

/// Runs one initializer to completion against a job of difficulty `nu`
/// (`f64::INFINITY` for an unbounded job).
pub fn halving_init<R: Rng + ?Sized>(nu: f64, rng: &mut R) -> InitRecord {
    let inv_nu = if nu.is_infinite() { 0.0 } else { 1.0 / nu };
    let mut h = Halving::new();
    while let Some(m) = h.next_allocation() {
        let u: f64 = rng.random();
        h.observe(u < success_prob(m, inv_nu));
    }
    h.into_record(0, 1)
}

/// Looseness of an initial bound, `η = min{1, ν}/ν̲_0`.
pub fn sample_eta(nu: f64, nu_lower0: f64) -> f64 {
    nu.min(1.0) / nu_lower0
}

/// Worst-case consumption of `K` offset initializers at global step `t ≥ 1`,
/// when job `k` starts at step `k`: `Σ_k 𝟙{t ≥ k} 2^{k−t−1}`.
pub fn init_budget(t: u64, num_jobs: usize) -> f64 {
    (1..=num_jobs as u64)
        .filter(|&k| t >= k)
        .map(|k| halving_amount((t - k + 1) as u32))
        .sum()
}

/// The self-initializing policy: `K` offset halving initializers share the
/// budget with the optimistic allocator, which only serves jobs whose
/// initializer has finished.
pub fn run_modified(instance: &ProblemInstance, options: &PolicyOptions) -> Result<RunTrace> {
    Episode::new(instance, Start::SelfInitializing, options)?.run_traced()
}

/// [`run_modified`] without the per-step trace.
pub fn run_modified_summary(instance: &ProblemInstance, options: &PolicyOptions) -> Result<EpisodeSummary> {
    Episode::new(instance, Start::SelfInitializing, options)?.run_summary()
}

/// Monte-Carlo summary of the halving initializer for one difficulty.
#[derive(Debug, Clone, PartialEq)]
pub struct InitStats {
    pub nu: f64,
    pub reps: usize,
    pub mean_eta: f64,
    pub stderr_eta: f64,
    pub mean_steps: f64,
    pub stderr_steps: f64,
    /// Runs where `ν̲_0 < ν` failed to hold (expected zero).
    pub bound_violations: usize,
}

/// Repeats [`halving_init`] `reps` times per difficulty on derived streams.
pub fn init_stats(nus: &[f64], reps: usize, base_seed: u64, exec: &Executor) -> Vec<InitStats> {
    nus.iter()
        .map(|&nu| {
            let key = seeding::float_key(nu);
            let runs = exec.map(reps, |i| {
                let mut rng = seeding::stream(seeding::derive_seed(base_seed, key, i as u64));
                halving_init(nu, &mut rng)
            });
            let etas: Vec<f64> = runs.iter().map(|r| sample_eta(nu, r.lower_bound)).collect();
            let steps: Vec<f64> = runs.iter().map(|r| f64::from(r.steps_used)).collect();
            InitStats {
                nu,
                reps,
                mean_eta: stats::mean(&etas),
                stderr_eta: stats::std_error(&etas),
                mean_steps: stats::mean(&steps),
                stderr_steps: stats::std_error(&steps),
                bound_violations: runs.iter().filter(|r| r.lower_bound >= nu).count(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;

    /// Probability that the initializer stops at local step `t`:
    /// `(1 − β(2^{-t}/ν)) Π_{s<t} β(2^{-s}/ν)`.
    fn stop_probability(nu: f64, t: u32) -> f64 {
        let b = |s: u32| (0.5_f64.powi(s as i32) / nu).min(1.0);
        (1.0 - b(t)) * (1..t).map(b).product::<f64>()
    }

    #[test]
    fn outcome_sequence_determines_bound() {
        let mut h = Halving::new();
        assert_eq!(h.observe(true), None);
        assert_eq!(h.observe(true), None);
        assert_eq!(h.observe(false), Some(0.125));
        assert_eq!(h.next_allocation(), None);
        let rec = h.into_record(2, 3);
        assert_eq!(rec.consumption, vec![0.5, 0.25, 0.125]);
        assert_eq!(rec.steps_used, 3);
        assert_eq!(rec.lower_bound, 0.125);
    }

    #[test]
    fn unbounded_job_stops_immediately() {
        let mut rng = stream(1);
        for _ in 0..100 {
            let rec = halving_init(f64::INFINITY, &mut rng);
            assert_eq!(rec.lower_bound, 0.5);
            assert_eq!(rec.steps_used, 1);
        }
    }

    #[test]
    fn cap_is_flagged() {
        let mut h = Halving::new();
        let mut out = None;
        for _ in 0..MAX_HALVINGS {
            out = h.observe(true);
        }
        assert_eq!(out, Some(0.5_f64.powi(64)));
        let rec = h.into_record(0, 1);
        assert!(rec.capped);
        assert_eq!(rec.steps_used, 64);
    }

    #[test]
    fn stop_distribution_matches_product_formula() {
        assert_eq!(stop_probability(0.3, 1), 0.0);
        assert!((stop_probability(0.3, 2) - 1.0 / 6.0).abs() < 1e-15);

        let mut rng = stream(99);
        let reps = 200_000;
        let mut counts = [0usize; 8];
        for _ in 0..reps {
            let rec = halving_init(0.3, &mut rng);
            counts[(rec.steps_used as usize).min(7)] += 1;
        }
        for t in 1..6u32 {
            let p = stop_probability(0.3, t);
            let freq = counts[t as usize] as f64 / reps as f64;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((freq - p).abs() <= 4.0 * se + 1e-12, "t={t} freq={freq} p={p}");
        }
    }

    #[test]
    fn bound_is_strictly_below_truth() {
        let mut rng = stream(5);
        for &nu in &[0.01, 0.3, 0.5, 1.0, 3.0] {
            for _ in 0..2000 {
                assert!(halving_init(nu, &mut rng).lower_bound < nu);
            }
        }
    }

    #[test]
    fn eta_examples() {
        assert_eq!(sample_eta(0.5, 0.125), 4.0);
        assert_eq!(sample_eta(3.0, 0.5), 2.0);
        assert_eq!(sample_eta(f64::INFINITY, 0.5), 2.0);
    }

    #[test]
    fn budget_table() {
        assert_eq!(init_budget(1, 3), 0.5);
        assert_eq!(init_budget(2, 3), 0.75);
        assert_eq!(init_budget(3, 3), 0.875);
        assert_eq!(init_budget(4, 3), 7.0 / 16.0);
        for k in 1..8usize {
            for t in 1..20u64 {
                let cap = 1.0_f64.min(2.0_f64.powi(k as i32 - t as i32));
                assert!(init_budget(t, k) <= cap, "K={k} t={t}");
            }
        }
    }

    #[test]
    fn stats_are_deterministic_across_executors() {
        let a = init_stats(&[0.3, 2.0], 500, 4, &Executor::Sequential);
        let b = init_stats(&[0.3, 2.0], 500, 4, &Executor::Parallel { threads: 3 });
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.bound_violations == 0));
    }
}
