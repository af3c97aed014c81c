//! Shared step loop behind [`crate::run_episode`] and [`crate::run_modified`].

use crate::allocator::{allocate_into, PolicyOptions, RunTrace, StepRecord, TraceMeta};
use crate::error::{Error, Result};
use crate::estimator::{default_delta, EstimatorState};
use crate::init::{Halving, InitRecord};
use crate::model::{optimal_profile, sample_into, success_prob, Allocation, Observation, OptimalProfile, ProblemInstance};
use crate::seeding::{self, StreamRng};

pub(crate) enum Start<'a> {
    /// Caller-supplied `ν̲_{k,0}` for every job.
    Known(&'a [f64]),
    /// Offset halving initializers; job `k` (zero-based) starts at step `k + 1`.
    SelfInitializing,
}

/// Regret and diagnostics of one episode without the per-step trace.
#[derive(Debug, Clone)]
pub struct EpisodeSummary {
    pub cumulative_regret: f64,
    pub realized_successes: u64,
    pub init_records: Vec<InitRecord>,
    pub final_states: Vec<Option<EstimatorState>>,
}

pub(crate) struct Episode<'a> {
    instance: &'a ProblemInstance,
    options: &'a PolicyOptions,
    profile: OptimalProfile,
    delta: f64,
    estimators: Vec<Option<EstimatorState>>,
    initializers: Vec<Option<Halving>>,
    init_records: Vec<InitRecord>,
    rng: StreamRng,
    t: u64,
    cumulative: f64,
    successes: u64,
    lower_recips: Vec<f64>,
    init_use: Vec<f64>,
    main: Vec<f64>,
    alloc: Vec<f64>,
    obs: Vec<bool>,
    order: Vec<usize>,
}

impl<'a> Episode<'a> {
    pub(crate) fn new(instance: &'a ProblemInstance, start: Start<'_>, options: &'a PolicyOptions) -> Result<Self> {
        let k = instance.num_jobs();
        let delta = match options.delta_override {
            Some(d) if !(d > 0.0 && d < 1.0) => return Err(Error::InvalidDelta(d)),
            Some(d) => d,
            None => default_delta(instance.horizon(), k),
        };
        let (estimators, initializers) = match start {
            Start::Known(bounds) => {
                if bounds.len() != k {
                    return Err(Error::JobCountMismatch {
                        expected: k,
                        got: bounds.len(),
                    });
                }
                let estimators = bounds
                    .iter()
                    .enumerate()
                    .map(|(index, &b)| {
                        if !(b.is_finite() && b > 0.0) {
                            return Err(Error::InvalidLowerBound { index, value: b });
                        }
                        EstimatorState::new(b, delta, options.mode, &options.alphas).map(Some)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (estimators, vec![None; k])
            }
            Start::SelfInitializing => (vec![None; k], vec![Some(Halving::new()); k]),
        };
        Ok(Self {
            instance,
            options,
            profile: optimal_profile(instance),
            delta,
            estimators,
            initializers,
            init_records: Vec::new(),
            rng: seeding::stream(options.seed),
            t: 0,
            cumulative: 0.0,
            successes: 0,
            lower_recips: vec![0.0; k],
            init_use: vec![0.0; k],
            main: vec![0.0; k],
            alloc: vec![0.0; k],
            obs: vec![false; k],
            order: Vec::with_capacity(k),
        })
    }

    /// Advances one global step and returns its pseudo-regret.
    fn step(&mut self) -> Result<f64> {
        self.t += 1;
        let t = self.t;

        for (k, (use_k, init)) in self.init_use.iter_mut().zip(&self.initializers).enumerate() {
            *use_k = match init {
                Some(h) if t > k as u64 => h.next_allocation().unwrap_or(0.0),
                _ => 0.0,
            };
        }
        let budget = (1.0 - self.init_use.iter().sum::<f64>()).max(0.0);

        for (l, est) in self.lower_recips.iter_mut().zip(&self.estimators) {
            *l = est.as_ref().map_or(0.0, EstimatorState::lower_recip);
        }
        allocate_into(&self.lower_recips, budget, &mut self.order, &mut self.main);
        for ((a, &m), &i) in self.alloc.iter_mut().zip(&self.main).zip(&self.init_use) {
            *a = m + i;
        }

        let inv_nus = self.instance.inv_nus();
        sample_into(inv_nus, &self.alloc, &mut self.rng, &mut self.obs);

        for k in 0..self.alloc.len() {
            let x = self.obs[k];
            self.successes += u64::from(x);
            if self.init_use[k] > 0.0 {
                let done = self.initializers[k].as_mut().and_then(|h| h.observe(x));
                if let Some(lower) = done {
                    let h = self.initializers[k].take().expect("active initializer");
                    self.init_records.push(h.into_record(k, k as u64 + 1));
                    self.estimators[k] =
                        Some(EstimatorState::new(lower, self.delta, self.options.mode, &self.options.alphas)?);
                }
            } else if let Some(est) = self.estimators[k].as_mut() {
                est.update(self.main[k], x)?;
            }
        }

        let reward: f64 = self.alloc.iter().zip(inv_nus).map(|(&m, &r)| success_prob(m, r)).sum();
        // pseudo-regret is non-negative; only rounding can push it below zero
        let regret = (self.profile.rho_star - reward).max(0.0);
        self.cumulative += regret;
        Ok(regret)
    }

    pub(crate) fn run_summary(mut self) -> Result<EpisodeSummary> {
        for _ in 0..self.instance.horizon() {
            self.step()?;
        }
        Ok(EpisodeSummary {
            cumulative_regret: self.cumulative,
            realized_successes: self.successes,
            init_records: self.init_records,
            final_states: self.estimators,
        })
    }

    pub(crate) fn run_traced(mut self) -> Result<RunTrace> {
        let n = self.instance.horizon() as usize;
        let mut steps = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for _ in 0..n {
            let regret = self.step()?;
            steps.push(StepRecord {
                alloc: Allocation(self.alloc.clone()),
                obs: Observation(self.obs.clone()),
                regret,
                snapshots: self.options.record_intervals.then(|| self.estimators.clone()),
            });
            cumulative.push(self.cumulative);
        }
        Ok(RunTrace {
            steps,
            cumulative_regret: cumulative,
            final_states: self.estimators,
            meta: TraceMeta {
                instance: self.instance.clone(),
                instance_digest: format!("{:016x}", self.instance.digest()),
                options: self.options.clone(),
                delta: self.delta,
                realized_successes: self.successes,
                init_records: self.init_records,
            },
        })
    }
}
