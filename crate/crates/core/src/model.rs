//! Environment dynamics and the known-difficulty optimum.
//!
//! Every job `k` has a difficulty `ν_k`. Allocating `M` resources to it makes
//! the job succeed with probability `β(M/ν_k) = min{1, M/ν_k}`. Difficulties
//! are stored as reciprocals so that an unbounded job is simply `0.0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack on the unit budget for accumulated rounding.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// Slack used when deciding whether a job fits in the remaining budget.
const FIT_TOLERANCE: f64 = 1e-12;

/// The capped linear success probability `min{1, x}`.
pub fn beta(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::NegativeInput(x));
    }
    Ok(x.min(1.0))
}

#[inline]
pub(crate) fn success_prob(m: f64, inv_nu: f64) -> f64 {
    (m * inv_nu).min(1.0)
}

/// The hidden environment: job difficulties, horizon and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceDoc", into = "InstanceDoc")]
pub struct ProblemInstance {
    nus: Vec<Option<f64>>,
    inv_nus: Vec<f64>,
    horizon: u64,
    base_seed: u64,
}

/// Wire form: `{"nus": [...], "horizon": n, "seed": s}` with `null` for an unbounded job.
#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    nus: Vec<Option<f64>>,
    horizon: u64,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<InstanceDoc> for ProblemInstance {
    type Error = Error;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        ProblemInstance::new(&doc.nus, doc.horizon, doc.seed)
    }
}

impl From<ProblemInstance> for InstanceDoc {
    fn from(instance: ProblemInstance) -> Self {
        InstanceDoc {
            nus: instance.nus,
            horizon: instance.horizon,
            seed: instance.base_seed,
        }
    }
}

impl ProblemInstance {
    /// Builds an instance from difficulties, where `None` marks an unbounded job.
    pub fn new(nus: &[Option<f64>], horizon: u64, base_seed: u64) -> Result<Self> {
        if nus.is_empty() {
            return Err(Error::InvalidInstance("at least one job is required".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidInstance("horizon must be positive".into()));
        }
        let nus = nus
            .iter()
            .enumerate()
            .map(|(k, nu)| match *nu {
                None => Ok(None),
                Some(v) if v.is_infinite() && v > 0.0 => Ok(None),
                Some(v) if v.is_finite() && v > 0.0 => Ok(Some(v)),
                Some(v) => Err(Error::InvalidInstance(format!(
                    "difficulty of job {k} is {v}; must be positive"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let inv_nus = nus.iter().map(|nu| nu.map_or(0.0, |v| 1.0 / v)).collect();
        Ok(Self {
            nus,
            inv_nus,
            horizon,
            base_seed,
        })
    }

    /// Convenience constructor for finite difficulties.
    pub fn from_finite(nus: &[f64], horizon: u64, base_seed: u64) -> Result<Self> {
        let nus: Vec<_> = nus.iter().copied().map(Some).collect();
        Self::new(&nus, horizon, base_seed)
    }

    pub fn num_jobs(&self) -> usize {
        self.inv_nus.len()
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn with_horizon(&self, horizon: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidInstance("horizon must be positive".into()));
        }
        Ok(Self {
            horizon,
            ..self.clone()
        })
    }

    pub fn with_seed(&self, base_seed: u64) -> Self {
        Self {
            base_seed,
            ..self.clone()
        }
    }

    /// Reciprocal difficulties `1/ν_k`; zero for unbounded jobs.
    pub fn inv_nus(&self) -> &[f64] {
        &self.inv_nus
    }

    /// Difficulty of job `k`, `f64::INFINITY` when unbounded.
    pub fn nu(&self, k: usize) -> f64 {
        self.nus[k].unwrap_or(f64::INFINITY)
    }

    /// Difficulties as given, `None` for unbounded jobs.
    pub fn nus(&self) -> &[Option<f64>] {
        &self.nus
    }

    /// Expected number of completed jobs under `alloc`.
    pub fn expected_reward(&self, alloc: &Allocation) -> f64 {
        alloc
            .0
            .iter()
            .zip(&self.inv_nus)
            .map(|(&m, &r)| success_prob(m, r))
            .sum()
    }

    /// FNV-1a digest of the canonical JSON form, stable across platforms.
    pub fn digest(&self) -> u64 {
        let json = serde_json::to_string(self).expect("instance serialization is infallible");
        json.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }

    /// Job indices ordered from easiest to hardest; ties keep index order.
    pub fn difficulty_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.num_jobs()).collect();
        order.sort_by(|&a, &b| self.inv_nus[b].total_cmp(&self.inv_nus[a]));
        order
    }
}

/// Resources handed to each job in one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(pub Vec<f64>);

impl Allocation {
    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Checks non-negativity and the unit budget.
    pub fn validate(&self) -> Result<()> {
        for (index, &value) in self.0.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidAllocation { index, value });
            }
        }
        let total = self.total();
        if total > 1.0 + BUDGET_TOLERANCE {
            return Err(Error::BudgetExceeded { total });
        }
        Ok(())
    }
}

/// Per-job success indicators for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<bool>);

impl Observation {
    pub fn successes(&self) -> usize {
        self.0.iter().filter(|&&x| x).count()
    }
}

/// The optimal allocation for known difficulties and the quantities derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalProfile {
    /// `M*` in the instance's original job indexing.
    pub m_star: Allocation,
    /// Number of jobs fully allocated under `M*`.
    pub ell: usize,
    /// Budget left for the overflow job, zero when `ell == K`.
    pub s_star: f64,
    /// Optimal per-step expected reward `ℓ + S*/ν_{ℓ+1}`.
    pub rho_star: f64,
    /// `sort_order[rank]` is the original index of the job with that difficulty rank.
    pub sort_order: Vec<usize>,
    sorted_inv_nus: Vec<f64>,
}

impl OptimalProfile {
    /// `Δ_{j,k} = 1/ν_j − 1/ν_k` over zero-based difficulty ranks.
    pub fn gap(&self, j: usize, k: usize) -> f64 {
        self.sorted_inv_nus[j] - self.sorted_inv_nus[k]
    }

    /// Reciprocal difficulties in rank order.
    pub fn sorted_inv_nus(&self) -> &[f64] {
        &self.sorted_inv_nus
    }
}

/// Greedy fill of the unit budget from the easiest job upward.
pub fn optimal_profile(instance: &ProblemInstance) -> OptimalProfile {
    let k_total = instance.num_jobs();
    let sort_order = instance.difficulty_order();
    let sorted_inv_nus: Vec<f64> = sort_order.iter().map(|&k| instance.inv_nus[k]).collect();

    let mut m_star = vec![0.0; k_total];
    let mut remaining = 1.0_f64;
    let mut ell = 0;
    let mut counting_full = true;
    for (rank, &job) in sort_order.iter().enumerate() {
        let fits = matches!(instance.nus[job], Some(nu) if nu <= remaining + FIT_TOLERANCE);
        let m = match instance.nus[job] {
            Some(nu) if fits => nu,
            _ => remaining,
        };
        m_star[job] = m;
        remaining = (remaining - m).max(0.0);
        if fits && counting_full {
            ell = rank + 1;
        } else {
            counting_full = false;
        }
    }

    let s_star = if ell < k_total {
        m_star[sort_order[ell]]
    } else {
        0.0
    };
    let rho_star = if ell < k_total {
        ell as f64 + s_star * sorted_inv_nus[ell]
    } else {
        ell as f64
    };

    OptimalProfile {
        m_star: Allocation(m_star),
        ell,
        s_star,
        rho_star,
        sort_order,
        sorted_inv_nus,
    }
}

/// Exhaustive search over the simplex grid with spacing `grid_step`.
///
/// Test oracle for [`optimal_profile`]. The reward is non-decreasing in every
/// coordinate, so the last job always takes whatever the others leave.
pub fn brute_force_optimal(instance: &ProblemInstance, grid_step: f64) -> Result<(Allocation, f64)> {
    let k = instance.num_jobs();
    if k > 4 {
        return Err(Error::TooManyJobs(k));
    }
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(Error::InvalidGridStep(grid_step));
    }
    let units = (1.0 / grid_step + 1e-9).floor() as usize;

    let mut best = (vec![0.0; k], f64::NEG_INFINITY);
    let mut counts = vec![0usize; k];
    search(instance.inv_nus(), grid_step, units, 0, &mut counts, &mut best);
    Ok((Allocation(best.0), best.1))
}

fn search(
    inv_nus: &[f64],
    step: f64,
    left: usize,
    depth: usize,
    counts: &mut [usize],
    best: &mut (Vec<f64>, f64),
) {
    let k = inv_nus.len();
    if depth + 1 == k {
        counts[depth] = left;
        let alloc: Vec<f64> = counts.iter().map(|&c| c as f64 * step).collect();
        let reward: f64 = alloc
            .iter()
            .zip(inv_nus)
            .map(|(&m, &r)| success_prob(m, r))
            .sum();
        if reward > best.1 {
            *best = (alloc, reward);
        }
        return;
    }
    for c in 0..=left {
        counts[depth] = c;
        search(inv_nus, step, left - c, depth + 1, counts, best);
    }
}

/// Draws one Bernoulli outcome per job in index order.
pub fn sample_step<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    alloc: &Allocation,
    rng: &mut R,
) -> Result<Observation> {
    if alloc.len() != instance.num_jobs() {
        return Err(Error::JobCountMismatch {
            expected: instance.num_jobs(),
            got: alloc.len(),
        });
    }
    alloc.validate()?;
    let mut out = vec![false; alloc.len()];
    sample_into(instance.inv_nus(), alloc.as_slice(), rng, &mut out);
    Ok(Observation(out))
}

/// Unchecked sampling loop: exactly one uniform draw per job, in index order.
#[inline]
pub(crate) fn sample_into<R: Rng + ?Sized>(
    inv_nus: &[f64],
    alloc: &[f64],
    rng: &mut R,
    out: &mut [bool],
) {
    for ((x, &m), &r) in out.iter_mut().zip(alloc).zip(inv_nus) {
        let u: f64 = rng.random();
        *x = u < success_prob(m, r);
    }
}

/// Pseudo-regret of one step: `ρ* − Σ_k β(M_k/ν_k)`.
pub fn instantaneous_regret(
    profile: &OptimalProfile,
    alloc: &Allocation,
    instance: &ProblemInstance,
) -> f64 {
    profile.rho_star - instance.expected_reward(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inst(nus: &[f64]) -> ProblemInstance {
        ProblemInstance::from_finite(nus, 100, 0).unwrap()
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta(0.0).unwrap(), 0.0);
        assert_eq!(beta(2.5).unwrap(), 1.0);
        assert_abs_diff_eq!(beta(0.4 / 0.6).unwrap(), 0.666_666_666_666_666_6, epsilon = 1e-15);
        assert!(matches!(beta(-0.1), Err(Error::NegativeInput(_))));
        assert!(beta(f64::NAN).is_err());
    }

    #[test]
    fn rejects_bad_instances() {
        assert!(ProblemInstance::from_finite(&[], 10, 0).is_err());
        assert!(ProblemInstance::from_finite(&[0.5], 0, 0).is_err());
        assert!(ProblemInstance::from_finite(&[0.0], 10, 0).is_err());
        assert!(ProblemInstance::from_finite(&[-1.0], 10, 0).is_err());
        assert!(ProblemInstance::from_finite(&[f64::NAN], 10, 0).is_err());
    }

    #[test]
    fn profile_budget_covers_all() {
        let p = optimal_profile(&inst(&[0.4, 0.6]));
        assert_eq!(p.ell, 2);
        assert_eq!(p.s_star, 0.0);
        assert_eq!(p.rho_star, 2.0);
        assert_abs_diff_eq!(p.m_star.0[0], 0.4);
        assert_abs_diff_eq!(p.m_star.0[1], 0.6);
    }

    #[test]
    fn profile_single_over_budget_job() {
        let p = optimal_profile(&inst(&[2.0]));
        assert_eq!(p.ell, 0);
        assert_eq!(p.m_star.0, vec![1.0]);
        assert_eq!(p.s_star, 1.0);
        assert_eq!(p.rho_star, 0.5);
    }

    #[test]
    fn profile_with_overflow_job() {
        let i = inst(&[0.4, 0.9, 2.0]);
        let p = optimal_profile(&i);
        assert_eq!(p.ell, 1);
        assert_abs_diff_eq!(p.m_star.0[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(p.m_star.0[1], 0.6, epsilon = 1e-15);
        assert_eq!(p.m_star.0[2], 0.0);
        assert_abs_diff_eq!(p.s_star, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.rho_star, 1.0 + 0.6 / 0.9, epsilon = 1e-12);
        let (_, brute) = brute_force_optimal(&i, 0.001).unwrap();
        assert!((brute - p.rho_star).abs() <= 3.0 * 0.001 / 0.4);
    }

    #[test]
    fn profile_unsorted_input_maps_back() {
        let p = optimal_profile(&inst(&[2.0, 0.4, 0.9]));
        assert_eq!(p.sort_order, vec![1, 2, 0]);
        assert_abs_diff_eq!(p.m_star.0[1], 0.4);
        assert_abs_diff_eq!(p.m_star.0[2], 0.6, epsilon = 1e-15);
        assert_eq!(p.m_star.0[0], 0.0);
        assert!(p.gap(0, 1) > 0.0 && p.gap(1, 2) > 0.0);
    }

    #[test]
    fn profile_unbounded_job() {
        let i = ProblemInstance::new(&[None, Some(0.5)], 10, 0).unwrap();
        let p = optimal_profile(&i);
        assert_eq!(p.sort_order, vec![1, 0]);
        assert_eq!(p.ell, 1);
        assert_eq!(p.m_star.0, vec![0.5, 0.5]);
        assert_eq!(p.rho_star, 1.0);
    }

    #[test]
    fn profile_ties_are_stable() {
        let p = optimal_profile(&inst(&[0.7, 0.7]));
        assert_eq!(p.sort_order, vec![0, 1]);
        assert_eq!(p.ell, 1);
        assert_eq!(p.gap(0, 1), 0.0);
    }

    #[test]
    fn brute_force_examples() {
        let (m, r) = brute_force_optimal(&inst(&[0.4, 0.6]), 0.01).unwrap();
        assert_abs_diff_eq!(r, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.0[0], 0.4, epsilon = 1e-9);
        let (m, r) = brute_force_optimal(&inst(&[2.0]), 0.01).unwrap();
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(m.0[0], 1.0, epsilon = 1e-9);
        let (_, r) = brute_force_optimal(&inst(&[0.4, 0.9, 2.0]), 0.01).unwrap();
        assert!((r - 1.666_666_666_7).abs() <= 0.01 / 0.4);
    }

    #[test]
    fn brute_force_refuses_large_problems() {
        assert!(matches!(
            brute_force_optimal(&inst(&[1.0; 5]), 0.1),
            Err(Error::TooManyJobs(5))
        ));
        assert!(brute_force_optimal(&inst(&[1.0]), 0.2).is_err());
        assert!(brute_force_optimal(&inst(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn sampling_edge_probabilities() {
        let i = inst(&[0.5, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = sample_step(&i, &Allocation(vec![0.0, 0.3]), &mut rng).unwrap();
            assert_eq!(x.0, vec![false, true]);
        }
    }

    #[test]
    fn sampling_rejects_over_budget() {
        let i = inst(&[0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            sample_step(&i, &Allocation(vec![0.6, 0.5]), &mut rng),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(sample_step(&i, &Allocation(vec![0.5]), &mut rng).is_err());
        assert!(sample_step(&i, &Allocation(vec![-0.1, 0.5]), &mut rng).is_err());
    }

    #[test]
    fn sampling_mean_matches_beta() {
        let i = inst(&[0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let alloc = Allocation(vec![0.25]);
        let draws = 1_000_000;
        let hits = (0..draws)
            .filter(|_| sample_step(&i, &alloc, &mut rng).unwrap().0[0])
            .count();
        let mean = hits as f64 / draws as f64;
        assert!((mean - 0.5).abs() <= 0.002, "mean {mean}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let i = inst(&[0.5, 0.9, 1.3]);
        let alloc = Allocation(vec![0.2, 0.4, 0.4]);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|_| sample_step(&i, &alloc, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn regret_examples() {
        let i = inst(&[0.4, 0.6]);
        let p = optimal_profile(&i);
        assert_eq!(instantaneous_regret(&p, &p.m_star, &i), 0.0);
        assert_abs_diff_eq!(
            instantaneous_regret(&p, &Allocation(vec![0.4, 0.4]), &i),
            1.0 / 3.0,
            epsilon = 1e-12
        );
        let i = inst(&[2.0]);
        let p = optimal_profile(&i);
        assert_eq!(instantaneous_regret(&p, &Allocation(vec![0.0]), &i), 0.5);
    }

    #[test]
    fn instance_json_roundtrip_with_unbounded() {
        let json = r#"{"nus":[0.4,null],"horizon":50,"seed":9}"#;
        let i: ProblemInstance = serde_json::from_str(json).unwrap();
        assert_eq!(i.inv_nus(), &[2.5, 0.0]);
        assert_eq!(i.nu(1), f64::INFINITY);
        assert_eq!(serde_json::to_string(&i).unwrap(), json);
        assert!(serde_json::from_str::<ProblemInstance>(r#"{"nus":[-1],"horizon":5}"#).is_err());
    }
}
