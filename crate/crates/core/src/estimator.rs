//! Weighted reciprocal estimator with data-dependent confidence intervals.
//!
//! One [`EstimatorState`] tracks a single job. All interval state lives in
//! reciprocal space: `lower_recip` is `1/ν̲_t` and `upper_recip` is `1/ν̄_t`,
//! so the initial upper bound `ν̄_0 = ∞` is just `0.0`. Each update is O(1).
//!
//! Per step, with `U` the upper reciprocal before the update:
//!
//! ```text
//!   w      = 1 / (1 - M·U)                 (1 in unweighted mode)
//!   1/ν̂    = Σ w X / Σ w M
//!   V̂²     = Σ w M · L_prev
//!   ε̃      = f(max w, V̂², δ) / Σ w M
//!   L      = min{L_prev, 1/ν̂ + ε̃}
//!   U      = max{U_prev, 1/ν̂ − ε̃}
//! ```

use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Weights are never allowed past this value.
pub const MAX_WEIGHT: f64 = 1e12;

/// Relative tolerance for treating an allocation as equal to the lower bound.
pub const FULL_ALLOCATION_TOLERANCE: f64 = 1e-12;

/// `δ = (nK)^{-2}`, the default confidence parameter for a horizon and job count.
pub fn default_delta(horizon: u64, num_jobs: usize) -> f64 {
    let nk = horizon as f64 * num_jobs as f64;
    1.0 / (nk * nk)
}

/// Closed-form Bernstein-style radius `f(R, V², δ)`.
///
/// Strictly increasing in both `r_max` and `v2`. Natural logarithm throughout.
pub fn confidence_radius(r_max: f64, v2: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    let r1 = r_max + 1.0;
    let v1 = v2 + 1.0;
    let delta0 = delta / (3.0 * r1 * r1 * v1 * v1);
    let log_term = (2.0 / delta0).ln();
    let a = r1 / 3.0 * log_term;
    Ok(a + (2.0 * v1 * log_term + a * a).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Weighted,
    /// Every weight pinned to 1; the plain ratio `Σ X / Σ M`.
    Unweighted,
}

/// Confidence state for one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    #[serde(rename = "L")]
    lower_recip: f64,
    #[serde(rename = "U")]
    upper_recip: f64,
    sum_wx: f64,
    sum_wm: f64,
    r_max: f64,
    t: u64,
    delta: f64,
    #[serde(rename = "T")]
    full_steps: u64,
    #[serde(with = "alpha_counts")]
    u_alpha: Vec<(f64, u64)>,
    #[serde(default)]
    weighting: Weighting,
    #[serde(default)]
    weight_capped: bool,
    #[serde(default)]
    collapsed: bool,
}

impl EstimatorState {
    /// Fresh state from a lower bound `ν̲_0 > 0` on the difficulty.
    pub fn new(initial_lower: f64, delta: f64, weighting: Weighting, alphas: &[f64]) -> Result<Self> {
        if !(initial_lower.is_finite() && initial_lower > 0.0) {
            return Err(Error::InvalidLowerBound {
                index: 0,
                value: initial_lower,
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidDelta(delta));
        }
        Ok(Self {
            lower_recip: 1.0 / initial_lower,
            upper_recip: 0.0,
            sum_wx: 0.0,
            sum_wm: 0.0,
            r_max: 0.0,
            t: 0,
            delta,
            full_steps: 0,
            u_alpha: alphas.iter().map(|&a| (a, 0)).collect(),
            weighting,
            weight_capped: false,
            collapsed: false,
        })
    }

    /// `1/ν̲_t`.
    pub fn lower_recip(&self) -> f64 {
        self.lower_recip
    }

    /// `1/ν̄_t`; zero while the upper bound is infinite.
    pub fn upper_recip(&self) -> f64 {
        self.upper_recip
    }

    /// The optimistic difficulty estimate `ν̲_t`.
    pub fn lower_bound(&self) -> f64 {
        1.0 / self.lower_recip
    }

    /// `ν̄_t`, infinite until the first informative failure.
    pub fn upper_bound(&self) -> f64 {
        if self.upper_recip > 0.0 {
            1.0 / self.upper_recip
        } else {
            f64::INFINITY
        }
    }

    /// Interval width in reciprocal space, `ε_t = 1/ν̲_t − 1/ν̄_t`.
    pub fn width(&self) -> f64 {
        self.lower_recip - self.upper_recip
    }

    /// Weighted estimate of `1/ν`, if any resources were observed.
    pub fn estimate_recip(&self) -> Option<f64> {
        (self.sum_wm > 0.0).then(|| self.sum_wx / self.sum_wm)
    }

    pub fn sum_wx(&self) -> f64 {
        self.sum_wx
    }

    pub fn sum_wm(&self) -> f64 {
        self.sum_wm
    }

    /// `R_t`, the largest weight seen so far.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// `T(t)`: steps where the allocation equalled the running lower bound.
    pub fn full_steps(&self) -> u64 {
        self.full_steps
    }

    /// `U_α(t)` for every tracked `α`, in configuration order.
    pub fn alpha_counts(&self) -> &[(f64, u64)] {
        &self.u_alpha
    }

    pub fn alpha_count(&self, alpha: f64) -> Option<u64> {
        self.u_alpha.iter().find(|(a, _)| *a == alpha).map(|&(_, c)| c)
    }

    /// Set once a weight had to be capped at [`MAX_WEIGHT`].
    pub fn weight_capped(&self) -> bool {
        self.weight_capped
    }

    /// Set once the interval clamps crossed and were collapsed to a point.
    pub fn collapsed(&self) -> bool {
        self.collapsed
    }

    /// `w = 1/(1 − m/ν̄_{t−1})` against the current upper bound.
    pub fn weight(&self, m: f64) -> Result<f64> {
        if self.weighting == Weighting::Unweighted {
            return Ok(1.0);
        }
        let load = m * self.upper_recip;
        if load >= 1.0 - 1e-12 {
            return Err(Error::WeightOverflow {
                m,
                upper: self.upper_recip,
            });
        }
        Ok(1.0 / (1.0 - load))
    }

    /// `true` when `m` equals `ν̲_{t−1}` up to relative tolerance.
    pub fn is_full_allocation(&self, m: f64) -> bool {
        let lower = self.lower_bound();
        m > 0.0 && (m - lower).abs() <= FULL_ALLOCATION_TOLERANCE * lower
    }

    /// Feeds one allocation and its outcome.
    ///
    /// `m` may be zero (a job skipped this step); the interval is then
    /// recomputed from unchanged sums with the tighter current lower bound.
    pub fn update(&mut self, m: f64, x: bool) -> Result<()> {
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::InvalidAllocation { index: 0, value: m });
        }
        let lower = self.lower_bound();
        if m > lower * (1.0 + FULL_ALLOCATION_TOLERANCE) {
            return Err(Error::OverAllocation { m, lower });
        }

        let w = match self.weight(m) {
            Ok(w) => w.min(MAX_WEIGHT),
            Err(_) => {
                self.weight_capped = true;
                MAX_WEIGHT
            }
        };
        let lower_prev = self.lower_recip;
        let upper_prev = self.upper_recip;

        if self.is_full_allocation(m) {
            self.full_steps += 1;
        }
        for (alpha, count) in &mut self.u_alpha {
            if m >= *alpha {
                *count += 1;
            }
        }

        if x {
            self.sum_wx += w;
        }
        self.sum_wm += w * m;
        self.r_max = self.r_max.max(w);
        self.t += 1;

        if self.sum_wm <= 0.0 {
            return Ok(());
        }
        let estimate = self.sum_wx / self.sum_wm;
        let v2 = self.sum_wm * lower_prev;
        let radius = confidence_radius(self.r_max, v2, self.delta)? / self.sum_wm;

        let lower = lower_prev.min(estimate + radius);
        let upper = upper_prev.max(estimate - radius);
        if upper > lower {
            let point = estimate.clamp(upper_prev, lower_prev);
            self.lower_recip = point;
            self.upper_recip = point;
            self.collapsed = true;
        } else {
            self.lower_recip = lower;
            self.upper_recip = upper;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("estimator serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `U_α` counts as a JSON object keyed by `α`, kept in configuration order.
mod alpha_counts {
    use super::*;

    pub fn serialize<S: Serializer>(counts: &[(f64, u64)], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(counts.len()))?;
        for (alpha, count) in counts {
            map.serialize_entry(&alpha.to_string(), count)?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(f64, u64)>, D::Error> {
        struct CountsVisitor;

        impl<'de> Visitor<'de> for CountsVisitor {
            type Value = Vec<(f64, u64)>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from alpha to count")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((key, count)) = access.next_entry::<String, u64>()? {
                    let alpha = key
                        .parse::<f64>()
                        .map_err(|_| serde::de::Error::custom(format!("bad alpha key {key:?}")))?;
                    out.push((alpha, count));
                }
                Ok(out)
            }
        }

        d.deserialize_map(CountsVisitor)
    }
}
