//! Forecasts of the next interevent time.
//!
//! Immediately after an event the waiting time to the next one is a mixture
//! of the state exponentials weighted by `P(X_{t+1} = s | y_1..y_t)`. When
//! `w` days have already passed without an event, each weight is multiplied
//! by the state's survival `exp(-w / lambda_s)` and renormalized; by
//! memorylessness the remaining wait is again the same exponential mixture.

use serde::{Deserialize, Serialize};

use crate::catalog::ObservationSequence;
use crate::error::{Error, Result};
use crate::hmm::{ForwardFilter, HmmParams};
use crate::num::{normalize_log_weights, Real};

/// Mixture weights over the state of the next event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct StateWeights<T> {
    pub weights: Vec<T>,
    /// Days elapsed since the most recent event.
    pub elapsed: T,
    /// Number of interevent times conditioned on.
    pub history_len: usize,
}

impl<T: Real> StateWeights<T> {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|&w| !(w >= T::zero())) {
            return Err(Error::Domain("state weights must be non-negative".into()));
        }
        let sum: T = self.weights.iter().copied().sum();
        if (sum - T::one()).abs() > T::lit(1e-10).max(T::sum_tolerance()) {
            return Err(Error::Domain(format!("state weights sum to {sum}")));
        }
        if !(self.elapsed >= T::zero()) {
            return Err(Error::Domain("elapsed time must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct ForecastQuery<T> {
    /// Forecast window `N` in days.
    pub horizon_days: T,
    /// Restrict to events in this region label.
    pub region: Option<usize>,
}

impl<T: Real> ForecastQuery<T> {
    pub fn new(horizon_days: T) -> Self {
        Self { horizon_days, region: None }
    }

    pub fn in_region(horizon_days: T, region: usize) -> Self {
        Self { horizon_days, region: Some(region) }
    }
}

/// Weights right after the last observation: `c_s = sum_r fhat_r(t) a_rs`.
pub fn post_event_weights<T: Real>(params: &HmmParams<T>, obs: &ObservationSequence<T>) -> Result<StateWeights<T>> {
    params.check_observations(obs)?;
    if obs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut filter = ForwardFilter::new(params);
    for t in 0..obs.len() {
        filter.push(obs.interevent_times[t], obs.region(t))?;
    }
    Ok(weights_from_filter(&filter, T::zero()))
}

/// Weights from an online filter, at elapsed time zero.
pub fn weights_from_filter<T: Real>(filter: &ForwardFilter<'_, T>, elapsed: T) -> StateWeights<T> {
    let mut weights = filter.predicted();
    let sum: T = weights.iter().copied().sum();
    weights.iter_mut().for_each(|w| *w = *w / sum);
    StateWeights { weights, elapsed, history_len: filter.len() }
}

/// Reweights post-event weights by the survival of each state over `elapsed`
/// days, in log space.
pub fn scheduled_weights<T: Real>(
    base: &StateWeights<T>,
    params: &HmmParams<T>,
    elapsed: T,
) -> Result<StateWeights<T>> {
    if !(elapsed >= T::zero()) || !elapsed.is_finite() {
        return Err(Error::Domain(format!("elapsed time {elapsed} must be finite and non-negative")));
    }
    check_dims(base, params)?;
    if elapsed == T::zero() {
        return Ok(StateWeights { elapsed, ..base.clone() });
    }
    let log_w: Vec<T> = base
        .weights
        .iter()
        .zip(&params.lambda)
        .map(|(&c, &l)| if c > T::zero() { c.ln() - elapsed / l } else { T::neg_infinity() })
        .collect();
    let weights = normalize_log_weights(&log_w).ok_or_else(|| Error::Domain("state weights are all zero".into()))?;
    Ok(StateWeights { weights, elapsed, history_len: base.history_len })
}

fn check_dims<T: Real>(w: &StateWeights<T>, params: &HmmParams<T>) -> Result<()> {
    if w.weights.len() != params.n_states {
        return Err(Error::Configuration(format!("{} weights for a {}-state model", w.weights.len(), params.n_states)));
    }
    Ok(())
}

fn region_factor<T: Real>(params: &HmmParams<T>, state: usize, region: Option<usize>) -> Result<T> {
    match (region, &params.region_dist) {
        (None, _) => Ok(T::one()),
        (Some(_), None) => Err(Error::Configuration("region given for a time-only model".into())),
        (Some(v), Some(q)) => {
            let row = &q[state];
            if v == 0 || v > row.len() {
                return Err(Error::Configuration(format!("region label {v} outside 1..={}", row.len())));
            }
            Ok(row[v - 1])
        }
    }
}

/// Probability of an event within the next `horizon_days` (in the given
/// region, if any). Without a region the forecast covers every region.
pub fn forecast_probability<T: Real>(
    weights: &StateWeights<T>,
    params: &HmmParams<T>,
    query: &ForecastQuery<T>,
) -> Result<T> {
    check_dims(weights, params)?;
    if !(query.horizon_days > T::zero()) {
        return Err(Error::Domain("forecast horizon must be positive".into()));
    }
    let mut p = T::zero();
    for (s, &w) in weights.weights.iter().enumerate() {
        let within = -(-query.horizon_days / params.lambda[s]).exp_m1();
        p = p + w * within * region_factor(params, s, query.region)?;
    }
    Ok(p.min(T::one()))
}

/// Density of the remaining waiting time at `y` days (joint with the region
/// label when `region` is given).
pub fn forecast_density<T: Real>(
    weights: &StateWeights<T>,
    params: &HmmParams<T>,
    y: T,
    region: Option<usize>,
) -> Result<T> {
    check_dims(weights, params)?;
    if !(y >= T::zero()) {
        return Err(Error::Domain(format!("waiting time {y} is negative")));
    }
    let mut d = T::zero();
    for (s, &w) in weights.weights.iter().enumerate() {
        let l = params.lambda[s];
        d = d + w * (-y / l).exp() / l * region_factor(params, s, region)?;
    }
    Ok(d)
}

/// Mean and variance of the remaining waiting time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct WaitingMoments<T> {
    /// `sum_s d_s lambda_s`.
    pub mean: T,
    /// Variance of the exponential mixture,
    /// `2 sum_s d_s lambda_s^2 - mean^2`.
    pub variance: T,
    /// `sum_s d_s lambda_s^2`: the weighted average of the per-state
    /// variances. Equals `variance` only when one weight is 1; kept for
    /// comparison with tables that report this quantity.
    pub naive_variance: T,
}

impl<T: Real> WaitingMoments<T> {
    /// Whether the two variance figures differ by more than `rel_tol`.
    pub fn naive_differs(&self, rel_tol: T) -> bool {
        (self.variance - self.naive_variance).abs() > rel_tol * self.variance.abs()
    }
}

pub fn waiting_time_moments<T: Real>(weights: &StateWeights<T>, params: &HmmParams<T>) -> Result<WaitingMoments<T>> {
    check_dims(weights, params)?;
    let mean: T = weights.weights.iter().zip(&params.lambda).map(|(&d, &l)| d * l).sum();
    let second: T = weights.weights.iter().zip(&params.lambda).map(|(&d, &l)| d * l * l).sum();
    let variance = (T::lit(2.0) * second - mean * mean).max(T::zero());
    Ok(WaitingMoments { mean, variance, naive_variance: second })
}

/// Expected remaining wait as a function of elapsed time.
pub fn expected_wait_curve<T: Real>(
    base: &StateWeights<T>,
    params: &HmmParams<T>,
    w_grid: &[T],
) -> Result<Vec<(T, T)>> {
    if w_grid.iter().any(|&w| !(w >= T::zero())) {
        return Err(Error::Domain("elapsed-time grid must be non-negative".into()));
    }
    if w_grid.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::Domain("elapsed-time grid must be ascending".into()));
    }
    w_grid
        .iter()
        .map(|&w| {
            let d = scheduled_weights(base, params, w)?;
            Ok((w, waiting_time_moments(&d, params)?.mean))
        })
        .collect()
}
