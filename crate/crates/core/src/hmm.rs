//! HMM parameters with exponential (optionally exponential x region)
//! emissions, and the rescaled forward/backward recursions.
//!
//! The forward recursion stores `f_s(t) / P(y_1..y_t)` together with the
//! one-step predictive normalizers `P(y_t | y_1..y_{t-1})`; the backward
//! variables are divided by the product of the normalizers still ahead of
//! them. With this convention `sum_s fwd[t][s] * bwd[t][s] == 1` for every
//! `t`, and state posteriors are plain products of scaled quantities.

use serde::{Deserialize, Serialize};

use crate::catalog::ObservationSequence;
use crate::error::{Error, Result};
use crate::num::Real;

/// Parameters of an HMM with state-specific exponential interevent times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct HmmParams<T> {
    pub n_states: usize,
    /// Initial state distribution.
    pub pi: Vec<T>,
    /// Row-stochastic transition matrix, `trans[r][s] = P(s | r)`.
    pub trans: Vec<Vec<T>>,
    /// Exponential mean (days) per state.
    pub lambda: Vec<T>,
    /// Per-state distribution over region labels `1..=R` (column `v - 1`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_dist: Option<Vec<Vec<T>>>,
}

fn check_prob_vector<T: Real>(what: &str, v: &[T]) -> Result<()> {
    if v.iter().any(|&p| !(p >= T::zero()) || !p.is_finite()) {
        return Err(Error::InvalidParams(format!("{what} has a negative or non-finite entry")));
    }
    let sum: T = v.iter().copied().sum();
    if (sum - T::one()).abs() > T::sum_tolerance() {
        return Err(Error::InvalidParams(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

fn normalize_in_place<T: Real>(v: &mut [T]) {
    let sum: T = v.iter().copied().sum();
    if sum > T::zero() {
        v.iter_mut().for_each(|p| *p = *p / sum);
    }
}

impl<T: Real> HmmParams<T> {
    /// Builds and validates a time-only model.
    pub fn new(pi: Vec<T>, trans: Vec<Vec<T>>, lambda: Vec<T>) -> Result<Self> {
        let p = Self { n_states: lambda.len(), pi, trans, lambda, region_dist: None };
        p.validate()?;
        Ok(p)
    }

    /// Builds and validates a model with per-state region distributions.
    pub fn with_regions(pi: Vec<T>, trans: Vec<Vec<T>>, lambda: Vec<T>, region_dist: Vec<Vec<T>>) -> Result<Self> {
        let p = Self { n_states: lambda.len(), pi, trans, lambda, region_dist: Some(region_dist) };
        p.validate()?;
        Ok(p)
    }

    /// Number of region labels, if the model has a region component.
    pub fn n_regions(&self) -> Option<usize> {
        self.region_dist.as_ref().and_then(|q| q.first().map(Vec::len))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states;
        if n == 0 {
            return Err(Error::InvalidParams("model needs at least one state".into()));
        }
        if self.pi.len() != n || self.lambda.len() != n || self.trans.len() != n {
            return Err(Error::InvalidParams(format!("dimension mismatch for {n} states")));
        }
        check_prob_vector("pi", &self.pi)?;
        for (r, row) in self.trans.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParams(format!("transition row {} has {} entries", r + 1, row.len())));
            }
            check_prob_vector(&format!("transition row {}", r + 1), row)?;
        }
        if let Some(s) = self.lambda.iter().position(|&l| !(l > T::zero()) || !l.is_finite()) {
            return Err(Error::InvalidParams(format!("mean of state {} must be positive", s + 1)));
        }
        if let Some(q) = &self.region_dist {
            if q.len() != n {
                return Err(Error::InvalidParams("region distribution needs one row per state".into()));
            }
            let r = q[0].len();
            if r == 0 {
                return Err(Error::InvalidParams("region distribution has no regions".into()));
            }
            for (s, row) in q.iter().enumerate() {
                if row.len() != r {
                    return Err(Error::InvalidParams("region distribution rows differ in length".into()));
                }
                check_prob_vector(&format!("region distribution of state {}", s + 1), row)?;
            }
        }
        Ok(())
    }

    /// Rescales `pi` and every row of `trans` and `region_dist` to sum to
    /// one, for parameter tables printed to limited precision.
    pub fn normalized(mut self) -> Self {
        normalize_in_place(&mut self.pi);
        self.trans.iter_mut().for_each(|r| normalize_in_place(r));
        if let Some(q) = &mut self.region_dist {
            q.iter_mut().for_each(|r| normalize_in_place(r));
        }
        self
    }

    /// Relabels states so that new state `i` is old state `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let n = self.n_states;
        assert_eq!(order.len(), n, "permutation length");
        Self {
            n_states: n,
            pi: order.iter().map(|&o| self.pi[o]).collect(),
            trans: order.iter().map(|&r| order.iter().map(|&s| self.trans[r][s]).collect()).collect(),
            lambda: order.iter().map(|&o| self.lambda[o]).collect(),
            region_dist: self.region_dist.as_ref().map(|q| order.iter().map(|&o| q[o].clone()).collect()),
        }
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> HmmParams<U> {
        let c = |x: &T| U::from_f64(x.as_f64()).expect("castable");
        let cv = |v: &Vec<T>| v.iter().map(c).collect::<Vec<U>>();
        HmmParams {
            n_states: self.n_states,
            pi: cv(&self.pi),
            trans: self.trans.iter().map(cv).collect(),
            lambda: cv(&self.lambda),
            region_dist: self.region_dist.as_ref().map(|q| q.iter().map(cv).collect()),
        }
    }

    pub(crate) fn check_observations(&self, obs: &ObservationSequence<T>) -> Result<()> {
        match (&self.region_dist, &obs.regions) {
            (Some(_), None) => {
                Err(Error::Configuration("model has a region component but observations carry no regions".into()))
            }
            (None, Some(_)) => {
                Err(Error::Configuration("observations carry regions but the model has no region component".into()))
            }
            (Some(_), Some(regs)) => {
                let r = self.n_regions().unwrap_or(0);
                match regs.iter().find(|&&v| v == 0 || v > r) {
                    Some(v) => Err(Error::Configuration(format!("region label {v} outside 1..={r}"))),
                    None => Ok(()),
                }
            }
            (None, None) => Ok(()),
        }
    }
}

/// Exponential density of `state` at `obs`, times the region probability
/// when `region` is given.
pub fn emission_density<T: Real>(params: &HmmParams<T>, state: usize, obs: T, region: Option<usize>) -> Result<T> {
    if !(obs >= T::zero()) {
        return Err(Error::Domain(format!("interevent time {obs} is negative")));
    }
    let lambda = params.lambda[state];
    let time_part = (-obs / lambda).exp() / lambda;
    match (region, &params.region_dist) {
        (None, None) => Ok(time_part),
        (Some(v), Some(q)) => {
            let row = &q[state];
            if v == 0 || v > row.len() {
                return Err(Error::Configuration(format!("region label {v} outside 1..={}", row.len())));
            }
            Ok(time_part * row[v - 1])
        }
        (Some(_), None) => Err(Error::Configuration("region given for a time-only model".into())),
        (None, Some(_)) => Err(Error::Configuration("region required by a region model".into())),
    }
}

/// Emission density of every state at observation `t`, skipping the
/// argument checks [`emission_density`] performs.
pub(crate) fn emission_row<T: Real>(params: &HmmParams<T>, y: T, region: Option<usize>, out: &mut [T]) {
    for (s, o) in out.iter_mut().enumerate() {
        let lambda = params.lambda[s];
        let mut p = (-y / lambda).exp() / lambda;
        if let (Some(v), Some(q)) = (region, &params.region_dist) {
            p = p * q[s][v - 1];
        }
        *o = p;
    }
}

/// Scaled forward/backward variables for one `(params, observations)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Trellis<T> {
    /// `f_s(t) / P(y_1..y_t)`; rows sum to one.
    pub scaled_forward: Vec<Vec<T>>,
    /// `b_s(t) / prod_{k>t} normalizers[k]`.
    pub scaled_backward: Vec<Vec<T>>,
    /// `P(y_t | y_1..y_{t-1})`.
    pub normalizers: Vec<T>,
    pub log_likelihood: T,
}

/// Online forward filter: feeds observations one at a time and keeps the
/// normalized forward row and running log-likelihood.
#[derive(Debug, Clone)]
pub struct ForwardFilter<'a, T> {
    params: &'a HmmParams<T>,
    row: Vec<T>,
    scratch: Vec<T>,
    log_likelihood: T,
    steps: usize,
}

impl<'a, T: Real> ForwardFilter<'a, T> {
    pub fn new(params: &'a HmmParams<T>) -> Self {
        let n = params.n_states;
        Self { params, row: vec![T::zero(); n], scratch: vec![T::zero(); n], log_likelihood: T::zero(), steps: 0 }
    }

    /// Number of observations absorbed so far.
    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    /// `P(X_t = s | y_1..y_t)` after the last pushed observation.
    pub fn filtered(&self) -> &[T] {
        &self.row
    }

    pub fn log_likelihood(&self) -> T {
        self.log_likelihood
    }

    /// Predictive distribution of the next state, `P(X_{t+1} = s | y_1..y_t)`.
    /// Before any observation this is the initial distribution.
    pub fn predicted(&self) -> Vec<T> {
        if self.steps == 0 {
            return self.params.pi.clone();
        }
        let n = self.params.n_states;
        let mut out = vec![T::zero(); n];
        for (r, &f) in self.row.iter().enumerate() {
            if f == T::zero() {
                continue;
            }
            for (s, o) in out.iter_mut().enumerate() {
                *o = *o + f * self.params.trans[r][s];
            }
        }
        out
    }

    /// Absorbs one observation and returns its normalizer.
    pub fn push(&mut self, y: T, region: Option<usize>) -> Result<T> {
        if !(y >= T::zero()) {
            return Err(Error::Domain(format!("interevent time {y} is negative")));
        }
        let mut emis = std::mem::take(&mut self.scratch);
        emission_row(self.params, y, region, &mut emis);
        let prior = self.predicted();
        let mut total = T::zero();
        for ((r, &p), &e) in self.row.iter_mut().zip(&prior).zip(&emis) {
            *r = p * e;
            total = total + *r;
        }
        self.scratch = emis;
        self.steps += 1;
        if !(total > T::zero()) || !total.is_finite() {
            return Err(Error::ImpossibleObservation { t: self.steps });
        }
        self.row.iter_mut().for_each(|r| *r = *r / total);
        self.log_likelihood = self.log_likelihood + total.ln();
        Ok(total)
    }
}

/// Rescaled forward-backward pass.
pub fn forward_backward<T: Real>(params: &HmmParams<T>, obs: &ObservationSequence<T>) -> Result<Trellis<T>> {
    params.check_observations(obs)?;
    let len = obs.len();
    if len == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = params.n_states;

    let mut emissions = vec![vec![T::zero(); n]; len];
    let mut filter = ForwardFilter::new(params);
    let mut scaled_forward = Vec::with_capacity(len);
    let mut normalizers = Vec::with_capacity(len);
    for t in 0..len {
        let (y, v) = (obs.interevent_times[t], obs.region(t));
        emission_row(params, y, v, &mut emissions[t]);
        normalizers.push(filter.push(y, v)?);
        scaled_forward.push(filter.filtered().to_vec());
    }

    let mut scaled_backward = vec![vec![T::one(); n]; len];
    for t in (0..len - 1).rev() {
        let c = normalizers[t + 1];
        let (head, tail) = scaled_backward.split_at_mut(t + 1);
        let next = &tail[0];
        for (s, b) in head[t].iter_mut().enumerate() {
            let mut acc = T::zero();
            for r in 0..n {
                acc = acc + params.trans[s][r] * emissions[t + 1][r] * next[r];
            }
            *b = acc / c;
        }
    }

    Ok(Trellis { scaled_forward, scaled_backward, normalizers, log_likelihood: filter.log_likelihood() })
}

/// State and transition posteriors given all observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Posteriors<T> {
    /// `gamma[t][s] = P(X_t = s | O)`.
    pub gamma: Vec<Vec<T>>,
    /// `eta[t][r][s] = P(X_t = r, X_{t+1} = s | O)`, for `t < L - 1`.
    pub eta: Vec<Vec<Vec<T>>>,
}

pub fn posteriors<T: Real>(
    params: &HmmParams<T>,
    obs: &ObservationSequence<T>,
    trellis: &Trellis<T>,
) -> Result<Posteriors<T>> {
    params.check_observations(obs)?;
    let len = obs.len();
    let n = params.n_states;
    if trellis.scaled_forward.len() != len {
        return Err(Error::Configuration("trellis does not match the observation sequence".into()));
    }
    let gamma: Vec<Vec<T>> = trellis
        .scaled_forward
        .iter()
        .zip(&trellis.scaled_backward)
        .map(|(f, b)| f.iter().zip(b).map(|(&x, &y)| x * y).collect())
        .collect();

    let mut emis = vec![T::zero(); n];
    let mut eta = Vec::with_capacity(len.saturating_sub(1));
    for t in 0..len.saturating_sub(1) {
        emission_row(params, obs.interevent_times[t + 1], obs.region(t + 1), &mut emis);
        let c = trellis.normalizers[t + 1];
        let fwd = &trellis.scaled_forward[t];
        let bwd = &trellis.scaled_backward[t + 1];
        let slice: Vec<Vec<T>> =
            (0..n).map(|r| (0..n).map(|s| fwd[r] * params.trans[r][s] * emis[s] * bwd[s] / c).collect()).collect();
        eta.push(slice);
    }
    Ok(Posteriors { gamma, eta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> HmmParams<f64> {
        HmmParams::new(vec![0.5, 0.5], vec![vec![0.7, 0.3], vec![0.2, 0.8]], vec![1.0, 2.0]).unwrap()
    }

    /// Unscaled forward recursion, as printed: direct products of densities.
    fn unscaled_log_likelihood(p: &HmmParams<f64>, ys: &[f64]) -> f64 {
        let n = p.n_states;
        let dens = |s: usize, y: f64| (-y / p.lambda[s]).exp() / p.lambda[s];
        let mut f: Vec<f64> = (0..n).map(|s| dens(s, ys[0]) * p.pi[s]).collect();
        for &y in &ys[1..] {
            f = (0..n).map(|s| (0..n).map(|r| f[r] * p.trans[r][s]).sum::<f64>() * dens(s, y)).collect();
        }
        f.iter().sum::<f64>().ln()
    }

    #[test]
    fn density_values() {
        let p = HmmParams::<f64>::new(vec![1.0], vec![vec![1.0]], vec![1.4]).unwrap();
        assert!((emission_density(&p, 0, 0.0, None).unwrap() - 1.0 / 1.4).abs() < 1e-15);
        let p = HmmParams::new(vec![1.0], vec![vec![1.0]], vec![21.1]).unwrap();
        let d = emission_density(&p, 0, 21.1, None).unwrap();
        assert!((d - (-1f64).exp() / 21.1).abs() < 1e-15);
        assert!((d - 0.017435).abs() < 1e-6);
        let p = HmmParams::with_regions(vec![1.0], vec![vec![1.0]], vec![2.0], vec![vec![0.88, 0.12]]).unwrap();
        let d = emission_density(&p, 0, 2.0, Some(2)).unwrap();
        assert!((d - 0.5 * (-1f64).exp() * 0.12).abs() < 1e-15);
        assert!((d - 0.022073).abs() < 1e-6);
    }

    #[test]
    fn density_errors() {
        let p = two_state();
        assert!(matches!(emission_density(&p, 0, -1.0, None), Err(Error::Domain(_))));
        assert!(matches!(emission_density(&p, 0, 1.0, Some(1)), Err(Error::Configuration(_))));
    }

    #[test]
    fn single_step_forward() {
        let p = HmmParams::new(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![1.0, 2.0]).unwrap();
        let obs = ObservationSequence::new(vec![1.0]);
        let tr = forward_backward(&p, &obs).unwrap();
        let f1 = 0.5 * (-1f64).exp();
        let f2 = 0.25 * (-0.5f64).exp();
        assert!((f1 - 0.183940).abs() < 1e-6 && (f2 - 0.151633).abs() < 1e-6);
        assert!((tr.normalizers[0] - (f1 + f2)).abs() < 1e-15);
        assert!((tr.log_likelihood - (f1 + f2).ln()).abs() < 1e-15);
        assert!((tr.log_likelihood - 0.335573f64.ln()).abs() < 1e-5);
        assert!((tr.scaled_forward[0][0] - f1 / (f1 + f2)).abs() < 1e-15);
    }

    #[test]
    fn single_state_is_iid_exponential() {
        let p = HmmParams::new(vec![1.0], vec![vec![1.0]], vec![3.0]).unwrap();
        let ys = vec![0.5, 2.0, 7.0, 0.0, 1.25];
        let tr = forward_backward(&p, &ObservationSequence::new(ys.clone())).unwrap();
        let direct: f64 = ys.iter().map(|y| (-(y / 3.0)) - 3f64.ln()).sum();
        assert!((tr.log_likelihood - direct).abs() < 1e-12);
        let post = posteriors(&p, &ObservationSequence::new(ys), &tr).unwrap();
        assert!(post.gamma.iter().all(|g| (g[0] - 1.0).abs() < 1e-12));
        assert!(post.eta.iter().all(|e| (e[0][0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn scaled_matches_unscaled() {
        let p = two_state();
        let ys: Vec<f64> = (0..20).map(|i| 0.3 + (i as f64 * 1.7) % 5.0).collect();
        let tr = forward_backward(&p, &ObservationSequence::new(ys.clone())).unwrap();
        assert!((tr.log_likelihood - unscaled_log_likelihood(&p, &ys)).abs() < 1e-9);
        let sum_log: f64 = tr.normalizers.iter().map(|c| c.ln()).sum();
        assert!((sum_log - tr.log_likelihood).abs() < 1e-12);
    }

    #[test]
    fn forward_backward_consistency() {
        let p = two_state();
        let ys: Vec<f64> = (0..40).map(|i| (i as f64 * 2.3) % 7.0).collect();
        let tr = forward_backward(&p, &ObservationSequence::new(ys)).unwrap();
        for (f, b) in tr.scaled_forward.iter().zip(&tr.scaled_backward) {
            let dot: f64 = f.iter().zip(b).map(|(x, y)| x * y).sum();
            assert!((dot - 1.0).abs() < 1e-9);
            assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn long_sequences_do_not_underflow() {
        let p = HmmParams::new(vec![0.0, 1.0], vec![vec![0.446, 0.554], vec![0.040, 0.960]], vec![1.4, 21.1]).unwrap();
        let ys: Vec<f64> = (0..5000).map(|i| ((i * 37) % 61) as f64).collect();
        let tr = forward_backward(&p, &ObservationSequence::new(ys)).unwrap();
        assert!(tr.log_likelihood.is_finite());
        assert!(tr.log_likelihood < -1000.0);
    }

    #[test]
    fn impossible_observation_names_step() {
        let p = HmmParams::with_regions(
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![1.0, 2.0],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
        )
        .unwrap();
        let obs = ObservationSequence::with_regions(vec![1.0, 2.0, 3.0], vec![1, 2, 3]);
        assert!(matches!(forward_backward(&p, &obs), Err(Error::ImpossibleObservation { t: 3 })));
    }

    #[test]
    fn zero_transitions_allowed() {
        let p = HmmParams::<f64>::new(vec![1.0, 0.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 10.0]).unwrap();
        let obs = ObservationSequence::new(vec![0.5, 12.0, 0.2, 9.0]);
        let tr = forward_backward(&p, &obs).unwrap();
        let post = posteriors(&p, &obs, &tr).unwrap();
        assert!((post.gamma[1][1] - 1.0).abs() < 1e-12);
        assert!(post.eta[0][0][0].abs() < 1e-15);
    }

    #[test]
    fn posterior_normalization() {
        let p = two_state();
        let obs = ObservationSequence::new(vec![0.1, 3.0, 0.4, 6.0, 2.2, 0.05]);
        let tr = forward_backward(&p, &obs).unwrap();
        let post = posteriors(&p, &obs, &tr).unwrap();
        for g in &post.gamma {
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        for (t, e) in post.eta.iter().enumerate() {
            let total: f64 = e.iter().flatten().sum();
            assert!((total - 1.0).abs() < 1e-10);
            for r in 0..2 {
                assert!((e[r].iter().sum::<f64>() - post.gamma[t][r]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(HmmParams::new(vec![0.5, 0.6], vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).is_err());
        assert!(HmmParams::new(vec![0.5, 0.5], vec![vec![0.9, 0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).is_err());
        assert!(HmmParams::new(vec![0.5, 0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 0.0]).is_err());
        assert!(HmmParams::with_regions(vec![1.0], vec![vec![1.0]], vec![1.0], vec![vec![0.5, 0.4]]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = HmmParams::with_regions(
            vec![0.1, 0.9],
            vec![vec![0.446, 0.554], vec![0.04, 0.96]],
            vec![1.4, 21.1],
            vec![vec![0.88, 0.12], vec![1.0 / 3.0, 2.0 / 3.0]],
        )
        .unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for k in ["n_states", "pi", "trans", "lambda", "region_dist"] {
            assert!(v.get(k).is_some());
        }
        let back: HmmParams<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let time_only: serde_json::Value = serde_json::to_value(two_state()).unwrap();
        assert!(time_only.get("region_dist").is_none());
    }

    #[test]
    fn f32_agrees_with_f64() {
        let p = two_state();
        let ys = vec![0.1, 3.0, 0.4, 6.0, 2.2, 0.05, 1.0, 4.0];
        let lhs = forward_backward(&p, &ObservationSequence::new(ys.clone())).unwrap().log_likelihood;
        let p32: HmmParams<f32> = p.cast();
        let ys32: Vec<f32> = ys.iter().map(|&y| y as f32).collect();
        let rhs = forward_backward(&p32, &ObservationSequence::new(ys32)).unwrap().log_likelihood;
        assert!((lhs - rhs as f64).abs() < 1e-4);
    }
}
