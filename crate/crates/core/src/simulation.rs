//! Synthetic catalogs drawn from an HMM, and brute-force path-enumeration
//! oracles for the likelihood and the state posteriors.
//!
//! Sampling uses ChaCha8 seeded from the 64-bit seed. Each class of random
//! variable reads its own stream of the generator: stream 0 for hidden
//! states, 1 for interevent times, 2 for region labels. Exponential draws use
//! the inverse CDF `-lambda * ln(1 - U)` and categorical draws invert the
//! cumulative distribution, so equal uniform streams give equal catalogs.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{catalog_to_csv, Catalog, Event, ObservationSequence};
use crate::error::{Error, Result};
use crate::hmm::{emission_density, HmmParams, Posteriors};
use crate::num::Real;

const STATE_STREAM: u64 = 0;
const TIME_STREAM: u64 = 1;
const REGION_STREAM: u64 = 2;

/// Largest number of state paths the enumeration oracles will visit.
pub const MAX_PATHS: f64 = 1.0e7;

/// Magnitude written for every synthetic event.
pub const SYNTHETIC_MAGNITUDE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct SimConfig<T> {
    pub params: HmmParams<T>,
    pub n_events: usize,
    pub seed: u64,
    /// Days; the first event falls one interevent time after this.
    #[serde(default)]
    pub start_time: f64,
    /// Calendar date of time zero.
    #[serde(default = "default_epoch")]
    pub epoch: NaiveDate,
}

fn default_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

impl<T: Real> SimConfig<T> {
    pub fn new(params: HmmParams<T>, n_events: usize, seed: u64) -> Self {
        Self { params, n_events, seed, start_time: 0.0, epoch: default_epoch() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCatalog {
    pub catalog: Catalog,
    /// Zero-based hidden state of each event.
    pub states: Vec<usize>,
    /// Interevent time of each event, measured from the previous event
    /// (from `start_time` for the first).
    pub interevent_times: Vec<f64>,
}

impl SimulatedCatalog {
    /// Catalog CSV with a one-based `true_state` column.
    pub fn to_csv(&self) -> String {
        let labels: Vec<usize> = self.states.iter().map(|s| s + 1).collect();
        catalog_to_csv(&self.catalog, Some(&labels))
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn categorical<T: Real>(probs: &[T], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            return i;
        }
    }
    // Rounding left `u` above the cumulative total: take the last state
    // with positive probability.
    probs.iter().rposition(|p| *p > T::zero()).unwrap_or(probs.len() - 1)
}

/// Draws a catalog of `n_events` events from the HMM.
pub fn simulate<T: Real>(config: &SimConfig<T>) -> Result<SimulatedCatalog> {
    config.params.validate()?;
    if config.n_events == 0 {
        return Err(Error::Configuration("n_events must be at least 1".into()));
    }
    let p = &config.params;
    let mut state_rng = stream(config.seed, STATE_STREAM);
    let mut time_rng = stream(config.seed, TIME_STREAM);
    let mut region_rng = stream(config.seed, REGION_STREAM);

    let mut states = Vec::with_capacity(config.n_events);
    let mut gaps = Vec::with_capacity(config.n_events);
    let mut events = Vec::with_capacity(config.n_events);
    let mut clock = config.start_time;
    let mut state = categorical(&p.pi, state_rng.random::<f64>());
    for k in 0..config.n_events {
        if k > 0 {
            state = categorical(&p.trans[state], state_rng.random::<f64>());
        }
        let u: f64 = time_rng.random();
        let gap = -p.lambda[state].as_f64() * (1.0 - u).ln();
        clock += gap;
        let region = p.region_dist.as_ref().map(|q| categorical(&q[state], region_rng.random::<f64>()) + 1);
        events.push(Event { time: clock, magnitude: SYNTHETIC_MAGNITUDE, latitude: 0.0, longitude: 0.0, region });
        states.push(state);
        gaps.push(gap);
    }
    Ok(SimulatedCatalog { catalog: Catalog { events, epoch: config.epoch }, states, interevent_times: gaps })
}

fn check_size(n_states: usize, len: usize) -> Result<()> {
    let paths = (n_states as f64).powi(len as i32);
    if paths > MAX_PATHS {
        return Err(Error::TooLarge { paths, limit: MAX_PATHS });
    }
    Ok(())
}

/// Visits every state path of length `len`, passing the path and its joint
/// probability with the observations.
fn for_each_path<T: Real>(
    params: &HmmParams<T>,
    obs: &ObservationSequence<T>,
    len: usize,
    mut visit: impl FnMut(&[usize], T),
) -> Result<()> {
    let n = params.n_states;
    let observed = obs.len();
    let mut dens = vec![vec![T::zero(); n]; observed];
    for (t, row) in dens.iter_mut().enumerate() {
        for (s, d) in row.iter_mut().enumerate() {
            *d = emission_density(params, s, obs.interevent_times[t], obs.region(t))?;
        }
    }
    let mut path = vec![0usize; len];
    loop {
        let mut prob = params.pi[path[0]];
        for t in 0..len {
            if t > 0 {
                prob = prob * params.trans[path[t - 1]][path[t]];
            }
            if t < observed {
                prob = prob * dens[t][path[t]];
            }
        }
        visit(&path, prob);
        // Odometer increment.
        let mut i = len;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            path[i] += 1;
            if path[i] < n {
                break;
            }
            path[i] = 0;
        }
    }
}

/// `log P(O)` by summing the joint probability of every state path.
pub fn enumerate_likelihood<T: Real>(params: &HmmParams<T>, obs: &ObservationSequence<T>) -> Result<T> {
    params.check_observations(obs)?;
    if obs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    check_size(params.n_states, obs.len())?;
    let mut total = T::zero();
    for_each_path(params, obs, obs.len(), |_, p| total = total + p)?;
    Ok(total.ln())
}

/// `P(X_{t+1} = s | y_1..y_t, Y_{t+1} >= elapsed)` by path enumeration.
pub fn enumerate_next_state_posterior<T: Real>(
    params: &HmmParams<T>,
    obs: &ObservationSequence<T>,
    elapsed: T,
) -> Result<Vec<T>> {
    params.check_observations(obs)?;
    if !(elapsed >= T::zero()) {
        return Err(Error::Domain("elapsed time must be non-negative".into()));
    }
    let n = params.n_states;
    let len = obs.len() + 1;
    check_size(n, len)?;
    let mut mass = vec![T::zero(); n];
    for_each_path(params, obs, len, |path, p| {
        let next = path[len - 1];
        let survival = (-elapsed / params.lambda[next]).exp();
        mass[next] = mass[next] + p * survival;
    })?;
    let total: T = mass.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::ImpossibleObservation { t: obs.len() });
    }
    Ok(mass.into_iter().map(|m| m / total).collect())
}

/// State and pairwise posteriors by path enumeration.
pub fn enumerate_posteriors<T: Real>(params: &HmmParams<T>, obs: &ObservationSequence<T>) -> Result<Posteriors<T>> {
    params.check_observations(obs)?;
    let len = obs.len();
    if len == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = params.n_states;
    check_size(n, len)?;
    let mut gamma = vec![vec![T::zero(); n]; len];
    let mut eta = vec![vec![vec![T::zero(); n]; n]; len - 1];
    let mut total = T::zero();
    for_each_path(params, obs, len, |path, p| {
        total = total + p;
        for t in 0..len {
            gamma[t][path[t]] = gamma[t][path[t]] + p;
            if t + 1 < len {
                eta[t][path[t]][path[t + 1]] = eta[t][path[t]][path[t + 1]] + p;
            }
        }
    })?;
    if !(total > T::zero()) {
        return Err(Error::ImpossibleObservation { t: len });
    }
    gamma.iter_mut().flatten().for_each(|g| *g = *g / total);
    eta.iter_mut().flatten().flatten().for_each(|e| *e = *e / total);
    Ok(Posteriors { gamma, eta })
}
