//! Baum-Welch estimation with a multi-start grid over the exponential means.
//!
//! Each grid point is iterated for a fixed number of coarse steps; the
//! start with the highest likelihood is then iterated until the largest
//! absolute change in any mean or transition probability falls below
//! `param_tol`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::ObservationSequence;
use crate::error::{Error, Result};
use crate::hmm::{forward_backward, posteriors, HmmParams};
use crate::num::Real;

/// Exponential means (days) tried for the short-interevent state.
pub const SHORT_MEANS: [f64; 4] = [1.0, 4.0, 7.0, 10.0];
/// Means tried for the long-interevent state of the two-state model.
pub const LONG_MEANS: [f64; 7] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0];
/// Long-state means used per region block of the location model.
pub const LOCATION_LONG_MEANS: [f64; 4] = [10.0, 30.0, 50.0, 70.0];

/// Probability placed on a state's own region block in the initial region
/// distributions of a location model.
const OWN_REGION_WEIGHT: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de> + Real"))]
pub struct FitConfig<T> {
    /// Initial mean vectors. Empty means "use [`default_grid`]".
    pub init_grid: Vec<Vec<T>>,
    /// Initial transition matrix; uniform rows when absent.
    pub init_trans: Option<Vec<Vec<T>>>,
    /// Initial state distribution; uniform when absent.
    pub init_pi: Option<Vec<T>>,
    /// Initial region distributions; block-diagonal-heavy when absent.
    pub init_region_dist: Option<Vec<Vec<T>>>,
    pub coarse_iters: usize,
    pub param_tol: T,
    pub max_iters: usize,
    /// Floor applied to every mean update, in days.
    pub min_lambda: T,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            init_grid: Vec::new(),
            init_trans: None,
            init_pi: None,
            init_region_dist: None,
            coarse_iters: 100,
            param_tol: T::lit(1e-6),
            max_iters: 10_000,
            min_lambda: T::lit(1e-4),
        }
    }
}

impl<T: Real> FitConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.param_tol > T::zero()) {
            return Err(Error::Configuration("param_tol must be positive".into()));
        }
        if self.coarse_iters == 0 {
            return Err(Error::Configuration("coarse_iters must be at least 1".into()));
        }
        if !(self.min_lambda > T::zero()) {
            return Err(Error::Configuration("min_lambda must be positive".into()));
        }
        if self.max_iters < self.coarse_iters {
            return Err(Error::Configuration("max_iters must be at least coarse_iters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct FitResult<T> {
    pub params: HmmParams<T>,
    pub log_likelihood: T,
    /// Baum-Welch steps applied to the selected start, coarse phase included.
    pub iterations: usize,
    pub converged: bool,
    /// `trace[k]` is the log-likelihood after `k` steps.
    pub trace: Vec<T>,
    /// Index into the grid of the selected start.
    pub start_index: usize,
}

impl<T: Real> FitResult<T> {
    /// Trace as `iter,log_likelihood` CSV.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,log_likelihood\n");
        for (k, ll) in self.trace.iter().enumerate() {
            out.push_str(&format!("{k},{:.12}\n", ll.as_f64()));
        }
        out
    }
}

/// Default starting means for `n_states` states.
///
/// * one state: the sample mean;
/// * two states, time only: `SHORT_MEANS x LONG_MEANS` (28 starts);
/// * `2R` states with `R` regions: `SHORT_MEANS x LOCATION_LONG_MEANS`,
///   each pair repeated across region blocks (16 starts);
/// * anything else: one start with means spread geometrically around the
///   sample mean.
pub fn default_grid<T: Real>(obs: &ObservationSequence<T>, n_states: usize) -> Vec<Vec<T>> {
    let mean = sample_mean(obs);
    let n_regions = obs.regions.as_ref().map(|r| r.iter().copied().max().unwrap_or(1));
    match (n_states, n_regions) {
        (1, _) => vec![vec![mean]],
        (2, None) => {
            SHORT_MEANS.iter().flat_map(|&i| LONG_MEANS.iter().map(move |&j| vec![T::lit(i), T::lit(j)])).collect()
        }
        (s, Some(r)) if s == 2 * r => SHORT_MEANS
            .iter()
            .flat_map(|&i| {
                LOCATION_LONG_MEANS.iter().map(move |&j| (0..r).flat_map(|_| [T::lit(i), T::lit(j)]).collect())
            })
            .collect(),
        (s, _) => {
            let centre = T::lit((s as f64 - 1.0) / 2.0);
            vec![(0..s).map(|k| mean * T::lit(2.0).powf(T::lit(k as f64) - centre)).collect()]
        }
    }
}

/// Location-model grid: [`default_grid`] plus the means of a fitted
/// two-state time-only model repeated across region blocks.
pub fn location_grid<T: Real>(
    obs: &ObservationSequence<T>,
    n_regions: usize,
    config: &FitConfig<T>,
) -> Result<Vec<Vec<T>>> {
    let mut grid = default_grid(obs, 2 * n_regions);
    let time_only = ObservationSequence { interevent_times: obs.interevent_times.clone(), regions: None };
    let base = FitConfig { init_grid: Vec::new(), init_region_dist: None, ..config.clone() };
    let two = sort_states(&fit(&time_only, 2, &base)?.params);
    grid.push((0..n_regions).flat_map(|_| two.lambda.iter().copied()).collect());
    Ok(grid)
}

fn sample_mean<T: Real>(obs: &ObservationSequence<T>) -> T {
    let n = obs.len().max(1);
    obs.interevent_times.iter().copied().sum::<T>() / T::lit(n as f64)
}

/// Initial region distributions for `n_states` states over `n_regions`
/// labels: states are split into contiguous blocks, one per region, and
/// each state leans towards its own block's region.
pub fn default_region_dist<T: Real>(n_states: usize, n_regions: usize) -> Vec<Vec<T>> {
    if n_regions == 1 {
        return vec![vec![T::one()]; n_states];
    }
    if !n_states.is_multiple_of(n_regions) {
        return vec![vec![T::one() / T::lit(n_regions as f64); n_regions]; n_states];
    }
    let per_block = n_states / n_regions;
    let other = (1.0 - OWN_REGION_WEIGHT) / (n_regions as f64 - 1.0);
    (0..n_states)
        .map(|s| (0..n_regions).map(|v| T::lit(if v == s / per_block { OWN_REGION_WEIGHT } else { other })).collect())
        .collect()
}

/// One Baum-Welch update without any floor on the means.
pub fn baum_welch_step<T: Real>(params: &HmmParams<T>, obs: &ObservationSequence<T>) -> Result<HmmParams<T>> {
    Ok(em_update(params, obs, T::zero())?.0)
}

/// Baum-Welch update; also returns the log-likelihood of `params`.
fn em_update<T: Real>(params: &HmmParams<T>, obs: &ObservationSequence<T>, min_lambda: T) -> Result<(HmmParams<T>, T)> {
    if obs.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: obs.len() });
    }
    let trellis = forward_backward(params, obs)?;
    let post = posteriors(params, obs, &trellis)?;
    let n = params.n_states;
    let len = obs.len();
    let dead = T::min_positive_value().max(T::lit(1e-300));

    let mut occupancy = vec![T::zero(); n];
    let mut weighted_time = vec![T::zero(); n];
    for (g, &y) in post.gamma.iter().zip(&obs.interevent_times) {
        for s in 0..n {
            occupancy[s] = occupancy[s] + g[s];
            weighted_time[s] = weighted_time[s] + g[s] * y;
        }
    }
    if let Some(s) = occupancy.iter().position(|&m| !(m >= dead)) {
        return Err(Error::DegenerateState { state: s + 1 });
    }

    let mut trans = params.trans.clone();
    for (r, row) in trans.iter_mut().enumerate() {
        let from: T = post.gamma[..len - 1].iter().map(|g| g[r]).sum();
        if !(from >= dead) {
            // State only occupied at the final step; no transition evidence.
            continue;
        }
        for (s, a) in row.iter_mut().enumerate() {
            *a = post.eta.iter().map(|e| e[r][s]).sum::<T>() / from;
        }
        normalize(row);
    }

    let mut pi = post.gamma[0].clone();
    normalize(&mut pi);

    let lambda = (0..n).map(|s| (weighted_time[s] / occupancy[s]).max(min_lambda)).collect();

    let region_dist = match (&params.region_dist, &obs.regions) {
        (Some(q), Some(regions)) => {
            let n_regions = q[0].len();
            let mut next = vec![vec![T::zero(); n_regions]; n];
            for (g, &v) in post.gamma.iter().zip(regions) {
                for s in 0..n {
                    next[s][v - 1] = next[s][v - 1] + g[s];
                }
            }
            for (s, row) in next.iter_mut().enumerate() {
                row.iter_mut().for_each(|x| *x = *x / occupancy[s]);
                normalize(row);
            }
            Some(next)
        }
        _ => None,
    };

    Ok((HmmParams { n_states: n, pi, trans, lambda, region_dist }, trellis.log_likelihood))
}

fn normalize<T: Real>(v: &mut [T]) {
    let sum: T = v.iter().copied().sum();
    v.iter_mut().for_each(|x| *x = *x / sum);
}

/// Largest absolute change across means and transition probabilities.
pub fn max_param_change<T: Real>(a: &HmmParams<T>, b: &HmmParams<T>) -> T {
    let means = a.lambda.iter().zip(&b.lambda).map(|(x, y)| (*x - *y).abs());
    let trans = a.trans.iter().flatten().zip(b.trans.iter().flatten()).map(|(x, y)| (*x - *y).abs());
    means.chain(trans).fold(T::zero(), T::max)
}

struct Run<T> {
    params: HmmParams<T>,
    steps: usize,
    trace: Vec<T>,
    converged: bool,
}

impl<T: Real> Run<T> {
    fn new(params: HmmParams<T>) -> Self {
        Self { params, steps: 0, trace: Vec::new(), converged: false }
    }

    /// Applies up to `max_steps` further updates, stopping early on
    /// convergence. Afterwards `trace.len() == steps + 1`.
    fn advance(&mut self, obs: &ObservationSequence<T>, config: &FitConfig<T>, max_steps: usize) -> Result<()> {
        for _ in 0..max_steps {
            let (next, ll) = em_update(&self.params, obs, config.min_lambda)?;
            if self.trace.len() == self.steps {
                self.trace.push(ll);
            }
            let change = max_param_change(&self.params, &next);
            self.params = next;
            self.steps += 1;
            if change < config.param_tol {
                self.converged = true;
                break;
            }
        }
        if self.trace.len() == self.steps {
            self.trace.push(forward_backward(&self.params, obs)?.log_likelihood);
        }
        Ok(())
    }

    fn log_likelihood(&self) -> T {
        *self.trace.last().expect("at least one step")
    }
}

fn initial_params<T: Real>(lambda: &[T], n_regions: Option<usize>, config: &FitConfig<T>) -> Result<HmmParams<T>> {
    let n = lambda.len();
    let uniform = T::one() / T::lit(n as f64);
    let params = HmmParams {
        n_states: n,
        pi: config.init_pi.clone().unwrap_or_else(|| vec![uniform; n]),
        trans: config.init_trans.clone().unwrap_or_else(|| vec![vec![uniform; n]; n]),
        lambda: lambda.to_vec(),
        region_dist: n_regions.map(|r| config.init_region_dist.clone().unwrap_or_else(|| default_region_dist(n, r))),
    };
    params.validate()?;
    Ok(params)
}

/// Multi-start Baum-Welch fit.
pub fn fit<T: Real>(obs: &ObservationSequence<T>, n_states: usize, config: &FitConfig<T>) -> Result<FitResult<T>> {
    config.validate()?;
    if n_states == 0 {
        return Err(Error::Configuration("n_states must be at least 1".into()));
    }
    let needed = n_states.max(2);
    if obs.len() < needed {
        return Err(Error::InsufficientData { needed, got: obs.len() });
    }
    let n_regions = obs.regions.as_ref().map(|r| r.iter().copied().max().unwrap_or(1));
    let grid = if config.init_grid.is_empty() { default_grid(obs, n_states) } else { config.init_grid.clone() };
    if let Some(bad) = grid.iter().find(|g| g.len() != n_states) {
        return Err(Error::Configuration(format!("grid point has {} means for {n_states} states", bad.len())));
    }

    let coarse: Vec<Result<Run<T>>> = grid
        .par_iter()
        .map(|lambda| {
            let params = initial_params(lambda, n_regions, config)?;
            let mut run = Run::new(params);
            run.advance(obs, config, config.coarse_iters)?;
            Ok(run)
        })
        .collect();

    let mut best: Option<(usize, Run<T>)> = None;
    let mut last_error = None;
    for (i, run) in coarse.into_iter().enumerate() {
        match run {
            Ok(run) if run.log_likelihood().is_finite() => {
                let better = best.as_ref().is_none_or(|(_, b)| run.log_likelihood() > b.log_likelihood());
                if better {
                    best = Some((i, run));
                }
            }
            Ok(_) => {}
            Err(e) => last_error = Some(e),
        }
    }
    let (start_index, mut run) = best.ok_or_else(|| {
        let why = last_error.map(|e| e.to_string()).unwrap_or_else(|| "no finite likelihood".into());
        Error::FitFailure(format!("every grid start failed ({why})"))
    })?;

    if !run.converged {
        let remaining = config.max_iters.saturating_sub(run.steps);
        run.advance(obs, config, remaining)?;
    }

    Ok(FitResult {
        log_likelihood: run.log_likelihood(),
        iterations: run.steps,
        converged: run.converged,
        trace: run.trace,
        params: run.params,
        start_index,
    })
}

/// Canonical state order: by dominant region (for region models), then by
/// ascending mean, ties by original index.
pub fn sort_states<T: Real>(params: &HmmParams<T>) -> HmmParams<T> {
    let dominant = |s: usize| -> usize {
        params.region_dist.as_ref().map_or(0, |q| {
            let row = &q[s];
            (0..row.len()).fold(0, |best, v| if row[v] > row[best] { v } else { best })
        })
    };
    let mut order: Vec<usize> = (0..params.n_states).collect();
    order.sort_by(|&a, &b| {
        dominant(a)
            .cmp(&dominant(b))
            .then(params.lambda[a].partial_cmp(&params.lambda[b]).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    params.permuted(&order)
}
