#![allow(dead_code)]

use chrono::NaiveDate;
use quake_hmm::simulation::simulate;
use quake_hmm::{HmmParams64, Observations64, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Probability vector with every entry at least `floor / n`.
pub fn simplex(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor / n as f64 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random parameters with distinct means spread over [0.5, 40).
pub fn random_params(rng: &mut ChaCha8Rng, n: usize, regions: Option<usize>) -> HmmParams64 {
    let pi = simplex(rng, n, 0.1);
    let trans = (0..n).map(|_| simplex(rng, n, 0.1)).collect();
    let lambda = (0..n).map(|s| 0.5 + 40.0 * (s as f64 + rng.random::<f64>()) / n as f64).collect();
    match regions {
        None => HmmParams64::new(pi, trans, lambda).unwrap(),
        Some(r) => {
            let q = (0..n).map(|_| simplex(rng, r, 0.1)).collect();
            HmmParams64::with_regions(pi, trans, lambda, q).unwrap()
        }
    }
}

/// Observation sequence drawn from `params`.
pub fn sample(params: &HmmParams64, len: usize, seed: u64) -> Observations64 {
    let sim = simulate(&SimConfig::new(params.clone(), len, seed)).unwrap();
    match params.region_dist {
        None => Observations64::new(sim.interevent_times),
        Some(_) => {
            let regions = sim.catalog.events.iter().map(|e| e.region.unwrap()).collect();
            Observations64::with_regions(sim.interevent_times, regions)
        }
    }
}
