//! Hidden Markov models with state-specific exponential interevent times
//! (optionally paired with a categorical region label) for forecasting the
//! next mainshock in an earthquake catalog.
//!
//! * [`catalog`]: CSV catalogs, interevent differencing, principal-axis
//!   region partitions.
//! * [`hmm`]: parameters, emission densities, rescaled forward/backward.
//! * [`estimation`]: Baum-Welch with a multi-start grid.
//! * [`forecasting`]: post-event and scheduled forecast weights, interval
//!   probabilities, densities and waiting-time moments.
//! * [`simulation`]: seeded synthetic catalogs and path-enumeration oracles.
//! * [`evaluation`]: rolling daily forecasts and low/high group summaries.
//!
//! The model, fitting and forecasting code is generic over the scalar type
//! ([`Real`], implemented for `f32` and `f64`); the `*64` aliases below
//! fix it to `f64`.
//!
//! ```
//! use quake_hmm::{forecasting, presets, ForecastQuery, ObservationSequence};
//!
//! let params = presets::two_state::<f64>();
//! let obs = ObservationSequence::new(vec![12.0, 0.4, 0.9, 30.0]);
//! let post = forecasting::post_event_weights(&params, &obs).unwrap();
//! let sched = forecasting::scheduled_weights(&post, &params, 2.5).unwrap();
//! let p = forecasting::forecast_probability(&sched, &params, &ForecastQuery::new(1.0)).unwrap();
//! assert!(p > 0.046 && p < 0.52);
//! ```

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod forecasting;
pub mod hmm;
pub mod num;
pub mod presets;
pub mod simulation;

pub use catalog::{Catalog, Event, ObservationSequence, RegionPartition};
pub use error::{Error, Result};
pub use estimation::{FitConfig, FitResult};
pub use evaluation::{DailyForecast, EvalConfig, GroupSummary, SplitRule};
pub use forecasting::{ForecastQuery, StateWeights, WaitingMoments};
pub use hmm::{HmmParams, Posteriors, Trellis};
pub use num::Real;
pub use simulation::{SimConfig, SimulatedCatalog};

pub type HmmParams64 = HmmParams<f64>;
pub type HmmParams32 = HmmParams<f32>;
pub type Observations64 = ObservationSequence<f64>;
pub type Observations32 = ObservationSequence<f32>;
pub type Trellis64 = Trellis<f64>;
pub type Posteriors64 = Posteriors<f64>;
pub type FitConfig64 = FitConfig<f64>;
pub type FitResult64 = FitResult<f64>;
pub type StateWeights64 = StateWeights<f64>;
pub type ForecastQuery64 = ForecastQuery<f64>;
pub type SimConfig64 = SimConfig<f64>;
