mod common;

use common::date;
use quake_hmm::evaluation::{export_series, run_rolling_forecasts, summarize};
use quake_hmm::simulation::simulate;
use quake_hmm::{presets, Catalog, DailyForecast, EvalConfig, HmmParams64, SimConfig, SplitRule};

fn synthetic(n_events: usize, seed: u64) -> Catalog {
    let p: HmmParams64 = presets::two_state();
    let config = SimConfig { epoch: date(1980, 1, 1), ..SimConfig::new(p, n_events, seed) };
    simulate(&config).unwrap().catalog
}

/// Scheduled forecast recomputed from scratch: normalized forward pass over
/// the history, one transition, survival reweighting, exponential CDF.
fn recompute(p: &HmmParams64, gaps: &[f64], w: f64, horizon: f64) -> f64 {
    let n = p.n_states;
    let dens = |s: usize, y: f64| (-y / p.lambda[s]).exp() / p.lambda[s];
    let mut alpha: Option<Vec<f64>> = None;
    for &y in gaps {
        let prior: Vec<f64> = match &alpha {
            None => p.pi.clone(),
            Some(a) => (0..n).map(|s| (0..n).map(|r| a[r] * p.trans[r][s]).sum()).collect(),
        };
        let f: Vec<f64> = (0..n).map(|s| prior[s] * dens(s, y)).collect();
        let z: f64 = f.iter().sum();
        alpha = Some(f.into_iter().map(|x| x / z).collect());
    }
    let c: Vec<f64> = match &alpha {
        None => p.pi.clone(),
        Some(a) => (0..n).map(|s| (0..n).map(|r| a[r] * p.trans[r][s]).sum()).collect(),
    };
    let raw: Vec<f64> = (0..n).map(|s| c[s] * (-w / p.lambda[s]).exp()).collect();
    let z: f64 = raw.iter().sum();
    (0..n).map(|s| raw[s] / z * (1.0 - (-horizon / p.lambda[s]).exp())).sum()
}

fn run(cat: &Catalog, start: chrono::NaiveDate, end: chrono::NaiveDate) -> Vec<DailyForecast> {
    let config = EvalConfig::new(start, end);
    run_rolling_forecasts(cat, &presets::two_state(), &config).unwrap()
}

#[test]
fn daily_forecasts_match_recomputation() {
    let cat = synthetic(1500, 31);
    let p: HmmParams64 = presets::two_state();
    let forecasts = run(&cat, date(1990, 1, 1), date(1991, 6, 30));
    let times: Vec<f64> = cat.events.iter().map(|e| e.time).collect();
    let start = cat.time_of(date(1990, 1, 1), 0.0);
    let first = times.partition_point(|&t| t <= start) - 31;
    for f in &forecasts {
        let seen = times.partition_point(|&t| t <= f.time);
        let gaps: Vec<f64> = (first + 1..seen).map(|k| times[k] - times[k - 1]).collect();
        assert_eq!(f.t, gaps.len());
        assert!((f.w - (f.time - times[seen - 1])).abs() < 1e-12);
        for cell in &f.cells {
            let oracle = recompute(&p, &gaps, f.w, cell.horizon);
            assert!((cell.probability - oracle).abs() < 1e-12, "{}: {} vs {oracle}", f.date, cell.probability);
        }
    }
}

#[test]
fn outcomes_match_interval_join() {
    let cat = synthetic(1500, 32);
    let forecasts = run(&cat, date(1990, 1, 1), date(1994, 12, 31));
    let mut joined = 0;
    for f in &forecasts {
        if cat.events.iter().any(|e| e.time > f.time && e.time <= f.time + 1.0) {
            joined += 1;
        }
    }
    let counted = forecasts.iter().filter(|f| f.cell(1.0, None).unwrap().outcome == Some(true)).count();
    assert_eq!(counted, joined);
}

#[test]
fn horizons_monotone_and_bounded() {
    let cat = synthetic(1500, 33);
    let forecasts = run(&cat, date(1990, 1, 1), date(1994, 12, 31));
    for f in &forecasts {
        let p: Vec<f64> = [1.0, 5.0, 10.0].iter().map(|&n| f.cell(n, None).unwrap().probability).collect();
        assert!(p[0] <= p[1] && p[1] <= p[2]);
        for (&n, &prob) in [1.0f64, 5.0, 10.0].iter().zip(&p) {
            assert!(prob >= -(-n / 21.1f64).exp_m1() - 1e-15);
            assert!(prob <= -(-n / 1.4f64).exp_m1() + 1e-15);
        }
    }
}

#[test]
fn reference_window_has_9693_days_and_abutting_groups() {
    let cat = synthetic(1200, 34);
    assert!(cat.events.last().unwrap().time > cat.time_of(date(2009, 1, 10), 0.0));
    let forecasts = run(&cat, date(1982, 6, 16), date(2008, 12, 28));
    assert_eq!(forecasts.len(), 9693);
    let evaluable = forecasts.iter().filter(|f| f.cell(1.0, None).unwrap().outcome.is_some()).count();
    let (low, high) = summarize(&forecasts, 1.0, SplitRule::default(), None).unwrap();
    assert_eq!(low.count + high.count, evaluable);
    assert_eq!(low.count, 9000);
    assert!(low.range_hi <= high.range_lo);
    assert!(low.mean <= high.mean);
    let series = export_series(&forecasts, &cat);
    assert_eq!(series.daily_csv.lines().count(), 9694);
}

#[test]
fn short_elapsed_days_get_higher_forecasts() {
    let cat = synthetic(1500, 35);
    let forecasts = run(&cat, date(1985, 1, 1), date(1999, 12, 31));
    let mut ws: Vec<f64> = forecasts.iter().map(|f| f.w).collect();
    ws.sort_by(f64::total_cmp);
    let median = ws[ws.len() / 2];
    let mean = |keep: &dyn Fn(&DailyForecast) -> bool| {
        let v: Vec<f64> =
            forecasts.iter().filter(|f| keep(f)).map(|f| f.cell(1.0, None).unwrap().probability).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(&|f| f.w < median) > mean(&|f| f.w >= median));
}

#[test]
fn event_at_forecast_instant_gives_post_event_forecast() {
    let mut cat = synthetic(200, 36);
    let day = date(1981, 3, 1);
    let at = cat.time_of(day, 0.0);
    cat.events.push(quake_hmm::Event { time: at, ..cat.events[0].clone() });
    let cat = Catalog::new(cat.events, cat.epoch);
    let f = run(&cat, day, day);
    assert_eq!(f[0].w, 0.0);
}

#[test]
fn no_history_is_an_error() {
    let cat = synthetic(50, 37);
    let config = EvalConfig::new(date(1979, 1, 1), date(1979, 2, 1));
    assert!(matches!(
        run_rolling_forecasts(&cat, &presets::two_state(), &config),
        Err(quake_hmm::Error::InsufficientHistory(_))
    ));
}
