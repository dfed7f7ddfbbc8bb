//! Earthquake catalogs: CSV ingestion, interevent differencing and
//! principal-axis region partitions.
//!
//! Times are fractional days measured from midnight of the catalog epoch,
//! which is the calendar date of the earliest retained event.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// One mainshock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Fractional days since the catalog epoch.
    pub time: f64,
    pub magnitude: f64,
    pub latitude: f64,
    pub longitude: f64,
    /// Region label in `1..=R`, once assigned.
    pub region: Option<usize>,
}

impl Event {
    pub fn new(time: f64, magnitude: f64, latitude: f64, longitude: f64) -> Self {
        Self { time, magnitude, latitude, longitude, region: None }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !self.time.is_finite() {
            return Err("time is not finite".into());
        }
        if !(self.magnitude >= 0.0) {
            return Err(format!("magnitude {} is negative", self.magnitude));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(format!("latitude {} outside [-90, 90]", self.latitude));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(format!("longitude {} outside [-180, 180]", self.longitude));
        }
        Ok(())
    }
}

/// Time-ordered list of events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub events: Vec<Event>,
    /// Calendar date whose midnight is time zero.
    pub epoch: NaiveDate,
}

/// Counters reported by [`load_catalog`] alongside the parsed catalog.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Rows that appeared before an earlier-dated row in the file.
    pub out_of_order: usize,
    /// Rows dropped by the magnitude threshold.
    pub below_threshold: usize,
}

impl Catalog {
    /// Builds a catalog, sorting events by time (stable).
    pub fn new(mut events: Vec<Event>, epoch: NaiveDate) -> Self {
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        Self { events, epoch }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Fractional day of `date` at `time_of_day` (a fraction of a day).
    pub fn time_of(&self, date: NaiveDate, time_of_day: f64) -> f64 {
        (date - self.epoch).num_days() as f64 + time_of_day
    }

    /// Calendar date containing time `t`.
    pub fn date_of(&self, t: f64) -> NaiveDate {
        self.epoch + chrono::Duration::days(t.floor() as i64)
    }

    /// Events with `from <= date < to`, keeping the epoch.
    pub fn between(&self, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Catalog {
        let lo = from.map(|d| self.time_of(d, 0.0)).unwrap_or(f64::NEG_INFINITY);
        let hi = to.map(|d| self.time_of(d, 0.0)).unwrap_or(f64::INFINITY);
        Catalog {
            events: self.events.iter().filter(|e| e.time >= lo && e.time < hi).cloned().collect(),
            epoch: self.epoch,
        }
    }

    /// Checks the event invariants and ordering.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.events.iter().enumerate() {
            e.validate().map_err(|message| Error::CatalogRow { row: i + 1, message })?;
        }
        if self.events.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::Configuration("catalog events are not sorted by time".into()));
        }
        Ok(())
    }
}

/// Reads a catalog CSV (`date,time,magnitude,latitude,longitude`), keeping
/// events with magnitude at or above `min_magnitude`.
///
/// Optional `region` and `true_state` columns are accepted; `region` is
/// carried into [`Event::region`].
pub fn load_catalog(path: &Path, min_magnitude: f64) -> Result<(Catalog, LoadReport)> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_catalog(file, min_magnitude)
}

struct RawRow {
    date: NaiveDate,
    seconds: f64,
    magnitude: f64,
    latitude: f64,
    longitude: f64,
    region: Option<usize>,
}

/// Parses catalog CSV from any reader. Row numbers in errors count data
/// rows from 1 (the header is not counted).
pub fn parse_catalog<R: Read>(reader: R, min_magnitude: f64) -> Result<(Catalog, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut report = LoadReport::default();
    if headers.is_empty() {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
        return Ok((Catalog::new(Vec::new(), epoch), report));
    }
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let missing = |name: &str| Error::CatalogRow { row: 0, message: format!("header lacks `{name}` column") };
    let i_date = col("date").ok_or_else(|| missing("date"))?;
    let i_time = col("time");
    let i_mag = col("magnitude").ok_or_else(|| missing("magnitude"))?;
    let i_lat = col("latitude").ok_or_else(|| missing("latitude"))?;
    let i_lon = col("longitude").ok_or_else(|| missing("longitude"))?;
    let i_region = col("region");

    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::CatalogRow { row, message: e.to_string() })?;
        let bad = |message: String| Error::CatalogRow { row, message };
        let field = |i: usize| record.get(i).unwrap_or("");

        let date = NaiveDate::parse_from_str(field(i_date), "%Y-%m-%d")
            .map_err(|e| bad(format!("bad date `{}`: {e}", field(i_date))))?;
        let seconds = match i_time.map(field).filter(|s| !s.is_empty()) {
            None => 0.0,
            Some(s) => {
                let t = NaiveTime::parse_from_str(s, "%H:%M:%S%.f").map_err(|e| bad(format!("bad time `{s}`: {e}")))?;
                t.num_seconds_from_midnight() as f64 + t.nanosecond() as f64 * 1e-9
            }
        };
        let number = |i: usize, what: &str| -> Result<f64> {
            field(i).parse::<f64>().map_err(|e| bad(format!("bad {what} `{}`: {e}", field(i))))
        };
        let magnitude = number(i_mag, "magnitude")?;
        let latitude = number(i_lat, "latitude")?;
        let longitude = number(i_lon, "longitude")?;
        let region = match i_region.map(field).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => match s.parse::<usize>() {
                Ok(v) if v >= 1 => Some(v),
                _ => return Err(bad(format!("bad region `{s}`"))),
            },
        };
        let probe = Event { time: 0.0, magnitude, latitude, longitude, region };
        probe.validate().map_err(bad)?;
        if magnitude < min_magnitude {
            report.below_threshold += 1;
            continue;
        }
        rows.push(RawRow { date, seconds, magnitude, latitude, longitude, region });
    }

    let key = |r: &RawRow| (r.date, r.seconds);
    let mut latest: Option<(NaiveDate, f64)> = None;
    for r in &rows {
        match latest {
            Some(k) if key(r) < k => report.out_of_order += 1,
            _ => latest = Some(key(r)),
        }
    }

    let epoch =
        rows.iter().map(|r| r.date).min().unwrap_or_else(|| NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date"));
    let events = rows
        .into_iter()
        .map(|r| Event {
            time: (r.date - epoch).num_days() as f64 + r.seconds / 86_400.0,
            magnitude: r.magnitude,
            latitude: r.latitude,
            longitude: r.longitude,
            region: r.region,
        })
        .collect();
    Ok((Catalog::new(events, epoch), report))
}

/// Ordered interevent times with optional region labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct ObservationSequence<T> {
    pub interevent_times: Vec<T>,
    /// Region label per observation, in `1..=R`.
    pub regions: Option<Vec<usize>>,
}

impl<T: Real> ObservationSequence<T> {
    /// Time-only sequence. Panics on negative or non-finite entries.
    pub fn new(interevent_times: Vec<T>) -> Self {
        Self::try_new(interevent_times, None).expect("valid observation sequence")
    }

    /// Sequence with region labels. Panics if lengths differ.
    pub fn with_regions(interevent_times: Vec<T>, regions: Vec<usize>) -> Self {
        Self::try_new(interevent_times, Some(regions)).expect("valid observation sequence")
    }

    pub fn try_new(interevent_times: Vec<T>, regions: Option<Vec<usize>>) -> Result<Self> {
        if let Some(t) = interevent_times.iter().position(|y| !(*y >= T::zero()) || !y.is_finite()) {
            return Err(Error::Domain(format!("interevent time {} is {}", t + 1, interevent_times[t])));
        }
        if let Some(r) = &regions {
            if r.len() != interevent_times.len() {
                return Err(Error::Configuration(format!(
                    "{} region labels for {} interevent times",
                    r.len(),
                    interevent_times.len()
                )));
            }
            if r.contains(&0) {
                return Err(Error::Configuration("region labels start at 1".into()));
            }
        }
        Ok(Self { interevent_times, regions })
    }

    pub fn len(&self) -> usize {
        self.interevent_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interevent_times.is_empty()
    }

    pub fn region(&self, t: usize) -> Option<usize> {
        self.regions.as_ref().map(|r| r[t])
    }

    /// Observations `range` as a new sequence.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            interevent_times: self.interevent_times[range.clone()].to_vec(),
            regions: self.regions.as_ref().map(|r| r[range].to_vec()),
        }
    }
}

/// Differences consecutive event times. Region labels are carried from the
/// second event onwards when every event is labeled.
pub fn to_observations<T: Real>(catalog: &Catalog) -> Result<ObservationSequence<T>> {
    let n = catalog.events.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let times =
        catalog.events.windows(2).map(|w| T::from_f64(w[1].time - w[0].time).expect("finite difference")).collect();
    let regions = if catalog.events.iter().all(|e| e.region.is_some()) {
        Some(catalog.events[1..].iter().map(|e| e.region.expect("checked")).collect())
    } else {
        None
    };
    ObservationSequence::try_new(times, regions)
}

/// Renders a catalog as CSV with optional `region` and `true_state`
/// columns. Times are rounded to the nearest second.
pub fn catalog_to_csv(catalog: &Catalog, true_states: Option<&[usize]>) -> String {
    let with_region = !catalog.is_empty() && catalog.events.iter().all(|e| e.region.is_some());
    let mut out = String::from("date,time,magnitude,latitude,longitude");
    if with_region {
        out.push_str(",region");
    }
    if true_states.is_some() {
        out.push_str(",true_state");
    }
    out.push('\n');
    for (i, e) in catalog.events.iter().enumerate() {
        let total = (e.time * 86_400.0).round() as i64;
        let day = total.div_euclid(86_400);
        let sec = total.rem_euclid(86_400);
        let date = catalog.epoch + chrono::Duration::days(day);
        out.push_str(&format!(
            "{date},{:02}:{:02}:{:02},{:.1},{:.4},{:.4}",
            sec / 3600,
            (sec / 60) % 60,
            sec % 60,
            e.magnitude,
            e.latitude,
            e.longitude
        ));
        if with_region {
            out.push_str(&format!(",{}", e.region.expect("checked")));
        }
        if let Some(states) = true_states {
            out.push_str(&format!(",{}", states[i]));
        }
        out.push('\n');
    }
    out
}

/// How events are mapped to region labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    SingleRegion,
    HalfPlane,
    QuadrantMerge,
}

/// Principal-axis partition of the (longitude, latitude) plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub mode: PartitionMode,
    /// Mean `(longitude, latitude)`.
    pub center: [f64; 2],
    /// Unit major-axis direction in `(longitude, latitude)` space.
    pub axis: [f64; 2],
    /// Quadrant (1..=4) to region label; only used in quadrant-merge mode.
    #[serde(default)]
    pub merge_map: BTreeMap<u8, usize>,
}

impl RegionPartition {
    pub fn single_region() -> Self {
        Self { mode: PartitionMode::SingleRegion, center: [0.0, 0.0], axis: [1.0, 0.0], merge_map: BTreeMap::new() }
    }

    /// Quadrants 1 and 2 (positive major side) form region 1.
    pub fn east_west_map() -> BTreeMap<u8, usize> {
        BTreeMap::from([(1, 1), (2, 1), (3, 2), (4, 2)])
    }

    /// Quadrants 2 and 3 form region 1, quadrants 1 and 4 region 2.
    pub fn north_south_map() -> BTreeMap<u8, usize> {
        BTreeMap::from([(2, 1), (3, 1), (1, 2), (4, 2)])
    }

    pub fn with_mode(mut self, mode: PartitionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_merge_map(mut self, map: BTreeMap<u8, usize>) -> Self {
        self.mode = PartitionMode::QuadrantMerge;
        self.merge_map = map;
        self
    }

    /// Number of region labels this partition produces.
    pub fn n_regions(&self) -> usize {
        match self.mode {
            PartitionMode::SingleRegion => 1,
            PartitionMode::HalfPlane => 2,
            PartitionMode::QuadrantMerge => self.merge_map.values().copied().max().unwrap_or(0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == PartitionMode::SingleRegion {
            return Ok(());
        }
        let norm = self.axis[0].hypot(self.axis[1]);
        if !((norm - 1.0).abs() <= 1e-9) {
            return Err(Error::Configuration(format!("partition axis has norm {norm}, expected 1")));
        }
        if self.mode == PartitionMode::QuadrantMerge {
            let keys: Vec<u8> = self.merge_map.keys().copied().collect();
            if keys != [1, 2, 3, 4] {
                return Err(Error::Configuration("merge map must cover quadrants 1..4".into()));
            }
            let r = self.n_regions();
            if r == 0 || (1..=r).any(|v| !self.merge_map.values().any(|&x| x == v)) {
                return Err(Error::Configuration("merge map is not onto 1..R".into()));
            }
        }
        Ok(())
    }

    /// Projections of a point onto the (major, minor) axes. The minor axis
    /// is the major axis rotated a quarter turn counterclockwise.
    pub fn project(&self, longitude: f64, latitude: f64) -> (f64, f64) {
        let dx = longitude - self.center[0];
        let dy = latitude - self.center[1];
        let [ax, ay] = self.axis;
        (dx * ax + dy * ay, -dx * ay + dy * ax)
    }

    /// Quadrant in `1..=4`, numbered counterclockwise from
    /// (major > 0, minor <= 0). Points on an axis go to the lower-numbered
    /// neighbouring quadrant; the center is quadrant 1.
    pub fn quadrant(&self, longitude: f64, latitude: f64) -> u8 {
        quadrant_of(self.project(longitude, latitude))
    }

    /// Region label of a location.
    pub fn region_of(&self, longitude: f64, latitude: f64) -> usize {
        match self.mode {
            PartitionMode::SingleRegion => 1,
            PartitionMode::HalfPlane => {
                if self.project(longitude, latitude).0 >= 0.0 {
                    1
                } else {
                    2
                }
            }
            PartitionMode::QuadrantMerge => self.merge_map[&self.quadrant(longitude, latitude)],
        }
    }
}

fn quadrant_of((major, minor): (f64, f64)) -> u8 {
    if major >= 0.0 && minor <= 0.0 {
        1
    } else if major >= 0.0 {
        2
    } else if minor >= 0.0 {
        3
    } else {
        4
    }
}

/// Center, axis and eigenvalues of the location covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAxes {
    pub center: [f64; 2],
    pub major: [f64; 2],
    pub major_variance: f64,
    pub minor_variance: f64,
}

/// Principal axes of event locations in raw (longitude, latitude) degrees.
///
/// The major axis is oriented with a non-negative longitude component
/// (positive latitude component if purely meridional).
pub fn principal_axes(catalog: &Catalog) -> Result<PrincipalAxes> {
    let pts: Vec<(f64, f64)> = catalog.events.iter().map(|e| (e.longitude, e.latitude)).collect();
    let distinct = pts.iter().any(|p| *p != pts[0]);
    if pts.len() < 2 || !distinct {
        return Err(Error::DegenerateGeometry("need at least 2 distinct event locations".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    sxx /= n - 1.0;
    syy /= n - 1.0;
    sxy /= n - 1.0;

    // Symmetric 2x2 eigenproblem in closed form.
    let half_trace = 0.5 * (sxx + syy);
    let radius = (0.5 * (sxx - syy)).hypot(sxy);
    let major_variance = half_trace + radius;
    let minor_variance = (half_trace - radius).max(0.0);
    let mut major = if sxy == 0.0 {
        if sxx >= syy {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    } else {
        // Pick the better-conditioned of the two equivalent eigenvector forms.
        let (a, b) = if sxx >= syy { (major_variance - syy, sxy) } else { (sxy, major_variance - sxx) };
        let len = a.hypot(b);
        [a / len, b / len]
    };
    if major[0] < 0.0 || (major[0] == 0.0 && major[1] < 0.0) {
        major = [-major[0], -major[1]];
    }
    Ok(PrincipalAxes { center: [mx, my], major, major_variance, minor_variance })
}

/// Quadrant-merge partition on the principal axes with the East/West map.
pub fn compute_principal_axes(catalog: &Catalog) -> Result<RegionPartition> {
    let axes = principal_axes(catalog)?;
    Ok(RegionPartition {
        mode: PartitionMode::QuadrantMerge,
        center: axes.center,
        axis: axes.major,
        merge_map: RegionPartition::east_west_map(),
    })
}

/// Labels every event with its region under `partition`.
pub fn assign_regions(catalog: &Catalog, partition: &RegionPartition) -> Result<Catalog> {
    partition.validate()?;
    let events = catalog
        .events
        .iter()
        .map(|e| Event { region: Some(partition.region_of(e.longitude, e.latitude)), ..e.clone() })
        .collect();
    Ok(Catalog { events, epoch: catalog.epoch })
}
