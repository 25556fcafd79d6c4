//! Result ingestion, threshold selection, time standardization and suit
//! epochs.

use std::collections::HashMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of threshold exceedances kept per event.
pub const DEFAULT_N_EXCEED: usize = 200;
/// Timing resolution of recorded swims, in seconds.
pub const DEFAULT_CENSOR_S: f64 = 0.01;

const BUILTIN_CONFIG: &str = include_str!("../config/events.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventInfo {
    pub id: String,
    pub gender: String,
    pub stroke: String,
    pub distance_m: u32,
}

/// Two consecutive half-open date ranges during which full-body suits were
/// legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuitEpochs {
    pub epoch1: (NaiveDate, NaiveDate),
    pub epoch2: (NaiveDate, NaiveDate),
}

impl Default for SuitEpochs {
    fn default() -> Self {
        let d = |y| NaiveDate::from_ymd_opt(y, 1, 1).unwrap();
        Self {
            epoch1: (d(2008), d(2009)),
            epoch2: (d(2009), d(2010)),
        }
    }
}

impl SuitEpochs {
    pub fn new(epoch1: (NaiveDate, NaiveDate), epoch2: (NaiveDate, NaiveDate)) -> Result<Self> {
        if epoch1.0 >= epoch1.1 || epoch2.0 >= epoch2.1 {
            return Err(Error::Validation("suit epochs must be non-empty".into()));
        }
        if epoch1.1 > epoch2.0 {
            return Err(Error::Validation(
                "suit epoch 1 must end before epoch 2 starts".into(),
            ));
        }
        Ok(Self { epoch1, epoch2 })
    }

    /// Epoch edges as decimal years, in increasing order.
    pub fn edges(&self) -> [f64; 4] {
        [
            decimal_year(self.epoch1.0),
            decimal_year(self.epoch1.1),
            decimal_year(self.epoch2.0),
            decimal_year(self.epoch2.1),
        ]
    }

    /// Suit epoch (0 = none, 1, 2) of a decimal year.
    pub fn epoch_of_year(&self, year: f64) -> u8 {
        let e = self.edges();
        if year >= e[0] && year < e[1] {
            1
        } else if year >= e[2] && year < e[3] {
            2
        } else {
            0
        }
    }
}

/// Flags for membership of suit epoch 1 and 2. At most one is set.
pub fn suit_indicator(date: NaiveDate, epochs: &SuitEpochs) -> (bool, bool) {
    let in1 = date >= epochs.epoch1.0 && date < epochs.epoch1.1;
    let in2 = date >= epochs.epoch2.0 && date < epochs.epoch2.1;
    (in1, in2 && !in1)
}

/// Event registry and suit epochs, read from a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub events: Vec<EventInfo>,
    #[serde(default)]
    pub suit_epochs: SuitEpochs,
}

impl Registry {
    /// The 34 long-course individual events.
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN_CONFIG).expect("bundled registry is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let reg: Registry = serde_json::from_str(text)?;
        SuitEpochs::new(reg.suit_epochs.epoch1, reg.suit_epochs.epoch2)?;
        let mut ids: Vec<&str> = reg.events.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("duplicate event id in registry".into()));
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.events.iter().any(|e| e.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&EventInfo> {
        self.events.iter().find(|e| e.id == id)
    }
}

/// One observed swim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwimRecord {
    pub swimmer_id: String,
    pub event_id: String,
    pub time_s: f64,
    pub date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nation: Option<String>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    swimmer_id: String,
    event_id: String,
    time_s: String,
    date: String,
    #[serde(default)]
    nation: Option<String>,
}

fn parse_time(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let decimals = s.split_once('.').map_or(0, |(_, f)| f.len());
    if decimals > 2 {
        return Err(format!("time {s:?} has more than 2 decimals"));
    }
    s.parse::<f64>().map_err(|e| format!("time {s:?}: {e}"))
}

/// Reads a results CSV with header `swimmer_id,event_id,time_s,date`
/// (optionally followed by `nation`) and keeps the fastest swim per swimmer
/// and event. Output order follows the first appearance of each key.
pub fn ingest_csv(path: &Path, registry: &Registry) -> Result<Vec<SwimRecord>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    ingest_reader(file, registry)
}

/// As [`ingest_csv`] over any reader.
pub fn ingest_reader<R: std::io::Read>(reader: R, registry: &Registry) -> Result<Vec<SwimRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["swimmer_id", "event_id", "time_s", "date"];
    let ok = headers.len() >= 4
        && headers.iter().take(4).eq(expected.iter().copied())
        && (headers.len() == 4 || (headers.len() == 5 && &headers[4] == "nation"));
    if !ok {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header must be swimmer_id,event_id,time_s,date[,nation], got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out: Vec<SwimRecord> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let time_s = parse_time(&row.time_s).map_err(|message| Error::Parse { line, message })?;
        if !(time_s > 0.0) || !time_s.is_finite() {
            return Err(Error::Validation(format!(
                "line {line}: time must be positive, got {}",
                row.time_s
            )));
        }
        let date = NaiveDate::parse_from_str(row.date.trim(), "%Y-%m-%d").map_err(|e| {
            Error::Parse {
                line,
                message: format!("date {:?}: {e}", row.date),
            }
        })?;
        if !registry.contains(&row.event_id) {
            return Err(Error::Validation(format!(
                "line {line}: unknown event {:?}",
                row.event_id
            )));
        }
        let rec = SwimRecord {
            swimmer_id: row.swimmer_id,
            event_id: row.event_id,
            time_s,
            date,
            nation: row.nation.filter(|n| !n.is_empty()),
        };
        let key = (rec.swimmer_id.clone(), rec.event_id.clone());
        match index.get(&key) {
            Some(&k) => {
                let cur = &out[k];
                if (rec.time_s, rec.date) < (cur.time_s, cur.date) {
                    out[k] = rec;
                }
            }
            None => {
                index.insert(key, out.len());
                out.push(rec);
            }
        }
    }
    Ok(out)
}

/// Writes records in the input CSV schema.
pub fn write_csv<W: std::io::Write>(writer: W, records: &[SwimRecord]) -> Result<()> {
    let with_nation = records.iter().any(|r| r.nation.is_some());
    let mut w = csv::Writer::from_writer(writer);
    if with_nation {
        w.write_record(["swimmer_id", "event_id", "time_s", "date", "nation"])?;
    } else {
        w.write_record(["swimmer_id", "event_id", "time_s", "date"])?;
    }
    for r in records {
        let t = format!("{:.2}", r.time_s);
        let d = r.date.format("%Y-%m-%d").to_string();
        if with_nation {
            let n = r.nation.clone().unwrap_or_default();
            w.write_record([r.swimmer_id.as_str(), &r.event_id, &t, &d, &n])?;
        } else {
            w.write_record([r.swimmer_id.as_str(), &r.event_id, &t, &d])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Decimal year: calendar year plus elapsed fraction of that year.
pub fn decimal_year(date: NaiveDate) -> f64 {
    let y = date.year();
    let days = if NaiveDate::from_ymd_opt(y, 2, 29).is_some() { 366.0 } else { 365.0 };
    y as f64 + date.ordinal0() as f64 / days
}

/// Inverse of [`decimal_year`], to the nearest day at or before.
pub fn date_from_decimal_year(year: f64) -> NaiveDate {
    let y = year.floor() as i32;
    let days = if NaiveDate::from_ymd_opt(y, 2, 29).is_some() { 366.0 } else { 365.0 };
    let ord = (((year - y as f64) * days + 1e-6).floor() as u32).min(days as u32 - 1);
    NaiveDate::from_yo_opt(y, ord + 1).unwrap()
}

/// One threshold exceedance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    /// Negated time in seconds.
    pub x: f64,
    /// Decimal year of the swim.
    pub year: f64,
    /// Standardized time covariate.
    pub t: f64,
    /// Suit epoch: 0 none, 1 or 2.
    pub suit: u8,
    pub date: NaiveDate,
    pub swimmer_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nation: Option<String>,
}

/// Exceedances of one event above its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDataset {
    pub event_id: String,
    /// Censor-adjusted threshold `u'_e - s/2` on the negated scale.
    pub threshold_u: f64,
    /// The `n_exceed`-th best negated time.
    pub raw_threshold_u_prime: f64,
    /// `log(-threshold_u)`.
    pub u_l: f64,
    pub points: Vec<DataPoint>,
    pub censor_s: f64,
}

impl EventDataset {
    /// Best (largest) negated time, with its date.
    pub fn record(&self) -> Option<(f64, NaiveDate)> {
        self.points
            .iter()
            .max_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(b.date.cmp(&a.date)))
            .map(|p| (p.x, p.date))
    }
}

/// Negates times, takes the `n_exceed` best swims of `event_id` and sets the
/// threshold half a censoring interval below the slowest of them. Ties at
/// the boundary go to the earlier date, then the smaller swimmer id.
pub fn build_event_dataset(
    records: &[SwimRecord],
    event_id: &str,
    n_exceed: usize,
    s: f64,
    epochs: &SuitEpochs,
) -> Result<EventDataset> {
    let mut recs: Vec<&SwimRecord> = records.iter().filter(|r| r.event_id == event_id).collect();
    if n_exceed == 0 || recs.len() < n_exceed {
        return Err(Error::InsufficientData {
            what: format!("event {event_id}"),
            needed: n_exceed.max(1),
            have: recs.len(),
        });
    }
    recs.sort_by(|a, b| {
        a.time_s
            .partial_cmp(&b.time_s)
            .unwrap()
            .then(a.date.cmp(&b.date))
            .then(a.swimmer_id.cmp(&b.swimmer_id))
    });
    let kept = &recs[..n_exceed];
    let u_prime = -kept[n_exceed - 1].time_s;
    let u = u_prime - s / 2.0;
    let points = kept
        .iter()
        .map(|r| {
            let year = decimal_year(r.date);
            DataPoint {
                x: -r.time_s,
                year,
                t: f64::NAN,
                suit: epochs.epoch_of_year(year),
                date: r.date,
                swimmer_id: r.swimmer_id.clone(),
                nation: r.nation.clone(),
            }
        })
        .collect();
    Ok(EventDataset {
        event_id: event_id.to_string(),
        threshold_u: u,
        raw_threshold_u_prime: u_prime,
        u_l: (-u).ln(),
        points,
        censor_s: s,
    })
}

/// Builds datasets for every registry event present in `records`, in
/// registry order.
pub fn build_all(
    records: &[SwimRecord],
    registry: &Registry,
    n_exceed: usize,
    s: f64,
) -> Result<Vec<EventDataset>> {
    registry
        .events
        .iter()
        .filter(|e| records.iter().any(|r| r.event_id == e.id))
        .map(|e| build_event_dataset(records, &e.id, n_exceed, s, &registry.suit_epochs))
        .collect()
}

/// Linear standardization of decimal years, with the calendar-year
/// boundaries of the observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeScaler {
    pub mean: f64,
    pub sd: f64,
    pub year_boundaries: Vec<f64>,
}

impl TimeScaler {
    pub fn new(mean: f64, sd: f64, year_boundaries: Vec<f64>) -> Result<Self> {
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::DegenerateCovariate(format!("scaler sd {sd}")));
        }
        if year_boundaries.len() < 2 || year_boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(
                "year boundaries must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            mean,
            sd,
            year_boundaries,
        })
    }

    pub fn standardize(&self, year: f64) -> f64 {
        (year - self.mean) / self.sd
    }

    pub fn unstandardize(&self, t: f64) -> f64 {
        t * self.sd + self.mean
    }

    /// Observation window as decimal years.
    pub fn window_years(&self) -> (f64, f64) {
        (self.year_boundaries[0], *self.year_boundaries.last().unwrap())
    }

    /// Observation window on the standardized scale.
    pub fn window(&self) -> (f64, f64) {
        let (a, b) = self.window_years();
        (self.standardize(a), self.standardize(b))
    }

    /// Sets the standardized covariate of every point.
    pub fn apply(&self, datasets: &mut [EventDataset]) {
        for d in datasets {
            for p in &mut d.points {
                p.t = self.standardize(p.year);
            }
        }
    }
}

/// Fits the scaler on all exceedance dates pooled over events (population
/// standard deviation). The window spans whole calendar years.
pub fn fit_time_scaler(datasets: &[EventDataset]) -> Result<TimeScaler> {
    let years: Vec<f64> = datasets
        .iter()
        .flat_map(|d| d.points.iter().map(|p| p.year))
        .collect();
    fit_time_scaler_years(&years)
}

/// [`fit_time_scaler`] on raw decimal years.
pub fn fit_time_scaler_years(years: &[f64]) -> Result<TimeScaler> {
    if years.is_empty() {
        return Err(Error::InsufficientData {
            what: "time scaler".into(),
            needed: 1,
            have: 0,
        });
    }
    let n = years.len() as f64;
    let mean = years.iter().sum::<f64>() / n;
    let var = years.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::DegenerateCovariate(
            "all observation dates are equal".into(),
        ));
    }
    let lo = years.iter().copied().fold(f64::INFINITY, f64::min).floor() as i64;
    let hi = years.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor() as i64 + 1;
    let bounds = (lo..=hi).map(|y| y as f64).collect();
    TimeScaler::new(mean, sd, bounds)
}
