//! Output tables: their column sets, a CSV writer and the schema checker.

use std::fs;
use std::path::{Path, PathBuf};

use crate::Failure;

pub const LADDER: &[&str] = &["model", "constraints", "loglik", "n_params", "effective_dof", "criterion", "relative"];
pub const CV: &[&str] = &["phi_r", "score", "chosen"];
pub const PP: &[&str] = &["expected", "observed", "lo", "hi"];
pub const RATE: &[&str] = &["year", "expected", "observed", "lo", "hi"];
pub const RANKS: &[&str] = &[
    "rank", "swimmer", "event", "time", "date", "nation", "r_value", "ci_lo", "ci_hi", "rank_lo", "rank_hi",
];
pub const PARAMETERS: &[&str] = &["name", "estimate", "ci_lo", "ci_hi"];
pub const ULTIMATE: &[&str] = &["event", "ultimate_s", "ci_lo", "ci_hi", "record_s"];
pub const NEXT_RECORD: &[&str] = &[
    "event", "record_s", "expected_next_s", "ci_lo", "ci_hi", "expected_wait_years",
];
pub const WAITING: &[&str] = &["event", "years", "cdf", "ci_lo", "ci_hi"];
pub const NEXT_EVENT: &[&str] = &["event", "raw", "probability", "ci_lo", "ci_hi"];
pub const ADJUSTED: &[&str] = &[
    "event", "holder", "date", "wr_s", "awr_s", "nswr_holder", "nswr_s", "winner", "survives",
];
pub const ADJUSTED_SWIM: &[&str] = &["event", "date", "time_s", "direction", "adjusted_s"];
pub const RESULTS: &[&str] = &["swimmer_id", "event_id", "time_s", "date", "nation"];

/// Known tables by file name; rate files match by prefix.
fn schema_for(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "ladder.csv" => LADDER,
        "cv.csv" => CV,
        "pp.csv" => PP,
        "ranks.csv" => RANKS,
        "parameters.csv" => PARAMETERS,
        "ultimate.csv" => ULTIMATE,
        "next_record.csv" => NEXT_RECORD,
        "waiting.csv" => WAITING,
        "next_event_prob.csv" => NEXT_EVENT,
        "adjusted.csv" => ADJUSTED,
        "adjusted_swim.csv" => ADJUSTED_SWIM,
        "results.csv" => RESULTS,
        n if n.starts_with("rate_") && n.ends_with(".csv") => RATE,
        _ => return None,
    })
}

pub struct Table {
    path: PathBuf,
    w: csv::Writer<fs::File>,
    width: usize,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, Failure> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Failure::Internal(format!("{}: {e}", dir.display())))?;
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))?;
        w.write_record(header).map_err(|e| Failure::Internal(e.to_string()))?;
        Ok(Self {
            path: path.to_path_buf(),
            w,
            width: header.len(),
        })
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<(), Failure>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let rec: csv::ByteRecord = cells.into_iter().collect();
        assert_eq!(rec.len(), self.width, "row width for {}", self.path.display());
        self.w.write_byte_record(&rec).map_err(|e| Failure::Internal(e.to_string()))
    }

    pub fn finish(mut self) -> Result<(), Failure> {
        self.w.flush().map_err(|e| Failure::Internal(format!("{}: {e}", self.path.display())))
    }
}

pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        String::new()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Seconds rounded to the hundredth.
pub fn secs(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        num(v)
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn interval(ci: Option<(f64, f64)>) -> [String; 2] {
    match ci {
        Some((a, b)) => [num(a), num(b)],
        None => [String::new(), String::new()],
    }
}

/// Checks the header of every known table under `dir`; returns the files
/// checked.
pub fn check_dir(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(|e| Failure::Input(format!("{}: {e}", d.display())))?;
        for entry in entries {
            let p = entry.map_err(|e| Failure::Input(e.to_string()))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut checked = Vec::new();
    for p in files {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Some(want) = schema_for(name) else { continue };
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(&p)
            .map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
        let mut rows = r.records();
        let header = match rows.next() {
            Some(Ok(h)) => h,
            _ => return Err(Failure::Input(format!("{}: missing header", p.display()))),
        };
        let got: Vec<&str> = header.iter().collect();
        // the input schema allows the nation column to be absent
        let ok = got == want || (want == RESULTS && got == want[..4]);
        if !ok {
            return Err(Failure::Input(format!(
                "{}: header {:?}, expected {:?}",
                p.display(),
                got,
                want
            )));
        }
        for (i, row) in rows.enumerate() {
            let row = row.map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            if row.len() != got.len() {
                return Err(Failure::Input(format!(
                    "{}: row {} has {} fields, expected {}",
                    p.display(),
                    i + 2,
                    row.len(),
                    got.len()
                )));
            }
        }
        checked.push(p);
    }
    Ok(checked)
}
