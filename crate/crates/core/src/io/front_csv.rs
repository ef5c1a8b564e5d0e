//! Front CSV files.
//!
//! Header `pref_0..pref_{T-1},acc_0..acc_{T-1},nacc_0..nacc_{T-1}`, one row
//! per evaluated preference. Values use 17 significant digits, so a read
//! returns the written doubles exactly.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{Front, FrontPoint};
use crate::types::Preference;

pub fn header(tasks: usize) -> Vec<String> {
    ["pref", "acc", "nacc"]
        .iter()
        .flat_map(|k| (0..tasks).map(move |t| format!("{k}_{t}")))
        .collect()
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `front` to `path`. Points without raw accuracies are rejected.
pub fn write_front_csv(front: &Front, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let t = front.dim();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::format(path.display(), e.to_string());
    w.write_record(header(t)).map_err(csv_err)?;
    for point in &front.points {
        let raw = point
            .raw_acc
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("front point lacks raw accuracies".into()))?;
        let row: Vec<String> = point
            .preference
            .weights()
            .iter()
            .chain(raw)
            .chain(&point.normalized_acc)
            .map(|&x| fmt(x))
            .collect();
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a front written by [`write_front_csv`], with the origin as reference.
pub fn read_front_csv(path: impl AsRef<Path>) -> Result<Front> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let head: Vec<String> = r
        .headers()
        .map_err(|e| Error::format(path.display(), format!("line 1: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if head.is_empty() || head.len() % 3 != 0 || head != header(head.len() / 3) {
        return Err(Error::format(path.display(), "line 1: unexpected header"));
    }
    let t = head.len() / 3;
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let bad = |msg: String| Error::format(path.display(), format!("line {line}: {msg}"));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 3 * t {
            return Err(bad(format!("expected {} fields, found {}", 3 * t, rec.len())));
        }
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        let pref = Preference::new(vals[..t].to_vec()).map_err(|e| bad(e.to_string()))?;
        let point = FrontPoint::new(vals[2 * t..].to_vec(), pref, Some(vals[t..2 * t].to_vec()))
            .map_err(|e| bad(e.to_string()))?;
        points.push(point);
    }
    Front::with_origin(t, points)
}
