//! Metrics files of a run.
//!
//! `metrics.csv` holds the per-epoch series with header
//! `epoch,metric,value,seed,config_hash`, rows ordered by metric then
//! epoch. Values use Rust's shortest round-trip formatting, so identical
//! runs give identical bytes. `summary.json` holds the scalar summaries.

use std::collections::BTreeMap;
use std::path::Path;

use chanex_core::selection::SelectionPattern;
use chanex_core::tasks::Metrics;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

pub const CSV_HEADER: [&str; 5] = ["epoch", "metric", "value", "seed", "config_hash"];

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub config_hash: String,
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("metrics csv", e.to_string())
}

pub fn metrics_csv(metrics: &Metrics, seed: u64, config_hash: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    let seed = seed.to_string();
    for (epoch, name, value) in metrics.rows() {
        w.write_record([&epoch.to_string(), name, &value.to_string(), &seed, config_hash]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::format("metrics csv", e.to_string()))
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::format("metrics csv", format!("unexpected header {header:?}")));
    }
    let bad = |what: &str, s: &str| Error::format("metrics csv", format!("bad {what} `{s}`"));
    let mut rows = Vec::new();
    for record in r.records() {
        let rec = record.map_err(csv_err)?;
        rows.push(Row {
            epoch: rec[0].parse().map_err(|_| bad("epoch", &rec[0]))?,
            metric: rec[1].to_string(),
            value: rec[2].parse().map_err(|_| bad("value", &rec[2]))?,
            seed: rec[3].parse().map_err(|_| bad("seed", &rec[3]))?,
            config_hash: rec[4].to_string(),
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>> {
    parse_csv(&fsutil::read(path)?)
}

/// JSON number, or a string for values JSON cannot hold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum JsonF64 {
    Num(f64),
    Text(NonFinite),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
enum NonFinite {
    #[serde(rename = "nan")]
    Nan,
    #[serde(rename = "inf")]
    Inf,
    #[serde(rename = "-inf")]
    NegInf,
}

impl From<f64> for JsonF64 {
    fn from(v: f64) -> Self {
        match v {
            v if v.is_finite() => JsonF64::Num(v),
            v if v.is_nan() => JsonF64::Text(NonFinite::Nan),
            v if v > 0.0 => JsonF64::Text(NonFinite::Inf),
            _ => JsonF64::Text(NonFinite::NegInf),
        }
    }
}

impl From<JsonF64> for f64 {
    fn from(v: JsonF64) -> f64 {
        match v {
            JsonF64::Num(v) => v,
            JsonF64::Text(NonFinite::Nan) => f64::NAN,
            JsonF64::Text(NonFinite::Inf) => f64::INFINITY,
            JsonF64::Text(NonFinite::NegInf) => f64::NEG_INFINITY,
        }
    }
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub wall_clock_s: f64,
    /// Observation pattern of the saved model, when it has one.
    pub pattern: Option<SelectionPattern>,
    pub values: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct SummaryRepr {
    config_hash: String,
    seed: u64,
    wall_clock_s: f64,
    pattern: Option<SelectionPattern>,
    values: BTreeMap<String, JsonF64>,
}

pub fn summary_json(s: &Summary) -> Result<String> {
    let repr = SummaryRepr {
        config_hash: s.config_hash.clone(),
        seed: s.seed,
        wall_clock_s: s.wall_clock_s,
        pattern: s.pattern.clone(),
        values: s.values.iter().map(|(k, v)| (k.clone(), JsonF64::from(*v))).collect(),
    };
    serde_json::to_string_pretty(&repr).map_err(|e| Error::format("summary", e.to_string()))
}

pub fn parse_summary(text: &str) -> Result<Summary> {
    let r: SummaryRepr = serde_json::from_str(text).map_err(|e| Error::format("summary", e.to_string()))?;
    Ok(Summary {
        config_hash: r.config_hash,
        seed: r.seed,
        wall_clock_s: r.wall_clock_s,
        pattern: r.pattern,
        values: r.values.into_iter().map(|(k, v)| (k, v.into())).collect(),
    })
}

pub fn write_summary(path: &Path, s: &Summary) -> Result<()> {
    fsutil::write_atomic(path, summary_json(s)?.as_bytes())
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    parse_summary(&fsutil::read_string(path)?)
}

/// Plot export of a metrics file: `epoch,metric,value` rows in file order.
pub fn plot_csv(rows: &[Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "metric", "value"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([&r.epoch.to_string(), r.metric.as_str(), &r.value.to_string()]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::format("metrics csv", e.to_string()))
}

/// JSON counterpart of [`plot_csv`]: an array of `{epoch, metric, value}`.
pub fn plot_json(rows: &[Row]) -> Result<String> {
    #[derive(Serialize)]
    struct Point<'a> {
        epoch: usize,
        metric: &'a str,
        value: JsonF64,
    }
    let points: Vec<Point> = rows.iter().map(|r| Point { epoch: r.epoch, metric: &r.metric, value: r.value.into() }).collect();
    let mut text = serde_json::to_string_pretty(&points).map_err(|e| Error::format("plot", e.to_string()))?;
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Metrics {
        let mut m = Metrics::default();
        m.push("test_nmse", 0, 0.5);
        m.push("test_nmse", 1, 0.1 + 0.2);
        m.push("a_loss", 1, 1e-300);
        m.set("final_nmse", 0.3);
        m
    }

    #[test]
    fn csv_round_trips_exactly() {
        let bytes = metrics_csv(&sample(), 7, "abc").unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("epoch,metric,value,seed,config_hash\n1,a_loss,"), "{text}");
        let rows = parse_csv(&bytes).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].value, 0.1 + 0.2);
        assert_eq!(rows[0].value, 1e-300);
        assert_eq!((rows[1].seed, rows[1].config_hash.as_str()), (7, "abc"));
    }

    #[test]
    fn summary_keeps_non_finite_values() {
        let s = Summary {
            config_hash: "h".into(),
            seed: 1,
            wall_clock_s: 0.25,
            pattern: Some(SelectionPattern::from_indices(4, &[1, 3]).unwrap()),
            values: [("a".to_string(), f64::INFINITY), ("b".to_string(), 2.5), ("c".to_string(), f64::NEG_INFINITY)]
                .into_iter()
                .collect(),
        };
        let text = summary_json(&s).unwrap();
        assert!(text.contains("\"inf\""));
        assert_eq!(parse_summary(&text).unwrap(), s);
        let mut nan = s.clone();
        nan.values.insert("d".into(), f64::NAN);
        assert!(parse_summary(&summary_json(&nan).unwrap()).unwrap().values["d"].is_nan());
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(parse_csv(b"epoch,name,value\n").is_err());
    }
}
