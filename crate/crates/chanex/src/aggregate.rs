//! Summaries of many runs grouped by config fields.

use std::collections::BTreeMap;
use std::io::Write;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::registry::StoredRun;

/// Statistics of one summary metric over the runs of one group.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    /// Value of each group-by field, in group-by order.
    pub group: Vec<String>,
    pub metric: String,
    pub count: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Text of the config field at a dotted path; strings without quotes.
fn field(config: &Value, path: &str) -> Option<String> {
    let v = path.split('.').try_fold(config, |v, p| v.get(p))?;
    Some(match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    })
}

/// Median of a non-empty slice; the mean of the middle two for even lengths.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Groups the completed runs by the `group_by` fields and reduces every
/// summary metric. Rows are sorted by group then metric.
pub fn aggregate(runs: &[StoredRun], group_by: &[String]) -> Result<Vec<AggregateRow>> {
    let mut groups: BTreeMap<(Vec<String>, String), Vec<f64>> = BTreeMap::new();
    let mut any = false;
    for run in runs {
        let Some(summary) = &run.summary else { continue };
        any = true;
        let config = serde_json::to_value(&run.config).expect("config serializes");
        let mut key = Vec::new();
        let mut missing = Vec::new();
        for path in group_by {
            match field(&config, path) {
                Some(v) => key.push(v),
                None => missing.push(format!("{path}: unknown field")),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Schema(missing));
        }
        for (metric, &value) in &summary.values {
            groups.entry((key.clone(), metric.clone())).or_default().push(value);
        }
    }
    if !any {
        return Err(Error::EmptyInput);
    }
    Ok(groups
        .into_iter()
        .map(|((group, metric), mut values)| {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            AggregateRow { group, metric, count: values.len(), median: median(&mut values), min, max }
        })
        .collect())
}

/// CSV with one column per group-by field, then
/// `metric,count,median,min,max`.
pub fn write_csv<W: Write>(out: W, group_by: &[String], rows: &[AggregateRow]) -> Result<()> {
    let err = |e: csv::Error| Error::format("aggregate csv", e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> =
        group_by.iter().map(String::as_str).chain(["metric", "count", "median", "min", "max"]).collect();
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = r.group.clone();
        rec.extend([r.metric.clone(), r.count.to_string(), r.median.to_string(), r.min.to_string(), r.max.to_string()]);
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::format("aggregate csv", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [5.0]), 5.0);
    }

    #[test]
    fn no_completed_runs_is_empty_input() {
        assert!(matches!(aggregate(&[], &[]), Err(Error::EmptyInput)));
    }
}
