use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::config::Method;
use crate::error::Result;

/// Metric series of one trial of one method, keyed by metric name; each
/// series holds `(k, value)` pairs in increasing `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialSeries {
    pub method: Method,
    pub seed: u64,
    pub metrics: BTreeMap<String, Vec<(usize, f64)>>,
}

impl TrialSeries {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            seed,
            metrics: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, metric: &str, k: usize, value: f64) {
        self.metrics
            .entry(metric.to_owned())
            .or_default()
            .push((k, value));
    }

    pub fn series(&self, metric: &str) -> Option<&[(usize, f64)]> {
        self.metrics.get(metric).map(Vec::as_slice)
    }

    pub fn last(&self, metric: &str) -> Option<f64> {
        self.series(metric).and_then(|s| s.last()).map(|p| p.1)
    }
}

/// Mean and standard error over trials at one `k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub method: String,
    pub metric: String,
    pub k: usize,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

pub const AGGREGATE_COLUMNS: [&str; 6] = ["method", "metric", "k", "mean", "stderr", "trials"];

/// Two-pass mean and standard error `sqrt(s^2 / n)` with the unbiased
/// sample variance `s^2`; zero error for a single value.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

/// One row per `(method, metric, k)`, over the trials that reached `k`.
pub fn aggregate(trials: &[TrialSeries]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Method, String, usize), Vec<f64>> = BTreeMap::new();
    for t in trials {
        for (metric, series) in &t.metrics {
            for &(k, v) in series {
                groups
                    .entry((t.method, metric.clone(), k))
                    .or_default()
                    .push(v);
            }
        }
    }
    groups
        .into_iter()
        .map(|((method, metric, k), values)| {
            let (mean, stderr) = mean_stderr(&values);
            AggregateRow {
                method: method.as_str().to_owned(),
                metric,
                k,
                mean,
                stderr,
                trials: values.len(),
            }
        })
        .collect()
}

/// Mean series of `metric` for `method`.
pub fn mean_series(rows: &[AggregateRow], method: Method, metric: &str) -> Vec<(usize, f64, f64)> {
    rows.iter()
        .filter(|r| r.method == method.as_str() && r.metric == metric)
        .map(|r| (r.k, r.mean, r.stderr))
        .collect()
}

pub fn write_aggregate<W: Write>(rows: &[AggregateRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(AGGREGATE_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.method.clone(),
            r.metric.clone(),
            r.k.to_string(),
            format!("{:e}", r.mean),
            format!("{:e}", r.stderr),
            r.trials.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub const JOINED_COLUMNS: [&str; 5] = ["method", "seed", "k", "metric", "value"];

/// Long format: one row per `(method, trial, k, metric)`.
pub fn write_joined<W: Write>(trials: &[TrialSeries], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(JOINED_COLUMNS)?;
    for t in trials {
        for (metric, series) in &t.metrics {
            for &(k, v) in series {
                out.write_record([
                    t.method.as_str().to_owned(),
                    t.seed.to_string(),
                    k.to_string(),
                    metric.clone(),
                    format!("{v:e}"),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_of_known_values() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn aggregate_header_is_stable() {
        let mut t = TrialSeries::new(Method::Iklpd, 1);
        t.push("loss", 1, 0.5);
        let mut buf = Vec::new();
        write_aggregate(&aggregate(&[t]), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "method,metric,k,mean,stderr,trials\niklpd,loss,1,5e-1,0e0,1\n"
        );
    }
}
