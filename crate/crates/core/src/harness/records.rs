//! Experiment measurements and their CSV form
//! (`env,model,dim,seed,metric,value`, floats at 17 significant digits).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["env", "model", "dim", "seed", "metric", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    AvgSteps,
    Mse,
    SmoothnessEstimated,
    SmoothnessIdeal,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::AvgSteps, Metric::Mse, Metric::SmoothnessEstimated, Metric::SmoothnessIdeal];

    pub fn name(self) -> &'static str {
        match self {
            Metric::AvgSteps => "avg_steps",
            Metric::Mse => "mse",
            Metric::SmoothnessEstimated => "smoothness_estimated",
            Metric::SmoothnessIdeal => "smoothness_ideal",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown metric '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub env: String,
    pub model: String,
    pub dim: usize,
    pub seed: u64,
    pub metric: Metric,
    pub value: f64,
}

impl ResultRecord {
    pub fn new(
        env: impl Into<String>,
        model: impl Into<String>,
        dim: usize,
        seed: u64,
        metric: Metric,
        value: f64,
    ) -> Self {
        ResultRecord { env: env.into(), model: model.into(), dim, seed, metric, value }
    }

    fn sort_key(&self) -> (&str, &str, usize, u64, &'static str) {
        (&self.env, &self.model, self.dim, self.seed, self.metric.name())
    }
}

/// Canonical float text: 17 significant digits, which round-trips any f64.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Sorts by `(env, model, dim, seed, metric)`.
pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then(a.value.total_cmp(&b.value)));
}

/// Writes the header and the records in sorted order.
pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &sorted {
        if !r.value.is_finite() {
            return Err(Error::Contract(format!(
                "non-finite {} for {}/{} d={} seed={}",
                r.metric, r.env, r.model, r.dim, r.seed
            )));
        }
        w.write_record([
            r.env.as_str(),
            r.model.as_str(),
            &r.dim.to_string(),
            &r.seed.to_string(),
            r.metric.name(),
            &format_value(r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            reason: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |k: usize| {
            row.get(k).ok_or_else(|| Error::Parse { line, reason: format!("missing column {}", CSV_HEADER[k]) })
        };
        let bad = |what: &str| Error::Parse { line, reason: format!("invalid {what}") };
        let value: f64 = field(5)?.parse().map_err(|_| bad("value"))?;
        if !value.is_finite() {
            return Err(bad("value"));
        }
        out.push(ResultRecord {
            env: field(0)?.to_string(),
            model: field(1)?.to_string(),
            dim: field(2)?.parse().map_err(|_| bad("dim"))?,
            seed: field(3)?.parse().map_err(|_| bad("seed"))?,
            metric: field(4)?.parse().map_err(|_| bad("metric"))?,
            value,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn to_string(records: &[ResultRecord]) -> String {
        let mut buf = Vec::new();
        write_csv(records, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn sorted_output_with_header() {
        let records = vec![
            ResultRecord::new("two-room", "pvf", 20, 1, Metric::AvgSteps, 12.5),
            ResultRecord::new("two-room", "n2v", 30, 0, Metric::AvgSteps, 9.0),
            ResultRecord::new("two-room", "pvf", 10, 1, Metric::AvgSteps, 40.0),
        ];
        let text = to_string(&records);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "env,model,dim,seed,metric,value");
        assert_eq!(lines[1], "two-room,n2v,30,0,avg_steps,9.0000000000000000e0");
        assert!(lines[2].starts_with("two-room,pvf,10,"));
        assert!(lines[3].starts_with("two-room,pvf,20,"));
    }

    #[test]
    fn rejects_non_finite_and_bad_rows() {
        let mut buf = Vec::new();
        assert!(write_csv(&[ResultRecord::new("e", "m", 1, 0, Metric::Mse, f64::NAN)], &mut buf).is_err());
        assert!(read_csv("env,model\n".as_bytes()).is_err());
        assert!(read_csv("env,model,dim,seed,metric,value\ne,m,x,0,mse,1\n".as_bytes()).is_err());
        assert!(read_csv("env,model,dim,seed,metric,value\ne,m,1,0,speed,1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in proptest::collection::vec(
            (0usize..200, 0u64..1000, 0usize..4, proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO),
            1..20,
        )) {
            let records: Vec<ResultRecord> = rows
                .into_iter()
                .map(|(dim, seed, m, value)| ResultRecord::new("two-room", "n2v", dim, seed, Metric::ALL[m], value))
                .collect();
            let text = to_string(&records);
            let parsed = read_csv(text.as_bytes()).unwrap();
            let mut sorted = records.clone();
            sort_records(&mut sorted);
            prop_assert_eq!(&parsed, &sorted);
            prop_assert_eq!(to_string(&parsed), text);
        }
    }
}
