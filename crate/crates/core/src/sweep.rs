//! One-axis sweeps over depth, width, weight decay or activation, run on a
//! bounded worker pool and aggregated per condition.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::model::Activation;
use crate::numcore::Scalar;
use crate::protocol::{run_two_phase, ProtocolConfig, RunStatus, TwoPhaseRun};
use crate::stats::{mean, sample_std};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Depth,
    Width,
    WeightDecay,
    Activation,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Depth => "depth",
            SweepAxis::Width => "width",
            SweepAxis::WeightDecay => "wd",
            SweepAxis::Activation => "activation",
        }
    }

    /// Parses one value and checks it has the right type for this axis.
    pub fn parse_value(self, s: &str) -> Result<AxisValue> {
        let s = s.trim();
        let bad = || Error::arg(format!("`{s}` is not a valid {} value", self.label()));
        match self {
            SweepAxis::Depth | SweepAxis::Width => match s.parse::<usize>() {
                Ok(n) if n > 0 => Ok(AxisValue::Count(n)),
                _ => Err(bad()),
            },
            SweepAxis::WeightDecay => match s.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(AxisValue::Real(v)),
                _ => Err(bad()),
            },
            SweepAxis::Activation => s.parse::<Activation>().map(AxisValue::Act).map_err(|_| bad()),
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(SweepAxis::Depth),
            "width" => Ok(SweepAxis::Width),
            "wd" | "weight_decay" | "weight-decay" => Ok(SweepAxis::WeightDecay),
            "activation" => Ok(SweepAxis::Activation),
            other => Err(Error::arg(format!(
                "unknown sweep axis `{other}` (depth, width, weight_decay, activation)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Count(usize),
    Real(f64),
    Act(Activation),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Count(n) => write!(f, "{n}"),
            AxisValue::Real(v) => write!(f, "{v}"),
            AxisValue::Act(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<AxisValue>,
    pub seeds: Vec<u64>,
    pub base: ProtocolConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::arg("sweep needs at least one value"));
        }
        if self.seeds.is_empty() {
            return Err(Error::arg("sweep needs at least one seed"));
        }
        for v in &self.values {
            let ok = matches!(
                (self.axis, v),
                (SweepAxis::Depth | SweepAxis::Width, AxisValue::Count(n)) if *n > 0
            ) || matches!((self.axis, v), (SweepAxis::WeightDecay, AxisValue::Real(x)) if *x >= 0.0)
                || matches!((self.axis, v), (SweepAxis::Activation, AxisValue::Act(_)));
            if !ok {
                return Err(Error::arg(format!("value {v} does not fit axis {}", self.axis.label())));
            }
        }
        self.base.validate()
    }

    pub fn condition(&self, value: &AxisValue) -> String {
        format!("{}={value}", self.axis.label())
    }

    /// Base config with the axis value applied.
    pub fn config_for(&self, value: &AxisValue, seed: u64) -> ProtocolConfig {
        let mut c = self.base.clone();
        c.seed = seed;
        match (self.axis, *value) {
            (SweepAxis::Depth, AxisValue::Count(n)) => c.model.depth = n,
            (SweepAxis::Width, AxisValue::Count(n)) => c.model.width = n,
            (SweepAxis::WeightDecay, AxisValue::Real(v)) => c.optimizer.set_weight_decay(v),
            (SweepAxis::Activation, AxisValue::Act(a)) => c.model.activation = a,
            _ => unreachable!("validated"),
        }
        c
    }

    /// `(condition, config)` per run, values outermost, in spec order.
    pub fn jobs(&self) -> Vec<(String, ProtocolConfig)> {
        self.values
            .iter()
            .flat_map(|v| self.seeds.iter().map(move |&s| (self.condition(v), self.config_for(v, s))))
            .collect()
    }
}

pub struct SweepResult<T> {
    pub condition: String,
    pub config: ProtocolConfig,
    pub outcome: Result<TwoPhaseRun<T>>,
}

/// Runs every job on a pool of `workers` threads. Results come back in
/// [`SweepSpec::jobs`] order; each run is independent of the pool size.
pub fn run_sweep<T: Scalar>(spec: &SweepSpec, data: &Dataset<T>, workers: usize) -> Result<Vec<SweepResult<T>>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::arg(format!("worker pool: {e}")))?;
    let jobs = spec.jobs();
    Ok(pool.install(|| {
        jobs.into_par_iter()
            .map(|(condition, config)| {
                let outcome = run_two_phase(&config, data);
                SweepResult {
                    condition,
                    config,
                    outcome,
                }
            })
            .collect()
    }))
}

/// One aggregate row per condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub condition: String,
    pub n: usize,
    pub nc1_threshold: f64,
    pub t_nc_mean: Option<f64>,
    pub t_nc_std: Option<f64>,
    pub fn_mean: Option<f64>,
    pub fn_std: Option<f64>,
    pub collapsed: usize,
    pub dnf: usize,
    pub diverged: usize,
    /// Runs that returned an error instead of a record.
    pub failed: usize,
}

impl AggregateRow {
    /// Overall status of the condition: the most common outcome.
    pub fn status(&self) -> &'static str {
        let counts = [
            (self.collapsed, "Collapsed"),
            (self.dnf, "DNF"),
            (self.diverged, "Diverged"),
            (self.failed, "Failed"),
        ];
        counts
            .iter()
            .rev()
            .max_by_key(|(c, _)| *c)
            .map_or("Failed", |(_, s)| s)
    }
}

/// Per-run outcome as seen by the aggregator.
pub struct RunOutcome<'a> {
    pub condition: &'a str,
    pub nc1_threshold: f64,
    pub status: Option<RunStatus>,
    pub t_nc: Option<usize>,
    pub fn_at_t_nc: Option<f64>,
}

impl<'a, T> From<&'a SweepResult<T>> for RunOutcome<'a> {
    fn from(r: &'a SweepResult<T>) -> Self {
        let rec = r.outcome.as_ref().ok().map(|o| &o.record);
        Self {
            condition: &r.condition,
            nc1_threshold: r.config.nc1_threshold,
            status: rec.map(|x| x.status),
            t_nc: rec.and_then(|x| x.t_nc),
            fn_at_t_nc: rec.and_then(|x| x.fn_at_t_nc),
        }
    }
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    (mean(xs).ok(), sample_std(xs).ok())
}

/// Groups outcomes by condition in first-seen order. T_NC and fn statistics
/// use collapsed runs only.
pub fn aggregate<'a>(outcomes: impl IntoIterator<Item = RunOutcome<'a>>) -> Vec<AggregateRow> {
    let mut rows: Vec<(AggregateRow, Vec<f64>, Vec<f64>)> = Vec::new();
    for o in outcomes {
        let idx = match rows.iter().position(|(r, _, _)| r.condition == o.condition) {
            Some(i) => i,
            None => {
                rows.push((
                    AggregateRow {
                        condition: o.condition.to_string(),
                        n: 0,
                        nc1_threshold: o.nc1_threshold,
                        t_nc_mean: None,
                        t_nc_std: None,
                        fn_mean: None,
                        fn_std: None,
                        collapsed: 0,
                        dnf: 0,
                        diverged: 0,
                        failed: 0,
                    },
                    vec![],
                    vec![],
                ));
                rows.len() - 1
            }
        };
        let (row, tncs, fns) = &mut rows[idx];
        row.n += 1;
        match o.status {
            Some(RunStatus::Collapsed) => {
                row.collapsed += 1;
                if let (Some(t), Some(f)) = (o.t_nc, o.fn_at_t_nc) {
                    tncs.push(t as f64);
                    fns.push(f);
                }
            }
            Some(RunStatus::Dnf) => row.dnf += 1,
            Some(RunStatus::Diverged) => row.diverged += 1,
            None => row.failed += 1,
        }
    }
    rows.into_iter()
        .map(|(mut row, tncs, fns)| {
            (row.t_nc_mean, row.t_nc_std) = mean_std(&tncs);
            (row.fn_mean, row.fn_std) = mean_std(&fns);
            row
        })
        .collect()
}

pub const AGGREGATE_COLUMNS: [&str; 12] = [
    "condition",
    "N",
    "nc1_threshold",
    "t_nc_mean",
    "t_nc_std",
    "fn_at_tnc_mean",
    "fn_at_tnc_std",
    "collapsed",
    "dnf",
    "diverged",
    "failed",
    "status",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(AGGREGATE_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.condition.clone(),
            r.n.to_string(),
            r.nc1_threshold.to_string(),
            opt(r.t_nc_mean),
            opt(r.t_nc_std),
            opt(r.fn_mean),
            opt(r.fn_std),
            r.collapsed.to_string(),
            r.dnf.to_string(),
            r.diverged.to_string(),
            r.failed.to_string(),
            r.status().to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn parse_aggregate_csv(text: &str, source: &str) -> Result<Vec<AggregateRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let err = |line: u64, message: String| Error::Csv {
        path: source.to_string(),
        line,
        message,
    };
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != AGGREGATE_COLUMNS {
        return Err(err(1, format!("expected columns {}", AGGREGATE_COLUMNS.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| rec.get(i).unwrap_or("");
        let count = |i: usize| {
            f(i).parse::<usize>()
                .map_err(|_| err(line, format!("column {}: bad count `{}`", AGGREGATE_COLUMNS[i], f(i))))
        };
        let real = |i: usize| {
            f(i).parse::<f64>()
                .map_err(|_| err(line, format!("column {}: bad number `{}`", AGGREGATE_COLUMNS[i], f(i))))
        };
        let optional = |i: usize| if f(i).is_empty() { Ok(None) } else { real(i).map(Some) };
        rows.push(AggregateRow {
            condition: f(0).to_string(),
            n: count(1)?,
            nc1_threshold: real(2)?,
            t_nc_mean: optional(3)?,
            t_nc_std: optional(4)?,
            fn_mean: optional(5)?,
            fn_std: optional(6)?,
            collapsed: count(7)?,
            dnf: count(8)?,
            diverged: count(9)?,
            failed: count(10)?,
        });
    }
    Ok(rows)
}
