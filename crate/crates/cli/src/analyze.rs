//! `nclab analyze`: summary statistics from stored runs or small result tables.
//!
//! Each input is either a run directory, a bare `log.csv`, or a CSV table
//! recognised by its header (lines starting with `#` are comments):
//!
//! | header | analysis |
//! |---|---|
//! | `group,value` | per-group summary, t and bootstrap intervals, ANOVA |
//! | `width,t_nc_mean,t_nc_std,fn_mean,fn_std` | width trends |
//! | `dataset,architecture,nc1_threshold,n,fn_mean,fn_std` | 2×2 grid effects |
//! | `condition,fn_star_tight,fn_star_loose` | threshold robustness ratios |
//! | aggregate sweep table | per-condition intervals from mean/std |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nclab::ncmetrics::NcSnapshot;
use nclab::numcore::RngState;
use nclab::persist::{self, load_run, LOG_COLUMNS, MANIFEST_FILE};
use nclab::protocol::{ProtocolConfig, RunKind, RunRecord};
use nclab::stats::{self, GroupSummary, DEFAULT_RESAMPLES};
use nclab::sweep::AGGREGATE_COLUMNS;
use nclab::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::table::{md_table, num};
use crate::AnalyzeArgs;

const LEVEL: f64 = 0.95;

/// One output statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub table: String,
    pub label: String,
    pub statistic: String,
    pub value: f64,
}

#[derive(Default)]
struct Out {
    rows: Vec<StatRow>,
    md: String,
}

impl Out {
    fn push(&mut self, table: &str, label: &str, statistic: &str, value: f64) {
        self.rows.push(StatRow {
            table: table.into(),
            label: label.into(),
            statistic: statistic.into(),
            value,
        });
    }

    fn section(&mut self, title: &str, headers: &[&str], rows: &[Vec<String>]) {
        self.md += &format!("## {title}\n\n{}\n", md_table(headers, rows));
    }
}

#[derive(Debug, Deserialize)]
struct SampleRow {
    group: String,
    value: f64,
}

#[derive(Debug, Deserialize)]
struct WidthRow {
    width: f64,
    t_nc_mean: f64,
    #[allow(dead_code)]
    t_nc_std: f64,
    fn_mean: f64,
    #[allow(dead_code)]
    fn_std: f64,
}

#[derive(Debug, Deserialize)]
struct GridRow {
    dataset: String,
    architecture: String,
    nc1_threshold: f64,
    n: usize,
    fn_mean: f64,
    fn_std: f64,
}

#[derive(Debug, Deserialize)]
struct RobustRow {
    condition: String,
    fn_star_tight: f64,
    fn_star_loose: f64,
}

#[derive(Debug, Deserialize)]
struct AggRow {
    condition: String,
    #[serde(rename = "N")]
    n: usize,
    t_nc_mean: Option<f64>,
    t_nc_std: Option<f64>,
    fn_at_tnc_mean: Option<f64>,
    fn_at_tnc_std: Option<f64>,
    collapsed: usize,
}

enum Input {
    Runs(Vec<RunRecord>, String),
    Table(String, String),
}

/// Removes comment lines and returns the text with the header columns.
fn strip_comments(text: &str) -> (String, Vec<String>) {
    let body: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .map(|l| format!("{l}\n"))
        .collect();
    let header = body
        .lines()
        .next()
        .map(|h| h.split(',').map(|c| c.trim().to_string()).collect())
        .unwrap_or_default();
    (body, header)
}

fn record_from_log(snapshots: Vec<NcSnapshot>, threshold: f64) -> RunRecord {
    let p1 = snapshots.iter().filter(|s| s.phase == 1).count();
    let p2 = snapshots.len() - p1;
    let config = ProtocolConfig {
        nc1_threshold: threshold,
        phase1_epochs: p1.max(1),
        phase2_epochs: p2,
        ..ProtocolConfig::default()
    };
    let kind = if p2 == 0 { RunKind::CeOnly } else { RunKind::TwoPhase };
    RunRecord::from_snapshots(config, kind, snapshots, false)
}

fn classify(path: &Path, threshold: f64) -> Result<Input> {
    let name = path.display().to_string();
    if path.is_dir() {
        if path.join(MANIFEST_FILE).is_file() {
            let run = load_run(path)?;
            return Ok(Input::Runs(vec![run.record], run.manifest.name));
        }
        return Err(Error::Argument(format!("{name} is a directory without {MANIFEST_FILE}")));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let (body, header) = strip_comments(&text);
    if header == LOG_COLUMNS {
        let snaps = persist::parse_log(body.as_bytes(), &name)?;
        return Ok(Input::Runs(vec![record_from_log(snaps, threshold)], "logs".into()));
    }
    Ok(Input::Table(body, name))
}

fn runs_group_key(r: &RunRecord, fallback: &str) -> String {
    if fallback == "logs" {
        return fallback.into();
    }
    let mut c = r.config.clone();
    c.seed = 0;
    format!(
        "{fallback} (depth={}, width={}, wd={})",
        c.model.depth,
        c.model.width,
        c.optimizer.weight_decay()
    )
}

fn sample_groups(out: &mut Out, table: &str, groups: &BTreeMap<String, Vec<f64>>, rng: &mut RngState) -> Result<()> {
    let mut md = Vec::new();
    for (label, xs) in groups {
        let s = stats::summarize(xs)?;
        out.push(table, label, "n", s.n as f64);
        out.push(table, label, "mean", s.mean);
        let mut row = vec![label.clone(), s.n.to_string(), num(s.mean, 3)];
        match (s.std, s.cv) {
            (Some(sd), cv) => {
                out.push(table, label, "std", sd);
                row.push(num(sd, 3));
                if let Some(cv) = cv {
                    out.push(table, label, "cv", cv);
                    row.push(format!("{:.1}%", 100.0 * cv));
                } else {
                    row.push("-".into());
                }
                let t = stats::t_ci(xs, LEVEL)?;
                out.push(table, label, "t_ci_lo", t.lo);
                out.push(table, label, "t_ci_hi", t.hi);
                row.push(format!("[{}, {}]", num(t.lo, 3), num(t.hi, 3)));
                let b = stats::bootstrap_ci(xs, rng, DEFAULT_RESAMPLES, LEVEL)?;
                out.push(table, label, "bootstrap_ci_lo", b.lo);
                out.push(table, label, "bootstrap_ci_hi", b.hi);
                row.push(format!("[{}, {}]", num(b.lo, 3), num(b.hi, 3)));
            }
            (None, _) => row.extend(["-", "-", "-", "-"].map(String::from)),
        }
        md.push(row);
    }
    out.section(
        table,
        &["group", "n", "mean", "std", "CV", "95% t-CI", "95% bootstrap CI"],
        &md,
    );
    let usable: Vec<Vec<f64>> = groups.values().filter(|v| !v.is_empty()).cloned().collect();
    if usable.len() >= 2 {
        if let Ok(a) = stats::anova_oneway(&usable) {
            out.push(table, "all", "anova_f", a.f);
            out.push(table, "all", "anova_p", a.p);
            out.md += &format!(
                "One-way ANOVA: F({}, {}) = {}, p = {}\n\n",
                a.df_between,
                a.df_within,
                num(a.f, 3),
                num(a.p, 3)
            );
        }
    }
    Ok(())
}

fn analyze_runs(out: &mut Out, runs: &[(RunRecord, String)], rng: &mut RngState) -> Result<()> {
    let mut fns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut tncs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (r, name) in runs {
        let key = runs_group_key(r, name);
        let c = counts.entry(key.clone()).or_default();
        c.0 += 1;
        fns.entry(key.clone()).or_default();
        tncs.entry(key.clone()).or_default();
        if let (Some(t), Some(f)) = (r.t_nc, r.fn_at_t_nc) {
            c.1 += 1;
            fns.get_mut(&key).expect("inserted").push(f);
            tncs.get_mut(&key).expect("inserted").push(t as f64);
        }
    }
    let status: Vec<Vec<String>> = counts
        .iter()
        .map(|(k, (n, c))| vec![k.clone(), n.to_string(), c.to_string(), (n - c).to_string()])
        .collect();
    out.section("runs", &["group", "runs", "collapsed", "not collapsed"], &status);
    let fns: BTreeMap<_, _> = fns.into_iter().filter(|(_, v)| !v.is_empty()).collect();
    let tncs: BTreeMap<_, _> = tncs.into_iter().filter(|(_, v)| !v.is_empty()).collect();
    if fns.is_empty() {
        out.md += "No run collapsed; fn at T_NC is undefined.\n\n";
        return Ok(());
    }
    sample_groups(out, "fn_at_t_nc", &fns, rng)?;
    sample_groups(out, "t_nc", &tncs, rng)
}

fn analyze_table(out: &mut Out, body: &str, name: &str, rng: &mut RngState) -> Result<()> {
    let (_, header) = strip_comments(body);
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    match h.as_slice() {
        ["group", "value"] => {
            let rows: Vec<SampleRow> = persist::read_table(body, name)?;
            let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in rows {
                groups.entry(r.group).or_default().push(r.value);
            }
            sample_groups(out, "samples", &groups, rng)
        }
        ["width", "t_nc_mean", "t_nc_std", "fn_mean", "fn_std"] => {
            let rows: Vec<WidthRow> = persist::read_table(body, name)?;
            let w: Vec<f64> = rows.iter().map(|r| r.width).collect();
            let t: Vec<f64> = rows.iter().map(|r| r.t_nc_mean).collect();
            let f: Vec<f64> = rows.iter().map(|r| r.fn_mean).collect();
            let rt = stats::pearson(&w, &t)?;
            let rf = stats::pearson(&w, &f)?;
            let reg = stats::loglog_regress(&w, &f)?;
            out.push("width", "t_nc_vs_width", "pearson_r", rt.r);
            out.push("width", "t_nc_vs_width", "pearson_p", rt.p);
            out.push("width", "fn_vs_width", "pearson_r", rf.r);
            out.push("width", "fn_vs_width", "pearson_p", rf.p);
            out.push("width", "loglog_fn_vs_width", "slope", reg.slope);
            out.push("width", "loglog_fn_vs_width", "r2", reg.r2);
            out.push("width", "loglog_fn_vs_width", "p_slope", reg.p_slope);
            out.section(
                "width",
                &["relation", "statistic", "value", "p"],
                &[
                    vec!["T_NC vs width".into(), "Pearson r".into(), num(rt.r, 3), num(rt.p, 3)],
                    vec!["fn vs width".into(), "Pearson r".into(), num(rf.r, 3), num(rf.p, 3)],
                    vec![
                        "ln fn vs ln width".into(),
                        format!("slope (R² {})", num(reg.r2, 3)),
                        num(reg.slope, 4),
                        num(reg.p_slope, 3),
                    ],
                ],
            );
            Ok(())
        }
        ["dataset", "architecture", "nc1_threshold", "n", "fn_mean", "fn_std"] => grid(out, body, name),
        ["condition", "fn_star_tight", "fn_star_loose"] => {
            let rows: Vec<RobustRow> = persist::read_table(body, name)?;
            let mut md = Vec::new();
            for r in &rows {
                let ratio = stats::robustness_ratio(r.fn_star_loose, r.fn_star_tight)?;
                out.push("robustness", &r.condition, "ratio", ratio);
                md.push(vec![
                    r.condition.clone(),
                    num(r.fn_star_tight, 3),
                    num(r.fn_star_loose, 3),
                    num(ratio, 2),
                ]);
            }
            let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.fn_star_loose, r.fn_star_tight)).collect();
            let s = stats::robustness_summary(&pairs)?;
            out.push("robustness", "all", "ratio_mean", s.mean);
            if let Some(sd) = s.std {
                out.push("robustness", "all", "ratio_std", sd);
            }
            md.push(vec![
                "mean".into(),
                String::new(),
                String::new(),
                crate::table::mean_pm(Some(s.mean), s.std, 2),
            ]);
            out.section("robustness", &["condition", "fn* tight", "fn* loose", "ratio"], &md);
            Ok(())
        }
        cols if cols == AGGREGATE_COLUMNS => {
            let rows: Vec<AggRow> = persist::read_table(body, name)?;
            let mut md = Vec::new();
            for r in &rows {
                out.push("aggregate", &r.condition, "collapsed", r.collapsed as f64);
                let mut line = vec![r.condition.clone(), format!("{}/{}", r.collapsed, r.n)];
                for (stat, m, s) in [("t_nc", r.t_nc_mean, r.t_nc_std), ("fn_at_t_nc", r.fn_at_tnc_mean, r.fn_at_tnc_std)] {
                    match (m, s) {
                        (Some(m), Some(s)) if r.collapsed >= 2 => {
                            let ci = stats::t_ci_from_summary(r.collapsed, m, s, LEVEL)?;
                            out.push("aggregate", &r.condition, &format!("{stat}_mean"), m);
                            out.push("aggregate", &r.condition, &format!("{stat}_ci_lo"), ci.lo);
                            out.push("aggregate", &r.condition, &format!("{stat}_ci_hi"), ci.hi);
                            line.push(format!("{} [{}, {}]", num(m, 3), num(ci.lo, 3), num(ci.hi, 3)));
                        }
                        (Some(m), _) => {
                            out.push("aggregate", &r.condition, &format!("{stat}_mean"), m);
                            line.push(num(m, 3));
                        }
                        _ => line.push("DNF".into()),
                    }
                }
                md.push(line);
            }
            out.section("aggregate", &["condition", "collapsed", "T_NC (95% CI)", "fn at T_NC (95% CI)"], &md);
            Ok(())
        }
        _ => Err(Error::Parse {
            source_name: name.into(),
            message: format!("unrecognised table header `{}`", header.join(",")),
        }),
    }
}

fn first_seen(items: impl Iterator<Item = String>) -> Vec<String> {
    let mut v: Vec<String> = Vec::new();
    for i in items {
        if !v.contains(&i) {
            v.push(i);
        }
    }
    v
}

/// Rows are architectures and columns datasets, both in order of appearance.
fn grid(out: &mut Out, body: &str, name: &str) -> Result<()> {
    let rows: Vec<GridRow> = persist::read_table(body, name)?;
    let archs = first_seen(rows.iter().map(|r| r.architecture.clone()));
    let sets = first_seen(rows.iter().map(|r| r.dataset.clone()));
    let mut md = Vec::new();
    for r in &rows {
        let label = format!("{} {}", r.dataset, r.architecture);
        if r.n >= 2 {
            let ci = stats::t_ci_from_summary(r.n, r.fn_mean, r.fn_std, LEVEL)?;
            out.push("grid", &label, "t_ci_lo", ci.lo);
            out.push("grid", &label, "t_ci_hi", ci.hi);
            md.push(vec![
                label,
                format!("<{}", r.nc1_threshold),
                r.n.to_string(),
                format!("{} ± {}", num(r.fn_mean, 3), num(r.fn_std, 3)),
                format!("[{}, {}]", num(ci.lo, 3), num(ci.hi, 3)),
            ]);
        }
    }
    out.section("grid", &["cell", "NC1 thresh.", "n", "fn*", "95% t-CI"], &md);
    let summaries: Vec<GroupSummary> = rows
        .iter()
        .map(|r| GroupSummary {
            n: r.n,
            mean: r.fn_mean,
            std: r.fn_std,
        })
        .collect();
    if let Ok(a) = stats::anova_from_summaries(&summaries) {
        out.push("grid", "all", "anova_f", a.f);
        out.push("grid", "all", "anova_p", a.p);
        out.md += &format!(
            "One-way ANOVA over cells: F({}, {}) = {}, p = {}\n\n",
            a.df_between,
            a.df_within,
            num(a.f, 2),
            num(a.p, 3)
        );
    }
    if archs.len() == 2 && sets.len() == 2 && rows.len() == 4 {
        let cell = |a: &str, d: &str| -> Result<f64> {
            rows.iter()
                .find(|r| r.architecture == a && r.dataset == d)
                .map(|r| r.fn_mean)
                .ok_or_else(|| Error::Argument(format!("grid is missing cell {d} {a}")))
        };
        let e = stats::grid_effects([
            [cell(&archs[0], &sets[0])?, cell(&archs[0], &sets[1])?],
            [cell(&archs[1], &sets[0])?, cell(&archs[1], &sets[1])?],
        ])?;
        let effects = [
            (format!("{} -> {} on {}", archs[0], archs[1], sets[0]), e.row_effect_col0),
            (format!("{} -> {} on {}", archs[0], archs[1], sets[1]), e.row_effect_col1),
            (format!("{} -> {} with {}", sets[0], sets[1], archs[0]), e.col_effect_row0),
            (format!("{} -> {} with {}", sets[0], sets[1], archs[1]), e.col_effect_row1),
        ];
        let mut md = Vec::new();
        for (label, v) in &effects {
            out.push("grid_effects", label, "relative_change", *v);
            md.push(vec![label.clone(), format!("{:+.0}%", 100.0 * v)]);
        }
        out.push("grid_effects", "held_out", "predicted", e.held_out_predicted);
        out.push("grid_effects", "held_out", "actual", e.held_out_actual);
        out.push("grid_effects", "held_out", "under_prediction", e.under_prediction);
        md.push(vec![
            format!("multiplicative prediction of {} {}", sets[0], archs[1]),
            format!(
                "{} vs {} ({:+.0}%)",
                num(e.held_out_predicted, 3),
                num(e.held_out_actual, 3),
                100.0 * e.under_prediction
            ),
        ]);
        out.section("grid effects", &["change", "effect"], &md);
    }
    Ok(())
}

pub fn run(args: AnalyzeArgs) -> Result<u8> {
    let mut out = Out::default();
    let mut rng = RngState::new(args.seed);
    let mut runs = Vec::new();
    let mut tables = Vec::new();
    for p in &args.inputs {
        match classify(p, args.nc1_threshold)? {
            Input::Runs(rs, name) => runs.extend(rs.into_iter().map(|r| (r, name.clone()))),
            Input::Table(body, name) => tables.push((body, name)),
        }
    }
    if !runs.is_empty() {
        analyze_runs(&mut out, &runs, &mut rng)?;
    }
    for (body, name) in &tables {
        analyze_table(&mut out, body, name, &mut rng)?;
    }
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            write(dir.join("analysis.csv"), &persist::write_table(&out.rows)?)?;
            write(dir.join("analysis.md"), &out.md)?;
        }
        None => print!("{}", out.md),
    }
    Ok(0)
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}
