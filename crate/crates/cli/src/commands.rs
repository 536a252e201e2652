use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nclab::dynamics::{
    detect_crossing, prospective_reference, reference_fn_star, run_intervention_from, Checkpoint, CrossingReport,
    InterventionSpec,
};
use nclab::persist::{
    load_run, model_hash, prepare_run_dir, write_run, write_table, ExperimentManifest, InterventionTag, StoredRun,
};
use nclab::protocol::{run_ce_only, run_two_phase, RunKind, RunRecord, RunStatus};
use nclab::sweep::{aggregate, aggregate_csv, run_sweep, RunOutcome, SweepAxis, SweepSpec};
use nclab::{Dataset, Error, MlpModel, Result};
use serde::{Deserialize, Serialize};

use crate::plot::{LineChart, RefLine, Series};
use crate::table::{md_table, mean_pm, num, opt_int, opt_num};
use crate::{InterveneArgs, PredictArgs, ReportArgs, SweepArgs, TrainArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_DIVERGED: u8 = 3;

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}

fn summary_line(record: &RunRecord) -> String {
    let last = record.snapshots.last();
    format!(
        "status={} t_nc={} fn_at_t_nc={} final_acc={} final_nc1={} final_fn={}",
        record.status,
        opt_int(record.t_nc),
        opt_num(record.fn_at_t_nc, 4),
        opt_num(last.map(|s| s.train_acc), 4),
        opt_num(last.and_then(|s| s.nc1.value()), 4),
        opt_num(last.map(|s| s.fn_), 4),
    )
}

pub fn train(args: TrainArgs) -> Result<u8> {
    let resolved = args.config.resolve()?;
    prepare_run_dir(&args.out.out, args.out.force)?;
    let (data, desc) = resolved.load_data()?;
    let mut config = resolved.config.clone();
    let (record, boundary, kind) = if args.ce_only {
        config.phase1_epochs = config.total_epochs();
        config.phase2_epochs = 0;
        (run_ce_only(&config, &data)?, None, RunKind::CeOnly)
    } else {
        let run = run_two_phase(&config, &data)?;
        (run.record, Some(run.boundary), RunKind::TwoPhase)
    };
    let name = resolved.base.as_ref().map_or_else(|| "train".to_string(), |m| m.name.clone());
    let manifest = ExperimentManifest::new(name, kind, config, desc);
    write_run(&args.out.out, &manifest, &record, boundary.as_ref(), true)?;
    println!("{}", summary_line(&record));
    Ok(if record.numeric_failure { EXIT_DIVERGED } else { EXIT_OK })
}

pub fn sweep(args: SweepArgs) -> Result<u8> {
    let resolved = args.config.resolve()?;
    let axis: SweepAxis = args.axis.parse()?;
    let values = args
        .values
        .iter()
        .map(|v| axis.parse_value(v))
        .collect::<Result<Vec<_>>>()?;
    let spec = SweepSpec {
        axis,
        values,
        seeds: args.seeds.clone(),
        base: resolved.config.clone(),
    };
    spec.validate()?;
    prepare_run_dir(&args.out.out, args.out.force)?;
    let (data, desc) = resolved.load_data()?;
    let results = run_sweep(&spec, &data, args.workers)?;
    for r in &results {
        let dir = args.out.out.join(&r.condition).join(format!("seed_{}", r.config.seed));
        match &r.outcome {
            Ok(run) => {
                let manifest = ExperimentManifest::new(
                    format!("sweep {}", r.condition),
                    RunKind::TwoPhase,
                    r.config.clone(),
                    desc.clone(),
                );
                write_run(&dir, &manifest, &run.record, Some(&run.boundary), true)?;
            }
            Err(e) => {
                prepare_run_dir(&dir, true)?;
                write(dir.join("error.txt"), &format!("{e}\n"))?;
            }
        }
    }
    let rows = aggregate(results.iter().map(RunOutcome::from));
    write(args.out.out.join("aggregate.csv"), &aggregate_csv(&rows))?;
    write(
        args.out.out.join("sweep.json"),
        &serde_json::to_string_pretty(&spec).map_err(Error::Json)?,
    )?;
    let md: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.condition.clone(),
                r.n.to_string(),
                format!("<{}", r.nc1_threshold),
                mean_pm(r.t_nc_mean, r.t_nc_std, 0),
                mean_pm(r.fn_mean, r.fn_std, 3),
                format!("{}/{}", r.collapsed, r.n),
                r.status().to_string(),
            ]
        })
        .collect();
    print!(
        "{}",
        md_table(&["condition", "N", "NC1 thresh.", "T_NC", "fn at T_NC", "collapsed", "status"], &md)
    );
    let any_numeric = results
        .iter()
        .any(|r| r.outcome.as_ref().is_ok_and(|o| o.record.numeric_failure));
    Ok(if any_numeric { EXIT_DIVERGED } else { EXIT_OK })
}

fn phase1_checkpoint(run: &StoredRun) -> Result<Checkpoint<f64>> {
    if run.manifest.kind != RunKind::TwoPhase {
        return Err(Error::Argument(format!("{} is not a two-phase run", run.dir.display())));
    }
    let ck = run.checkpoint()?;
    if ck.config != run.record.config {
        return Err(Error::Argument(format!(
            "checkpoint in {} does not match its manifest",
            run.dir.display()
        )));
    }
    let model: MlpModel = ck.to_model()?;
    let phase1_log: Vec<_> = run.record.snapshots.iter().filter(|s| s.phase == 1).cloned().collect();
    Ok(Checkpoint {
        seed: ck.seed,
        phase1_log,
        model,
    })
}

pub fn intervene(args: InterveneArgs) -> Result<u8> {
    let runs = args.runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    let first = &runs[0];
    let mut base = first.manifest.config.clone();
    for r in &runs[1..] {
        let mut c = r.manifest.config.clone();
        c.seed = base.seed;
        if c != base || r.manifest.dataset.content_hash != first.manifest.dataset.content_hash {
            return Err(Error::Argument(format!(
                "{} differs from {} in more than the seed",
                r.dir.display(),
                first.dir.display()
            )));
        }
    }
    let checkpoints = runs.iter().map(phase1_checkpoint).collect::<Result<Vec<_>>>()?;
    let spec = InterventionSpec {
        alphas: args.alpha.clone(),
        seeds: checkpoints.iter().map(|c| c.seed).collect(),
    };
    spec.validate()?;
    prepare_run_dir(&args.out.out, args.out.force)?;
    let data: Dataset = first.manifest.dataset.load(args.data_dir.as_deref())?;
    let outcome = run_intervention_from(&base, &spec, &data, &checkpoints)?;
    for run in &outcome.runs {
        let cp = checkpoints.iter().find(|c| c.seed == run.seed).expect("checkpoint per seed");
        let start = nclab::dynamics::rescale_features(&cp.model, run.alpha)?;
        base.seed = run.seed;
        let mut manifest = ExperimentManifest::new(
            format!("intervene {}", nclab::dynamics::condition_label(run.alpha)),
            RunKind::TwoPhase,
            base.clone(),
            first.manifest.dataset.clone(),
        );
        manifest.intervention = Some(InterventionTag {
            alpha: run.alpha,
            checkpoint_hash: model_hash(&start),
        });
        let dir = args
            .out
            .out
            .join(format!("alpha_{}", run.alpha))
            .join(format!("seed_{}", run.seed));
        write_run::<f64>(&dir, &manifest, &run.record, None, true)?;
    }
    write(args.out.out.join("intervention.csv"), &write_table(&outcome.table)?)?;
    let md: Vec<Vec<String>> = outcome
        .table
        .iter()
        .map(|r| {
            vec![
                r.condition.clone(),
                r.alpha.to_string(),
                num(r.fn_after_rescale, 3),
                mean_pm(r.t_nc_mean, r.t_nc_std, 0),
                mean_pm(r.fn_star_mean, r.fn_star_std, 3),
                opt_num(r.p_fn_star_vs_control, 3),
                opt_num(r.p_t_nc_vs_control, 3),
            ]
        })
        .collect();
    print!(
        "{}",
        md_table(
            &["condition", "alpha", "fn after rescaling", "T_NC", "fn*", "p(fn*)", "p(T_NC)"],
            &md
        )
    );
    Ok(EXIT_OK)
}

/// One line of the predictor CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRow {
    pub run: String,
    pub seed: u64,
    pub status: RunStatus,
    pub fn_star_ref: Option<f64>,
    pub t_cross: Option<usize>,
    pub t_nc: Option<usize>,
    pub lead: usize,
    pub predicted_t_nc: Option<usize>,
    pub abs_error: Option<usize>,
    pub ordering_confirmed: bool,
}

impl PredictRow {
    fn new(run: &StoredRun, report: Option<CrossingReport>, lead: usize) -> Self {
        let r = &run.record;
        match report {
            Some(c) => Self {
                run: run.dir.display().to_string(),
                seed: r.config.seed,
                status: r.status,
                fn_star_ref: Some(c.fn_star_ref),
                t_cross: c.t_cross,
                t_nc: c.t_nc,
                lead: c.lead,
                predicted_t_nc: c.predicted_t_nc,
                abs_error: c.abs_error,
                ordering_confirmed: c.ordering_confirmed,
            },
            None => Self {
                run: run.dir.display().to_string(),
                seed: r.config.seed,
                status: r.status,
                fn_star_ref: None,
                t_cross: None,
                t_nc: r.t_nc,
                lead,
                predicted_t_nc: None,
                abs_error: None,
                ordering_confirmed: false,
            },
        }
    }
}

/// Runs that differ only in seed share a group.
fn group_key(run: &StoredRun) -> String {
    let mut c = run.record.config.clone();
    c.seed = 0;
    format!(
        "{}|{}",
        serde_json::to_string(&c).expect("config serializes"),
        run.manifest.dataset.content_hash
    )
}

pub fn predict(args: PredictArgs) -> Result<u8> {
    let runs = args.runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(runs.len());
    if args.reference_runs.is_empty() {
        let mut groups: BTreeMap<String, Vec<&StoredRun>> = BTreeMap::new();
        for r in &runs {
            groups.entry(group_key(r)).or_default().push(r);
        }
        for r in &runs {
            let group = &groups[&group_key(r)];
            let reference = reference_fn_star(group.iter().map(|g| &g.record));
            let report = match reference {
                Some(f) if r.record.phase2().next().is_some() => Some(detect_crossing(&r.record, f, args.lead)?),
                _ => None,
            };
            rows.push(PredictRow::new(r, report, args.lead));
        }
    } else {
        let prior = args
            .reference_runs
            .iter()
            .map(|d| load_run(d).map(|r| r.record))
            .collect::<Result<Vec<_>>>()?;
        for r in &runs {
            let reference = prospective_reference(&r.record, &prior)?;
            rows.push(PredictRow::new(
                r,
                Some(detect_crossing(&r.record, reference, args.lead)?),
                args.lead,
            ));
        }
    }
    let csv = write_table(&rows)?;
    match &args.out {
        Some(p) => write(p.clone(), &csv)?,
        None => print!("{csv}"),
    }
    let collapsed = rows.iter().filter(|r| r.status == RunStatus::Collapsed).count();
    let confirmed = rows.iter().filter(|r| r.ordering_confirmed).count();
    let gaps: Vec<f64> = rows
        .iter()
        .filter_map(|r| Some(r.t_nc? as f64 - r.t_cross? as f64))
        .collect();
    let errs: Vec<f64> = rows.iter().filter_map(|r| r.abs_error.map(|e| e as f64)).collect();
    let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    eprintln!(
        "runs={} collapsed={} ordering_confirmed={} mean_gap={} mae={}",
        rows.len(),
        collapsed,
        confirmed,
        opt_num(avg(&gaps), 1),
        opt_num(avg(&errs), 1)
    );
    Ok(EXIT_OK)
}

fn series_for(runs: &[StoredRun], f: impl Fn(&nclab::ncmetrics::NcSnapshot) -> Option<f64>) -> Vec<Series> {
    runs.iter()
        .map(|r| Series {
            name: format!("seed {}", r.record.config.seed),
            points: r.record.snapshots.iter().map(|s| (s.epoch as f64, f(s))).collect(),
        })
        .collect()
}

fn run_label(dir: &Path) -> String {
    dir.display().to_string()
}

pub fn report(args: ReportArgs) -> Result<u8> {
    let runs = args.runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    prepare_run_dir(&args.out.out, args.out.force)?;
    let fn_star = args.fn_star.or_else(|| reference_fn_star(runs.iter().map(|r| &r.record)));
    let eps = runs[0].record.config.nc1_threshold;
    let boundary = runs[0].record.config.phase1_epochs;

    let nc1 = LineChart {
        title: "NC1 (within / between class scatter)".into(),
        x_label: "epoch".into(),
        y_label: "NC1".into(),
        log_y: true,
        series: series_for(&runs, |s| s.nc1.value()),
        ref_lines: vec![RefLine {
            label: format!("eps = {eps}"),
            y: eps,
        }],
    };
    let fnc = LineChart {
        title: "Mean penultimate feature norm".into(),
        x_label: "epoch".into(),
        y_label: "fn".into(),
        log_y: false,
        series: series_for(&runs, |s| Some(s.fn_)),
        ref_lines: fn_star
            .map(|f| RefLine {
                label: format!("fn* = {}", num(f, 3)),
                y: f,
            })
            .into_iter()
            .collect(),
    };
    let acc = LineChart {
        title: "Training accuracy".into(),
        x_label: "epoch".into(),
        y_label: "accuracy".into(),
        log_y: false,
        series: series_for(&runs, |s| Some(s.train_acc)),
        ref_lines: vec![],
    };
    write(args.out.out.join("nc1.svg"), &nc1.to_svg())?;
    write(args.out.out.join("fn.svg"), &fnc.to_svg())?;
    write(args.out.out.join("accuracy.svg"), &acc.to_svg())?;

    let mut md = String::from("# Run summary\n\n");
    md += &format!(
        "Phase boundary after epoch {boundary}; collapse threshold NC1 < {eps}; reference fn* {}.\n\n",
        opt_num(fn_star, 4)
    );
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let last = r.record.snapshots.last();
            vec![
                run_label(&r.dir),
                r.record.config.seed.to_string(),
                r.record.status.to_string(),
                opt_int(r.record.t_nc),
                opt_num(r.record.fn_at_t_nc, 4),
                opt_num(last.map(|s| s.train_acc), 4),
                opt_num(last.and_then(|s| s.nc1.value()), 4),
                opt_num(last.map(|s| s.fn_), 4),
            ]
        })
        .collect();
    md += &md_table(
        &["run", "seed", "status", "T_NC", "fn at T_NC", "final acc", "final NC1", "final fn"],
        &rows,
    );
    md += "\n![NC1](nc1.svg)\n\n![fn](fn.svg)\n\n![accuracy](accuracy.svg)\n";
    write(args.out.out.join("summary.md"), &md)?;
    println!("wrote {}", args.out.out.display());
    Ok(EXIT_OK)
}
