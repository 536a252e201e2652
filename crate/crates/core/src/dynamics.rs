//! Feature-norm crossing predictor and the feature-rescaling intervention.

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::model::{LossKind, Mlp};
use crate::ncmetrics::NcSnapshot;
use crate::numcore::Scalar;
use crate::protocol::{evaluate, resume_phase2, run_phase1, ProtocolConfig, RunRecord, RunStatus};
use crate::stats::{summarize, t_test_two_sample};

/// Epochs between the fn crossing and collapse assumed by the predictor.
pub const DEFAULT_LEAD: usize = 62;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub fn_star_ref: f64,
    pub t_cross: Option<usize>,
    pub t_nc: Option<usize>,
    pub lead: usize,
    pub predicted_t_nc: Option<usize>,
    pub abs_error: Option<usize>,
    /// Both epochs present and `t_cross < t_nc`.
    pub ordering_confirmed: bool,
}

/// First phase-2 epoch whose fn is strictly below `fn_star_ref`.
pub fn detect_crossing(record: &RunRecord, fn_star_ref: f64, lead: usize) -> Result<CrossingReport> {
    if !(fn_star_ref.is_finite() && fn_star_ref > 0.0) {
        return Err(Error::arg(format!("reference fn* must be positive, got {fn_star_ref}")));
    }
    if record.phase2().next().is_none() {
        return Err(Error::arg("run has no phase-2 snapshots"));
    }
    let t_cross = record.phase2().find(|s| s.fn_ < fn_star_ref).map(|s| s.epoch);
    let t_nc = record.t_nc;
    let predicted_t_nc = t_cross.map(|t| t + lead);
    let abs_error = predicted_t_nc.zip(t_nc).map(|(p, t)| p.abs_diff(t));
    Ok(CrossingReport {
        fn_star_ref,
        t_cross,
        t_nc,
        lead,
        predicted_t_nc,
        abs_error,
        ordering_confirmed: matches!((t_cross, t_nc), (Some(c), Some(t)) if c < t),
    })
}

/// Mean `fn_at_TNC` over the collapsed runs, if any.
pub fn reference_fn_star<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Option<f64> {
    let fs: Vec<f64> = records.into_iter().filter_map(|r| r.fn_at_t_nc).collect();
    (!fs.is_empty()).then(|| fs.iter().sum::<f64>() / fs.len() as f64)
}

/// Reference fn* for a run not yet seen, taken from prior runs of the same
/// model on the same dataset. A prior identical to the target (same config
/// and seed) would leak the target's own collapse value and is rejected.
pub fn prospective_reference(target: &RunRecord, prior: &[RunRecord]) -> Result<f64> {
    for p in prior {
        if p.config == target.config && p.dataset == target.dataset {
            return Err(Error::arg(format!(
                "reference cohort contains the target run itself (seed {})",
                target.config.seed
            )));
        }
        if p.config.model != target.config.model || p.dataset != target.dataset {
            return Err(Error::arg(format!(
                "reference run (seed {}) uses a different model or dataset than the target",
                p.config.seed
            )));
        }
    }
    reference_fn_star(prior).ok_or_else(|| Error::arg("no collapsed runs among the reference cohort"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorSummary {
    pub fn_star_ref: f64,
    pub n_runs: usize,
    pub n_collapsed: usize,
    pub n_confirmed_ordering: usize,
    /// Mean of `T_NC − T_cross` over runs with both epochs.
    pub mean_gap: Option<f64>,
    pub mae: Option<f64>,
    pub reports: Vec<CrossingReport>,
}

/// Retrospective evaluation over one group: the reference is the group's own
/// mean collapse norm.
pub fn predictor_eval(records: &[RunRecord], lead: usize) -> Result<PredictorSummary> {
    let fn_star_ref =
        reference_fn_star(records).ok_or_else(|| Error::Stats("no collapsed runs to form a reference fn*".into()))?;
    let reports = records
        .iter()
        .map(|r| detect_crossing(r, fn_star_ref, lead))
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = reports
        .iter()
        .filter_map(|c| Some(c.t_nc? as f64 - c.t_cross? as f64))
        .collect();
    let errors: Vec<f64> = reports.iter().filter_map(|c| c.abs_error.map(|e| e as f64)).collect();
    let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(PredictorSummary {
        fn_star_ref,
        n_runs: records.len(),
        n_collapsed: records.iter().filter(|r| r.status == RunStatus::Collapsed).count(),
        n_confirmed_ordering: reports.iter().filter(|c| c.ordering_confirmed).count(),
        mean_gap: avg(&gaps),
        mae: avg(&errors),
        reports,
    })
}

/// Multiplies the final hidden layer's weights and bias by `alpha`.
pub fn rescale_features<T: Scalar>(model: &Mlp<T>, alpha: f64) -> Result<Mlp<T>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::arg(format!("alpha must be positive, got {alpha}")));
    }
    let mut out = model.clone();
    let a = T::lit(alpha);
    let layer = out.last_hidden_mut();
    layer.weight.scale_in_place(a);
    for b in &mut layer.bias {
        *b *= a;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl InterventionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.seeds.is_empty() {
            return Err(Error::arg("intervention needs at least one alpha and one seed"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::arg(format!("alpha must be positive, got {a}")));
        }
        Ok(())
    }

    /// Alphas with the unscaled control (α = 1) first.
    pub fn conditions(&self) -> Vec<f64> {
        let mut out = vec![1.0];
        out.extend(self.alphas.iter().copied().filter(|&a| a != 1.0));
        out
    }
}

/// Phase-1 state of one seed, the common starting point for every condition.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub seed: u64,
    pub phase1_log: Vec<NcSnapshot>,
    pub model: Mlp<T>,
}

pub fn phase1_checkpoint<T: Scalar>(config: &ProtocolConfig, data: &Dataset<T>, seed: u64) -> Result<Checkpoint<T>> {
    let mut cfg = config.clone();
    cfg.seed = seed;
    let (phase1_log, model, ok) = run_phase1(&cfg, data)?;
    if !ok {
        return Err(Error::Divergence(format!("phase 1 diverged for seed {seed}")));
    }
    Ok(Checkpoint {
        seed,
        phase1_log,
        model,
    })
}

#[derive(Clone, Debug)]
pub struct InterventionRun {
    pub alpha: f64,
    pub seed: u64,
    /// fn on the training set at the checkpoint, before rescaling.
    pub fn_before: f64,
    pub fn_after_rescale: f64,
    pub record: RunRecord,
}

impl InterventionRun {
    /// Phase-2 fn values, starting with the post-rescale measurement.
    pub fn fn_trajectory(&self) -> Vec<f64> {
        std::iter::once(self.fn_after_rescale)
            .chain(self.record.phase2().map(|s| s.fn_))
            .collect()
    }
}

/// One row of the condition comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionRow {
    pub condition: String,
    pub alpha: f64,
    pub n: usize,
    pub n_collapsed: usize,
    pub fn_after_rescale: f64,
    pub t_nc_mean: Option<f64>,
    pub t_nc_std: Option<f64>,
    pub fn_star_mean: Option<f64>,
    pub fn_star_std: Option<f64>,
    /// Welch p-value of fn* against the control condition.
    pub p_fn_star_vs_control: Option<f64>,
    /// Welch p-value of T_NC against the control condition.
    pub p_t_nc_vs_control: Option<f64>,
}

pub fn condition_label(alpha: f64) -> String {
    if alpha == 1.0 {
        "control".into()
    } else if alpha < 1.0 {
        format!("scale-down x{alpha}")
    } else {
        format!("scale-up x{alpha}")
    }
}

#[derive(Clone, Debug)]
pub struct InterventionOutcome {
    pub runs: Vec<InterventionRun>,
    pub table: Vec<InterventionRow>,
}

impl InterventionOutcome {
    pub fn condition(&self, alpha: f64) -> impl Iterator<Item = &InterventionRun> {
        self.runs.iter().filter(move |r| r.alpha == alpha)
    }
}

/// Resumes phase 2 from each checkpoint under every condition. Optimizer
/// state starts fresh in every condition, including the control.
pub fn run_intervention_from<T: Scalar>(
    config: &ProtocolConfig,
    spec: &InterventionSpec,
    data: &Dataset<T>,
    checkpoints: &[Checkpoint<T>],
) -> Result<InterventionOutcome> {
    spec.validate()?;
    let mut runs = Vec::new();
    for alpha in spec.conditions() {
        for cp in checkpoints {
            let mut cfg = config.clone();
            cfg.seed = cp.seed;
            if cp.phase1_log.len() != cfg.phase1_epochs {
                return Err(Error::arg(format!(
                    "checkpoint for seed {} has {} phase-1 epochs, config expects {}",
                    cp.seed,
                    cp.phase1_log.len(),
                    cfg.phase1_epochs
                )));
            }
            let fn_before = evaluate(&cp.model, data, LossKind::MseOneHot)?.0.fn_;
            let model = rescale_features(&cp.model, alpha)?;
            let fn_after_rescale = evaluate(&model, data, LossKind::MseOneHot)?.0.fn_;
            let (record, _) = resume_phase2(&cfg, data, model, &cp.phase1_log)?;
            runs.push(InterventionRun {
                alpha,
                seed: cp.seed,
                fn_before,
                fn_after_rescale,
                record,
            });
        }
    }
    let table = comparison_table(&runs)?;
    Ok(InterventionOutcome { runs, table })
}

pub fn run_intervention<T: Scalar>(
    config: &ProtocolConfig,
    spec: &InterventionSpec,
    data: &Dataset<T>,
) -> Result<InterventionOutcome> {
    spec.validate()?;
    let checkpoints = spec
        .seeds
        .iter()
        .map(|&s| phase1_checkpoint(config, data, s))
        .collect::<Result<Vec<_>>>()?;
    run_intervention_from(config, spec, data, &checkpoints)
}

fn optional_summary(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    match summarize(xs) {
        Ok(s) => (Some(s.mean), s.std),
        Err(_) => (None, None),
    }
}

pub fn comparison_table(runs: &[InterventionRun]) -> Result<Vec<InterventionRow>> {
    let mut alphas: Vec<f64> = Vec::new();
    for r in runs {
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
    }
    let collect = |alpha: f64| {
        let sel: Vec<&InterventionRun> = runs.iter().filter(|r| r.alpha == alpha).collect();
        let t_nc: Vec<f64> = sel.iter().filter_map(|r| r.record.t_nc.map(|t| t as f64)).collect();
        let fn_star: Vec<f64> = sel.iter().filter_map(|r| r.record.fn_at_t_nc).collect();
        (sel, t_nc, fn_star)
    };
    let (_, control_t, control_fn) = collect(1.0);
    let p_vs = |xs: &[f64], control: &[f64]| t_test_two_sample(xs, control).ok().map(|t| t.p);
    let mut rows = Vec::with_capacity(alphas.len());
    for alpha in alphas {
        let (sel, t_nc, fn_star) = collect(alpha);
        let (t_nc_mean, t_nc_std) = optional_summary(&t_nc);
        let (fn_star_mean, fn_star_std) = optional_summary(&fn_star);
        let is_control = alpha == 1.0;
        rows.push(InterventionRow {
            condition: condition_label(alpha),
            alpha,
            n: sel.len(),
            n_collapsed: fn_star.len(),
            fn_after_rescale: sel.iter().map(|r| r.fn_after_rescale).sum::<f64>() / sel.len() as f64,
            t_nc_mean,
            t_nc_std,
            fn_star_mean,
            fn_star_std,
            p_fn_star_vs_control: if is_control { None } else { p_vs(&fn_star, &control_fn) },
            p_t_nc_vs_control: if is_control { None } else { p_vs(&t_nc, &control_t) },
        });
    }
    Ok(rows)
}

/// Phase-2 epochs at the end of a run checked for steady fn decay.
pub const TRAILING_WINDOW: usize = 40;
/// Block length over which fn is averaged before comparing blocks.
pub const TRAILING_BLOCK: usize = 10;

/// True when the block means of fn over the last `window` phase-2 epochs
/// never increase. Averaging over `block` epochs absorbs minibatch jitter.
pub fn trailing_decay(record: &RunRecord, window: usize, block: usize) -> bool {
    let fns: Vec<f64> = record.phase2().map(|s| s.fn_).collect();
    if block == 0 || window < 2 * block || fns.len() < window {
        return false;
    }
    let means: Vec<f64> = fns[fns.len() - window..]
        .chunks(block)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    means.windows(2).all(|p| p[1] <= p[0])
}

/// Smallest relative rise off the trough that counts as a rebound.
pub const MIN_REBOUND: f64 = 0.2;

/// `(trough, peak)` indices of an fn trajectory that rises off its lowest
/// point by at least [`MIN_REBOUND`] of the trough value and then turns down
/// again. The trough is the global minimum excluding the final point.
pub fn rebound(trajectory: &[f64]) -> Option<(usize, usize)> {
    let n = trajectory.len();
    if n < 3 {
        return None;
    }
    let (trough, low) = trajectory[..n - 1]
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let (offset, high) = trajectory[trough + 1..]
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    let peak = trough + 1 + offset;
    (high >= low * (1.0 + MIN_REBOUND) && trajectory[n - 1] < high).then_some((trough, peak))
}
