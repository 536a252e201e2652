//! Experiment configuration from flags, optionally layered over a manifest.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nclab::dataio::BlobsSpec;
use nclab::model::Activation;
use nclab::optim::{DecayMode, OptimizerConfig};
use nclab::persist::{DatasetDescriptor, DatasetSource, ExperimentManifest};
use nclab::protocol::{ProtocolConfig, ScheduleKind, ScheduleSpan};
use nclab::{Dataset, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetArg {
    Blobs,
    Mnist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecayArg {
    Coupled,
    Decoupled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Cosine,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpanArg {
    PerPhase,
    Global,
}

#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// Start from this manifest's config and dataset; other flags override it.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Training set; blobs uses the desk-scale preset, mnist the MLP-5 baseline.
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetArg>,
    /// Directory holding the MNIST IDX files.
    #[arg(long, env = "NCLAB_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Use only the first N training samples.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Gaussian noise of the blobs dataset.
    #[arg(long)]
    pub blob_noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "epochs-phase1")]
    pub epochs_phase1: Option<usize>,
    #[arg(long = "epochs-phase2")]
    pub epochs_phase2: Option<usize>,
    #[arg(long)]
    pub nc1_threshold: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub wd: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// Adam weight-decay coupling.
    #[arg(long, value_enum)]
    pub decay: Option<DecayArg>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    #[arg(long, value_enum)]
    pub schedule_span: Option<SpanArg>,
}

/// A resolved experiment: config, dataset recipe and an optional base manifest.
pub struct Resolved {
    pub config: ProtocolConfig,
    pub source: DatasetSource,
    pub data_dir: Option<PathBuf>,
    pub base: Option<ExperimentManifest>,
}

impl Resolved {
    pub fn load_data(&self) -> Result<(Dataset, DatasetDescriptor)> {
        let data: Dataset = self.source.load(self.data_dir.as_deref())?;
        let desc = DatasetDescriptor::describe(self.source.clone(), &data);
        if let Some(m) = &self.base {
            if m.dataset.source == self.source && m.dataset.content_hash != desc.content_hash {
                return Err(Error::Parse {
                    source_name: desc.name,
                    message: format!(
                        "dataset hash {} does not match manifest {}",
                        desc.content_hash, m.dataset.content_hash
                    ),
                });
            }
        }
        Ok((data, desc))
    }
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<Resolved> {
        let base = self.manifest.as_deref().map(ExperimentManifest::read).transpose()?;
        let (mut config, mut source) = match (&base, self.dataset) {
            (Some(m), None) => (m.config.clone(), m.dataset.source.clone()),
            (Some(m), Some(d)) => (m.config.clone(), preset_source(d)),
            (None, d) => {
                let d = d.unwrap_or(DatasetArg::Blobs);
                let c = match d {
                    DatasetArg::Blobs => ProtocolConfig::desk_fixture(),
                    DatasetArg::Mnist => ProtocolConfig::default(),
                };
                (c, preset_source(d))
            }
        };
        match &mut source {
            DatasetSource::Blobs(spec) => {
                if let Some(n) = self.blob_noise {
                    spec.noise_sigma = n;
                }
                if let Some(n) = self.subset {
                    spec.per_class = n.div_ceil(spec.num_classes);
                }
            }
            DatasetSource::Mnist { subset } => {
                if self.subset.is_some() {
                    *subset = self.subset;
                }
            }
        }
        self.apply(&mut config);
        config.validate()?;
        Ok(Resolved {
            config,
            source,
            data_dir: self.data_dir.clone(),
            base,
        })
    }

    fn apply(&self, c: &mut ProtocolConfig) {
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.epochs_phase1 {
            c.phase1_epochs = v;
        }
        if let Some(v) = self.epochs_phase2 {
            c.phase2_epochs = v;
        }
        if let Some(v) = self.nc1_threshold {
            c.nc1_threshold = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.depth {
            c.model.depth = v;
        }
        if let Some(v) = self.width {
            c.model.width = v;
        }
        if let Some(v) = self.activation {
            c.model.activation = v;
        }
        if let Some(o) = self.optimizer {
            let (lr, wd) = (c.optimizer.base_lr(), c.optimizer.weight_decay());
            let same = matches!(
                (o, &c.optimizer),
                (OptimizerArg::Adam, OptimizerConfig::Adam { .. }) | (OptimizerArg::Sgd, OptimizerConfig::Sgd { .. })
            );
            if !same {
                c.optimizer = match o {
                    OptimizerArg::Adam => OptimizerConfig::adam(lr, wd),
                    OptimizerArg::Sgd => OptimizerConfig::sgd(lr, wd),
                };
            }
        }
        if let Some(v) = self.lr {
            match &mut c.optimizer {
                OptimizerConfig::Adam { lr, .. } | OptimizerConfig::Sgd { lr, .. } => *lr = v,
            }
        }
        if let Some(v) = self.wd {
            c.optimizer.set_weight_decay(v);
        }
        if let (Some(d), OptimizerConfig::Adam { decay_mode, .. }) = (self.decay, &mut c.optimizer) {
            *decay_mode = match d {
                DecayArg::Coupled => DecayMode::Coupled,
                DecayArg::Decoupled => DecayMode::Decoupled,
            };
        }
        if let Some(s) = self.schedule {
            c.schedule = match s {
                ScheduleArg::Cosine => ScheduleKind::Cosine { eta_min: 0.0 },
                ScheduleArg::Constant => ScheduleKind::Constant,
            };
        }
        if let Some(s) = self.schedule_span {
            c.schedule_span = match s {
                SpanArg::PerPhase => ScheduleSpan::PerPhase,
                SpanArg::Global => ScheduleSpan::Global,
            };
        }
    }
}

fn preset_source(d: DatasetArg) -> DatasetSource {
    match d {
        DatasetArg::Blobs => DatasetSource::Blobs(BlobsSpec::desk_fixture()),
        DatasetArg::Mnist => DatasetSource::Mnist { subset: None },
    }
}
