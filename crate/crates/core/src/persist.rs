//! On-disk artifacts of a run: `log.csv`, `manifest.json`,
//! `checkpoint_phase1.json` and `summary.json`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file written here parses back to identical bits.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{load_idx, mnist_train_paths, BlobsSpec, Dataset};
use crate::error::{Error, Result};
use crate::model::{Layer, Mlp, MlpConfig};
use crate::ncmetrics::{Metric, NcSnapshot};
use crate::numcore::{Matrix, Scalar};
use crate::protocol::{ProtocolConfig, RunKind, RunRecord, RunStatus};

pub const LOG_COLUMNS: [&str; 9] = ["epoch", "phase", "lr", "loss", "train_acc", "nc1", "nc2", "nc3", "fn"];
pub const DEGENERATE_TOKEN: &str = "degenerate";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint_phase1.json";
pub const SUMMARY_FILE: &str = "summary.json";

// ---------------------------------------------------------------- run log

fn metric_field(m: Metric) -> String {
    m.to_string()
}

pub fn write_log<W: Write>(out: W, snapshots: &[NcSnapshot]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv {
        path: "<log>".into(),
        line: 0,
        message: e.to_string(),
    };
    w.write_record(LOG_COLUMNS).map_err(csv_err)?;
    for s in snapshots {
        w.write_record([
            s.epoch.to_string(),
            s.phase.to_string(),
            s.lr.to_string(),
            s.loss.to_string(),
            s.train_acc.to_string(),
            metric_field(s.nc1),
            metric_field(s.nc2),
            metric_field(s.nc3),
            s.fn_.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<log>", e))?;
    Ok(())
}

pub fn log_to_string(snapshots: &[NcSnapshot]) -> String {
    let mut buf = Vec::new();
    write_log(&mut buf, snapshots).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Parses a run log. The header must be exactly [`LOG_COLUMNS`].
pub fn parse_log<R: Read>(input: R, source: &str) -> Result<Vec<NcSnapshot>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let err = |line: u64, message: String| Error::Csv {
        path: source.to_string(),
        line,
        message,
    };
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != LOG_COLUMNS {
        if let Some(bad) = names.iter().find(|n| !LOG_COLUMNS.contains(n)) {
            return Err(err(1, format!("unknown column `{bad}`")));
        }
        return Err(err(1, format!("expected columns {}", LOG_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let real = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| err(line, format!("column {}: not a number: `{}`", LOG_COLUMNS[i], field(i))))
        };
        let metric = |i: usize| -> Result<Metric> {
            if field(i) == DEGENERATE_TOKEN {
                Ok(Metric::Degenerate)
            } else {
                real(i).map(Metric::Value)
            }
        };
        let epoch = field(0)
            .parse::<usize>()
            .map_err(|_| err(line, format!("column epoch: not an integer: `{}`", field(0))))?;
        let phase = match field(1) {
            "1" => 1,
            "2" => 2,
            other => return Err(err(line, format!("column phase: expected 1 or 2, got `{other}`"))),
        };
        out.push(NcSnapshot {
            epoch,
            phase,
            lr: real(2)?,
            loss: real(3)?,
            train_acc: real(4)?,
            nc1: metric(5)?,
            nc2: metric(6)?,
            nc3: metric(7)?,
            fn_: real(8)?,
        });
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<NcSnapshot>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_log(f, &path.display().to_string())
}

// ---------------------------------------------------------------- tables

/// Serializes flat rows as CSV with a header taken from the field names.
/// Missing optionals become empty cells.
pub fn write_table<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv {
            path: "<table>".into(),
            line: 0,
            message: e.to_string(),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv {
        path: "<table>".into(),
        line: 0,
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Inverse of [`write_table`]; errors carry the offending line number.
pub fn read_table<R: serde::de::DeserializeOwned>(text: &str, source: &str) -> Result<Vec<R>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| Error::Csv {
                path: source.to_string(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------- manifest

/// Where a training set comes from; enough to rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Blobs(BlobsSpec),
    /// MNIST training split from IDX files, optionally truncated to the
    /// first `subset` samples.
    Mnist { subset: Option<usize> },
}

impl DatasetSource {
    pub fn load<T: Scalar>(&self, data_dir: Option<&Path>) -> Result<Dataset<T>> {
        match self {
            DatasetSource::Blobs(spec) => spec.generate(),
            DatasetSource::Mnist { subset } => {
                let dir = data_dir.ok_or_else(|| Error::arg("MNIST needs a data directory (--data-dir or NCLAB_DATA_DIR)"))?;
                let (img, lbl) = mnist_train_paths(dir);
                let full = load_idx(&img, &lbl)?;
                match subset {
                    Some(n) => full.take(*n),
                    None => Ok(full),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub source: DatasetSource,
    pub name: String,
    pub samples: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub content_hash: String,
}

impl DatasetDescriptor {
    pub fn describe<T: Scalar>(source: DatasetSource, data: &Dataset<T>) -> Self {
        Self {
            source,
            name: data.name.clone(),
            samples: data.len(),
            dim: data.dim(),
            num_classes: data.num_classes,
            content_hash: data.content_hash(),
        }
    }

    /// Rebuilds the dataset and checks it against the recorded hash.
    pub fn load<T: Scalar>(&self, data_dir: Option<&Path>) -> Result<Dataset<T>> {
        let data = self.source.load(data_dir)?;
        let hash = data.content_hash();
        if hash != self.content_hash {
            return Err(Error::Parse {
                source_name: self.name.clone(),
                message: format!("dataset hash {hash} does not match manifest {}", self.content_hash),
            });
        }
        Ok(data)
    }
}

/// Present only on runs resumed from a rescaled phase-1 checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionTag {
    pub alpha: f64,
    pub checkpoint_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub schema_version: u32,
    pub name: String,
    pub kind: RunKind,
    pub config: ProtocolConfig,
    pub dataset: DatasetDescriptor,
    pub seeds: Vec<u64>,
    pub code_version: String,
    /// Seconds since the Unix epoch when the manifest was written.
    pub timestamp: u64,
    /// Fixed choices that the config does not spell out.
    pub conventions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention: Option<InterventionTag>,
}

pub fn default_conventions() -> BTreeMap<String, String> {
    [
        ("mse_loss", "mean over samples of sum over classes of (z - onehot)^2, divided by K; no 1/2"),
        ("optimizer_state", "reset at the phase boundary"),
        ("input_scaling", "MNIST pixels divided by 255; blobs unscaled"),
        ("init", "Kaiming normal weights, zero biases, ChaCha8 stream 0"),
        ("shuffle", "ChaCha8 stream = epoch"),
        ("intervention", "last hidden layer W and b multiplied by alpha"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl ExperimentManifest {
    pub fn new(name: impl Into<String>, kind: RunKind, config: ProtocolConfig, dataset: DatasetDescriptor) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            name: name.into(),
            kind,
            seeds: vec![config.seed],
            config,
            dataset,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: now_unix(),
            conventions: default_conventions(),
            intervention: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::arg(format!(
                "unsupported manifest schema_version {} (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::arg("manifest has no seeds"));
        }
        self.config.validate()
    }

    /// Config for one seed of this manifest.
    pub fn config_for_seed(&self, seed: u64) -> ProtocolConfig {
        ProtocolConfig {
            seed,
            ..self.config.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Parse {
                source_name: path.display().to_string(),
                message: j.to_string(),
            },
            other => other,
        })
    }

    /// SHA-256 of the manifest with the timestamp cleared; equal
    /// fingerprints describe the same experiment.
    pub fn fingerprint(&self) -> String {
        let mut m = self.clone();
        m.timestamp = 0;
        sha256_hex(serde_json::to_string(&m).expect("manifest serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

// ---------------------------------------------------------------- checkpoint

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// `(out, in)`.
    pub shape: (usize, usize),
    /// Row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// JSON container for model parameters. Values are stored as `f64`, which
/// holds `f32` parameters exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub version: u32,
    pub scalar: String,
    pub seed: u64,
    /// Last completed global epoch.
    pub epoch: usize,
    pub config: ProtocolConfig,
    pub model: MlpConfig,
    pub layers: Vec<LayerParams>,
    /// [`model_hash`] of the stored parameters.
    pub params_sha256: String,
}

fn scalar_name<T: Scalar>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

/// SHA-256 over the layer shapes and the bit patterns of every parameter.
pub fn model_hash<T: Scalar>(model: &Mlp<T>) -> String {
    let mut h = Sha256::new();
    for l in model.layers() {
        let (o, i) = l.weight.shape();
        h.update((o as u64).to_le_bytes());
        h.update((i as u64).to_le_bytes());
        for v in l.weight.as_slice().iter().chain(&l.bias) {
            h.update(v.as_f64().to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl CheckpointFile {
    pub fn from_model<T: Scalar>(config: &ProtocolConfig, epoch: usize, model: &Mlp<T>) -> Result<Self> {
        if !model.is_finite() {
            return Err(Error::Divergence("cannot checkpoint non-finite parameters".into()));
        }
        Ok(Self {
            version: CHECKPOINT_VERSION,
            scalar: scalar_name::<T>().to_string(),
            seed: config.seed,
            epoch,
            config: config.clone(),
            model: model.config().clone(),
            layers: model
                .layers()
                .iter()
                .map(|l| LayerParams {
                    shape: l.weight.shape(),
                    weight: l.weight.as_slice().iter().map(|v| v.as_f64()).collect(),
                    bias: l.bias.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
            params_sha256: model_hash(model),
        })
    }

    pub fn to_model<T: Scalar>(&self) -> Result<Mlp<T>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::arg(format!("unsupported checkpoint version {}", self.version)));
        }
        if self.scalar != scalar_name::<T>() {
            return Err(Error::arg(format!(
                "checkpoint holds {} parameters, requested {}",
                self.scalar,
                scalar_name::<T>()
            )));
        }
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = l.weight.iter().map(|&v| T::lit(v)).collect();
                Ok(Layer {
                    weight: Matrix::from_vec(l.shape.0, l.shape.1, w)?,
                    bias: l.bias.iter().map(|&v| T::lit(v)).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Mlp::from_layers(self.model.clone(), layers)?;
        let hash = model_hash(&model);
        if hash != self.params_sha256 {
            return Err(Error::Parse {
                source_name: "checkpoint".into(),
                message: format!("parameter hash {hash} does not match recorded {}", self.params_sha256),
            });
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

// ---------------------------------------------------------------- run dirs

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub t_nc: Option<usize>,
    pub fn_at_t_nc: Option<f64>,
    pub epochs: usize,
    pub phase1_reached_terminal_acc: bool,
    pub numeric_failure: bool,
    pub final_train_acc: Option<f64>,
    pub final_nc1: Option<f64>,
    pub final_fn: Option<f64>,
    pub wall_time_secs: f64,
}

impl RunSummary {
    pub fn of(record: &RunRecord) -> Self {
        let last = record.snapshots.last();
        Self {
            status: record.status,
            t_nc: record.t_nc,
            fn_at_t_nc: record.fn_at_t_nc,
            epochs: record.snapshots.len(),
            phase1_reached_terminal_acc: record.phase1_reached_terminal_acc,
            numeric_failure: record.numeric_failure,
            final_train_acc: last.map(|s| s.train_acc),
            final_nc1: last.and_then(|s| s.nc1.value()),
            final_fn: last.map(|s| s.fn_),
            wall_time_secs: record.wall_time_secs,
        }
    }
}

/// Creates `dir`, refusing if it already holds files unless `force`.
pub fn prepare_run_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if occupied && !force {
            return Err(Error::Exists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: PathBuf, contents: &[u8]) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes manifest, log, summary and (when given) the phase-1 checkpoint.
pub fn write_run<T: Scalar>(
    dir: &Path,
    manifest: &ExperimentManifest,
    record: &RunRecord,
    boundary: Option<&Mlp<T>>,
    force: bool,
) -> Result<()> {
    prepare_run_dir(dir, force)?;
    write_file(dir.join(MANIFEST_FILE), manifest.to_json().as_bytes())?;
    write_file(dir.join(LOG_FILE), log_to_string(&record.snapshots).as_bytes())?;
    if let Some(model) = boundary {
        if model.is_finite() {
            let ck = CheckpointFile::from_model(&record.config, record.config.phase1_epochs, model)?;
            write_file(dir.join(CHECKPOINT_FILE), ck.to_json().as_bytes())?;
        }
    }
    let summary = serde_json::to_string_pretty(&RunSummary::of(record))?;
    write_file(dir.join(SUMMARY_FILE), summary.as_bytes())
}

/// A run read back from its directory.
#[derive(Clone, Debug)]
pub struct StoredRun {
    pub dir: PathBuf,
    pub manifest: ExperimentManifest,
    pub record: RunRecord,
}

impl StoredRun {
    pub fn checkpoint(&self) -> Result<CheckpointFile> {
        CheckpointFile::read(&self.dir.join(CHECKPOINT_FILE))
    }
}

/// Loads a single-seed run directory and re-derives its record from the log.
pub fn load_run(dir: &Path) -> Result<StoredRun> {
    let manifest = ExperimentManifest::read(&dir.join(MANIFEST_FILE))?;
    let snapshots = read_log(&dir.join(LOG_FILE))?;
    let numeric_failure = snapshots
        .iter()
        .any(|s| !s.loss.is_finite() || !s.fn_.is_finite());
    let mut config = manifest.config.clone();
    if manifest.kind == RunKind::CeOnly {
        config.phase2_epochs = 0;
    }
    let mut record = RunRecord::from_snapshots(config, manifest.kind, snapshots, numeric_failure);
    record.dataset = manifest.dataset.name.clone();
    Ok(StoredRun {
        dir: dir.to_path_buf(),
        manifest,
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(epoch: usize, nc1: Metric) -> NcSnapshot {
        NcSnapshot {
            epoch,
            phase: if epoch > 2 { 2 } else { 1 },
            lr: 1e-3 / 3.0,
            loss: 0.1 + epoch as f64 * 1e-17,
            train_acc: 0.99,
            nc1,
            nc2: Metric::Value(-0.0),
            nc3: Metric::Value(1.0 / 7.0),
            fn_: std::f64::consts::PI * epoch as f64,
        }
    }

    #[test]
    fn log_round_trips_bitwise() {
        let rows = vec![
            snap(1, Metric::Value(0.123456789012345)),
            snap(2, Metric::Degenerate),
            snap(3, Metric::Value(5e-324)),
        ];
        let text = log_to_string(&rows);
        assert!(text.starts_with("epoch,phase,lr,loss,train_acc,nc1,nc2,nc3,fn\n"));
        assert!(text.contains(",degenerate,"));
        let back = parse_log(text.as_bytes(), "mem").unwrap();
        assert_eq!(back, rows);
        assert_eq!(back[0].nc2.value().unwrap().to_bits(), (-0.0f64).to_bits());
        assert_eq!(log_to_string(&back), text);
    }

    #[test]
    fn unknown_column_rejected() {
        let text = "epoch,phase,lr,loss,train_acc,nc1,nc2,nc3,fn,extra\n";
        let e = parse_log(text.as_bytes(), "x.csv").unwrap_err();
        assert!(e.to_string().contains("unknown column `extra`"), "{e}");
    }

    #[test]
    fn bad_value_reports_line_number() {
        let text = "epoch,phase,lr,loss,train_acc,nc1,nc2,nc3,fn\n1,1,0.1,1,1,0.5,0,0,1\n2,1,0.1,oops,1,0.5,0,0,1\n";
        let e = parse_log(text.as_bytes(), "x.csv").unwrap_err();
        assert!(e.to_string().starts_with("x.csv:3:"), "{e}");
    }

    #[test]
    fn table_round_trips_optionals() {
        #[derive(Debug, PartialEq, Serialize, Deserialize)]
        struct Row {
            name: String,
            x: Option<f64>,
            n: usize,
        }
        let rows = vec![
            Row { name: "a,b".into(), x: Some(0.1 + 0.2), n: 1 },
            Row { name: "c".into(), x: None, n: 2 },
        ];
        let text = write_table(&rows).unwrap();
        assert!(text.starts_with("name,x,n\n"));
        assert_eq!(read_table::<Row>(&text, "t").unwrap(), rows);
        let e = read_table::<Row>("name,x,n\na,1,2\nb,zz,3\n", "t.csv").unwrap_err();
        assert!(e.to_string().starts_with("t.csv:3:"), "{e}");
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let config = ProtocolConfig::desk_fixture();
        let mlp = config.model.mlp_config(10, 3);
        let model: Mlp<f64> = Mlp::build(mlp, &mut crate::numcore::RngState::new(3)).unwrap();
        let ck = CheckpointFile::from_model(&config, 30, &model).unwrap();
        let parsed: CheckpointFile = serde_json::from_str(&ck.to_json()).unwrap();
        let back: Mlp<f64> = parsed.to_model().unwrap();
        assert_eq!(model_hash(&back), model_hash(&model));
        assert_eq!(back, model);
        assert!(parsed.to_model::<f32>().is_err());
    }

    #[test]
    fn f32_checkpoint_round_trips() {
        let config = ProtocolConfig::desk_fixture();
        let model: Mlp<f32> = Mlp::build(config.model.mlp_config(4, 2), &mut crate::numcore::RngState::new(1)).unwrap();
        let ck = CheckpointFile::from_model(&config, 1, &model).unwrap();
        let back: Mlp<f32> = serde_json::from_str::<CheckpointFile>(&ck.to_json()).unwrap().to_model().unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn tampered_checkpoint_rejected() {
        let config = ProtocolConfig::desk_fixture();
        let model: Mlp<f64> = Mlp::build(config.model.mlp_config(4, 2), &mut crate::numcore::RngState::new(1)).unwrap();
        let mut ck = CheckpointFile::from_model(&config, 1, &model).unwrap();
        ck.layers[0].bias[0] = 1.0;
        assert!(ck.to_model::<f64>().is_err());
    }

    #[test]
    fn manifest_fingerprint_ignores_timestamp() {
        let data: Dataset<f64> = BlobsSpec::default().generate().unwrap();
        let desc = DatasetDescriptor::describe(DatasetSource::Blobs(BlobsSpec::default()), &data);
        let a = ExperimentManifest::new("x", RunKind::TwoPhase, ProtocolConfig::desk_fixture(), desc);
        let mut b = a.clone();
        b.timestamp += 100;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.config.seed = 9;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let back = ExperimentManifest::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn dataset_descriptor_detects_changes() {
        let spec = BlobsSpec::default();
        let data: Dataset<f64> = spec.generate().unwrap();
        let mut desc = DatasetDescriptor::describe(DatasetSource::Blobs(spec), &data);
        assert!(desc.load::<f64>(None).is_ok());
        desc.content_hash = "0".repeat(64);
        assert!(desc.load::<f64>(None).is_err());
    }

    #[test]
    fn occupied_dir_needs_force() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        prepare_run_dir(&dir, false).unwrap();
        fs::write(dir.join("log.csv"), "x").unwrap();
        assert!(matches!(prepare_run_dir(&dir, false), Err(Error::Exists(_))));
        prepare_run_dir(&dir, true).unwrap();
    }
}
