//! Metric tables in CSV, one flushed row per record.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::FieldKind;
use crate::train::{report_log10, AblationRow, TrialConfig, TrialResult, TrialStatus, LOG10_ZERO_SENTINEL};

/// Column order of the grid-search results table.
pub const RESULTS_HEADER: [&str; 20] = [
    "index",
    "status",
    "model",
    "lr",
    "weight_decay",
    "psi",
    "activation",
    "embedding_dim",
    "eps",
    "hops",
    "seed",
    "max_epochs",
    "patience",
    "n_params",
    "epochs_run",
    "best_epoch",
    "best_val_mae",
    "test_mae",
    "test_log10_mae",
    "wall_time_s",
];

/// Column order of the sparsity-ablation table.
pub const ABLATION_HEADER: [&str; 18] = [
    "count",
    "n_train",
    "n_val",
    "n_test",
    "best_index",
    "lr",
    "weight_decay",
    "psi",
    "activation",
    "embedding_dim",
    "eps",
    "hops",
    "best_val_mae",
    "test_mae",
    "test_log10_mae",
    "lb_test_mae",
    "lb_test_log10_mae",
    "epochs_run",
];

/// Non-finite values become empty cells; `log10(0)` becomes the sentinel.
fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

fn log_num(v: f64) -> String {
    num(report_log10(v))
}

fn model_name(f: FieldKind) -> &'static str {
    match f {
        FieldKind::KHop => "tgode",
        FieldKind::Local => "node",
    }
}

fn config_cells(c: &TrialConfig) -> [String; 7] {
    [
        num(c.lr),
        num(c.weight_decay),
        c.psi.name().to_string(),
        c.activation.name().to_string(),
        c.embedding_dim.unwrap_or(0).to_string(),
        num(c.eps),
        c.hops.to_string(),
    ]
}

pub fn result_record(r: &TrialResult) -> Vec<String> {
    let c = &r.config;
    let mut row = vec![
        r.index.to_string(),
        match r.status {
            TrialStatus::Ok => "ok",
            TrialStatus::Diverged => "diverged",
        }
        .to_string(),
        model_name(c.field).to_string(),
    ];
    row.extend(config_cells(c));
    row.extend([
        c.seed.to_string(),
        c.max_epochs.to_string(),
        c.patience.to_string(),
        r.n_params.to_string(),
        r.epochs_run.to_string(),
        r.best_epoch.to_string(),
        num(r.best_val_mae),
        num(r.test_mae),
        log_num(r.test_log10_mae),
        num(r.wall_time_s),
    ]);
    row
}

pub fn ablation_record(a: &AblationRow) -> Vec<String> {
    let mut row = vec![
        a.count.to_string(),
        a.n_train.to_string(),
        a.n_val.to_string(),
        a.n_test.to_string(),
        a.best.index.to_string(),
    ];
    row.extend(config_cells(&a.best.config));
    row.extend([
        num(a.best.best_val_mae),
        num(a.best.test_mae),
        log_num(a.best.test_log10_mae),
        num(a.lb_test.mae),
        log_num(a.lb_test.log10_mae),
        a.best.epochs_run.to_string(),
    ]);
    row
}

/// Appends rows to a CSV file, flushing after each so that an interrupted
/// run leaves a valid prefix.
pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvSink {
    pub fn create(path: impl AsRef<Path>, header: &[&str]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut sink = Self {
            writer: csv::Writer::from_writer(file),
            path,
        };
        sink.write(header)?;
        Ok(sink)
    }

    pub fn write<S: AsRef<[u8]>>(&mut self, record: &[S]) -> Result<()> {
        self.writer
            .write_record(record)
            .map_err(|e| Error::io(&self.path, e.into()))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn cell<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let s = rec.get(i).unwrap_or("");
    s.parse().map_err(|_| Error::Parse {
        path: None,
        line: Some(line),
        message: format!("column `{}`: cannot parse `{s}`", RESULTS_HEADER[i]),
    })
}

fn opt_num(rec: &csv::StringRecord, i: usize, line: usize) -> Result<f64> {
    if rec.get(i).is_some_and(str::is_empty) {
        Ok(f64::NAN)
    } else {
        cell(rec, i, line)
    }
}

/// Reads a results table written by [`result_record`]. The sentinel maps
/// back to `-inf` where the test MAE is exactly zero.
pub fn parse_results(text: &str) -> Result<Vec<TrialResult>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: None,
        line: Some(1),
        message: e.to_string(),
    })?;
    if header.iter().ne(RESULTS_HEADER) {
        return Err(Error::Parse {
            path: None,
            line: Some(1),
            message: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: None,
            line: Some(line),
            message: e.to_string(),
        })?;
        let status = match rec.get(1) {
            Some("ok") => TrialStatus::Ok,
            Some("diverged") => TrialStatus::Diverged,
            other => {
                return Err(Error::Parse {
                    path: None,
                    line: Some(line),
                    message: format!("unknown status {other:?}"),
                })
            }
        };
        let field = match rec.get(2) {
            Some("tgode") => FieldKind::KHop,
            Some("node") => FieldKind::Local,
            other => {
                return Err(Error::Parse {
                    path: None,
                    line: Some(line),
                    message: format!("unknown model {other:?}"),
                })
            }
        };
        let emb: usize = cell(&rec, 7, line)?;
        let config = TrialConfig {
            lr: cell(&rec, 3, line)?,
            weight_decay: cell(&rec, 4, line)?,
            psi: rec.get(5).unwrap_or("").parse()?,
            activation: rec.get(6).unwrap_or("").parse()?,
            embedding_dim: (emb > 0).then_some(emb),
            eps: cell(&rec, 8, line)?,
            hops: cell(&rec, 9, line)?,
            field,
            seed: cell(&rec, 10, line)?,
            max_epochs: cell(&rec, 11, line)?,
            patience: cell(&rec, 12, line)?,
        };
        let test_mae = opt_num(&rec, 17, line)?;
        let mut test_log10_mae = opt_num(&rec, 18, line)?;
        if test_mae == 0.0 && test_log10_mae == LOG10_ZERO_SENTINEL {
            test_log10_mae = f64::NEG_INFINITY;
        }
        out.push(TrialResult {
            index: cell(&rec, 0, line)?,
            config,
            status,
            n_params: cell(&rec, 13, line)?,
            epochs_run: cell(&rec, 14, line)?,
            best_epoch: cell(&rec, 15, line)?,
            best_val_mae: opt_num(&rec, 16, line)?,
            test_mae,
            test_log10_mae,
            wall_time_s: cell(&rec, 19, line)?,
        });
    }
    Ok(out)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<TrialResult>> {
    let path = path.as_ref();
    parse_results(&crate::io::snapshots::read_text(path)?).map_err(|e| crate::io::snapshots::with_path(e, path))
}

/// Writes a whole table in one go.
pub fn write_results(path: impl AsRef<Path>, results: &[TrialResult]) -> Result<()> {
    let mut sink = CsvSink::create(path, &RESULTS_HEADER)?;
    for r in results {
        sink.write(&result_record(r))?;
    }
    Ok(())
}

/// Formats one line of text; used for human-readable summaries.
pub fn summary_line(r: &TrialResult) -> String {
    let c = &r.config;
    format!(
        "best trial {}: model={} lr={} wd={} psi={} act={} emb={} eps={} hops={} seed={} | val_mae={} test_mae={} test_log10_mae={}",
        r.index,
        model_name(c.field),
        c.lr,
        c.weight_decay,
        c.psi,
        c.activation.name(),
        c.embedding_dim.map_or("none".to_string(), |e| e.to_string()),
        c.eps,
        c.hops,
        c.seed,
        r.best_val_mae,
        r.test_mae,
        report_log10(r.test_log10_mae),
    )
}
