//! Run configuration files (TOML).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionKind, SpikeMode};
use crate::error::{Error, Result};
use crate::io::snapshots::read_text;
use crate::model::FieldKind;
use crate::train::HyperGrid;

/// Values a grid list may draw from.
pub const LR_VALUES: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const WEIGHT_DECAY_VALUES: [f64; 2] = [1e-2, 1e-3];
pub const EPS_VALUES: [f64; 5] = [1.0, 0.5, 1e-1, 1e-2, 1e-3];
pub const HOPS_VALUES: [usize; 3] = [1, 2, 5];
/// `0` stands for "no encoder".
pub const EMBEDDING_VALUES: [usize; 4] = [0, 8, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    HeatSingle,
    HeatMulti,
    External,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::HeatSingle => "heat_single",
            Task::HeatMulti => "heat_multi",
            Task::External => "external",
        }
    }

    pub fn spike_mode(self) -> Option<SpikeMode> {
        match self {
            Task::HeatSingle => Some(SpikeMode::Single),
            Task::HeatMulti => Some(SpikeMode::Multi),
            Task::External => None,
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Task::HeatSingle, Task::HeatMulti, Task::External]
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid("task", format!("`{s}` is not one of heat_single, heat_multi, external")))
    }
}

/// A validated run description with defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub task: Task,
    /// Set exactly for the heat tasks.
    pub diffusion: Option<DiffusionKind>,
    pub rows: usize,
    pub cols: usize,
    /// Base seed from which the per-split dataset seeds are derived.
    pub dataset_seed: u64,
    /// Snapshot file and edge list of an external task.
    pub snapshots: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub grid: HyperGrid,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<OneOrMany<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight_decay: Option<OneOrMany<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psi: Option<OneOrMany<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    activation: Option<OneOrMany<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding_dim: Option<OneOrMany<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<OneOrMany<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hops: Option<OneOrMany<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<OneOrMany<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    patience: Option<usize>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    diffusion: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cols: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshots: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<RawGrid>,
}

const TOP_KEYS: [&str; 10] = [
    "task",
    "diffusion",
    "rows",
    "cols",
    "dataset_seed",
    "snapshots",
    "edges",
    "out",
    "workers",
    "grid",
];
const GRID_KEYS: [&str; 11] = [
    "model",
    "lr",
    "weight_decay",
    "psi",
    "activation",
    "embedding_dim",
    "eps",
    "hops",
    "seeds",
    "max_epochs",
    "patience",
];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_err(text: &str, e: toml::de::Error) -> Error {
    Error::Parse {
        path: None,
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    }
}

fn check_keys(table: &toml::Table) -> Result<()> {
    for (k, v) in table {
        if !TOP_KEYS.contains(&k.as_str()) {
            return Err(Error::UnknownKey(k.clone()));
        }
        if k == "grid" {
            if let Some(g) = v.as_table() {
                if let Some(bad) = g.keys().find(|gk| !GRID_KEYS.contains(&gk.as_str())) {
                    return Err(Error::UnknownKey(format!("grid.{bad}")));
                }
            }
        }
    }
    Ok(())
}

fn members<V: Copy + PartialEq>(
    field: &str,
    values: &[V],
    ok: impl Fn(V) -> bool,
    show: impl Fn(V) -> String,
) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(field, "list must not be empty"));
    }
    for (i, &v) in values.iter().enumerate() {
        if !ok(v) {
            return Err(Error::invalid(
                format!("{field}[{i}]"),
                format!("{} is not an allowed value", show(v)),
            ));
        }
        if values[..i].contains(&v) {
            return Err(Error::invalid(
                format!("{field}[{i}]"),
                format!("{} is listed twice", show(v)),
            ));
        }
    }
    Ok(())
}

fn parse_list<E: FromStr<Err = Error> + PartialEq + Copy>(field: &str, raw: Vec<String>) -> Result<Vec<E>> {
    if raw.is_empty() {
        return Err(Error::invalid(field, "list must not be empty"));
    }
    let mut out: Vec<E> = Vec::with_capacity(raw.len());
    for (i, s) in raw.iter().enumerate() {
        let v = s.parse::<E>().map_err(|e| match e {
            Error::InvalidValue { message, .. } => Error::invalid(format!("{field}[{i}]"), message),
            other => other,
        })?;
        if out.contains(&v) {
            return Err(Error::invalid(
                format!("{field}[{i}]"),
                format!("`{s}` is listed twice"),
            ));
        }
        out.push(v);
    }
    Ok(out)
}

fn build_grid(task: Task, raw: RawGrid) -> Result<HyperGrid> {
    let mut g = match task {
        Task::External => HyperGrid::bench(),
        _ => HyperGrid::heat(),
    };
    let field = match raw.model.as_deref() {
        None | Some("tgode") => FieldKind::KHop,
        Some("node") => FieldKind::Local,
        Some(other) => {
            return Err(Error::invalid(
                "grid.model",
                format!("`{other}` is not one of tgode, node"),
            ))
        }
    };
    g.field = field;
    if let Some(v) = raw.lr {
        g.lr = v.into_vec();
    }
    if let Some(v) = raw.weight_decay {
        g.weight_decay = v.into_vec();
    }
    if let Some(v) = raw.psi {
        g.psi = parse_list("grid.psi", v.into_vec())?;
    }
    if let Some(v) = raw.activation {
        g.activation = parse_list("grid.activation", v.into_vec())?;
    }
    if let Some(v) = raw.embedding_dim {
        let v = v.into_vec();
        members(
            "grid.embedding_dim",
            &v,
            |e| EMBEDDING_VALUES.contains(&e),
            |e| e.to_string(),
        )?;
        g.embedding_dim = v.into_iter().map(|e| (e > 0).then_some(e)).collect();
    }
    if let Some(v) = raw.eps {
        g.eps = v.into_vec();
    }
    match (field, raw.hops) {
        (FieldKind::Local, Some(_)) => {
            return Err(Error::invalid(
                "grid.hops",
                "the node model has no hops; remove the key",
            ))
        }
        (FieldKind::Local, None) => g.hops = vec![0],
        (FieldKind::KHop, Some(v)) => g.hops = v.into_vec(),
        (FieldKind::KHop, None) => {}
    }
    if let Some(v) = raw.seeds {
        g.seeds = v.into_vec();
    }
    if let Some(v) = raw.max_epochs {
        g.max_epochs = v;
    }
    if let Some(v) = raw.patience {
        g.patience = v;
    }
    validate_grid(&g)?;
    Ok(g)
}

/// Checks every list against the allowed value sets.
pub fn validate_grid(g: &HyperGrid) -> Result<()> {
    let show = |v: f64| format!("{v}");
    members("grid.lr", &g.lr, |v| LR_VALUES.contains(&v), show)?;
    members(
        "grid.weight_decay",
        &g.weight_decay,
        |v| WEIGHT_DECAY_VALUES.contains(&v),
        show,
    )?;
    members("grid.eps", &g.eps, |v| EPS_VALUES.contains(&v), show)?;
    if g.field == FieldKind::KHop {
        members("grid.hops", &g.hops, |v| HOPS_VALUES.contains(&v), |v| v.to_string())?;
    } else if g.hops != [0] {
        return Err(Error::invalid("grid.hops", "the node model uses hops = [0]"));
    }
    members("grid.seeds", &g.seeds, |_| true, |v| v.to_string())?;
    members(
        "grid.embedding_dim",
        &g.embedding_dim,
        |e| EMBEDDING_VALUES.contains(&e.unwrap_or(0)),
        |e| e.unwrap_or(0).to_string(),
    )?;
    if g.psi.is_empty() {
        return Err(Error::invalid("grid.psi", "list must not be empty"));
    }
    if g.activation.is_empty() {
        return Err(Error::invalid("grid.activation", "list must not be empty"));
    }
    if g.max_epochs == 0 {
        return Err(Error::invalid("grid.max_epochs", "must be >= 1"));
    }
    if g.patience == 0 {
        return Err(Error::invalid("grid.patience", "must be >= 1"));
    }
    if g.expand().is_empty() {
        return Err(Error::invalid(
            "grid",
            "every combination is invalid (psi = concat needs a non-zero embedding_dim)",
        ));
    }
    Ok(())
}

/// Parses and validates config text. Relative paths are kept as written.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| toml_err(text, e))?;
    check_keys(&table)?;
    if !table.contains_key("task") {
        return Err(Error::Parse {
            path: None,
            line: None,
            message: "missing required key `task`".into(),
        });
    }
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_err(text, e))?;
    let task: Task = raw.task.parse()?;
    let diffusion = match (task, raw.diffusion) {
        (Task::External, Some(_)) => return Err(Error::invalid("diffusion", "only heat tasks take a diffusion kind")),
        (Task::External, None) => None,
        (_, Some(d)) => Some(d.parse::<DiffusionKind>()?),
        (_, None) => return Err(Error::invalid("diffusion", "heat tasks require a diffusion kind")),
    };
    if task == Task::External {
        if raw.snapshots.is_none() {
            return Err(Error::invalid(
                "snapshots",
                "the external task requires a snapshot file",
            ));
        }
        if raw.edges.is_none() {
            return Err(Error::invalid("edges", "the external task requires an edge list"));
        }
        if raw.rows.is_some() || raw.cols.is_some() {
            return Err(Error::invalid("rows", "grid dimensions only apply to heat tasks"));
        }
    } else if raw.snapshots.is_some() || raw.edges.is_some() {
        return Err(Error::invalid("snapshots", "heat tasks generate their own data"));
    }
    let rows = raw.rows.unwrap_or(7);
    let cols = raw.cols.unwrap_or(10);
    if rows == 0 || cols == 0 || rows * cols < 2 {
        return Err(Error::invalid("rows", "the grid needs at least two nodes"));
    }
    let workers = raw.workers.unwrap_or(1);
    if workers == 0 {
        return Err(Error::invalid("workers", "must be >= 1"));
    }
    Ok(RunConfig {
        task,
        diffusion,
        rows,
        cols,
        dataset_seed: raw.dataset_seed.unwrap_or(0),
        snapshots: raw.snapshots,
        edges: raw.edges,
        out: raw.out,
        workers,
        grid: build_grid(task, raw.grid.unwrap_or_default())?,
    })
}

/// Reads a config file; relative data and output paths are resolved
/// against the file's directory.
pub fn read_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut cfg = parse_run_config(&text).map_err(|e| match e {
        Error::Parse {
            path: None,
            line,
            message,
        } => Error::Parse {
            path: Some(path.to_path_buf()),
            line,
            message,
        },
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.snapshots, &mut cfg.edges, &mut cfg.out].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

/// Renders a config so that [`parse_run_config`] gives it back unchanged.
pub fn format_run_config(cfg: &RunConfig) -> Result<String> {
    let g = &cfg.grid;
    let raw = RawConfig {
        task: cfg.task.name().to_string(),
        diffusion: cfg.diffusion.map(|d| d.flag().to_string()),
        rows: (cfg.task != Task::External).then_some(cfg.rows),
        cols: (cfg.task != Task::External).then_some(cfg.cols),
        dataset_seed: Some(cfg.dataset_seed),
        snapshots: cfg.snapshots.clone(),
        edges: cfg.edges.clone(),
        out: cfg.out.clone(),
        workers: Some(cfg.workers),
        grid: Some(RawGrid {
            model: Some(if g.field == FieldKind::Local { "node" } else { "tgode" }.to_string()),
            lr: Some(OneOrMany::Many(g.lr.clone())),
            weight_decay: Some(OneOrMany::Many(g.weight_decay.clone())),
            psi: Some(OneOrMany::Many(g.psi.iter().map(|p| p.name().to_string()).collect())),
            activation: Some(OneOrMany::Many(
                g.activation.iter().map(|a| a.name().to_string()).collect(),
            )),
            embedding_dim: Some(OneOrMany::Many(
                g.embedding_dim.iter().map(|e| e.unwrap_or(0)).collect(),
            )),
            eps: Some(OneOrMany::Many(g.eps.clone())),
            hops: (g.field == FieldKind::KHop).then(|| OneOrMany::Many(g.hops.clone())),
            seeds: Some(OneOrMany::Many(g.seeds.clone())),
            max_epochs: Some(g.max_epochs),
            patience: Some(g.patience),
        }),
    };
    toml::to_string(&raw).map_err(|e| Error::invalid("config", e.to_string()))
}
