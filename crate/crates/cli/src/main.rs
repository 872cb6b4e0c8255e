//! `tgode`: generate heat-diffusion data, train and search TG-ODE models,
//! evaluate checkpoints, and run baselines and sparsity ablations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use tgode_core::diffusion::{make_heat_dataset, HeatRecipe, HeatSeeds, SpikeMode};
use tgode_core::io::checkpoint::{read_checkpoint, write_checkpoint, Manifest};
use tgode_core::io::config::{read_run_config, validate_grid, RunConfig};
use tgode_core::io::edges::{parse_edge_list, write_edge_list};
use tgode_core::io::results::{ablation_record, result_record, summary_line, CsvSink, ABLATION_HEADER, RESULTS_HEADER};
use tgode_core::io::snapshots::{read_snapshot_file, write_snapshot_file};
use tgode_core::io::task::{ablation_source, prepare_task};
use tgode_core::model::sequence_mae;
use tgode_core::train::{ablate_sparsity, grid_search, lb_baseline, run_trial, HyperGrid, Metrics, TaskData};
use tgode_core::{normalized_laplacian, DiffusionKind, Error, ErrorCategory, FieldKind, Result, Sequence};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  validation error (bad flag, config or input data)
  3  I/O error
  4  numeric divergence (every trial diverged, or a rollout overflowed)";

#[derive(Parser)]
#[command(name = "tgode", version, about = "Temporal graph ODEs on irregularly sampled snapshots", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a heat-diffusion dataset on a grid graph.
    #[command(after_help = EXIT_CODES)]
    Simulate {
        /// One of l, l2, l5, tanh_l, l_x5, l_x005, l_noise.
        #[arg(long)]
        diffusion: String,
        /// single or multi.
        #[arg(long, default_value = "single")]
        mode: String,
        #[arg(long, default_value_t = 7)]
        rows: usize,
        #[arg(long, default_value_t = 10)]
        cols: usize,
        /// Base seed; the per-split seeds are derived from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one grid point of a run configuration.
    #[command(after_help = EXIT_CODES)]
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Index into the expanded grid.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every grid point and keep the best by validation MAE.
    #[command(name = "grid-search", after_help = EXIT_CODES)]
    GridSearch {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's worker count.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on a snapshot file.
    #[command(after_help = EXIT_CODES)]
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Snapshot file (JSON lines).
        #[arg(long)]
        snapshots: PathBuf,
        /// Edge list defining the graph.
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search on random subsets of increasing size.
    #[command(name = "ablate-sparsity", after_help = EXIT_CODES)]
    AblateSparsity {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated snapshot counts, e.g. 25,50,100.
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
        /// Seed of the subset draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Persistence (lb) or interaction-free ODE (node) baseline on a
    /// directory written by `simulate`.
    #[command(after_help = EXIT_CODES)]
    Baseline {
        /// lb or node.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        data: PathBuf,
        /// Grid for the node baseline (defaults to the heat grid).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Validation => 2,
                ErrorCategory::Io => 3,
                ErrorCategory::Divergence => 4,
            })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            diffusion,
            mode,
            rows,
            cols,
            seed,
            out,
        } => simulate(&diffusion, &mode, rows, cols, seed, &out),
        Command::Train { config, trial, out } => train_one(&config, trial, out),
        Command::GridSearch { config, workers, out } => search(&config, workers, out),
        Command::Evaluate {
            checkpoint,
            snapshots,
            edges,
            out,
        } => evaluate(&checkpoint, &snapshots, &edges, &out),
        Command::AblateSparsity {
            config,
            counts,
            seed,
            workers,
            out,
        } => ablate(&config, &counts, seed, workers, out),
        Command::Baseline {
            kind,
            data,
            config,
            workers,
            out,
        } => baseline(&kind, &data, config.as_deref(), workers, &out),
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    let out = flag.or_else(|| cfg.out.clone()).ok_or_else(|| Error::InvalidValue {
        field: "out".into(),
        message: "give --out or set `out` in the config".into(),
    })?;
    create_dir(&out)?;
    Ok(out)
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if cfg.task.spike_mode().is_some() {
        v["derived_seeds"] = serde_json::to_value(HeatSeeds::from_base(cfg.dataset_seed)).expect("seeds serialize");
    }
    v
}

fn simulate(diffusion: &str, mode: &str, rows: usize, cols: usize, seed: u64, out: &Path) -> Result<()> {
    let kind: DiffusionKind = diffusion.parse()?;
    let mode: SpikeMode = mode.parse()?;
    let recipe = HeatRecipe {
        rows,
        cols,
        ..HeatRecipe::standard(mode, kind)
    };
    let seeds = HeatSeeds::from_base(seed);
    let ds = make_heat_dataset::<f64>(recipe, seeds)?;
    create_dir(out)?;
    write_snapshot_file(out.join("train.jsonl"), &ds.train)?;
    write_snapshot_file(out.join("val.jsonl"), &ds.val)?;
    write_snapshot_file(out.join("test.jsonl"), &ds.test)?;
    write_edge_list(out.join("graph.edges"), &ds.graph)?;
    Manifest::new(
        "simulate",
        json!({ "base_seed": seed, "seeds": seeds, "recipe": recipe }),
        ["train.jsonl", "val.jsonl", "test.jsonl", "graph.edges"]
            .map(String::from)
            .to_vec(),
    )
    .write(out.join("manifest.json"))?;
    println!(
        "wrote {} train, {} val, {} test snapshots on {} nodes to {}",
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        ds.graph.n_nodes(),
        out.display()
    );
    Ok(())
}

fn train_one(config: &Path, trial: usize, out: Option<PathBuf>) -> Result<()> {
    let cfg = read_run_config(config)?;
    let trials = cfg.grid.expand();
    let tc = trials.get(trial).ok_or_else(|| Error::InvalidValue {
        field: "trial".into(),
        message: format!("the grid has {} trials", trials.len()),
    })?;
    let out = out_dir(out, &cfg)?;
    let task = prepare_task::<f64>(&cfg)?;
    let run = run_trial(trial, tc, &task.data)?;
    let mut sink = CsvSink::create(out.join("results.csv"), &RESULTS_HEADER)?;
    sink.write(&result_record(&run.result))?;
    write_checkpoint(out.join("checkpoint.json"), &run.params, Some(tc))?;
    Manifest::new(
        "train",
        json!({ "config": config_json(&cfg), "trial": trial }),
        vec!["results.csv".into(), "checkpoint.json".into()],
    )
    .write(out.join("manifest.json"))?;
    println!("{}", summary_line(&run.result));
    if run.result.status == tgode_core::TrialStatus::Diverged {
        return Err(Error::AllTrialsDiverged(1));
    }
    Ok(())
}

fn search_on(
    data: &TaskData<f64>,
    grid: &HyperGrid,
    workers: usize,
    out: &Path,
    manifest: serde_json::Value,
) -> Result<()> {
    let trials = grid.expand();
    let mut sink = CsvSink::create(out.join("results.csv"), &RESULTS_HEADER)?;
    let report = grid_search(&trials, data, workers, |r| sink.write(&result_record(r)))?;
    let best = report.best();
    write_checkpoint(
        out.join("best_checkpoint.json"),
        &report.best_params,
        Some(&best.config),
    )?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "n_trials": report.results.len(),
            "best_index": best.index,
            "best_val_mae": best.best_val_mae,
            "test_mae": best.test_mae,
            "test_log10_mae": Metrics::from_mae(best.test_mae).log10_reported(),
            "ranking": report.ranking,
        }),
    )?;
    Manifest::new(
        "grid-search",
        manifest,
        ["results.csv", "best_checkpoint.json", "summary.json"]
            .map(String::from)
            .to_vec(),
    )
    .write(out.join("manifest.json"))?;
    println!("{}", summary_line(best));
    Ok(())
}

fn search(config: &Path, workers: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let cfg = read_run_config(config)?;
    let workers = workers.unwrap_or(cfg.workers).max(1);
    let out = out_dir(out, &cfg)?;
    let task = prepare_task::<f64>(&cfg)?;
    search_on(
        &task.data,
        &cfg.grid,
        workers,
        &out,
        json!({ "config": config_json(&cfg) }),
    )
}

fn evaluate(checkpoint: &Path, snapshots: &Path, edges: &Path, out: &Path) -> Result<()> {
    let (params, trial) = read_checkpoint::<f64>(checkpoint)?;
    let seq: Sequence = read_snapshot_file(snapshots)?;
    let text = fs::read_to_string(edges).map_err(|e| Error::Io {
        path: edges.to_path_buf(),
        source: e,
    })?;
    let graph = parse_edge_list(&text, Some(seq.n_nodes()))?;
    let l = std::sync::Arc::new(normalized_laplacian::<f64>(&graph)?);
    let mae = sequence_mae(&params, &l, &seq)?;
    if !mae.is_finite() {
        return Err(Error::NumericOverflow {
            context: "evaluation".into(),
        });
    }
    let m = Metrics::from_mae(mae);
    let lb = lb_baseline(&seq)?;
    create_dir(out)?;
    write_json(
        &out.join("metrics.json"),
        &json!({
            "mae": m.mae,
            "log10_mae": m.log10_reported(),
            "lb_mae": lb.mae,
            "lb_log10_mae": lb.log10_reported(),
            "n_snapshots": seq.len(),
        }),
    )?;
    Manifest::new(
        "evaluate",
        json!({
            "checkpoint": checkpoint,
            "snapshots": snapshots,
            "edges": edges,
            "trial": trial,
        }),
        vec!["metrics.json".into()],
    )
    .write(out.join("manifest.json"))?;
    println!("mae={} log10_mae={}", m.mae, m.log10_reported());
    Ok(())
}

fn ablate(config: &Path, counts: &[usize], seed: u64, workers: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let cfg = read_run_config(config)?;
    if counts.is_empty() {
        return Err(Error::InvalidValue {
            field: "counts".into(),
            message: "at least one count is required".into(),
        });
    }
    let workers = workers.unwrap_or(cfg.workers).max(1);
    let out = out_dir(out, &cfg)?;
    let (laplacian, source) = ablation_source::<f64>(&cfg)?;
    let mut sink = CsvSink::create(out.join("ablation.csv"), &ABLATION_HEADER)?;
    let rows = ablate_sparsity(&source, &laplacian, counts, &cfg.grid.expand(), seed, workers, |row| {
        sink.write(&ablation_record(row))
    })?;
    Manifest::new(
        "ablate-sparsity",
        json!({ "config": config_json(&cfg), "counts": counts, "subset_seed": seed }),
        vec!["ablation.csv".into()],
    )
    .write(out.join("manifest.json"))?;
    for r in &rows {
        println!(
            "count={} test_mae={} test_log10_mae={}",
            r.count,
            r.best.test_mae,
            Metrics::from_mae(r.best.test_mae).log10_reported()
        );
    }
    Ok(())
}

fn load_split_dir(dir: &Path) -> Result<TaskData<f64>> {
    let train: Sequence = read_snapshot_file(dir.join("train.jsonl"))?;
    let val: Sequence = read_snapshot_file(dir.join("val.jsonl"))?;
    let test: Sequence = read_snapshot_file(dir.join("test.jsonl"))?;
    let edges = dir.join("graph.edges");
    let text = fs::read_to_string(&edges).map_err(|e| Error::Io { path: edges, source: e })?;
    let graph = parse_edge_list(&text, Some(train.n_nodes()))?;
    TaskData::new(normalized_laplacian(&graph)?, train, val, test)
}

fn baseline(kind: &str, data: &Path, config: Option<&Path>, workers: usize, out: &Path) -> Result<()> {
    match kind {
        "lb" => {
            let test: Sequence = read_snapshot_file(data.join("test.jsonl"))?;
            let m = lb_baseline(&test)?;
            create_dir(out)?;
            let mut sink = CsvSink::create(out.join("baseline.csv"), &["kind", "split", "mae", "log10_mae"])?;
            sink.write(&[
                "lb".to_string(),
                "test".into(),
                format!("{:?}", m.mae),
                format!("{:?}", m.log10_reported()),
            ])?;
            Manifest::new(
                "baseline",
                json!({ "kind": "lb", "data": data }),
                vec!["baseline.csv".into()],
            )
            .write(out.join("manifest.json"))?;
            println!("lb test mae={} log10_mae={}", m.mae, m.log10_reported());
            Ok(())
        }
        "node" => {
            let mut grid = match config {
                Some(p) => read_run_config(p)?.grid,
                None => HyperGrid::heat(),
            };
            grid.field = FieldKind::Local;
            grid.hops = vec![0];
            validate_grid(&grid)?;
            let task = load_split_dir(data)?;
            create_dir(out)?;
            search_on(
                &task,
                &grid,
                workers,
                out,
                json!({ "kind": "node", "data": data, "grid": grid }),
            )
        }
        other => Err(Error::InvalidValue {
            field: "kind".into(),
            message: format!("`{other}` is not one of lb, node"),
        }),
    }
}
