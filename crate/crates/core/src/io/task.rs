//! Turns a [`RunConfig`] into training data.

use serde::Serialize;

use crate::diffusion::{make_heat_dataset, simulate_split, DiffusionOperator, DiffusionSpec, HeatRecipe, HeatSeeds};
use crate::error::{Error, Result};
use crate::graph::{build_grid_graph, normalized_laplacian, Graph};
use crate::io::config::{RunConfig, Task};
use crate::io::edges::parse_edge_list;
use crate::io::snapshots::{read_snapshot_file, read_text, with_path};
use crate::scalar::Scalar;
use crate::sequence::{temporal_split, SnapshotSequence};
use crate::sparse::Csr;
use crate::train::TaskData;

/// Everything a heat task was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatProvenance {
    pub recipe: HeatRecipe,
    pub seeds: HeatSeeds,
}

#[derive(Debug, Clone)]
pub struct PreparedTask<T> {
    pub graph: Graph,
    pub data: TaskData<T>,
    pub heat: Option<HeatProvenance>,
}

pub fn heat_recipe(cfg: &RunConfig) -> Result<HeatRecipe> {
    let (Some(mode), Some(kind)) = (cfg.task.spike_mode(), cfg.diffusion) else {
        return Err(Error::invalid("task", "not a heat task"));
    };
    Ok(HeatRecipe {
        rows: cfg.rows,
        cols: cfg.cols,
        ..HeatRecipe::standard(mode, kind)
    })
}

fn read_external<T: Scalar>(cfg: &RunConfig) -> Result<(Graph, SnapshotSequence<T>)> {
    let (Some(snap), Some(edges)) = (&cfg.snapshots, &cfg.edges) else {
        return Err(Error::invalid(
            "snapshots",
            "the external task requires snapshots and edges",
        ));
    };
    let seq = read_snapshot_file::<T>(snap)?;
    let graph = parse_edge_list(&read_text(edges)?, Some(seq.n_nodes())).map_err(|e| with_path(e, edges))?;
    Ok((graph, seq))
}

/// Heat tasks are simulated; external tasks are read and split 80/10/10 in
/// time.
pub fn prepare_task<T: Scalar>(cfg: &RunConfig) -> Result<PreparedTask<T>> {
    match cfg.task {
        Task::External => {
            let (graph, seq) = read_external::<T>(cfg)?;
            let (train, val, test) = temporal_split(&seq)?;
            let data = TaskData::new(normalized_laplacian(&graph)?, train, val, test)?;
            Ok(PreparedTask {
                graph,
                data,
                heat: None,
            })
        }
        _ => {
            let recipe = heat_recipe(cfg)?;
            let seeds = HeatSeeds::from_base(cfg.dataset_seed);
            let ds = make_heat_dataset::<T>(recipe, seeds)?;
            Ok(PreparedTask {
                data: TaskData::new(ds.laplacian, ds.train, ds.val, ds.test)?,
                graph: ds.graph,
                heat: Some(HeatProvenance { recipe, seeds }),
            })
        }
    }
}

/// The pool a sparsity ablation subsamples from: every state of the
/// training simulation for heat tasks, the whole file for external ones.
pub fn ablation_source<T: Scalar>(cfg: &RunConfig) -> Result<(Csr<T>, SnapshotSequence<T>)> {
    match cfg.task {
        Task::External => {
            let (graph, seq) = read_external::<T>(cfg)?;
            Ok((normalized_laplacian(&graph)?, seq))
        }
        _ => {
            let recipe = heat_recipe(cfg)?;
            let seeds = HeatSeeds::from_base(cfg.dataset_seed);
            let graph = build_grid_graph(recipe.rows, recipe.cols)?;
            let laplacian = normalized_laplacian::<T>(&graph)?;
            let spec = DiffusionSpec {
                kind: recipe.kind,
                noise_seed: seeds.noise,
            };
            let op = DiffusionOperator::from_laplacian(spec, &laplacian)?;
            let (traj, _) = simulate_split(&op, &recipe, graph.n_nodes(), recipe.train_steps, seeds.train)?;
            Ok((laplacian, traj.to_sequence()?))
        }
    }
}
