//! Temporal graph ODE (TG-ODE) over irregularly sampled graph snapshots.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the CLI and the experiments.

pub mod autodiff;
pub mod dense;
pub mod diffusion;
pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod scalar;
pub mod sequence;
pub mod sparse;
pub mod train;

pub use autodiff::{Activation, Gradients, Tape, Var};
pub use dense::Dense;
pub use diffusion::{
    make_heat_dataset, simulate, DiffusionKind, DiffusionOperator, DiffusionSpec, HeatDataset, HeatRecipe, HeatSeeds,
    SpikeMode, Trajectory,
};
pub use error::{Error, ErrorCategory, Result};
pub use graph::{build_grid_graph, normalized_laplacian, Graph};
pub use model::{FieldKind, ModelConfig, Params, PsiMode};
pub use scalar::Scalar;
pub use sequence::{temporal_split, Snapshot, SnapshotSequence};
pub use sparse::Csr;
pub use train::{
    grid_search, lb_baseline, run_trial, train, GridReport, HyperGrid, Metrics, TaskData, TrialConfig, TrialResult,
    TrialStatus,
};

pub type DenseMatrix = Dense<f64>;
pub type SparseMatrix = Csr<f64>;
pub type TgodeParams = Params<f64>;
pub type Sequence = SnapshotSequence<f64>;

pub type DenseMatrix32 = Dense<f32>;
pub type SparseMatrix32 = Csr<f32>;
pub type TgodeParams32 = Params<f32>;
pub type Sequence32 = SnapshotSequence<f32>;
