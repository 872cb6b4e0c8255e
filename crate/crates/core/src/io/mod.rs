//! Readers and writers for the on-disk formats described in FORMATS.md.

pub mod checkpoint;
pub mod config;
pub mod edges;
pub mod results;
pub mod snapshots;
pub mod task;

pub use checkpoint::{read_checkpoint, write_checkpoint, Manifest};
pub use config::{parse_run_config, read_run_config, RunConfig, Task};
pub use edges::{parse_edge_list, read_edge_list, write_edge_list};
pub use results::{read_results, write_results, CsvSink};
pub use snapshots::{read_snapshot_file, read_snapshots, write_snapshot_file, write_snapshots};
pub use task::{ablation_source, prepare_task, PreparedTask};
