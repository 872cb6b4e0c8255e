//! Optimization, model selection and baselines.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::dense::Dense;
use crate::diffusion::sample_indices;
use crate::error::{Error, Result};
use crate::model::{loss_and_gradients, sequence_mae, FieldKind, ModelConfig, Params, PsiMode};
use crate::scalar::Scalar;
use crate::sequence::{temporal_split, SnapshotSequence};
use crate::sparse::Csr;

/// Stand-in for `log10(0)` in machine-readable outputs.
pub const LOG10_ZERO_SENTINEL: f64 = -99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    /// `-inf` when `mae == 0`.
    pub log10_mae: f64,
}

impl Metrics {
    pub fn from_mae(mae: f64) -> Self {
        Self {
            mae,
            log10_mae: if mae == 0.0 { f64::NEG_INFINITY } else { mae.log10() },
        }
    }

    /// `log10_mae` with `-inf` replaced by [`LOG10_ZERO_SENTINEL`].
    pub fn log10_reported(&self) -> f64 {
        report_log10(self.log10_mae)
    }
}

pub fn report_log10(v: f64) -> f64 {
    if v == f64::NEG_INFINITY {
        LOG10_ZERO_SENTINEL
    } else {
        v
    }
}

pub fn metrics<T: Scalar>(pred: &Dense<T>, target: &Dense<T>) -> Result<Metrics> {
    Ok(Metrics::from_mae(pred.mean_abs_diff(target)?.to_f64_exact()))
}

/// Persistence predictor `X̂(t_i) = X̄(t_{i-1})`, scored like the training
/// loss: node-mean absolute error per snapshot, then mean over snapshots.
pub fn lb_baseline<T: Scalar>(seq: &SnapshotSequence<T>) -> Result<Metrics> {
    if seq.len() < 2 {
        return Err(Error::invalid("sequence", "at least two snapshots are required"));
    }
    let e = seq.entries();
    let mut total = 0.0;
    for w in e.windows(2) {
        total += w[0].x.mean_abs_diff(&w[1].x)?.to_f64_exact();
    }
    Ok(Metrics::from_mae(total / (e.len() - 1) as f64))
}

/// Adam with the weight decay folded into the gradient (`g + wd·θ`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step<T: Scalar>(
        &self,
        params: &mut [&mut Dense<T>],
        grads: &[Dense<T>],
        state: &mut AdamState<T>,
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != state.m.len() {
            return Err(Error::shape(
                "adam",
                format!("{} tensors", state.m.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        state.t += 1;
        let t = state.t as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let (lr, wd, eps) = (T::of(self.lr), T::of(self.weight_decay), T::of(self.eps));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::shape(
                    "adam",
                    format!("{:?}", p.shape()),
                    format!("grad {:?}", g.shape()),
                ));
            }
            let ps = p.as_mut_slice();
            let ms = m.as_mut_slice();
            let vs = v.as_mut_slice();
            for i in 0..ps.len() {
                let gi = g.as_slice()[i] + wd * ps[i];
                ms[i] = b1 * ms[i] + (T::one() - b1) * gi;
                vs[i] = b2 * vs[i] + (T::one() - b2) * gi * gi;
                let m_hat = ms[i] / bc1;
                let v_hat = vs[i] / bc2;
                ps[i] = ps[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Dense<T>>,
    v: Vec<Dense<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let m: Vec<Dense<T>> = shapes.into_iter().map(|(r, c)| Dense::zeros(r, c)).collect();
        Self { v: m.clone(), m, t: 0 }
    }

    pub fn for_params(params: &Params<T>) -> Self {
        Self::new(params.tensors().iter().map(|t| t.shape()))
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Tracks the best validation score and the epochs since it improved.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val: f64) -> StopDecision {
        let improved = val < self.best;
        if improved {
            self.best = val;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopDecision {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub psi: PsiMode,
    pub activation: Activation,
    pub embedding_dim: Option<usize>,
    pub eps: f64,
    pub hops: usize,
    pub field: FieldKind,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn model_config(&self, state_dim: usize, exo_dim: usize) -> ModelConfig {
        ModelConfig {
            state_dim,
            exo_dim,
            embedding_dim: self.embedding_dim,
            hops: self.hops,
            eps: self.eps,
            activation: self.activation,
            psi: self.psi,
            field: self.field,
        }
    }

    /// The same hyperparameters with the interaction-free NODE field.
    pub fn as_node_baseline(&self) -> Self {
        Self {
            hops: 0,
            field: FieldKind::Local,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Weights from the epoch with the lowest validation MAE.
    pub best_params: Params<T>,
    pub best_val_mae: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub diverged: bool,
    pub history: Vec<EpochRecord>,
}

/// Full-batch training: one gradient step per epoch over the whole training
/// sequence, validation after every step, early stopping on validation MAE.
///
/// Non-finite values end the run with `diverged = true` rather than an
/// error.
pub fn train<T: Scalar>(
    init: Params<T>,
    laplacian: &Arc<Csr<T>>,
    train_seq: &SnapshotSequence<T>,
    val_seq: &SnapshotSequence<T>,
    cfg: &TrialConfig,
) -> Result<TrainOutcome<T>> {
    let adam = Adam::new(cfg.lr, cfg.weight_decay);
    let mut state = AdamState::for_params(&init);
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut params = init;
    let mut best_params = params.clone();
    let mut history = Vec::new();
    let mut diverged = false;

    for epoch in 1..=cfg.max_epochs {
        let (loss, grads) = match loss_and_gradients(&params, laplacian, train_seq) {
            Ok(v) => v,
            Err(Error::NumericOverflow { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        adam.step(&mut params.tensors_mut(), &grads, &mut state)?;
        let val = match sequence_mae(&params, laplacian, val_seq) {
            Ok(v) if v.is_finite() => v.to_f64_exact(),
            Ok(_) | Err(Error::NumericOverflow { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        history.push(EpochRecord {
            train_loss: loss.to_f64_exact(),
            val_mae: val,
        });
        let d = stopper.observe(epoch, val);
        if d.improved {
            best_params.clone_from(&params);
        }
        if d.stop {
            break;
        }
    }
    Ok(TrainOutcome {
        best_params,
        best_val_mae: if stopper.best_epoch() == 0 {
            f64::NAN
        } else {
            stopper.best()
        },
        best_epoch: stopper.best_epoch(),
        epochs_run: history.len(),
        diverged,
        history,
    })
}

/// Graph operator plus the three splits a trial trains and is scored on.
#[derive(Debug, Clone)]
pub struct TaskData<T> {
    pub laplacian: Arc<Csr<T>>,
    pub train: SnapshotSequence<T>,
    pub val: SnapshotSequence<T>,
    pub test: SnapshotSequence<T>,
}

impl<T: Scalar> TaskData<T> {
    pub fn new(
        laplacian: Csr<T>,
        train: SnapshotSequence<T>,
        val: SnapshotSequence<T>,
        test: SnapshotSequence<T>,
    ) -> Result<Self> {
        for (name, s) in [("train", &train), ("val", &val), ("test", &test)] {
            if s.len() < 2 {
                return Err(Error::invalid(name, "split needs at least two snapshots"));
            }
            if s.n_nodes() != laplacian.n_rows() {
                return Err(Error::shape(
                    "task data",
                    format!("{} nodes", laplacian.n_rows()),
                    format!("{} nodes in {name}", s.n_nodes()),
                ));
            }
            if s.state_dim() != train.state_dim() || s.exo_dim() != train.exo_dim() {
                return Err(Error::shape("task data", "matching feature widths", name.to_string()));
            }
        }
        Ok(Self {
            laplacian: Arc::new(laplacian),
            train,
            val,
            test,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.train.state_dim()
    }

    pub fn exo_dim(&self) -> usize {
        self.train.exo_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Diverged,
}

/// Metrics of one trial, taken from its best-validation checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub index: usize,
    pub config: TrialConfig,
    pub status: TrialStatus,
    pub best_val_mae: f64,
    pub test_mae: f64,
    pub test_log10_mae: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub n_params: usize,
    pub wall_time_s: f64,
}

impl TrialResult {
    /// Equality of everything except wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits();
        self.index == other.index
            && self.config == other.config
            && self.status == other.status
            && eq(self.best_val_mae, other.best_val_mae)
            && eq(self.test_mae, other.test_mae)
            && eq(self.test_log10_mae, other.test_log10_mae)
            && self.epochs_run == other.epochs_run
            && self.best_epoch == other.best_epoch
            && self.n_params == other.n_params
    }
}

/// A trial's result together with its best weights.
#[derive(Debug, Clone)]
pub struct TrialRun<T> {
    pub result: TrialResult,
    pub params: Params<T>,
}

/// Initializes from `cfg.seed`, trains, and scores the best checkpoint on test.
pub fn run_trial<T: Scalar>(index: usize, cfg: &TrialConfig, data: &TaskData<T>) -> Result<TrialRun<T>> {
    let start = Instant::now();
    let model_cfg = cfg.model_config(data.state_dim(), data.exo_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Params::init(model_cfg, &mut rng)?;
    let n_params = init.n_params();
    let out = train(init, &data.laplacian, &data.train, &data.val, cfg)?;
    let test = if out.diverged {
        None
    } else {
        match sequence_mae(&out.best_params, &data.laplacian, &data.test) {
            Ok(v) if v.is_finite() => Some(Metrics::from_mae(v.to_f64_exact())),
            Ok(_) | Err(Error::NumericOverflow { .. }) => None,
            Err(e) => return Err(e),
        }
    };
    let result = TrialResult {
        index,
        config: cfg.clone(),
        status: if test.is_some() {
            TrialStatus::Ok
        } else {
            TrialStatus::Diverged
        },
        best_val_mae: out.best_val_mae,
        test_mae: test.map_or(f64::NAN, |m| m.mae),
        test_log10_mae: test.map_or(f64::NAN, |m| m.log10_mae),
        epochs_run: out.epochs_run,
        best_epoch: out.best_epoch,
        n_params,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(TrialRun {
        result,
        params: out.best_params,
    })
}

/// Value lists whose Cartesian product forms the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub psi: Vec<PsiMode>,
    pub activation: Vec<Activation>,
    pub embedding_dim: Vec<Option<usize>>,
    pub eps: Vec<f64>,
    pub hops: Vec<usize>,
    pub seeds: Vec<u64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub field: FieldKind,
}

pub const MAX_EPOCHS: usize = 3000;
pub const PATIENCE: usize = 100;

impl HyperGrid {
    /// Heat-diffusion search space.
    pub fn heat() -> Self {
        Self {
            lr: vec![1e-2, 1e-3, 1e-4],
            weight_decay: vec![1e-2, 1e-3],
            psi: PsiMode::ALL.to_vec(),
            activation: Activation::ALL.to_vec(),
            embedding_dim: vec![None, Some(8)],
            eps: vec![1e-3],
            hops: vec![5],
            seeds: vec![0],
            max_epochs: MAX_EPOCHS,
            patience: PATIENCE,
            field: FieldKind::KHop,
        }
    }

    /// Search space for externally supplied benchmarks.
    pub fn bench() -> Self {
        Self {
            embedding_dim: vec![Some(64), Some(32)],
            eps: vec![1.0, 0.5, 1e-1, 1e-2, 1e-3],
            hops: vec![1, 2, 5],
            ..Self::heat()
        }
    }

    /// Size of the product before excluding invalid combinations.
    pub fn raw_size(&self) -> usize {
        self.lr.len()
            * self.weight_decay.len()
            * self.psi.len()
            * self.activation.len()
            * self.embedding_dim.len()
            * self.eps.len()
            * self.hops.len()
            * self.seeds.len()
    }

    /// All valid combinations in a fixed nesting order
    /// (lr, weight decay, ψ, activation, embedding, ε, hops, seed).
    /// ψ = concat without an embedding is skipped.
    pub fn expand(&self) -> Vec<TrialConfig> {
        let mut out = Vec::new();
        for &lr in &self.lr {
            for &weight_decay in &self.weight_decay {
                for &psi in &self.psi {
                    for &activation in &self.activation {
                        for &embedding_dim in &self.embedding_dim {
                            if psi == PsiMode::Concat && embedding_dim.is_none() {
                                continue;
                            }
                            for &eps in &self.eps {
                                for &hops in &self.hops {
                                    for &seed in &self.seeds {
                                        out.push(TrialConfig {
                                            lr,
                                            weight_decay,
                                            psi,
                                            activation,
                                            embedding_dim,
                                            eps,
                                            hops: if self.field == FieldKind::Local { 0 } else { hops },
                                            field: self.field,
                                            max_epochs: self.max_epochs,
                                            patience: self.patience,
                                            seed,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Ranking order: finished trials first, then lower validation MAE, fewer
/// parameters, lower index.
pub fn rank_cmp(a: &TrialResult, b: &TrialResult) -> std::cmp::Ordering {
    let diverged = |r: &TrialResult| r.status == TrialStatus::Diverged;
    diverged(a)
        .cmp(&diverged(b))
        .then(a.best_val_mae.total_cmp(&b.best_val_mae))
        .then(a.n_params.cmp(&b.n_params))
        .then(a.index.cmp(&b.index))
}

#[derive(Debug, Clone)]
pub struct GridReport<T> {
    /// Indexed by trial index.
    pub results: Vec<TrialResult>,
    /// Trial indices, best first.
    pub ranking: Vec<usize>,
    pub best_params: Params<T>,
}

impl<T> GridReport<T> {
    pub fn best(&self) -> &TrialResult {
        &self.results[self.ranking[0]]
    }
}

/// Runs every trial on `workers` threads. `on_result` sees each result as
/// it completes (completion order); the report is independent of `workers`.
pub fn grid_search<T: Scalar>(
    trials: &[TrialConfig],
    data: &TaskData<T>,
    workers: usize,
    mut on_result: impl FnMut(&TrialResult) -> Result<()>,
) -> Result<GridReport<T>> {
    if trials.is_empty() {
        return Err(Error::invalid("grid", "the search space is empty"));
    }
    let workers = workers.clamp(1, trials.len());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Result<TrialRun<T>>>();
    let mut results: Vec<Option<TrialResult>> = vec![None; trials.len()];
    let mut best: Option<TrialRun<T>> = None;
    let mut first_err: Option<Error> = None;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= trials.len() {
                    break;
                }
                if tx.send(run_trial(i, &trials[i], data)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for msg in rx {
            match msg {
                Ok(run) => {
                    if first_err.is_none() {
                        if let Err(e) = on_result(&run.result) {
                            first_err = Some(e);
                            // stop handing out work
                            next.store(trials.len(), Ordering::SeqCst);
                        }
                    }
                    results[run.result.index] = Some(run.result.clone());
                    let better = best.as_ref().is_none_or(|b| rank_cmp(&run.result, &b.result).is_lt());
                    if better {
                        best = Some(run);
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                    next.store(trials.len(), Ordering::SeqCst);
                }
            }
        }
    });

    if let Some(e) = first_err {
        return Err(e);
    }
    let results: Vec<TrialResult> = results.into_iter().map(|r| r.expect("every trial reported")).collect();
    if results.iter().all(|r| r.status == TrialStatus::Diverged) {
        return Err(Error::AllTrialsDiverged(results.len()));
    }
    let mut ranking: Vec<usize> = (0..results.len()).collect();
    ranking.sort_by(|&a, &b| rank_cmp(&results[a], &results[b]));
    let best = best.expect("non-empty grid");
    debug_assert_eq!(best.result.index, ranking[0]);
    Ok(GridReport {
        results,
        ranking,
        best_params: best.params,
    })
}

/// One row of a sparsity ablation.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub count: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub best: TrialResult,
    pub lb_test: Metrics,
}

/// For each count: keep that many random snapshots of `source` (the first
/// one always kept), split 80/10/10 in time, and run a fresh grid search.
/// Every count is checked against `source.len()` before any training.
pub fn ablate_sparsity<T: Scalar>(
    source: &SnapshotSequence<T>,
    laplacian: &Csr<T>,
    counts: &[usize],
    trials: &[TrialConfig],
    seed: u64,
    workers: usize,
    mut on_row: impl FnMut(&AblationRow) -> Result<()>,
) -> Result<Vec<AblationRow>> {
    if let Some(&c) = counts.iter().find(|&&c| c > source.len()) {
        return Err(Error::CountTooLarge {
            requested: c,
            available: source.len(),
        });
    }
    let mut rows = Vec::with_capacity(counts.len());
    for &count in counts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(count as u64);
        let idx = sample_indices(source.len(), count, &mut rng)?;
        let (train, val, test) = temporal_split(&source.select(&idx)?)?;
        let lb_test = lb_baseline(&test)?;
        let (n_train, n_val, n_test) = (train.len(), val.len() - 1, test.len() - 1);
        let data = TaskData::new(laplacian.clone(), train, val, test)?;
        let report = grid_search(trials, &data, workers, |_| Ok(()))?;
        let row = AblationRow {
            count,
            n_train,
            n_val,
            n_test,
            best: report.best().clone(),
            lb_test,
        };
        on_row(&row)?;
        rows.push(row);
    }
    Ok(rows)
}
