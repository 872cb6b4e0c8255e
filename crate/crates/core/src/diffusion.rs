//! Ground-truth heat diffusion: operators, Euler simulation, spiked initial
//! conditions and irregular subsampling into snapshot sequences.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::graph::{build_grid_graph, normalized_laplacian, Graph};
use crate::scalar::Scalar;
use crate::sequence::{Snapshot, SnapshotSequence};
use crate::sparse::{operator_powers, Csr};

/// The seven diffusion laws used to generate heat benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    /// `-L X`
    #[serde(rename = "l")]
    Lap,
    /// `-L^2 X`
    #[serde(rename = "l2")]
    Lap2,
    /// `-L^5 X`
    #[serde(rename = "l5")]
    Lap5,
    /// `-tanh(L) X`, tanh taken entrywise
    #[serde(rename = "tanh_l")]
    TanhLap,
    /// `-5 L X`
    #[serde(rename = "l_x5")]
    LapX5,
    /// `-0.05 L X`
    #[serde(rename = "l_x005")]
    LapX005,
    /// `-(L + N) X` with a frozen standard-normal matrix `N`
    #[serde(rename = "l_noise")]
    LapNoise,
}

impl DiffusionKind {
    pub const ALL: [DiffusionKind; 7] = [
        DiffusionKind::Lap,
        DiffusionKind::Lap2,
        DiffusionKind::Lap5,
        DiffusionKind::TanhLap,
        DiffusionKind::LapX5,
        DiffusionKind::LapX005,
        DiffusionKind::LapNoise,
    ];

    pub fn flag(self) -> &'static str {
        match self {
            DiffusionKind::Lap => "l",
            DiffusionKind::Lap2 => "l2",
            DiffusionKind::Lap5 => "l5",
            DiffusionKind::TanhLap => "tanh_l",
            DiffusionKind::LapX5 => "l_x5",
            DiffusionKind::LapX005 => "l_x005",
            DiffusionKind::LapNoise => "l_noise",
        }
    }

    /// Power of `L` the operator is built from.
    fn power(self) -> usize {
        match self {
            DiffusionKind::Lap2 => 2,
            DiffusionKind::Lap5 => 5,
            _ => 1,
        }
    }

    fn coefficient(self) -> f64 {
        match self {
            DiffusionKind::LapX5 => -5.0,
            DiffusionKind::LapX005 => -0.05,
            _ => -1.0,
        }
    }
}

impl fmt::Display for DiffusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

impl FromStr for DiffusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DiffusionKind::ALL.into_iter().find(|k| k.flag() == s).ok_or_else(|| {
            Error::invalid(
                "diffusion",
                format!("`{s}` is not one of l, l2, l5, tanh_l, l_x5, l_x005, l_noise"),
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub kind: DiffusionKind,
    /// Seeds the frozen noise matrix; ignored by every kind but `LapNoise`.
    pub noise_seed: u64,
}

impl DiffusionSpec {
    pub fn new(kind: DiffusionKind) -> Self {
        Self { kind, noise_seed: 0 }
    }
}

#[derive(Debug, Clone)]
enum OperatorMatrix<T> {
    Sparse(Csr<T>),
    Dense(Dense<T>),
}

/// A concrete right-hand side `F(X) = c · M X`, built once per dataset.
#[derive(Debug, Clone)]
pub struct DiffusionOperator<T> {
    spec: DiffusionSpec,
    coeff: T,
    matrix: OperatorMatrix<T>,
}

impl<T: Scalar> DiffusionOperator<T> {
    /// `powers` must contain `[I, L, ..., L^p]` for the power the kind needs.
    pub fn new(spec: DiffusionSpec, powers: &[Csr<T>]) -> Result<Self> {
        let p = spec.kind.power();
        let base = powers.get(p).ok_or_else(|| {
            Error::invalid(
                "powers",
                format!("{} needs L^{p}, only {} powers given", spec.kind, powers.len()),
            )
        })?;
        let matrix = match spec.kind {
            DiffusionKind::TanhLap => OperatorMatrix::Sparse(base.map_values(|v| v.tanh())),
            DiffusionKind::LapNoise => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
                let n = base.n_rows();
                let noise: Vec<T> = (0..n * n)
                    .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                let noise = Dense::from_vec(n, n, noise)?;
                OperatorMatrix::Dense(base.to_dense().add(&noise)?)
            }
            _ => OperatorMatrix::Sparse(base.clone()),
        };
        Ok(Self {
            spec,
            coeff: T::of(spec.kind.coefficient()),
            matrix,
        })
    }

    pub fn from_laplacian(spec: DiffusionSpec, laplacian: &Csr<T>) -> Result<Self> {
        Self::new(spec, &operator_powers(laplacian, spec.kind.power())?)
    }

    pub fn spec(&self) -> DiffusionSpec {
        self.spec
    }

    /// Evaluates `F(X)`.
    pub fn apply(&self, x: &Dense<T>) -> Result<Dense<T>> {
        let mx = match &self.matrix {
            OperatorMatrix::Sparse(m) => m.spmm(x)?,
            OperatorMatrix::Dense(m) => m.matmul(x)?,
        };
        Ok(mx.scale(self.coeff))
    }
}

/// Solution samples on the simulation lattice `{0, ε, 2ε, ...}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub timestamps: Vec<f64>,
    pub states: Vec<Dense<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn last(&self) -> &Dense<T> {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn to_sequence(&self) -> Result<SnapshotSequence<T>> {
        SnapshotSequence::new(
            self.timestamps
                .iter()
                .zip(&self.states)
                .map(|(&t, x)| Snapshot::new(t, x.clone()))
                .collect(),
        )
    }
}

/// Forward Euler: `X_{s+1} = X_s + ε F(X_s)`, `n_steps + 1` states.
pub fn simulate<T: Scalar>(
    op: &DiffusionOperator<T>,
    x0: &Dense<T>,
    n_steps: usize,
    eps: f64,
) -> Result<Trajectory<T>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("step size must be positive, got {eps}")));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "at least one step is required"));
    }
    let step = T::of(eps);
    let mut timestamps = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    timestamps.push(0.0);
    states.push(x0.clone());
    for s in 1..=n_steps {
        let prev = &states[s - 1];
        let next = prev.add(&op.apply(prev)?.scale(step))?;
        if !next.is_finite() {
            return Err(Error::NumericOverflow {
                context: format!("simulation of {} at step {s}", op.spec().kind),
            });
        }
        timestamps.push(s as f64 * eps);
        states.push(next);
    }
    Ok(Trajectory { timestamps, states })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeMode {
    Single,
    Multi,
}

impl FromStr for SpikeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(SpikeMode::Single),
            "multi" => Ok(SpikeMode::Multi),
            other => Err(Error::invalid("mode", format!("`{other}` is not one of single, multi"))),
        }
    }
}

impl fmt::Display for SpikeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpikeMode::Single => "single",
            SpikeMode::Multi => "multi",
        })
    }
}

pub const BASE_TEMPERATURE: (f64, f64) = (0.0, 0.2);
pub const HOT_SPIKE: (f64, f64) = (10.0, 15.0);
pub const COLD_SPIKE: (f64, f64) = (-15.0, -10.0);
pub const COLD_PROBABILITY: f64 = 0.4;

/// Initial temperatures as an `n x 1` column.
///
/// Every node draws from `[0, 0.2)`. `Single` overwrites one random node
/// with a hot spike; `Multi` overwrites `floor(n/3)` distinct nodes, each
/// cold with probability 0.4 and hot otherwise.
pub fn init_temperatures<T: Scalar, R: Rng>(n: usize, mode: SpikeMode, rng: &mut R) -> Dense<T> {
    let mut x: Vec<f64> = (0..n)
        .map(|_| rng.random_range(BASE_TEMPERATURE.0..BASE_TEMPERATURE.1))
        .collect();
    let n_spikes = match mode {
        SpikeMode::Single => n.min(1),
        SpikeMode::Multi => n / 3,
    };
    for node in index::sample(rng, n, n_spikes).into_vec() {
        let cold = mode == SpikeMode::Multi && rng.random::<f64>() < COLD_PROBABILITY;
        let (lo, hi) = if cold { COLD_SPIKE } else { HOT_SPIKE };
        x[node] = rng.random_range(lo..hi);
    }
    Dense::column(x.into_iter().map(T::of).collect())
}

/// `count` distinct sorted indices from `0..len`, always including 0.
pub fn sample_indices<R: Rng>(len: usize, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if count > len {
        return Err(Error::CountTooLarge {
            requested: count,
            available: len,
        });
    }
    if count == 0 {
        return Err(Error::invalid("count", "must be >= 1"));
    }
    let mut picked: Vec<usize> = index::sample(rng, len - 1, count - 1)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    picked.push(0);
    picked.sort_unstable();
    Ok(picked)
}

/// Keeps `count` random lattice states (index 0 always kept).
pub fn subsample_irregular<T: Scalar, R: Rng>(
    traj: &Trajectory<T>,
    count: usize,
    rng: &mut R,
) -> Result<SnapshotSequence<T>> {
    let idx = sample_indices(traj.len(), count, rng)?;
    SnapshotSequence::new(
        idx.into_iter()
            .map(|i| Snapshot::new(traj.timestamps[i], traj.states[i].clone()))
            .collect(),
    )
}

/// Per-split RNG seeds of a heat dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatSeeds {
    pub train: u64,
    pub val: u64,
    pub test: u64,
    pub noise: u64,
}

impl HeatSeeds {
    /// Derives four distinct seeds from one base seed.
    pub fn from_base(base: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        loop {
            let s = Self {
                train: rng.random(),
                val: rng.random(),
                test: rng.random(),
                noise: rng.random(),
            };
            if s.train != s.val && s.train != s.test && s.val != s.test {
                return s;
            }
        }
    }
}

/// Simulation and sampling sizes for a heat benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatRecipe {
    pub rows: usize,
    pub cols: usize,
    pub mode: SpikeMode,
    pub kind: DiffusionKind,
    pub eps: f64,
    pub train_steps: usize,
    pub train_count: usize,
    pub eval_steps: usize,
    pub eval_count: usize,
}

impl HeatRecipe {
    /// 70-node grid, ε = 1e-3, 100 of 1000 steps for training and 50 of
    /// 500 steps for validation and test.
    pub fn standard(mode: SpikeMode, kind: DiffusionKind) -> Self {
        Self {
            rows: 7,
            cols: 10,
            mode,
            kind,
            eps: 1e-3,
            train_steps: 1000,
            train_count: 100,
            eval_steps: 500,
            eval_count: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeatDataset<T> {
    pub recipe: HeatRecipe,
    pub seeds: HeatSeeds,
    pub graph: Graph,
    pub laplacian: Csr<T>,
    pub train: SnapshotSequence<T>,
    pub val: SnapshotSequence<T>,
    pub test: SnapshotSequence<T>,
}

/// Simulates one split from fresh initial conditions. The split seed drives
/// the initial temperatures and then the timestamp subsample.
pub fn simulate_split<T: Scalar>(
    op: &DiffusionOperator<T>,
    recipe: &HeatRecipe,
    n_nodes: usize,
    steps: usize,
    seed: u64,
) -> Result<(Trajectory<T>, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = init_temperatures(n_nodes, recipe.mode, &mut rng);
    Ok((simulate(op, &x0, steps, recipe.eps)?, rng))
}

pub fn make_heat_dataset<T: Scalar>(recipe: HeatRecipe, seeds: HeatSeeds) -> Result<HeatDataset<T>> {
    if seeds.train == seeds.val || seeds.train == seeds.test || seeds.val == seeds.test {
        return Err(Error::invalid("seeds", "train, val and test seeds must be distinct"));
    }
    let graph = build_grid_graph(recipe.rows, recipe.cols)?;
    let laplacian = normalized_laplacian::<T>(&graph)?;
    let spec = DiffusionSpec {
        kind: recipe.kind,
        noise_seed: seeds.noise,
    };
    let op = DiffusionOperator::from_laplacian(spec, &laplacian)?;
    let n = graph.n_nodes();
    let split = |steps: usize, count: usize, seed: u64| -> Result<SnapshotSequence<T>> {
        let (traj, mut rng) = simulate_split(&op, &recipe, n, steps, seed)?;
        subsample_irregular(&traj, count, &mut rng)
    };
    Ok(HeatDataset {
        recipe,
        seeds,
        train: split(recipe.train_steps, recipe.train_count, seeds.train)?,
        val: split(recipe.eval_steps, recipe.eval_count, seeds.val)?,
        test: split(recipe.eval_steps, recipe.eval_count, seeds.test)?,
        graph,
        laplacian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path2() -> Csr<f64> {
        normalized_laplacian(&build_grid_graph(1, 2).unwrap()).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn flags_round_trip() {
        for k in DiffusionKind::ALL {
            assert_eq!(k.flag().parse::<DiffusionKind>().unwrap(), k);
        }
        assert!("bogus".parse::<DiffusionKind>().is_err());
    }

    #[test]
    fn lap_on_path2() {
        let x = Dense::column(vec![1.0, 0.0]);
        let op = DiffusionOperator::from_laplacian(DiffusionSpec::new(DiffusionKind::Lap), &path2()).unwrap();
        assert_eq!(op.apply(&x).unwrap(), Dense::column(vec![-1.0, 1.0]));
        let op = DiffusionOperator::from_laplacian(DiffusionSpec::new(DiffusionKind::LapX005), &path2()).unwrap();
        assert_eq!(op.apply(&x).unwrap(), Dense::column(vec![-0.05, 0.05]));
    }

    #[test]
    fn lap_kills_constant_on_regular_graph() {
        // 2-node path is 1-regular
        let op = DiffusionOperator::from_laplacian(DiffusionSpec::new(DiffusionKind::Lap), &path2()).unwrap();
        let y = op.apply(&Dense::column(vec![3.0, 3.0])).unwrap();
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn tanh_is_entrywise() {
        let l = path2();
        let op = DiffusionOperator::from_laplacian(DiffusionSpec::new(DiffusionKind::TanhLap), &l).unwrap();
        let y = op.apply(&Dense::column(vec![1.0, 0.0])).unwrap();
        let t = 1f64.tanh();
        assert_eq!(y, Dense::column(vec![-t, t]));
    }

    #[test]
    fn noise_operator_is_frozen_per_seed() {
        let l = path2();
        let spec = DiffusionSpec {
            kind: DiffusionKind::LapNoise,
            noise_seed: 11,
        };
        let a = DiffusionOperator::from_laplacian(spec, &l).unwrap();
        let b = DiffusionOperator::from_laplacian(spec, &l).unwrap();
        let x = Dense::column(vec![1.0, -2.0]);
        assert_eq!(a.apply(&x).unwrap(), b.apply(&x).unwrap());
        assert_eq!(a.apply(&x).unwrap(), a.apply(&x).unwrap());
        let c = DiffusionOperator::from_laplacian(DiffusionSpec { noise_seed: 12, ..spec }, &l).unwrap();
        assert_ne!(a.apply(&x).unwrap(), c.apply(&x).unwrap());
    }

    #[test]
    fn missing_power_is_reported() {
        let powers = operator_powers(&path2(), 1).unwrap();
        assert!(DiffusionOperator::new(DiffusionSpec::new(DiffusionKind::Lap5), &powers).is_err());
    }

    #[test]
    fn one_euler_step_on_path2() {
        let op = DiffusionOperator::from_laplacian(DiffusionSpec::new(DiffusionKind::Lap), &path2()).unwrap();
        let traj = simulate(&op, &Dense::column(vec![1.0, 0.0]), 1, 0.1).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.timestamps, vec![0.0, 0.1]);
        let x1 = traj.last();
        assert!((x1.get(0, 0) - 0.9).abs() < 1e-15);
        assert!((x1.get(1, 0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn unstable_simulation_overflows() {
        // -5·L with a huge step explodes
        let op = DiffusionOperator::from_laplacian(DiffusionSpec::new(DiffusionKind::LapX5), &path2()).unwrap();
        let err = simulate(&op, &Dense::column(vec![1.0, 0.0]), 5000, 10.0).unwrap_err();
        assert!(matches!(err, Error::NumericOverflow { .. }));
        assert!(simulate(&op, &Dense::column(vec![1.0, 0.0]), 0, 0.1).is_err());
        assert!(simulate(&op, &Dense::column(vec![1.0, 0.0]), 1, 0.0).is_err());
    }

    #[test]
    fn single_spike_counts() {
        for seed in 0..20 {
            let x: Dense<f64> = init_temperatures(70, SpikeMode::Single, &mut rng(seed));
            let v = x.as_slice();
            assert_eq!(v.iter().filter(|&&t| (10.0..15.0).contains(&t)).count(), 1);
            assert_eq!(v.iter().filter(|&&t| (0.0..0.2).contains(&t)).count(), 69);
        }
        let x: Dense<f64> = init_temperatures(3, SpikeMode::Single, &mut rng(3));
        let v = x.as_slice();
        assert!(v.iter().all(|&t| (0.0..15.0).contains(&t)));
        assert_eq!(v.iter().filter(|&&t| t >= 10.0).count(), 1);
    }

    #[test]
    fn multi_spike_counts() {
        let mut colds = 0;
        for seed in 0..50 {
            let x: Dense<f64> = init_temperatures(70, SpikeMode::Multi, &mut rng(seed));
            let v = x.as_slice();
            let hot = v.iter().filter(|&&t| (10.0..15.0).contains(&t)).count();
            let cold = v.iter().filter(|&&t| (-15.0..-10.0).contains(&t)).count();
            assert_eq!(hot + cold, 23);
            assert_eq!(v.iter().filter(|&&t| !(0.0..0.2).contains(&t)).count(), 23);
            colds += cold;
        }
        // 50 * 23 draws at p = 0.4: mean 460, sd ~ 16.6
        assert!((380..540).contains(&colds), "cold count {colds}");
    }

    #[test]
    fn subsample_keeps_origin_and_order() {
        let op = DiffusionOperator::from_laplacian(DiffusionSpec::new(DiffusionKind::Lap), &path2()).unwrap();
        let traj = simulate(&op, &Dense::column(vec![1.0, 0.0]), 1000, 1e-3).unwrap();
        let s = subsample_irregular(&traj, 100, &mut rng(5)).unwrap();
        assert_eq!(s.len(), 100);
        assert_eq!(s.get(0).t, 0.0);
        let full = subsample_irregular(&traj, traj.len(), &mut rng(5)).unwrap();
        assert_eq!(full, traj.to_sequence().unwrap());
        assert!(matches!(
            subsample_irregular(&traj, 1002, &mut rng(5)),
            Err(Error::CountTooLarge {
                requested: 1002,
                available: 1001
            })
        ));
    }

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let a = HeatSeeds::from_base(7);
        assert_eq!(a, HeatSeeds::from_base(7));
        assert_ne!(a, HeatSeeds::from_base(8));
        assert!(a.train != a.val && a.val != a.test && a.train != a.test);
    }
}
