mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tgode_core::diffusion::{init_temperatures, sample_indices, subsample_irregular};
use tgode_core::{
    build_grid_graph, make_heat_dataset, normalized_laplacian, simulate, Dense, DiffusionKind, DiffusionOperator,
    DiffusionSpec, Error, Graph, HeatRecipe, HeatSeeds, SpikeMode,
};

fn op(g: &Graph, kind: DiffusionKind, seed: u64) -> DiffusionOperator<f64> {
    let l = normalized_laplacian(g).unwrap();
    DiffusionOperator::from_laplacian(DiffusionSpec { kind, noise_seed: seed }, &l).unwrap()
}

#[test]
fn single_step_on_an_edge() {
    let g = Graph::new(2, &[(0, 1)]).unwrap();
    let traj = simulate(&op(&g, DiffusionKind::Lap, 0), &Dense::column(vec![1.0, 0.0]), 1, 0.1).unwrap();
    assert_eq!(traj.timestamps, vec![0.0, 0.1]);
    let x = traj.last();
    assert!((x.get(0, 0) - 0.9).abs() < 1e-15);
    assert!((x.get(1, 0) - 0.1).abs() < 1e-15);
}

#[test]
fn scaled_kinds_scale_the_drift() {
    let g = build_grid_graph(2, 3).unwrap();
    let x = Dense::column(vec![1.0, 0.0, 2.0, 0.5, 0.0, 3.0]);
    let base = op(&g, DiffusionKind::Lap, 0).apply(&x).unwrap();
    let fast = op(&g, DiffusionKind::LapX5, 0).apply(&x).unwrap();
    let slow = op(&g, DiffusionKind::LapX005, 0).apply(&x).unwrap();
    assert!(fast.sub(&base.scale(5.0)).unwrap().max_abs() < 1e-14);
    assert!(slow.sub(&base.scale(0.05)).unwrap().max_abs() < 1e-15);
}

#[test]
fn operators_match_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_connected_graph(8, 0.3, &mut rng);
    let l = dense_laplacian(8, g.edges());
    let l2 = mm(&l, &l);
    let l5 = mm(&mm(&l2, &l2), &l);
    let tanh_l: M = l.iter().map(|r| r.iter().map(|v| v.tanh()).collect()).collect();
    let x = random_dense(8, 2, -1.0, 1.0, &mut rng);
    for (kind, m, c) in [
        (DiffusionKind::Lap, &l, -1.0),
        (DiffusionKind::Lap2, &l2, -1.0),
        (DiffusionKind::Lap5, &l5, -1.0),
        (DiffusionKind::TanhLap, &tanh_l, -1.0),
        (DiffusionKind::LapX5, &l, -5.0),
        (DiffusionKind::LapX005, &l, -0.05),
    ] {
        let want = scale(&mm(m, &to_m(&x)), c);
        let got = to_m(&op(&g, kind, 0).apply(&x).unwrap());
        assert!(max_abs_diff(&got, &want) < 1e-12, "{kind}");
    }
}

#[test]
fn noise_is_frozen_per_seed() {
    let g = build_grid_graph(3, 3).unwrap();
    let x = Dense::column((0..9).map(f64::from).collect());
    let a = op(&g, DiffusionKind::LapNoise, 5);
    assert_eq!(a.apply(&x).unwrap(), a.apply(&x).unwrap());
    assert_eq!(
        a.apply(&x).unwrap(),
        op(&g, DiffusionKind::LapNoise, 5).apply(&x).unwrap()
    );
    assert_ne!(
        a.apply(&x).unwrap(),
        op(&g, DiffusionKind::LapNoise, 6).apply(&x).unwrap()
    );
}

#[test]
fn regular_graph_conserves_total_heat() {
    let g = cycle_graph(12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x0 = random_dense(12, 1, 0.0, 10.0, &mut rng);
    let traj = simulate(&op(&g, DiffusionKind::Lap, 0), &x0, 1000, 1e-3).unwrap();
    let s0 = x0.sum();
    for s in &traj.states {
        assert!((s.sum() - s0).abs() <= 1e-9);
    }
}

#[test]
fn matches_naive_euler() {
    let g = build_grid_graph(3, 4).unwrap();
    let l = dense_laplacian(12, g.edges());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x0 = random_dense(12, 1, 0.0, 1.0, &mut rng);
    let traj = simulate(&op(&g, DiffusionKind::Lap, 0), &x0, 200, 1e-2).unwrap();
    let mut x = to_m(&x0);
    for s in 1..=200 {
        x = add(&x, &scale(&mm(&l, &x), -1e-2));
        assert!(max_abs_diff(&to_m(&traj.states[s]), &x) < 1e-12);
    }
}

#[test]
fn rejects_bad_arguments() {
    let o = op(&build_grid_graph(2, 2).unwrap(), DiffusionKind::Lap, 0);
    let x = Dense::zeros(4, 1);
    assert!(simulate(&o, &x, 0, 0.1).is_err());
    assert!(simulate(&o, &x, 5, 0.0).is_err());
    assert!(simulate(&o, &Dense::zeros(3, 1), 5, 0.1).is_err());
}

#[test]
fn blow_up_is_reported() {
    let o = op(&build_grid_graph(2, 2).unwrap(), DiffusionKind::LapX5, 0);
    let x = Dense::column(vec![1e300, -1e300, 1e300, -1e300]);
    assert!(matches!(simulate(&o, &x, 50, 10.0), Err(Error::NumericOverflow { .. })));
}

#[test]
fn heat_dataset_shapes_and_determinism() {
    let recipe = HeatRecipe::standard(SpikeMode::Single, DiffusionKind::Lap);
    let a = make_heat_dataset::<f64>(recipe, HeatSeeds::from_base(1)).unwrap();
    let b = make_heat_dataset::<f64>(recipe, HeatSeeds::from_base(1)).unwrap();
    assert_eq!((a.train.len(), a.val.len(), a.test.len()), (100, 50, 50));
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
    assert_eq!(a.graph.n_edges(), 123);
    for s in [&a.train, &a.val, &a.test] {
        assert_eq!(s.get(0).t, 0.0);
        assert_eq!(s.n_nodes(), 70);
    }
    assert!(*a.train.times().last().unwrap() <= 1.0 + 1e-12);
    assert!(*a.val.times().last().unwrap() <= 0.5 + 1e-12);
    // val and test start from different initial conditions
    assert_ne!(a.val.get(0).x, a.test.get(0).x);
    let c = make_heat_dataset::<f64>(recipe, HeatSeeds::from_base(2)).unwrap();
    assert_ne!(a.train, c.train);
}

#[test]
fn equal_split_seeds_rejected() {
    let recipe = HeatRecipe::standard(SpikeMode::Single, DiffusionKind::Lap);
    let seeds = HeatSeeds {
        train: 1,
        val: 1,
        test: 2,
        noise: 0,
    };
    assert!(make_heat_dataset::<f64>(recipe, seeds).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spikes(seed in any::<u64>(), n in 3usize..90) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = init_temperatures::<f64, _>(n, SpikeMode::Single, &mut rng);
        let hot: Vec<f64> = x.as_slice().iter().copied().filter(|v| v.abs() >= 10.0).collect();
        prop_assert_eq!(hot.len(), 1);
        prop_assert!((10.0..15.0).contains(&hot[0]));
        prop_assert!(x.as_slice().iter().filter(|v| v.abs() < 10.0).all(|v| (0.0..0.2).contains(v)));

        let x = init_temperatures::<f64, _>(n, SpikeMode::Multi, &mut rng);
        let spikes: Vec<f64> = x.as_slice().iter().copied().filter(|v| v.abs() >= 10.0).collect();
        prop_assert_eq!(spikes.len(), n / 3);
        prop_assert!(spikes.iter().all(|v| (10.0..15.0).contains(v) || (-15.0..-10.0).contains(v)));
    }

    #[test]
    fn subsampling(seed in any::<u64>(), len in 1usize..300, frac in 0.0f64..1.0) {
        let count = ((len as f64 * frac) as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = sample_indices(len, count, &mut rng).unwrap();
        prop_assert_eq!(idx.len(), count);
        prop_assert_eq!(idx[0], 0);
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*idx.last().unwrap() < len);
        let too_many = matches!(sample_indices(len, len + 1, &mut rng), Err(Error::CountTooLarge { requested, available })
            if requested == len + 1 && available == len);
        prop_assert!(too_many);
    }

    #[test]
    fn subsampled_times_lie_on_the_lattice(seed in any::<u64>(), count in 1usize..40) {
        let g = build_grid_graph(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = init_temperatures::<f64, _>(6, SpikeMode::Single, &mut rng);
        let traj = simulate(&op(&g, DiffusionKind::Lap, 0), &x0, 50, 0.02).unwrap();
        let seq = subsample_irregular(&traj, count, &mut rng).unwrap();
        prop_assert_eq!(seq.len(), count);
        for s in seq.entries() {
            let k = (s.t / 0.02).round() as usize;
            prop_assert_eq!(s.t, traj.timestamps[k]);
            prop_assert_eq!(&s.x, &traj.states[k]);
        }
    }
}
