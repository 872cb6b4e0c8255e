mod common;

use std::sync::Arc;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tgode_core::{normalized_laplacian, Activation, Csr, Dense, Error, Tape, Var};

/// Scalar touching hop_poly, add_row, activation, concat, sum and scale.
/// Returns (root, pre-activation, a, b).
fn build(
    tape: &mut Tape<f64>,
    l: &Arc<Csr<f64>>,
    x: &Dense<f64>,
    a: &Dense<f64>,
    b: &Dense<f64>,
    act: Activation,
) -> (Var, Var, Var, Var) {
    let xv = tape.constant(x.clone());
    let av = tape.leaf(a.clone());
    let bv = tape.leaf(b.clone());
    let h = tape.hop_poly(l, xv, &[av, av]).unwrap();
    let pre = tape.add_row(h, bv).unwrap();
    let h = tape.activation(act, pre);
    let h = tape.concat_cols(h, xv).unwrap();
    let s = tape.sum(h);
    (tape.scale(s, 0.5), pre, av, bv)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn op_gradients_match_central_differences(seed in any::<u64>(), act in 0usize..3) {
        let act = Activation::ALL[act];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(5, 0.4, &mut rng);
        let l = Arc::new(normalized_laplacian::<f64>(&g).unwrap());
        let x = random_dense(5, 2, -1.0, 1.0, &mut rng);
        let a = random_dense(2, 2, -1.0, 1.0, &mut rng);
        let b = random_dense(1, 2, -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let (root, pre, av, bv) = build(&mut tape, &l, &x, &a, &b, act);
        if act == Activation::Relu {
            let closest = tape.value(pre).as_slice().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
            prop_assume!(closest > 1e-4);
        }
        let grads = tape.backward(root).unwrap();
        let value = |a: &Dense<f64>, b: &Dense<f64>| {
            let mut t = Tape::new();
            let (r, _, _, _) = build(&mut t, &l, &x, a, b, act);
            t.value(r).get(0, 0)
        };
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (which, base) in [(0, &a), (1, &b)] {
            let analytic = grads.get(if which == 0 { av } else { bv });
            for j in 0..base.len() {
                let mut up = base.clone();
                up.as_mut_slice()[j] += h;
                let mut down = base.clone();
                down.as_mut_slice()[j] -= h;
                let fd = if which == 0 {
                    (value(&up, &b) - value(&down, &b)) / (2.0 * h)
                } else {
                    (value(&a, &up) - value(&a, &down)) / (2.0 * h)
                };
                let an = analytic.as_slice()[j];
                worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-5));
            }
        }
        prop_assert!(worst <= 1e-4, "relative error {}", worst);
    }

    #[test]
    fn backward_is_linear_in_the_root(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_dense(4, 3, -1.0, 1.0, &mut rng);
        let w = random_dense(3, 2, -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let wv = tape.leaf(w);
        let y = tape.matmul(xv, wv).unwrap();
        let f = tape.activation(Activation::Tanh, y);
        let f = tape.sum(f);
        let g = tape.sum(y);
        let f2 = tape.scale(f, 2.0);
        let g3 = tape.scale(g, -3.0);
        let combo = tape.add(f2, g3).unwrap();
        let gf = tape.backward(f).unwrap().get(wv);
        let gg = tape.backward(g).unwrap().get(wv);
        let gc = tape.backward(combo).unwrap().get(wv);
        let want = gf.scale(2.0).add(&gg.scale(-3.0)).unwrap();
        prop_assert!(gc.sub(&want).unwrap().max_abs() <= 1e-12);
        // replay is bit-identical
        prop_assert_eq!(tape.backward(combo).unwrap().get(wv), gc);
    }
}

#[test]
fn non_scalar_root_rejected() {
    let mut tape = Tape::<f64>::new();
    let v = tape.leaf(Dense::zeros(2, 2));
    assert!(matches!(
        tape.backward(v),
        Err(Error::NonScalarRoot { rows: 2, cols: 2 })
    ));
}

#[test]
fn mean_abs_error_gradient() {
    let mut tape = Tape::<f64>::new();
    let p = tape.leaf(Dense::column(vec![1.0, -2.0, 0.5, 3.0]));
    let t = tape.constant(Dense::column(vec![0.0, 0.0, 1.0, 3.0]));
    let e = tape.mean_abs_error(p, t).unwrap();
    assert_eq!(tape.value(e).get(0, 0), (1.0 + 2.0 + 0.5) / 4.0);
    let g = tape.backward(e).unwrap().get(p);
    assert_eq!(g.as_slice(), &[0.25, -0.25, -0.25, 0.0]);
}
