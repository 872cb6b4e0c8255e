//! Reference implementations used as oracles by the integration tests.
//! Everything here works on plain nested `Vec<f64>` and shares no code with
//! the library beyond the parameter container.

#![allow(dead_code)]

use rand::Rng;
use tgode_core::model::{FieldKind, Mlp, ModelConfig, PsiMode};
use tgode_core::{Activation, Dense, Graph, Params, Snapshot, SnapshotSequence};

pub type M = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> M {
    vec![vec![0.0; c]; r]
}

pub fn mm(a: &M, b: &M) -> M {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn add(a: &M, b: &M) -> M {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn scale(a: &M, c: f64) -> M {
    a.iter().map(|r| r.iter().map(|v| v * c).collect()).collect()
}

pub fn hcat(a: &M, b: &M) -> M {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().chain(y).copied().collect())
        .collect()
}

pub fn to_m(d: &Dense<f64>) -> M {
    d.to_rows()
}

pub fn from_m(m: &M) -> Dense<f64> {
    Dense::from_rows(m).unwrap()
}

/// `I - D^{-1/2} A D^{-1/2}` built directly from an edge list.
pub fn dense_laplacian(n: usize, edges: &[(usize, usize)]) -> M {
    let mut a = zeros(n, n);
    for &(u, v) in edges {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut l = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            l[i][j] = id - a[i][j] / (deg[i].sqrt() * deg[j].sqrt());
        }
    }
    l
}

/// Random connected graph: a random spanning tree plus extra edges.
pub fn random_connected_graph<R: Rng>(n: usize, extra_p: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if !edges.contains(&(u, v)) && rng.random::<f64>() < extra_p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, &edges).unwrap()
}

pub fn cycle_graph(n: usize) -> Graph {
    let edges: Vec<(usize, usize)> = (0..n)
        .map(|i| (i, (i + 1) % n))
        .map(|(u, v)| (u.min(v), u.max(v)))
        .collect();
    Graph::new(n, &edges).unwrap()
}

pub fn random_dense<R: Rng>(r: usize, c: usize, lo: f64, hi: f64, rng: &mut R) -> Dense<f64> {
    Dense::from_vec(r, c, (0..r * c).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Irregular timestamps starting at 0 with gaps in `[lo, hi)`.
pub fn random_sequence<R: Rng>(
    n_nodes: usize,
    d_x: usize,
    d_z: usize,
    len: usize,
    gap: (f64, f64),
    rng: &mut R,
) -> SnapshotSequence<f64> {
    let mut t = 0.0;
    let mut out = Vec::new();
    for i in 0..len {
        if i > 0 {
            t += rng.random_range(gap.0..gap.1);
        }
        let x = random_dense(n_nodes, d_x, -1.0, 1.0, rng);
        let z = (d_z > 0).then(|| random_dense(n_nodes, d_z, -1.0, 1.0, rng));
        out.push(Snapshot { t, x, z });
    }
    SnapshotSequence::new(out).unwrap()
}

pub fn act(kind: Activation, v: f64) -> f64 {
    match kind {
        Activation::Tanh => v.tanh(),
        Activation::Relu => v.max(0.0),
        Activation::Identity => v,
    }
}

/// Smallest ceil-like step count: exact multiples within 1e-9 (relative)
/// count as exact.
pub fn steps_for(dt: f64, eps: f64) -> usize {
    let r = dt / eps;
    let n = r.round();
    let n = if (r - n).abs() <= 1e-9 * n.max(1.0) {
        n
    } else {
        r.ceil()
    };
    (n as usize).max(1)
}

/// Tracks how close the forward pass came to a non-differentiable point.
#[derive(Debug, Clone, Copy)]
pub struct Kinks {
    pub relu: f64,
    pub abs: f64,
}

fn mlp(m: &Mlp<f64>, a: Activation, x: &M, k: &mut Kinks) -> M {
    let mut h = mm(x, &to_m(&m.w1));
    let b1 = m.b1.row(0);
    for row in &mut h {
        for (v, b) in row.iter_mut().zip(b1) {
            *v += b;
            if a == Activation::Relu {
                k.relu = k.relu.min(v.abs());
            }
            *v = act(a, *v);
        }
    }
    let mut o = mm(&h, &to_m(&m.w2));
    let b2 = m.b2.row(0);
    for row in &mut o {
        for (v, b) in row.iter_mut().zip(b2) {
            *v += b;
        }
    }
    o
}

/// Straightforward TG-ODE forward pass with dense matrices: predictions for
/// snapshots `1..T`, the sequence loss, and kink distances.
pub fn naive_forward(params: &Params<f64>, lap: &M, seq: &SnapshotSequence<f64>) -> (Vec<M>, f64, Kinks) {
    let cfg: &ModelConfig = params.config();
    let theta: Vec<M> = params.theta.iter().map(to_m).collect();
    let mut kinks = Kinks {
        relu: f64::INFINITY,
        abs: f64::INFINITY,
    };
    let e = seq.entries();
    let mut preds = Vec::new();
    let mut prev: Option<M> = None;
    let mut loss = 0.0;
    for i in 1..e.len() {
        let obs = to_m(&e[i - 1].x);
        let combined = match (cfg.psi, &prev) {
            (PsiMode::Replace, _) | (PsiMode::Sum, None) => obs,
            (PsiMode::Sum, Some(p)) => add(&obs, p),
            (PsiMode::Concat, p) => {
                let p = p.clone().unwrap_or_else(|| zeros(obs.len(), obs[0].len()));
                hcat(&obs, &p)
            }
        };
        let mut h = match &params.encoder {
            Some(enc) => mlp(enc, cfg.activation, &combined, &mut kinks),
            None => combined,
        };
        let n = steps_for(e[i].t - e[i - 1].t, cfg.eps);
        let z = e[i - 1].z.as_ref().map(to_m);
        for _ in 0..n {
            let input = match &z {
                Some(z) => hcat(&h, z),
                None => h.clone(),
            };
            let mut drift = zeros(h.len(), h[0].len());
            match cfg.field {
                FieldKind::KHop => {
                    let mut hop = input.clone();
                    for (k, th) in theta.iter().enumerate() {
                        if k > 0 {
                            hop = mm(lap, &hop);
                        }
                        drift = add(&drift, &mm(&hop, th));
                    }
                }
                FieldKind::Local => drift = mm(&input, &theta[0]),
            }
            for row in &mut drift {
                for v in row.iter_mut() {
                    if cfg.activation == Activation::Relu {
                        kinks.relu = kinks.relu.min(v.abs());
                    }
                    *v = act(cfg.activation, *v);
                }
            }
            h = add(&h, &scale(&drift, cfg.eps));
        }
        let pred = match &params.readout {
            Some(rd) => mlp(rd, cfg.activation, &h, &mut kinks),
            None => h,
        };
        let target = to_m(&e[i].x);
        let mut s = 0.0;
        let mut cnt = 0.0;
        for (pr, tr) in pred.iter().zip(&target) {
            for (p, t) in pr.iter().zip(tr) {
                kinks.abs = kinks.abs.min((p - t).abs());
                s += (p - t).abs();
                cnt += 1.0;
            }
        }
        loss += s / cnt;
        preds.push(pred.clone());
        prev = Some(pred);
    }
    let n_int = (e.len() - 1) as f64;
    (preds, loss / n_int, kinks)
}

/// Central differences of the naive loss with respect to every parameter
/// entry, in [`Params::tensors`] order.
pub fn fd_gradients(params: &Params<f64>, lap: &M, seq: &SnapshotSequence<f64>, h: f64) -> Vec<Vec<f64>> {
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::new();
    for (ti, &len) in sizes.iter().enumerate() {
        let mut g = Vec::with_capacity(len);
        for j in 0..len {
            let mut p = params.clone();
            p.tensors_mut()[ti].as_mut_slice()[j] += h;
            let up = naive_forward(&p, lap, seq).1;
            let mut p = params.clone();
            p.tensors_mut()[ti].as_mut_slice()[j] -= h;
            let down = naive_forward(&p, lap, seq).1;
            g.push((up - down) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// `max |a - b| / max(|a|, |b|, floor)` over all entries.
pub fn max_rel_err(a: &[Vec<f64>], b: &[Vec<f64>], floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.iter().zip(y) {
            worst = worst.max((p - q).abs() / p.abs().max(q.abs()).max(floor));
        }
    }
    worst
}

pub fn max_abs_diff(a: &M, b: &M) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// A randomly shaped small model configuration.
pub fn random_config<R: Rng>(rng: &mut R) -> ModelConfig {
    let activation = Activation::ALL[rng.random_range(0..3)];
    let emb = if rng.random_bool(0.5) {
        Some(rng.random_range(1..4))
    } else {
        None
    };
    let psi = match emb {
        Some(_) => PsiMode::ALL[rng.random_range(0..3)],
        None => [PsiMode::Sum, PsiMode::Replace][rng.random_range(0..2)],
    };
    ModelConfig {
        state_dim: rng.random_range(1..3),
        exo_dim: rng.random_range(0..2),
        embedding_dim: emb,
        hops: rng.random_range(0..3),
        eps: [0.1, 0.05, 0.2][rng.random_range(0..3)],
        activation,
        psi,
        field: FieldKind::KHop,
    }
}

/// Proptest strategies shared by the round-trip suites.
pub mod strategies {
    use proptest::prelude::*;
    use tgode_core::model::{FieldKind, ModelConfig};
    use tgode_core::{Activation, Dense, PsiMode, Scalar, Snapshot, SnapshotSequence};

    pub fn finite_f64() -> impl Strategy<Value = f64> + Clone {
        prop_oneof![
            -1e3f64..1e3,
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            Just(0.0),
            Just(-0.0),
            Just(f64::MIN_POSITIVE),
            Just(5e-324),
        ]
    }

    pub fn finite_f32() -> impl Strategy<Value = f32> + Clone {
        any::<f32>().prop_filter("finite", |v| v.is_finite())
    }

    pub fn sequence<T: Scalar + std::fmt::Debug>(
        value: impl Strategy<Value = T> + Clone,
    ) -> impl Strategy<Value = SnapshotSequence<T>> {
        (1usize..5, 1usize..3, 0usize..3, 1usize..5).prop_flat_map(move |(n, d, dz, len)| {
            let m = |cols: usize| {
                prop::collection::vec(value.clone(), n * cols).prop_map(move |v| Dense::from_vec(n, cols, v).unwrap())
            };
            let gaps = prop::collection::vec(1e-6f64..10.0, len);
            let xs = prop::collection::vec(m(d), len);
            let zs = prop::collection::vec(m(dz.max(1)), len);
            (gaps, xs, zs, Just(dz)).prop_map(|(gaps, xs, zs, dz)| {
                let mut t = -1.5;
                let entries = gaps
                    .into_iter()
                    .zip(xs)
                    .zip(zs)
                    .map(|((g, x), z)| {
                        t += g;
                        Snapshot {
                            t,
                            x,
                            z: (dz > 0).then_some(z),
                        }
                    })
                    .collect();
                SnapshotSequence::new(entries).unwrap()
            })
        })
    }

    pub fn bits<T: Scalar>(s: &SnapshotSequence<T>) -> Vec<u64> {
        let mut out = Vec::new();
        for e in s.entries() {
            out.push(e.t.to_bits());
            out.extend(e.x.as_slice().iter().map(|v| v.to_f64_exact().to_bits()));
            if let Some(z) = &e.z {
                out.extend(z.as_slice().iter().map(|v| v.to_f64_exact().to_bits()));
            }
        }
        out
    }

    pub fn model_config() -> impl Strategy<Value = ModelConfig> {
        (
            1usize..3,
            0usize..3,
            prop::option::of(1usize..4),
            0usize..4,
            0usize..3,
            0usize..3,
            any::<bool>(),
        )
            .prop_map(|(state_dim, exo_dim, emb, hops, act, psi, local)| {
                let psi = if emb.is_none() && psi == 0 {
                    PsiMode::Sum
                } else {
                    PsiMode::ALL[psi]
                };
                ModelConfig {
                    state_dim,
                    exo_dim,
                    embedding_dim: emb,
                    hops: if local { 0 } else { hops },
                    eps: [1.0, 0.5, 1e-3][hops % 3],
                    activation: Activation::ALL[act],
                    psi,
                    field: if local { FieldKind::Local } else { FieldKind::KHop },
                }
            })
    }
}
