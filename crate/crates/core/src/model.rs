//! The temporal graph ODE predictor.
//!
//! Each interval `[t_{i-1}, t_i]` between observed snapshots is an
//! initial-value problem. Its initial state combines the observation at
//! `t_{i-1}` with the previous prediction (ψ), is optionally encoded into a
//! latent space, integrated with forward Euler under the learned k-hop
//! vector field, and optionally read out back to observation space.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Tape, Var};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sequence::SnapshotSequence;
use crate::sparse::Csr;

/// How the observation and the previous prediction form an interval's
/// initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiMode {
    /// `[observed | predicted]`; needs an encoder to absorb the width.
    Concat,
    /// `observed + predicted`
    Sum,
    /// `observed`
    Replace,
}

impl PsiMode {
    pub const ALL: [PsiMode; 3] = [PsiMode::Concat, PsiMode::Sum, PsiMode::Replace];

    pub fn name(self) -> &'static str {
        match self {
            PsiMode::Concat => "concat",
            PsiMode::Sum => "sum",
            PsiMode::Replace => "replace",
        }
    }
}

impl fmt::Display for PsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PsiMode::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid("psi", format!("`{s}` is not one of concat, sum, replace")))
    }
}

/// Which vector field drives the latent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// `Σ_k L^k X θ_k`
    KHop,
    /// `X θ_0`, no node interaction (the NODE baseline).
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Observed feature width `d_x`.
    pub state_dim: usize,
    /// Exogenous input width; 0 when the data carries none.
    pub exo_dim: usize,
    /// `None` means no encoder and no readout.
    pub embedding_dim: Option<usize>,
    pub hops: usize,
    pub eps: f64,
    pub activation: Activation,
    pub psi: PsiMode,
    pub field: FieldKind,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
        if self.state_dim == 0 {
            return bad("state_dim must be >= 1");
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps must be positive and finite");
        }
        if self.embedding_dim == Some(0) {
            return bad("embedding_dim must be >= 1 (use None for no encoder)");
        }
        if self.psi == PsiMode::Concat && self.embedding_dim.is_none() {
            return bad("psi = concat doubles the input width and requires an encoder (embedding_dim)");
        }
        if self.field == FieldKind::Local && self.hops != 0 {
            return bad("the local (NODE) field has no hops; set hops = 0");
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.embedding_dim.unwrap_or(self.state_dim)
    }

    pub fn encoder_input_dim(&self) -> usize {
        match self.psi {
            PsiMode::Concat => 2 * self.state_dim,
            _ => self.state_dim,
        }
    }
}

/// Single-hidden-layer perceptron `act(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub w1: Dense<T>,
    pub b1: Dense<T>,
    pub w2: Dense<T>,
    pub b2: Dense<T>,
}

impl<T: Scalar> Mlp<T> {
    fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Dense::zeros(input, hidden),
            b1: Dense::zeros(1, hidden),
            w2: Dense::zeros(hidden, output),
            b2: Dense::zeros(1, output),
        }
    }

    fn tensors(&self) -> [&Dense<T>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Dense<T>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn check(&self, name: &str, input: usize, hidden: usize, output: usize) -> Result<()> {
        let expect = [(input, hidden), (1, hidden), (hidden, output), (1, output)];
        for (i, (t, e)) in self.tensors().iter().zip(expect).enumerate() {
            if t.shape() != e {
                return Err(Error::shape(
                    "mlp parameters",
                    format!("{name} tensor {i} of {}x{}", e.0, e.1),
                    format!("{}x{}", t.rows(), t.cols()),
                ));
            }
        }
        Ok(())
    }
}

/// All trainable weights plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    config: ModelConfig,
    /// `θ_0..θ_K`, each `(latent + exo) x latent`.
    pub theta: Vec<Dense<T>>,
    pub encoder: Option<Mlp<T>>,
    pub readout: Option<Mlp<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let h = config.latent_dim();
        let theta = (0..=config.hops).map(|_| Dense::zeros(h + config.exo_dim, h)).collect();
        let (encoder, readout) = match config.embedding_dim {
            Some(e) => (
                Some(Mlp::zeros(config.encoder_input_dim(), e, e)),
                Some(Mlp::zeros(e, e, config.state_dim)),
            ),
            None => (None, None),
        };
        Ok(Self {
            config,
            theta,
            encoder,
            readout,
        })
    }

    /// Every entry uniform in `[-1/√fan_in, 1/√fan_in)`, where `fan_in` is
    /// the input width of the layer the tensor belongs to.
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        for t in p.tensors_mut() {
            let fan_in = t.rows();
            fill_uniform(t, fan_in, rng);
        }
        // biases share the fan-in of their weight matrix
        for mlp in [p.encoder.as_mut(), p.readout.as_mut()].into_iter().flatten() {
            let f1 = mlp.w1.rows();
            let f2 = mlp.w2.rows();
            fill_uniform(&mut mlp.b1, f1, rng);
            fill_uniform(&mut mlp.b2, f2, rng);
        }
        Ok(p)
    }

    /// Assembles and shape-checks externally supplied weights.
    pub fn from_parts(
        config: ModelConfig,
        theta: Vec<Dense<T>>,
        encoder: Option<Mlp<T>>,
        readout: Option<Mlp<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.latent_dim();
        if theta.len() != config.hops + 1 {
            return Err(Error::shape(
                "theta",
                format!("{} matrices", config.hops + 1),
                format!("{}", theta.len()),
            ));
        }
        for (k, t) in theta.iter().enumerate() {
            if t.shape() != (h + config.exo_dim, h) {
                return Err(Error::shape(
                    "theta",
                    format!("θ_{k} of {}x{h}", h + config.exo_dim),
                    format!("{}x{}", t.rows(), t.cols()),
                ));
            }
        }
        match (config.embedding_dim, &encoder, &readout) {
            (None, None, None) => {}
            (Some(e), Some(enc), Some(rd)) => {
                enc.check("encoder", config.encoder_input_dim(), e, e)?;
                rd.check("readout", e, e, config.state_dim)?;
            }
            _ => {
                return Err(Error::InvalidModel(
                    "encoder and readout must both be present exactly when embedding_dim is set".into(),
                ))
            }
        }
        Ok(Self {
            config,
            theta,
            encoder,
            readout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Tensors in a fixed order: θ_0..θ_K, then encoder and readout
    /// `(w1, b1, w2, b2)` when present.
    pub fn tensors(&self) -> Vec<&Dense<T>> {
        let mut out: Vec<&Dense<T>> = self.theta.iter().collect();
        for mlp in [&self.encoder, &self.readout].into_iter().flatten() {
            out.extend(mlp.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Dense<T>> {
        let mut out: Vec<&mut Dense<T>> = self.theta.iter_mut().collect();
        for mlp in [&mut self.encoder, &mut self.readout].into_iter().flatten() {
            out.extend(mlp.tensors_mut());
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Records every tensor on `tape`, as trainable leaves or constants.
    pub fn register(&self, tape: &mut Tape<T>, trainable: bool) -> ParamVars {
        let mut put = |d: &Dense<T>| {
            if trainable {
                tape.leaf(d.clone())
            } else {
                tape.constant(d.clone())
            }
        };
        let theta = self.theta.iter().map(&mut put).collect();
        let mut mlp = |m: &Option<Mlp<T>>| {
            m.as_ref().map(|m| MlpVars {
                w1: put(&m.w1),
                b1: put(&m.b1),
                w2: put(&m.w2),
                b2: put(&m.b2),
            })
        };
        let encoder = mlp(&self.encoder);
        let readout = mlp(&self.readout);
        ParamVars {
            theta,
            encoder,
            readout,
        }
    }
}

fn fill_uniform<T: Scalar, R: Rng>(t: &mut Dense<T>, fan_in: usize, rng: &mut R) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in t.as_mut_slice() {
        *v = T::of(rng.random_range(-bound..bound));
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Tape handles of a [`Params`] set.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub theta: Vec<Var>,
    pub encoder: Option<MlpVars>,
    pub readout: Option<MlpVars>,
}

impl ParamVars {
    /// Same order as [`Params::tensors`].
    pub fn all(&self) -> Vec<Var> {
        let mut out = self.theta.clone();
        for m in [&self.encoder, &self.readout].into_iter().flatten() {
            out.extend([m.w1, m.b1, m.w2, m.b2]);
        }
        out
    }
}

fn mlp_forward<T: Scalar>(tape: &mut Tape<T>, m: &MlpVars, act: Activation, x: Var) -> Result<Var> {
    let h = tape.matmul(x, m.w1)?;
    let h = tape.add_row(h, m.b1)?;
    let h = tape.activation(act, h);
    let o = tape.matmul(h, m.w2)?;
    tape.add_row(o, m.b2)
}

/// Pre-activation drift of the latent ODE. Implementations receive the
/// state already widened with any exogenous columns.
pub trait VectorField<T: Scalar> {
    fn drift(&self, tape: &mut Tape<T>, x: Var, theta: &[Var]) -> Result<Var>;
}

/// `Σ_{k=0}^{K} L^k X θ_k`, with `L^k X` formed by repeated application of
/// `L` to the previous hop.
pub struct KHopField<T> {
    pub laplacian: Arc<Csr<T>>,
}

impl<T: Scalar> VectorField<T> for KHopField<T> {
    fn drift(&self, tape: &mut Tape<T>, x: Var, theta: &[Var]) -> Result<Var> {
        tape.hop_poly(&self.laplacian, x, theta)
    }
}

/// `X θ_0`: every node evolves on its own.
pub struct LocalField;

impl<T: Scalar> VectorField<T> for LocalField {
    fn drift(&self, tape: &mut Tape<T>, x: Var, theta: &[Var]) -> Result<Var> {
        if theta.len() != 1 {
            return Err(Error::InvalidModel(format!(
                "local field takes exactly one weight matrix, got {}",
                theta.len()
            )));
        }
        tape.matmul(x, theta[0])
    }
}

/// Field for `config`, sharing `laplacian` when the field needs it.
pub fn field_for<T: Scalar>(config: &ModelConfig, laplacian: &Arc<Csr<T>>) -> Box<dyn VectorField<T>> {
    match config.field {
        FieldKind::KHop => Box::new(KHopField {
            laplacian: Arc::clone(laplacian),
        }),
        FieldKind::Local => Box::new(LocalField),
    }
}

/// Euler schedule for one interval: uniform steps of `eps`, as many as it
/// takes for `n_steps · eps` to reach `dt`. The final step may overshoot
/// by less than `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalPlan {
    pub dt: f64,
    pub n_steps: usize,
    pub eps: f64,
}

impl IntervalPlan {
    pub fn new(dt: f64, eps: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(
                "dt",
                format!("interval length must be positive, got {dt}"),
            ));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid("eps", format!("step size must be positive, got {eps}")));
        }
        let ratio = dt / eps;
        // dt taken as a difference of lattice times lands within a few ulps
        // of an integer multiple of eps; treat that as exact.
        let nearest = ratio.round();
        let n_steps = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest
        } else {
            ratio.ceil()
        };
        Ok(Self {
            dt,
            n_steps: (n_steps as usize).max(1),
            eps,
        })
    }
}

/// Applies `X ← X + ε σ(drift([X | Z]))` `plan.n_steps` times on the tape.
pub fn euler_rollout<T: Scalar>(
    tape: &mut Tape<T>,
    field: &dyn VectorField<T>,
    x0: Var,
    exo: Option<Var>,
    theta: &[Var],
    activation: Activation,
    plan: &IntervalPlan,
) -> Result<Var> {
    let step = T::of(plan.eps);
    let mut x = x0;
    for s in 0..plan.n_steps {
        let input = match exo {
            Some(z) => tape.concat_cols(x, z)?,
            None => x,
        };
        let pre = field.drift(tape, input, theta)?;
        let f = tape.activation(activation, pre);
        let inc = tape.scale(f, step);
        x = tape.add(x, inc)?;
        if !tape.value(x).is_finite() {
            return Err(Error::NumericOverflow {
                context: format!("Euler rollout at step {} of {}", s + 1, plan.n_steps),
            });
        }
    }
    Ok(x)
}

/// ψ(observed, predicted). With no previous prediction (first interval)
/// `predicted` is taken as zeros of the observed shape.
pub fn psi_combine<T: Scalar>(tape: &mut Tape<T>, observed: Var, predicted: Option<Var>, mode: PsiMode) -> Result<Var> {
    if let Some(p) = predicted {
        if p.shape() != observed.shape() {
            return Err(Error::shape(
                "psi",
                format!("{:?}", observed.shape()),
                format!("{:?}", p.shape()),
            ));
        }
    }
    match (mode, predicted) {
        (PsiMode::Replace, _) | (PsiMode::Sum, None) => Ok(observed),
        (PsiMode::Sum, Some(p)) => tape.add(observed, p),
        (PsiMode::Concat, p) => {
            let p = match p {
                Some(p) => p,
                None => {
                    let (r, c) = observed.shape();
                    tape.constant(Dense::zeros(r, c))
                }
            };
            tape.concat_cols(observed, p)
        }
    }
}

/// Predictions `X̂(t_1), ..., X̂(t_T)` on the tape, paired with the
/// constant targets `X̄(t_1), ..., X̄(t_T)`.
///
/// `X̂(t_i)` depends only on snapshots strictly before `t_i`.
pub fn predict_sequence<T: Scalar>(
    tape: &mut Tape<T>,
    seq: &SnapshotSequence<T>,
    params: &Params<T>,
    vars: &ParamVars,
    laplacian: &Arc<Csr<T>>,
) -> Result<Vec<(Var, Var)>> {
    let cfg = params.config();
    if seq.len() < 2 {
        return Err(Error::invalid("sequence", "at least two snapshots are required"));
    }
    if seq.state_dim() != cfg.state_dim || seq.exo_dim() != cfg.exo_dim {
        return Err(Error::shape(
            "predict_sequence",
            format!("state width {} and exo width {}", cfg.state_dim, cfg.exo_dim),
            format!("{} and {}", seq.state_dim(), seq.exo_dim()),
        ));
    }
    if cfg.field == FieldKind::KHop && seq.n_nodes() != laplacian.n_rows() {
        return Err(Error::shape(
            "predict_sequence",
            format!("{} nodes", laplacian.n_rows()),
            format!("{} nodes", seq.n_nodes()),
        ));
    }
    let field = field_for(cfg, laplacian);
    let entries = seq.entries();
    let mut observed = tape.constant(entries[0].x.clone());
    let mut previous: Option<Var> = None;
    let mut out = Vec::with_capacity(entries.len() - 1);
    for i in 1..entries.len() {
        let start = &entries[i - 1];
        let plan = IntervalPlan::new(entries[i].t - start.t, cfg.eps)?;
        let combined = psi_combine(tape, observed, previous, cfg.psi)?;
        let latent = match &vars.encoder {
            Some(enc) => mlp_forward(tape, enc, cfg.activation, combined)?,
            None => combined,
        };
        let exo = start.z.as_ref().map(|z| tape.constant(z.clone()));
        let latent = euler_rollout(tape, field.as_ref(), latent, exo, &vars.theta, cfg.activation, &plan)?;
        let pred = match &vars.readout {
            Some(rd) => mlp_forward(tape, rd, cfg.activation, latent)?,
            None => latent,
        };
        let target = tape.constant(entries[i].x.clone());
        out.push((pred, target));
        observed = target;
        previous = Some(pred);
    }
    Ok(out)
}

/// Mean over snapshots of the per-snapshot mean absolute error.
pub fn sequence_loss<T: Scalar>(
    tape: &mut Tape<T>,
    seq: &SnapshotSequence<T>,
    params: &Params<T>,
    vars: &ParamVars,
    laplacian: &Arc<Csr<T>>,
) -> Result<Var> {
    let pairs = predict_sequence(tape, seq, params, vars, laplacian)?;
    let mut total: Option<Var> = None;
    for &(pred, target) in &pairs {
        let e = tape.mean_abs_error(pred, target)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, e)?,
            None => e,
        });
    }
    let total = total.expect("at least one interval");
    Ok(tape.scale(total, T::one() / T::of(pairs.len() as f64)))
}

/// Predictions as plain matrices (no gradients needed).
pub fn predict<T: Scalar>(
    params: &Params<T>,
    laplacian: &Arc<Csr<T>>,
    seq: &SnapshotSequence<T>,
) -> Result<Vec<Dense<T>>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let pairs = predict_sequence(&mut tape, seq, params, &vars, laplacian)?;
    Ok(pairs.into_iter().map(|(p, _)| tape.value(p).clone()).collect())
}

/// Loss value and its gradient for every tensor of [`Params::tensors`].
pub fn loss_and_gradients<T: Scalar>(
    params: &Params<T>,
    laplacian: &Arc<Csr<T>>,
    seq: &SnapshotSequence<T>,
) -> Result<(T, Vec<Dense<T>>)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, true);
    let loss = sequence_loss(&mut tape, seq, params, &vars, laplacian)?;
    let value = tape.value(loss).get(0, 0);
    if !value.is_finite() {
        return Err(Error::NumericOverflow {
            context: "training loss".into(),
        });
    }
    let grads = tape.backward(loss)?;
    Ok((value, vars.all().into_iter().map(|v| grads.get(v)).collect()))
}

/// Loss value only.
pub fn sequence_mae<T: Scalar>(params: &Params<T>, laplacian: &Arc<Csr<T>>, seq: &SnapshotSequence<T>) -> Result<T> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let loss = sequence_loss(&mut tape, seq, params, &vars, laplacian)?;
    Ok(tape.value(loss).get(0, 0))
}
