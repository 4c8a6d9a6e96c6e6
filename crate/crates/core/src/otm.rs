//! Min-max learning of an optimal transport map.
//!
//! A potential `ψ: R^D → R` and a map `G: R^H → R^D` play the saddle-point
//! game
//!
//! ```text
//! inf_ψ sup_G  E_μ[⟨Q(x), G(x)⟩ − ψ(G(x))] + E_ν[ψ(y)]
//! ```
//!
//! by alternating stochastic gradient steps: `K_ψ` descent steps on
//! `L_ψ = mean_Y ψ − mean_X ψ(G(x))` (plus an optional regularizer), then
//! `K_G` descent steps on `L_G = mean_X [ψ(G(x)) − ⟨Q(x), G(x)⟩]`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId};
use crate::data::{PointCloud, Sampler};
use crate::error::{Error, Result};
use crate::nets::{BoundNetwork, Mlp, Network};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingKind {
    Identity,
    ZeroPad,
    /// Treats the `H` coordinates as samples of a 1-d signal on `[0, 1]` and
    /// resamples it at `D` points by linear interpolation.
    LinearInterpUpsample,
    ExplicitMatrix,
}

/// A linear embedding `Q: R^H → R^D`, applied pointwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    kind: EmbeddingKind,
    input_dim: usize,
    output_dim: usize,
    /// `D x H`.
    matrix: DMatrix<f64>,
}

impl Embedding {
    pub fn identity(dim: usize) -> Self {
        Self { kind: EmbeddingKind::Identity, input_dim: dim, output_dim: dim, matrix: DMatrix::identity(dim, dim) }
    }

    pub fn zero_pad(input_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || input_dim > output_dim {
            return Err(Error::InvalidSpec(format!("zero_pad needs 0 < H <= D, got {input_dim} -> {output_dim}")));
        }
        let matrix = DMatrix::from_fn(output_dim, input_dim, |i, j| if i == j { 1.0 } else { 0.0 });
        Ok(Self { kind: EmbeddingKind::ZeroPad, input_dim, output_dim, matrix })
    }

    pub fn linear_interp_upsample(input_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || input_dim > output_dim {
            return Err(Error::InvalidSpec(format!(
                "linear_interp_upsample needs 0 < H <= D, got {input_dim} -> {output_dim}"
            )));
        }
        let mut matrix = DMatrix::zeros(output_dim, input_dim);
        for k in 0..output_dim {
            if input_dim == 1 {
                matrix[(k, 0)] = 1.0;
                continue;
            }
            let t = if output_dim == 1 { 0.0 } else { k as f64 * (input_dim - 1) as f64 / (output_dim - 1) as f64 };
            let lo = (t.floor() as usize).min(input_dim - 2);
            let frac = t - lo as f64;
            matrix[(k, lo)] += 1.0 - frac;
            matrix[(k, lo + 1)] += frac;
        }
        Ok(Self { kind: EmbeddingKind::LinearInterpUpsample, input_dim, output_dim, matrix })
    }

    /// `matrix` is `D x H`.
    pub fn explicit(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.is_empty() || matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("embedding matrix must be non-empty and finite".into()));
        }
        Ok(Self { kind: EmbeddingKind::ExplicitMatrix, input_dim: matrix.ncols(), output_dim: matrix.nrows(), matrix })
    }

    pub fn kind(&self) -> &EmbeddingKind {
        &self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// `D x H` matrix of the embedding.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn embed(&self, batch: &PointCloud) -> Result<PointCloud> {
        if batch.dim() != self.input_dim {
            return Err(Error::Dimension { expected: self.input_dim, got: batch.dim() });
        }
        if self.kind == EmbeddingKind::Identity {
            return Ok(batch.clone());
        }
        batch.map_points(self.output_dim, |x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..self.input_dim).map(|j| self.matrix[(i, j)] * x[j]).sum();
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularizer {
    None,
    /// Mean of `(‖∇ψ(ŷ)‖ − 1)²` at random interpolates of real and generated points.
    GradientPenalty,
    /// `‖mean_x ∇ψ(G(x))‖`.
    GradientOptimality,
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::None => "none",
            Regularizer::GradientPenalty => "gradient_penalty",
            Regularizer::GradientOptimality => "gradient_optimality",
        })
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Regularizer::None),
            "gradient_penalty" => Ok(Regularizer::GradientPenalty),
            "gradient_optimality" => Ok(Regularizer::GradientOptimality),
            other => Err(Error::InvalidSpec(format!("unknown regularizer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Outer iterations of the alternating scheme.
    pub iterations: usize,
    pub k_g: usize,
    pub k_psi: usize,
    pub lr_g: f64,
    pub lr_psi: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub regularizer: Regularizer,
    pub lambda: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Toy settings: batch 400, `K_ψ = 1`, `K_G = 16`, gradient penalty with
    /// `λ = 0.1`, Adam with `lr = 1e-3` and betas `(0.5, 0.99)`.
    pub fn toy(iterations: usize, seed: u64) -> Self {
        Self {
            batch_size: 400,
            iterations,
            k_g: 16,
            k_psi: 1,
            lr_g: 1e-3,
            lr_psi: 1e-3,
            beta1: 0.5,
            beta2: 0.99,
            regularizer: Regularizer::GradientPenalty,
            lambda: 0.1,
            seed,
        }
    }

    /// Outer iterations for `epochs` passes over `dataset_size` points, one
    /// outer iteration per potential batch.
    pub fn iterations_for_epochs(&self, epochs: usize, dataset_size: usize) -> usize {
        epochs * dataset_size.div_ceil(self.batch_size.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.k_g == 0 || self.k_psi == 0 {
            return bad("K_G and K_psi must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a nonnegative number");
        }
        if self.regularizer == Regularizer::None && self.lambda != 0.0 {
            return bad("lambda must be 0 when no regularizer is selected");
        }
        self.adam(self.lr_g).validate()?;
        self.adam(self.lr_psi).validate()
    }

    fn adam(&self, learning_rate: f64) -> AdamConfig {
        AdamConfig { learning_rate, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }
}

/// Losses of one outer iteration, taken from its last inner step of each kind.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub psi_loss: f64,
    pub g_loss: f64,
    pub regularizer: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

fn non_empty(batch: &PointCloud) -> Result<()> {
    if batch.is_empty() {
        Err(Error::EmptyBatch)
    } else {
        Ok(())
    }
}

fn leaf(graph: &mut Graph, batch: &PointCloud) -> Result<NodeId> {
    graph.leaf(batch.as_tensor().clone())
}

/// `mean_Y ψ(y) − mean ψ(fake)` on graph nodes.
pub fn psi_loss_nodes<B: BoundNetwork>(graph: &mut Graph, psi: &B, fake: NodeId, real: NodeId) -> Result<NodeId> {
    let on_real = psi.forward(graph, real)?;
    let on_fake = psi.forward(graph, fake)?;
    let real_mean = graph.mean(on_real)?;
    let fake_mean = graph.mean(on_fake)?;
    graph.sub(real_mean, fake_mean)
}

/// `mean [ψ(G(x)) − ⟨Q(x), G(x)⟩]` on graph nodes.
pub fn g_loss_nodes<B: BoundNetwork>(graph: &mut Graph, psi: &B, embedded: NodeId, mapped: NodeId) -> Result<NodeId> {
    let potential = psi.forward(graph, mapped)?;
    let potential_mean = graph.mean(potential)?;
    let inner = graph.row_dot(embedded, mapped)?;
    let inner_mean = graph.mean(inner)?;
    graph.sub(potential_mean, inner_mean)
}

/// `mean_i (‖∇ψ(ŷ_i)‖ − 1)²` with `ŷ_i = t_i real_i + (1 − t_i) fake_i`.
/// `interpolates` must be a leaf holding the `ŷ_i`.
pub fn gradient_penalty_nodes<B: BoundNetwork>(graph: &mut Graph, psi: &B, interpolates: NodeId) -> Result<NodeId> {
    let grad = psi.input_gradient(graph, interpolates)?;
    let norms = graph.row_norms(grad)?;
    let shifted = graph.scale_shift(norms, 1.0, -1.0)?;
    let sq = graph.square(shifted)?;
    graph.mean(sq)
}

/// `‖mean_i ∇ψ(points_i)‖`. `points` must be a leaf.
pub fn gradient_optimality_nodes<B: BoundNetwork>(graph: &mut Graph, psi: &B, points: NodeId) -> Result<NodeId> {
    let grad = psi.input_gradient(graph, points)?;
    let n = graph.value(grad).rows();
    let total = graph.sum_rows(grad)?;
    let mean = graph.scale(total, 1.0 / n as f64)?;
    graph.norm(mean)
}

/// Draws one interpolation weight per pair and mixes `real` with `fake`.
pub fn interpolate(fake: &PointCloud, real: &PointCloud, rng: &mut impl Rng) -> Result<PointCloud> {
    if fake.len() != real.len() {
        return Err(Error::InvalidSpec(format!("{} fake vs {} real points", fake.len(), real.len())));
    }
    check_dims(real.dim(), fake.dim())?;
    let d = real.dim();
    let mut data = Vec::with_capacity(real.len() * d);
    for (f, r) in fake.iter().zip(real.iter()) {
        let t: f64 = rng.random();
        data.extend(f.iter().zip(r).map(|(a, b)| t * b + (1.0 - t) * a));
    }
    PointCloud::new(d, data)
}

/// Loss node together with the graph it lives in and the potential's leaves.
pub struct LossGraph<B> {
    pub graph: Graph,
    pub loss: NodeId,
    pub bound: B,
}

/// `L_ψ` with `G` held fixed: no gradient reaches `G`'s parameters.
pub fn psi_loss<P: Network, N: Network>(psi: &P, g: &N, x: &PointCloud, y: &PointCloud) -> Result<LossGraph<P::Bound>> {
    check_dims(g.input_dim(), x.dim())?;
    check_dims(psi.input_dim(), y.dim())?;
    check_dims(psi.input_dim(), g.output_dim())?;
    non_empty(x)?;
    non_empty(y)?;
    let fake = crate::nets::apply(g, x)?;
    let mut graph = Graph::new();
    let bound = psi.bind(&mut graph)?;
    let fake = leaf(&mut graph, &fake)?;
    let real = leaf(&mut graph, y)?;
    let loss = psi_loss_nodes(&mut graph, &bound, fake, real)?;
    Ok(LossGraph { graph, loss, bound })
}

/// `L_G` with `ψ` held fixed; the bound parameters returned are `G`'s.
pub fn g_loss<P: Network, N: Network>(psi: &P, g: &N, q: &Embedding, x: &PointCloud) -> Result<LossGraph<N::Bound>> {
    check_dims(q.input_dim(), x.dim())?;
    check_dims(g.input_dim(), x.dim())?;
    check_dims(q.output_dim(), g.output_dim())?;
    check_dims(psi.input_dim(), g.output_dim())?;
    non_empty(x)?;
    let embedded = q.embed(x)?;
    let mut graph = Graph::new();
    let g_bound = g.bind(&mut graph)?;
    let psi_bound = psi.bind(&mut graph)?;
    let x_node = leaf(&mut graph, x)?;
    let q_node = leaf(&mut graph, &embedded)?;
    let mapped = g_bound.forward(&mut graph, x_node)?;
    let loss = g_loss_nodes(&mut graph, &psi_bound, q_node, mapped)?;
    Ok(LossGraph { graph, loss, bound: g_bound })
}

/// Gradient penalty of `ψ` between generated and real points.
pub fn gradient_penalty<P: Network>(
    psi: &P,
    fake: &PointCloud,
    real: &PointCloud,
    rng: &mut impl Rng,
) -> Result<LossGraph<P::Bound>> {
    check_dims(psi.input_dim(), real.dim())?;
    non_empty(real)?;
    let mixed = interpolate(fake, real, rng)?;
    let mut graph = Graph::new();
    let bound = psi.bind(&mut graph)?;
    let points = leaf(&mut graph, &mixed)?;
    let loss = gradient_penalty_nodes(&mut graph, &bound, points)?;
    Ok(LossGraph { graph, loss, bound })
}

/// Gradient-optimality regularizer `‖mean_x ∇ψ(G(x))‖`.
pub fn gradient_optimality<P: Network, N: Network>(psi: &P, g: &N, x: &PointCloud) -> Result<LossGraph<P::Bound>> {
    check_dims(g.input_dim(), x.dim())?;
    check_dims(psi.input_dim(), g.output_dim())?;
    non_empty(x)?;
    let fake = crate::nets::apply(g, x)?;
    let mut graph = Graph::new();
    let bound = psi.bind(&mut graph)?;
    let points = leaf(&mut graph, &fake)?;
    let loss = gradient_optimality_nodes(&mut graph, &bound, points)?;
    Ok(LossGraph { graph, loss, bound })
}

/// Sequential access to a sampler: each draw takes the next fresh window.
#[derive(Clone, Debug)]
pub struct Stream<'a> {
    sampler: &'a Sampler,
    position: u64,
}

impl<'a> Stream<'a> {
    pub fn new(sampler: &'a Sampler, position: u64) -> Self {
        Self { sampler, position }
    }

    pub fn next_batch(&mut self, n: usize) -> PointCloud {
        let batch = self.sampler.sample(n, self.position);
        self.position += n as u64;
        batch
    }

    pub fn position(&self) -> u64 {
        self.position
    }
}

/// Outcome of one ψ step.
struct PsiStep {
    loss: f64,
    regularizer: f64,
}

#[allow(clippy::too_many_arguments)]
fn psi_step(
    config: &TrainConfig,
    psi: &mut Mlp,
    g: &Mlp,
    state: &mut AdamState,
    x: &PointCloud,
    y: &PointCloud,
    rng: &mut ChaCha8Rng,
) -> Result<PsiStep> {
    let fake = g.apply(x)?;
    let mut graph = Graph::new();
    let bound = psi.bind(&mut graph)?;
    let fake_node = leaf(&mut graph, &fake)?;
    let real_node = leaf(&mut graph, y)?;
    let mut loss = psi_loss_nodes(&mut graph, &bound, fake_node, real_node)?;
    let mut reg_value = 0.0;
    let reg = match config.regularizer {
        Regularizer::None => None,
        Regularizer::GradientPenalty => {
            let mixed = interpolate(&fake, y, rng)?;
            let mixed = leaf(&mut graph, &mixed)?;
            Some(gradient_penalty_nodes(&mut graph, &bound, mixed)?)
        }
        Regularizer::GradientOptimality => Some(gradient_optimality_nodes(&mut graph, &bound, fake_node)?),
    };
    let plain = graph.value(loss).item();
    if let Some(reg) = reg {
        reg_value = graph.value(reg).item();
        let weighted = graph.scale(reg, config.lambda)?;
        loss = graph.add(loss, weighted)?;
    }
    let grads = graph.gradient(loss, bound.params())?;
    state.step(&mut psi.parameters_mut(), &grads)?;
    Ok(PsiStep { loss: plain, regularizer: reg_value })
}

fn g_step<P: Network>(psi: &P, g: &mut Mlp, q: &Embedding, state: &mut AdamState, x: &PointCloud) -> Result<f64> {
    let LossGraph { mut graph, loss, bound } = g_loss(psi, &*g, q, x)?;
    let value = graph.value(loss).item();
    let grads = graph.gradient(loss, bound.params())?;
    state.step(&mut g.parameters_mut(), &grads)?;
    Ok(value)
}

/// Result of a completed training run.
#[derive(Clone, Debug)]
pub struct Trained {
    pub g: Mlp,
    pub psi: Mlp,
    pub history: TrainHistory,
}

/// A run that stopped early; networks are the last parameters that produced
/// finite losses.
#[derive(Clone, Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub g: Mlp,
    pub psi: Mlp,
    pub history: TrainHistory,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} completed iterations)", self.error, self.history.len())
    }
}

impl std::error::Error for TrainFailure {}

/// Invoked after each outer iteration with the iteration index and current networks.
pub trait Observer {
    fn after_iteration(&mut self, iteration: usize, g: &Mlp, psi: &Mlp);
}

impl<F: FnMut(usize, &Mlp, &Mlp)> Observer for F {
    fn after_iteration(&mut self, iteration: usize, g: &Mlp, psi: &Mlp) {
        self(iteration, g, psi)
    }
}

fn validate_setup(config: &TrainConfig, mu: &Sampler, nu: &Sampler, q: &Embedding, g: &Mlp, psi: &Mlp) -> Result<()> {
    config.validate()?;
    check_dims(q.input_dim(), mu.dim())?;
    check_dims(g.input_dim(), mu.dim())?;
    check_dims(q.output_dim(), g.output_dim())?;
    check_dims(nu.dim(), g.output_dim())?;
    check_dims(psi.input_dim(), nu.dim())?;
    check_dims(1, psi.output_dim())
}

/// Runs the alternating scheme for `config.iterations` outer iterations.
pub fn train(
    config: &TrainConfig,
    mu: &Sampler,
    nu: &Sampler,
    q: &Embedding,
    g: Mlp,
    psi: Mlp,
) -> Result<Trained, Box<TrainFailure>> {
    train_observed(config, mu, nu, q, g, psi, &mut |_: usize, _: &Mlp, _: &Mlp| {})
}

/// [`train`] with a callback after every outer iteration.
pub fn train_observed(
    config: &TrainConfig,
    mu: &Sampler,
    nu: &Sampler,
    q: &Embedding,
    mut g: Mlp,
    mut psi: Mlp,
    observer: &mut dyn Observer,
) -> Result<Trained, Box<TrainFailure>> {
    let mut history = TrainHistory::default();
    if let Err(error) = validate_setup(config, mu, nu, q, &g, &psi) {
        return Err(Box::new(TrainFailure { error, g, psi, history }));
    }
    let mut g_state = AdamState::new(config.adam(config.lr_g), g.parameters()).expect("validated");
    let mut psi_state = AdamState::new(config.adam(config.lr_psi), psi.parameters()).expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mu_stream = Stream::new(mu, 0);
    let mut nu_stream = Stream::new(nu, 0);
    let start = Instant::now();

    for iteration in 0..config.iterations {
        let (g_good, psi_good) = (g.clone(), psi.clone());
        let outcome = (|| -> Result<IterationRecord> {
            let mut last_psi = PsiStep { loss: 0.0, regularizer: 0.0 };
            for _ in 0..config.k_psi {
                let x = mu_stream.next_batch(config.batch_size);
                let y = nu_stream.next_batch(config.batch_size);
                last_psi = psi_step(config, &mut psi, &g, &mut psi_state, &x, &y, &mut rng)?;
            }
            let mut last_g = 0.0;
            for _ in 0..config.k_g {
                let x = mu_stream.next_batch(config.batch_size);
                last_g = g_step(&psi, &mut g, q, &mut g_state, &x)?;
            }
            let finite = last_psi.loss.is_finite() && last_psi.regularizer.is_finite() && last_g.is_finite();
            if !finite {
                return Err(Error::Diverged { iteration, reason: "non-finite loss".into() });
            }
            Ok(IterationRecord {
                iteration,
                psi_loss: last_psi.loss,
                g_loss: last_g,
                regularizer: last_psi.regularizer,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        })();
        match outcome {
            Ok(record) => history.records.push(record),
            Err(err) => {
                let error = match err {
                    e @ Error::Diverged { .. } => e,
                    other => Error::Diverged { iteration, reason: other.to_string() },
                };
                return Err(Box::new(TrainFailure { error, g: g_good, psi: psi_good, history }));
            }
        }
        observer.after_iteration(iteration, &g, &psi);
    }
    Ok(Trained { g, psi, history })
}

/// Runs only the map updates against a fixed potential, `steps` times.
/// Returns the `L_G` value of every step.
pub fn fit_map<P: Network>(
    config: &TrainConfig,
    mu: &Sampler,
    q: &Embedding,
    g: &mut Mlp,
    psi: &P,
    steps: usize,
) -> Result<Vec<f64>> {
    config.validate()?;
    check_dims(q.input_dim(), mu.dim())?;
    check_dims(psi.input_dim(), g.output_dim())?;
    let mut state = AdamState::new(config.adam(config.lr_g), g.parameters())?;
    let mut stream = Stream::new(mu, 0);
    (0..steps)
        .map(|_| {
            let x = stream.next_batch(config.batch_size);
            g_step(psi, g, q, &mut state, &x)
        })
        .collect()
}

/// Empirical saddle objective `mean_X[⟨Q(x), G(x)⟩ − ψ(G(x))] + mean_Y ψ(y)`.
pub fn objective<P: Network, N: Network>(psi: &P, g: &N, q: &Embedding, x: &PointCloud, y: &PointCloud) -> Result<f64> {
    let mapped = crate::nets::apply(g, x)?;
    let embedded = q.embed(x)?;
    let on_mapped = crate::nets::apply(psi, &mapped)?;
    let on_real = crate::nets::apply(psi, y)?;
    let n = x.len() as f64;
    let first = embedded
        .iter()
        .zip(mapped.iter())
        .zip(on_mapped.iter())
        .map(|((e, m), p)| e.iter().zip(m).map(|(a, b)| a * b).sum::<f64>() - p[0])
        .sum::<f64>()
        / n;
    let second = on_real.iter().map(|p| p[0]).sum::<f64>() / y.len() as f64;
    Ok(first + second)
}

/// Convenience for flat parameter snapshots.
pub fn flatten(params: &[&Tensor]) -> Vec<f64> {
    params.iter().flat_map(|p| p.data().iter().copied()).collect()
}
