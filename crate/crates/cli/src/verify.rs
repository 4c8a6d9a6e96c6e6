//! `verify`: oracle and gradient self-checks with a pass/fail table.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use otm_core::autodiff::{Graph, NodeId};
use otm_core::metrics;
use otm_core::nets::{self, Activation, BoundNetwork, Layer, Mlp, MlpSpec, Network};
use otm_core::optim::{AdamConfig, AdamState};
use otm_core::oracle::{self, AffineMap, Gaussian, QuadraticPotential};
use otm_core::otm::{self, Embedding};
use otm_core::{PointCloud, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gradcheck::{self, Built};

pub const FD_TOLERANCE: f64 = 1e-5;
pub const SYMBOLIC_TOLERANCE: f64 = 1e-6;
pub const IDENTITY_TOLERANCE: f64 = 1e-12;
pub const FD_POINTS: usize = 10;
pub const BOUND_CASES: usize = 50;
pub const BOUND_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub detail: String,
    pub passed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    fn push(&mut self, name: impl Into<String>, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), detail, passed });
    }

    fn record(&mut self, name: &str, outcome: Result<(bool, String)>) {
        match outcome {
            Ok((passed, detail)) => self.push(name, passed, detail),
            Err(e) => self.push(name, false, format!("error: {e}")),
        }
    }

    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{status}  {:<width$}  {}", c.name, c.detail);
        }
        let _ = writeln!(out, "{} checks, {} failed", self.checks.len(), self.failed());
        out
    }
}

type Primitive = fn(&mut Graph, &[NodeId]) -> Result<NodeId>;

/// Exported primitives with argument shapes. Non-scalar results are reduced
/// against a fixed random weighting so every output entry is exercised.
fn primitives() -> Vec<(&'static str, Vec<Vec<usize>>, Primitive)> {
    vec![
        ("add", vec![vec![3, 4], vec![3, 4]], |g, x| g.add(x[0], x[1])),
        ("sub", vec![vec![3, 4], vec![3, 4]], |g, x| g.sub(x[0], x[1])),
        ("mul", vec![vec![3, 4], vec![3, 4]], |g, x| g.mul(x[0], x[1])),
        ("scale_shift", vec![vec![3, 4]], |g, x| g.scale_shift(x[0], -1.7, 0.3)),
        ("matmul", vec![vec![3, 4], vec![4, 2]], |g, x| g.matmul(x[0], x[1])),
        ("transpose", vec![vec![3, 4]], |g, x| g.transpose(x[0])),
        ("add_bias", vec![vec![3, 4], vec![4]], |g, x| g.add_bias(x[0], x[1])),
        ("affine", vec![vec![3, 4], vec![4, 2], vec![2]], |g, x| g.affine(x[0], x[1], x[2])),
        ("sum_rows", vec![vec![3, 4]], |g, x| g.sum_rows(x[0])),
        ("sum_cols", vec![vec![3, 4]], |g, x| g.sum_cols(x[0])),
        ("broadcast_rows", vec![vec![4]], |g, x| g.broadcast_rows(x[0], 3)),
        ("leaky_relu", vec![vec![3, 4]], |g, x| g.leaky_relu(x[0], 0.01)),
        ("tanh", vec![vec![3, 4]], |g, x| g.tanh(x[0])),
        ("square", vec![vec![3, 4]], |g, x| g.square(x[0])),
        ("sum", vec![vec![3, 4]], |g, x| g.sum(x[0])),
        ("mean", vec![vec![3, 4]], |g, x| g.mean(x[0])),
        ("dot", vec![vec![5], vec![5]], |g, x| g.dot(x[0], x[1])),
        ("row_dot", vec![vec![3, 4], vec![3, 4]], |g, x| g.row_dot(x[0], x[1])),
        ("norm_squared", vec![vec![3, 4]], |g, x| g.norm_squared(x[0])),
        ("norm", vec![vec![5]], |g, x| g.norm(x[0])),
        ("row_norms", vec![vec![3, 4]], |g, x| g.row_norms(x[0])),
    ]
}

/// Reduces a node to a scalar by an inner product with a seeded weighting.
fn weighted_sum(graph: &mut Graph, node: NodeId) -> Result<NodeId> {
    if graph.value(node).shape().is_empty() {
        return Ok(node);
    }
    let shape = graph.value(node).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0xFEED);
    let weights = graph.leaf(gradcheck::random_tensor(&shape, &mut rng))?;
    graph.dot(node, weights)
}

fn away_from_kinks(t: &mut Tensor) {
    for v in t.data_mut() {
        if v.abs() < 1e-3 {
            *v += 0.1_f64.copysign(*v);
        }
    }
}

fn primitive_checks(report: &mut Report, rng: &mut ChaCha8Rng) {
    for (name, shapes, op) in primitives() {
        let outcome = (|| {
            let mut worst: f64 = 0.0;
            for _ in 0..FD_POINTS {
                let mut inputs: Vec<Tensor> = shapes.iter().map(|s| gradcheck::random_tensor(s, rng)).collect();
                if name == "leaky_relu" {
                    inputs.iter_mut().for_each(away_from_kinks);
                }
                let err = gradcheck::coordinate_error(&inputs, |t| {
                    let mut g = Graph::new();
                    let leaves = t.iter().map(|v| g.leaf(v.clone())).collect::<Result<Vec<_>>>()?;
                    let out = op(&mut g, &leaves)?;
                    let out = weighted_sum(&mut g, out)?;
                    Ok((g, out, leaves))
                })?;
                worst = worst.max(err);
            }
            Ok((worst < FD_TOLERANCE, format!("max rel err {worst:.2e} over {FD_POINTS} points")))
        })();
        report.record(&format!("fd/{name}"), outcome);
    }
}

fn random_batch(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    PointCloud::from_tensor(gradcheck::random_tensor(&[n, dim], rng)).expect("rank-2 tensor")
}

/// A random network and batch whose pre-activations stay clear of kinks.
fn clear_network(spec: MlpSpec, batch: usize, rng: &mut ChaCha8Rng) -> Result<(Mlp, PointCloud)> {
    loop {
        let mut spec = spec.clone();
        spec.seed = rng.random();
        let mut net = Mlp::init(spec)?;
        for p in net.parameters_mut() {
            // Nonzero biases so the check also covers them.
            if p.rank() == 1 {
                *p = gradcheck::random_tensor(p.shape(), rng);
                p.data_mut().iter_mut().for_each(|v| *v *= 0.1);
            }
        }
        let x = random_batch(batch, net.input_dim(), rng);
        if gradcheck::kink_distance(&net, &x) > 1e-3 {
            return Ok((net, x));
        }
    }
}

fn owned(net: &Mlp) -> Vec<Tensor> {
    net.parameters().into_iter().cloned().collect()
}

fn parameter_build<'a>(
    like: &'a Mlp,
    loss: impl Fn(&mut Graph, &<Mlp as Network>::Bound) -> Result<NodeId> + 'a,
) -> impl Fn(&[Tensor]) -> Result<Built> + 'a {
    move |params| {
        let net = gradcheck::with_parameters(like, params)?;
        let mut g = Graph::new();
        let bound = net.bind(&mut g)?;
        let out = loss(&mut g, &bound)?;
        Ok((g, out, bound.params().to_vec()))
    }
}

fn mlp_checks(report: &mut Report, rng: &mut ChaCha8Rng) {
    let small = |activation| MlpSpec { input_dim: 3, hidden_dims: vec![5, 4], output_dim: 2, activation, seed: 0 };
    for (label, activation) in [("leaky_relu", Activation::default()), ("tanh", Activation::Tanh)] {
        let outcome = (|| {
            let mut worst: f64 = 0.0;
            for _ in 0..FD_POINTS {
                let (net, x) = clear_network(small(activation), 4, rng)?;
                let xt = x.as_tensor().clone();
                let build = parameter_build(&net, |g, b| {
                    let x = g.leaf(xt.clone())?;
                    let out = b.forward(g, x)?;
                    weighted_sum(g, out)
                });
                worst = worst.max(gradcheck::coordinate_error(&owned(&net), build)?);
            }
            Ok((worst < FD_TOLERANCE, format!("max rel err {worst:.2e} over {FD_POINTS} nets")))
        })();
        report.record(&format!("fd/mlp_params_{label}"), outcome);
    }

    let outcome = (|| {
        let mut worst: f64 = 0.0;
        for _ in 0..FD_POINTS {
            let (net, x) = clear_network(MlpSpec::toy(2, 2, 0), 3, rng)?;
            let xt = x.as_tensor().clone();
            let build = parameter_build(&net, |g, b| {
                let x = g.leaf(xt.clone())?;
                let out = b.forward(g, x)?;
                weighted_sum(g, out)
            });
            worst = worst.max(gradcheck::directional_error(&owned(&net), 3, rng, build)?);
        }
        Ok((worst < FD_TOLERANCE, format!("max rel err {worst:.2e}, 3 directions x {FD_POINTS} nets")))
    })();
    report.record("fd/mlp_params_toy_3x128", outcome);

    let outcome = (|| {
        let mut worst: f64 = 0.0;
        for _ in 0..FD_POINTS {
            let spec = MlpSpec {
                input_dim: 2,
                hidden_dims: vec![16, 16, 16],
                output_dim: 1,
                activation: Activation::default(),
                seed: 0,
            };
            let (net, x) = clear_network(spec, 5, rng)?;
            let err = gradcheck::coordinate_error(&[x.as_tensor().clone()], |t| {
                let mut g = Graph::new();
                let bound = net.bind(&mut g)?;
                let x = g.leaf(t[0].clone())?;
                let out = bound.forward(&mut g, x)?;
                let out = g.sum(out)?;
                Ok((g, out, vec![x]))
            })?;
            worst = worst.max(err);
        }
        Ok((worst < FD_TOLERANCE, format!("max rel err {worst:.2e} over {FD_POINTS} nets x 5 points")))
    })();
    report.record("fd/mlp_input_gradient", outcome);

    // Second-order: the regularizers differentiated with respect to ψ's parameters.
    let psi_spec =
        MlpSpec { input_dim: 2, hidden_dims: vec![6, 6], output_dim: 1, activation: Activation::default(), seed: 0 };
    type Regularizer = fn(&mut Graph, &<Mlp as Network>::Bound, NodeId) -> Result<NodeId>;
    let regularizers: [(&str, Regularizer); 2] = [
        ("gradient_penalty", |g, b, p| otm::gradient_penalty_nodes(g, b, p)),
        ("gradient_optimality", |g, b, p| otm::gradient_optimality_nodes(g, b, p)),
    ];
    for (label, reg) in regularizers {
        let outcome = (|| {
            let mut worst: f64 = 0.0;
            for _ in 0..FD_POINTS {
                let (net, x) = clear_network(psi_spec.clone(), 4, rng)?;
                let xt = x.as_tensor().clone();
                let build = parameter_build(&net, |g, b| {
                    let p = g.leaf(xt.clone())?;
                    reg(g, b, p)
                });
                worst = worst.max(gradcheck::coordinate_error(&owned(&net), build)?);
            }
            Ok((worst < FD_TOLERANCE, format!("max rel err {worst:.2e} over {FD_POINTS} nets")))
        })();
        report.record(&format!("fd/{label}_params"), outcome);
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn nested_checks(report: &mut Report) {
    // ½x² → x; d(x²)/dx at 3.
    let outcome = (|| {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0))?;
        let sq = g.square(x)?;
        let f = g.scale(sq, 0.5)?;
        let grad = g.gradient_node(f, x)?;
        let h = g.square(grad)?;
        let d = g.gradient(h, &[x])?[0].item();
        Ok((close(d, 6.0, SYMBOLIC_TOLERANCE), format!("{d} (expected 6)")))
    })();
    report.record("nested/half_square", outcome);

    // ½(wx)² → w²x; d(w²x)²/dw = 4w³x² = 16 at w=1, x=2.
    let outcome = (|| {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::scalar(1.0))?;
        let x = g.leaf(Tensor::scalar(2.0))?;
        let wx = g.mul(w, x)?;
        let sq = g.square(wx)?;
        let f = g.scale(sq, 0.5)?;
        let grad = g.gradient_node(f, x)?;
        let h = g.square(grad)?;
        let d = g.gradient(h, &[w])?[0].item();
        Ok((close(d, 16.0, SYMBOLIC_TOLERANCE), format!("{d} (expected 16)")))
    })();
    report.record("nested/weighted_square", outcome);

    let outcome = (|| {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.5, -1.0]))?;
        let zero = g.scale_shift(x, 0.0, 3.0)?;
        let f = g.sum(zero)?;
        let grad = g.gradient_node(f, x)?;
        let first = g.value(grad).norm_squared();
        let h = g.norm_squared(grad)?;
        let second = g.gradient(h, &[x])?[0].norm_squared();
        Ok((first == 0.0 && second == 0.0, format!("|grad|² {first}, |second-order|² {second}")))
    })();
    report.record("nested/constant", outcome);

    // ψ(y) = v·leaky(⟨w,y⟩) with ⟨w,y⟩ > 0 everywhere: ∇ψ = v w, so
    // GP = (|v|‖w‖ − 1)² and ∂GP/∂v = 2(|v|‖w‖ − 1)‖w‖ sign(v).
    let outcome = (|| {
        let (w, v) = ([0.6, 1.1], -1.3_f64);
        let net = single_unit(&w, v)?;
        let points = PointCloud::from_rows(&[vec![1.0, 0.5], vec![0.2, 2.0]])?;
        let mut g = Graph::new();
        let bound = net.bind(&mut g)?;
        let p = g.leaf(points.as_tensor().clone())?;
        let gp = otm::gradient_penalty_nodes(&mut g, &bound, p)?;
        let d = g.gradient(gp, &[bound.params()[2]])?[0].item();
        let wn = f64::hypot(w[0], w[1]);
        let expected = 2.0 * (v.abs() * wn - 1.0) * wn * v.signum();
        Ok((close(d, expected, SYMBOLIC_TOLERANCE), format!("{d:.12} (expected {expected:.12})")))
    })();
    report.record("nested/gradient_penalty_single_unit", outcome);

    // Same ψ: GO = |v|‖w‖, ∂GO/∂w = |v| w/‖w‖.
    let outcome = (|| {
        let (w, v) = ([0.6, 1.1], -1.3_f64);
        let net = single_unit(&w, v)?;
        let points = PointCloud::from_rows(&[vec![1.0, 0.5], vec![0.2, 2.0]])?;
        let mut g = Graph::new();
        let bound = net.bind(&mut g)?;
        let p = g.leaf(points.as_tensor().clone())?;
        let go = otm::gradient_optimality_nodes(&mut g, &bound, p)?;
        let d = g.gradient(go, &[bound.params()[0]])?[0].clone();
        let wn = f64::hypot(w[0], w[1]);
        let expected = [v.abs() * w[0] / wn, v.abs() * w[1] / wn];
        let ok =
            close(d.data()[0], expected[0], SYMBOLIC_TOLERANCE) && close(d.data()[1], expected[1], SYMBOLIC_TOLERANCE);
        Ok((ok, format!("{:?} (expected {expected:?})", d.data())))
    })();
    report.record("nested/gradient_optimality_single_unit", outcome);

    let outcome = (|| {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.5))?;
        let sq = g.square(x)?;
        let first = g.gradient_node(sq, x)?;
        let again = g.square(first)?;
        Ok(match g.gradient_node(again, x) {
            Err(otm_core::Error::NestingDepth) => (true, "rejected".to_string()),
            other => (false, format!("expected NestingDepth, got {other:?}")),
        })
    })();
    report.record("nested/depth_limit", outcome);
}

/// One hidden leaky-relu unit: `ψ(y) = v · leaky(⟨w, y⟩)`.
fn single_unit(w: &[f64; 2], v: f64) -> Result<Mlp> {
    let spec =
        MlpSpec { input_dim: 2, hidden_dims: vec![1], output_dim: 1, activation: Activation::default(), seed: 0 };
    Mlp::from_layers(
        spec,
        vec![
            Layer { weight: Tensor::matrix(2, 1, w.to_vec())?, bias: Tensor::vector(vec![0.0]) },
            Layer { weight: Tensor::matrix(1, 1, vec![v])?, bias: Tensor::vector(vec![0.0]) },
        ],
    )
}

fn linear(a: &[f64]) -> Result<Mlp> {
    let spec =
        MlpSpec { input_dim: a.len(), hidden_dims: vec![], output_dim: 1, activation: Activation::default(), seed: 0 };
    Mlp::from_layers(
        spec,
        vec![Layer { weight: Tensor::matrix(a.len(), 1, a.to_vec())?, bias: Tensor::vector(vec![0.0]) }],
    )
}

fn identity_net(dim: usize) -> Result<Mlp> {
    let spec =
        MlpSpec { input_dim: dim, hidden_dims: vec![], output_dim: dim, activation: Activation::default(), seed: 0 };
    let eye = (0..dim * dim).map(|k| if k / dim == k % dim { 1.0 } else { 0.0 }).collect();
    Mlp::from_layers(spec, vec![Layer { weight: Tensor::matrix(dim, dim, eye)?, bias: Tensor::zeros(&[dim]) }])
}

fn regularizer_checks(report: &mut Report, rng: &mut ChaCha8Rng) {
    let batch = random_batch(6, 2, rng);
    let half_sq = QuadraticPotential::half_squared_distance(&[0.0, 0.0]);
    let id = identity_net(2);

    let outcome = (|| {
        let a = [1.5, -2.0];
        let mut lg = otm::gradient_optimality(&linear(&a)?, id.as_ref().map_err(Clone::clone)?, &batch)?;
        let v = lg.graph.evaluate(lg.loss)?.item();
        Ok(((v - 2.5).abs() <= IDENTITY_TOLERANCE, format!("{v} (expected 2.5)")))
    })();
    report.record("regularizer/go_linear", outcome);

    let outcome = (|| {
        let x = PointCloud::from_rows(&[vec![0.7, -1.9], vec![-0.7, 1.9]])?;
        let mut lg = otm::gradient_optimality(&half_sq, id.as_ref().map_err(Clone::clone)?, &x)?;
        let v = lg.graph.evaluate(lg.loss)?.item();
        Ok((v.abs() <= IDENTITY_TOLERANCE, format!("{v} (expected 0)")))
    })();
    report.record("regularizer/go_symmetric_batch", outcome);

    let outcome = (|| {
        let x = PointCloud::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])?;
        let mut lg = otm::gradient_optimality(&half_sq, id.as_ref().map_err(Clone::clone)?, &x)?;
        let v = lg.graph.evaluate(lg.loss)?.item();
        Ok(((v - 0.5_f64.sqrt()).abs() <= IDENTITY_TOLERANCE, format!("{v} (expected sqrt(0.5))")))
    })();
    report.record("regularizer/go_mean_of_gradients", outcome);

    let gp = |psi: &Mlp, expected: f64, rng: &mut ChaCha8Rng| -> Result<(bool, String)> {
        let real = random_batch(6, 2, rng);
        let mut lg = otm::gradient_penalty(psi, &batch, &real, rng)?;
        let v = lg.graph.evaluate(lg.loss)?.item();
        Ok(((v - expected).abs() <= IDENTITY_TOLERANCE, format!("{v} (expected {expected})")))
    };
    report.record("regularizer/gp_unit_linear", linear(&[0.6, 0.8]).and_then(|p| gp(&p, 0.0, rng)));
    report.record("regularizer/gp_zero", linear(&[0.0, 0.0]).and_then(|p| gp(&p, 1.0, rng)));
    report.record("regularizer/gp_gradient_norm_two", linear(&[2.0, 0.0]).and_then(|p| gp(&p, 1.0, rng)));
}

fn loss_checks(report: &mut Report, rng: &mut ChaCha8Rng) {
    let outcome = (|| {
        let zero_map = {
            let spec = MlpSpec {
                input_dim: 2,
                hidden_dims: vec![],
                output_dim: 2,
                activation: Activation::default(),
                seed: 0,
            };
            Mlp::from_layers(spec, vec![Layer { weight: Tensor::zeros(&[2, 2]), bias: Tensor::zeros(&[2]) }])?
        };
        let x = PointCloud::from_rows(&[vec![3.0, -1.0]])?;
        let y = PointCloud::from_rows(&[vec![1.0, 1.0]])?;
        let mut lg = otm::psi_loss(&linear(&[1.0, 1.0])?, &zero_map, &x, &y)?;
        let v = lg.graph.evaluate(lg.loss)?.item();
        Ok((v == 2.0, format!("{v} (expected 2)")))
    })();
    report.record("loss/psi_linear", outcome);

    let outcome = (|| {
        let x = PointCloud::from_rows(&[vec![1.0, 1.0]])?;
        let id = identity_net(2)?;
        let q = Embedding::identity(2);
        let mut zero = otm::g_loss(&linear(&[0.0, 0.0])?, &id, &q, &x)?;
        let a = zero.graph.evaluate(zero.loss)?.item();
        let mut quad = otm::g_loss(&QuadraticPotential::half_squared_distance(&[0.0, 0.0]), &id, &q, &x)?;
        let b = quad.graph.evaluate(quad.loss)?.item();
        Ok((a == -2.0 && b == -1.0, format!("{a}, {b} (expected -2, -1)")))
    })();
    report.record("loss/g_examples", outcome);

    // With ψ = ½‖y‖² the pointwise minimizer of L_G over y is Q(x).
    let outcome = (|| {
        let x = random_batch(5, 2, rng);
        let q = Embedding::zero_pad(2, 3)?;
        let target = q.embed(&x)?;
        let psi = QuadraticPotential::half_squared_distance(&[0.0, 0.0, 0.0]);
        let mut y = gradcheck::random_tensor(&[5, 3], rng);
        let n = x.len() as f64;
        for _ in 0..50 {
            let mut g = Graph::new();
            let bound = psi.bind(&mut g)?;
            let e = g.leaf(target.as_tensor().clone())?;
            let yn = g.leaf(y.clone())?;
            let loss = otm::g_loss_nodes(&mut g, &bound, e, yn)?;
            let grad = g.gradient(loss, &[yn])?.remove(0);
            y = y.zip_map(&grad, |a, d| a - 0.5 * n * d);
        }
        let err = y.zip_map(target.as_tensor(), |a, b| (a - b).abs()).data().iter().copied().fold(0.0, f64::max);
        Ok((err < 1e-4, format!("max |y - Q(x)| = {err:.2e} after 50 steps")))
    })();
    report.record("loss/g_first_order_condition", outcome);
}

fn adam_checks(report: &mut Report, fault: bool) {
    let config = AdamConfig { learning_rate: 0.1, beta1: 0.5, beta2: 0.99, epsilon: 1e-8, bias_correction: !fault };
    let outcome = (|| {
        let mut theta = Tensor::scalar(0.0);
        let mut state = AdamState::new(config, [&theta])?;
        state.step(&mut [&mut theta], &[Tensor::scalar(1.0)])?;
        let v = theta.item();
        Ok(((v + 0.1).abs() < 1e-6, format!("{v} (expected -0.1)")))
    })();
    report.record("adam/first_step", outcome);

    let outcome = (|| {
        let mut worst: f64 = 0.0;
        for g in [1e-3, 0.5, 7.0, 1e3] {
            let mut theta = Tensor::scalar(0.0);
            let mut state = AdamState::new(config, [&theta])?;
            state.step(&mut [&mut theta], &[Tensor::scalar(g)])?;
            worst = worst.max((theta.item().abs() - 0.1).abs());
        }
        Ok((worst < 1e-5, format!("max ||step| - lr| = {worst:.2e}")))
    })();
    report.record("adam/first_step_scale_invariance", outcome);
}

fn oracle_checks(report: &mut Report, rng: &mut ChaCha8Rng) {
    let outcome = (|| {
        let mut mismatches = 0;
        for _ in 0..20 {
            let x = random_batch(7, 2, rng);
            let y = random_batch(7, 2, rng);
            let a = oracle::discrete_ot_exhaustive(&x, &y)?;
            let b = oracle::discrete_ot_hungarian(&x, &y)?;
            if a.mean_cost != b.mean_cost {
                mismatches += 1;
            }
        }
        Ok((mismatches == 0, format!("{mismatches} of 20 n=7 instances differ")))
    })();
    report.record("oracle/assignment_vs_exhaustive", outcome);

    let outcome = (|| {
        let mut worst: f64 = 0.0;
        for k in 0..20 {
            let seed: u64 = rng.random();
            let mean = |rng: &mut ChaCha8Rng| DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let a = Gaussian::new(mean(rng), oracle::random_spd(2, seed, 0.1))?;
            let b = Gaussian::new(mean(rng), oracle::random_spd(2, seed ^ (k + 1), 0.1))?;
            let fd = metrics::frechet_gaussian(&a, &b)?;
            worst = worst.max((fd - 2.0 * oracle::gaussian_w2(&a, &b)?).abs());
        }
        Ok((worst < 1e-9, format!("max |FD - 2 W2²| = {worst:.2e} over 20 pairs")))
    })();
    report.record("oracle/frechet_equals_twice_w2", outcome);

    let outcome = (|| {
        let t = oracle::gaussian_ot_map(&Gaussian::standard(2), &Gaussian::isotropic(&[2.0, 0.0]))?;
        let dev = (&t.matrix - DMatrix::identity(2, 2)).abs().max()
            + (&t.offset - DVector::from_vec(vec![2.0, 0.0])).abs().max();
        let one_d =
            oracle::gaussian_ot_map(&Gaussian::from_vecs(&[0.0], &[1.0])?, &Gaussian::from_vecs(&[0.0], &[4.0])?)?;
        let w_shift =
            oracle::gaussian_w2(&Gaussian::from_vecs(&[0.0], &[1.0])?, &Gaussian::from_vecs(&[2.0], &[1.0])?)?;
        let w_scale =
            oracle::gaussian_w2(&Gaussian::from_vecs(&[0.0], &[1.0])?, &Gaussian::from_vecs(&[0.0], &[4.0])?)?;
        let ok = dev < 1e-12
            && (one_d.matrix[(0, 0)] - 2.0).abs() < 1e-12
            && (w_shift - 2.0).abs() < 1e-12
            && (w_scale - 0.5).abs() < 1e-12;
        Ok((ok, format!("translation dev {dev:.1e}, scale {}, W2 {w_shift} and {w_scale}", one_d.matrix[(0, 0)])))
    })();
    report.record("oracle/gaussian_closed_forms", outcome);
}

/// `μ = N(0, I₂)`, `ν = N(b, I₂)`, `ψ̂ = ½‖y − (b + δ)‖²`, `Ĝ(x) = x + b + δ + s`.
fn translation_bound(b: [f64; 2], delta: [f64; 2], shift: [f64; 2], seed: u64) -> Result<oracle::BoundReport> {
    let b_hat = [b[0] + delta[0], b[1] + delta[1]];
    let b_prime = [b_hat[0] + shift[0], b_hat[1] + shift[1]];
    oracle::verify_bound(
        &Gaussian::standard(2),
        &Gaussian::isotropic(&b),
        &QuadraticPotential::half_squared_distance(&b_hat),
        &AffineMap::translation(&b_prime),
        None,
        BOUND_SAMPLES,
        seed,
    )
}

fn bound_checks(report: &mut Report, rng: &mut ChaCha8Rng) {
    let b = [1.0, -0.5];
    let outcome = translation_bound(b, [0.3, 0.0], [0.4, 0.0], 1).map(|r| {
        let ok = r.holds && (r.map_error - 0.49).abs() < 1e-6 && (r.bound - 0.49).abs() < 1e-6;
        (ok, format!("LHS {:.9}, bound {:.9}", r.map_error, r.bound))
    });
    report.record("bound/colinear_tight", outcome);

    let outcome = translation_bound(b, [0.3, 0.0], [-0.4, 0.0], 2).map(|r| {
        let ok = r.holds && (r.map_error - 0.01).abs() < 1e-6 && (r.bound - 0.49).abs() < 1e-6;
        (ok, format!("LHS {:.9}, bound {:.9}", r.map_error, r.bound))
    });
    report.record("bound/opposite_slack", outcome);

    let outcome = translation_bound(b, [0.0, 0.0], [0.0, 0.0], 3).map(|r| {
        let worst =
            [r.epsilon1, r.epsilon2, r.map_error, r.bound, r.twice_w2_sq].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        (r.holds && worst < 1e-9, format!("largest chain member {worst:.1e}"))
    });
    report.record("bound/exact_solution", outcome);

    let outcome = (|| {
        let mut failures = 0;
        let mut worst_closed_form: f64 = 0.0;
        for k in 0..BOUND_CASES {
            let mut draw = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let (delta, shift) = (draw(), draw());
            let r = translation_bound(b, delta, shift, 100 + k as u64)?;
            let sq = |v: [f64; 2]| v[0] * v[0] + v[1] * v[1];
            let lhs = sq([delta[0] + shift[0], delta[1] + shift[1]]);
            let bound = (sq(shift).sqrt() + sq(delta).sqrt()).powi(2);
            worst_closed_form = worst_closed_form
                .max((r.epsilon1 - 0.5 * sq(shift)).abs())
                .max((r.epsilon2 - 0.5 * sq(delta)).abs())
                .max((r.map_error - lhs).abs())
                .max((r.bound - bound).abs());
            if !r.holds {
                failures += 1;
            }
        }
        let ok = failures == 0 && worst_closed_form < 1e-3;
        Ok((ok, format!("{failures} violations, max closed-form dev {worst_closed_form:.1e}, n_mc {BOUND_SAMPLES}")))
    })();
    report.record(&format!("bound/random_{BOUND_CASES}"), outcome);
}

fn network_checks(report: &mut Report) {
    let outcome = (|| {
        let spec = MlpSpec::toy(2, 2, 7);
        let (a, b) = (Mlp::init(spec.clone())?, Mlp::init(spec)?);
        let x = PointCloud::from_rows(&[vec![0.3, -1.0]])?;
        let same = a == b && nets::apply(&a, &x)? == nets::apply(&b, &x)?;
        Ok((same, "seeded init reproducible".to_string()))
    })();
    report.record("nets/seeded_init", outcome);
}

/// Finite-difference and nested-gradient checks only.
pub fn run_gradient_checks() -> Report {
    let mut report = Report::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    primitive_checks(&mut report, &mut rng);
    mlp_checks(&mut report, &mut rng);
    nested_checks(&mut report);
    report
}

/// Runs every check. With `fault`, Adam's bias correction is switched off so
/// that optimizer checks must fail.
pub fn run_verify(fault: bool) -> Report {
    let mut report = Report::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    primitive_checks(&mut report, &mut rng);
    mlp_checks(&mut report, &mut rng);
    nested_checks(&mut report);
    regularizer_checks(&mut report, &mut rng);
    loss_checks(&mut report, &mut rng);
    adam_checks(&mut report, fault);
    oracle_checks(&mut report, &mut rng);
    bound_checks(&mut report, &mut rng);
    network_checks(&mut report);
    report
}
