//! Central finite-difference checks of graph gradients.

use otm_core::autodiff::{Graph, NodeId};
use otm_core::nets::{Activation, Layer, Mlp};
use otm_core::{PointCloud, Result, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

pub const STEP: f64 = 1e-5;

/// A freshly built graph, its scalar output, and the leaves to differentiate.
pub type Built = (Graph, NodeId, Vec<NodeId>);

fn value_at(build: &impl Fn(&[Tensor]) -> Result<Built>, inputs: &[Tensor]) -> Result<f64> {
    let (mut graph, out, _) = build(inputs)?;
    Ok(graph.evaluate(out)?.item())
}

fn analytic(build: &impl Fn(&[Tensor]) -> Result<Built>, inputs: &[Tensor]) -> Result<Vec<f64>> {
    let (mut graph, out, leaves) = build(inputs)?;
    let grads = graph.gradient(out, &leaves)?;
    Ok(grads.iter().flat_map(|g| g.data().iter().copied()).collect())
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// `‖g − g_fd‖ / max(‖g‖, ‖g_fd‖)` with one central difference per coordinate.
pub fn coordinate_error(inputs: &[Tensor], build: impl Fn(&[Tensor]) -> Result<Built>) -> Result<f64> {
    let exact = analytic(&build, inputs)?;
    let mut numeric = Vec::with_capacity(exact.len());
    let mut work = inputs.to_vec();
    for t in 0..work.len() {
        for j in 0..work[t].len() {
            let orig = work[t].data()[j];
            work[t].data_mut()[j] = orig + STEP;
            let up = value_at(&build, &work)?;
            work[t].data_mut()[j] = orig - STEP;
            let down = value_at(&build, &work)?;
            work[t].data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * STEP));
        }
    }
    Ok(relative(&exact, &numeric))
}

/// Directional version for large inputs: `|⟨g,v⟩ − D_v f| / ‖g‖` over random unit directions.
pub fn directional_error(
    inputs: &[Tensor],
    directions: usize,
    rng: &mut impl Rng,
    build: impl Fn(&[Tensor]) -> Result<Built>,
) -> Result<f64> {
    let exact = analytic(&build, inputs)?;
    let norm = exact.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let mut v: Vec<f64> = (0..exact.len()).map(|_| rng.sample(StandardNormal)).collect();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= vn);
        let shifted = |sign: f64| -> Vec<Tensor> {
            let mut k = 0;
            inputs
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    for x in t.data_mut() {
                        *x += sign * STEP * v[k];
                        k += 1;
                    }
                    t
                })
                .collect()
        };
        let fd = (value_at(&build, &shifted(1.0))? - value_at(&build, &shifted(-1.0))?) / (2.0 * STEP);
        let dot: f64 = exact.iter().zip(&v).map(|(a, b)| a * b).sum();
        let err = (dot - fd).abs() / norm.max(f64::MIN_POSITIVE);
        worst = worst.max(err);
    }
    Ok(worst)
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).expect("shape and data agree")
}

/// Smallest `|pre-activation|` over all hidden units and points; finite
/// differences are only meaningful when this exceeds the step by a margin.
pub fn kink_distance(net: &Mlp, batch: &PointCloud) -> f64 {
    let slope = match net.spec().activation {
        Activation::LeakyRelu { negative_slope } => negative_slope,
        Activation::Tanh => return f64::INFINITY,
    };
    let mut h = batch.as_tensor().clone();
    let mut closest = f64::INFINITY;
    let layers = net.layers();
    for Layer { weight, bias } in &layers[..layers.len() - 1] {
        let mut z = h.matmul(weight);
        let width = bias.len();
        for row in z.data_mut().chunks_exact_mut(width) {
            for (v, b) in row.iter_mut().zip(bias.data()) {
                *v += b;
                closest = closest.min(v.abs());
                if *v < 0.0 {
                    *v *= slope;
                }
            }
        }
        h = z;
    }
    closest
}

/// Rebuilds an [`Mlp`] with the architecture of `like` from flat parameter tensors.
pub fn with_parameters(like: &Mlp, params: &[Tensor]) -> Result<Mlp> {
    let layers = params.chunks_exact(2).map(|wb| Layer { weight: wb[0].clone(), bias: wb[1].clone() }).collect();
    Mlp::from_layers(like.spec().clone(), layers)
}
