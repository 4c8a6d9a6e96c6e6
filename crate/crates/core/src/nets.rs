//! Dense feed-forward networks for the transport map and the potential.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, LEAKY_SLOPE};
use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu { negative_slope: f64 },
    Tanh,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu { negative_slope: LEAKY_SLOPE }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu { negative_slope } if *negative_slope == LEAKY_SLOPE => {
                write!(f, "leaky_relu")
            }
            Activation::LeakyRelu { negative_slope } => write!(f, "leaky_relu:{negative_slope:?}"),
            Activation::Tanh => write!(f, "tanh"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "leaky_relu" => Ok(Activation::default()),
            "tanh" => Ok(Activation::Tanh),
            other => match other.strip_prefix("leaky_relu:") {
                Some(slope) => slope
                    .parse()
                    .map(|negative_slope| Activation::LeakyRelu { negative_slope })
                    .map_err(|_| Error::InvalidSpec(format!("bad leaky-relu slope {slope:?}"))),
                None => Err(Error::InvalidSpec(format!("unknown activation {other:?}"))),
            },
        }
    }
}

/// Architecture of a network. The final layer is always linear.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl MlpSpec {
    /// Three hidden layers of 128 leaky-relu units.
    pub fn toy(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        Self { input_dim, hidden_dims: vec![128; 3], output_dim, activation: Activation::default(), seed }
    }

    /// Extents of every layer boundary, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(Error::InvalidSpec(format!("zero layer width in {:?}", self.dims())));
        }
        Ok(())
    }
}

/// One dense layer `x W + b`, with `W` stored as `fan_in x fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

/// A parametric function that can be recorded on a [`Graph`].
pub trait Network {
    type Bound: BoundNetwork;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Records the parameters as leaves so that several forward passes in one
    /// graph share them.
    fn bind(&self, graph: &mut Graph) -> Result<Self::Bound>;
}

/// A [`Network`] whose parameters live in a graph.
pub trait BoundNetwork {
    /// Parameter leaves, in the owning network's parameter order.
    fn params(&self) -> &[NodeId];

    /// Records the forward pass for the batch node `x` (rows are points).
    fn forward(&self, graph: &mut Graph, x: NodeId) -> Result<NodeId>;

    /// Gradient of a scalar-output network with respect to its inputs, as a
    /// differentiable `n x input_dim` node. `points` must be a leaf.
    fn input_gradient(&self, graph: &mut Graph, points: NodeId) -> Result<NodeId> {
        let out = self.forward(graph, points)?;
        let cols = graph.value(out).cols();
        if cols != 1 {
            return Err(Error::Dimension { expected: 1, got: cols });
        }
        let total = graph.sum(out)?;
        graph.gradient_node(total, points)
    }
}

/// Parameters of an [`Mlp`] recorded as leaves of a [`Graph`].
#[derive(Clone, Debug)]
pub struct BoundMlp {
    params: Vec<NodeId>,
    activation: Activation,
}

impl BoundNetwork for BoundMlp {
    fn params(&self) -> &[NodeId] {
        &self.params
    }

    fn forward(&self, graph: &mut Graph, x: NodeId) -> Result<NodeId> {
        let layers = self.params.len() / 2;
        let mut h = x;
        for k in 0..layers {
            let (w, b) = (self.params[2 * k], self.params[2 * k + 1]);
            h = match self.activation {
                _ if k + 1 == layers => graph.affine(h, w, b)?,
                Activation::LeakyRelu { negative_slope } => graph.affine_leaky(h, w, b, negative_slope)?,
                Activation::Tanh => {
                    let z = graph.affine(h, w, b)?;
                    graph.tanh(z)?
                }
            };
        }
        Ok(h)
    }
}

impl Network for Mlp {
    type Bound = BoundMlp;

    fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    fn bind(&self, graph: &mut Graph) -> Result<BoundMlp> {
        let params = self.parameters().into_iter().map(|p| graph.leaf(p.clone())).collect::<Result<_>>()?;
        Ok(BoundMlp { params, activation: self.spec.activation })
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases; fully determined by `spec.seed`.
    pub fn init(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let dims = spec.dims();
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-s..=s)).collect();
                Layer {
                    weight: Tensor::matrix(fan_in, fan_out, data).expect("sized by construction"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    /// Assembles a network from explicit layers, checking that shapes chain.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.dims();
        if layers.len() != dims.len() - 1 {
            return Err(Error::InvalidSpec(format!("{} layers given for dims {dims:?}", layers.len())));
        }
        for (layer, w) in layers.iter().zip(dims.windows(2)) {
            if layer.weight.shape() != [w[0], w[1]] || layer.bias.shape() != [w[1]] {
                return Err(Error::Shape(format!(
                    "layer {:?}/{:?} does not map {} -> {}",
                    layer.weight.shape(),
                    layer.bias.shape(),
                    w[0],
                    w[1]
                )));
            }
            if !layer.weight.is_finite() || !layer.bias.is_finite() {
                return Err(Error::InvalidSpec("non-finite parameter".into()));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Weight and bias of every layer, interleaved.
    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Evaluates the network on every point of `batch`.
    pub fn apply(&self, batch: &PointCloud) -> Result<PointCloud> {
        apply(self, batch)
    }

    /// `∇ψ` at each point for a scalar-output network.
    pub fn input_gradient(&self, batch: &PointCloud) -> Result<PointCloud> {
        input_gradient(self, batch)
    }
}

/// Evaluates any network on every point of `batch`.
pub fn apply<N: Network>(net: &N, batch: &PointCloud) -> Result<PointCloud> {
    if batch.dim() != net.input_dim() {
        return Err(Error::Dimension { expected: net.input_dim(), got: batch.dim() });
    }
    if batch.is_empty() {
        return PointCloud::new(net.output_dim(), Vec::new());
    }
    let mut graph = Graph::new();
    let bound = net.bind(&mut graph)?;
    let x = graph.leaf(batch.as_tensor().clone())?;
    let out = bound.forward(&mut graph, x)?;
    PointCloud::from_tensor(graph.value(out).clone())
}

/// Input gradient of a scalar-output network at every point of `batch`.
pub fn input_gradient<N: Network>(net: &N, batch: &PointCloud) -> Result<PointCloud> {
    if batch.dim() != net.input_dim() {
        return Err(Error::Dimension { expected: net.input_dim(), got: batch.dim() });
    }
    if net.output_dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: net.output_dim() });
    }
    let mut graph = Graph::new();
    let bound = net.bind(&mut graph)?;
    let y = graph.leaf(batch.as_tensor().clone())?;
    let grad = bound.input_gradient(&mut graph, y)?;
    PointCloud::from_tensor(graph.value(grad).clone())
}
