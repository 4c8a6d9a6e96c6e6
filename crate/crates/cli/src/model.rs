//! Text model files.
//!
//! ```text
//! dims: 2 128 128 128 2
//! activation: leaky_relu
//! seed: 7
//! <layer 0 weight, row-major fan_in x fan_out>
//! <layer 0 bias>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so loading reproduces
//! every parameter bit for bit.

use std::path::Path;

use otm_core::nets::{Layer, Mlp, MlpSpec};
use otm_core::Tensor;

use crate::error::{io_err, CliError};

fn line_of(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn to_text(net: &Mlp) -> String {
    let spec = net.spec();
    let dims: Vec<String> = spec.dims().iter().map(|d| d.to_string()).collect();
    let mut out = format!("dims: {}\nactivation: {}\nseed: {}\n", dims.join(" "), spec.activation, spec.seed);
    for layer in net.layers() {
        out.push_str(&line_of(layer.weight.data()));
        out.push('\n');
        out.push_str(&line_of(layer.bias.data()));
        out.push('\n');
    }
    out
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<&'a str, CliError> {
    let (n, line) = lines.next().ok_or_else(|| CliError::Model(format!("missing `{key}:` header")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(':'))
        .map(str::trim)
        .ok_or_else(|| CliError::Model(format!("line {}: expected `{key}:`", n + 1)))
}

fn numbers(n: usize, line: &str, expected: usize) -> Result<Vec<f64>, CliError> {
    let values = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| CliError::Model(format!("line {}: bad number {t:?}", n + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(CliError::Model(format!("line {}: {} values, expected {expected}", n + 1, values.len())));
    }
    Ok(values)
}

pub fn from_text(text: &str) -> Result<Mlp, CliError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let dims = header(&mut lines, "dims")?
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| CliError::Model(format!("bad dimension {t:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if dims.len() < 2 {
        return Err(CliError::Model("dims needs an input and an output size".into()));
    }
    let activation = header(&mut lines, "activation")?.parse().map_err(CliError::Core)?;
    let seed = header(&mut lines, "seed")?.parse::<u64>().map_err(|_| CliError::Model("bad seed".into()))?;
    let spec = MlpSpec {
        input_dim: dims[0],
        hidden_dims: dims[1..dims.len() - 1].to_vec(),
        output_dim: dims[dims.len() - 1],
        activation,
        seed,
    };
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let (n, line) = lines.next().ok_or_else(|| CliError::Model("truncated file".into()))?;
        let weight = Tensor::matrix(fan_in, fan_out, numbers(n, line, fan_in * fan_out)?)?;
        let (n, line) = lines.next().ok_or_else(|| CliError::Model("truncated file".into()))?;
        let bias = Tensor::vector(numbers(n, line, fan_out)?);
        layers.push(Layer { weight, bias });
    }
    if let Some((n, _)) = lines.next() {
        return Err(CliError::Model(format!("line {}: unexpected trailing data", n + 1)));
    }
    Ok(Mlp::from_layers(spec, layers)?)
}

pub fn save(net: &Mlp, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, to_text(net)).map_err(|e| io_err(path, e))
}

pub fn load(path: &Path) -> Result<Mlp, CliError> {
    from_text(&std::fs::read_to_string(path).map_err(|e| io_err(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use otm_core::nets::Activation;
    use otm_core::PointCloud;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = MlpSpec {
            input_dim: 3,
            hidden_dims: vec![5, 4],
            output_dim: 2,
            activation: Activation::LeakyRelu { negative_slope: 0.2 },
            seed: 11,
        };
        let net = Mlp::init(spec).unwrap();
        let back = from_text(&to_text(&net)).unwrap();
        assert_eq!(net, back);
        let probe = PointCloud::from_rows(&[vec![0.1, -2.0, 3.3], vec![1e-7, 5.0, -0.25]]).unwrap();
        let (a, b) = (net.apply(&probe).unwrap(), back.apply(&probe).unwrap());
        let bits = |c: &PointCloud| c.as_tensor().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rejects_malformed() {
        let net = Mlp::init(MlpSpec::toy(2, 1, 0)).unwrap();
        let text = to_text(&net);
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        assert!(from_text(&lines.join("\n")).is_err());
        assert!(from_text(&text.replacen("dims: 2", "dims: 3", 1)).is_err());
        assert!(from_text(&format!("{text}1 2 3\n")).is_err());
        assert!(from_text(&text.replacen("activation: leaky_relu", "activation: relu6", 1)).is_err());
    }
}
