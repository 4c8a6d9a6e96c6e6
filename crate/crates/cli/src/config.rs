//! Flat `key = value` run configuration with dotted section prefixes.
//!
//! ```text
//! experiment.name = ring
//! mu.kind = gaussian
//! mu.mean = 0, 0
//! nu.kind = gaussian_mixture_ring
//! train.k_g = 16
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use otm_core::data::{DatasetKind, DatasetSpec, Degradation};
use otm_core::nets::{Activation, MlpSpec};
use otm_core::otm::{Embedding, EmbeddingKind, Regularizer, TrainConfig};

use crate::error::CliError;

/// Where `iterations` came from; echoed so the resolved file re-derives the same budget.
#[derive(Clone, Debug, PartialEq)]
pub enum Budget {
    Iterations(usize),
    /// One outer iteration per ψ batch: `epochs · ⌈dataset_size / batch_size⌉`.
    Epochs {
        epochs: usize,
        dataset_size: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleSpec {
    /// Gaussian-to-Gaussian pairs get the closed-form map; other pairs get none.
    Auto,
    None,
    /// Explicit `T*(x) = A x + b` with `A` given row-major `D x H`.
    Affine {
        matrix: Vec<f64>,
        offset: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    /// Points used for L2-UVP, transport cost and Fréchet distance.
    pub samples: usize,
    /// Points per cloud for the discrete-OT W2 estimate.
    pub w2_samples: usize,
    /// Evaluate every `period` outer iterations; 0 evaluates only at the end.
    pub period: usize,
    pub seed: u64,
    /// Pass threshold for `W2(pushforward, target) / W2(input, target)`.
    pub w2_ratio_threshold: f64,
    pub oracle: OracleSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub mu: DatasetSpec,
    pub nu: DatasetSpec,
    pub embedding: Embedding,
    pub g: MlpSpec,
    pub psi: MlpSpec,
    pub train: TrainConfig,
    pub budget: Budget,
    pub eval: EvalSettings,
    pub output_dir: PathBuf,
    /// Record real elapsed time in `history.csv`; off by default so reruns are byte-identical.
    pub record_wall_time: bool,
}

type Entries = BTreeMap<String, (usize, String)>;

fn parse_entries(text: &str) -> Result<Entries, CliError> {
    let mut out = Entries::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected `key = value`", n + 1)));
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", n + 1)));
        }
        if out.insert(key.clone(), (n + 1, value.trim().to_string())).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key {key}", n + 1)));
        }
    }
    Ok(out)
}

/// Typed access to the entries; tracks which keys were consumed.
struct Reader {
    entries: Entries,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => {
                v.parse().map(Some).map_err(|e| CliError::Config(format!("line {line}: {key} = {v:?}: {e}")))
            }
        }
    }

    fn or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e| CliError::Config(format!("line {line}: {key}: {s:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key)?.ok_or_else(|| CliError::Config(format!("missing key {key}")))
    }
}

fn dataset_kind(r: &mut Reader, prefix: &str, kind: &str) -> Result<DatasetKind, CliError> {
    let k = |name: &str| format!("{prefix}.{name}");
    Ok(match kind {
        "gaussian" => {
            let mean: Vec<f64> = r.list(&k("mean"))?.unwrap_or_else(|| vec![0.0, 0.0]);
            let d = mean.len();
            let covariance = match r.list(&k("covariance"))? {
                Some(c) => c,
                None => match r.list::<f64>(&k("variance"))? {
                    Some(v) if v.len() == d => {
                        let mut c = vec![0.0; d * d];
                        for (i, x) in v.into_iter().enumerate() {
                            c[i * d + i] = x;
                        }
                        c
                    }
                    Some(v) => {
                        return Err(CliError::Config(format!(
                            "{}: {} variances for a {d}-d mean",
                            k("variance"),
                            v.len()
                        )))
                    }
                    None => match DatasetKind::standard_gaussian(d) {
                        DatasetKind::Gaussian { covariance, .. } => covariance,
                        _ => unreachable!(),
                    },
                },
            };
            DatasetKind::Gaussian { mean, covariance }
        }
        "gaussian_mixture_ring" => DatasetKind::GaussianMixtureRing {
            components: r.or(&k("components"), 8)?,
            radius: r.or(&k("radius"), 4.0)?,
            std: r.or(&k("std"), 0.4)?,
        },
        "two_moons" => DatasetKind::TwoMoons { noise: r.or(&k("noise"), 0.05)? },
        "circles" => DatasetKind::Circles { factor: r.or(&k("factor"), 0.5)?, noise: r.or(&k("noise"), 0.05)? },
        "s_curve" => DatasetKind::SCurve { noise: r.or(&k("noise"), 0.05)? },
        "swiss_roll" => DatasetKind::SwissRoll { noise: r.or(&k("noise"), 0.0)?, scale: r.or(&k("scale"), 0.25)? },
        "degraded_pair" => {
            let base_kind: String = r.require(&k("base"))?;
            if base_kind == "degraded_pair" {
                return Err(CliError::Config(format!("{}: degradations do not nest", k("base"))));
            }
            let base = dataset_kind(r, prefix, &base_kind)?;
            let degradation = match r.or(&k("degradation"), "additive_gaussian".to_string())?.as_str() {
                "additive_gaussian" => Degradation::AdditiveGaussian { sigma: r.require(&k("sigma"))? },
                "coordinate_mask" => {
                    let keep: Vec<u8> =
                        r.list(&k("keep"))?.ok_or_else(|| CliError::Config(format!("missing key {}", k("keep"))))?;
                    Degradation::CoordinateMask { keep: keep.into_iter().map(|b| b != 0).collect() }
                }
                other => return Err(CliError::Config(format!("{}: unknown degradation {other:?}", k("degradation")))),
            };
            DatasetKind::Degraded { base: Box::new(base), degradation }
        }
        other => return Err(CliError::Config(format!("{}: unknown dataset kind {other:?}", k("kind")))),
    })
}

fn dataset(r: &mut Reader, prefix: &str, default_seed: u64) -> Result<DatasetSpec, CliError> {
    let kind: String = r.require(&format!("{prefix}.kind"))?;
    let kind = dataset_kind(r, prefix, &kind)?;
    let seed = r.or(&format!("{prefix}.seed"), default_seed)?;
    let spec = DatasetSpec { kind, seed };
    otm_core::data::Sampler::new(spec.clone()).map_err(|e| CliError::Config(format!("{prefix}: {e}")))?;
    Ok(spec)
}

fn network(
    r: &mut Reader,
    prefix: &str,
    input_dim: usize,
    output_dim: usize,
    default_seed: u64,
) -> Result<MlpSpec, CliError> {
    let spec = MlpSpec {
        input_dim,
        hidden_dims: r.list(&format!("{prefix}.hidden"))?.unwrap_or_else(|| vec![128, 128, 128]),
        output_dim,
        activation: r.or(&format!("{prefix}.activation"), Activation::default())?,
        seed: r.or(&format!("{prefix}.seed"), default_seed)?,
    };
    spec.validate().map_err(|e| CliError::Config(format!("{prefix}: {e}")))?;
    Ok(spec)
}

fn embedding(r: &mut Reader, h: usize, d: usize) -> Result<Embedding, CliError> {
    let default = if h == d { "identity" } else { "zero_pad" };
    let kind = r.or("embedding.kind", default.to_string())?;
    let bad = |e: otm_core::Error| CliError::Config(format!("embedding: {e}"));
    match kind.as_str() {
        "identity" if h == d => Ok(Embedding::identity(h)),
        "identity" => Err(CliError::Config(format!("identity embedding needs equal dimensions, got {h} -> {d}"))),
        "zero_pad" => Embedding::zero_pad(h, d).map_err(bad),
        "linear_interp_upsample" => Embedding::linear_interp_upsample(h, d).map_err(bad),
        "explicit_matrix" => {
            let m: Vec<f64> =
                r.list("embedding.matrix")?.ok_or_else(|| CliError::Config("missing key embedding.matrix".into()))?;
            if m.len() != d * h {
                return Err(CliError::Config(format!("embedding.matrix has {} entries, expected {d}x{h}", m.len())));
            }
            Embedding::explicit(DMatrix::from_row_slice(d, h, &m)).map_err(bad)
        }
        other => Err(CliError::Config(format!("embedding.kind: unknown kind {other:?}"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut r = Reader { entries: parse_entries(text)? };
        let name: String = r.or("experiment.name", "run".to_string())?;
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(CliError::Config(format!("experiment.name {name:?} is not a plain directory name")));
        }
        let mu = dataset(&mut r, "mu", 1)?;
        let nu = dataset(&mut r, "nu", 2)?;
        let (h, d) = (mu.kind.dim(), nu.kind.dim());
        let embedding = embedding(&mut r, h, d)?;
        let g = network(&mut r, "g", h, d, 3)?;
        let psi = network(&mut r, "psi", d, 1, 4)?;

        let base = TrainConfig::toy(0, 5);
        let regularizer: Regularizer = r.or("train.regularizer", base.regularizer)?;
        let default_lambda = if regularizer == Regularizer::None { 0.0 } else { base.lambda };
        let mut train = TrainConfig {
            batch_size: r.or("train.batch_size", base.batch_size)?,
            iterations: 0,
            k_g: r.or("train.k_g", base.k_g)?,
            k_psi: r.or("train.k_psi", base.k_psi)?,
            lr_g: r.or("train.lr_g", base.lr_g)?,
            lr_psi: r.or("train.lr_psi", base.lr_psi)?,
            beta1: r.or("train.beta1", base.beta1)?,
            beta2: r.or("train.beta2", base.beta2)?,
            regularizer,
            lambda: r.or("train.lambda", default_lambda)?,
            seed: r.or("train.seed", base.seed)?,
        };
        let iterations: Option<usize> = r.parse("train.iterations")?;
        let epochs: Option<usize> = r.parse("train.epochs")?;
        let dataset_size: usize = r.or("train.dataset_size", 10_000)?;
        let budget = match (iterations, epochs) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either train.iterations or train.epochs, not both".into()))
            }
            (Some(i), None) => Budget::Iterations(i),
            (None, e) => Budget::Epochs { epochs: e.unwrap_or(100), dataset_size },
        };
        train.iterations = match budget {
            Budget::Iterations(i) => i,
            Budget::Epochs { epochs, dataset_size } => train.iterations_for_epochs(epochs, dataset_size),
        };
        train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;

        let oracle = match r.or("eval.oracle", "auto".to_string())?.as_str() {
            "auto" => OracleSpec::Auto,
            "none" => OracleSpec::None,
            "affine" => {
                let matrix: Vec<f64> = r
                    .list("eval.oracle_matrix")?
                    .unwrap_or_else(|| (0..d * h).map(|i| if i / h == i % h { 1.0 } else { 0.0 }).collect());
                let offset: Vec<f64> = r.list("eval.oracle_offset")?.unwrap_or_else(|| vec![0.0; d]);
                if matrix.len() != d * h || offset.len() != d {
                    return Err(CliError::Config(format!("affine oracle needs a {d}x{h} matrix and a {d}-vector")));
                }
                OracleSpec::Affine { matrix, offset }
            }
            other => return Err(CliError::Config(format!("eval.oracle: unknown value {other:?}"))),
        };
        let eval = EvalSettings {
            samples: r.or("eval.samples", 10_000)?,
            w2_samples: r.or("eval.w2_samples", 400)?,
            period: r.or("eval.period", 0)?,
            seed: r.or("eval.seed", 0)?,
            w2_ratio_threshold: r.or("eval.w2_ratio_threshold", 0.15)?,
            oracle,
        };
        if eval.samples < d + 1 || eval.w2_samples == 0 {
            return Err(CliError::Config(format!(
                "eval.samples must exceed the dimension {d} and eval.w2_samples be positive"
            )));
        }
        let output_dir = PathBuf::from(r.or("output.dir", "runs".to_string())?);
        let record_wall_time = r.or("output.wall_time", false)?;

        if let Some((key, (line, _))) = r.entries.iter().next() {
            return Err(CliError::Config(format!("line {line}: unknown key {key}")));
        }
        Ok(Self { name, mu, nu, embedding, g, psi, train, budget, eval, output_dir, record_wall_time })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Output directory, with `OTM_OUTPUT_ROOT` taking precedence over `output.dir`.
    pub fn run_dir(&self) -> PathBuf {
        let root = std::env::var_os("OTM_OUTPUT_ROOT").map(PathBuf::from).unwrap_or_else(|| self.output_dir.clone());
        root.join(&self.name)
    }

    /// Every setting, defaults included, in a form [`RunConfig::parse`] reads back to an equal value.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        kv("experiment.name", self.name.clone());
        for (prefix, spec) in [("mu", &self.mu), ("nu", &self.nu)] {
            let write_kind = |kind: &DatasetKind, kv: &mut dyn FnMut(&str, String)| match kind {
                DatasetKind::Gaussian { mean, covariance } => {
                    kv(&format!("{prefix}.mean"), join(mean));
                    kv(&format!("{prefix}.covariance"), join(covariance));
                }
                DatasetKind::GaussianMixtureRing { components, radius, std } => {
                    kv(&format!("{prefix}.components"), components.to_string());
                    kv(&format!("{prefix}.radius"), format!("{radius:?}"));
                    kv(&format!("{prefix}.std"), format!("{std:?}"));
                }
                DatasetKind::TwoMoons { noise } | DatasetKind::SCurve { noise } => {
                    kv(&format!("{prefix}.noise"), format!("{noise:?}"));
                }
                DatasetKind::Circles { factor, noise } => {
                    kv(&format!("{prefix}.factor"), format!("{factor:?}"));
                    kv(&format!("{prefix}.noise"), format!("{noise:?}"));
                }
                DatasetKind::SwissRoll { noise, scale } => {
                    kv(&format!("{prefix}.noise"), format!("{noise:?}"));
                    kv(&format!("{prefix}.scale"), format!("{scale:?}"));
                }
                DatasetKind::Degraded { .. } => unreachable!("handled by the caller"),
            };
            kv(&format!("{prefix}.kind"), spec.kind.name().to_string());
            match &spec.kind {
                DatasetKind::Degraded { base, degradation } => {
                    kv(&format!("{prefix}.base"), base.name().to_string());
                    write_kind(base, &mut kv);
                    match degradation {
                        Degradation::AdditiveGaussian { sigma } => {
                            kv(&format!("{prefix}.degradation"), "additive_gaussian".into());
                            kv(&format!("{prefix}.sigma"), format!("{sigma:?}"));
                        }
                        Degradation::CoordinateMask { keep } => {
                            kv(&format!("{prefix}.degradation"), "coordinate_mask".into());
                            let bits: Vec<String> = keep.iter().map(|&b| u8::from(b).to_string()).collect();
                            kv(&format!("{prefix}.keep"), bits.join(", "));
                        }
                    }
                }
                other => write_kind(other, &mut kv),
            }
            kv(&format!("{prefix}.seed"), spec.seed.to_string());
        }
        let kind = match self.embedding.kind() {
            EmbeddingKind::Identity => "identity",
            EmbeddingKind::ZeroPad => "zero_pad",
            EmbeddingKind::LinearInterpUpsample => "linear_interp_upsample",
            EmbeddingKind::ExplicitMatrix => "explicit_matrix",
        };
        kv("embedding.kind", kind.into());
        if *self.embedding.kind() == EmbeddingKind::ExplicitMatrix {
            let m = self.embedding.matrix();
            let rows: Vec<f64> = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
            kv("embedding.matrix", join(&rows));
        }
        for (prefix, spec) in [("g", &self.g), ("psi", &self.psi)] {
            let hidden: Vec<String> = spec.hidden_dims.iter().map(|h| h.to_string()).collect();
            kv(&format!("{prefix}.hidden"), hidden.join(", "));
            kv(&format!("{prefix}.activation"), spec.activation.to_string());
            kv(&format!("{prefix}.seed"), spec.seed.to_string());
        }
        let t = &self.train;
        kv("train.batch_size", t.batch_size.to_string());
        match self.budget {
            Budget::Iterations(i) => kv("train.iterations", i.to_string()),
            Budget::Epochs { epochs, dataset_size } => {
                kv("train.epochs", epochs.to_string());
                kv("train.dataset_size", dataset_size.to_string());
            }
        }
        kv("train.k_g", t.k_g.to_string());
        kv("train.k_psi", t.k_psi.to_string());
        kv("train.lr_g", format!("{:?}", t.lr_g));
        kv("train.lr_psi", format!("{:?}", t.lr_psi));
        kv("train.beta1", format!("{:?}", t.beta1));
        kv("train.beta2", format!("{:?}", t.beta2));
        kv("train.regularizer", t.regularizer.to_string());
        kv("train.lambda", format!("{:?}", t.lambda));
        kv("train.seed", t.seed.to_string());
        let e = &self.eval;
        kv("eval.samples", e.samples.to_string());
        kv("eval.w2_samples", e.w2_samples.to_string());
        kv("eval.period", e.period.to_string());
        kv("eval.seed", e.seed.to_string());
        kv("eval.w2_ratio_threshold", format!("{:?}", e.w2_ratio_threshold));
        match &e.oracle {
            OracleSpec::Auto => kv("eval.oracle", "auto".into()),
            OracleSpec::None => kv("eval.oracle", "none".into()),
            OracleSpec::Affine { matrix, offset } => {
                kv("eval.oracle", "affine".into());
                kv("eval.oracle_matrix", join(matrix));
                kv("eval.oracle_offset", join(offset));
            }
        }
        kv("output.dir", self.output_dir.display().to_string());
        kv("output.wall_time", self.record_wall_time.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RING: &str = "
        experiment.name = ring
        mu.kind = gaussian
        nu.kind = gaussian_mixture_ring   # defaults: 8 components, radius 4
        train.iterations = 7
    ";

    #[test]
    fn defaults_follow_toy_settings() {
        let c = RunConfig::parse(RING).unwrap();
        assert_eq!(c.train.batch_size, 400);
        assert_eq!((c.train.k_psi, c.train.k_g), (1, 16));
        assert_eq!(c.train.lambda, 0.1);
        assert_eq!(c.train.iterations, 7);
        assert_eq!(c.g.hidden_dims, vec![128, 128, 128]);
        assert_eq!(c.embedding.kind(), &EmbeddingKind::Identity);
    }

    #[test]
    fn epochs_budget() {
        let c = RunConfig::parse("mu.kind = gaussian\nnu.kind = two_moons\ntrain.epochs = 100\n").unwrap();
        assert_eq!(c.train.iterations, 2500);
    }

    #[test]
    fn resolved_round_trips() {
        for text in [
            RING.to_string(),
            "mu.kind = degraded_pair\nmu.base = swiss_roll\nmu.sigma = 0.3\nnu.kind = swiss_roll\ntrain.regularizer = none\n".into(),
            "mu.kind = gaussian\nnu.kind = gaussian\nnu.mean = 1, 2, 3, 4\nembedding.kind = explicit_matrix\nembedding.matrix = 1,0,0,1,0,0,0,0\n".into(),
        ] {
            let c = RunConfig::parse(&text).unwrap();
            let again = RunConfig::parse(&c.resolved()).unwrap();
            assert_eq!(c, again);
            assert_eq!(c.resolved(), again.resolved());
        }
    }

    #[test]
    fn rejects_invalid() {
        for text in [
            "mu.kind = gaussian\nnu.kind = gaussian\ntrain.k_psi = 0\n",
            "mu.kind = gaussian\nnu.kind = gaussian\ntrain.k_g = 0\n",
            "mu.kind = gaussian\nnu.kind = gaussian\ntrian.k_g = 3\n",
            "mu.kind = gaussian\nnu.kind = gaussian\nnu.mean = 0,0,0\nembedding.kind = identity\n",
            "mu.kind = gaussian\nnu.kind = gaussian\ntrain.regularizer = none\ntrain.lambda = 0.1\n",
            "mu.kind = gaussian\nmu.kind = gaussian\nnu.kind = gaussian\n",
            "mu.kind = blob\nnu.kind = gaussian\n",
            "mu.kind = gaussian\nnu.kind = gaussian\nthis line has no equals sign\n",
            "mu.kind = gaussian\nnu.kind = gaussian\ntrain.epochs = 3\ntrain.iterations = 3\n",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn unequal_dimensions_default_to_zero_pad() {
        let c = RunConfig::parse("mu.kind = gaussian\nnu.kind = gaussian\nnu.mean = 1,0,0,0\n").unwrap();
        assert_eq!(c.embedding.kind(), &EmbeddingKind::ZeroPad);
        assert_eq!((c.g.input_dim, c.g.output_dim, c.psi.input_dim), (2, 4, 4));
    }
}
