//! Evaluation of fitted maps.

use nalgebra::{DMatrix, DVector};

use crate::data::PointCloud;
use crate::error::{Error, Result};
use crate::nets::{self, Network};
use crate::oracle::{self, Gaussian};
use crate::otm::Embedding;

/// `100 · mean ‖Ĝ(x) − T*(x)‖² / Var(ν)`, given both maps evaluated on the same μ-samples.
pub fn l2_uvp(fitted: &PointCloud, reference: &PointCloud, nu_variance: f64) -> Result<f64> {
    if nu_variance.is_nan() || nu_variance <= 0.0 {
        return Err(Error::InvalidSpec(format!("target variance must be positive, got {nu_variance}")));
    }
    if fitted.len() != reference.len() || fitted.dim() != reference.dim() {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            fitted.len(),
            fitted.dim(),
            reference.len(),
            reference.dim()
        )));
    }
    if fitted.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let total: f64 = fitted
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
        .sum();
    Ok(100.0 * total / fitted.len() as f64 / nu_variance)
}

/// [`l2_uvp`] for a network against a reference map.
pub fn l2_uvp_of<N: Network>(
    g: &N,
    reference: impl Fn(&PointCloud) -> Result<PointCloud>,
    mu_samples: &PointCloud,
    nu_variance: f64,
) -> Result<f64> {
    l2_uvp(&nets::apply(g, mu_samples)?, &reference(mu_samples)?, nu_variance)
}

/// Either a fitted cloud or a known law.
#[derive(Clone, Copy, Debug)]
pub enum Moments<'a> {
    Cloud(&'a PointCloud),
    Law(&'a Gaussian),
}

impl<'a> From<&'a PointCloud> for Moments<'a> {
    fn from(c: &'a PointCloud) -> Self {
        Moments::Cloud(c)
    }
}

impl<'a> From<&'a Gaussian> for Moments<'a> {
    fn from(g: &'a Gaussian) -> Self {
        Moments::Law(g)
    }
}

fn moments(m: Moments<'_>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    match m {
        Moments::Law(g) => Ok((g.mean().clone(), g.covariance().clone())),
        Moments::Cloud(c) => {
            let g = Gaussian::fit(c)?;
            Ok((g.mean().clone(), g.covariance().clone()))
        }
    }
}

/// `tr (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2}`, computed from a Cholesky factor of `Σ₁`
/// (`LᵀΣ₂L` shares its spectrum with `Σ₁^{1/2}Σ₂Σ₁^{1/2}`).
fn cross_trace(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let inner = match s1.clone().cholesky() {
        Some(ch) => {
            let l = ch.l();
            l.transpose() * s2 * l
        }
        None => {
            let r = oracle::sqrtm_psd(s1)?;
            &r * s2 * &r
        }
    };
    let inner = (&inner + inner.transpose()) * 0.5;
    Ok(inner.symmetric_eigenvalues().iter().map(|&e| e.max(0.0).sqrt()).sum())
}

/// Gaussian Fréchet distance `‖m₁−m₂‖² + tr(Σ₁+Σ₂−2(Σ₁^{1/2}Σ₂Σ₁^{1/2})^{1/2})`.
/// Clouds are summarized by their mean and unbiased covariance.
pub fn frechet_gaussian<'a, 'b>(a: impl Into<Moments<'a>>, b: impl Into<Moments<'b>>) -> Result<f64> {
    let (m1, s1) = moments(a.into())?;
    let (m2, s2) = moments(b.into())?;
    if m1.len() != m2.len() {
        return Err(Error::Dimension { expected: m1.len(), got: m2.len() });
    }
    let cross = cross_trace(&s1, &s2)?;
    let value = (&m1 - &m2).norm_squared() + s1.trace() + s2.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

/// `mean ½‖Q(x) − G(x)‖²`.
pub fn empirical_transport_cost<N: Network>(g: &N, q: &Embedding, x: &PointCloud) -> Result<f64> {
    let mapped = nets::apply(g, x)?;
    let embedded = q.embed(x)?;
    half_mean_squared(&embedded, &mapped)
}

/// `mean ½‖a_i − b_i‖²` under the identity pairing.
pub fn paired_cost(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    half_mean_squared(a, b)
}

fn half_mean_squared(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.dim(), got: b.dim() });
    }
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} points", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let total: f64 =
        a.iter().zip(b.iter()).map(|(u, v)| 0.5 * u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()).sum();
    Ok(total / a.len() as f64)
}

/// Optimal mean matching cost between two equal-size clouds.
pub fn empirical_w2(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    Ok(oracle::discrete_ot(x, y)?.mean_cost)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub iteration: Option<usize>,
    pub l2_uvp_percent: Option<f64>,
    pub empirical_transport_cost: f64,
    pub empirical_w2_pushforward_vs_target: f64,
    /// Same statistic for the untransported inputs; the baseline for relative fits.
    pub empirical_w2_input_vs_target: Option<f64>,
    pub frechet_gaussian: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "iter,l2_uvp_percent,empirical_transport_cost,\
empirical_w2_pushforward_vs_target,empirical_w2_input_vs_target,frechet_gaussian,sample_count,seed";

    /// One CSV row in [`Self::CSV_HEADER`] order; absent values are empty fields.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        format!(
            "{},{},{:?},{:?},{},{:?},{},{}",
            self.iteration.map(|i| i.to_string()).unwrap_or_default(),
            opt(self.l2_uvp_percent),
            self.empirical_transport_cost,
            self.empirical_w2_pushforward_vs_target,
            opt(self.empirical_w2_input_vs_target),
            self.frechet_gaussian,
            self.sample_count,
            self.seed
        )
    }
}
