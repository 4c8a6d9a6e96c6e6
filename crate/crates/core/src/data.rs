//! Point clouds and seeded synthetic distributions.
//!
//! Every sampler is an infinite deterministic stream: point `i` of a stream
//! is drawn from its own generator seeded by `(seed, i)`, so any window of
//! the stream can be produced independently and windows concatenate.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A batch of `n` points in `R^dim`, stored as an `n x dim` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Tensor,
}

impl PointCloud {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("point dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values do not split into {dim}-d points", data.len())));
        }
        Self::from_tensor(Tensor::matrix(data.len() / dim, dim, data)?)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_tensor(Tensor::from_rows(rows)?)
    }

    pub fn from_tensor(points: Tensor) -> Result<Self> {
        if points.rank() != 2 {
            return Err(Error::Shape(format!("point cloud needs a matrix, got {:?}", points.shape())));
        }
        if !points.is_finite() {
            return Err(Error::InvalidSpec("point cloud contains non-finite values".into()));
        }
        Ok(Self { points })
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.points
    }

    pub fn into_tensor(self) -> Tensor {
        self.points
    }

    /// Applies `f` to every point, producing points of dimension `out_dim`.
    pub fn map_points(&self, out_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut data = vec![0.0; self.len() * out_dim];
        for (i, chunk) in data.chunks_mut(out_dim).enumerate() {
            f(self.point(i), chunk);
        }
        Self::new(out_dim, data)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for p in self.iter() {
            for (a, b) in m.iter_mut().zip(p) {
                *a += b;
            }
        }
        let n = self.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Covariance matrix (row-major `dim x dim`), unbiased (`n - 1`) normalization.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let m = self.mean();
        let mut c = vec![0.0; d * d];
        for p in self.iter() {
            for i in 0..d {
                for j in 0..d {
                    c[i * d + j] += (p[i] - m[i]) * (p[j] - m[j]);
                }
            }
        }
        let denom = (self.len() as f64 - 1.0).max(1.0);
        c.iter_mut().for_each(|v| *v /= denom);
        c
    }

    /// Stacks two clouds of the same dimension.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: other.dim() });
        }
        let mut data = self.points.data().to_vec();
        data.extend_from_slice(other.points.data());
        Self::new(self.dim(), data)
    }
}

/// Corruption applied by [`DatasetKind::Degraded`].
#[derive(Clone, Debug, PartialEq)]
pub enum Degradation {
    /// i.i.d. `N(0, sigma^2 I)` noise.
    AdditiveGaussian { sigma: f64 },
    /// Coordinates whose mask entry is `false` are zeroed.
    CoordinateMask { keep: Vec<bool> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetKind {
    Gaussian { mean: Vec<f64>, covariance: Vec<f64> },
    GaussianMixtureRing { components: usize, radius: f64, std: f64 },
    TwoMoons { noise: f64 },
    Circles { factor: f64, noise: f64 },
    SCurve { noise: f64 },
    SwissRoll { noise: f64, scale: f64 },
    Degraded { base: Box<DatasetKind>, degradation: Degradation },
}

impl DatasetKind {
    pub fn standard_gaussian(dim: usize) -> Self {
        let mut covariance = vec![0.0; dim * dim];
        for i in 0..dim {
            covariance[i * dim + i] = 1.0;
        }
        DatasetKind::Gaussian { mean: vec![0.0; dim], covariance }
    }

    /// Eight components on a circle of radius 4 with standard deviation 0.4.
    pub fn ring() -> Self {
        DatasetKind::GaussianMixtureRing { components: 8, radius: 4.0, std: 0.4 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Gaussian { .. } => "gaussian",
            DatasetKind::GaussianMixtureRing { .. } => "gaussian_mixture_ring",
            DatasetKind::TwoMoons { .. } => "two_moons",
            DatasetKind::Circles { .. } => "circles",
            DatasetKind::SCurve { .. } => "s_curve",
            DatasetKind::SwissRoll { .. } => "swiss_roll",
            DatasetKind::Degraded { .. } => "degraded_pair",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetKind::Gaussian { mean, .. } => mean.len(),
            DatasetKind::Degraded { base, .. } => base.dim(),
            _ => 2,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                bad(format!("{name} must be a nonnegative number, got {v}"))
            }
        };
        match self {
            DatasetKind::Gaussian { mean, covariance } => {
                let d = mean.len();
                if d == 0 || covariance.len() != d * d {
                    return bad(format!("gaussian mean of length {d} needs a {d}x{d} covariance"));
                }
                if mean.iter().chain(covariance).any(|v| !v.is_finite()) {
                    return bad("gaussian parameters must be finite".into());
                }
                for i in 0..d {
                    for j in 0..i {
                        if (covariance[i * d + j] - covariance[j * d + i]).abs() > 1e-12 {
                            return bad("gaussian covariance must be symmetric".into());
                        }
                    }
                }
                Ok(())
            }
            DatasetKind::GaussianMixtureRing { components, radius, std } => {
                if *components == 0 {
                    return bad("ring needs at least one component".into());
                }
                nonneg("ring radius", *radius)?;
                nonneg("ring std", *std)
            }
            DatasetKind::TwoMoons { noise } | DatasetKind::SCurve { noise } => nonneg("noise", *noise),
            DatasetKind::Circles { factor, noise } => {
                if !(*factor > 0.0 && *factor < 1.0) {
                    return bad(format!("circle factor must lie in (0, 1), got {factor}"));
                }
                nonneg("noise", *noise)
            }
            DatasetKind::SwissRoll { noise, scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return bad(format!("swiss roll scale must be positive, got {scale}"));
                }
                nonneg("noise", *noise)
            }
            DatasetKind::Degraded { base, degradation } => {
                if matches!(**base, DatasetKind::Degraded { .. }) {
                    return bad("degradations do not nest".into());
                }
                base.validate()?;
                match degradation {
                    Degradation::AdditiveGaussian { sigma } => nonneg("sigma", *sigma),
                    Degradation::CoordinateMask { keep } if keep.len() != base.dim() => {
                        bad(format!("mask of length {} for {}-d data", keep.len(), base.dim()))
                    }
                    Degradation::CoordinateMask { .. } => Ok(()),
                }
            }
        }
    }
}

/// A seeded distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub seed: u64,
}

/// Prepared sampler: validated parameters and any factorizations they need.
#[derive(Clone, Debug)]
pub struct Sampler {
    spec: DatasetSpec,
    gaussian_factor: Option<Vec<f64>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn point_rng(seed: u64, position: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed) ^ position))
}

/// Symmetric square-root factor `L` with `L L^T = cov`, negative eigenvalues clamped.
fn covariance_factor(cov: &[f64], d: usize) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_row_slice(d, d, cov);
    let eig = m.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let l = &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = l[(i, j)];
        }
    }
    out
}

impl Sampler {
    pub fn new(spec: DatasetSpec) -> Result<Self> {
        spec.kind.validate()?;
        let gaussian_factor = match &spec.kind {
            DatasetKind::Gaussian { mean, covariance } => Some(covariance_factor(covariance, mean.len())),
            DatasetKind::Degraded { base, .. } => match base.as_ref() {
                DatasetKind::Gaussian { mean, covariance } => Some(covariance_factor(covariance, mean.len())),
                _ => None,
            },
            _ => None,
        };
        Ok(Self { spec, gaussian_factor })
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.kind.dim()
    }

    /// Points `position .. position + n` of the stream.
    pub fn sample(&self, n: usize, position: u64) -> PointCloud {
        let d = self.dim();
        let mut data = vec![0.0; n * d];
        for (i, out) in data.chunks_mut(d).enumerate() {
            let mut rng = point_rng(self.spec.seed, position + i as u64);
            self.draw(&self.spec.kind, &mut rng, out);
        }
        PointCloud::new(d, data).expect("samplers produce finite points")
    }

    fn draw(&self, kind: &DatasetKind, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        match kind {
            DatasetKind::Gaussian { mean, .. } => {
                let d = mean.len();
                let l = self.gaussian_factor.as_ref().expect("prepared in new");
                let z: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
                for i in 0..d {
                    out[i] = mean[i] + (0..d).map(|j| l[i * d + j] * z[j]).sum::<f64>();
                }
            }
            DatasetKind::GaussianMixtureRing { components, radius, std } => {
                let k = rng.random_range(0..*components);
                let angle = 2.0 * PI * k as f64 / *components as f64;
                out[0] = radius * angle.cos() + std * normal(rng);
                out[1] = radius * angle.sin() + std * normal(rng);
            }
            DatasetKind::TwoMoons { noise } => {
                let t = PI * rng.random::<f64>();
                if rng.random::<bool>() {
                    out[0] = t.cos();
                    out[1] = t.sin();
                } else {
                    out[0] = 1.0 - t.cos();
                    out[1] = 0.5 - t.sin();
                }
                out[0] += noise * normal(rng);
                out[1] += noise * normal(rng);
            }
            DatasetKind::Circles { factor, noise } => {
                let t = 2.0 * PI * rng.random::<f64>();
                let r = if rng.random::<bool>() { 1.0 } else { *factor };
                out[0] = r * t.cos() + noise * normal(rng);
                out[1] = r * t.sin() + noise * normal(rng);
            }
            DatasetKind::SCurve { noise } => {
                // Curved coordinates of the 3-d S-curve; the extruded axis is dropped.
                let t = 3.0 * PI * (rng.random::<f64>() - 0.5);
                out[0] = t.sin() + noise * normal(rng);
                out[1] = t.signum() * (t.cos() - 1.0) + noise * normal(rng);
            }
            DatasetKind::SwissRoll { noise, scale } => {
                let t = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
                out[0] = scale * (t * t.cos() + noise * normal(rng));
                out[1] = scale * (t * t.sin() + noise * normal(rng));
            }
            DatasetKind::Degraded { base, degradation } => {
                self.draw(base, rng, out);
                match degradation {
                    Degradation::AdditiveGaussian { sigma } => {
                        // Noise comes from a separate generator so that the base
                        // point matches the clean stream at the same position.
                        let mut noise_rng = ChaCha8Rng::seed_from_u64(splitmix64(rng.random::<u64>() ^ 0xD1B5));
                        for v in out.iter_mut() {
                            *v += sigma * normal(&mut noise_rng);
                        }
                    }
                    Degradation::CoordinateMask { keep } => {
                        for (v, &k) in out.iter_mut().zip(keep) {
                            if !k {
                                *v = 0.0;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Total variance `tr Cov` when it is known in closed form.
    pub fn analytic_total_variance(&self) -> Option<f64> {
        match &self.spec.kind {
            DatasetKind::Gaussian { mean, covariance } => {
                let d = mean.len();
                Some((0..d).map(|i| covariance[i * d + i]).sum())
            }
            DatasetKind::GaussianMixtureRing { components, radius, std } => {
                // Centers are equally spaced, so their mean is the origin for k >= 2.
                if *components >= 2 {
                    Some(radius * radius + 2.0 * std * std)
                } else {
                    Some(2.0 * std * std)
                }
            }
            _ => None,
        }
    }
}

/// Convenience: validated sampler for a kind and seed.
pub fn sampler(kind: DatasetKind, seed: u64) -> Result<Sampler> {
    Sampler::new(DatasetSpec { kind, seed })
}

/// `n` points starting at `position` of the stream described by `spec`.
pub fn sample(spec: &DatasetSpec, n: usize, position: u64) -> Result<PointCloud> {
    Ok(Sampler::new(spec.clone())?.sample(n, position))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_degradation_matches_base() {
        let base = DatasetKind::SwissRoll { noise: 0.0, scale: 1.0 };
        let clean = sampler(base.clone(), 5).unwrap().sample(50, 100);
        let degraded = sampler(
            DatasetKind::Degraded { base: Box::new(base), degradation: Degradation::AdditiveGaussian { sigma: 0.0 } },
            5,
        )
        .unwrap()
        .sample(50, 100);
        assert_eq!(clean, degraded);
    }

    #[test]
    fn degraded_points_sit_near_their_clean_twins() {
        let base = DatasetKind::TwoMoons { noise: 0.05 };
        let clean = sampler(base.clone(), 1).unwrap().sample(200, 0);
        let noisy = sampler(
            DatasetKind::Degraded { base: Box::new(base), degradation: Degradation::AdditiveGaussian { sigma: 0.3 } },
            1,
        )
        .unwrap()
        .sample(200, 0);
        let msd: f64 = clean
            .iter()
            .zip(noisy.iter())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
            .sum::<f64>()
            / 200.0;
        // E||noise||^2 = 2 * 0.09
        assert!((msd - 0.18).abs() < 0.05, "mean squared displacement {msd}");
    }

    #[test]
    fn coordinate_mask_zeroes_coordinates() {
        let spec = DatasetKind::Degraded {
            base: Box::new(DatasetKind::standard_gaussian(3)),
            degradation: Degradation::CoordinateMask { keep: vec![true, false, true] },
        };
        let x = sampler(spec, 2).unwrap().sample(10, 0);
        assert!(x.iter().all(|p| p[1] == 0.0 && p[0] != 0.0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for kind in [
            DatasetKind::Gaussian { mean: vec![0.0, 0.0], covariance: vec![1.0, 0.0, 0.0] },
            DatasetKind::Gaussian { mean: vec![0.0, 0.0], covariance: vec![1.0, 0.5, 0.0, 1.0] },
            DatasetKind::GaussianMixtureRing { components: 0, radius: 1.0, std: 0.1 },
            DatasetKind::Circles { factor: 1.5, noise: 0.0 },
            DatasetKind::TwoMoons { noise: -1.0 },
            DatasetKind::SwissRoll { noise: 0.0, scale: 0.0 },
            DatasetKind::Degraded {
                base: Box::new(DatasetKind::TwoMoons { noise: 0.0 }),
                degradation: Degradation::CoordinateMask { keep: vec![true] },
            },
        ] {
            assert!(sampler(kind.clone(), 0).is_err(), "{kind:?} accepted");
        }
    }

    #[test]
    fn toy_kinds_are_planar() {
        for kind in [
            DatasetKind::ring(),
            DatasetKind::TwoMoons { noise: 0.1 },
            DatasetKind::Circles { factor: 0.5, noise: 0.05 },
            DatasetKind::SCurve { noise: 0.1 },
            DatasetKind::SwissRoll { noise: 0.1, scale: 0.5 },
        ] {
            let s = sampler(kind, 3).unwrap();
            assert_eq!(s.dim(), 2);
            assert_eq!(s.sample(7, 0).len(), 7);
        }
    }

    #[test]
    fn point_cloud_statistics() {
        let c = PointCloud::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0], vec![4.0, 1.0]]).unwrap();
        assert_eq!(c.mean(), vec![2.0, 1.0]);
        let cov = c.covariance();
        assert_eq!(cov[0], 4.0);
        assert_eq!(cov[1], cov[2]);
        assert!(PointCloud::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(PointCloud::new(1, vec![f64::INFINITY]).is_err());
    }
}
