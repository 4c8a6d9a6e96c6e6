//! Independent ground truth: Gaussian OT in closed form, exact discrete OT on
//! equal-size point sets, conjugates of quadratic potentials and a verifier
//! for the duality-gap error bound.
//!
//! All costs use the convention `c(x, y) = ½‖x − y‖²`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;

use crate::autodiff::{Graph, NodeId};
use crate::data::{DatasetKind, PointCloud, Sampler};
use crate::error::{Error, Result};
use crate::nets::{BoundNetwork, Network};
use crate::tensor::Tensor;

/// Eigenvalues above `-EIGEN_CLAMP` are treated as zero; below it a matrix is
/// not positive semi-definite.
pub const EIGEN_CLAMP: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{what} is {}x{}", m.nrows(), m.ncols())));
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * (1.0 + m[(i, j)].abs()) {
                return Err(Error::InvalidSpec(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let vals = eig.eigenvalues.map(f);
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigen().eigenvalues.min()
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m, "matrix")?;
    let lo = min_eigenvalue(m);
    if lo < -EIGEN_CLAMP {
        return Err(Error::Singular(format!("negative eigenvalue {lo:e}")));
    }
    Ok(spectral_map(m, |v| v.max(0.0).sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() {
            return Err(Error::Dimension { expected: mean.len(), got: covariance.nrows() });
        }
        check_symmetric(&covariance, "covariance")?;
        let lo = min_eigenvalue(&covariance);
        if lo < -EIGEN_CLAMP {
            return Err(Error::InvalidSpec(format!("covariance has eigenvalue {lo:e}")));
        }
        Ok(Self { mean, covariance: symmetrize(&covariance) })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: DVector::zeros(dim), covariance: DMatrix::identity(dim, dim) }
    }

    pub fn isotropic(mean: &[f64]) -> Self {
        let d = mean.len();
        Self { mean: DVector::from_column_slice(mean), covariance: DMatrix::identity(d, d) }
    }

    pub fn from_vecs(mean: &[f64], covariance: &[f64]) -> Result<Self> {
        let d = mean.len();
        if covariance.len() != d * d {
            return Err(Error::Shape(format!("{} covariance entries for dimension {d}", covariance.len())));
        }
        Self::new(DVector::from_column_slice(mean), DMatrix::from_row_slice(d, d, covariance))
    }

    /// Fits mean and unbiased covariance to a point cloud.
    pub fn fit(points: &PointCloud) -> Result<Self> {
        let d = points.dim();
        if points.len() < d + 1 {
            return Err(Error::InvalidSpec(format!("{} points cannot estimate a {d}-d covariance", points.len())));
        }
        Self::from_vecs(&points.mean(), &points.covariance())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn total_variance(&self) -> f64 {
        self.covariance.trace()
    }

    /// Law of `A x + b` for `x` drawn from this Gaussian.
    pub fn pushforward(&self, map: &AffineMap) -> Result<Gaussian> {
        if map.input_dim() != self.dim() {
            return Err(Error::Dimension { expected: map.input_dim(), got: self.dim() });
        }
        let mean = &map.matrix * &self.mean + &map.offset;
        let cov = &map.matrix * &self.covariance * map.matrix.transpose();
        Gaussian::new(mean, symmetrize(&cov))
    }

    pub fn dataset(&self) -> DatasetKind {
        let d = self.dim();
        let mut covariance = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                covariance.push(self.covariance[(i, j)]);
            }
        }
        DatasetKind::Gaussian { mean: self.mean.iter().copied().collect(), covariance }
    }

    pub fn sampler(&self, seed: u64) -> Sampler {
        Sampler::new(crate::data::DatasetSpec { kind: self.dataset(), seed })
            .expect("a valid Gaussian is a valid dataset")
    }
}

/// `T(x) = A x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != offset.len() {
            return Err(Error::Dimension { expected: matrix.nrows(), got: offset.len() });
        }
        Ok(Self { matrix, offset })
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim), offset: DVector::zeros(dim) }
    }

    pub fn translation(offset: &[f64]) -> Self {
        let d = offset.len();
        Self { matrix: DMatrix::identity(d, d), offset: DVector::from_column_slice(offset) }
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply_point(&self, x: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(x) + &self.offset
    }

    pub fn apply(&self, points: &PointCloud) -> Result<PointCloud> {
        if points.dim() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: points.dim() });
        }
        points.map_points(self.output_dim(), |x, out| {
            let y = self.apply_point(x);
            out.copy_from_slice(y.as_slice());
        })
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> Result<AffineMap> {
        if self.input_dim() != inner.output_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: inner.output_dim() });
        }
        AffineMap::new(&self.matrix * &inner.matrix, &self.matrix * &inner.offset + &self.offset)
    }
}

fn ot_matrix(mu: &Gaussian, nu: &Gaussian, pseudo_inverse: bool) -> Result<DMatrix<f64>> {
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension { expected: mu.dim(), got: nu.dim() });
    }
    let scale = mu.covariance.amax().max(1.0);
    let lo = min_eigenvalue(&mu.covariance);
    if !pseudo_inverse && lo <= 1e-12 * scale {
        return Err(Error::Singular(format!("source covariance has eigenvalue {lo:e}")));
    }
    let root = sqrtm_psd(&mu.covariance)?;
    let cutoff = 1e-12 * scale;
    let inv_root = spectral_map(&mu.covariance, |v| if v > cutoff { 1.0 / v.sqrt() } else { 0.0 });
    let middle = sqrtm_psd(&symmetrize(&(&root * &nu.covariance * &root)))?;
    Ok(symmetrize(&(&inv_root * middle * &inv_root)))
}

/// Optimal map `T*(x) = m_ν + A (x − m_μ)` between Gaussians with
/// `A = Σμ^{-1/2} (Σμ^{1/2} Σν Σμ^{1/2})^{1/2} Σμ^{-1/2}`.
pub fn gaussian_ot_map(mu: &Gaussian, nu: &Gaussian) -> Result<AffineMap> {
    let a = ot_matrix(mu, nu, false)?;
    let offset = &nu.mean - &a * &mu.mean;
    AffineMap::new(a, offset)
}

/// As [`gaussian_ot_map`] but with pseudo-inverse square roots, so a source
/// supported on a subspace is accepted. The map is only meaningful on that
/// subspace.
pub fn gaussian_ot_map_on_support(mu: &Gaussian, nu: &Gaussian) -> Result<AffineMap> {
    let a = ot_matrix(mu, nu, true)?;
    let offset = &nu.mean - &a * &mu.mean;
    AffineMap::new(a, offset)
}

/// `W2²(μ, ν) = ½(‖m_μ − m_ν‖² + tr(Σμ + Σν − 2(Σμ^{1/2} Σν Σμ^{1/2})^{1/2}))`.
pub fn gaussian_w2(mu: &Gaussian, nu: &Gaussian) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension { expected: mu.dim(), got: nu.dim() });
    }
    let root = sqrtm_psd(&mu.covariance)?;
    let cross = sqrtm_psd(&symmetrize(&(&root * &nu.covariance * &root)))?;
    let bures = mu.covariance.trace() + nu.covariance.trace() - 2.0 * cross.trace();
    let value = 0.5 * ((&mu.mean - &nu.mean).norm_squared() + bures);
    Ok(value.max(0.0))
}

/// An optimal matching between two equal-size clouds.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `permutation[i]` is the index in `Y` matched to `X[i]`.
    pub permutation: Vec<usize>,
    /// `(1/n) Σ ½‖x_i − y_π(i)‖²`.
    pub mean_cost: f64,
}

fn cost_matrix(x: &PointCloud, y: &PointCloud) -> Result<Vec<Vec<f64>>> {
    if x.len() != y.len() {
        return Err(Error::InvalidSpec(format!("cardinalities differ: {} vs {}", x.len(), y.len())));
    }
    if x.dim() != y.dim() {
        return Err(Error::Dimension { expected: x.dim(), got: y.dim() });
    }
    Ok(x.iter()
        .map(|a| y.iter().map(|b| 0.5 * a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()).collect())
        .collect())
}

fn mean_cost(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    if perm.is_empty() {
        return 0.0;
    }
    perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / perm.len() as f64
}

/// Largest `n` accepted by [`discrete_ot_exhaustive`].
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Tries all `n!` permutations in lexicographic order; the first minimum wins.
pub fn discrete_ot_exhaustive(x: &PointCloud, y: &PointCloud) -> Result<Assignment> {
    let cost = cost_matrix(x, y)?;
    let n = cost.len();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::InvalidSpec(format!("exhaustive search limited to n <= {EXHAUSTIVE_LIMIT}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = mean_cost(&cost, &perm);
    while next_permutation(&mut perm) {
        let c = mean_cost(&cost, &perm);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
    }
    Ok(Assignment { permutation: best, mean_cost: best_cost })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Hungarian method with row/column potentials and shortest augmenting
/// paths, `O(n³)`.
pub fn discrete_ot_hungarian(x: &PointCloud, y: &PointCloud) -> Result<Assignment> {
    let cost = cost_matrix(x, y)?;
    let permutation = hungarian(&cost);
    let mean_cost = mean_cost(&cost, &permutation);
    Ok(Assignment { permutation, mean_cost })
}

fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based with a virtual column 0; `row_of[j]` is the row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    perm
}

/// Exact OT between equal-weight clouds: exhaustive search for tiny inputs,
/// the Hungarian method otherwise.
pub fn discrete_ot(x: &PointCloud, y: &PointCloud) -> Result<Assignment> {
    if x.len() <= EXHAUSTIVE_LIMIT {
        discrete_ot_exhaustive(x, y)
    } else {
        discrete_ot_hungarian(x, y)
    }
}

/// `ψ(y) = ½ (y − c)ᵀ M (y − c) + constant` with `M ≻ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticPotential {
    curvature: DMatrix<f64>,
    center: DVector<f64>,
    constant: f64,
    strong_convexity: f64,
}

impl QuadraticPotential {
    pub fn new(curvature: DMatrix<f64>, center: DVector<f64>, constant: f64) -> Result<Self> {
        if curvature.nrows() != center.len() {
            return Err(Error::Dimension { expected: center.len(), got: curvature.nrows() });
        }
        check_symmetric(&curvature, "curvature")?;
        let beta = min_eigenvalue(&curvature);
        if beta <= 0.0 {
            return Err(Error::Singular(format!("curvature has eigenvalue {beta:e}")));
        }
        Ok(Self { curvature: symmetrize(&curvature), center, constant, strong_convexity: beta })
    }

    /// `½‖y − c‖²`.
    pub fn half_squared_distance(center: &[f64]) -> Self {
        let d = center.len();
        Self::new(DMatrix::identity(d, d), DVector::from_column_slice(center), 0.0)
            .expect("identity curvature is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    /// Smallest eigenvalue of `M`.
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    pub fn value(&self, y: &DVector<f64>) -> f64 {
        let d = y - &self.center;
        0.5 * d.dot(&(&self.curvature * &d)) + self.constant
    }

    /// `E ψ(y)` for `y ~ N(m, Σ)`.
    pub fn expectation(&self, law: &Gaussian) -> f64 {
        self.value(law.mean()) + 0.5 * (&self.curvature * law.covariance()).trace()
    }

    /// The pointwise conjugate maximizer `x ↦ c + M⁻¹ x` as an affine map.
    pub fn conjugate_argmax_map(&self) -> AffineMap {
        let inv = self.curvature.clone().try_inverse().expect("M is positive definite");
        AffineMap { matrix: inv, offset: self.center.clone() }
    }
}

/// `ψ̄(x) = sup_y ⟨x, y⟩ − ψ(y)`: returns the maximizer `c + M⁻¹x` and the value.
pub fn conjugate(psi: &QuadraticPotential, x: &[f64]) -> Result<(DVector<f64>, f64)> {
    if x.len() != psi.dim() {
        return Err(Error::Dimension { expected: psi.dim(), got: x.len() });
    }
    let x = DVector::from_column_slice(x);
    let step = psi.curvature.clone().cholesky().ok_or_else(|| Error::Singular("curvature".into()))?.solve(&x);
    let y = &psi.center + step;
    let value = x.dot(&y) - psi.value(&y);
    Ok((y, value))
}

/// Graph form of a [`QuadraticPotential`]; `M` and `c` become leaves.
#[derive(Clone, Debug)]
pub struct BoundQuadratic {
    params: Vec<NodeId>,
    ones: NodeId,
    constant: f64,
}

impl BoundNetwork for BoundQuadratic {
    fn params(&self) -> &[NodeId] {
        &self.params
    }

    fn forward(&self, graph: &mut Graph, y: NodeId) -> Result<NodeId> {
        let n = graph.value(y).rows();
        let centers = graph.broadcast_rows(self.params[1], n)?;
        let diff = graph.sub(y, centers)?;
        let md = graph.matmul(diff, self.params[0])?;
        let prod = graph.mul(md, diff)?;
        let quad = graph.matmul(prod, self.ones)?;
        graph.scale_shift(quad, 0.5, self.constant)
    }
}

impl Network for QuadraticPotential {
    type Bound = BoundQuadratic;

    fn input_dim(&self) -> usize {
        self.dim()
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn bind(&self, graph: &mut Graph) -> Result<BoundQuadratic> {
        let d = self.dim();
        let m = graph.leaf(Tensor::matrix(d, d, self.curvature.transpose().as_slice().to_vec())?)?;
        let c = graph.leaf(Tensor::vector(self.center.as_slice().to_vec()))?;
        let ones = graph.leaf(Tensor::filled(&[d, 1], 1.0))?;
        Ok(BoundQuadratic { params: vec![m, c], ones, constant: self.constant })
    }
}

/// Outcome of [`verify_bound`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub beta: f64,
    /// `2·W2²(Ĝ#μ, ν)`, exact because the pushforward is Gaussian.
    pub twice_w2_sq: f64,
    /// Gaussian Fréchet distance between `Ĝ#μ` and `ν`.
    pub frechet: f64,
    /// `‖Ĝ − G*‖²` in `L²(μ)`.
    pub map_error: f64,
    /// `(2/β)(√ε₁ + √ε₂)²`.
    pub bound: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Samples whose empirical mean and covariance (1/n normalization) equal the
/// law's exactly, so averages of quadratic integrands are exact.
fn moment_matched_samples(law: &Gaussian, n: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let d = law.dim();
    if n <= d {
        return Err(Error::InvalidSpec(format!("need more than {d} Monte-Carlo samples")));
    }
    let std = Gaussian::standard(d).sampler(seed).sample(n, 0);
    let z: Vec<DVector<f64>> = std.iter().map(DVector::from_column_slice).collect();
    let mean = z.iter().fold(DVector::zeros(d), |acc, v| acc + v) / n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in &z {
        let c = v - &mean;
        cov += &c * c.transpose();
    }
    cov /= n as f64;
    let whiten = spectral_map(&cov, |v| 1.0 / v.sqrt());
    let colour = sqrtm_psd(law.covariance())?;
    let t = colour * whiten;
    Ok(z.iter().map(|v| law.mean() + &t * (v - &mean)).collect())
}

/// Evaluates every term of the error bound for a quadratic `ψ̂` and an affine
/// `Ĝ` between Gaussians `μ` (on `R^H`) and `ν` (on `R^D`), with linear
/// embedding `q` (`D x H`; identity when `None`).
pub fn verify_bound(
    mu: &Gaussian,
    nu: &Gaussian,
    psi_hat: &QuadraticPotential,
    g_hat: &AffineMap,
    q: Option<&DMatrix<f64>>,
    n_mc: usize,
    seed: u64,
) -> Result<BoundReport> {
    const TOL: f64 = 1e-3;
    let (h, d) = (mu.dim(), nu.dim());
    let q = match q {
        Some(q) => q.clone(),
        None if h == d => DMatrix::identity(d, d),
        None => return Err(Error::Dimension { expected: d, got: h }),
    };
    if q.shape() != (d, h) || psi_hat.dim() != d || g_hat.input_dim() != h || g_hat.output_dim() != d {
        return Err(Error::Shape("bound verifier inputs disagree on dimensions".into()));
    }
    let embed = AffineMap { matrix: q, offset: DVector::zeros(d) };
    let embedded_mu = mu.pushforward(&embed)?;
    let g_star = if h == d && embed.matrix == DMatrix::identity(d, d) {
        gaussian_ot_map(mu, nu)?
    } else {
        gaussian_ot_map_on_support(&embedded_mu, nu)?.compose(&embed)?
    };
    let g_prime = psi_hat.conjugate_argmax_map().compose(&embed)?;

    let xs = moment_matched_samples(mu, n_mc, seed)?;
    let n = xs.len() as f64;
    let nu_term = psi_hat.expectation(nu);
    let objective = |g: &AffineMap| -> f64 {
        xs.iter()
            .map(|x| {
                let qx = &embed.matrix * x;
                let gx = &g.matrix * x + &g.offset;
                qx.dot(&gx) - psi_hat.value(&gx)
            })
            .sum::<f64>()
            / n
            + nu_term
    };
    let l_prime = objective(&g_prime);
    let l_hat = objective(g_hat);
    let inf_sup = xs.iter().map(|x| (&embed.matrix * x).dot(&(&g_star.matrix * x + &g_star.offset))).sum::<f64>() / n;
    let epsilon1 = l_prime - l_hat;
    let epsilon2 = l_prime - inf_sup;
    for (name, value) in [("epsilon1", epsilon1), ("epsilon2", epsilon2)] {
        if value < -TOL {
            return Err(Error::NegativeGap { name, value });
        }
    }
    let (epsilon1, epsilon2) = (epsilon1.max(0.0), epsilon2.max(0.0));

    let map_error = xs
        .iter()
        .map(|x| ((&g_hat.matrix - &g_star.matrix) * x + &g_hat.offset - &g_star.offset).norm_squared())
        .sum::<f64>()
        / n;
    let pushed = mu.pushforward(g_hat)?;
    let twice_w2_sq = 2.0 * gaussian_w2(&pushed, nu)?;
    let beta = psi_hat.strong_convexity();
    let bound = 2.0 / beta * (epsilon1.sqrt() + epsilon2.sqrt()).powi(2);
    let holds = twice_w2_sq <= map_error + TOL && map_error <= bound + TOL;
    Ok(BoundReport {
        epsilon1,
        epsilon2,
        beta,
        twice_w2_sq,
        frechet: twice_w2_sq,
        map_error,
        bound,
        tolerance: TOL,
        holds,
    })
}

/// Seeded standard-normal matrix, used for random test configurations.
pub fn random_spd(dim: usize, seed: u64, floor: f64) -> DMatrix<f64> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    symmetrize(&(&a * a.transpose() + DMatrix::identity(dim, dim) * floor))
}
