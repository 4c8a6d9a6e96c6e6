use nalgebra::DMatrix;
use otm_core::autodiff::Graph;
use otm_core::data::{self, DatasetKind, PointCloud};
use otm_core::metrics;
use otm_core::nets::{self, Activation, Layer, Mlp, MlpSpec};
use otm_core::optim::{AdamConfig, AdamState};
use otm_core::oracle::{self, Gaussian};
use otm_core::Tensor;
use proptest::prelude::*;

fn cloud(n: usize, dim: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(-3.0..3.0f64, n * dim).prop_map(move |v| PointCloud::new(dim, v).unwrap())
}

fn gaussian(seed: u64) -> Gaussian {
    let mean: Vec<f64> = Gaussian::standard(3).sampler(seed).sample(1, 0).point(0).to_vec();
    Gaussian::new(mean.into(), oracle::random_spd(3, seed, 0.05)).unwrap()
}

/// Powers of two keep scaling exact, so linearity can be checked bit for bit.
fn power_of_two() -> impl Strategy<Value = f64> {
    (-4i32..5, any::<bool>()).prop_map(|(e, neg)| if neg { -(2f64.powi(e)) } else { 2f64.powi(e) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_linear(x in prop::collection::vec(-2.0..2.0f64, 12), w in prop::collection::vec(-2.0..2.0f64, 12),
                          alpha in power_of_two(), beta in power_of_two()) {
        let xt = Tensor::matrix(3, 4, x).unwrap();
        let wt = Tensor::matrix(3, 4, w).unwrap();
        let parts = |g: &mut Graph, x| {
            let w = g.leaf(wt.clone()).unwrap();
            let t = g.tanh(x).unwrap();
            let f = g.dot(t, w).unwrap();
            let h = g.norm_squared(x).unwrap();
            (f, h)
        };
        let mut g = Graph::new();
        let x = g.leaf(xt.clone()).unwrap();
        let (f, h) = parts(&mut g, x);
        let df = g.gradient(f, &[x]).unwrap().remove(0);
        let dh = g.gradient(h, &[x]).unwrap().remove(0);

        let mut g = Graph::new();
        let x = g.leaf(xt).unwrap();
        let (f, h) = parts(&mut g, x);
        let af = g.scale(f, alpha).unwrap();
        let bh = g.scale(h, beta).unwrap();
        let sum = g.add(af, bh).unwrap();
        let combined = g.gradient(sum, &[x]).unwrap().remove(0);
        let expected = df.zip_map(&dh, |a, b| alpha * a + beta * b);
        prop_assert_eq!(combined, expected);
    }

    #[test]
    fn evaluation_is_deterministic(x in prop::collection::vec(-2.0..2.0f64, 8)) {
        let run = || {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::matrix(4, 2, x.clone()).unwrap()).unwrap();
            let l = g.leaky_relu(x, 0.01).unwrap();
            let n = g.row_norms(l).unwrap();
            let s = g.sum(n).unwrap();
            let grad = g.gradient(s, &[x]).unwrap();
            (g.evaluate(s).unwrap(), grad)
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(a.0.item().to_bits(), b.0.item().to_bits());
        prop_assert_eq!(a.1, b.1);
    }

    #[test]
    fn stream_splits_agree(seed in any::<u64>(), position in 0u64..1 << 40, n in 0usize..20, m in 0usize..20) {
        let s = data::sampler(DatasetKind::ring(), seed).unwrap();
        let whole = s.sample(n + m, position);
        let head = s.sample(n, position);
        let tail = s.sample(m, position + n as u64);
        prop_assert_eq!(head.concat(&tail).unwrap(), whole);
    }

    #[test]
    fn gaussian_distances_are_symmetric(a in any::<u64>(), b in any::<u64>()) {
        let (p, q) = (gaussian(a), gaussian(b));
        let w_pq = oracle::gaussian_w2(&p, &q).unwrap();
        let w_qp = oracle::gaussian_w2(&q, &p).unwrap();
        prop_assert!((w_pq - w_qp).abs() <= 1e-10 * w_pq.max(1.0));
        let f_pq = metrics::frechet_gaussian(&p, &q).unwrap();
        let f_qp = metrics::frechet_gaussian(&q, &p).unwrap();
        prop_assert!((f_pq - f_qp).abs() <= 1e-10 * f_pq.max(1.0));
    }

    #[test]
    fn sqrtm_squares_back(seed in any::<u64>(), dim in 1usize..6) {
        let m = oracle::random_spd(dim, seed, 1e-3);
        let r = oracle::sqrtm_psd(&m).unwrap();
        prop_assert!((&r * &r - &m).norm() < 1e-9);
    }

    #[test]
    fn uvp_ignores_shared_perturbation(a in cloud(10, 2), b in cloud(10, 2), h in cloud(10, 2)) {
        let add = |c: &PointCloud| {
            let data = c.as_tensor().zip_map(h.as_tensor(), |u, v| u + v);
            PointCloud::from_tensor(data).unwrap()
        };
        let base = metrics::l2_uvp(&a, &b, 1.7).unwrap();
        let moved = metrics::l2_uvp(&add(&a), &add(&b), 1.7).unwrap();
        prop_assert!((base - moved).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn optimal_matching_beats_fixed_pairings(x in cloud(12, 2), y in cloud(12, 2), shift in 0usize..12) {
        let best = metrics::empirical_w2(&x, &y).unwrap();
        prop_assert!(best <= metrics::paired_cost(&x, &y).unwrap() + 1e-12);
        let rotated: Vec<Vec<f64>> = (0..12).map(|i| y.point((i + shift) % 12).to_vec()).collect();
        let rotated = PointCloud::from_rows(&rotated).unwrap();
        prop_assert!(best <= metrics::paired_cost(&x, &rotated).unwrap() + 1e-12);
    }

    #[test]
    fn assignment_matches_exhaustive(x in cloud(6, 2), y in cloud(6, 2)) {
        let a = oracle::discrete_ot_exhaustive(&x, &y).unwrap();
        let b = oracle::discrete_ot_hungarian(&x, &y).unwrap();
        prop_assert!((a.mean_cost - b.mean_cost).abs() <= 1e-12);
    }

    #[test]
    fn adam_first_step_is_learning_rate(g in prop::num::f64::NORMAL.prop_filter("moderate", |g| (1e-3..1e6).contains(&g.abs()))) {
        let config = AdamConfig { learning_rate: 1e-3, beta1: 0.5, beta2: 0.99, ..AdamConfig::default() };
        let mut theta = Tensor::scalar(0.0);
        let mut state = AdamState::new(config, [&theta]).unwrap();
        state.step(&mut [&mut theta], &[Tensor::scalar(g)]).unwrap();
        prop_assert!((theta.item().abs() - 1e-3).abs() < 1e-8);
        prop_assert_eq!(theta.item().signum(), -g.signum());
    }

    #[test]
    fn linear_configuration_is_homogeneous(seed in any::<u64>(), alpha in 0.01..10.0f64, x in cloud(5, 3)) {
        let spec = MlpSpec {
            input_dim: 3,
            hidden_dims: vec![8, 8],
            output_dim: 2,
            activation: Activation::LeakyRelu { negative_slope: 1.0 },
            seed,
        };
        let init = Mlp::init(spec.clone()).unwrap();
        let layers = init
            .layers()
            .iter()
            .map(|l| Layer { weight: l.weight.clone(), bias: Tensor::zeros(l.bias.shape()) })
            .collect();
        let net = Mlp::from_layers(spec, layers).unwrap();
        let scaled = PointCloud::from_tensor(x.as_tensor().map(|v| alpha * v)).unwrap();
        let lhs = nets::apply(&net, &scaled).unwrap();
        let rhs = nets::apply(&net, &x).unwrap();
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            for (u, v) in a.iter().zip(b) {
                prop_assert!((u - alpha * v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
        }
    }
}

#[test]
fn random_spd_is_positive_definite() {
    let m: DMatrix<f64> = oracle::random_spd(4, 9, 0.2);
    assert!((&m - m.transpose()).norm() < 1e-14);
    assert!(m.symmetric_eigen().eigenvalues.min() >= 0.2 - 1e-12);
}
