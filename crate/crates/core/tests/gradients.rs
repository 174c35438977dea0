mod common;

use common::{random_matrix, rel_err};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbnn::bnn::{draw_noise, step_loss_and_gradient, VariationalParams};
use rbnn::ffnn::{dataset_gradient, sgd_step, GradientSet};
use rbnn::network::{total_error_rows, Activation, LossKind, Topology, WeightSet};
use rbnn::Matrix;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn batch(topo: &Topology, rows: usize, rng: &mut ChaCha8Rng) -> (Matrix, Matrix) {
    let x = random_matrix(rows, topo.input_dim(), 1.0, rng);
    let c = topo.output_dim();
    let y = Matrix::from_fn(rows, c, |i, j| if (i % c) == j { 1.0 } else { 0.0 });
    (x, y)
}

/// Largest relative error between `dataset_gradient` and central differences.
fn ffnn_check(topo: &Topology, kind: LossKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = WeightSet::new(
        topo.weight_shapes()
            .map(|(r, c)| random_matrix(r, c, 1.0, &mut rng))
            .collect(),
    );
    let (x, y) = batch(topo, 5, &mut rng);
    let (_, grads) = dataset_gradient(&ws, topo, &x, &y, kind).unwrap();
    let mut worst: f64 = 0.0;
    for l in 0..ws.matrices().len() {
        for k in 0..ws.layer(l).as_slice().len() {
            let mut plus = ws.clone();
            plus.matrices_mut()[l].as_mut_slice()[k] += H;
            let mut minus = ws.clone();
            minus.matrices_mut()[l].as_mut_slice()[k] -= H;
            let fp = total_error_rows(&plus, topo, &x, &y, kind).unwrap();
            let fm = total_error_rows(&minus, topo, &x, &y, kind).unwrap();
            let numeric = (fp - fm) / (2.0 * H);
            worst = worst.max(rel_err(grads.layers[l].as_slice()[k], numeric));
        }
    }
    worst
}

#[test]
fn sigmoid_mse_backprop_matches_finite_differences() {
    for bias in [false, true] {
        let topo = Topology::uniform(vec![3, 4, 2], Activation::Sigmoid, Activation::Sigmoid)
            .unwrap()
            .with_bias(bias);
        for seed in 0..10 {
            let err = ffnn_check(&topo, LossKind::Mse, seed);
            assert!(err < TOL, "bias {bias} seed {seed}: relative error {err}");
        }
    }
}

#[test]
fn softmax_cross_entropy_backprop_matches_finite_differences() {
    let topo = Topology::uniform(vec![3, 4, 2], Activation::Sigmoid, Activation::Softmax)
        .unwrap()
        .with_bias(true);
    for seed in 0..10 {
        let err = ffnn_check(&topo, LossKind::CrossEntropy, seed);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}

#[test]
fn tanh_and_identity_layers_match_finite_differences() {
    let topo = Topology::new(
        vec![3, 5, 4, 2],
        vec![Activation::Tanh, Activation::Identity, Activation::Softmax],
        true,
    )
    .unwrap();
    for seed in 0..5 {
        let err = ffnn_check(&topo, LossKind::Mse, seed);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}

#[test]
fn reparameterized_gradients_match_finite_differences() {
    let topo = Topology::uniform(vec![3, 4, 2], Activation::Sigmoid, Activation::Softmax)
        .unwrap()
        .with_bias(true);
    let kl_weight = 0.3;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut vp = VariationalParams::init(&topo, 0.8, -1.0, seed);
        for r in &mut vp.rho {
            *r = random_matrix(r.rows(), r.cols(), 1.5, &mut rng).map(|v| v - 1.0);
        }
        let noise = draw_noise(&topo, &mut rng);
        let (x, y) = batch(&topo, 4, &mut rng);
        let (_, grad) = step_loss_and_gradient(&vp, &x, &y, &noise, kl_weight).unwrap();
        let objective = |p: &VariationalParams| step_loss_and_gradient(p, &x, &y, &noise, kl_weight).unwrap().0.loss;

        let mut worst: f64 = 0.0;
        for l in 0..vp.mu.len() {
            for k in 0..vp.mu[l].as_slice().len() {
                for use_rho in [false, true] {
                    let bump = |delta: f64| {
                        let mut p = vp.clone();
                        let m = if use_rho { &mut p.rho[l] } else { &mut p.mu[l] };
                        m.as_mut_slice()[k] += delta;
                        objective(&p)
                    };
                    let numeric = (bump(H) - bump(-H)) / (2.0 * H);
                    let analytic = if use_rho { &grad.rho[l] } else { &grad.mu[l] }.as_slice()[k];
                    worst = worst.max(rel_err(analytic, numeric));
                }
            }
        }
        assert!(worst < TOL, "seed {seed}: relative error {worst}");
    }
}

#[test]
fn small_sgd_step_lowers_total_error() {
    let topo = Topology::uniform(vec![3, 4, 2], Activation::Sigmoid, Activation::Softmax)
        .unwrap()
        .with_bias(true);
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ws = WeightSet::new(
            topo.weight_shapes()
                .map(|(r, c)| random_matrix(r, c, 1.0, &mut rng))
                .collect(),
        );
        let (x, y) = batch(&topo, 6, &mut rng);
        let (before, grads) = dataset_gradient(&ws, &topo, &x, &y, LossKind::CrossEntropy).unwrap();
        let next = sgd_step(&ws, &grads, 1e-4).unwrap();
        let after = total_error_rows(&next, &topo, &x, &y, LossKind::CrossEntropy).unwrap();
        assert!(after < before, "seed {seed}: {after} >= {before}");
    }
}

#[test]
fn sgd_step_rejects_mismatched_gradients() {
    let topo = Topology::uniform(vec![3, 4, 2], Activation::Sigmoid, Activation::Sigmoid).unwrap();
    let ws = WeightSet::zeros(&topo);
    let mut grads = GradientSet::zeros_like(&ws);
    grads.layers.pop();
    assert!(sgd_step(&ws, &grads, 0.1).is_err());
}
