use advreg_autodiff::{grad_check, AutodiffError, Graph, Tensor, DEFAULT_STEP};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Weighted sum with fixed random weights so every output element gets a
/// distinct upstream gradient.
fn weighted_sum(g: &mut Graph, out: advreg_autodiff::NodeId, rng: &mut ChaCha8Rng) -> advreg_autodiff::NodeId {
    let shape = g.value(out).shape().to_vec();
    let w = g.leaf(random(&shape, rng));
    let prod = g.mul(out, w).unwrap();
    g.sum(prod).unwrap()
}

#[test]
fn grad_reverse_forward_and_backward() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::from_slice(&[2], &[1.5, -2.0]).unwrap());
    let r = g.grad_reverse(x, 0.5).unwrap();
    assert_eq!(g.value(r).data(), &[1.5, -2.0]);

    let up = g.leaf(Tensor::from_slice(&[2], &[1.0, 2.0]).unwrap());
    let prod = g.mul(r, up).unwrap();
    let loss = g.sum(prod).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[-0.5, -1.0]);
}

#[test]
fn grad_reverse_with_zero_lambda_blocks_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut g = Graph::new();
    let x = g.leaf(random(&[5], &mut rng));
    let r = g.grad_reverse(x, 0.0).unwrap();
    let loss = weighted_sum(&mut g, r, &mut rng);
    let grads = g.backward(loss).unwrap();
    assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn grad_reverse_rejects_negative_lambda() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(1.0));
    assert!(matches!(g.grad_reverse(x, -0.1), Err(AutodiffError::Config(_))));
    assert!(g.grad_reverse(x, f64::NAN).is_err());
}

#[test]
fn grad_reverse_in_isolation_matches_numeric() {
    let values = [0.3, -1.2, 2.0];
    let mut g = Graph::new();
    let x = g.leaf(Tensor::from_slice(&[3], &values).unwrap());
    let r = g.grad_reverse(x, 0.5).unwrap();
    let loss = g.sum(r).unwrap();
    let analytic = g.backward(loss).unwrap().get(x).unwrap().clone();

    // The forward function is sum(x), whose central difference is +1 per
    // element; the reversal must deliver -0.5 times that.
    let h = DEFAULT_STEP;
    for (i, a) in analytic.data().iter().enumerate() {
        let mut up = values;
        up[i] += h;
        let mut down = values;
        down[i] -= h;
        let numeric = (up.iter().sum::<f64>() - down.iter().sum::<f64>()) / (2.0 * h);
        assert!((a - (-0.5 * numeric)).abs() <= 1e-7, "{a} vs {numeric}");
    }
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::new();
    let x = g.leaf(random(&[2, 1, 4, 5], &mut rng));
    let w = g.leaf(Tensor::ones(&[1, 1, 1, 1]));
    let b = g.leaf(Tensor::zeros(&[1]));
    let y = g.conv2d(x, w, b, 1).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn conv_sum_of_four_ones() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::ones(&[1, 1, 2, 2]));
    let w = g.leaf(Tensor::ones(&[1, 1, 2, 2]));
    let b = g.leaf(Tensor::zeros(&[1]));
    let y = g.conv2d(x, w, b, 1).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 2, 2]);
    assert_eq!(g.value(y).data()[0], 4.0);
}

#[test]
fn conv_shape_errors() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::ones(&[1, 2, 4, 4]));
    let w = g.leaf(Tensor::ones(&[1, 3, 3, 3]));
    let b = g.leaf(Tensor::zeros(&[1]));
    assert!(matches!(g.conv2d(x, w, b, 1), Err(AutodiffError::Shape(_))));
    let w2 = g.leaf(Tensor::ones(&[1, 2, 3, 3]));
    assert!(matches!(g.conv2d(x, w2, b, 0), Err(AutodiffError::Shape(_))));
}

#[test]
fn conv_stride_two_halves_rounding_up() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::ones(&[1, 1, 7, 8]));
    let w = g.leaf(Tensor::ones(&[3, 1, 3, 3]));
    let b = g.leaf(Tensor::zeros(&[3]));
    let y = g.conv2d(x, w, b, 2).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 3, 4, 4]);
}

#[test]
fn conv_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let x = g.leaf(random(&[1, 2, 5, 5], &mut rng));
        let w = g.leaf(random(&[3, 2, 3, 3], &mut rng));
        let b = g.leaf(random(&[3], &mut rng));
        let stride = 1 + (seed as usize % 2);
        let y = g.conv2d(x, w, b, stride).unwrap();
        let loss = weighted_sum(&mut g, y, &mut rng);
        let errs = grad_check(&mut g, loss, &[x, w, b], 1e-5).unwrap();
        assert!(errs.iter().all(|&e| e <= 1e-4), "seed {seed}: {errs:?}");
    }
}

#[test]
fn dense_identity_and_bias_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = Graph::new();
    let x = g.leaf(random(&[3, 2], &mut rng));
    let eye = g.leaf(Tensor::from_slice(&[2, 2], &[1., 0., 0., 1.]).unwrap());
    let zero_b = g.leaf(Tensor::zeros(&[2]));
    let y = g.dense(x, eye, zero_b).unwrap();
    assert_eq!(g.value(y), g.value(x));

    let w0 = g.leaf(Tensor::zeros(&[2, 2]));
    let b = g.leaf(Tensor::from_slice(&[2], &[0.3, -0.7]).unwrap());
    let y = g.dense(x, w0, b).unwrap();
    for row in g.value(y).data().chunks(2) {
        assert_eq!(row, &[0.3, -0.7]);
    }
}

#[test]
fn dense_rejects_mismatch() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::ones(&[3, 4]));
    let w = g.leaf(Tensor::ones(&[3, 2]));
    let b = g.leaf(Tensor::zeros(&[2]));
    assert!(matches!(g.dense(x, w, b), Err(AutodiffError::Shape(_))));
}

#[test]
fn dense_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut g = Graph::new();
        let x = g.leaf(random(&[3, 4], &mut rng));
        let w = g.leaf(random(&[4, 2], &mut rng));
        let b = g.leaf(random(&[2], &mut rng));
        let y = g.dense(x, w, b).unwrap();
        let loss = weighted_sum(&mut g, y, &mut rng);
        let errs = grad_check(&mut g, loss, &[x, w, b], 1e-5).unwrap();
        assert!(errs.iter().all(|&e| e <= 1e-7), "seed {seed}: {errs:?}");
    }
}

#[test]
fn relu_forward_backward() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::from_slice(&[3], &[-1.0, 0.0, 2.0]).unwrap());
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    let loss = g.sum(y).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
}

#[test]
fn relu_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut g = Graph::new();
        // Keep inputs away from the kink.
        let data: Vec<f64> = (0..12)
            .map(|_| {
                let v: f64 = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) { v } else { -v }
            })
            .collect();
        let x = g.leaf(Tensor::new(vec![12], data).unwrap());
        let y = g.relu(x).unwrap();
        let loss = weighted_sum(&mut g, y, &mut rng);
        let errs = grad_check(&mut g, loss, &[x], 1e-5).unwrap();
        assert!(errs[0] <= 1e-7, "seed {seed}: {errs:?}");
    }
}

#[test]
fn global_avg_pool_contract() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::full(&[2, 8, 5, 5], 3.0));
    let y = g.global_avg_pool(x).unwrap();
    assert_eq!(g.value(y).shape(), &[2, 8]);
    assert!(g.value(y).data().iter().all(|&v| (v - 3.0).abs() < 1e-15));

    let mut g = Graph::new();
    let x = g.leaf(Tensor::ones(&[1, 1, 5, 5]));
    let y = g.global_avg_pool(x).unwrap();
    let loss = g.sum(y).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(grads.get(x).unwrap().data().iter().all(|&v| (v - 0.04).abs() < 1e-15));
}

#[test]
fn cross_entropy_values() {
    let mut g = Graph::new();
    let z = g.leaf(Tensor::from_slice(&[2, 2], &[0.3, 0.3, -1.0, -1.0]).unwrap());
    let l = g.softmax_cross_entropy(z, vec![0, 1]).unwrap();
    assert!((g.value(l).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

    let z = g.leaf(Tensor::from_slice(&[1, 2], &[100.0, 0.0]).unwrap());
    let l = g.softmax_cross_entropy(z, vec![0]).unwrap();
    assert!(g.value(l).item().unwrap() < 1e-6);

    assert!(matches!(g.softmax_cross_entropy(z, vec![2]), Err(AutodiffError::Input(_))));
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let mut g = Graph::new();
    let z = g.leaf(Tensor::from_slice(&[2, 3], &[1.0, 2.0, 0.5, -1.0, 0.0, 1.0]).unwrap());
    let l = g.softmax_cross_entropy(z, vec![1, 0]).unwrap();
    let grads = g.backward(l).unwrap();
    let gz = grads.get(z).unwrap().data();
    for (row, label) in [(0usize, 1usize), (1, 0)] {
        let logits = &g.value(z).data()[row * 3..row * 3 + 3];
        let denom: f64 = logits.iter().map(|v| v.exp()).sum();
        for j in 0..3 {
            let expect = (logits[j].exp() / denom - if j == label { 1.0 } else { 0.0 }) / 2.0;
            assert!((gz[row * 3 + j] - expect).abs() < 1e-14);
        }
    }
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let mut g = Graph::new();
        let z = g.leaf(random(&[4, 3], &mut rng));
        let labels = (0..4).map(|_| rng.random_range(0..3)).collect();
        let l = g.softmax_cross_entropy(z, labels).unwrap();
        let errs = grad_check(&mut g, l, &[z], 1e-5).unwrap();
        assert!(errs[0] <= 1e-4, "seed {seed}: {errs:?}");
    }
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let mut g = Graph::new();
        let x = g.leaf(random(&[3, 2, 3, 3], &mut rng));
        let s = g.leaf(random(&[2], &mut rng));
        let b = g.leaf(random(&[2], &mut rng));
        let y = g.batch_norm(x, s, b, 1e-5).unwrap();
        let loss = weighted_sum(&mut g, y, &mut rng);
        let errs = grad_check(&mut g, loss, &[x, s, b], 1e-5).unwrap();
        assert!(errs.iter().all(|&e| e <= 1e-4), "seed {seed}: {errs:?}");

        let mut g = Graph::new();
        let x = g.leaf(random(&[3, 2, 3, 3], &mut rng));
        let s = g.leaf(random(&[2], &mut rng));
        let b = g.leaf(random(&[2], &mut rng));
        let y = g.normalize(x, s, b, vec![0.1, -0.2], vec![0.5, 2.0], 1e-5).unwrap();
        let loss = weighted_sum(&mut g, y, &mut rng);
        let errs = grad_check(&mut g, loss, &[x, s, b], 1e-5).unwrap();
        assert!(errs.iter().all(|&e| e <= 1e-7), "seed {seed}: {errs:?}");
    }
}

#[test]
fn dropout_mask_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = Graph::new();
    let x = g.leaf(random(&[6], &mut rng));
    let y = g.dropout(x, vec![1.25, 0.0, 1.25, 1.25, 0.0, 1.25]).unwrap();
    let loss = weighted_sum(&mut g, y, &mut rng);
    let errs = grad_check(&mut g, loss, &[x], 1e-5).unwrap();
    assert!(errs[0] <= 1e-7);
    assert!(g.dropout(x, vec![1.0; 5]).is_err());
}

#[test]
fn identity_chain() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(0.7));
    let grads = g.backward(x).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::ones(&[2]));
    assert!(matches!(g.backward(x), Err(AutodiffError::Contract(_))));
}

#[test]
fn diamond_sums_path_gradients() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(1.5));
    let a = g.scale(x, 3.0).unwrap();
    let b = g.square(x).unwrap();
    let y = g.add(a, b).unwrap();
    let grads = g.backward(y).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[3.0 + 2.0 * 1.5]);
}

/// Scalar trunk f = θ·x feeding Lc = (f-1)² directly and Lp = (f-2)²
/// through a reversal with λ = 0.5.
#[test]
fn scalar_adversarial_gradient() {
    let (theta, xv, lambda) = (0.8, 1.7, 0.5);
    let mut g = Graph::new();
    let t = g.leaf(Tensor::scalar(theta));
    let x = g.leaf(Tensor::scalar(xv));
    let one = g.leaf(Tensor::scalar(1.0));
    let two = g.leaf(Tensor::scalar(2.0));
    let f = g.mul(t, x).unwrap();
    let dc = g.sub(f, one).unwrap();
    let lc = g.square(dc).unwrap();
    let r = g.grad_reverse(f, lambda).unwrap();
    let dp = g.sub(r, two).unwrap();
    let lp = g.square(dp).unwrap();
    let total = g.add(lc, lp).unwrap();
    let analytic = g.backward(total).unwrap().get(t).unwrap().data()[0];

    // Central differences on L = Lc - λ·Lp.
    let objective = |th: f64| {
        let f = th * xv;
        (f - 1.0).powi(2) - lambda * (f - 2.0).powi(2)
    };
    let h = 1e-5;
    let numeric = (objective(theta + h) - objective(theta - h)) / (2.0 * h);
    assert!((analytic - numeric).abs() / numeric.abs() < 1e-7, "{analytic} vs {numeric}");
}

#[test]
fn linear_graph_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut g = Graph::new();
    let x = g.leaf(random(&[4, 3], &mut rng));
    let w = g.leaf(random(&[3, 2], &mut rng));
    let b = g.leaf(random(&[2], &mut rng));
    let y = g.dense(x, w, b).unwrap();
    let s = g.scale(y, 2.5).unwrap();
    let loss = g.mean(s).unwrap();
    let errs = grad_check(&mut g, loss, &[x, w, b], 1e-5).unwrap();
    assert!(errs.iter().all(|&e| e <= 1e-7), "{errs:?}");
}

#[test]
fn recompute_restores_state_after_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut g = Graph::new();
    let x = g.leaf(random(&[2, 3], &mut rng));
    let sq = g.square(x).unwrap();
    let loss = g.sum(sq).unwrap();
    let before = g.value(loss).clone();
    grad_check(&mut g, loss, &[x], 1e-5).unwrap();
    assert_eq!(g.value(loss), &before);
}

fn conv_net_grads(seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let x = g.leaf(random(&[2, 1, 6, 6], &mut rng));
    let w = g.leaf(random(&[2, 1, 3, 3], &mut rng));
    let b = g.leaf(random(&[2], &mut rng));
    let c = g.conv2d(x, w, b, 2).unwrap();
    let s = g.leaf(Tensor::ones(&[2]));
    let t = g.leaf(Tensor::zeros(&[2]));
    let n = g.batch_norm(c, s, t, 1e-5).unwrap();
    let r = g.relu(n).unwrap();
    let p = g.global_avg_pool(r).unwrap();
    let l = g.softmax_cross_entropy(p, vec![0, 1]).unwrap();
    let grads = g.backward(l).unwrap();
    [x, w, b, s, t].iter().map(|&id| grads.get(id).unwrap().clone()).collect()
}

#[test]
fn backward_is_deterministic() {
    let a = conv_net_grads(5);
    let b = conv_net_grads(5);
    for (x, y) in a.iter().zip(&b) {
        let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
        let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(xb, yb);
    }
}

proptest! {
    #[test]
    fn grad_reverse_forward_is_bit_identical(data in proptest::collection::vec(-1e300f64..1e300, 1..32), lambda in 0.0f64..10.0) {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![data.len()], data.clone()).unwrap());
        let r = g.grad_reverse(x, lambda).unwrap();
        let got: Vec<u64> = g.value(r).data().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = data.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn relu_is_idempotent(data in proptest::collection::vec(-100f64..100.0, 1..32)) {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![data.len()], data).unwrap());
        let once = g.relu(x).unwrap();
        let twice = g.relu(once).unwrap();
        prop_assert_eq!(g.value(once), g.value(twice));
    }
}
