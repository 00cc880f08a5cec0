mod common;

use common::*;
use mlnt::tensor::{
    backward_ce, backward_kl, cross_entropy, finite_diff_grad, forward, kl_divergence, relative_error, Activation,
    Matrix, SoftmaxOutput,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn soft(rows: &[Vec<f64>]) -> SoftmaxOutput {
    SoftmaxOutput::new(Matrix::from_rows(rows).unwrap()).unwrap()
}

#[test]
fn library_forward_matches_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for layers in 1..=3 {
        for act in [Activation::Relu, Activation::Tanh] {
            let net = random_net(&mut rng, layers, act, 6);
            let (_, out) = forward(&net.spec, &net.params, &net.x).unwrap();
            let want = ref_probs(act, &net.params, &net.x);
            for (row, w) in out.probs().iter_rows().zip(&want) {
                for (a, b) in row.iter().zip(w) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }
}

#[test]
fn ce_gradient_matches_reference_backprop() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..12 {
        let act = if i % 2 == 0 { Activation::Relu } else { Activation::Tanh };
        let net = random_net(&mut rng, 1 + i % 3, act, 7);
        let (cache, _) = forward(&net.spec, &net.params, &net.x).unwrap();
        let got = backward_ce(&net.params, &cache, &net.y).unwrap().to_flat();
        let want = ref_ce_grad(act, &net.params, &net.x, &net.labels).to_flat();
        assert!(rel_err(&got, &want) < 1e-12, "net {i}");
    }
}

#[test]
fn ce_and_kl_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..24 {
        let act = if i % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let net = random_net(&mut rng, 1 + i % 3, act, 5);
        let (cache, _) = forward(&net.spec, &net.params, &net.x).unwrap();

        let ce = backward_ce(&net.params, &cache, &net.y).unwrap().to_flat();
        let ce_fd = ref_fd(&net.spec, &net.params, 1e-5, |p| ref_ce(act, p, &net.x, &net.labels));
        assert!(rel_err(&ce, &ce_fd) < 1e-4, "CE, net {i}: {}", rel_err(&ce, &ce_fd));

        let target = soft(&net.target);
        let kl = backward_kl(&net.params, &cache, &target).unwrap().to_flat();
        let kl_fd = ref_fd(&net.spec, &net.params, 1e-5, |p| ref_kl(act, p, &net.x, &net.target));
        assert!(rel_err(&kl, &kl_fd) < 1e-4, "KL, net {i}: {}", rel_err(&kl, &kl_fd));
    }
}

#[test]
fn library_finite_differences_agree_with_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let net = random_net(&mut rng, 2, Activation::Tanh, 4);
    let fd = finite_diff_grad(
        |p| {
            let (_, out) = forward(&net.spec, p, &net.x)?;
            cross_entropy(&out, &net.y)
        },
        &net.params,
        1e-5,
    )
    .unwrap();
    let want = ref_fd(&net.spec, &net.params, 1e-5, |p| {
        ref_ce(Activation::Tanh, p, &net.x, &net.labels)
    });
    assert!(rel_err(&fd.to_flat(), &want) < 1e-8);
    let analytic = {
        let (cache, _) = forward(&net.spec, &net.params, &net.x).unwrap();
        backward_ce(&net.params, &cache, &net.y).unwrap()
    };
    assert!(relative_error(&analytic, &fd) < 1e-6);
}

fn logits_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..6, 2usize..6).prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(-800.0f64..800.0, r * c)))
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions((r, c, v) in logits_strategy()) {
        let out = SoftmaxOutput::from_logits(&Matrix::from_vec(r, c, v).unwrap());
        for row in out.probs().iter_rows() {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p <= 1.0));
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(
        (r, c, a) in logits_strategy(),
        seed in any::<u64>(),
    ) {
        let p = SoftmaxOutput::from_logits(&Matrix::from_vec(r, c, a.clone()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rand::Rng::random_range(&mut rng, -20.0..20.0)).collect();
        let q = SoftmaxOutput::from_logits(&Matrix::from_vec(r, c, b).unwrap());
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ce_is_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, 2, Activation::Relu, 4);
        let (_, out) = forward(&net.spec, &net.params, &net.x).unwrap();
        prop_assert!(cross_entropy(&out, &net.y).unwrap() >= 0.0);
    }
}
