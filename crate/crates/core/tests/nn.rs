use fddmimo_core::linalg::SimRng;
use fddmimo_core::nn::{Activation, Adam, AdamConfig, Mlp, Mode};
use nalgebra::DMatrix;
use proptest::prelude::*;

const ACTIVATIONS: [Activation; 4] = [Activation::LeakyRelu(0.2), Activation::Tanh, Activation::Sigmoid, Activation::Identity];

fn random_batch(rng: &mut SimRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// `0.5‖f(x) − t‖²` summed over the batch.
fn loss(net: &Mlp, x: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    0.5 * (net.predict(x).unwrap() - t).norm_squared()
}

#[test]
fn zero_output_gradient_gives_zero_gradients() {
    let mut rng = SimRng::new(1);
    for act in ACTIVATIONS {
        let net = Mlp::new(&[4, 7, 5, 3], act, Activation::Tanh, 0.0, &mut rng).unwrap();
        let x = random_batch(&mut rng, 4, 6);
        let (y, cache) = net.forward(&x, Mode::Eval).unwrap();
        let (g, gx) = net.backward(&cache, &DMatrix::zeros(y.nrows(), y.ncols()));
        assert_eq!(g.norm(), 0.0);
        assert!(gx.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn parameter_gradients_match_central_differences() {
    let mut rng = SimRng::new(2);
    for hidden in ACTIVATIONS {
        for output in ACTIVATIONS {
            let mut net = Mlp::new(&[3, 6, 4, 2], hidden, output, 0.0, &mut rng).unwrap();
            let x = random_batch(&mut rng, 3, 5);
            let t = random_batch(&mut rng, 2, 5);
            let (y, cache) = net.forward(&x, Mode::Eval).unwrap();
            let (g, _) = net.backward(&cache, &(y - &t));
            let h = 1e-6;
            for li in 0..net.layers.len() {
                let (r, c) = net.layers[li].w.shape();
                for idx in 0..r * c {
                    let orig = net.layers[li].w[idx];
                    net.layers[li].w[idx] = orig + h;
                    let up = loss(&net, &x, &t);
                    net.layers[li].w[idx] = orig - h;
                    let down = loss(&net, &x, &t);
                    net.layers[li].w[idx] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = g.layers[li].w[idx];
                    // leaky kinks can sit inside the stencil; skip those rare entries
                    let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                    assert!(err < 1e-5 || (matches!(hidden, Activation::LeakyRelu(_)) && (fd - an).abs() < 1e-7), "{hidden:?}/{output:?} layer {li} w[{idx}]: {an} vs {fd}");
                }
            }
        }
    }
}

#[test]
fn adam_reduces_full_batch_loss_every_step() {
    let mut rng = SimRng::new(3);
    let mut net = Mlp::new(&[2, 16, 1], Activation::Tanh, Activation::Identity, 0.0, &mut rng).unwrap();
    let x = random_batch(&mut rng, 2, 64);
    let t = DMatrix::from_fn(1, 64, |_, j| (x[(0, j)] * 1.5).sin() + 0.5 * x[(1, j)]);
    let mut opt = Adam::new(&net, AdamConfig { lr: 1e-3, ..AdamConfig::default() });
    let mut prev = loss(&net, &x, &t);
    let first = prev;
    for step in 0..50 {
        let (y, cache) = net.forward(&x, Mode::Eval).unwrap();
        let (g, _) = net.backward(&cache, &(y - &t));
        opt.step(&mut net, &g);
        let cur = loss(&net, &x, &t);
        assert!(cur < prev, "step {step}: {prev} -> {cur}");
        prev = cur;
    }
    println!("loss {first:.4} -> {prev:.4}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn input_gradient_matches_central_differences(seed in any::<u64>(), hidden in 0usize..4) {
        let mut rng = SimRng::new(seed);
        let net = Mlp::new(&[3, 5, 2], ACTIVATIONS[hidden], Activation::Sigmoid, 0.0, &mut rng).unwrap();
        let mut x = random_batch(&mut rng, 3, 1);
        let t = random_batch(&mut rng, 2, 1);
        let (y, cache) = net.forward(&x, Mode::Eval).unwrap();
        let (_, gx) = net.backward(&cache, &(y - &t));
        let h = 1e-6;
        for i in 0..3 {
            let orig = x[i];
            x[i] = orig + h;
            let up = loss(&net, &x, &t);
            x[i] = orig - h;
            let down = loss(&net, &x, &t);
            x[i] = orig;
            let fd = (up - down) / (2.0 * h);
            prop_assert!((fd - gx[i]).abs() <= 1e-5 * fd.abs().max(gx[i].abs()).max(1e-3));
        }
    }

    #[test]
    fn batch_columns_are_independent(seed in any::<u64>(), cols in 1usize..8) {
        let mut rng = SimRng::new(seed);
        let net = Mlp::new(&[4, 6, 3], Activation::LeakyRelu(0.2), Activation::Tanh, 0.0, &mut rng).unwrap();
        let x = random_batch(&mut rng, 4, cols);
        let all = net.predict(&x).unwrap();
        for j in 0..cols {
            let one = net.predict(&x.columns(j, 1).into_owned()).unwrap();
            prop_assert!((one - all.columns(j, 1)).norm() < 1e-14);
        }
    }
}
