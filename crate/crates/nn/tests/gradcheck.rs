//! Analytic gradients against central finite differences in f64.

use polymix_nn::{Activation, Layer, LayerSpec, Mode, Model, ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Relative error with a denominator floor: gradients that vanish
/// analytically (e.g. conv biases feeding batch norm) leave only ~1e-10
/// round-off in the central difference.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-5)
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()).unwrap()
}

/// Objective `sum(r * layer(x))` with the dropout stream reseeded every call.
fn layer_objective(layer: &mut Layer<f64>, x: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let y = layer.forward_train(x, &mut rng, true);
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn check_layer(spec: LayerSpec, input_shape: &[usize]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut layer = Layer::<f64>::build(&spec, &mut rng);
    let x = random_tensor(input_shape, &mut rng);
    let mut drng = ChaCha8Rng::seed_from_u64(99);
    let y = layer.forward_train(&x, &mut drng, true);
    let r = random_tensor(y.shape(), &mut rng);
    layer.zero_grad();
    let dx = layer.backward(&r, true).unwrap();
    let analytic_params: Vec<Vec<f64>> = layer.grads().iter().map(|g| g.data().to_vec()).collect();

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += H;
        let mut xm = x.clone();
        xm.data_mut()[i] -= H;
        let num = (layer_objective(&mut layer, &xp, &r) - layer_objective(&mut layer, &xm, &r)) / (2.0 * H);
        worst = worst.max(rel_err(dx.data()[i], num));
    }
    for (pi, analytic) in analytic_params.iter().enumerate() {
        for j in 0..analytic.len() {
            let orig = layer.params()[pi].data()[j];
            layer.params_mut()[pi].data_mut()[j] = orig + H;
            let fp = layer_objective(&mut layer, &x, &r);
            layer.params_mut()[pi].data_mut()[j] = orig - H;
            let fm = layer_objective(&mut layer, &x, &r);
            layer.params_mut()[pi].data_mut()[j] = orig;
            worst = worst.max(rel_err(analytic[j], (fp - fm) / (2.0 * H)));
        }
    }
    worst
}

const TOY: [usize; 4] = [2, 3, 5, 4];

#[test]
fn conv2d_gradients() {
    let e = check_layer(
        LayerSpec::Conv2d {
            in_channels: 3,
            out_channels: 2,
        },
        &TOY,
    );
    assert!(e < TOL, "conv2d max rel err {e}");
}

#[test]
fn batch_norm_gradients() {
    let e = check_layer(LayerSpec::BatchNorm { channels: 3 }, &TOY);
    assert!(e < TOL, "batch_norm (4-d) max rel err {e}");
    let e = check_layer(LayerSpec::BatchNorm { channels: 6 }, &[4, 6]);
    assert!(e < TOL, "batch_norm (2-d) max rel err {e}");
}

#[test]
fn activation_gradients() {
    for act in [Activation::Elu, Activation::leaky_relu()] {
        let e = check_layer(LayerSpec::Activation { activation: act }, &TOY);
        assert!(e < TOL, "{act:?} max rel err {e}");
    }
}

#[test]
fn pooling_dropout_flatten_dense_sigmoid_gradients() {
    for (spec, shape) in [
        (LayerSpec::MaxPool { pool: (2, 2) }, TOY.to_vec()),
        (LayerSpec::Dropout { rate: 0.4 }, TOY.to_vec()),
        (LayerSpec::Flatten, TOY.to_vec()),
        (
            LayerSpec::Dense {
                inputs: 60,
                outputs: 7,
            },
            vec![2, 60],
        ),
        (LayerSpec::Sigmoid, TOY.to_vec()),
    ] {
        let e = check_layer(spec.clone(), &shape);
        assert!(e < TOL, "{spec:?} max rel err {e}");
    }
}

fn mean_bce(model: &mut Model<f64>, x: &Tensor<f64>, t: &Tensor<f64>) -> f64 {
    model.reseed_dropout(5);
    let s = model.forward(x, Mode::Train).unwrap();
    polymix_nn::bce_loss(&s, t).0
}

fn check_model(cfg: ModelConfig) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut model = Model::<f64>::build(&cfg, 3).unwrap();
    let mut shape = vec![3];
    shape.extend_from_slice(&cfg.input);
    let x = random_tensor(&shape, &mut rng);
    let t = Tensor::from_vec(
        &[3, cfg.classes],
        (0..3 * cfg.classes).map(|_| (rng.gen::<f64>() < 0.3) as u8 as f64).collect(),
    )
    .unwrap();
    mean_bce(&mut model, &x, &t);
    model.zero_grad();
    model.backward(&t).unwrap();
    let analytic: Vec<Vec<f64>> = model.grads().iter().map(|g| g.data().to_vec()).collect();
    let mut worst = 0.0f64;
    for (pi, grads) in analytic.iter().enumerate() {
        // Large tensors are sampled at a fixed stride to bound runtime.
        let stride = (grads.len() / 40).max(1);
        for j in (0..grads.len()).step_by(stride) {
            let orig = model.params()[pi].data()[j];
            model.params_mut()[pi].data_mut()[j] = orig + H;
            let fp = mean_bce(&mut model, &x, &t);
            model.params_mut()[pi].data_mut()[j] = orig - H;
            let fm = mean_bce(&mut model, &x, &t);
            model.params_mut()[pi].data_mut()[j] = orig;
            let e = rel_err(grads[j], (fp - fm) / (2.0 * H));
            worst = worst.max(e);
        }
    }
    worst
}

fn toy(cfg: ModelConfig) -> ModelConfig {
    cfg.with_depths([2, 3, 3, 2]).with_input([1, 36, 36]).with_head_units(6)
}

#[test]
fn initial_architecture_gradients() {
    let e = check_model(toy(ModelConfig::initial()));
    assert!(e < TOL, "initial max rel err {e}");
}

#[test]
fn proposed_architecture_gradients() {
    let e = check_model(toy(ModelConfig::proposed()));
    assert!(e < TOL, "proposed max rel err {e}");
}

#[test]
fn dropout_masks_fixed_by_seed_give_identical_gradients() {
    let cfg = toy(ModelConfig::proposed());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&[2, 1, 36, 36], &mut rng);
    let t = Tensor::from_vec(&[2, 11], (0..22).map(|i| (i % 3 == 0) as u8 as f64).collect()).unwrap();
    let run = || {
        let mut m = Model::<f64>::build(&cfg, 9).unwrap();
        m.reseed_dropout(123);
        m.forward(&x, Mode::Train).unwrap();
        m.backward(&t).unwrap();
        m.grads().iter().map(|g| g.data().to_vec()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_gradient_at_quadratic_minimum() {
    // A one-parameter surrogate: a 1x1 dense layer fed x = 1 with objective
    // (w + b - 2)^2 / 2; at w = 2, b = 0 both partials vanish.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut layer = Layer::<f64>::build(&LayerSpec::Dense { inputs: 1, outputs: 1 }, &mut rng);
    layer.params_mut()[0].data_mut()[0] = 2.0;
    let x = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
    let y = layer.forward_train(&x, &mut rng, true);
    let residual = Tensor::from_vec(&[1, 1], vec![y.data()[0] - 2.0]).unwrap();
    layer.zero_grad();
    layer.backward(&residual, true).unwrap();
    assert_eq!(layer.grads()[0].data()[0], 0.0);
    assert_eq!(layer.grads()[1].data()[0], 0.0);
}
