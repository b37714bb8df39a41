use polymix_nn::{LayerSpec, Mode, Model, ModelConfig, NnError, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(b: usize, input: [usize; 3], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = b * input.iter().product::<usize>();
    let mut shape = vec![b];
    shape.extend_from_slice(&input);
    Tensor::from_vec(&shape, (0..n).map(|_| rng.gen::<f32>()).collect()).unwrap()
}

fn small() -> ModelConfig {
    ModelConfig::proposed()
        .with_depths([4, 4, 8, 8])
        .with_head_units(16)
}

#[test]
fn full_size_proposed_shapes_and_forward() {
    let cfg = ModelConfig::proposed();
    let model = Model::<f32>::build(&cfg, 0).unwrap();
    let pools: Vec<Vec<usize>> = model
        .layer_shapes()
        .into_iter()
        .filter(|(name, _)| *name == "max_pool")
        .map(|(_, s)| s[1..].to_vec())
        .collect();
    assert_eq!(pools, vec![vec![48, 43], vec![24, 21], vec![8, 7], vec![2, 2]]);
    let flat = model
        .layer_shapes()
        .into_iter()
        .find(|(name, _)| *name == "flatten")
        .unwrap()
        .1;
    assert_eq!(flat, vec![2560]);
    let out = model.predict(&random_batch(1, cfg.input, 1)).unwrap();
    assert_eq!(out.shape(), &[1, 11]);
}

#[test]
fn parameter_counts_are_frozen() {
    assert_eq!(ModelConfig::proposed().param_count().unwrap(), 8_946_635);
    assert_eq!(ModelConfig::initial().param_count().unwrap(), 4_482_827);
    let built = Model::<f32>::build(&ModelConfig::initial(), 1).unwrap();
    assert_eq!(built.param_count(), 4_482_827);
}

#[test]
fn same_seed_same_parameters() {
    let a = Model::<f32>::build(&small(), 42).unwrap();
    let b = Model::<f32>::build(&small(), 42).unwrap();
    let c = Model::<f32>::build(&small(), 43).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

#[test]
fn inference_is_deterministic_and_in_unit_interval() {
    let model = Model::<f32>::build(&small(), 5).unwrap();
    let x = random_batch(3, small().input, 2);
    let a = model.predict(&x).unwrap();
    let b = model.predict(&x).unwrap();
    assert_eq!(a, b);
    assert!(a.data().iter().all(|&s| s > 0.0 && s < 1.0));
}

#[test]
fn train_forward_without_stochastic_parts_equals_inference() {
    let cfg = small().with_dropout(0.0, 0.0);
    let mut model = Model::<f64>::build(&cfg, 6).unwrap();
    // Move running stats away from their initial values first.
    let warm = random_batch(4, cfg.input, 3).cast::<f64>();
    model.forward(&warm, Mode::Train).unwrap();
    model.bn_batch_stats = false;
    let x = random_batch(2, cfg.input, 4).cast::<f64>();
    let train = model.forward(&x, Mode::Train).unwrap();
    let infer = model.forward(&x, Mode::Infer).unwrap();
    for (a, b) in train.data().iter().zip(infer.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn non_finite_input_and_weights_fail_fast() {
    let mut model = Model::<f32>::build(&small(), 7).unwrap();
    let mut x = random_batch(1, small().input, 5);
    x.data_mut()[10] = f32::NAN;
    assert!(matches!(model.predict(&x), Err(NnError::NonFinite { .. })));
    let x = random_batch(1, small().input, 5);
    model.params_mut()[0].data_mut()[0] = f32::INFINITY;
    match model.predict(&x) {
        Err(NnError::NonFinite { index, name }) => {
            assert_eq!(index, 0);
            assert_eq!(name, "conv2d");
        }
        other => panic!("expected non-finite error, got {other:?}"),
    }
}

#[test]
fn wrong_input_shape_is_rejected() {
    let model = Model::<f32>::build(&small(), 0).unwrap();
    let x = random_batch(1, [1, 90, 87], 0);
    assert!(matches!(model.predict(&x), Err(NnError::Shape { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reported_shapes_match_forward(
        h in 8usize..40,
        w in 8usize..40,
        p in proptest::collection::vec((1usize..3, 1usize..3), 4),
        proposed in any::<bool>(),
    ) {
        let base = if proposed { ModelConfig::proposed() } else { ModelConfig::initial() };
        let pools = [p[0], p[1], p[2], p[3]];
        let cfg = base.with_depths([2, 2, 3, 2]).with_head_units(3).with_input([1, h, w]).with_pools(pools);
        let fits = pools.iter().try_fold((h, w), |(h, w), &(ph, pw)| {
            let next = (h / ph, w / pw);
            (next.0 > 0 && next.1 > 0).then_some(next)
        });
        match Model::<f32>::build(&cfg, 0) {
            Err(_) => prop_assert!(fits.is_none()),
            Ok(model) => {
                prop_assert!(fits.is_some());
                let x = random_batch(2, cfg.input, 1);
                let mut act = x.clone();
                for (layer, (_, shape)) in model.layers().iter().zip(model.layer_shapes()) {
                    act = layer.infer(&act);
                    prop_assert_eq!(&act.shape()[1..], shape.as_slice());
                }
                let (fh, fw) = fits.unwrap();
                let flat: Vec<_> = model.specs().iter().filter_map(|s| match s {
                    LayerSpec::Dense { inputs, .. } => Some(*inputs),
                    _ => None,
                }).collect();
                prop_assert_eq!(flat[0], 2 * fh * fw);
            }
        }
    }
}
