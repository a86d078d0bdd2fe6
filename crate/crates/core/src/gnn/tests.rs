use std::f64::consts::LN_2;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::hetgraph::EdgeType;

fn tiny_hyper(mode: GnnMode) -> GnnHyperParams {
    GnnHyperParams {
        embedding_dim: 4,
        head_layer_sizes: vec![3, 2],
        mode,
        ..GnnHyperParams::default()
    }
}

/// Parameter `i` (flat order) is `((37·i) mod 17 − 5) / 10`.
fn patterned(mode: GnnMode) -> GnnModel {
    let mut m = GnnModel::init(tiny_hyper(mode), 2, 0).unwrap();
    for i in 0..m.parameter_count() {
        *m.params.flat_mut(i) = (((37 * i) % 17) as f64 - 5.0) / 10.0;
    }
    m
}

fn nb(edge_type: EdgeType, weight: f64, features: [f64; 2]) -> NeighborInput {
    NeighborInput {
        edge_type,
        weight,
        features: features.to_vec(),
    }
}

fn hop(edge_type: EdgeType, weight: f64, features: [f64; 2], second_hop: Vec<NeighborInput>) -> FirstHopInput {
    FirstHopInput {
        edge_type,
        weight,
        features: features.to_vec(),
        second_hop,
    }
}

fn fixture_input() -> SampleInput {
    use EdgeType::*;
    SampleInput {
        features: vec![1.0, 0.0],
        first_hop: vec![
            hop(Comm, 0.8, [0.0, 2.0], vec![nb(Comm, 0.5, [1.0, 1.0])]),
            hop(
                Sense,
                0.3,
                [1.0, 0.0],
                vec![nb(Sense, 0.6, [0.0, 1.0]), nb(Sense, 0.2, [2.0, 0.0])],
            ),
            hop(
                Interference,
                0.9,
                [0.0, 1.0],
                vec![nb(Comm, 0.7, [1.0, 0.0]), nb(Interference, 0.4, [0.0, 0.0])],
            ),
            hop(Comm, 0.1, [1.0, 1.0], vec![]),
        ],
    }
}

const FIXTURE_LABEL: [f64; 3] = [1.0, 0.0, 0.0];

fn random_input(rng: &mut ChaCha8Rng, l: usize) -> SampleInput {
    let types = EdgeType::ALL;
    let feats = |rng: &mut ChaCha8Rng| (0..l).map(|_| rng.gen_range(0..3) as f64).collect::<Vec<_>>();
    let first = rng.gen_range(0..5);
    SampleInput {
        features: feats(rng),
        first_hop: (0..first)
            .map(|_| FirstHopInput {
                edge_type: types[rng.gen_range(0..3)],
                weight: rng.gen_range(0.05..1.0),
                features: feats(rng),
                second_hop: (0..rng.gen_range(0..4))
                    .map(|_| NeighborInput {
                        edge_type: types[rng.gen_range(0..3)],
                        weight: rng.gen_range(0.05..1.0),
                        features: feats(rng),
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn random_label(rng: &mut ChaCha8Rng, l: usize) -> Vec<f64> {
    let mut z = vec![0.0; l + 1];
    z[rng.gen_range(0..=l)] = 1.0;
    z
}

/// Moves every parameter off the exact ReLU kinks that zero biases and the
/// decimal pattern can produce; central differences are meaningless there.
fn off_kink(mut model: GnnModel, seed: u64) -> GnnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..model.parameter_count() {
        *model.params.flat_mut(i) += rng.gen_range(-0.05..0.05);
    }
    model
}

/// Largest violation of `|a − n| ≤ 1e-4·max(|a|,|n|)` with a 1e-8 floor;
/// ≤ 0 means every parameter passes.
fn gradient_check(model: &GnnModel, input: &SampleInput, label: &[f64]) -> f64 {
    let (_, grads) = model.backward(input, label).unwrap();
    let analytic = grads.flat();
    let h = 1e-5;
    let mut worst = f64::NEG_INFINITY;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = model.clone();
        *plus.params.flat_mut(i) += h;
        let mut minus = model.clone();
        *minus.params.flat_mut(i) -= h;
        let lp = bce_loss(&plus.logits(input).unwrap(), label);
        let lm = bce_loss(&minus.logits(input).unwrap(), label);
        let n = (lp - lm) / (2.0 * h);
        let err = (a - n).abs();
        worst = worst.max(err - (1e-4 * a.abs().max(n.abs())).max(1e-8));
    }
    worst
}

#[test]
fn hyper_validation() {
    assert!(GnnHyperParams::default().validate().is_ok());
    let bad = |f: fn(&mut GnnHyperParams)| {
        let mut h = GnnHyperParams::default();
        f(&mut h);
        h.validate().is_err()
    };
    assert!(bad(|h| h.embedding_dim = 62));
    assert!(bad(|h| h.hop_count = 3));
    assert!(bad(|h| h.learning_rate = 0.0));
    assert!(bad(|h| h.iterations = 0));
    assert!(bad(|h| h.batch_size = 0));
    assert!(bad(|h| h.head_layer_sizes.clear()));
}

#[test]
fn default_shapes() {
    let m = GnnModel::init(GnnHyperParams::default(), 4, 1).unwrap();
    let shapes: Vec<_> = m.params.w.iter().map(Matrix::shape).collect();
    assert_eq!(
        shapes,
        vec![
            (16, 4),
            (16, 5),
            (16, 5),
            (16, 5),
            (16, 64),
            (16, 65),
            (16, 65),
            (16, 65)
        ]
    );
    let head: Vec<_> = m.params.head.iter().map(Matrix::shape).collect();
    assert_eq!(head, vec![(32, 64), (64, 32), (64, 64), (5, 64)]);
    let bound = 1.0 / 65f64.sqrt();
    assert!(m.params.w[7].as_slice().iter().all(|x| x.abs() <= bound));
    assert!(m.params.bias.iter().flatten().all(|&b| b == 0.0));
}

#[test]
fn aggregate_examples() {
    assert_eq!(aggregate_typed(2, &[(&[1.0, 2.0], 0.5)]).unwrap(), vec![1.0, 2.0, 0.5]);
    assert_eq!(
        aggregate_typed(2, &[(&[1.0, 0.0], 1.0), (&[3.0, 0.0], 3.0)]).unwrap(),
        vec![2.0, 0.0, 2.0]
    );
    assert_eq!(aggregate_typed(3, &[]).unwrap(), vec![0.0; 4]);
    assert!(aggregate_typed(2, &[(&[1.0], 1.0)]).is_err());
}

#[test]
fn fixture_forward_matches_scalar_oracle() {
    let het = patterned(GnnMode::Heterogeneous);
    let e = het.encode(&fixture_input()).unwrap();
    for (x, want) in e.iter().zip([0.0765, 0.4275, 0.73, 0.377]) {
        assert_relative_eq!(*x, want, max_relative = 1e-12, epsilon = 1e-15);
    }
    let y = het.logits(&fixture_input()).unwrap();
    for (x, want) in y.iter().zip([1.2123185, 1.0159485, 0.673166]) {
        assert_relative_eq!(*x, want, max_relative = 1e-12);
    }
    assert_relative_eq!(
        bce_loss(&y, &FIXTURE_LABEL),
        2.6707263862214566807,
        max_relative = 1e-12
    );

    let homo = patterned(GnnMode::Homogeneous);
    let e = homo.encode(&fixture_input()).unwrap();
    for (x, want) in e.iter().zip([0.0, 0.14575, 0.14575, 0.14575]) {
        assert_relative_eq!(*x, want, max_relative = 1e-12, epsilon = 1e-15);
    }
    let y = homo.logits(&fixture_input()).unwrap();
    for (x, want) in y.iter().zip([0.73207025, 1.1636355, 0.64802025]) {
        assert_relative_eq!(*x, want, max_relative = 1e-12);
    }
    assert_relative_eq!(
        bce_loss(&y, &FIXTURE_LABEL),
        2.8968672458629197628,
        max_relative = 1e-12
    );
    assert_eq!(homogeneous_encode(&het, &fixture_input()).unwrap(), e);
}

#[test]
fn zero_weights_give_zero_embedding() {
    let mut m = patterned(GnnMode::Heterogeneous);
    m.params = Parameters::zeros(&m.hyper, 2);
    assert_eq!(m.encode(&fixture_input()).unwrap(), vec![0.0; 4]);
    let y = m.logits(&fixture_input()).unwrap();
    assert_eq!(y, vec![0.0; 3]);
    assert!(m.probabilities(&fixture_input()).unwrap().iter().all(|&p| p == 0.5));
}

#[test]
fn empty_neighborhood_uses_only_self_blocks() {
    let m = patterned(GnnMode::Heterogeneous);
    let input = SampleInput {
        features: vec![2.0, 1.0],
        first_hop: vec![],
    };
    let w = &m.params.w;
    let h1 = (w[0].get(0, 0) * 2.0 + w[0].get(0, 1)).max(0.0);
    let mut z0 = [0.0];
    w[4].mul_vec_into(&[h1, 0.0, 0.0, 0.0], &mut z0);
    assert_eq!(m.encode(&input).unwrap(), vec![z0[0].max(0.0), 0.0, 0.0, 0.0]);
    assert_eq!(m.logits(&input).unwrap().len(), 3);
}

#[test]
fn one_unit_head_by_hand() {
    let hyper = GnnHyperParams {
        embedding_dim: 4,
        head_layer_sizes: vec![1],
        ..GnnHyperParams::default()
    };
    let mut m = GnnModel::init(hyper, 1, 0).unwrap();
    m.params.head[0] = Matrix::from_rows(&[vec![1.0, 0.0, -1.0, 0.5]]).unwrap();
    m.params.bias[0] = vec![0.25];
    m.params.head[1] = Matrix::from_rows(&[vec![2.0], vec![-1.0]]).unwrap();
    m.params.bias[1] = vec![0.0, 1.0];
    // hidden = relu(1 − 3 + 0.5·4 + 0.25) = 0.25
    assert_eq!(m.head_forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.5, 0.75]);
    // hidden = relu(−1 + 0.25) = 0 → logits are the output bias
    assert_eq!(m.head_forward(&[0.0, 0.0, 1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
    assert!(m.head_forward(&[1.0, 2.0]).is_err());
}

#[test]
fn bce_values() {
    assert_relative_eq!(
        bce_loss(&[0.0; 5], &[1.0, 0.0, 0.0, 1.0, 0.0]),
        5.0 * LN_2,
        max_relative = 1e-15
    );
    assert_relative_eq!(
        bce_loss(&[20.0], &[1.0]),
        2.0611536203143807032e-9,
        max_relative = 1e-12
    );
    let y = [3.5, -2.0, 0.1];
    let z = [1.0, 0.0, 1.0];
    let ny: Vec<f64> = y.iter().map(|v| -v).collect();
    let nz: Vec<f64> = z.iter().map(|v| 1.0 - v).collect();
    assert_relative_eq!(bce_loss(&y, &z), bce_loss(&ny, &nz), max_relative = 1e-15);
    assert!(bce_loss(&[800.0, -800.0], &[1.0, 0.0]).is_finite());
    assert!(bce_loss(&[-800.0], &[1.0]).is_finite());
}

#[test]
fn output_bias_gradient_is_residual() {
    let m = patterned(GnnMode::Heterogeneous);
    let y = m.logits(&fixture_input()).unwrap();
    let (_, g) = m.backward(&fixture_input(), &FIXTURE_LABEL).unwrap();
    let last = g.bias.len() - 1;
    for ((gb, yi), zi) in g.bias[last].iter().zip(&y).zip(FIXTURE_LABEL) {
        assert_relative_eq!(*gb, sigmoid(*yi) - zi, max_relative = 1e-15);
    }
}

#[test]
fn fixture_gradients_match_finite_differences() {
    for mode in [GnnMode::Heterogeneous, GnnMode::Homogeneous] {
        let m = off_kink(patterned(mode), 7);
        assert!(gradient_check(&m, &fixture_input(), &FIXTURE_LABEL) <= 0.0, "{mode:?}");
    }
}

#[test]
fn dead_unit_gets_no_gradient() {
    let mut m = patterned(GnnMode::Heterogeneous);
    // First hidden head unit: force a negative pre-activation.
    m.params.bias[0][0] = -100.0;
    let (_, g) = m.backward(&fixture_input(), &FIXTURE_LABEL).unwrap();
    assert_eq!(g.bias[0][0], 0.0);
    assert!((0..4).all(|c| g.head[0].get(0, c) == 0.0));
}

#[test]
fn shape_errors() {
    let m = patterned(GnnMode::Heterogeneous);
    let mut bad = fixture_input();
    bad.first_hop[1].second_hop[0].features.push(1.0);
    assert!(m.encode(&bad).is_err());
    assert!(m.backward(&fixture_input(), &[1.0, 0.0]).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let m = GnnModel::init(GnnHyperParams::default(), 4, 9).unwrap();
    let json = m.to_json().unwrap();
    assert!(json.contains("\"format_version\": 1"));
    let back = GnnModel::from_json(&json).unwrap();
    assert_eq!(back, m);
    let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
    v["target_count"] = serde_json::json!(5);
    assert!(GnnModel::from_json(&v.to_string()).is_err());
}

fn tiny_dataset(seed: u64, n: usize) -> Vec<TrainingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| TrainingSample {
            source_id: i as u32,
            input: random_input(&mut rng, 2),
            label: random_label(&mut rng, 2),
        })
        .collect()
}

#[test]
fn overfits_a_single_sample() {
    let data = vec![TrainingSample {
        source_id: 0,
        input: fixture_input(),
        label: FIXTURE_LABEL.to_vec(),
    }];
    let hyper = GnnHyperParams {
        iterations: 500,
        batch_size: 4,
        ..tiny_hyper(GnnMode::Heterogeneous)
    };
    let model = GnnModel::init(hyper.clone(), 2, 3).unwrap();
    let out = train(model, &data, &hyper, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(out.loss_trace.len(), 500);
    assert!(
        out.loss_trace[499] < 0.1 * out.loss_trace[0],
        "{:?}",
        (out.loss_trace[0], out.loss_trace[499])
    );
}

#[test]
fn zero_learning_rate_freezes_the_model() {
    let data = tiny_dataset(4, 16);
    let hyper = GnnHyperParams {
        iterations: 20,
        learning_rate: 0.0,
        ..tiny_hyper(GnnMode::Heterogeneous)
    };
    let model = GnnModel::init(hyper.clone(), 2, 3).unwrap();
    let out = train(model.clone(), &data, &hyper, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(out.model, model);
}

#[test]
fn training_is_deterministic_and_keeps_ties() {
    let data = tiny_dataset(5, 32);
    let hyper = GnnHyperParams {
        iterations: 50,
        batch_size: 16,
        ..tiny_hyper(GnnMode::Homogeneous)
    };
    let run = || {
        let model = GnnModel::init(hyper.clone(), 2, 8).unwrap();
        train(model, &data, &hyper, &mut ChaCha8Rng::seed_from_u64(2)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.model, b.model);
    let w = &a.model.params.w;
    assert!(w[1] == w[2] && w[1] == w[3] && w[5] == w[6] && w[5] == w[7]);
}

#[test]
fn training_rejects_bad_inputs() {
    let hyper = tiny_hyper(GnnMode::Heterogeneous);
    let model = GnnModel::init(hyper.clone(), 2, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(train(model.clone(), &[], &hyper, &mut rng).is_err());
    let mut data = tiny_dataset(1, 2);
    data[0].label.push(0.0);
    assert!(train(model.clone(), &data, &hyper, &mut rng).is_err());
    let other = GnnHyperParams {
        mode: GnnMode::Homogeneous,
        ..hyper.clone()
    };
    assert!(train(model, &tiny_dataset(1, 2), &other, &mut rng).is_err());
}

#[test]
fn divergence_is_reported() {
    let mut data = tiny_dataset(6, 8);
    // A corrupt (non-finite) input poisons the loss on the first draw.
    for s in &mut data {
        s.input.features = vec![f64::NAN, 0.0];
    }
    let hyper = GnnHyperParams {
        iterations: 10,
        ..tiny_hyper(GnnMode::Heterogeneous)
    };
    let model = GnnModel::init(hyper.clone(), 2, 0).unwrap();
    match train(model, &data, &hyper, &mut ChaCha8Rng::seed_from_u64(0)) {
        Err(Error::Divergence { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|o| o.loss_trace.len())),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn random_fixtures_pass_gradient_check(seed in 0u64..1_000_000, homo in any::<bool>()) {
        let mode = if homo { GnnMode::Homogeneous } else { GnnMode::Heterogeneous };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = off_kink(GnnModel::init(tiny_hyper(mode), 2, seed).unwrap(), seed);
        let input = random_input(&mut rng, 2);
        let label = random_label(&mut rng, 2);
        prop_assert!(gradient_check(&model, &input, &label) <= 0.0);
    }
}

proptest! {
    #[test]
    fn permuting_a_class_is_bit_identical(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = GnnModel::init(GnnHyperParams { embedding_dim: 8, head_layer_sizes: vec![4], ..GnnHyperParams::default() }, 3, seed).unwrap();
        let input = random_input(&mut rng, 3);
        let mut shuffled = input.clone();
        shuffled.first_hop.reverse();
        for h in &mut shuffled.first_hop {
            h.second_hop.reverse();
        }
        prop_assert_eq!(model.encode(&input).unwrap(), model.encode(&shuffled).unwrap());
    }

    #[test]
    fn output_shapes_are_fixed(seed in 0u64..100_000, homo in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mode = if homo { GnnMode::Homogeneous } else { GnnMode::Heterogeneous };
        let model = GnnModel::init(GnnHyperParams { mode, ..GnnHyperParams::default() }, 4, seed).unwrap();
        let input = random_input(&mut rng, 4);
        prop_assert_eq!(model.encode(&input).unwrap().len(), 64);
        let y = model.logits(&input).unwrap();
        prop_assert_eq!(y.len(), 5);
        prop_assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn homogeneous_ignores_edge_types(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = GnnModel::init(tiny_hyper(GnnMode::Homogeneous), 2, seed).unwrap();
        let input = random_input(&mut rng, 2);
        let mut relabeled = input.clone();
        for h in &mut relabeled.first_hop {
            h.edge_type = EdgeType::Comm;
            h.second_hop.iter_mut().for_each(|n| n.edge_type = EdgeType::Interference);
        }
        prop_assert_eq!(model.encode(&input).unwrap(), model.encode(&relabeled).unwrap());
    }

    #[test]
    fn loss_is_nonnegative(y in proptest::collection::vec(-50.0f64..50.0, 1..8), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = y.iter().map(|_| rng.gen_range(0..2) as f64).collect();
        prop_assert!(bce_loss(&y, &z) >= 0.0);
    }
}
