use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::error::Error;
use crate::rng::rng_from_seed;

fn no_val(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        validation_fraction: 0.0,
        seed,
        ..TrainConfig::default()
    }
}

fn random_batch(seed: u64, n: usize, ni: usize, no: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = rng_from_seed(seed);
    let xs = (0..n).map(|_| (0..ni).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let ts = (0..n).map(|_| (0..no).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (xs, ts)
}

#[test]
fn init_is_deterministic_per_seed() {
    let t = Topology::feed_forward(&[3, 5, 2]);
    assert_eq!(Network::init(&t, 9).unwrap(), Network::init(&t, 9).unwrap());
    assert_ne!(Network::init(&t, 9).unwrap().params(), Network::init(&t, 10).unwrap().params());
}

#[test]
fn init_shapes_and_bounds() {
    let net = Network::init(&Topology::feed_forward(&[9, 21, 2]), 1).unwrap();
    let shapes: Vec<_> = net.layers.iter().map(|l| (l.rows, l.cols, l.bias.len())).collect();
    assert_eq!(shapes, vec![(21, 9, 21), (2, 21, 2)]);
    for l in &net.layers {
        let bound = 1.0 / (l.cols as f64).sqrt();
        assert!(l.weights.iter().chain(&l.bias).all(|w| w.abs() <= bound));
    }
    assert!(!net.is_trained());
}

#[test]
fn invalid_topologies_are_shape_errors() {
    for t in [
        Topology::feed_forward(&[3]),
        Topology::feed_forward(&[3, 0, 1]),
        Topology::jordan_elman(&[2, 3, 1], 1.0),
        Topology::jordan_elman(&[2, 1], 0.5),
        Topology::narx(&[4, 6, 2], 0, 1),
        Topology::narx(&[5, 6, 2], 2, 1),
    ] {
        assert!(matches!(Network::init(&t, 0), Err(Error::Shape(_))), "{t:?}");
    }
}

#[test]
fn zero_net_outputs_zero() {
    let net = Network::zeroed(&Topology::feed_forward(&[4, 7, 3])).unwrap();
    assert_eq!(net.forward(&[1.0, -3.0, 8.0, 0.5]).unwrap(), vec![0.0; 3]);
}

#[test]
fn single_linear_unit_arithmetic() {
    let mut net = Network::zeroed(&Topology::feed_forward(&[1, 1])).unwrap();
    net.set_params(&[2.0, 1.0]);
    net.input_norm = Some(Normalizer::identity(1));
    net.output_norm = Some(Normalizer::identity(1));
    assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
}

#[test]
fn forward_rejects_wrong_length() {
    let net = Network::init(&Topology::feed_forward(&[2, 2, 1]), 0).unwrap();
    assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
}

#[test]
fn forward_is_pure() {
    let net = Network::init(&Topology::feed_forward(&[3, 4, 2]), 5).unwrap();
    let before = net.clone();
    let a = net.forward(&[0.1, 0.2, 0.3]).unwrap();
    let b = net.forward(&[0.1, 0.2, 0.3]).unwrap();
    assert_eq!(a, b);
    assert_eq!(net, before);
}

fn xor_data() -> Dataset {
    let corners = [([0.0, 0.0], 0.0), ([0.0, 1.0], 1.0), ([1.0, 0.0], 1.0), ([1.0, 1.0], 0.0)];
    let mut d = Dataset::default();
    for _ in 0..3 {
        for (x, y) in corners {
            d.push(x.to_vec(), vec![y]);
        }
    }
    d
}

#[test]
fn xor_is_learned() {
    let data = xor_data();
    let init = Network::init(&Topology::feed_forward(&[2, 2, 1]), 3).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.5,
        ..no_val(2000, 3)
    };
    let (net, hist) = train(&init, &data, &cfg).unwrap();
    let raw_mse: f64 = data
        .inputs
        .iter()
        .zip(&data.targets)
        .map(|(x, t)| (net.forward(x).unwrap()[0] - t[0]).powi(2))
        .sum::<f64>()
        / data.len() as f64;
    assert!(raw_mse < 0.01, "xor mse {raw_mse}");
    for (x, t) in data.inputs.iter().zip(&data.targets).take(4) {
        let y = net.forward(x).unwrap()[0];
        assert!((y - t[0]).abs() < 0.1, "xor({x:?}) = {y}");
    }
    assert!(!hist.epochs.is_empty());
}

#[test]
fn zero_epochs_returns_initial_net() {
    let init = Network::init(&Topology::feed_forward(&[2, 2, 1]), 3).unwrap();
    let (net, hist) = train(&init, &xor_data(), &no_val(0, 0)).unwrap();
    assert_eq!(net, init);
    assert!(hist.epochs.is_empty());
}

#[test]
fn training_preconditions() {
    let init = Network::init(&Topology::feed_forward(&[2, 2, 1]), 3).unwrap();
    let small = xor_data().subset(&[0, 1, 2]);
    assert!(matches!(train(&init, &small, &no_val(10, 0)), Err(Error::Range { .. })));
    let mut bad = xor_data();
    bad.inputs[0][0] = f64::NAN;
    assert!(train(&init, &bad, &no_val(10, 0)).is_err());
    let cfg = TrainConfig {
        validation_fraction: 0.7,
        ..no_val(10, 0)
    };
    assert!(matches!(train(&init, &xor_data(), &cfg), Err(Error::Range { .. })));
}

#[test]
fn divergence_names_the_epoch() {
    let init = Network::init(&Topology::feed_forward(&[2, 8, 1]), 3).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e6,
        ..no_val(100, 0)
    };
    match train(&init, &xor_data(), &cfg) {
        Err(Error::Divergence { epoch }) => assert!(epoch < 100),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn training_is_deterministic() {
    let (xs, ts) = random_batch(4, 40, 3, 2);
    let data = Dataset::new(xs, ts).unwrap();
    let init = Network::init(&Topology::feed_forward(&[3, 5, 2]), 8).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        seed: 8,
        ..TrainConfig::default()
    };
    let a = train(&init, &data, &cfg).unwrap();
    let b = train(&init, &data, &cfg).unwrap();
    assert_eq!(a.0.params(), b.0.params());
    assert_eq!(a.1, b.1);
}

#[test]
fn minibatches_above_full_batch_limit() {
    let (xs, ts) = random_batch(5, 600, 2, 1);
    let data = Dataset::new(xs, ts).unwrap();
    let init = Network::init(&Topology::feed_forward(&[2, 3, 1]), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let (_, hist) = train(&init, &data, &cfg).unwrap();
    assert_eq!(hist.epochs.len(), 3);
}

#[test]
fn normalization_fitted_on_training_split_only() {
    let mut data = Dataset::default();
    for i in 0..20 {
        data.push(vec![i as f64], vec![2.0 * i as f64]);
    }
    let cfg = TrainConfig {
        epochs: 1,
        validation_fraction: 0.5,
        ..TrainConfig::default()
    };
    let init = Network::init(&Topology::feed_forward(&[1, 2, 1]), 0).unwrap();
    let (net, _) = train(&init, &data, &cfg).unwrap();
    let (tr, _) = super::train::split(20, &cfg);
    let expect = Normalizer::fit(tr.iter().map(|&i| data.inputs[i].as_slice()), 1);
    assert_eq!(net.input_norm.unwrap(), expect);
}

/// Central-difference gradient of [`batch_mse`] with step `h`.
fn finite_difference(net: &Network, xs: &[Vec<f64>], ts: &[Vec<f64>], h: f64) -> Vec<f64> {
    let p = net.params();
    let mut probe = net.clone();
    (0..p.len())
        .map(|k| {
            let mut q = p.clone();
            q[k] = p[k] + h;
            probe.set_params(&q);
            let up = batch_mse(&probe, xs, ts).unwrap();
            q[k] = p[k] - h;
            probe.set_params(&q);
            let down = batch_mse(&probe, xs, ts).unwrap();
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest deviation within each layer relative to that layer's largest
/// gradient component.
fn per_layer_deviation(net: &Network, analytic: &Gradients, fd: &[f64]) -> f64 {
    let fd = Gradients::from_flat(net, fd);
    let mut worst: f64 = 0.0;
    for (a, f) in analytic.layers.iter().zip(&fd.layers) {
        for (ga, gf) in [(&a.weights, &f.weights), (&a.bias, &f.bias)] {
            let scale = gf.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            let dev = ga.iter().zip(gf).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            worst = worst.max(dev / scale);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = rng_from_seed(77);
    for case in 0..100u64 {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=5)];
        for _ in 0..depth {
            sizes.push(rng.random_range(1..=6));
        }
        sizes.push(rng.random_range(1..=3));
        let act = if case % 2 == 0 { Activation::Tanh } else { Activation::Logistic };
        let topo = Topology::feed_forward(&sizes).with_activation(act);
        let net = Network::init(&topo, case).unwrap();
        let n = rng.random_range(1..=8);
        let (xs, ts) = random_batch(1000 + case, n, sizes[0], *sizes.last().unwrap());
        let g = backprop_gradients(&net, &xs, &ts).unwrap();
        let fd = finite_difference(&net, &xs, &ts, 1e-5);
        let dev = per_layer_deviation(&net, &g, &fd);
        assert!(dev < 1e-6, "case {case} {}: deviation {dev:e}", topo.describe());
    }
}

#[test]
fn gradient_vanishes_at_exact_fit() {
    let mut net = Network::zeroed(&Topology::feed_forward(&[1, 1])).unwrap();
    net.set_params(&[2.0, 1.0]);
    let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
    let ts: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 * x[0] + 1.0]).collect();
    assert!(backprop_gradients(&net, &xs, &ts).unwrap().norm() < 1e-8);
}

#[test]
fn duplicated_batch_has_same_gradient() {
    let net = Network::init(&Topology::feed_forward(&[3, 4, 2]), 2).unwrap();
    let (xs, ts) = random_batch(3, 6, 3, 2);
    let g1 = backprop_gradients(&net, &xs, &ts).unwrap().flatten();
    let xs2: Vec<_> = xs.iter().chain(&xs).cloned().collect();
    let ts2: Vec<_> = ts.iter().chain(&ts).cloned().collect();
    let g2 = backprop_gradients(&net, &xs2, &ts2).unwrap().flatten();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
    }
}

#[test]
fn empty_batch_is_range_error() {
    let net = Network::init(&Topology::feed_forward(&[1, 1]), 0).unwrap();
    assert!(matches!(backprop_gradients(&net, &[], &[]), Err(Error::Range { .. })));
}

#[test]
fn training_reduces_error_on_linear_data() {
    for seed in 0..20u64 {
        let mut rng = rng_from_seed(500 + seed);
        let mut data = Dataset::default();
        for _ in 0..40 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            data.push(x.clone(), vec![0.5 * x[0] - 1.5 * x[1] + 0.25 * x[2]]);
        }
        let init = Network::init(&Topology::feed_forward(&[3, 4, 1]), seed).unwrap();
        let (_, hist) = train(&init, &data, &no_val(300, seed)).unwrap();
        let first = hist.epochs.first().unwrap().train_mse;
        let last = hist.epochs.last().unwrap().train_mse;
        assert!(last < first, "seed {seed}: {first} -> {last}");
    }
}

#[test]
fn json_round_trip_is_bit_exact() {
    let (xs, ts) = random_batch(11, 30, 2, 2);
    let data = Dataset::new(xs, ts).unwrap();
    let init = Network::init(&Topology::feed_forward(&[2, 3, 2]), 4).unwrap();
    let (net, _) = train(&init, &data, &no_val(20, 0)).unwrap();
    let back = Network::from_json(&net.to_json().unwrap()).unwrap();
    let bits = |n: &Network| n.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&net), bits(&back));
    assert_eq!(net, back);

    let je = Network::init(&Topology::jordan_elman(&[1, 3, 1], 0.3), 2).unwrap();
    assert_eq!(Network::from_json(&je.to_json().unwrap()).unwrap(), je);
}

#[test]
fn json_rejects_bad_documents() {
    let net = Network::init(&Topology::feed_forward(&[2, 3, 1]), 4).unwrap();
    let json = net.to_json().unwrap();
    assert!(Network::from_json(&json.replace("\"version\": 1", "\"version\": 9")).is_err());
    let mut broken = net.clone();
    broken.layers[0].weights.pop();
    assert!(matches!(Network::from_json(&broken.to_json().unwrap()), Err(Error::Shape(_))));
}

// Jordan-Elman

#[test]
fn je_with_zero_decay_reduces_to_feed_forward() {
    let (xs, ts) = random_batch(21, 30, 2, 1);
    let data = Dataset::new(xs.clone(), ts.clone()).unwrap();
    let cfg = TrainConfig {
        epochs: 150,
        seed: 6,
        ..TrainConfig::default()
    };
    let ff = Network::init(&Topology::feed_forward(&[2, 4, 1]), 6).unwrap();
    let je = Network::init(&Topology::jordan_elman(&[2, 4, 1], 0.0), 6).unwrap();
    assert_eq!(ff.layers, je.layers);
    let seqs: Vec<JeSequence> = xs
        .iter()
        .zip(&ts)
        .map(|(x, t)| JeSequence {
            conditioning: vec![],
            query: Some(x.clone()),
            target: t.clone(),
        })
        .collect();
    let (ff_net, ff_hist) = train(&ff, &data, &cfg).unwrap();
    let (je_net, je_hist) = je_train(&je, &seqs, &cfg).unwrap();
    assert_eq!(ff_net.layers, je_net.layers);
    assert_eq!(ff_hist, je_hist);
}

#[test]
fn je_train_requires_recurrence() {
    let ff = Network::init(&Topology::feed_forward(&[1, 2, 1]), 0).unwrap();
    assert!(matches!(je_train(&ff, &[], &TrainConfig::default()), Err(Error::Mode(_))));
    assert!(matches!(ff.session(), Err(Error::Mode(_))));
}

#[test]
fn je_context_reaches_a_fixed_point_on_constant_input() {
    let seqs: Vec<JeSequence> = (0..12)
        .map(|i| {
            let level = 0.5 + 0.1 * (i % 4) as f64;
            JeSequence {
                conditioning: vec![vec![level]; 6],
                query: None,
                target: vec![level],
            }
        })
        .collect();
    let init = Network::init(&Topology::jordan_elman(&[1, 4, 1], 0.5), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 3000,
        learning_rate: 0.02,
        ..no_val(3000, 1)
    };
    let (net, hist) = je_train(&init, &seqs, &cfg).unwrap();
    assert!(hist.final_train_mse().unwrap() < 1e-3, "{:?}", hist.final_train_mse());
    for s in seqs.iter().take(4) {
        let y = net.je_predict(&s.conditioning, None).unwrap()[0];
        assert!((y - s.target[0]).abs() < 0.02, "{y} vs {}", s.target[0]);
    }
    // Context iteration on a held input contracts to a fixed point.
    let mut session = net.session().unwrap();
    let mut deltas = Vec::new();
    for _ in 0..60 {
        let before = session.context.clone();
        net.step(&mut session, Some(&[0.6])).unwrap();
        deltas.push(before.iter().zip(&session.context).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    assert!(deltas[59] < 1e-6 && deltas[59] < deltas[5], "{deltas:?}");
}

#[test]
fn je_training_is_deterministic() {
    let seqs: Vec<JeSequence> = (0..12)
        .map(|i| JeSequence {
            conditioning: vec![vec![i as f64 * 0.1], vec![i as f64 * 0.2]],
            query: None,
            target: vec![i as f64 * 0.3],
        })
        .collect();
    let init = Network::init(&Topology::jordan_elman(&[1, 3, 1], 0.4), 2).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        ..TrainConfig::default()
    };
    assert_eq!(je_train(&init, &seqs, &cfg).unwrap().0, je_train(&init, &seqs, &cfg).unwrap().0);
}

// NARX

#[test]
fn narx_linear_core_matches_arx_formula() {
    // y(t) = a1 u1(t) + a2 u1(t-1) + b u2(t) + b2 u2(t-1) + c y(t-1) + d y(t-2) + e
    let topo = Topology::narx(&[6, 1], 2, 2);
    let mut net = Network::zeroed(&topo).unwrap();
    // Regressor order: u(t) = [u1,u2], u(t-1), y(t-1), y(t-2)
    let w = [0.5, -0.25, 0.125, 2.0, 0.75, -0.3];
    let mut p = w.to_vec();
    p.push(0.1);
    net.set_params(&p);
    let u = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, -2.0]];
    let y = vec![vec![0.4], vec![-0.6]];
    let got = narx_predict(&net, &u, &y).unwrap()[0];
    let expect = 0.5 * 3.0 - 0.25 * -2.0 + 0.125 * -1.0 + 2.0 * 0.5 + 0.75 * -0.6 - 0.3 * 0.4 + 0.1;
    assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
}

#[test]
fn narx_zero_net_and_histories() {
    let net = Network::zeroed(&Topology::narx(&[4, 6, 6, 2], 1, 1)).unwrap();
    assert_eq!(narx_predict(&net, &[vec![0.0, 0.0]], &[vec![0.0, 0.0]]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn narx_four_six_six_two_is_accepted() {
    let topo = Topology::narx(&[4, 6, 6, 2], 1, 1);
    assert_eq!(topo.narx_exogenous(), Some(2));
    let net = Network::init(&topo, 0).unwrap();
    assert_eq!(net.layers.iter().map(|l| (l.rows, l.cols)).collect::<Vec<_>>(), vec![(6, 4), (6, 6), (2, 6)]);
}

#[test]
fn narx_short_history_is_range_error() {
    let net = Network::init(&Topology::narx(&[6, 3, 1], 2, 2), 0).unwrap();
    let r = narx_predict(&net, &[vec![1.0, 1.0]], &[vec![0.0], vec![0.0]]);
    assert!(matches!(r, Err(Error::Range { .. })));
    let ff = Network::init(&Topology::feed_forward(&[2, 1]), 0).unwrap();
    assert!(matches!(narx_predict(&ff, &[], &[]), Err(Error::Mode(_))));
}

#[test]
fn narx_learns_a_first_order_system() {
    let mut rng = rng_from_seed(3);
    let u: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    let mut y = vec![vec![0.0]];
    for t in 1..u.len() {
        y.push(vec![0.7 * y[t - 1][0] + 0.5 * u[t][0].tanh()]);
    }
    let data = narx_dataset(&u, &y, 1, 1).unwrap();
    assert_eq!(data.len(), 299);
    let init = Network::init(&Topology::narx(&[2, 5, 1], 1, 1), 3).unwrap();
    let (net, _) = train(&init, &data, &TrainConfig { epochs: 1500, ..TrainConfig::default() }).unwrap();
    let free = narx_free_run(&net, &u, &y[..1]).unwrap();
    let err = free.iter().zip(&y).map(|(a, b)| (a[0] - b[0]).powi(2)).sum::<f64>() / y.len() as f64;
    assert!(err.sqrt() < 0.05, "free-run rmse {}", err.sqrt());
}

// Topology search

fn quick_search(seed: u64) -> SearchConfig {
    SearchConfig {
        train: TrainConfig {
            epochs: 400,
            seed,
            validation_fraction: 0.3,
            ..TrainConfig::default()
        },
        refit_epochs: 150,
        compare_depth: false,
        ..SearchConfig::default()
    }
}

#[test]
fn search_on_linear_data_stays_small() {
    let mut rng = rng_from_seed(8);
    let mut data = Dataset::default();
    for _ in 0..120 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noise: f64 = rng.random_range(-0.05..0.05);
        data.push(x.clone(), vec![x[0] - 0.5 * x[1] + noise]);
    }
    let (topo, report) = topology_search(&data, 6, &quick_search(1)).unwrap();
    assert!(topo.layer_sizes[1] <= 2, "{report:#?}");
    assert_eq!(report.final_hidden, topo.layer_sizes[1]);
}

#[test]
fn search_prunes_noise_to_minimal_network() {
    let mut minimal = 0;
    for seed in 0..20u64 {
        let mut rng = rng_from_seed(900 + seed);
        let mut data = Dataset::default();
        for _ in 0..80 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            data.push(x, vec![rng.random_range(-1.0..1.0)]);
        }
        let (topo, _) = topology_search(&data, 4, &quick_search(seed)).unwrap();
        if topo.layer_sizes[1] == 1 {
            minimal += 1;
        }
    }
    assert!(minimal >= 18, "{minimal}/20 minimal");
}

#[test]
fn search_selection_is_consistent() {
    let mut rng = rng_from_seed(12);
    let mut data = Dataset::default();
    for _ in 0..100 {
        let x: f64 = rng.random_range(-2.0..2.0);
        data.push(vec![x], vec![(2.0 * x).sin() + rng.random_range(-0.05..0.05)]);
    }
    let cfg = SearchConfig {
        compare_depth: true,
        ..quick_search(2)
    };
    let (_, report) = topology_search(&data, 6, &cfg).unwrap();
    let sel = report.sizes.iter().find(|s| s.hidden == report.selected_hidden).unwrap();
    assert!(report.sizes.iter().filter(|s| s.hidden > sel.hidden).all(|s| sel.validation_mse <= s.validation_mse));
    assert_eq!(report.depth_comparison.len(), 3);
    assert!(report.final_hidden <= report.selected_hidden);
}

#[test]
fn search_rejects_zero_hidden() {
    let data = xor_data();
    assert!(matches!(topology_search(&data, 0, &SearchConfig::default()), Err(Error::Range { .. })));
}

proptest! {
    #[test]
    fn normalization_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..20)) {
        let n = Normalizer::fit(rows.iter().map(Vec::as_slice), 3);
        for r in &rows {
            let back = n.denormalize(&n.normalize(r));
            for (a, b) in r.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn params_round_trip(seed in any::<u64>()) {
        let mut net = Network::init(&Topology::jordan_elman(&[2, 3, 2], 0.2), seed).unwrap();
        let p = net.params();
        prop_assert_eq!(p.len(), net.n_params());
        net.set_params(&p);
        prop_assert_eq!(net.params(), p);
    }
}
