//! Fixtures shared by the benchmarks.

use moldloop::control::{collect_cycles, fit_inverse, random_support, InverseModel, ModelSpec};
use moldloop::nnet::{Network, Topology};
use moldloop::plant::{ParamKind, Plant, ProcessParams};
use moldloop::rng::SeedTree;

/// A randomly initialized feed-forward net with identity normalization.
pub fn random_net(sizes: &[usize], seed: u64) -> Network {
    let mut net = Network::init(&Topology::feed_forward(sizes), seed).expect("valid topology");
    net.input_norm = Some(moldloop::nnet::Normalizer::identity(sizes[0]));
    net.output_norm = Some(moldloop::nnet::Normalizer::identity(sizes[sizes.len() - 1]));
    net
}

/// Inverse model trained on noiseless plant data, as used by the loop.
pub fn trained_inverse(seed: u64) -> InverseModel {
    let plant = Plant::noiseless();
    let seeds = SeedTree::new(seed);
    let ranges = [(ParamKind::HoldPressure, 340.0, 460.0), (ParamKind::MeltTemp, 215.0, 245.0)];
    let support = random_support(&ProcessParams::NOMINAL, &ranges, 120, &seeds).expect("ranges in machine limits");
    let cycles = collect_cycles(&plant, None, &support, 1, 0, &seeds).expect("plant runs");
    fit_inverse(&cycles, &ModelSpec::inverse()).expect("varied support")
}
