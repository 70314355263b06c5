//! Shared fixtures for the trainer benchmarks.

use elmstream_core::plant::InputDistribution;
use elmstream_core::{teacher_stream, ActivationKind, Dataset, HiddenLayer, SampleStream};
use nalgebra::{DMatrix, DVector};

pub const INPUT_DIM: usize = 5;
pub const OUTPUT_DIM: usize = 2;

/// Realizable teacher stream with precomputed hidden features.
pub struct Fixture {
    pub layer: HiddenLayer,
    pub stream: SampleStream,
    pub features: Vec<DVector<f64>>,
}

impl Fixture {
    pub fn new(hidden_dim: usize, samples: usize, seed: u64) -> Self {
        let layer = HiddenLayer::new(INPUT_DIM, hidden_dim, ActivationKind::Sigmoid, seed).expect("layer");
        let w_star = DMatrix::from_fn(hidden_dim, OUTPUT_DIM, |i, j| ((i * 7 + j * 3) % 11) as f64 / 110.0 - 0.05);
        let stream = teacher_stream(
            &layer,
            &w_star,
            InputDistribution::Uniform { lo: -1.0, hi: 1.0 },
            samples,
            seed.wrapping_add(1),
        )
        .expect("stream");
        let features = stream.iter().map(|s| layer.map(&s.x).expect("features")).collect();
        Self {
            layer,
            stream,
            features,
        }
    }

    pub fn dataset(&self, rows: std::ops::Range<usize>) -> Dataset {
        self.stream.to_dataset(rows).expect("dataset")
    }
}
