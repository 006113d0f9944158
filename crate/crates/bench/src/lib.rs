//! Shared fixtures for the pipeline benchmarks.

use ipromp::data::synth::{synth_dataset, SynthSpec};
use ipromp::data::DEFAULT_EMG_WINDOW;
use ipromp::{BasisSystem, ObservationNoise, PartialObservation, TaskLibrary, TrainConfig};

pub const BASIS_N: usize = 20;
pub const T_NORM: usize = 100;

/// A three-task library trained on the default synthetic set, plus one test
/// episode observed up to `ratio`.
pub fn fixture(ratio: f64) -> (TaskLibrary, PartialObservation) {
    let ds = synth_dataset(&SynthSpec::default()).expect("default synthetic spec is valid");
    let layout = ds.train[0].1[0].layout().expect("synthetic channels are well formed");
    let basis = BasisSystem::with_defaults(BASIS_N, T_NORM).expect("valid basis");
    let library = TaskLibrary::train(&ds.train, &layout, &TrainConfig::new(basis), Some(DEFAULT_EMG_WINDOW))
        .expect("training succeeds");
    let obs = library
        .observe(&ds.test[0].1[0], ratio, ObservationNoise::uniform(1e-2))
        .expect("episode matches the library");
    (library, obs)
}

/// A smooth test trajectory of `len` samples.
pub fn trajectory(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let x = i as f64 / (len - 1) as f64;
            (3.0 * x).sin() + 0.5 * x * x
        })
        .collect()
}
