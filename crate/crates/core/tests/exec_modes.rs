//! Sequential and parallel execution must agree bit for bit. Kept in its own
//! binary because the mode is process-wide.

use echogan::dataio::{batch_iterator, make_synthetic_fixture, ExperimentName};
use echogan::exec::{self, ExecMode};
use echogan::networks::ModelConfig;
use echogan::trainer::TrainConfig;
use echogan::{ConditionSpec, LossReport, Trainer};

fn run() -> (Vec<LossReport>, Vec<Vec<f32>>) {
    let model = ModelConfig {
        image_size: 128,
        generator_base_channels: 4,
        discriminator_base_channels: 4,
        ..ModelConfig::default()
    };
    let mut t = Trainer::new(TrainConfig { batch_size: 4, ..TrainConfig::default() }, model).unwrap();
    let recs = make_synthetic_fixture(8, 6, 128).unwrap();
    let mut stream = batch_iterator(&recs, &ConditionSpec::new(ExperimentName::D), 4, 0).unwrap();
    let reports = (0..4).map(|_| t.train_step(&stream.next_batch()).unwrap()).collect();
    let weights = t.generator().network().named_tensors().into_iter().map(|(_, v)| v.to_vec()).collect();
    (reports, weights)
}

#[test]
fn modes_agree() {
    exec::set_mode(ExecMode::Sequential);
    let sequential = run();
    exec::set_mode(ExecMode::Parallel);
    let parallel = run();
    assert_eq!(sequential, parallel);
}
