#![allow(dead_code)]

use elicit_core::descriptors::{build_descriptors, DescriptorParams};
use elicit_core::evaluation::{generate_synthetic, SyntheticProblem, SyntheticSpec};
use elicit_core::prediction::SamplerConfig;
use elicit_core::session::{ElicitationData, SessionConfig};

pub fn problem(k: usize, n: usize, n_relevant: usize, seed: u64) -> (SyntheticProblem, ElicitationData) {
    let spec = SyntheticSpec {
        n_aux_docs: 400,
        ..SyntheticSpec::new(k, n, n_relevant, 3.0)
    };
    let p = generate_synthetic(&spec, seed).unwrap();
    let z = build_descriptors(
        &p.aux,
        p.train.feature_names(),
        DescriptorParams {
            n_clusters: 8,
            train_sample_size: None,
            seed,
        },
    )
    .unwrap();
    let data = ElicitationData::new(p.train.clone(), p.test.clone(), z).unwrap();
    (p, data)
}

/// Short chains keep multi-iteration session tests fast.
pub fn quick_config(max_iterations: usize, batch_size: usize) -> SessionConfig {
    SessionConfig {
        max_iterations,
        batch_size,
        sampler: SamplerConfig {
            iterations: 400,
            burn_in: 200,
            ..SamplerConfig::default()
        },
        ..SessionConfig::default()
    }
}
