//! Prints a ready-to-run TOML config for the synthetic benchmark.
//!
//! ```sh
//! cargo run --example sample_config > run.toml
//! adafd run --config run.toml --out out/
//! ```

use adafd::config::{CorpusSource, FeatureConfig, RunConfig};
use adafd::corpus::SynthSpec;
use adafd::fed::{ExperimentSpec, Method};
use adafd::model::{Architecture, Optimizer, TrainingConfig};
use adafd::partition::{PartitionSpec, Regime};
use adafd::strategy::StrategyConfig;

fn experiment(method: Method) -> ExperimentSpec {
    ExperimentSpec {
        method,
        rounds: 5,
        local_epochs: 3,
        client_archs: vec![
            Architecture::SoftmaxLinear,
            Architecture::Mlp { hidden: vec![16] },
            Architecture::Mlp { hidden: vec![32] },
            Architecture::Mlp { hidden: vec![64] },
            Architecture::Mlp { hidden: vec![128] },
        ],
        server_arch: Architecture::Mlp { hidden: vec![64] },
        strategy: StrategyConfig::default(),
        local_training: TrainingConfig {
            learning_rate: 0.01,
            epochs: 3,
            batch_size: 32,
            seed: 0,
            optimizer: Optimizer::Adam,
        },
        server_training: TrainingConfig {
            learning_rate: 0.01,
            epochs: 2,
            batch_size: 32,
            seed: 0,
            optimizer: Optimizer::Adam,
        },
        local_distill_epochs: 1,
        tau: 1.0,
        seed: 0,
        parallel_clients: true,
        force_uniform_weights: false,
        force_distill_mode: None,
    }
}

fn main() {
    let config = RunConfig {
        corpus: CorpusSource::Synthetic {
            spec: SynthSpec {
                num_domains: 5,
                num_classes: 3,
                examples_per_domain: 2500,
                ..SynthSpec::default()
            },
        },
        features: FeatureConfig::default(),
        partition: PartitionSpec {
            num_clients: 5,
            alpha: 1.0,
            regime: Regime::MultiDomainNonIid,
            public_fraction: 0.2,
            split_ratio: (8, 1, 1),
            seed: 0,
            global_test_alpha: 0.8,
        },
        experiments: vec![experiment(Method::AdafdEnwc), experiment(Method::FedAvg)],
        output_dir: "out".into(),
        seed: 42,
        llm: None,
    };
    print!("{}", config.to_toml().unwrap());
}
