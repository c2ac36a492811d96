//! End-to-end pipeline checks through the CLI binary: config round-trip,
//! partition and run artifacts, comparison table, determinism, exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

use adafd::config::{CorpusSource, FeatureConfig, RunConfig};
use adafd::corpus::SynthSpec;
use adafd::fed::{ExperimentSpec, Method};
use adafd::model::{Architecture, Optimizer, TrainingConfig};
use adafd::partition::{PartitionPlan, PartitionSpec, Regime};
use adafd::strategy::StrategyConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adafd"))
}

fn experiment(method: Method) -> ExperimentSpec {
    ExperimentSpec {
        method,
        rounds: 2,
        local_epochs: 2,
        client_archs: vec![Architecture::SoftmaxLinear],
        server_arch: Architecture::SoftmaxLinear,
        strategy: StrategyConfig::default(),
        local_training: TrainingConfig {
            learning_rate: 0.1,
            epochs: 2,
            batch_size: 16,
            seed: 0,
            optimizer: Optimizer::Sgd,
        },
        server_training: TrainingConfig {
            learning_rate: 0.1,
            epochs: 1,
            batch_size: 16,
            seed: 0,
            optimizer: Optimizer::Sgd,
        },
        local_distill_epochs: 1,
        tau: 1.0,
        seed: 0,
        parallel_clients: true,
        force_uniform_weights: false,
        force_distill_mode: None,
    }
}

fn sample_config(out: &Path) -> RunConfig {
    RunConfig {
        corpus: CorpusSource::Synthetic {
            spec: SynthSpec {
                num_domains: 3,
                num_classes: 2,
                examples_per_domain: 120,
                vocab_per_domain: 50,
                label_signal: 0.4,
                seed: 1,
                ..SynthSpec::default()
            },
        },
        features: FeatureConfig {
            max_features: 500,
            ..FeatureConfig::default()
        },
        partition: PartitionSpec {
            num_clients: 3,
            alpha: 1.0,
            regime: Regime::MultiDomain,
            public_fraction: 0.2,
            split_ratio: (8, 1, 1),
            seed: 2,
            global_test_alpha: 0.8,
        },
        experiments: vec![experiment(Method::AdafdEnwc), experiment(Method::FedAvg)],
        output_dir: out.to_path_buf(),
        seed: 7,
        llm: None,
    }
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    let config = sample_config(dir);
    std::fs::write(&path, config.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn partition_then_run_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());

    let status = bin()
        .args(["partition", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = std::fs::read_to_string(dir.path().join("partition_manifest.json")).unwrap();
    let plan = PartitionPlan::from_json(&manifest).unwrap();
    assert_eq!(plan.num_clients(), 3);
    assert!(dir.path().join("distribution_report.json").exists());

    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["adafd_enwc", "fedavg"] {
        for suffix in ["traces.jsonl", "report.jsonl", "report.csv", "server.json"] {
            let path = dir.path().join(format!("{name}_{suffix}"));
            assert!(path.exists(), "missing {}", path.display());
        }
    }

    let comparison = dir.path().join("comparison.csv");
    let status = bin()
        .arg("compare")
        .arg(dir.path().join("adafd_enwc_report.jsonl"))
        .arg(dir.path().join("fedavg_report.jsonl"))
        .arg("--out")
        .arg(&comparison)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&comparison).unwrap();
    assert!(csv.starts_with("method,global,"));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains('*'), "no best-score flags in:\n{csv}");
}

#[test]
fn method_filter_restricts_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .args(["--method", "fedavg"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("fedavg_report.jsonl").exists());
    assert!(!dir.path().join("adafd_enwc_report.jsonl").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config_a = write_config(dir_a.path());
    let config_b = write_config(dir_b.path());
    for (config, dir) in [(&config_a, &dir_a), (&config_b, &dir_b)] {
        let status = bin()
            .args(["run", "--config"])
            .arg(config)
            .arg("--out")
            .arg(dir.path())
            .args(["--method", "adafd_enwc"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for suffix in ["traces.jsonl", "report.jsonl", "server.json"] {
        let a = std::fs::read(dir_a.path().join(format!("adafd_enwc_{suffix}"))).unwrap();
        let b = std::fs::read(dir_b.path().join(format!("adafd_enwc_{suffix}"))).unwrap();
        assert_eq!(a, b, "nondeterministic {suffix}");
    }
}

#[test]
fn malformed_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "this is not a run config").unwrap();
    let output = bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    let output = bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .args(["--method", "nonsense"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}
