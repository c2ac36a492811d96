//! Command implementations behind the CLI: corpus building, partitioning,
//! experiment runs, comparisons, and sweeps. All file writes are
//! write-then-rename so interrupted runs leave no partial outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::{CorpusSource, RunConfig};
use crate::corpus::{
    build_vocabulary, featurize, ingest, synthesize_corpus, Corpus, FeatureMatrix, Vocabulary,
};
use crate::error::{Error, Result};
use crate::fed::{run_experiment, ExperimentSpec, Method};
use crate::metrics::{
    beta_sweep, evaluate, reports_to_csv, rounds_sweep, weight_trace_to_csv, EvalReport,
};
use crate::partition::{build_plan, distribution_report, PartitionPlan};
use crate::strategy::{HttpProvider, MockProvider, Provider};

/// Writes atomically: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn build_corpus(config: &RunConfig) -> Result<Corpus> {
    match &config.corpus {
        CorpusSource::Synthetic { spec } => Ok(synthesize_corpus(spec)),
        CorpusSource::File {
            path,
            format,
            schema,
        } => ingest(path, *format, schema),
    }
}

fn method_name(method: Method) -> &'static str {
    match method {
        Method::AdafdRnwc => "adafd_rnwc",
        Method::AdafdEnwc => "adafd_enwc",
        Method::AdafdLlmwc => "adafd_llmwc",
        Method::FedAvg => "fedavg",
        Method::Dsfl => "dsfl",
        Method::Mhat => "mhat",
        Method::FedKd => "fedkd",
        Method::Centralized => "centralized",
        Method::LocalOnly => "local_only",
    }
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(b);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Featurization shared by all commands: vocabulary from the public split
/// only, then features for the whole corpus.
pub fn prepare_features(
    config: &RunConfig,
    corpus: &Corpus,
    plan: &PartitionPlan,
) -> Result<(Vocabulary, FeatureMatrix)> {
    let public_corpus = Corpus {
        examples: plan.public.iter().map(|&i| corpus.examples[i].clone()).collect(),
        num_classes: corpus.num_classes,
        label_names: corpus.label_names.clone(),
    };
    let vocab = build_vocabulary(
        &public_corpus,
        config.features.max_features,
        config.features.vocab_mode,
    )?;
    let features = featurize(corpus, &vocab, config.features.scheme);
    Ok((vocab, features))
}

/// Builds the partition plan and writes the manifest plus the distribution
/// report to `out`.
pub fn cmd_partition(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let corpus = build_corpus(config)?;
    let mut spec = config.partition.clone();
    spec.seed = mix(config.seed, spec.seed);
    let plan = build_plan(&corpus, &spec)?;
    let manifest_path = out.join("partition_manifest.json");
    write_atomic(&manifest_path, &plan.to_json()?)?;
    let report = distribution_report(&plan, &corpus, 20);
    write_atomic(
        &out.join("distribution_report.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    Ok(manifest_path)
}

fn make_provider(config: &RunConfig) -> Result<Option<Box<dyn Provider>>> {
    match &config.llm {
        Some(llm_config) => Ok(Some(Box::new(HttpProvider::new(llm_config.clone())?))),
        None => Ok(None),
    }
}

pub struct RunOutcome {
    pub reports: Vec<EvalReport>,
    pub files: Vec<PathBuf>,
}

/// Runs every (filtered) experiment: traces JSONL, eval report JSONL + CSV,
/// and a model checkpoint per experiment.
pub fn cmd_run(
    config: &RunConfig,
    out: &Path,
    methods: &[Method],
    provider_override: Option<&dyn Provider>,
) -> Result<RunOutcome> {
    let corpus = build_corpus(config)?;
    let mut pspec = config.partition.clone();
    pspec.seed = mix(config.seed, pspec.seed);
    let plan = build_plan(&corpus, &pspec)?;
    let (_, features) = prepare_features(config, &corpus, &plan)?;
    let owned_provider = make_provider(config)?;
    let provider: Option<&dyn Provider> =
        provider_override.or(owned_provider.as_deref());

    let mut reports = Vec::new();
    let mut files = Vec::new();
    for exp in &config.experiments {
        if !methods.is_empty() && !methods.contains(&exp.method) {
            continue;
        }
        let mut spec: ExperimentSpec = exp.clone();
        spec.seed = mix(config.seed, spec.seed);
        let name = method_name(spec.method);
        let result = run_experiment(&spec, &plan, &features, provider, None)?;

        let traces_path = out.join(format!("{name}_traces.jsonl"));
        let mut lines = String::new();
        for t in &result.traces {
            lines.push_str(&serde_json::to_string(t)?);
            lines.push('\n');
        }
        write_atomic(&traces_path, &lines)?;
        files.push(traces_path);

        let report = match &result.server {
            Some(server) => evaluate(server, &plan, &features, name, config.seed)?,
            None => {
                // local-only: average the client models' scores
                let mut acc: Option<EvalReport> = None;
                for clf in &result.clients {
                    let r = evaluate(clf, &plan, &features, name, config.seed)?;
                    acc = Some(match acc {
                        None => r,
                        Some(mut a) => {
                            a.global_f1 += r.global_f1;
                            a.client_test_aggregate_f1 += r.client_test_aggregate_f1;
                            for (d, v) in r.per_domain_f1 {
                                *a.per_domain_f1.get_mut(&d).unwrap() += v;
                            }
                            a
                        }
                    });
                }
                let mut a = acc.unwrap();
                let k = result.clients.len() as f64;
                a.global_f1 /= k;
                a.client_test_aggregate_f1 /= k;
                for v in a.per_domain_f1.values_mut() {
                    *v /= k;
                }
                a
            }
        };
        let report_path = out.join(format!("{name}_report.jsonl"));
        write_atomic(&report_path, &format!("{}\n", serde_json::to_string(&report)?))?;
        files.push(report_path);
        let csv_path = out.join(format!("{name}_report.csv"));
        write_atomic(&csv_path, &reports_to_csv(std::slice::from_ref(&report)))?;
        files.push(csv_path);

        if let Some(server) = &result.server {
            let ckpt_path = out.join(format!("{name}_server.json"));
            write_atomic(&ckpt_path, &server.to_json()?)?;
            files.push(ckpt_path);
        }
        reports.push(report);
    }
    Ok(RunOutcome { reports, files })
}

/// Reads eval-report JSONL files and emits a methods-by-testsets CSV matrix
/// with the best score per column flagged.
pub fn cmd_compare(report_files: &[PathBuf], out: &Path) -> Result<()> {
    if report_files.len() < 2 {
        return Err(Error::InvalidInput("compare needs at least 2 report files".into()));
    }
    let mut reports: Vec<EvalReport> = Vec::new();
    for path in report_files {
        let text = std::fs::read_to_string(path)?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            reports.push(serde_json::from_str(line)?);
        }
    }
    let columns: Vec<String> = {
        let first: Vec<String> = reports[0].per_domain_f1.keys().cloned().collect();
        for r in &reports[1..] {
            let cols: Vec<String> = r.per_domain_f1.keys().cloned().collect();
            if cols != first {
                return Err(Error::InvalidInput(format!(
                    "mismatched test sets: {first:?} vs {cols:?}"
                )));
            }
        }
        let mut cols = vec!["global".to_string()];
        cols.extend(first);
        cols
    };
    let score = |r: &EvalReport, col: &str| -> f64 {
        if col == "global" {
            r.global_f1
        } else {
            r.per_domain_f1[col]
        }
    };
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for col in &columns {
        let m = reports
            .iter()
            .map(|r| score(r, col))
            .fold(f64::NEG_INFINITY, f64::max);
        best.insert(col, m);
    }
    let mut csv = String::from("method");
    for col in &columns {
        csv.push_str(&format!(",{col}"));
    }
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.method);
        for col in &columns {
            let v = score(r, col);
            let flag = if (v - best[col.as_str()]).abs() < 1e-12 { "*" } else { "" };
            csv.push_str(&format!(",{v:.4}{flag}"));
        }
        csv.push('\n');
    }
    write_atomic(out, &csv)?;
    Ok(())
}

pub fn cmd_sweep_beta(config: &RunConfig, out: &Path, betas: &[f64]) -> Result<()> {
    let corpus = build_corpus(config)?;
    let mut pspec = config.partition.clone();
    pspec.seed = mix(config.seed, pspec.seed);
    let plan = build_plan(&corpus, &pspec)?;
    let (_, features) = prepare_features(config, &corpus, &plan)?;
    let base = config
        .experiments
        .iter()
        .find(|e| e.method == Method::AdafdEnwc)
        .ok_or_else(|| Error::Config("sweep-beta needs an adafd_enwc experiment".into()))?;
    let mut spec = base.clone();
    spec.seed = mix(config.seed, spec.seed);
    let points = beta_sweep(&spec, &plan, &features, betas, None)?;
    let reports: Vec<EvalReport> = points.iter().map(|p| p.report.clone()).collect();
    write_atomic(&out.join("beta_sweep.csv"), &reports_to_csv(&reports))?;
    for p in &points {
        write_atomic(
            &out.join(format!("beta_{}_weights.csv", p.value)),
            &weight_trace_to_csv(&p.weight_trace),
        )?;
    }
    Ok(())
}

pub fn cmd_sweep_rounds(config: &RunConfig, out: &Path, round_counts: &[usize]) -> Result<()> {
    let corpus = build_corpus(config)?;
    let mut pspec = config.partition.clone();
    pspec.seed = mix(config.seed, pspec.seed);
    let plan = build_plan(&corpus, &pspec)?;
    let (_, features) = prepare_features(config, &corpus, &plan)?;
    let mut reports = Vec::new();
    for exp in &config.experiments {
        // FedKD's schedule is a single one-shot distillation; a rounds curve
        // is not defined for it.
        if exp.method == Method::FedKd || !exp.method.is_federated() {
            continue;
        }
        let mut spec = exp.clone();
        spec.seed = mix(config.seed, spec.seed);
        let points = rounds_sweep(&spec, &plan, &features, round_counts, None)?;
        reports.extend(points.into_iter().map(|p| p.report));
    }
    write_atomic(&out.join("rounds_sweep.csv"), &reports_to_csv(&reports))?;
    Ok(())
}

/// Scripted provider for tests and offline llmwc runs.
pub fn scripted_provider(responses: Vec<String>) -> MockProvider {
    MockProvider::new(responses)
}
