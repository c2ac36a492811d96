//! Synthetic multi-domain corpus generator.
//!
//! Each domain draws tokens from a domain-specific pool that shares an
//! `overlap` fraction of tokens with a common cross-domain pool. Labels are
//! sampled uniformly, then label-indicative tokens are injected with a
//! configurable strength so Bayes accuracy is controllable.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Example};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_domains: usize,
    pub num_classes: usize,
    pub examples_per_domain: usize,
    pub vocab_per_domain: usize,
    /// Fraction of each domain pool drawn from a shared common pool.
    pub overlap: f64,
    /// Probability that a token slot is drawn from the label-indicative set.
    pub label_signal: f64,
    pub seed: u64,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_domains: 5,
            num_classes: 2,
            examples_per_domain: 2000,
            vocab_per_domain: 400,
            overlap: 0.3,
            label_signal: 0.25,
            seed: 0,
            min_tokens: 8,
            max_tokens: 20,
        }
    }
}

/// Per-class token sets; one shared across domains and one per domain, so
/// part of the label signal transfers across domains and part does not.
struct DomainModel {
    pool: Vec<String>,
    label_sets: Vec<Vec<String>>,
}

pub fn synthesize_corpus(spec: &SynthSpec) -> Corpus {
    assert!(spec.num_domains > 0 && spec.num_classes > 0);
    assert!(spec.examples_per_domain > 0 && spec.vocab_per_domain > 0);
    assert!((0.0..=1.0).contains(&spec.overlap));
    assert!((0.0..=1.0).contains(&spec.label_signal));
    assert!(spec.min_tokens >= 1 && spec.max_tokens >= spec.min_tokens);

    let common_size = ((spec.overlap * spec.vocab_per_domain as f64).round() as usize)
        .min(spec.vocab_per_domain);
    let specific_size = spec.vocab_per_domain - common_size;
    let common_pool: Vec<String> = (0..common_size).map(|i| format!("c{i}")).collect();

    // Common label-indicative tokens: a disjoint slice of the common pool per class.
    let common_label_slice = if common_size > 0 {
        (common_size / (2 * spec.num_classes)).max(1).min(common_size / spec.num_classes.max(1))
    } else {
        0
    };
    let common_label_sets: Vec<Vec<String>> = (0..spec.num_classes)
        .map(|c| {
            common_pool
                .iter()
                .skip(c * common_label_slice)
                .take(common_label_slice)
                .cloned()
                .collect()
        })
        .collect();

    let domains: Vec<DomainModel> = (0..spec.num_domains)
        .map(|d| {
            let specific: Vec<String> = (0..specific_size).map(|i| format!("d{d}w{i}")).collect();
            let slice = if specific_size > 0 {
                (specific_size / (2 * spec.num_classes)).max(1).min(specific_size / spec.num_classes.max(1))
            } else {
                0
            };
            let label_sets: Vec<Vec<String>> = (0..spec.num_classes)
                .map(|c| {
                    let mut set: Vec<String> = specific
                        .iter()
                        .skip(c * slice)
                        .take(slice)
                        .cloned()
                        .collect();
                    set.extend(common_label_sets[c].iter().cloned());
                    set
                })
                .collect();
            let mut pool = specific;
            pool.extend(common_pool.iter().cloned());
            DomainModel { pool, label_sets }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut examples = Vec::with_capacity(spec.num_domains * spec.examples_per_domain);
    for (d, model) in domains.iter().enumerate() {
        let domain_name = format!("domain{d}");
        for _ in 0..spec.examples_per_domain {
            let label = rng.random_range(0..spec.num_classes);
            let n = rng.random_range(spec.min_tokens..=spec.max_tokens);
            let mut tokens = Vec::with_capacity(n);
            for _ in 0..n {
                let from_label = spec.label_signal > 0.0
                    && !model.label_sets[label].is_empty()
                    && rng.random::<f64>() < spec.label_signal;
                let tok = if from_label {
                    model.label_sets[label].choose(&mut rng).unwrap()
                } else {
                    model.pool.choose(&mut rng).unwrap()
                };
                tokens.push(tok.clone());
            }
            examples.push(Example {
                text: tokens.join(" "),
                label: Some(label),
                domain: domain_name.clone(),
            });
        }
    }
    let label_names = (0..spec.num_classes).map(|c| format!("class{c}")).collect();
    Corpus {
        examples,
        num_classes: spec.num_classes,
        label_names,
    }
}
