//! Evaluation and analysis: F1 scores on client-specific and global test
//! sets, plus the beta- and rounds-sweep harnesses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::FeatureMatrix;
use crate::error::{Error, Result};
use crate::fed::{run_experiment, ExperimentSpec, Method, RoundTrace};
use crate::model::Classifier;
use crate::partition::PartitionPlan;
use crate::strategy::{Provider, WeightVector};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn build(predictions: &[usize], gold: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
        if predictions.len() != gold.len() || predictions.is_empty() {
            return Err(Error::InvalidInput(
                "predictions and gold must be non-empty and aligned".into(),
            ));
        }
        let mut counts = vec![vec![0usize; num_classes]; num_classes];
        for (&p, &g) in predictions.iter().zip(gold) {
            if p >= num_classes || g >= num_classes {
                return Err(Error::InvalidInput(format!("label out of range: pred {p}, gold {g}")));
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }
}

fn per_class_f1(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    let c = cm.counts.len();
    (0..c)
        .map(|cls| {
            let tp = cm.counts[cls][cls];
            let fn_: usize = cm.counts[cls].iter().sum::<usize>() - tp;
            let fp: usize = (0..c).map(|g| cm.counts[g][cls]).sum::<usize>() - tp;
            if tp + fn_ + fp == 0 {
                None // absent from both gold and predictions
            } else if tp == 0 {
                Some(0.0)
            } else {
                let p = tp as f64 / (tp + fp) as f64;
                let r = tp as f64 / (tp + fn_) as f64;
                Some(2.0 * p * r / (p + r))
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1; classes absent from both gold and
/// predictions are skipped.
pub fn macro_f1(predictions: &[usize], gold: &[usize]) -> Result<f64> {
    let num_classes = predictions
        .iter()
        .chain(gold)
        .max()
        .map_or(0, |m| m + 1);
    let cm = ConfusionMatrix::build(predictions, gold, num_classes)?;
    let scores: Vec<f64> = per_class_f1(&cm).into_iter().flatten().collect();
    if scores.is_empty() {
        return Err(Error::InvalidInput("no classes to score".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Global-count F1 (equals accuracy for single-label classification).
pub fn micro_f1(predictions: &[usize], gold: &[usize]) -> Result<f64> {
    if predictions.len() != gold.len() || predictions.is_empty() {
        return Err(Error::InvalidInput("empty or misaligned inputs".into()));
    }
    let correct = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub seed: u64,
    pub per_domain_f1: BTreeMap<String, f64>,
    /// Dirichlet-mixed global test set F1.
    pub global_f1: f64,
    /// Aggregate over the union of client-specific test sets (distinct from
    /// the mixed global set above).
    pub client_test_aggregate_f1: f64,
    pub per_round_f1: Vec<f64>,
}

fn f1_on(clf: &Classifier, features: &FeatureMatrix, indices: &[usize]) -> Result<f64> {
    let subset = features.select(indices);
    let preds = clf.predict_classes(&subset)?;
    let gold = subset
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("test subset missing labels".into()))?;
    macro_f1(&preds, gold)
}

/// Scores a model on every per-domain test set, the union of client test
/// sets, and the mixed global test set. Never mutates the model.
pub fn evaluate(
    clf: &Classifier,
    plan: &PartitionPlan,
    features: &FeatureMatrix,
    method: &str,
    seed: u64,
) -> Result<EvalReport> {
    let mut per_domain_f1 = BTreeMap::new();
    for (domain, indices) in &plan.per_domain_test {
        per_domain_f1.insert(domain.clone(), f1_on(clf, features, indices)?);
    }
    let all_test: Vec<usize> = plan.test.iter().flatten().copied().collect();
    Ok(EvalReport {
        method: method.to_string(),
        seed,
        per_domain_f1,
        global_f1: f1_on(clf, features, &plan.global_test)?,
        client_test_aggregate_f1: f1_on(clf, features, &all_test)?,
        per_round_f1: Vec::new(),
    })
}

pub struct SweepPoint<T> {
    pub value: T,
    pub report: EvalReport,
    pub traces: Vec<RoundTrace>,
    pub weight_trace: Vec<WeightVector>,
}

/// One full experiment per beta with shared seeds; emits the weight
/// trajectory data behind the sharpness heatmaps.
pub fn beta_sweep(
    spec: &ExperimentSpec,
    plan: &PartitionPlan,
    features: &FeatureMatrix,
    betas: &[f64],
    provider: Option<&dyn Provider>,
) -> Result<Vec<SweepPoint<f64>>> {
    if spec.method != Method::AdafdEnwc {
        return Err(Error::InvalidInput("beta_sweep requires the adafd_enwc method".into()));
    }
    betas
        .iter()
        .map(|&beta| {
            let mut point_spec = spec.clone();
            point_spec.strategy.beta = beta;
            let result = run_experiment(&point_spec, plan, features, provider, None)?;
            let report = evaluate(
                result.server.as_ref().unwrap(),
                plan,
                features,
                &format!("adafd_enwc[beta={beta}]"),
                spec.seed,
            )?;
            let weight_trace = result
                .traces
                .iter()
                .filter_map(|t| t.weights.clone())
                .collect();
            Ok(SweepPoint {
                value: beta,
                report,
                traces: result.traces,
                weight_trace,
            })
        })
        .collect()
}

/// One full experiment per communication-round budget with shared seeds.
pub fn rounds_sweep(
    spec: &ExperimentSpec,
    plan: &PartitionPlan,
    features: &FeatureMatrix,
    round_counts: &[usize],
    provider: Option<&dyn Provider>,
) -> Result<Vec<SweepPoint<usize>>> {
    round_counts
        .iter()
        .map(|&t| {
            let mut point_spec = spec.clone();
            point_spec.rounds = t;
            let eval = |clf: &Classifier| {
                f1_on(clf, features, &plan.global_test).unwrap_or(f64::NAN)
            };
            let result = run_experiment(&point_spec, plan, features, provider, Some(&eval))?;
            let mut report = evaluate(
                result.server.as_ref().unwrap(),
                plan,
                features,
                &format!("{:?}[T={t}]", spec.method),
                spec.seed,
            )?;
            report.per_round_f1 = result.traces.iter().filter_map(|t| t.global_f1).collect();
            let weight_trace = result
                .traces
                .iter()
                .filter_map(|t| t.weights.clone())
                .collect();
            Ok(SweepPoint {
                value: t,
                report,
                traces: result.traces,
                weight_trace,
            })
        })
        .collect()
}

/// Flat CSV rows: method, testset, f1, seed, round.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,testset,f1,seed,round\n");
    for r in reports {
        out.push_str(&format!("{},global,{:.6},{},final\n", r.method, r.global_f1, r.seed));
        out.push_str(&format!(
            "{},client_test_aggregate,{:.6},{},final\n",
            r.method, r.client_test_aggregate_f1, r.seed
        ));
        for (domain, f1) in &r.per_domain_f1 {
            out.push_str(&format!("{},{domain},{f1:.6},{},final\n", r.method, r.seed));
        }
        for (round, f1) in r.per_round_f1.iter().enumerate() {
            out.push_str(&format!("{},global,{f1:.6},{},{round}\n", r.method, r.seed));
        }
    }
    out
}

/// CSV suitable for heatmap rendering: round, client, weight.
pub fn weight_trace_to_csv(trace: &[WeightVector]) -> String {
    let mut out = String::from("round,client,weight\n");
    for (round, w) in trace.iter().enumerate() {
        for (client, &x) in w.0.iter().enumerate() {
            out.push_str(&format!("{round},{client},{x:.8}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn macro_f1_extremes() {
        assert_eq!(macro_f1(&[0, 1, 0, 1], &[0, 1, 0, 1]).unwrap(), 1.0);
        assert_eq!(macro_f1(&[1, 0, 1, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert!(macro_f1(&[], &[]).is_err());
    }

    #[test]
    fn macro_f1_hand_computed() {
        // Oracle, by hand: gold [0,0,1,1], pred [0,1,1,1].
        // class 0: tp=1 fp=0 fn=1 -> F1 = 2/3; class 1: tp=2 fp=1 fn=0 -> F1 = 0.8.
        let f1 = macro_f1(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_relative_eq!(f1, (2.0 / 3.0 + 0.8) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(f1, 0.7333, epsilon = 1e-4);
    }

    #[test]
    fn macro_f1_majority_dummy() {
        // Oracle: majority predictor on a 70/30 binary set.
        // class 0: p=0.7, r=1 -> F1 = 1.4/1.7; class 1: F1 = 0.
        let gold: Vec<usize> = std::iter::repeat(0)
            .take(70)
            .chain(std::iter::repeat(1).take(30))
            .collect();
        let pred = vec![0usize; 100];
        let f1 = macro_f1(&pred, &gold).unwrap();
        assert_relative_eq!(f1, (1.4 / 1.7) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(f1, 0.4118, epsilon = 1e-4);
    }

    #[test]
    fn macro_f1_permutation_invariant() {
        let gold = vec![0, 1, 2, 1, 0, 2, 2];
        let pred = vec![0, 1, 1, 1, 2, 2, 0];
        let a = macro_f1(&pred, &gold).unwrap();
        let perm = [3, 0, 6, 2, 5, 1, 4];
        let gold_p: Vec<usize> = perm.iter().map(|&i| gold[i]).collect();
        let pred_p: Vec<usize> = perm.iter().map(|&i| pred[i]).collect();
        assert_eq!(a, macro_f1(&pred_p, &gold_p).unwrap());
    }

    #[test]
    fn micro_f1_is_accuracy() {
        assert_eq!(micro_f1(&[0, 1, 1], &[0, 1, 0]).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn confusion_matrix_totals() {
        let cm = ConfusionMatrix::build(&[0, 1, 1, 0], &[0, 1, 0, 0], 2).unwrap();
        let total: usize = cm.counts.iter().flatten().sum();
        assert_eq!(total, 4);
    }
}
