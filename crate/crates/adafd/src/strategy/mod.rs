//! Ensemble weighting strategies and logit aggregation: uniform and
//! data-size baselines, loss-based RNWC/ENWC, LLM-driven weighting, and
//! DS-FL's entropy-reduction sharpening.

mod llm;

pub use llm::{HttpProvider, HttpProviderConfig, MockProvider, Provider};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{softmax, LogitsMatrix, LossRecord};

/// A point on the K-simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    /// Normalizes nonnegative mass onto the simplex.
    pub fn normalized(mut v: Vec<f64>) -> Result<WeightVector> {
        if v.is_empty() {
            return Err(Error::InvalidInput("empty weight vector".into()));
        }
        if v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidInput(format!("weights must be finite and >= 0: {v:?}")));
        }
        let sum: f64 = v.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }
        for x in &mut v {
            *x /= sum;
        }
        Ok(WeightVector(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
    }

    pub fn assert_simplex(&self) {
        let sum: f64 = self.0.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "weights sum to {sum}");
        assert!(self.0.iter().all(|&x| x >= 0.0));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Uniform,
    DataSize,
    Rnwc,
    Enwc,
    Llmwc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_era_temperature")]
    pub era_temperature: f64,
    /// Strategy used when the LLM provider fails or returns garbage.
    #[serde(default = "default_fallback")]
    pub llm_fallback: StrategyKind,
}

fn default_beta() -> f64 {
    5.0
}
fn default_era_temperature() -> f64 {
    0.1
}
fn default_fallback() -> StrategyKind {
    StrategyKind::Enwc
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::Enwc,
            beta: default_beta(),
            era_temperature: default_era_temperature(),
            llm_fallback: default_fallback(),
        }
    }
}

/// Everything one client hands the server for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRoundReport {
    pub client_id: usize,
    pub loss: LossRecord,
    pub data_size: usize,
    pub logits: LogitsMatrix,
    pub dev_f1: f64,
}

pub fn weights_uniform(k: usize) -> WeightVector {
    assert!(k >= 1);
    WeightVector(vec![1.0 / k as f64; k])
}

pub fn weights_data_size(sizes: &[usize]) -> Result<WeightVector> {
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidInput("data sizes must be positive".into()));
    }
    WeightVector::normalized(sizes.iter().map(|&s| s as f64).collect())
}

/// Guard against a perfectly fit client absorbing all weight.
const RNWC_LOSS_FLOOR: f64 = 1e-8;

/// Reciprocal normalized weighting: w_k proportional to 1 / l_min_k.
pub fn weights_rnwc(l_min: &[f64]) -> Result<WeightVector> {
    if l_min.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::InvalidInput(format!("l_min must be positive and finite: {l_min:?}")));
    }
    WeightVector::normalized(l_min.iter().map(|&l| 1.0 / l.max(RNWC_LOSS_FLOOR)).collect())
}

/// Exponential normalized weighting: w_k proportional to exp(-beta l_min_k),
/// computed with max-shift so large beta stays finite.
pub fn weights_enwc(l_min: &[f64], beta: f64) -> Result<WeightVector> {
    if !(beta > 0.0) {
        return Err(Error::InvalidInput("beta must be > 0".into()));
    }
    if l_min.iter().any(|&l| !l.is_finite()) {
        return Err(Error::InvalidInput("losses must be finite".into()));
    }
    let neg: Vec<f64> = l_min.iter().map(|&l| -beta * l).collect();
    let max = neg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    WeightVector::normalized(neg.iter().map(|&x| (x - max).exp()).collect())
}

/// The fixed LLM instruction framing. The QUERY block is built per round
/// from client statistics.
const PROMPT_SYSTEM: &str = "You are an expert in federated learning and federated distillation. \
Analyze and compute the optimal weight allocation for all clients based on the following data in \
a federated distillation scenario. Return only the numerical values separated by commas, without \
any explanation or calculation process.";

const PROMPT_CLOSING: &str = "Based on these factors, please compute and normalize the weight for \
each client to maximize the global model performance. Assign weights to each client and return \
the values separated by commas. Do not include any additional text or calculation details.";

/// Deterministic prompt: system framing, one stats block per client
/// (per-epoch losses, F1, logits summary, mean logits entropy), closing
/// instruction.
pub fn build_prompt(reports: &[ClientRoundReport]) -> String {
    assert!(!reports.is_empty());
    let mut s = String::new();
    s.push_str(PROMPT_SYSTEM);
    s.push_str("\n\n");
    for r in reports {
        let losses: Vec<String> = r.loss.epoch_losses.iter().map(|l| format!("{l:.6}")).collect();
        let (per_class_mean, mean_entropy) = logits_summary(&r.logits);
        let means: Vec<String> = per_class_mean.iter().map(|m| format!("{m:.6}")).collect();
        s.push_str(&format!(
            "Client {id}:\n\
             - training losses per epoch: [{losses}]\n\
             - minimum training loss: {lmin:.6}\n\
             - F1 score: {f1:.6}\n\
             - private data size: {size}\n\
             - per-class mean logits on public data: [{means}]\n\
             - mean entropy of predicted logits: {ent:.6}\n\n",
            id = r.client_id,
            losses = losses.join(", "),
            lmin = r.loss.l_min(),
            f1 = r.dev_f1,
            size = r.data_size,
            means = means.join(", "),
            ent = mean_entropy,
        ));
    }
    s.push_str(PROMPT_CLOSING);
    s
}

/// Column means of the logits plus the mean rowwise softmax entropy.
fn logits_summary(logits: &LogitsMatrix) -> (Vec<f64>, f64) {
    let c = logits.num_classes();
    let n = logits.num_rows().max(1);
    let mut means = vec![0.0; c];
    let mut ent = 0.0;
    for row in &logits.rows {
        for (i, &v) in row.iter().enumerate() {
            means[i] += v;
        }
        let p = softmax(row, 1.0);
        ent += -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>();
    }
    for m in &mut means {
        *m /= n as f64;
    }
    (means, ent / n as f64)
}

/// Parses exactly `k` comma-separated finite nonnegative numbers.
pub fn parse_weights(text: &str, k: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.trim().split(',').map(str::trim).collect();
    if parts.len() != k {
        return Err(Error::WeightParse(format!(
            "expected {k} values, got {} in {text:?}",
            parts.len()
        )));
    }
    let mut out = Vec::with_capacity(k);
    for p in parts {
        let v: f64 = p
            .parse()
            .map_err(|_| Error::WeightParse(format!("non-numeric value {p:?}")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::WeightParse(format!("value {v} is negative or non-finite")));
        }
        out.push(v);
    }
    Ok(out)
}

/// Outcome of an LLM weighting attempt; `incident` records a fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmOutcome {
    pub weights: WeightVector,
    pub incident: Option<String>,
}

/// Asks the provider for weights; on failure or an unparseable response,
/// falls back to the configured strategy and records the incident.
pub fn weights_llmwc(
    reports: &[ClientRoundReport],
    provider: &dyn Provider,
    config: &StrategyConfig,
) -> Result<LlmOutcome> {
    let k = reports.len();
    let prompt = build_prompt(reports);
    let attempt = provider
        .complete(&prompt)
        .and_then(|text| parse_weights(&text, k))
        .and_then(WeightVector::normalized);
    match attempt {
        Ok(weights) => Ok(LlmOutcome {
            weights,
            incident: None,
        }),
        Err(e) => {
            let l_min: Vec<f64> = reports.iter().map(|r| r.loss.l_min()).collect();
            let sizes: Vec<usize> = reports.iter().map(|r| r.data_size).collect();
            let weights = match config.llm_fallback {
                StrategyKind::Uniform => weights_uniform(k),
                StrategyKind::DataSize => weights_data_size(&sizes)?,
                StrategyKind::Rnwc => weights_rnwc(&l_min)?,
                StrategyKind::Enwc | StrategyKind::Llmwc => weights_enwc(&l_min, config.beta)?,
            };
            Ok(LlmOutcome {
                weights,
                incident: Some(format!("llm weighting failed, fell back: {e}")),
            })
        }
    }
}

/// Elementwise weighted sum of client logits.
pub fn ensemble(logits: &[LogitsMatrix], w: &WeightVector) -> Result<LogitsMatrix> {
    if logits.len() != w.len() || logits.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit matrices vs {} weights",
            logits.len(),
            w.len()
        )));
    }
    let rows = logits[0].num_rows();
    let cols = logits[0].num_classes();
    for m in logits {
        if m.num_rows() != rows || m.num_classes() != cols {
            return Err(Error::ShapeMismatch("logit matrices differ in shape".into()));
        }
    }
    let mut out = vec![vec![0.0; cols]; rows];
    for (m, &wk) in logits.iter().zip(&w.0) {
        for (r, row) in m.rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                out[r][c] += wk * v;
            }
        }
    }
    Ok(LogitsMatrix { rows: out })
}

/// DS-FL's entropy reduction aggregation: rowwise softmax at a low
/// temperature, producing sharper distillation targets.
pub fn era_sharpen(logits: &LogitsMatrix, era_temperature: f64) -> LogitsMatrix {
    assert!(era_temperature > 0.0);
    LogitsMatrix {
        rows: logits.rows.iter().map(|r| softmax(r, era_temperature)).collect(),
    }
}
