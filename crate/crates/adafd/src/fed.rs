//! Round-based federated distillation orchestrator: local training and
//! prediction, server-side adaptive ensemble and distillation, local
//! distillation, plus the centralized and local-only baselines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::macro_f1;
use crate::model::{Architecture, Classifier, DistillMode, LogitsMatrix, TrainingConfig};
use crate::partition::PartitionPlan;
use crate::strategy::{
    ensemble, era_sharpen, weights_data_size, weights_enwc, weights_llmwc, weights_rnwc,
    weights_uniform, ClientRoundReport, Provider, StrategyConfig, WeightVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AdafdRnwc,
    AdafdEnwc,
    AdafdLlmwc,
    #[serde(rename = "fedavg")]
    FedAvg,
    Dsfl,
    Mhat,
    #[serde(rename = "fedkd")]
    FedKd,
    Centralized,
    LocalOnly,
}

impl Method {
    pub fn is_federated(self) -> bool {
        !matches!(self, Method::Centralized | Method::LocalOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub method: Method,
    /// Communication rounds T.
    pub rounds: usize,
    /// Local training epochs E per round.
    pub local_epochs: usize,
    /// One entry per client, or a single entry for homogeneous clients.
    pub client_archs: Vec<Architecture>,
    pub server_arch: Architecture,
    pub strategy: StrategyConfig,
    pub local_training: TrainingConfig,
    pub server_training: TrainingConfig,
    #[serde(default = "default_one")]
    pub local_distill_epochs: usize,
    /// Distillation temperature.
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub parallel_clients: bool,
    /// Overrides for cross-method oracle checks: force uniform weights
    /// and/or a specific server distill loss.
    #[serde(default)]
    pub force_uniform_weights: bool,
    #[serde(default)]
    pub force_distill_mode: Option<DistillMode>,
}

fn default_one() -> usize {
    1
}
fn default_tau() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl ExperimentSpec {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidInput("rounds must be >= 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::InvalidInput("local_epochs must be >= 1".into()));
        }
        if self.client_archs.len() != 1 && self.client_archs.len() != num_clients {
            return Err(Error::InvalidInput(format!(
                "client_archs has {} entries for {num_clients} clients",
                self.client_archs.len()
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidInput("tau must be > 0".into()));
        }
        Ok(())
    }

    fn arch_for(&self, client: usize) -> &Architecture {
        if self.client_archs.len() == 1 {
            &self.client_archs[0]
        } else {
            &self.client_archs[client]
        }
    }
}

/// One client's mutable state; private features never leave this struct.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub classifier: Classifier,
    pub train: FeatureMatrix,
    pub dev: FeatureMatrix,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub classifier: Classifier,
    pub public: FeatureMatrix,
    pub weight_history: Vec<WeightVector>,
}

/// Everything logged for one executed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub client_l_min: Vec<f64>,
    pub client_dev_f1: Vec<f64>,
    pub weights: Option<WeightVector>,
    pub server_distill_loss: Option<f64>,
    pub global_f1: Option<f64>,
    pub incident: Option<String>,
}

pub struct ServerPhaseOutcome {
    pub weights: WeightVector,
    pub distill_loss: f64,
    pub global_logits: LogitsMatrix,
    pub incident: Option<String>,
}

pub struct ExperimentResult {
    pub server: Option<Classifier>,
    pub clients: Vec<Classifier>,
    pub traces: Vec<RoundTrace>,
}

// splitmix64, used to derive independent per-(client, round, phase) seeds.
fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e3779b97f4a7c15;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        h = z ^ (z >> 31);
    }
    h
}

/// The synchronous round engine. Phases are exposed individually so the
/// privacy boundary can be exercised directly.
pub struct Engine<'a> {
    pub spec: ExperimentSpec,
    pub clients: Vec<ClientState>,
    pub server: ServerState,
    provider: Option<&'a dyn Provider>,
}

impl<'a> Engine<'a> {
    /// Builds client and server state from a plan and the featurized corpus.
    /// `features` must cover the whole corpus with labels; public rows are
    /// stripped of labels before the server sees them.
    pub fn new(
        spec: ExperimentSpec,
        plan: &PartitionPlan,
        features: &FeatureMatrix,
        provider: Option<&'a dyn Provider>,
    ) -> Result<Engine<'a>> {
        let k = plan.num_clients();
        spec.validate(k)?;
        if features.labels.is_none() {
            return Err(Error::InvalidInput("experiment requires a fully labeled corpus".into()));
        }
        let num_classes = features.labels.as_ref().unwrap().iter().max().map_or(0, |m| m + 1);
        let clients = (0..k)
            .map(|id| ClientState {
                id,
                classifier: Classifier::new(
                    spec.arch_for(id).clone(),
                    features.num_features,
                    num_classes,
                    mix_seed(&[spec.seed, 1, id as u64]),
                ),
                train: features.select(&plan.train[id]),
                dev: features.select(&plan.dev[id]),
            })
            .collect();
        let server = ServerState {
            classifier: Classifier::new(
                spec.server_arch.clone(),
                features.num_features,
                num_classes,
                mix_seed(&[spec.seed, 2]),
            ),
            public: features.select(&plan.public).without_labels(),
            weight_history: Vec::new(),
        };
        Ok(Engine {
            spec,
            clients,
            server,
            provider,
        })
    }

    /// Local training and prediction: each client trains E epochs on its
    /// private train split, then predicts logits on the full public set.
    /// Reports are ordered by client id regardless of execution order.
    pub fn local_phase(&mut self, round: usize) -> Result<Vec<ClientRoundReport>> {
        let public = &self.server.public;
        let spec = &self.spec;
        let run_one = |client: &mut ClientState| -> Result<ClientRoundReport> {
            let config = TrainingConfig {
                epochs: spec.local_epochs,
                seed: mix_seed(&[spec.seed, 10, client.id as u64, round as u64]),
                ..spec.local_training.clone()
            };
            let mut record = client.classifier.train_supervised(&client.train, &config)?;
            let dev_f1 = if client.dev.num_rows() > 0 {
                let preds = client.classifier.predict_classes(&client.dev)?;
                macro_f1(&preds, client.dev.labels.as_ref().unwrap())?
            } else {
                0.0
            };
            record.dev_f1 = Some(dev_f1);
            let logits = client.classifier.predict_logits(public)?;
            Ok(ClientRoundReport {
                client_id: client.id,
                data_size: client.train.num_rows(),
                loss: record,
                logits,
                dev_f1,
            })
        };
        let results: Vec<Result<ClientRoundReport>> = if self.spec.parallel_clients {
            self.clients.par_iter_mut().map(run_one).collect()
        } else {
            self.clients.iter_mut().map(run_one).collect()
        };
        let mut reports = Vec::with_capacity(results.len());
        for (id, r) in results.into_iter().enumerate() {
            reports.push(r.map_err(|e| Error::InvalidInput(format!("client {id}: {e}")))?);
        }
        reports.sort_by_key(|r| r.client_id);
        Ok(reports)
    }

    fn compute_weights(
        &self,
        reports: &[ClientRoundReport],
    ) -> Result<(WeightVector, Option<String>)> {
        let k = reports.len();
        if self.spec.force_uniform_weights {
            return Ok((weights_uniform(k), None));
        }
        let l_min: Vec<f64> = reports.iter().map(|r| r.loss.l_min()).collect();
        let sizes: Vec<usize> = reports.iter().map(|r| r.data_size).collect();
        match self.spec.method {
            Method::AdafdRnwc => Ok((weights_rnwc(&l_min)?, None)),
            Method::AdafdEnwc => Ok((weights_enwc(&l_min, self.spec.strategy.beta)?, None)),
            Method::AdafdLlmwc => {
                let provider = self
                    .provider
                    .ok_or_else(|| Error::Provider("llmwc requires a provider".into()))?;
                let out = weights_llmwc(reports, provider, &self.spec.strategy)?;
                Ok((out.weights, out.incident))
            }
            Method::FedAvg => Ok((weights_uniform(k), None)),
            Method::Dsfl | Method::Mhat | Method::FedKd => Ok((weights_data_size(&sizes)?, None)),
            Method::Centralized | Method::LocalOnly => {
                Err(Error::InvalidInput("no server phase for this method".into()))
            }
        }
    }

    fn distill_target(&self, aggregated: LogitsMatrix) -> (LogitsMatrix, DistillMode) {
        if let Some(mode) = self.spec.force_distill_mode {
            return (aggregated, mode);
        }
        match self.spec.method {
            Method::AdafdRnwc | Method::AdafdEnwc | Method::AdafdLlmwc => {
                (aggregated, DistillMode::L2)
            }
            Method::FedAvg | Method::FedKd => (aggregated, DistillMode::Kl { tau: self.spec.tau }),
            Method::Dsfl => (
                era_sharpen(&aggregated, self.spec.strategy.era_temperature),
                DistillMode::KlProbs,
            ),
            Method::Mhat => (aggregated, DistillMode::CeSoft),
            Method::Centralized | Method::LocalOnly => unreachable!(),
        }
    }

    /// Server adaptive ensemble and distillation. Consumes only the round
    /// reports; private data never crosses this boundary.
    pub fn server_phase(
        &mut self,
        round: usize,
        reports: &[ClientRoundReport],
    ) -> Result<ServerPhaseOutcome> {
        let (weights, incident) = self.compute_weights(reports)?;
        weights.assert_simplex();
        let logit_sets: Vec<LogitsMatrix> = reports.iter().map(|r| r.logits.clone()).collect();
        let aggregated = ensemble(&logit_sets, &weights)?;
        let (target, mode) = self.distill_target(aggregated);
        let config = TrainingConfig {
            seed: mix_seed(&[self.spec.seed, 20, round as u64]),
            ..self.spec.server_training.clone()
        };
        let losses =
            self.server
                .classifier
                .distill(&self.server.public, &target, mode, &config)?;
        let global_logits = self.server.classifier.predict_logits(&self.server.public)?;
        self.server.weight_history.push(weights.clone());
        Ok(ServerPhaseOutcome {
            weights,
            distill_loss: *losses.last().unwrap(),
            global_logits,
            incident,
        })
    }

    /// Local distillation: every client distills toward the broadcast global
    /// logits over the public set.
    pub fn local_distill(&mut self, round: usize, global_logits: &LogitsMatrix) -> Result<()> {
        let public = &self.server.public;
        let spec = &self.spec;
        let mode = DistillMode::Kl { tau: spec.tau };
        let run_one = |client: &mut ClientState| -> Result<()> {
            let config = TrainingConfig {
                epochs: spec.local_distill_epochs,
                seed: mix_seed(&[spec.seed, 30, client.id as u64, round as u64]),
                ..spec.local_training.clone()
            };
            client.classifier.distill(public, global_logits, mode, &config)?;
            Ok(())
        };
        let results: Vec<Result<()>> = if spec.parallel_clients {
            self.clients.par_iter_mut().map(run_one).collect()
        } else {
            self.clients.iter_mut().map(run_one).collect()
        };
        for (id, r) in results.into_iter().enumerate() {
            r.map_err(|e| Error::InvalidInput(format!("client {id} distill: {e}")))?;
        }
        Ok(())
    }

    /// Executes T rounds of the three phases per the method's schedule.
    /// `per_round_eval` is called on the end-of-round central model (or, for
    /// local-only, ignored).
    pub fn run(
        &mut self,
        per_round_eval: Option<&(dyn Fn(&Classifier) -> f64 + Sync)>,
    ) -> Result<Vec<RoundTrace>> {
        match self.spec.method {
            Method::Centralized => return self.run_centralized(per_round_eval),
            Method::LocalOnly => return self.run_local_only(),
            _ => {}
        }
        let rounds = self.spec.rounds;
        let mut traces = Vec::with_capacity(rounds);
        for round in 0..rounds {
            let reports = self
                .local_phase(round)
                .map_err(|e| Error::InvalidInput(format!("round {round}: {e}")))?;
            let final_round = round + 1 == rounds;
            // FedKD: one-shot server distillation after the final round only.
            let server_outcome = if self.spec.method != Method::FedKd || final_round {
                Some(self.server_phase(round, &reports)?)
            } else {
                None
            };
            if let Some(out) = &server_outcome {
                if self.spec.method != Method::FedKd {
                    self.local_distill(round, &out.global_logits)?;
                }
            }
            traces.push(RoundTrace {
                round,
                client_l_min: reports.iter().map(|r| r.loss.l_min()).collect(),
                client_dev_f1: reports.iter().map(|r| r.dev_f1).collect(),
                weights: server_outcome.as_ref().map(|o| o.weights.clone()),
                server_distill_loss: server_outcome.as_ref().map(|o| o.distill_loss),
                global_f1: per_round_eval.map(|f| f(&self.server.classifier)),
                incident: server_outcome.and_then(|o| o.incident),
            });
        }
        Ok(traces)
    }

    fn run_centralized(
        &mut self,
        per_round_eval: Option<&(dyn Fn(&Classifier) -> f64 + Sync)>,
    ) -> Result<Vec<RoundTrace>> {
        // One model on the union of private training data, same epoch budget.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in &self.clients {
            rows.extend(c.train.rows.iter().cloned());
            labels.extend(c.train.labels.as_ref().unwrap().iter().copied());
        }
        let union = FeatureMatrix {
            rows,
            num_features: self.server.public.num_features,
            labels: Some(labels),
        };
        let mut traces = Vec::with_capacity(self.spec.rounds);
        for round in 0..self.spec.rounds {
            let config = TrainingConfig {
                epochs: self.spec.local_epochs,
                seed: mix_seed(&[self.spec.seed, 40, round as u64]),
                ..self.spec.local_training.clone()
            };
            let record = self.server.classifier.train_supervised(&union, &config)?;
            traces.push(RoundTrace {
                round,
                client_l_min: vec![record.l_min()],
                client_dev_f1: Vec::new(),
                weights: None,
                server_distill_loss: None,
                global_f1: per_round_eval.map(|f| f(&self.server.classifier)),
                incident: None,
            });
        }
        Ok(traces)
    }

    fn run_local_only(&mut self) -> Result<Vec<RoundTrace>> {
        let mut traces = Vec::with_capacity(self.spec.rounds);
        for round in 0..self.spec.rounds {
            let reports = self.local_phase(round)?;
            traces.push(RoundTrace {
                round,
                client_l_min: reports.iter().map(|r| r.loss.l_min()).collect(),
                client_dev_f1: reports.iter().map(|r| r.dev_f1).collect(),
                weights: None,
                server_distill_loss: None,
                global_f1: None,
                incident: None,
            });
        }
        Ok(traces)
    }
}

/// Convenience wrapper: featurized corpus in, final models and traces out.
pub fn run_experiment(
    spec: &ExperimentSpec,
    plan: &PartitionPlan,
    features: &FeatureMatrix,
    provider: Option<&dyn Provider>,
    per_round_eval: Option<&(dyn Fn(&Classifier) -> f64 + Sync)>,
) -> Result<ExperimentResult> {
    let mut engine = Engine::new(spec.clone(), plan, features, provider)?;
    let traces = engine.run(per_round_eval)?;
    let server = match spec.method {
        Method::LocalOnly => None,
        _ => Some(engine.server.classifier.clone()),
    };
    Ok(ExperimentResult {
        server,
        clients: engine.clients.into_iter().map(|c| c.classifier).collect(),
        traces,
    })
}
