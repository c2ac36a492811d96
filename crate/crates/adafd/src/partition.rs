//! Non-IID data regimes: Dirichlet label skew, domain assignment,
//! public/private splitting, and all derived test splits.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Iid,
    MultiDomain,
    LabelDiverse,
    MultiDomainNonIid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub num_clients: usize,
    /// Dirichlet concentration for label skew.
    pub alpha: f64,
    pub regime: Regime,
    #[serde(default = "default_public_fraction")]
    pub public_fraction: f64,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: (u32, u32, u32),
    pub seed: u64,
    #[serde(default = "default_global_test_alpha")]
    pub global_test_alpha: f64,
}

fn default_public_fraction() -> f64 {
    0.2
}
fn default_split_ratio() -> (u32, u32, u32) {
    (8, 1, 1)
}
fn default_global_test_alpha() -> f64 {
    0.8
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::InvalidInput("num_clients must be >= 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidInput("alpha must be > 0".into()));
        }
        if !(self.public_fraction > 0.0 && self.public_fraction < 1.0) {
            return Err(Error::InvalidInput("public_fraction must be in (0,1)".into()));
        }
        let (a, b, c) = self.split_ratio;
        if a == 0 || b == 0 || c == 0 {
            return Err(Error::InvalidInput("split_ratio entries must be positive".into()));
        }
        if !(self.global_test_alpha > 0.0) {
            return Err(Error::InvalidInput("global_test_alpha must be > 0".into()));
        }
        Ok(())
    }
}

/// Realized per-client label proportions and counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub proportions: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
}

impl LabelDistribution {
    pub fn from_assignment(corpus: &Corpus, sets: &[Vec<usize>]) -> LabelDistribution {
        let c = corpus.num_classes;
        let counts: Vec<Vec<usize>> = sets
            .iter()
            .map(|set| {
                let mut h = vec![0usize; c];
                for &i in set {
                    if let Some(l) = corpus.examples[i].label {
                        h[l] += 1;
                    }
                }
                h
            })
            .collect();
        let proportions = counts
            .iter()
            .map(|h| {
                let total: usize = h.iter().sum();
                h.iter()
                    .map(|&n| if total > 0 { n as f64 / total as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        LabelDistribution { proportions, counts }
    }

    /// Mean Shannon entropy (nats) of per-client label proportions.
    pub fn mean_entropy(&self) -> f64 {
        let ents: Vec<f64> = self
            .proportions
            .iter()
            .map(|p| -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>())
            .collect();
        ents.iter().sum::<f64>() / ents.len() as f64
    }
}

/// The realized partition: every index set the experiments need, plus the
/// spec that produced it so a plan can be rebuilt or audited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub private: Vec<Vec<usize>>,
    pub public: Vec<usize>,
    pub train: Vec<Vec<usize>>,
    pub dev: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
    pub per_domain_test: BTreeMap<String, Vec<usize>>,
    pub global_test: Vec<usize>,
    pub provenance: PartitionSpec,
}

impl PartitionPlan {
    pub fn num_clients(&self) -> usize {
        self.private.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<PartitionPlan> {
        Ok(serde_json::from_str(s)?)
    }
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a point from Dirichlet(alpha * 1_k) via normalized Gamma draws.
fn dirichlet_draw(alpha: f64, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let mut v: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = v.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        // degenerate at very small alpha: all mass on one coordinate
        let mut out = vec![0.0; k];
        out[rng.random_range(0..k)] = 1.0;
        return out;
    }
    for x in &mut v {
        *x /= sum;
    }
    v
}

/// Apportions `total` items by `weights` using the largest-remainder rule.
/// Ties go to the larger fractional part, then the larger quota, then the
/// lower index.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        let mut out = vec![0; weights.len()];
        if !weights.is_empty() {
            out[0] = total;
        }
        return out;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / wsum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = quotas[i] - quotas[i].floor();
        let rj = quotas[j] - quotas[j].floor();
        rj.partial_cmp(&ri)
            .unwrap()
            .then_with(|| quotas[j].partial_cmp(&quotas[i]).unwrap())
            .then_with(|| i.cmp(&j))
    });
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Splits a fully labeled corpus into `k` client sets with per-class
/// proportions drawn from Dirichlet(alpha * 1_k).
pub fn dirichlet_label_partition(
    corpus: &Corpus,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<(Vec<Vec<usize>>, LabelDistribution)> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput("alpha must be > 0".into()));
    }
    for (i, ex) in corpus.examples.iter().enumerate() {
        if ex.label.is_none() {
            return Err(Error::InvalidInput(format!(
                "example {i} is unlabeled; dirichlet partition requires labels"
            )));
        }
    }
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in 0..corpus.num_classes {
        let mut indices: Vec<usize> = corpus
            .examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == Some(class))
            .map(|(i, _)| i)
            .collect();
        let mut rng = sub_rng(seed, 1000 + class as u64);
        indices.shuffle(&mut rng);
        let props = dirichlet_draw(alpha, k, &mut rng);
        let counts = largest_remainder(&props, indices.len());
        let mut cursor = 0;
        for (client, &n) in counts.iter().enumerate() {
            sets[client].extend_from_slice(&indices[cursor..cursor + n]);
            cursor += n;
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    let dist = LabelDistribution::from_assignment(corpus, &sets);
    Ok((sets, dist))
}

/// One client per domain, assignment order = sorted domain names.
pub fn assign_domains(corpus: &Corpus, k: usize) -> Result<Vec<Vec<usize>>> {
    let domains: Vec<String> = corpus.domains().into_iter().collect();
    if domains.len() != k {
        return Err(Error::InvalidInput(format!(
            "corpus has {} domains but k = {k}",
            domains.len()
        )));
    }
    let sets = domains
        .iter()
        .map(|d| {
            corpus
                .examples
                .iter()
                .enumerate()
                .filter(|(_, e)| &e.domain == d)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    Ok(sets)
}

/// Moves a uniform `public_fraction` of each client's pool into a shared
/// public set (labels are not carried along); the remainder stays private.
pub fn split_public(
    per_client: &[Vec<usize>],
    public_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    if !(public_fraction > 0.0 && public_fraction < 1.0) {
        return Err(Error::InvalidInput("public_fraction must be in (0,1)".into()));
    }
    let mut public = Vec::new();
    let mut private = Vec::with_capacity(per_client.len());
    for (client, set) in per_client.iter().enumerate() {
        let n = set.len();
        // floor, at least 1 public example per client
        let take = ((public_fraction * n as f64).floor() as usize).max(1);
        if take >= n {
            return Err(Error::InvalidInput(format!(
                "client {client} would be left empty (size {n}, public take {take})"
            )));
        }
        let mut shuffled = set.clone();
        let mut rng = sub_rng(seed, 2000 + client as u64);
        shuffled.shuffle(&mut rng);
        let (pub_part, priv_part) = shuffled.split_at(take);
        let mut pub_part = pub_part.to_vec();
        let mut priv_part = priv_part.to_vec();
        pub_part.sort_unstable();
        priv_part.sort_unstable();
        public.extend(pub_part);
        private.push(priv_part);
    }
    Ok((public, private))
}

/// Label-share-preserving downsample via largest-remainder counts.
pub fn downsample_preserving_labels(
    corpus: &Corpus,
    client_set: &[usize],
    target: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if target > client_set.len() {
        return Err(Error::InvalidInput(format!(
            "target {target} exceeds client size {}",
            client_set.len()
        )));
    }
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in client_set {
        let l = corpus.examples[i]
            .label
            .ok_or_else(|| Error::InvalidInput(format!("example {i} is unlabeled")))?;
        by_label.entry(l).or_default().push(i);
    }
    let labels: Vec<usize> = by_label.keys().copied().collect();
    let weights: Vec<f64> = labels.iter().map(|l| by_label[l].len() as f64).collect();
    let counts = largest_remainder(&weights, target);
    let mut out = Vec::with_capacity(target);
    for (pos, l) in labels.iter().enumerate() {
        let mut pool = by_label[l].clone();
        let mut rng = sub_rng(seed, 3000 + *l as u64);
        pool.shuffle(&mut rng);
        out.extend_from_slice(&pool[..counts[pos].min(pool.len())]);
    }
    out.sort_unstable();
    Ok(out)
}

/// Samples a global test set with domain proportions drawn from
/// Dirichlet(global_test_alpha * 1_D), without replacement per domain,
/// total capped by per-domain pool sizes.
pub fn build_global_test(
    per_domain_test: &BTreeMap<String, Vec<usize>>,
    global_test_alpha: f64,
    size: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if per_domain_test.is_empty() || per_domain_test.values().any(|v| v.is_empty()) {
        return Err(Error::InvalidInput("per-domain test pools must be non-empty".into()));
    }
    let total_pool: usize = per_domain_test.values().map(Vec::len).sum();
    if size > total_pool {
        return Err(Error::InvalidInput(format!(
            "requested global test size {size} exceeds pool {total_pool}"
        )));
    }
    let d = per_domain_test.len();
    let mut rng = sub_rng(seed, 4000);
    let props = dirichlet_draw(global_test_alpha, d, &mut rng);
    let wanted = largest_remainder(&props, size);
    let mut out = Vec::with_capacity(size);
    for (pos, (_, pool)) in per_domain_test.iter().enumerate() {
        let take = wanted[pos].min(pool.len());
        let mut shuffled = pool.clone();
        let mut rng = sub_rng(seed, 4100 + pos as u64);
        shuffled.shuffle(&mut rng);
        out.extend_from_slice(&shuffled[..take]);
    }
    out.sort_unstable();
    Ok(out)
}

/// Builds the full plan for a regime: client assignment, public split,
/// per-client train/dev/test, per-domain and global test sets.
pub fn build_plan(corpus: &Corpus, spec: &PartitionSpec) -> Result<PartitionPlan> {
    spec.validate()?;
    let k = spec.num_clients;

    let per_client: Vec<Vec<usize>> = match spec.regime {
        Regime::Iid => {
            let mut indices: Vec<usize> = (0..corpus.len())
                .filter(|&i| corpus.examples[i].label.is_some())
                .collect();
            let mut rng = sub_rng(spec.seed, 500);
            indices.shuffle(&mut rng);
            let counts = largest_remainder(&vec![1.0; k], indices.len());
            let mut sets = Vec::with_capacity(k);
            let mut cursor = 0;
            for &n in &counts {
                let mut s = indices[cursor..cursor + n].to_vec();
                s.sort_unstable();
                sets.push(s);
                cursor += n;
            }
            sets
        }
        Regime::MultiDomain => assign_domains(corpus, k)?,
        Regime::LabelDiverse => dirichlet_label_partition(corpus, k, spec.alpha, spec.seed)?.0,
        Regime::MultiDomainNonIid => {
            let domain_sets = assign_domains(corpus, k)?;
            // Per-client Dirichlet label reweighting, realized by subsampling
            // toward target label proportions drawn from Dirichlet(alpha * 1_C).
            let mut sets = Vec::with_capacity(k);
            for (client, set) in domain_sets.iter().enumerate() {
                let mut rng = sub_rng(spec.seed, 600 + client as u64);
                let target_props = dirichlet_draw(spec.alpha, corpus.num_classes, &mut rng);
                let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for &i in set {
                    let l = corpus.examples[i].label.ok_or_else(|| {
                        Error::InvalidInput(format!("example {i} is unlabeled"))
                    })?;
                    by_label.entry(l).or_default().push(i);
                }
                let wanted = largest_remainder(&target_props, set.len());
                let mut picked = Vec::new();
                for (label, pool) in &by_label {
                    let take = wanted.get(*label).copied().unwrap_or(0).min(pool.len());
                    if take == 0 {
                        continue;
                    }
                    let mut shuffled = pool.clone();
                    let mut lrng = sub_rng(spec.seed, 700 + (client * 64 + label) as u64);
                    shuffled.shuffle(&mut lrng);
                    picked.extend_from_slice(&shuffled[..take]);
                }
                picked.sort_unstable();
                sets.push(picked);
            }
            sets
        }
    };

    let (public, private) = split_public(&per_client, spec.public_fraction, spec.seed)?;

    let (ra, rb, rc) = spec.split_ratio;
    let ratio = [ra as f64, rb as f64, rc as f64];
    let mut train = Vec::with_capacity(k);
    let mut dev = Vec::with_capacity(k);
    let mut test = Vec::with_capacity(k);
    for (client, set) in private.iter().enumerate() {
        let mut shuffled = set.clone();
        let mut rng = sub_rng(spec.seed, 800 + client as u64);
        shuffled.shuffle(&mut rng);
        let counts = largest_remainder(&ratio, set.len());
        let (t0, rest) = shuffled.split_at(counts[0]);
        let (d0, e0) = rest.split_at(counts[1]);
        let mut t0 = t0.to_vec();
        let mut d0 = d0.to_vec();
        let mut e0 = e0.to_vec();
        t0.sort_unstable();
        d0.sort_unstable();
        e0.sort_unstable();
        train.push(t0);
        dev.push(d0);
        test.push(e0);
    }

    let mut per_domain_test: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for set in &test {
        for &i in set {
            per_domain_test
                .entry(corpus.examples[i].domain.clone())
                .or_default()
                .push(i);
        }
    }
    for v in per_domain_test.values_mut() {
        v.sort_unstable();
    }

    // Global test size: mixes all domains but stays inside the smallest pool
    // so the Dirichlet proportions bite.
    let min_pool = per_domain_test.values().map(Vec::len).min().unwrap_or(0);
    let size = (min_pool * per_domain_test.len()).min(
        per_domain_test.values().map(Vec::len).sum(),
    );
    let global_test = if size > 0 {
        build_global_test(&per_domain_test, spec.global_test_alpha, size, spec.seed)?
    } else {
        Vec::new()
    };

    Ok(PartitionPlan {
        private,
        public,
        train,
        dev,
        test,
        per_domain_test,
        global_test,
        provenance: spec.clone(),
    })
}

/// Distribution diagnostics: label histograms, top token frequencies, and
/// pairwise client vocabulary overlap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionReport {
    pub label_histograms: Vec<Vec<usize>>,
    pub top_tokens: Vec<Vec<(String, usize)>>,
    /// Jaccard overlap of client token sets, row-major K x K.
    pub vocab_jaccard: Vec<Vec<f64>>,
}

pub fn distribution_report(plan: &PartitionPlan, corpus: &Corpus, top_n: usize) -> DistributionReport {
    let k = plan.num_clients();
    let mut label_histograms = Vec::with_capacity(k);
    let mut token_sets: Vec<std::collections::BTreeSet<String>> = Vec::with_capacity(k);
    let mut top_tokens = Vec::with_capacity(k);
    for set in &plan.private {
        let mut hist = vec![0usize; corpus.num_classes];
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for &i in set {
            if let Some(l) = corpus.examples[i].label {
                hist[l] += 1;
            }
            for t in tokenize(&corpus.examples[i].text) {
                *freq.entry(t).or_insert(0) += 1;
            }
        }
        token_sets.push(freq.keys().cloned().collect());
        let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(top_n);
        top_tokens.push(ranked);
        label_histograms.push(hist);
    }
    let mut vocab_jaccard = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let inter = token_sets[i].intersection(&token_sets[j]).count();
            let union = token_sets[i].union(&token_sets[j]).count();
            vocab_jaccard[i][j] = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        }
    }
    DistributionReport {
        label_histograms,
        top_tokens,
        vocab_jaccard,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_corpus, Example, SynthSpec};

    fn labeled_corpus(per_class: &[usize], domains: usize) -> Corpus {
        let c = per_class.len();
        let mut examples = Vec::new();
        for (label, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                examples.push(Example {
                    text: format!("tok{label} x{i}"),
                    label: Some(label),
                    domain: format!("domain{}", i % domains),
                });
            }
        }
        Corpus::new(examples, c, (0..c).map(|i| format!("class{i}")).collect()).unwrap()
    }

    #[test]
    fn largest_remainder_spec_example() {
        // {A:7, B:3}, target 5 -> quotas {3.5, 1.5} -> {4, 1}
        assert_eq!(largest_remainder(&[7.0, 3.0], 5), vec![4, 1]);
    }

    #[test]
    fn largest_remainder_exact_proportions() {
        assert_eq!(largest_remainder(&[600.0, 400.0], 100), vec![60, 40]);
    }

    #[test]
    fn dirichlet_high_alpha_near_uniform() {
        let corpus = labeled_corpus(&[10000, 10000], 1);
        let (_, dist) = dirichlet_label_partition(&corpus, 4, 1e6, 42).unwrap();
        for p in &dist.proportions {
            for &x in p {
                assert!((x - 0.5).abs() < 0.02, "{x}");
            }
        }
    }

    #[test]
    fn dirichlet_k1_degenerate() {
        let corpus = labeled_corpus(&[50, 50], 1);
        let (sets, _) = dirichlet_label_partition(&corpus, 1, 0.5, 0).unwrap();
        assert_eq!(sets[0].len(), 100);
    }

    #[test]
    fn dirichlet_low_alpha_skewer_than_high_alpha() {
        // Statistical check over 20 seeds: mean entropy at alpha=0.1 strictly
        // below mean entropy at alpha=100.
        let corpus = labeled_corpus(&[400, 400, 400, 400, 400], 1);
        let mean = |alpha: f64| -> f64 {
            (0..20)
                .map(|s| {
                    dirichlet_label_partition(&corpus, 5, alpha, s).unwrap().1.mean_entropy()
                })
                .sum::<f64>()
                / 20.0
        };
        assert!(mean(0.1) < mean(100.0));
    }

    #[test]
    fn dirichlet_rejects_unlabeled() {
        let mut corpus = labeled_corpus(&[10, 10], 1);
        corpus.examples[0].label = None;
        assert!(dirichlet_label_partition(&corpus, 2, 1.0, 0).is_err());
    }

    #[test]
    fn assign_domains_matches_count() {
        let corpus = labeled_corpus(&[100, 100], 5);
        let sets = assign_domains(&corpus, 5).unwrap();
        assert_eq!(sets.len(), 5);
        for (k, set) in sets.iter().enumerate() {
            for &i in set {
                assert_eq!(corpus.examples[i].domain, format!("domain{k}"));
            }
        }
        assert!(assign_domains(&corpus, 3).is_err());
    }

    #[test]
    fn split_public_fraction_and_determinism() {
        let sets: Vec<Vec<usize>> = vec![(0..1000).collect(), (1000..2000).collect()];
        let (public, private) = split_public(&sets, 0.2, 7).unwrap();
        assert_eq!(public.len(), 400);
        assert_eq!(private[0].len(), 800);
        let (public2, _) = split_public(&sets, 0.2, 7).unwrap();
        assert_eq!(public, public2);
    }

    #[test]
    fn split_public_floor_with_minimum_one() {
        let sets: Vec<Vec<usize>> = vec![(0..999).collect()];
        let (public, _) = split_public(&sets, 0.2, 0).unwrap();
        assert_eq!(public.len(), 199); // floor(0.2 * 999)
        let tiny: Vec<Vec<usize>> = vec![vec![0, 1, 2]];
        let (p, _) = split_public(&tiny, 0.1, 0).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn downsample_spec_examples() {
        let corpus = labeled_corpus(&[600, 400], 1);
        let all: Vec<usize> = (0..1000).collect();
        let picked = downsample_preserving_labels(&corpus, &all, 100, 0).unwrap();
        let counts = LabelDistribution::from_assignment(&corpus, &[picked]);
        assert_eq!(counts.counts[0], vec![60, 40]);

        let identity = downsample_preserving_labels(&corpus, &all, 1000, 0).unwrap();
        assert_eq!(identity, all);

        let small = labeled_corpus(&[7, 3], 1);
        let set: Vec<usize> = (0..10).collect();
        let picked = downsample_preserving_labels(&small, &set, 5, 0).unwrap();
        let counts = LabelDistribution::from_assignment(&small, &[picked]);
        assert_eq!(counts.counts[0], vec![4, 1]);

        assert!(downsample_preserving_labels(&small, &set, 11, 0).is_err());
    }

    #[test]
    fn plan_iid_balanced() {
        let corpus = labeled_corpus(&[4000, 4000], 4);
        let spec = PartitionSpec {
            num_clients: 4,
            alpha: 1.0,
            regime: Regime::Iid,
            public_fraction: 0.2,
            split_ratio: (8, 1, 1),
            seed: 11,
            global_test_alpha: 0.8,
        };
        let plan = build_plan(&corpus, &spec).unwrap();
        for k in 0..4 {
            let total = plan.private[k].len()
                + plan.public.len() / 4; // each client contributed equally
            assert_eq!(total, 2000);
            let dist = LabelDistribution::from_assignment(&corpus, &[plan.private[k].clone()]);
            for &p in &dist.proportions[0] {
                assert!((p - 0.5).abs() < 0.03);
            }
        }
    }

    #[test]
    fn plan_invariants_hold() {
        let corpus = synthesize_corpus(&SynthSpec {
            num_domains: 3,
            num_classes: 3,
            examples_per_domain: 300,
            vocab_per_domain: 60,
            seed: 5,
            ..SynthSpec::default()
        });
        for regime in [
            Regime::Iid,
            Regime::MultiDomain,
            Regime::LabelDiverse,
            Regime::MultiDomainNonIid,
        ] {
            let spec = PartitionSpec {
                num_clients: 3,
                alpha: 1.0,
                regime,
                public_fraction: 0.2,
                split_ratio: (8, 1, 1),
                seed: 9,
                global_test_alpha: 0.8,
            };
            let plan = build_plan(&corpus, &spec).unwrap();
            assert_plan_invariants(&plan, corpus.len());
            // determinism
            let plan2 = build_plan(&corpus, &spec).unwrap();
            assert_eq!(plan, plan2);
        }
    }

    pub(crate) fn assert_plan_invariants(plan: &PartitionPlan, corpus_len: usize) {
        use std::collections::BTreeSet;
        let public: BTreeSet<usize> = plan.public.iter().copied().collect();
        let mut seen: BTreeSet<usize> = public.clone();
        for (k, set) in plan.private.iter().enumerate() {
            for &i in set {
                assert!(i < corpus_len);
                assert!(seen.insert(i), "index {i} appears twice (client {k})");
            }
            let tr: BTreeSet<usize> = plan.train[k].iter().copied().collect();
            let dv: BTreeSet<usize> = plan.dev[k].iter().copied().collect();
            let te: BTreeSet<usize> = plan.test[k].iter().copied().collect();
            assert!(tr.is_disjoint(&dv) && tr.is_disjoint(&te) && dv.is_disjoint(&te));
            let mut covered: BTreeSet<usize> = tr;
            covered.extend(dv);
            covered.extend(te);
            let private: BTreeSet<usize> = set.iter().copied().collect();
            assert_eq!(covered, private, "train/dev/test must cover client {k}");
        }
    }

    #[test]
    fn multi_domain_non_iid_single_domain_and_skewed() {
        let corpus = synthesize_corpus(&SynthSpec {
            num_domains: 5,
            num_classes: 3,
            examples_per_domain: 400,
            vocab_per_domain: 60,
            seed: 2,
            ..SynthSpec::default()
        });
        let spec = PartitionSpec {
            num_clients: 5,
            alpha: 1.0,
            regime: Regime::MultiDomainNonIid,
            public_fraction: 0.2,
            split_ratio: (8, 1, 1),
            seed: 3,
            global_test_alpha: 0.8,
        };
        let plan = build_plan(&corpus, &spec).unwrap();
        for (k, set) in plan.private.iter().enumerate() {
            let domains: std::collections::BTreeSet<&str> =
                set.iter().map(|&i| corpus.examples[i].domain.as_str()).collect();
            assert_eq!(domains.len(), 1, "client {k} must be single-domain");
        }
        // At least one client visibly label-skewed under alpha = 1.
        let dist = LabelDistribution::from_assignment(&corpus, &plan.private);
        let max_dev = dist
            .proportions
            .iter()
            .flat_map(|p| p.iter().map(|&x| (x - 1.0 / 3.0).abs()))
            .fold(0.0f64, f64::max);
        assert!(max_dev > 0.1, "expected label skew, max deviation {max_dev}");
    }

    #[test]
    fn global_test_degenerate_cases() {
        let mut pools = BTreeMap::new();
        pools.insert("a".to_string(), (0..50).collect::<Vec<_>>());
        let out = build_global_test(&pools, 0.8, 30, 0).unwrap();
        assert_eq!(out.len(), 30);
        // high alpha: near-equal shares
        pools.insert("b".to_string(), (50..100).collect::<Vec<_>>());
        let out = build_global_test(&pools, 1e6, 60, 0).unwrap();
        let a_count = out.iter().filter(|&&i| i < 50).count();
        assert!((a_count as i64 - 30).abs() <= 5, "a share {a_count}");
        // determinism
        assert_eq!(
            build_global_test(&pools, 0.8, 40, 1).unwrap(),
            build_global_test(&pools, 0.8, 40, 1).unwrap()
        );
    }

    #[test]
    fn report_jaccard_extremes() {
        let corpus = labeled_corpus(&[40, 40], 2);
        let spec = PartitionSpec {
            num_clients: 2,
            alpha: 1.0,
            regime: Regime::Iid,
            public_fraction: 0.2,
            split_ratio: (8, 1, 1),
            seed: 0,
            global_test_alpha: 0.8,
        };
        let plan = build_plan(&corpus, &spec).unwrap();
        let report = distribution_report(&plan, &corpus, 10);
        assert_eq!(report.vocab_jaccard[0][0], 1.0);
    }

    #[test]
    fn report_cross_domain_overlap_below_within_domain() {
        let corpus = synthesize_corpus(&SynthSpec {
            num_domains: 2,
            num_classes: 2,
            examples_per_domain: 400,
            vocab_per_domain: 100,
            overlap: 0.3,
            seed: 4,
            ..SynthSpec::default()
        });
        let spec = PartitionSpec {
            num_clients: 2,
            alpha: 1.0,
            regime: Regime::MultiDomain,
            public_fraction: 0.2,
            split_ratio: (8, 1, 1),
            seed: 5,
            global_test_alpha: 0.8,
        };
        let plan = build_plan(&corpus, &spec).unwrap();
        let report = distribution_report(&plan, &corpus, 10);
        let cross = report.vocab_jaccard[0][1];
        // Within-domain resample: split client 0 in halves and compare.
        let half = plan.private[0].len() / 2;
        let sub_plan = PartitionPlan {
            private: vec![
                plan.private[0][..half].to_vec(),
                plan.private[0][half..].to_vec(),
            ],
            ..plan.clone()
        };
        let sub_report = distribution_report(&sub_plan, &corpus, 10);
        let within = sub_report.vocab_jaccard[0][1];
        assert!(cross < within, "cross {cross} vs within {within}");
    }
}
