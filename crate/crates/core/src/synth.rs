//! Forward simulation of the feature-feature model, and a direct
//! log-likelihood evaluator used as an oracle for the fitter.
//!
//! Users receive independent per-axis pole features and log-normal
//! activity/attractiveness weights. Candidate pairs are drawn from the
//! product of those weights and labeled 1 with probability
//! `σ(β₀ + x_uᵀ W x_v + (x_u + x_v)ᵀ Q e_t)`. The emitted dataset keeps every
//! `min(#positive, #negative)` candidates of each label, chosen uniformly
//! without replacement. Selection depends on the label only, so the fitted
//! W and Q target the planted values and the intercept absorbs the shift.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{default_axes, feature_names, AxisSpec, FeatureTable};
use crate::inference::Params;
use crate::sampler::{Example, LabeledDataset, Mode, RejectionStats};
use crate::topic::{is_sentinel, NO_TOPIC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProclivityLaw {
    /// Independent log-normal out- and in-weights per user.
    LogNormal { mu: f64, sigma: f64 },
    /// Every user equally likely as source and target.
    Uniform,
}

impl Default for ProclivityLaw {
    fn default() -> Self {
        ProclivityLaw::LogNormal { mu: 0.0, sigma: 1.0 }
    }
}

fn default_axes_serde() -> Vec<AxisSpec> {
    default_axes()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub n_users: usize,
    /// Candidate pairs to draw and label.
    pub n_candidates: usize,
    #[serde(default = "default_axes_serde")]
    pub axes: Vec<AxisSpec>,
    /// Per axis, the probabilities of the (first, second) pole label.
    pub feature_prevalence: Vec<[f64; 2]>,
    #[serde(default)]
    pub beta0_true: f64,
    /// `|F| × |F|`
    pub w_true: Vec<Vec<f64>>,
    /// `|F| × |T|`; may be empty when `topics` is.
    #[serde(default)]
    pub q_true: Vec<Vec<f64>>,
    #[serde(default)]
    pub topics: Vec<String>,
    /// Weights over `topics`; uniform when empty.
    #[serde(default)]
    pub topic_dist: Vec<f64>,
    #[serde(default)]
    pub proclivity_law: ProclivityLaw,
    pub seed: u64,
}

impl PlantedConfig {
    /// Four default axes at quartile prevalence, all-zero parameters, no topics.
    pub fn null(n_users: usize, n_candidates: usize, seed: u64) -> Self {
        let axes = default_axes();
        let nf = 2 * axes.len();
        PlantedConfig {
            n_users,
            n_candidates,
            feature_prevalence: vec![[0.25, 0.25]; axes.len()],
            axes,
            beta0_true: 0.0,
            w_true: vec![vec![0.0; nf]; nf],
            q_true: vec![vec![]; nf],
            topics: vec![],
            topic_dist: vec![],
            proclivity_law: ProclivityLaw::default(),
            seed,
        }
    }

    /// Demographic within-class pairs at `+strength`, partisan within-class
    /// pairs at `−strength` and partisan cross-class pairs at `+strength`.
    pub fn diagonal_pattern(n_users: usize, n_candidates: usize, strength: f64, seed: u64) -> Self {
        let mut c = PlantedConfig::null(n_users, n_candidates, seed);
        for f in 0..6 {
            c.w_true[f][f] = strength;
        }
        c.w_true[6][6] = -strength;
        c.w_true[7][7] = -strength;
        c.w_true[6][7] = strength;
        c.w_true[7][6] = strength;
        c
    }

    /// Adds a topic set with uniform frequencies and zero Q.
    pub fn with_topics(mut self, topics: &[&str]) -> Self {
        self.topics = topics.iter().map(|t| t.to_string()).collect();
        self.topic_dist = vec![1.0; topics.len()];
        self.q_true = vec![vec![0.0; topics.len()]; self.n_features()];
        self
    }

    pub fn n_features(&self) -> usize {
        2 * self.axes.len()
    }

    pub fn mode(&self) -> Mode {
        if self.topics.is_empty() {
            Mode::Sd
        } else {
            Mode::Sdt
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nf = self.n_features();
        let bad = |m: String| Err(Error::Generation(m));
        if self.n_users < 2 {
            return bad("need at least two users".into());
        }
        if self.feature_prevalence.len() != self.axes.len() {
            return Err(Error::Dimension { expected: self.axes.len(), got: self.feature_prevalence.len() });
        }
        for (a, p) in self.feature_prevalence.iter().enumerate() {
            if p.iter().any(|x| !(0.0..=1.0).contains(x)) || p[0] + p[1] > 1.0 {
                return bad(format!("axis {}: pole prevalences {p:?} invalid", self.axes[a].name));
            }
        }
        if self.w_true.len() != nf || self.w_true.iter().any(|r| r.len() != nf) {
            return Err(Error::Dimension { expected: nf, got: self.w_true.len() });
        }
        let nt = self.topics.len();
        if nt > 0 {
            if self.q_true.len() != nf || self.q_true.iter().any(|r| r.len() != nt) {
                return Err(Error::Dimension { expected: nt, got: self.q_true.first().map_or(0, Vec::len) });
            }
            if !self.topic_dist.is_empty() && self.topic_dist.len() != nt {
                return Err(Error::Dimension { expected: nt, got: self.topic_dist.len() });
            }
        } else if self.q_true.iter().any(|r| !r.is_empty()) {
            return bad("q_true given without topics".into());
        }
        if let ProclivityLaw::LogNormal { sigma, .. } = self.proclivity_law {
            if !(sigma >= 0.0) {
                return bad("log-normal sigma must be nonnegative".into());
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: PlantedConfig = serde_json::from_str(&s)?;
        c.validate()?;
        Ok(c)
    }
}

/// A labeled candidate pair (user indices into the generated population).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub u: usize,
    pub v: usize,
    pub topic: Option<usize>,
    pub y: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub user_ids: Vec<String>,
    pub features: FeatureTable,
    pub candidates: Vec<Candidate>,
    pub dataset: LabeledDataset,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn planted_eta(c: &PlantedConfig, xu: &[u8], xv: &[u8], topic: Option<usize>) -> f64 {
    let nf = xu.len();
    let mut eta = c.beta0_true;
    for h in 0..nf {
        for k in 0..nf {
            if xu[h] == 1 && xv[k] == 1 {
                eta += c.w_true[h][k];
            }
        }
    }
    if let Some(t) = topic {
        for h in 0..nf {
            eta += f64::from(xu[h] + xv[h]) * c.q_true[h][t];
        }
    }
    eta
}

/// Draws features, proclivities, labeled candidates and a balanced dataset.
pub fn generate(config: &PlantedConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_users;
    let width = n.to_string().len();
    let user_ids: Vec<String> = (0..n).map(|i| format!("s{i:0width$}")).collect();

    let mut bits = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = vec![0u8; config.n_features()];
        for (a, p) in config.feature_prevalence.iter().enumerate() {
            let r: f64 = rng.random();
            if r < p[0] {
                x[2 * a] = 1;
            } else if r < p[0] + p[1] {
                x[2 * a + 1] = 1;
            }
        }
        bits.push(x);
    }

    let (out_w, in_w): (Vec<f64>, Vec<f64>) = match config.proclivity_law {
        ProclivityLaw::Uniform => (vec![1.0; n], vec![1.0; n]),
        ProclivityLaw::LogNormal { mu, sigma } => {
            let d = LogNormal::new(mu, sigma).map_err(|e| Error::Generation(e.to_string()))?;
            (0..n).map(|_| (d.sample(&mut rng), d.sample(&mut rng))).unzip()
        }
    };
    let source = WeightedIndex::new(&out_w).map_err(|e| Error::Generation(e.to_string()))?;
    let target = WeightedIndex::new(&in_w).map_err(|e| Error::Generation(e.to_string()))?;
    let topic_pick = if config.topics.is_empty() {
        None
    } else if config.topic_dist.is_empty() {
        Some(WeightedIndex::new(vec![1.0; config.topics.len()]).expect("uniform weights"))
    } else {
        Some(WeightedIndex::new(&config.topic_dist).map_err(|e| Error::Generation(e.to_string()))?)
    };

    let mut candidates = Vec::with_capacity(config.n_candidates);
    while candidates.len() < config.n_candidates {
        let u = source.sample(&mut rng);
        let v = target.sample(&mut rng);
        if u == v {
            continue;
        }
        let topic = topic_pick.as_ref().map(|d| d.sample(&mut rng));
        let p = logistic(planted_eta(config, &bits[u], &bits[v], topic));
        let y = u8::from(rng.random::<f64>() < p);
        candidates.push(Candidate { u, v, topic, y });
    }

    let pos: Vec<&Candidate> = candidates.iter().filter(|c| c.y == 1).collect();
    let neg: Vec<&Candidate> = candidates.iter().filter(|c| c.y == 0).collect();
    let k = pos.len().min(neg.len());
    if k == 0 {
        return Err(Error::Generation(format!(
            "{} positives and {} negatives cannot form a balanced dataset",
            pos.len(),
            neg.len()
        )));
    }
    let to_example = |c: &Candidate| Example {
        u: user_ids[c.u].clone(),
        v: user_ids[c.v].clone(),
        topic: c.topic.map_or_else(|| NO_TOPIC.to_string(), |t| config.topics[t].clone()),
        y: c.y,
    };
    let mut examples: Vec<Example> = Vec::with_capacity(2 * k);
    for class in [&pos, &neg] {
        let mut picked = rand::seq::index::sample(&mut rng, class.len(), k).into_vec();
        picked.sort_unstable();
        examples.extend(picked.into_iter().map(|i| to_example(class[i])));
    }
    examples.shuffle(&mut rng);

    let table: BTreeMap<String, Vec<u8>> = user_ids.iter().cloned().zip(bits).collect();
    let features = FeatureTable::from_bits(config.axes.clone(), table)?;
    let dataset = LabeledDataset {
        mode: config.mode(),
        seed: config.seed,
        examples,
        rejection_stats: RejectionStats::default(),
    };
    Ok(SynthOutput { user_ids, features, candidates, dataset })
}

/// The planted parameters in the fitter's report layout.
pub fn planted_params(config: &PlantedConfig) -> Params {
    Params {
        feature_names: feature_names(&config.axes),
        topics: config.topics.clone(),
        beta0: config.beta0_true,
        w: config.w_true.clone(),
        q: if config.topics.is_empty() { vec![vec![]; config.n_features()] } else { config.q_true.clone() },
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Penalized Bernoulli log-likelihood of `params` on `dataset`, summed
/// example by example in dataset order:
/// `Σ y·log σ(η) + (1−y)·log(1−σ(η)) − ridge/2·(‖W‖² + ‖Q‖²)`.
pub fn brute_force_loglik(params: &Params, dataset: &LabeledDataset, features: &FeatureTable, ridge: f64) -> Result<f64> {
    let nf = features.n_features();
    let nt = params.topics.len();
    if params.w.len() != nf || params.w.iter().any(|r| r.len() != nf) {
        return Err(Error::Dimension { expected: nf, got: params.w.len() });
    }
    if nt > 0 && (params.q.len() != nf || params.q.iter().any(|r| r.len() != nt)) {
        return Err(Error::Dimension { expected: nt, got: params.q.first().map_or(0, Vec::len) });
    }
    let mut ll = 0.0;
    for e in &dataset.examples {
        let xu = features.bits(&e.u).ok_or_else(|| Error::MissingFeatures(e.u.clone()))?;
        let xv = features.bits(&e.v).ok_or_else(|| Error::MissingFeatures(e.v.clone()))?;
        let mut eta = params.beta0;
        for h in 0..nf {
            for k in 0..nf {
                eta += f64::from(xu[h]) * params.w[h][k] * f64::from(xv[k]);
            }
        }
        if dataset.mode == Mode::Sdt && !is_sentinel(&e.topic) {
            let t = params
                .topics
                .iter()
                .position(|x| *x == e.topic)
                .ok_or_else(|| Error::UnknownTopic(e.topic.clone()))?;
            let mut from_u = 0.0;
            let mut from_v = 0.0;
            for h in 0..nf {
                from_u += f64::from(xu[h]) * params.q[h][t];
                from_v += f64::from(xv[h]) * params.q[h][t];
            }
            eta += from_u + from_v;
        }
        ll += if e.y == 1 { log_sigmoid(eta) } else { log_sigmoid(-eta) };
    }
    let sq: f64 = params.w.iter().chain(params.q.iter()).flatten().map(|x| x * x).sum();
    Ok(ll - 0.5 * ridge * sq)
}

/// Writes `features.csv`, `dataset.tsv` (+ sidecar) and `planted.json` into `dir`.
pub fn write_outputs(config: &PlantedConfig, out: &SynthOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    out.features.write_csv(&dir.join("features.csv"))?;
    out.dataset.write(&dir.join("dataset.tsv"))?;
    let p = dir.join("planted.json");
    std::fs::write(&p, serde_json::to_string_pretty(config)?).map_err(|e| Error::io(p, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate(cands: &[&Candidate]) -> (f64, f64) {
        let n = cands.len() as f64;
        let r = cands.iter().filter(|c| c.y == 1).count() as f64 / n;
        (r, n)
    }

    #[test]
    fn null_parameters_give_half_positive() {
        let out = generate(&PlantedConfig::null(500, 20_000, 3)).unwrap();
        let all: Vec<&Candidate> = out.candidates.iter().collect();
        let (r, n) = rate(&all);
        let bound = 3.0 * (0.25 / n).sqrt();
        assert!((r - 0.5).abs() < bound, "rate {r}");
    }

    #[test]
    fn single_planted_entry_matches_logistic_of_one() {
        let mut c = PlantedConfig::null(2000, 100_000, 17);
        c.w_true[2][5] = 1.0;
        let out = generate(&c).unwrap();
        let bits = |i: usize| out.features.bits(&out.user_ids[i]).unwrap();
        let hk: Vec<&Candidate> = out.candidates.iter().filter(|x| bits(x.u)[2] == 1 && bits(x.v)[5] == 1).collect();
        let (r, n) = rate(&hk);
        let p = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((p - 0.731).abs() < 5e-4);
        let bound = 3.0 * (p * (1.0 - p) / n).sqrt();
        assert!((r - p).abs() < bound, "rate {r} over {n}");
    }

    #[test]
    fn same_seed_same_output() {
        let c = PlantedConfig::diagonal_pattern(300, 3000, 0.5, 9).with_topics(&["Business", "Crime"]);
        let a = generate(&c).unwrap();
        let b = generate(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dataset.n_positive() * 2, a.dataset.len());
        assert!(a.features.rows.values().all(|r| r.bits.chunks(2).all(|p| p[0] + p[1] <= 1)));
    }

    #[test]
    fn degenerate_configs() {
        let mut c = PlantedConfig::null(100, 500, 1);
        c.beta0_true = -60.0;
        assert!(matches!(generate(&c), Err(Error::Generation(_))));
        let mut c = PlantedConfig::null(100, 500, 1);
        c.feature_prevalence[0] = [0.7, 0.4];
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_params_give_minus_m_ln2() {
        let c = PlantedConfig::null(200, 2000, 5).with_topics(&["Crime"]);
        let out = generate(&c).unwrap();
        let zero = Params::zeros(out.features.feature_names(), c.topics.clone());
        let m = out.dataset.len() as f64;
        let ll = brute_force_loglik(&zero, &out.dataset, &out.features, 0.0).unwrap();
        assert!((ll + m * std::f64::consts::LN_2).abs() <= 1e-12 * m);
        let ll1 = brute_force_loglik(&zero, &out.dataset, &out.features, 1.0).unwrap();
        assert_eq!(ll, ll1);
    }

    #[test]
    fn config_json_roundtrip() {
        let c = PlantedConfig::diagonal_pattern(10, 10, 0.5, 1).with_topics(&["Tech"]);
        let s = serde_json::to_string(&c).unwrap();
        let back: PlantedConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let minimal = r#"{"n_users": 50, "n_candidates": 100, "feature_prevalence": [[0.25,0.25],[0.25,0.25],[0.25,0.25],[0.25,0.25]],
            "w_true": [[0,0,0,0,0,0,0,0],[0,0,0,0,0,0,0,0],[0,0,0,0,0,0,0,0],[0,0,0,0,0,0,0,0],
                       [0,0,0,0,0,0,0,0],[0,0,0,0,0,0,0,0],[0,0,0,0,0,0,0,0],[0,0,0,0,0,0,0,0]], "seed": 4}"#;
        let m: PlantedConfig = serde_json::from_str(minimal).unwrap();
        m.validate().unwrap();
        assert_eq!(m.proclivity_law, ProclivityLaw::LogNormal { mu: 0.0, sigma: 1.0 });
    }
}
