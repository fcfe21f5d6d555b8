//! Balanced labeled datasets against the activity × attractiveness null model.
//!
//! Positives are the observed arcs. Negatives draw the source with
//! probability proportional to its comments posted and the target with
//! probability proportional to its comments received, redrawing self-pairs
//! and observed arcs. The accepted pairs therefore follow the product law
//! conditioned on non-links.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{InteractionGraph, UserId};
use crate::topic::{canonical_key, NO_TOPIC};

/// Consecutive rejections after which sampling gives up.
pub const REJECTION_CAP: u64 = 1_000_000;

const SHUFFLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Features only: one example per distinct arc.
    #[default]
    Sd,
    /// Features plus topics: one example per distinct (arc, topic).
    Sdt,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sd => "sd",
            Mode::Sdt => "sdt",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sd" => Ok(Mode::Sd),
            "sdt" | "sd+t" => Ok(Mode::Sdt),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub u: UserId,
    pub v: UserId,
    pub topic: String,
    pub y: u8,
}

/// Comments posted (`out_weight`) and received (`in_weight`) per node,
/// counting every reply event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proclivity {
    pub users: Vec<UserId>,
    pub out_weight: Vec<u64>,
    pub in_weight: Vec<u64>,
}

impl Proclivity {
    pub fn from_graph(graph: &InteractionGraph) -> Self {
        let users: Vec<UserId> = graph.nodes.iter().cloned().collect();
        let index: HashMap<&str, usize> = users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let mut out_weight = vec![0; users.len()];
        let mut in_weight = vec![0; users.len()];
        for ((u, v), topics) in &graph.arcs {
            let c: u64 = topics.values().sum();
            out_weight[index[u.as_str()]] += c;
            in_weight[index[v.as_str()]] += c;
        }
        Proclivity { users, out_weight, in_weight }
    }
}

/// Categorical distribution over topic labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicDist {
    pub topics: Vec<String>,
    pub weights: Vec<f64>,
}

impl TopicDist {
    /// Empirical topic frequencies of `examples`, in canonical topic order.
    pub fn empirical(examples: &[Example]) -> Self {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for e in examples {
            *counts.entry(e.topic.as_str()).or_default() += 1;
        }
        let mut pairs: Vec<(&str, u64)> = counts.into_iter().collect();
        pairs.sort_by_key(|(t, _)| canonical_key(t));
        TopicDist {
            topics: pairs.iter().map(|(t, _)| t.to_string()).collect(),
            weights: pairs.iter().map(|(_, c)| *c as f64).collect(),
        }
    }
}

/// All positives of `graph` in arc order.
pub fn positives(graph: &InteractionGraph, mode: Mode) -> Vec<Example> {
    let mut out = Vec::new();
    for ((u, v), topics) in &graph.arcs {
        match mode {
            Mode::Sd => out.push(Example { u: u.clone(), v: v.clone(), topic: NO_TOPIC.into(), y: 1 }),
            Mode::Sdt => {
                let mut ts: Vec<&String> = topics.iter().filter(|(_, c)| **c > 0).map(|(t, _)| t).collect();
                ts.sort_by_key(|t| canonical_key(t));
                out.extend(ts.into_iter().map(|t| Example { u: u.clone(), v: v.clone(), topic: t.clone(), y: 1 }));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub draws: u64,
    pub rejected_self: u64,
    pub rejected_link: u64,
    pub max_consecutive_rejections: u64,
    /// Exact probability that a product-law draw is accepted.
    pub acceptance_probability: f64,
}

impl RejectionStats {
    fn absorb(&mut self, other: &RejectionStats) {
        self.draws += other.draws;
        self.rejected_self += other.rejected_self;
        self.rejected_link += other.rejected_link;
        self.max_consecutive_rejections = self.max_consecutive_rejections.max(other.max_consecutive_rejections);
    }
}

/// Rejection sampler over the non-links of one graph.
pub struct NullSampler {
    users: Vec<UserId>,
    source: WeightedIndex<u64>,
    target: WeightedIndex<u64>,
    /// Sorted targets of every source.
    successors: Vec<Vec<u32>>,
    acceptance: f64,
}

impl NullSampler {
    pub fn new(graph: &InteractionGraph, proclivity: &Proclivity) -> Result<Self> {
        let source =
            WeightedIndex::new(&proclivity.out_weight).map_err(|_| Error::DegenerateWeights("out"))?;
        let target =
            WeightedIndex::new(&proclivity.in_weight).map_err(|_| Error::DegenerateWeights("in"))?;
        let index: HashMap<&str, u32> =
            proclivity.users.iter().enumerate().map(|(i, u)| (u.as_str(), i as u32)).collect();
        let mut successors = vec![Vec::new(); proclivity.users.len()];
        for (u, v) in graph.arcs.keys() {
            match (index.get(u.as_str()), index.get(v.as_str())) {
                (Some(&a), Some(&b)) => successors[a as usize].push(b),
                _ => return Err(Error::Config(format!("arc {u} -> {v} outside the proclivity table"))),
            }
        }
        for s in &mut successors {
            s.sort_unstable();
            s.dedup();
        }

        // Non-link mass = total − diagonal − observed arcs.
        let w_out = &proclivity.out_weight;
        let w_in = &proclivity.in_weight;
        let total = w_out.iter().map(|&x| x as u128).sum::<u128>() * w_in.iter().map(|&x| x as u128).sum::<u128>();
        let diag: u128 = w_out.iter().zip(w_in).map(|(&a, &b)| a as u128 * b as u128).sum();
        let linked: u128 = successors
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().map(move |&b| w_out[a] as u128 * w_in[b as usize] as u128))
            .sum();
        let free = total - diag - linked;
        let acceptance = free as f64 / total as f64;

        Ok(NullSampler { users: proclivity.users.clone(), source, target, successors, acceptance })
    }

    /// Probability that one product-law draw is a non-link.
    pub fn acceptance_probability(&self) -> f64 {
        self.acceptance
    }

    /// One draw from the product law, before rejection.
    pub fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        (self.source.sample(rng), self.target.sample(rng))
    }

    pub fn is_rejected(&self, u: usize, v: usize) -> bool {
        u == v || self.successors[u].binary_search(&(v as u32)).is_ok()
    }

    pub fn user(&self, i: usize) -> &str {
        &self.users[i]
    }

    /// Draws `m` accepted pairs from one RNG stream.
    pub fn sample_indices<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<(Vec<(usize, usize)>, RejectionStats)> {
        let mut stats = RejectionStats { acceptance_probability: self.acceptance, ..Default::default() };
        if m > 0 && self.acceptance <= 0.0 {
            return Err(Error::NearCompleteGraph { rejections: 0 });
        }
        let mut out = Vec::with_capacity(m);
        let mut consecutive = 0u64;
        while out.len() < m {
            let (u, v) = self.draw_pair(rng);
            stats.draws += 1;
            if self.is_rejected(u, v) {
                if u == v {
                    stats.rejected_self += 1;
                } else {
                    stats.rejected_link += 1;
                }
                consecutive += 1;
                stats.max_consecutive_rejections = stats.max_consecutive_rejections.max(consecutive);
                if consecutive >= REJECTION_CAP {
                    return Err(Error::NearCompleteGraph { rejections: consecutive });
                }
                continue;
            }
            consecutive = 0;
            out.push((u, v));
        }
        Ok((out, stats))
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `m` negatives split over `streams` independent RNG streams derived
/// from `seed`, concatenated in stream order. Each accepted pair gets a topic
/// from `topic_dist`, or the sentinel when none is given.
pub fn sample_negatives_streams(
    sampler: &NullSampler,
    m: usize,
    topic_dist: Option<&TopicDist>,
    seed: u64,
    streams: usize,
) -> Result<(Vec<Example>, RejectionStats)> {
    let streams = streams.max(1);
    let topic_index = match topic_dist {
        Some(d) if !d.topics.is_empty() => Some(
            WeightedIndex::new(&d.weights).map_err(|e| Error::Config(format!("topic distribution: {e}")))?,
        ),
        _ => None,
    };
    let run = |s: usize| -> Result<(Vec<Example>, RejectionStats)> {
        let share = m / streams + usize::from(s < m % streams);
        let mut rng = stream_rng(seed, s as u64);
        let (pairs, stats) = sampler.sample_indices(share, &mut rng)?;
        let examples = pairs
            .into_iter()
            .map(|(u, v)| {
                let topic = match (&topic_index, topic_dist) {
                    (Some(ix), Some(d)) => d.topics[ix.sample(&mut rng)].clone(),
                    _ => NO_TOPIC.to_string(),
                };
                Example { u: sampler.user(u).to_string(), v: sampler.user(v).to_string(), topic, y: 0 }
            })
            .collect();
        Ok((examples, stats))
    };
    let parts: Vec<Result<(Vec<Example>, RejectionStats)>> = if streams == 1 {
        vec![run(0)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..streams).map(|s| scope.spawn(move || run(s))).collect();
            handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
        })
    };
    let mut all = Vec::with_capacity(m);
    let mut stats = RejectionStats { acceptance_probability: sampler.acceptance, ..Default::default() };
    for p in parts {
        let (ex, st) = p?;
        all.extend(ex);
        stats.absorb(&st);
    }
    Ok((all, stats))
}

/// Single-stream negative sampling.
pub fn sample_negatives(
    graph: &InteractionGraph,
    proclivity: &Proclivity,
    m: usize,
    topic_dist: Option<&TopicDist>,
    seed: u64,
) -> Result<Vec<Example>> {
    let sampler = NullSampler::new(graph, proclivity)?;
    Ok(sample_negatives_streams(&sampler, m, topic_dist, seed, 1)?.0)
}

/// Balanced sequence of labeled user pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub mode: Mode,
    pub seed: u64,
    pub examples: Vec<Example>,
    pub rejection_stats: RejectionStats,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    seed: u64,
    mode: Mode,
    counts: Counts,
    rejection_stats: RejectionStats,
}

#[derive(Serialize, Deserialize)]
struct Counts {
    positives: usize,
    negatives: usize,
    total: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.examples.iter().filter(|e| e.y == 1).count()
    }

    /// Balance, no self-pairs, and no negative on an observed arc.
    pub fn validate_against(&self, graph: &InteractionGraph) -> Result<()> {
        let pos = self.n_positive();
        if 2 * pos != self.len() {
            return Err(Error::Config(format!("unbalanced dataset: {pos} positives of {}", self.len())));
        }
        for e in &self.examples {
            if e.u == e.v {
                return Err(Error::Config(format!("self-pair {}", e.u)));
            }
            if e.y == 0 && graph.has_arc(&e.u, &e.v) {
                return Err(Error::Config(format!("negative {} -> {} is an observed arc", e.u, e.v)));
            }
        }
        Ok(())
    }

    /// Writes `u<TAB>v<TAB>topic<TAB>y` rows and a JSON sidecar next to `path`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for e in &self.examples {
            writeln!(w, "{}\t{}\t{}\t{}", e.u, e.v, e.topic, e.y).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let pos = self.n_positive();
        let side = Sidecar {
            seed: self.seed,
            mode: self.mode,
            counts: Counts { positives: pos, negatives: self.len() - pos, total: self.len() },
            rejection_stats: self.rejection_stats.clone(),
        };
        let sp = sidecar_path(path);
        std::fs::write(&sp, serde_json::to_string_pretty(&side)?).map_err(|e| Error::io(sp, e))
    }

    /// Reads a dataset TSV; seed, mode and stats come from the sidecar when present.
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let examples = parse_examples(std::io::BufReader::new(file))?;
        let sp = sidecar_path(path);
        let (mode, seed, rejection_stats) = match std::fs::read_to_string(&sp) {
            Ok(s) => {
                let side: Sidecar = serde_json::from_str(&s)?;
                (side.mode, side.seed, side.rejection_stats)
            }
            Err(_) => {
                let mode = if examples.iter().any(|e| e.topic != NO_TOPIC) { Mode::Sdt } else { Mode::Sd };
                (mode, 0, RejectionStats::default())
            }
        };
        Ok(LabeledDataset { mode, seed, examples, rejection_stats })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn parse_examples<R: BufRead>(reader: R) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if f.len() != 4 {
            return Err(Error::Parse { line: line_no, message: "expected u, v, topic, y".into() });
        }
        let y = match f[3] {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::Parse { line: line_no, message: format!("label `{other}` is not 0/1") }),
        };
        out.push(Example { u: f[0].into(), v: f[1].into(), topic: f[2].into(), y });
    }
    Ok(out)
}

/// All positives of `graph` plus as many negatives, shuffled under `seed`.
pub fn build_balanced_dataset(
    graph: &InteractionGraph,
    proclivity: &Proclivity,
    mode: Mode,
    seed: u64,
) -> Result<LabeledDataset> {
    build_balanced_dataset_streams(graph, proclivity, mode, seed, 1)
}

pub fn build_balanced_dataset_streams(
    graph: &InteractionGraph,
    proclivity: &Proclivity,
    mode: Mode,
    seed: u64,
    streams: usize,
) -> Result<LabeledDataset> {
    let pos = positives(graph, mode);
    if pos.is_empty() {
        return Ok(LabeledDataset { mode, seed, examples: vec![], rejection_stats: RejectionStats::default() });
    }
    let sampler = NullSampler::new(graph, proclivity)?;
    let dist = match mode {
        Mode::Sd => None,
        Mode::Sdt => Some(TopicDist::empirical(&pos)),
    };
    let (neg, stats) = sample_negatives_streams(&sampler, pos.len(), dist.as_ref(), seed, streams)?;
    let mut examples = pos;
    examples.extend(neg);
    examples.shuffle(&mut stream_rng(seed, SHUFFLE_STREAM));
    Ok(LabeledDataset { mode, seed, examples, rejection_stats: stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn graph(n: usize, arcs: &[(usize, usize, &str, u64)]) -> InteractionGraph {
        let nodes: BTreeSet<String> = (0..n).map(|i| format!("n{i}")).collect();
        let mut g = InteractionGraph::new("t", nodes);
        for (u, v, t, c) in arcs {
            g.add_replies(&format!("n{u}"), &format!("n{v}"), t, *c);
        }
        g
    }

    #[test]
    fn positives_by_mode() {
        let g = graph(2, &[(0, 1, "Business", 3), (0, 1, "Crime", 1)]);
        assert_eq!(positives(&g, Mode::Sd).len(), 1);
        let sdt = positives(&g, Mode::Sdt);
        let topics: Vec<_> = sdt.iter().map(|e| e.topic.as_str()).collect();
        assert_eq!(topics, ["Business", "Crime"]);
    }

    #[test]
    fn five_arcs_five_positives_ten_examples() {
        let g = graph(6, &[(0, 1, "A", 1), (1, 2, "A", 2), (2, 3, "B", 1), (3, 4, "A", 1), (4, 5, "B", 5)]);
        assert_eq!(positives(&g, Mode::Sd).len(), 5);
        let d = build_balanced_dataset(&g, &Proclivity::from_graph(&g), Mode::Sd, 7).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.n_positive(), 5);
        d.validate_against(&g).unwrap();
    }

    #[test]
    fn empty_graph_empty_dataset() {
        let g = graph(3, &[]);
        let d = build_balanced_dataset(&g, &Proclivity::from_graph(&g), Mode::Sdt, 1).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn complete_two_node_graph_errors() {
        let g = graph(2, &[(0, 1, "A", 1), (1, 0, "A", 1)]);
        let err = sample_negatives(&g, &Proclivity::from_graph(&g), 1, None, 3).unwrap_err();
        assert!(matches!(err, Error::NearCompleteGraph { .. }));
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let g = graph(3, &[]);
        let err = sample_negatives(&g, &Proclivity::from_graph(&g), 1, None, 3).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeights(_)));
    }

    #[test]
    fn proclivity_counts_events() {
        let g = graph(3, &[(0, 1, "A", 2), (0, 1, "B", 1), (2, 1, "A", 4)]);
        let p = Proclivity::from_graph(&g);
        assert_eq!(p.out_weight, [3, 0, 4]);
        assert_eq!(p.in_weight, [0, 7, 0]);
    }

    #[test]
    fn same_seed_same_sequence_and_streams_are_deterministic() {
        let g = graph(5, &[(0, 1, "A", 2), (1, 2, "B", 1), (2, 0, "A", 3), (3, 4, "B", 1), (4, 1, "A", 1)]);
        let p = Proclivity::from_graph(&g);
        let a = build_balanced_dataset(&g, &p, Mode::Sdt, 99).unwrap();
        let b = build_balanced_dataset(&g, &p, Mode::Sdt, 99).unwrap();
        assert_eq!(a.examples, b.examples);
        let c = build_balanced_dataset_streams(&g, &p, Mode::Sdt, 99, 3).unwrap();
        let d = build_balanced_dataset_streams(&g, &p, Mode::Sdt, 99, 3).unwrap();
        assert_eq!(c.examples, d.examples);
        c.validate_against(&g).unwrap();
    }

    #[test]
    fn sdt_negative_topics_come_from_positive_topics() {
        let g = graph(6, &[(0, 1, "Crime", 2), (1, 2, "Tech", 1), (3, 4, "Crime", 1), (4, 5, "Tech", 9)]);
        let d = build_balanced_dataset(&g, &Proclivity::from_graph(&g), Mode::Sdt, 5).unwrap();
        for e in d.examples.iter().filter(|e| e.y == 0) {
            assert!(e.topic == "Crime" || e.topic == "Tech");
        }
    }

    #[test]
    fn dataset_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = graph(4, &[(0, 1, "A", 2), (2, 3, "B", 1)]);
        let d = build_balanced_dataset(&g, &Proclivity::from_graph(&g), Mode::Sdt, 11).unwrap();
        let path = dir.path().join("dataset.tsv");
        d.write(&path).unwrap();
        let back = LabeledDataset::read(&path).unwrap();
        assert_eq!(back.examples, d.examples);
        assert_eq!(back.seed, 11);
        assert_eq!(back.mode, Mode::Sdt);
    }
}
