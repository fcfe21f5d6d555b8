use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EventLog, UserId, UserSet};
use crate::error::{Error, Result};
use crate::topic::NO_TOPIC;

/// Per-topic reply counts on one arc.
pub type TopicCounts = BTreeMap<String, u64>;

/// Tallies from [`build_graph`]. Every comment lands in exactly one of
/// `contributing`, `skipped_unresolved`, `self_loops` or `unselected_endpoint`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub total_comments: u64,
    pub contributing: u64,
    pub skipped_unresolved: u64,
    pub self_loops: u64,
    pub unselected_endpoint: u64,
    /// Contributing comments whose enclosing post is missing from the log;
    /// their arcs are recorded under the `NA` topic.
    pub orphan_post: u64,
}

/// Directed reply graph over the selected users.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionGraph {
    pub slice: String,
    pub nodes: BTreeSet<UserId>,
    pub arcs: BTreeMap<(UserId, UserId), TopicCounts>,
    pub stats: BuildStats,
}

#[derive(Serialize, Deserialize)]
struct ArcRecord {
    u: UserId,
    v: UserId,
    topics: TopicCounts,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    slice: String,
    n_nodes: usize,
    n_arcs: usize,
    n_reply_events: u64,
    nodes: Vec<UserId>,
    arcs: Vec<ArcRecord>,
    stats: BuildStats,
}

impl InteractionGraph {
    pub fn new(slice: impl Into<String>, nodes: BTreeSet<UserId>) -> Self {
        InteractionGraph { slice: slice.into(), nodes, ..Default::default() }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Distinct arcs.
    pub fn n_arcs(&self) -> usize {
        self.arcs.len()
    }

    /// Reply events, i.e. the sum of all per-topic counts.
    pub fn n_reply_events(&self) -> u64 {
        self.arcs.values().flat_map(|t| t.values()).sum()
    }

    pub fn has_arc(&self, u: &str, v: &str) -> bool {
        self.arcs.contains_key(&(u.to_string(), v.to_string()))
    }

    /// Adds `count` replies from `u` to `v` under `topic`. Panics on
    /// self-loops or endpoints outside the node set.
    pub fn add_replies(&mut self, u: &str, v: &str, topic: &str, count: u64) {
        assert!(u != v, "self-loop {u} -> {v}");
        assert!(self.nodes.contains(u) && self.nodes.contains(v), "arc endpoint outside node set");
        if count == 0 {
            return;
        }
        *self
            .arcs
            .entry((u.to_string(), v.to_string()))
            .or_default()
            .entry(topic.to_string())
            .or_default() += count;
    }

    /// Merges a partial graph built over another shard of the same slice.
    pub fn merge(&mut self, other: InteractionGraph) {
        self.nodes.extend(other.nodes);
        for (key, topics) in other.arcs {
            let entry = self.arcs.entry(key).or_default();
            for (t, c) in topics {
                *entry.entry(t).or_default() += c;
            }
        }
        let s = &mut self.stats;
        s.total_comments += other.stats.total_comments;
        s.contributing += other.stats.contributing;
        s.skipped_unresolved += other.stats.skipped_unresolved;
        s.self_loops += other.stats.self_loops;
        s.unselected_endpoint += other.stats.unselected_endpoint;
        s.orphan_post += other.stats.orphan_post;
    }

    /// Checks endpoint closure, absence of self-loops and positive counts.
    pub fn validate(&self) -> Result<()> {
        for ((u, v), topics) in &self.arcs {
            if u == v {
                return Err(Error::Config(format!("self-loop on {u}")));
            }
            if !self.nodes.contains(u) || !self.nodes.contains(v) {
                return Err(Error::Config(format!("arc {u} -> {v} has an endpoint outside the node set")));
            }
            if topics.is_empty() || topics.values().any(|&c| c == 0) {
                return Err(Error::Config(format!("arc {u} -> {v} carries a zero count")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            slice: self.slice.clone(),
            n_nodes: self.n_nodes(),
            n_arcs: self.n_arcs(),
            n_reply_events: self.n_reply_events(),
            nodes: self.nodes.iter().cloned().collect(),
            arcs: self
                .arcs
                .iter()
                .map(|((u, v), t)| ArcRecord { u: u.clone(), v: v.clone(), topics: t.clone() })
                .collect(),
            stats: self.stats.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        let mut g = InteractionGraph::new(file.slice, file.nodes.into_iter().collect());
        g.stats = file.stats;
        for a in file.arcs {
            g.arcs.insert((a.u, a.v), a.topics);
        }
        g.validate()?;
        Ok(g)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Builds the reply graph: an arc `u -> v` for every comment by selected `u`
/// whose parent (post or comment) is authored by selected `v != u`, counted
/// per topic of the enclosing post.
pub fn build_graph(log: &EventLog, users: &UserSet) -> InteractionGraph {
    // First pass: authors of every message, topics of every post.
    let mut post_topic: HashMap<&str, &str> = HashMap::with_capacity(log.posts.len());
    let mut author: HashMap<&str, &str> = HashMap::with_capacity(log.posts.len() + log.comments.len());
    for p in &log.posts {
        post_topic.insert(p.post_id.as_str(), p.topic.as_deref().unwrap_or(NO_TOPIC));
        author.insert(p.post_id.as_str(), p.author.as_str());
    }
    for c in &log.comments {
        author.insert(c.comment_id.as_str(), c.author.as_str());
    }

    let mut g = InteractionGraph::new(log.slice_label.clone(), users.selected.clone());
    for c in &log.comments {
        g.stats.total_comments += 1;
        let Some(&parent_author) = author.get(c.parent_id.as_str()) else {
            g.stats.skipped_unresolved += 1;
            continue;
        };
        let u = c.author.as_str();
        if u == parent_author {
            g.stats.self_loops += 1;
            continue;
        }
        if !users.selected.contains(u) || !users.selected.contains(parent_author) {
            g.stats.unselected_endpoint += 1;
            continue;
        }
        let topic = match post_topic.get(c.post_id.as_str()) {
            Some(t) => *t,
            None => {
                g.stats.orphan_post += 1;
                NO_TOPIC
            }
        };
        g.add_replies(u, parent_author, topic, 1);
        g.stats.contributing += 1;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_events, EventFormat};

    fn users(names: &[&str]) -> UserSet {
        UserSet { selected: names.iter().map(|s| s.to_string()).collect(), ..Default::default() }
    }

    fn log(posts: &str, comments: &str) -> EventLog {
        let mut l = parse_events(posts.as_bytes(), EventFormat::Post, "2016").unwrap();
        l.extend(parse_events(comments.as_bytes(), EventFormat::Comment, "2016").unwrap()).unwrap();
        l
    }

    #[test]
    fn single_reply_makes_one_arc() {
        let l = log("p1\tv\tBusiness\tStocks\n", "c1\tp1\tp1\tu\n");
        let g = build_graph(&l, &users(&["u", "v"]));
        assert_eq!(g.arcs[&("u".to_string(), "v".to_string())]["Business"], 1);
        assert_eq!(g.n_arcs(), 1);
        assert_eq!(g.stats.contributing, 1);
    }

    #[test]
    fn self_reply_is_not_an_arc() {
        let l = log("p1\tu\tBusiness\tStocks\n", "c1\tp1\tp1\tu\n");
        let g = build_graph(&l, &users(&["u"]));
        assert_eq!(g.n_arcs(), 0);
        assert_eq!(g.stats.self_loops, 1);
    }

    #[test]
    fn nested_replies_and_tallies() {
        let posts = "p1\tv\tCrime\tx\np2\tw\tNA\ty\n";
        let comments = "c1\tp1\tp1\tu\n\
                        c2\tp1\tc1\tv\n\
                        c3\tp1\tc2\tu\n\
                        c4\tp1\tmissing\tu\n\
                        c5\tp2\tp2\tu\n\
                        c6\tp9\tc1\tv\n";
        let g = build_graph(&log(posts, comments), &users(&["u", "v"]));
        let uv = &g.arcs[&("u".to_string(), "v".to_string())];
        assert_eq!(uv["Crime"], 2);
        let vu = &g.arcs[&("v".to_string(), "u".to_string())];
        assert_eq!(vu["Crime"], 1);
        assert_eq!(vu[NO_TOPIC], 1);
        let s = &g.stats;
        assert_eq!(s.skipped_unresolved, 1);
        assert_eq!(s.unselected_endpoint, 1);
        assert_eq!(s.orphan_post, 1);
        assert_eq!(s.contributing + s.skipped_unresolved + s.self_loops + s.unselected_endpoint, s.total_comments);
        g.validate().unwrap();
    }

    #[test]
    fn json_roundtrip_is_byte_stable() {
        let l = log("p1\tv\tBusiness\tx\n", "c1\tp1\tp1\tu\nc2\tp1\tc1\tv\n");
        let g = build_graph(&l, &users(&["u", "v"]));
        let s = g.to_json().unwrap();
        let back = InteractionGraph::from_json(&s).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json().unwrap(), s);
    }

    #[test]
    fn merging_shards_equals_single_build() {
        let posts = "p1\tv\tCrime\tx\np2\tu\tTech\ty\n";
        let c1 = "c1\tp1\tp1\tu\nc2\tp1\tc1\tv\n";
        let c2 = "c3\tp2\tp2\tv\nc4\tp2\tc3\tu\n";
        let who = users(&["u", "v"]);
        let whole = build_graph(&log(posts, &format!("{c1}{c2}")), &who);
        let mut g = build_graph(&log(posts, c1), &who);
        g.merge(build_graph(&log(posts, c2), &who));
        assert_eq!(g, whole);
    }
}
