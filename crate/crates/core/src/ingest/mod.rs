//! Event-dump ingestion: TSV parsing, user selection and reply-graph construction.
//!
//! The pipeline for one slice (typically one year) is
//! [`EventLog`] + [`ActivityTable`] → [`select_users`] → [`build_graph`].

mod graph;
mod select;
mod topic;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use graph::{build_graph, BuildStats, InteractionGraph};
pub use select::{select_users, ExclusionReason, SelectionConfig, UserSet};
pub use topic::{assign_topic_baseline, default_keyword_map, KeywordMap, DEFAULT_FALLBACK_TOPIC};

pub type UserId = String;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub author: UserId,
    pub title: String,
    pub topic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: String,
    pub post_id: String,
    /// Either a post id or a comment id.
    pub parent_id: String,
    pub author: UserId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Post,
    Comment,
}

/// Posts and comments of one slice, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub slice_label: String,
    pub posts: Vec<Post>,
    pub comments: Vec<Comment>,
}

impl EventLog {
    pub fn new(slice_label: impl Into<String>) -> Self {
        EventLog { slice_label: slice_label.into(), ..Default::default() }
    }

    /// Appends the events of `other`, rejecting comment ids already present.
    pub fn extend(&mut self, other: EventLog) -> Result<()> {
        let mut seen: HashSet<&str> = self.comments.iter().map(|c| c.comment_id.as_str()).collect();
        for (i, c) in other.comments.iter().enumerate() {
            if !seen.insert(c.comment_id.as_str()) {
                return Err(Error::Duplicate { kind: "comment", id: c.comment_id.clone(), line: i + 1 });
            }
        }
        self.posts.extend(other.posts);
        self.comments.extend(other.comments);
        Ok(())
    }

    /// Comments whose `post_id` does not match any post of the log.
    pub fn orphan_comments(&self) -> impl Iterator<Item = &Comment> {
        let posts: HashSet<&str> = self.posts.iter().map(|p| p.post_id.as_str()).collect();
        self.comments.iter().filter(move |c| !posts.contains(c.post_id.as_str()))
    }

    /// Messages (posts plus comments) authored by each user.
    pub fn message_counts(&self) -> BTreeMap<&str, (u64, u64)> {
        let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
        for p in &self.posts {
            counts.entry(p.author.as_str()).or_default().0 += 1;
        }
        for c in &self.comments {
            counts.entry(c.author.as_str()).or_default().1 += 1;
        }
        counts
    }
}

fn split_fields(line: &str, n: usize, line_no: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.splitn(n, '\t').collect();
    if fields.len() != n {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected {n} tab-separated fields, found {}", fields.len()),
        });
    }
    if let Some(i) = fields[..n - 1].iter().position(|f| f.is_empty()) {
        return Err(Error::Parse { line: line_no, message: format!("field {} is empty", i + 1) });
    }
    Ok(fields)
}

/// Parses a posts or comments TSV stream into an [`EventLog`].
///
/// Posts: `post_id<TAB>author<TAB>topic_or_NA<TAB>title`.
/// Comments: `comment_id<TAB>post_id<TAB>parent_id<TAB>author`.
/// Blank lines are ignored; everything else must be a well-formed row.
pub fn parse_events<R: BufRead>(reader: R, format: EventFormat, slice_label: &str) -> Result<EventLog> {
    let mut log = EventLog::new(slice_label);
    let mut seen_posts = HashSet::new();
    let mut seen_comments = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        match format {
            EventFormat::Post => {
                let f = split_fields(line, 4, line_no)?;
                if !seen_posts.insert(f[0].to_string()) {
                    return Err(Error::Duplicate { kind: "post", id: f[0].to_string(), line: line_no });
                }
                let topic = match f[2] {
                    crate::topic::NO_TOPIC => None,
                    t => Some(t.to_string()),
                };
                log.posts.push(Post {
                    post_id: f[0].to_string(),
                    author: f[1].to_string(),
                    topic,
                    title: f[3].to_string(),
                });
            }
            EventFormat::Comment => {
                let f = split_fields(line, 4, line_no)?;
                if f[3].is_empty() || f[3].contains('\t') {
                    return Err(Error::Parse { line: line_no, message: "malformed author field".into() });
                }
                if !seen_comments.insert(f[0].to_string()) {
                    return Err(Error::Duplicate { kind: "comment", id: f[0].to_string(), line: line_no });
                }
                log.comments.push(Comment {
                    comment_id: f[0].to_string(),
                    post_id: f[1].to_string(),
                    parent_id: f[2].to_string(),
                    author: f[3].to_string(),
                });
            }
        }
    }
    Ok(log)
}

/// Per-user submission counts across subreddits (`N_{u,s}`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivityTable {
    rows: BTreeMap<(UserId, String), u64>,
}

impl ActivityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user: &str, subreddit: &str, n_submissions: u64) -> Result<()> {
        let key = (user.to_string(), subreddit.to_string());
        if self.rows.contains_key(&key) {
            return Err(Error::Duplicate { kind: "activity", id: format!("{user}/{subreddit}"), line: 0 });
        }
        self.rows.insert(key, n_submissions);
        Ok(())
    }

    /// Reads `user<TAB>subreddit<TAB>n_submissions` rows.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut table = ActivityTable::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim_end().split('\t').collect();
            if f.len() != 3 || f.iter().any(|s| s.is_empty()) {
                return Err(Error::Parse { line: line_no, message: "expected user, subreddit, n_submissions".into() });
            }
            let n: u64 = f[2].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("n_submissions `{}` is not a nonnegative integer", f[2]),
            })?;
            table.insert(f[0], f[1], n).map_err(|e| match e {
                Error::Duplicate { kind, id, .. } => Error::Duplicate { kind, id, line: line_no },
                e => e,
            })?;
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.rows.iter().map(|((u, s), n)| (u.as_str(), s.as_str(), *n))
    }

    /// Distinct subreddits with at least one submission, per user.
    pub fn subreddit_counts(&self) -> BTreeMap<&str, usize> {
        let mut out: BTreeMap<&str, usize> = BTreeMap::new();
        for ((u, _), n) in &self.rows {
            if *n > 0 {
                *out.entry(u.as_str()).or_default() += 1;
            }
        }
        out
    }
}

/// Reads a bot list: one username per line.
pub fn parse_bot_list<R: BufRead>(reader: R) -> Result<std::collections::BTreeSet<UserId>> {
    let mut out = std::collections::BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        let name = line.trim();
        if !name.is_empty() {
            out.insert(name.to_string());
        }
    }
    Ok(out)
}

/// Input files of one slice.
#[derive(Debug, Clone, Copy)]
pub struct SliceFiles<'a> {
    pub posts: &'a Path,
    pub comments: &'a Path,
    pub activity: &'a Path,
    pub bot_list: Option<&'a Path>,
}

/// Everything ingestion produces for one slice.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub users: UserSet,
    pub graph: InteractionGraph,
    pub activity: ActivityTable,
}

pub fn open_buffered(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Reads the slice files, selects users and builds the reply graph. Entries
/// of `files.bot_list` are added to `config.bot_list`.
pub fn ingest_files(files: SliceFiles<'_>, slice: &str, mut config: SelectionConfig) -> Result<Ingested> {
    let mut log = parse_events(open_buffered(files.posts)?, EventFormat::Post, slice)?;
    log.extend(parse_events(open_buffered(files.comments)?, EventFormat::Comment, slice)?)?;
    let activity = ActivityTable::parse(open_buffered(files.activity)?)?;
    if let Some(p) = files.bot_list {
        config.bot_list.extend(parse_bot_list(open_buffered(p)?)?);
    }
    let users = select_users(&log, &activity, &config);
    let graph = build_graph(&log, &users);
    Ok(Ingested { users, graph, activity })
}
