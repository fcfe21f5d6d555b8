//! Per-user demographic and partisan features.
//!
//! Subreddit scores are projected onto users as an activity-weighted mean,
//! ranked among the selected users, and the bottom and top quartiles of each
//! axis become the two binary pole features of that axis.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ActivityTable, UserId};

/// One continuous axis and its two pole features.
///
/// `labels` fixes the position of the two features in the binary vector;
/// `low_pole` says which of them the lowest quantile maps to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub name: String,
    pub labels: [String; 2],
    pub low_pole: usize,
}

impl AxisSpec {
    pub fn new(name: &str, low: &str, high: &str) -> Self {
        AxisSpec { name: name.into(), labels: [low.into(), high.into()], low_pole: 0 }
    }

    pub fn low_label(&self) -> &str {
        &self.labels[self.low_pole]
    }

    pub fn high_label(&self) -> &str {
        &self.labels[1 - self.low_pole]
    }
}

/// Age, gender, affluence and partisan axes, giving the feature order
/// (Young, Old, Male, Female, Poor, Rich, Left, Right).
pub fn default_axes() -> Vec<AxisSpec> {
    vec![
        AxisSpec::new("age", "Young", "Old"),
        AxisSpec::new("gender", "Male", "Female"),
        AxisSpec::new("affluence", "Poor", "Rich"),
        AxisSpec::new("partisan", "Left", "Right"),
    ]
}

pub fn feature_names(axes: &[AxisSpec]) -> Vec<String> {
    axes.iter().flat_map(|a| a.labels.iter().cloned()).collect()
}

/// Subreddit scores per axis, plus optional polarity overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    scores: BTreeMap<(String, String), f64>,
    /// axis → (low label, high label)
    pub polarity: BTreeMap<String, (String, String)>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, subreddit: &str, axis: &str, score: f64) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::Config(format!("non-finite score for {subreddit}/{axis}")));
        }
        let key = (subreddit.to_string(), axis.to_string());
        if self.scores.insert(key, score).is_some() {
            return Err(Error::Duplicate { kind: "score", id: format!("{subreddit}/{axis}"), line: 0 });
        }
        Ok(())
    }

    pub fn get(&self, subreddit: &str, axis: &str) -> Option<f64> {
        self.scores.get(&(subreddit.to_string(), axis.to_string())).copied()
    }

    /// Reads `subreddit,axis,score` rows. A `subreddit,axis,score` header is
    /// skipped, `#polarity axis=low:high` lines set polarity, other `#` lines
    /// are comments.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut table = ScoreTable::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#polarity") {
                for spec in rest.split_whitespace() {
                    let parsed = spec
                        .split_once('=')
                        .and_then(|(axis, poles)| poles.split_once(':').map(|(lo, hi)| (axis, lo, hi)));
                    let Some((axis, lo, hi)) = parsed else {
                        return Err(Error::Parse { line: line_no, message: format!("bad polarity `{spec}`") });
                    };
                    table.polarity.insert(axis.into(), (lo.into(), hi.into()));
                }
                continue;
            }
            if line.starts_with('#') || line.eq_ignore_ascii_case("subreddit,axis,score") {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(Error::Parse { line: line_no, message: "expected subreddit,axis,score".into() });
            }
            let score: f64 = f[2]
                .parse()
                .map_err(|_| Error::Parse { line: line_no, message: format!("bad score `{}`", f[2]) })?;
            table.insert(f[0], f[1], score).map_err(|e| match e {
                Error::Duplicate { kind, id, .. } => Error::Duplicate { kind, id, line: line_no },
                Error::Config(m) => Error::Parse { line: line_no, message: m },
                e => e,
            })?;
        }
        Ok(table)
    }

    /// Applies the polarity overrides to `axes`.
    pub fn apply_polarity(&self, axes: &mut [AxisSpec]) -> Result<()> {
        for (axis, (lo, hi)) in &self.polarity {
            let Some(spec) = axes.iter_mut().find(|a| &a.name == axis) else {
                return Err(Error::Config(format!("polarity for unknown axis `{axis}`")));
            };
            let low_pole = spec
                .labels
                .iter()
                .position(|l| l == lo)
                .filter(|&p| spec.labels[1 - p] == *hi)
                .ok_or_else(|| Error::Config(format!("polarity {lo}:{hi} does not match axis `{axis}`")))?;
            spec.low_pole = low_pole;
        }
        Ok(())
    }
}

/// Activity-weighted mean score `Σ N·F / Σ N` over the subreddits scored on
/// `axis`. Users with no scored activity map to `None`.
pub fn project_scores(activity: &ActivityTable, scores: &ScoreTable, axis: &str) -> BTreeMap<UserId, Option<f64>> {
    let mut acc: BTreeMap<UserId, (f64, u64)> = BTreeMap::new();
    for (user, subreddit, n) in activity.iter() {
        let entry = acc.entry(user.to_string()).or_insert((0.0, 0));
        if let Some(s) = scores.get(subreddit, axis) {
            entry.0 += n as f64 * s;
            entry.1 += n;
        }
    }
    acc.into_iter()
        .map(|(u, (num, den))| (u, if den > 0 { Some(num / den as f64) } else { None }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pole {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binarized {
    /// `(rank + 0.5) / n` among the users with a score.
    pub quantile: Option<f64>,
    pub pole: Option<Pole>,
}

const TIE_SALT: &[u8] = b"homophily-tie-break-v1";

/// Salted 64-bit FNV-1a hash of a user id, used to order tied scores.
pub fn tie_break_hash(user: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in TIE_SALT.iter().chain(user.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Ranks the users with a present score and labels the lowest and highest
/// `⌊q·n⌋` of them. Ties are ordered by [`tie_break_hash`], then by id.
pub fn quantile_binarize(raw: &BTreeMap<UserId, Option<f64>>, q: f64) -> Result<BTreeMap<UserId, Binarized>> {
    if !(q > 0.0 && q < 0.5) {
        return Err(Error::Config(format!("quantile fraction {q} outside (0, 0.5)")));
    }
    let mut present: Vec<(&str, f64, u64)> = raw
        .iter()
        .filter_map(|(u, v)| v.map(|v| (u.as_str(), v, tie_break_hash(u))))
        .collect();
    let n = present.len();
    if n < 4 {
        return Err(Error::InsufficientPopulation { n, min: 4 });
    }
    present.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)).then(a.0.cmp(b.0)));
    let k = (q * n as f64).floor() as usize;

    let mut out: BTreeMap<UserId, Binarized> =
        raw.keys().map(|u| (u.clone(), Binarized { quantile: None, pole: None })).collect();
    for (rank, (user, _, _)) in present.iter().enumerate() {
        let pole = if rank < k {
            Some(Pole::Low)
        } else if rank >= n - k {
            Some(Pole::High)
        } else {
            None
        };
        out.insert(user.to_string(), Binarized { quantile: Some((rank as f64 + 0.5) / n as f64), pole });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    /// Raw projected score per axis.
    pub raw: Vec<Option<f64>>,
    pub quantile: Vec<Option<f64>>,
    /// Binary feature vector, two entries per axis.
    pub bits: Vec<u8>,
}

/// Features of every user, in the order given by `axes`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub axes: Vec<AxisSpec>,
    pub rows: BTreeMap<UserId, FeatureRow>,
    /// Users with a present score, per axis.
    pub population: Vec<usize>,
}

impl FeatureTable {
    /// A table holding only binary vectors, e.g. for synthetic data.
    pub fn from_bits(axes: Vec<AxisSpec>, bits: BTreeMap<UserId, Vec<u8>>) -> Result<Self> {
        let nf = 2 * axes.len();
        let mut rows = BTreeMap::new();
        for (u, b) in bits {
            if b.len() != nf {
                return Err(Error::Dimension { expected: nf, got: b.len() });
            }
            rows.insert(u, FeatureRow { raw: vec![None; axes.len()], quantile: vec![None; axes.len()], bits: b });
        }
        let t = FeatureTable { population: vec![0; axes.len()], axes, rows };
        t.validate()?;
        Ok(t)
    }

    pub fn n_features(&self) -> usize {
        2 * self.axes.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        feature_names(&self.axes)
    }

    pub fn bits(&self, user: &str) -> Option<&[u8]> {
        self.rows.get(user).map(|r| r.bits.as_slice())
    }

    /// Bits are 0/1 and no user holds both poles of an axis.
    pub fn validate(&self) -> Result<()> {
        let nf = self.n_features();
        for (u, row) in &self.rows {
            if row.bits.len() != nf {
                return Err(Error::Dimension { expected: nf, got: row.bits.len() });
            }
            if row.bits.iter().any(|&b| b > 1) {
                return Err(Error::Config(format!("user {u} has a non-binary feature")));
            }
            if row.bits.chunks(2).any(|p| p[0] == 1 && p[1] == 1) {
                return Err(Error::Config(format!("user {u} holds both poles of an axis")));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["user".to_string()];
        for a in &self.axes {
            header.push(format!("{}_raw", a.name));
            header.push(format!("{}_quantile", a.name));
            header.extend(a.labels.iter().cloned());
        }
        w.write_record(&header)?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for (u, row) in &self.rows {
            let mut rec = vec![u.clone()];
            for (i, _) in self.axes.iter().enumerate() {
                rec.push(fmt(row.raw[i]));
                rec.push(fmt(row.quantile[i]));
                rec.push(row.bits[2 * i].to_string());
                rec.push(row.bits[2 * i + 1].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() < 1 || (header.len() - 1) % 4 != 0 || &header[0] != "user" {
            return Err(Error::Parse { line: 1, message: "unexpected features.csv header".into() });
        }
        let mut axes = Vec::new();
        for c in header.iter().skip(1).collect::<Vec<_>>().chunks(4) {
            let name = c[0]
                .strip_suffix("_raw")
                .ok_or_else(|| Error::Parse { line: 1, message: format!("expected *_raw column, got {}", c[0]) })?;
            axes.push(AxisSpec::new(name, c[2], c[3]));
        }
        let parse_opt = |s: &str, line: usize| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::Parse { line, message: format!("bad number `{s}`") })
            }
        };
        let mut rows = BTreeMap::new();
        let mut population = vec![0; axes.len()];
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != header.len() {
                return Err(Error::Parse { line, message: "wrong field count".into() });
            }
            let mut row = FeatureRow { raw: vec![], quantile: vec![], bits: vec![] };
            for a in 0..axes.len() {
                let base = 1 + 4 * a;
                row.raw.push(parse_opt(&rec[base], line)?);
                row.quantile.push(parse_opt(&rec[base + 1], line)?);
                if row.raw[a].is_some() {
                    population[a] += 1;
                }
                for k in 0..2 {
                    let b: u8 = rec[base + 2 + k]
                        .parse()
                        .map_err(|_| Error::Parse { line, message: "bad feature bit".into() })?;
                    row.bits.push(b);
                }
            }
            rows.insert(rec[0].to_string(), row);
        }
        let t = FeatureTable { axes, rows, population };
        t.validate()?;
        Ok(t)
    }
}

/// Projects, ranks and binarizes every axis over `users`. Quantiles are taken
/// among the users of `users` that have scored activity on the axis; users
/// without it keep both pole bits at 0.
pub fn build_feature_table(
    users: &BTreeSet<UserId>,
    activity: &ActivityTable,
    scores: &ScoreTable,
    mut axes: Vec<AxisSpec>,
    q: f64,
) -> Result<FeatureTable> {
    scores.apply_polarity(&mut axes)?;
    let na = axes.len();
    let mut rows: BTreeMap<UserId, FeatureRow> = users
        .iter()
        .map(|u| (u.clone(), FeatureRow { raw: vec![None; na], quantile: vec![None; na], bits: vec![0; 2 * na] }))
        .collect();
    let mut population = Vec::with_capacity(na);
    for (a, axis) in axes.iter().enumerate() {
        let projected = project_scores(activity, scores, &axis.name);
        let raw: BTreeMap<UserId, Option<f64>> =
            users.iter().map(|u| (u.clone(), projected.get(u).copied().flatten())).collect();
        population.push(raw.values().filter(|v| v.is_some()).count());
        let bin = quantile_binarize(&raw, q)
            .map_err(|e| Error::Config(format!("axis `{}`: {e}", axis.name)))?;
        for (u, b) in bin {
            let row = rows.get_mut(&u).expect("user from the same set");
            row.raw[a] = raw[&u];
            row.quantile[a] = b.quantile;
            match b.pole {
                Some(Pole::Low) => row.bits[2 * a + axis.low_pole] = 1,
                Some(Pole::High) => row.bits[2 * a + 1 - axis.low_pole] = 1,
                None => {}
            }
        }
    }
    let t = FeatureTable { axes, rows, population };
    t.validate()?;
    Ok(t)
}
