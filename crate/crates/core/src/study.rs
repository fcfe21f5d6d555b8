//! Per-slice pipelines, cross-slice significance aggregation and report tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_feature_table, default_axes, ScoreTable};
use crate::inference::{fit, Coefficient, FitResult};
use crate::ingest::{ingest_files, open_buffered, SelectionConfig, SliceFiles};
use crate::sampler::{build_balanced_dataset_streams, Mode, Proclivity};

fn default_q() -> f64 {
    0.25
}
fn default_ridge() -> f64 {
    1e-6
}
fn default_alpha() -> f64 {
    0.05
}
fn default_fraction() -> f64 {
    0.8
}
fn default_streams() -> usize {
    1
}
fn default_true() -> bool {
    true
}

/// User-selection thresholds as written in a study config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSettings {
    pub min_messages: u64,
    pub min_subreddits: usize,
    pub max_subreddits_per_month: f64,
    pub months_in_slice: u32,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        let d = SelectionConfig::default();
        SelectionSettings {
            min_messages: d.min_messages,
            min_subreddits: d.min_subreddits,
            max_subreddits_per_month: d.max_subreddits_per_month,
            months_in_slice: d.months_in_slice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    pub label: String,
    pub posts: PathBuf,
    pub comments: PathBuf,
    pub activity: PathBuf,
    /// Overrides the study-wide score table.
    #[serde(default)]
    pub scores: Option<PathBuf>,
}

/// Study config, read from TOML. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Shared seed; each slice samples under a seed derived from it and the
    /// slice label.
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Fraction of slices in which a coefficient must be significant.
    #[serde(default = "default_fraction")]
    pub robust_fraction: f64,
    #[serde(default = "default_streams")]
    pub streams: usize,
    #[serde(default = "default_true")]
    pub concurrent_slices: bool,
    #[serde(default)]
    pub selection: SelectionSettings,
    pub scores: PathBuf,
    #[serde(default)]
    pub bot_list: Option<PathBuf>,
    pub slices: Vec<SliceConfig>,
}

impl StudyConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: StudyConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads `path` and resolves every input path against its directory.
    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = StudyConfig::from_toml(&s)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut c.scores);
        if let Some(p) = c.bot_list.as_mut() {
            fix(p);
        }
        for s in &mut c.slices {
            fix(&mut s.posts);
            fix(&mut s.comments);
            fix(&mut s.activity);
            if let Some(p) = s.scores.as_mut() {
                fix(p);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slices.is_empty() {
            return Err(Error::Config("study lists no slices".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.slices {
            if !seen.insert(s.label.as_str()) {
                return Err(Error::Config(format!("slice `{}` listed twice", s.label)));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.robust_fraction > 0.0 && self.robust_fraction <= 1.0) {
            return Err(Error::Config(format!("robust_fraction must be in (0, 1], got {}", self.robust_fraction)));
        }
        if self.streams == 0 {
            return Err(Error::Config("streams must be at least 1".into()));
        }
        Ok(())
    }

    fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            min_messages: self.selection.min_messages,
            min_subreddits: self.selection.min_subreddits,
            max_subreddits_per_month: self.selection.max_subreddits_per_month,
            months_in_slice: self.selection.months_in_slice,
            bot_list: Default::default(),
        }
    }
}

/// Sampling seed of one slice: the shared seed mixed with a hash of the label.
pub fn slice_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Runs ingest, features, sampling and fitting for one slice.
pub fn run_slice(config: &StudyConfig, slice: &SliceConfig) -> Result<FitResult> {
    let files = SliceFiles {
        posts: &slice.posts,
        comments: &slice.comments,
        activity: &slice.activity,
        bot_list: config.bot_list.as_deref(),
    };
    let ingested = ingest_files(files, &slice.label, config.selection_config())?;
    let scores = ScoreTable::parse(open_buffered(slice.scores.as_ref().unwrap_or(&config.scores))?)?;
    let features = build_feature_table(&ingested.graph.nodes, &ingested.activity, &scores, default_axes(), config.q)?;
    let proclivity = Proclivity::from_graph(&ingested.graph);
    let seed = slice_seed(config.seed, &slice.label);
    let dataset = build_balanced_dataset_streams(&ingested.graph, &proclivity, config.mode, seed, config.streams)?;
    if dataset.is_empty() {
        return Err(Error::Config("slice has no reply arcs between selected users".into()));
    }
    fit(&dataset, &features, config.mode, config.ridge)
}

/// Runs every slice and aggregates. The first failing slice (in config
/// order) aborts the study.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let results: Vec<Result<FitResult>> = if config.concurrent_slices && config.slices.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = config.slices.iter().map(|s| scope.spawn(move || run_slice(config, s))).collect();
            handles.into_iter().map(|h| h.join().expect("slice worker panicked")).collect()
        })
    } else {
        config.slices.iter().map(|s| run_slice(config, s)).collect()
    };
    let mut fits = Vec::with_capacity(results.len());
    for (s, r) in config.slices.iter().zip(results) {
        fits.push((s.label.clone(), r.map_err(|e| e.in_slice(&s.label))?));
    }
    Ok(StudyResult::from_fits(fits, config.alpha, config.robust_fraction))
}

/// Cross-slice summary of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_significant: usize,
    /// All slices where the coefficient is active agree in sign.
    pub sign_consistent: bool,
    pub robust: bool,
}

/// `n_significant ≥ ceil(fraction · n_slices)` and consistent sign.
pub fn aggregate(coefs: &[Option<&Coefficient>], alpha: f64, fraction: f64) -> Aggregate {
    let n_significant = coefs.iter().filter(|c| c.is_some_and(|c| c.is_significant(alpha))).count();
    let signs: Vec<bool> = coefs
        .iter()
        .flatten()
        .filter(|c| c.active && c.estimate != 0.0)
        .map(|c| c.estimate > 0.0)
        .collect();
    let sign_consistent = signs.windows(2).all(|w| w[0] == w[1]);
    let needed = (fraction * coefs.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    Aggregate { n_significant, sign_consistent, robust: sign_consistent && n_significant >= needed }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub slices: Vec<(String, FitResult)>,
    /// Keyed by coefficient name (`W[a,b]`, `Q[a,t]`).
    pub aggregates: BTreeMap<String, Aggregate>,
    pub alpha: f64,
    pub robust_fraction: f64,
}

impl StudyResult {
    /// Aggregates W and Q coefficients by name. A coefficient absent from a
    /// slice (e.g. a topic with no examples there) counts as non-significant.
    pub fn from_fits(slices: Vec<(String, FitResult)>, alpha: f64, robust_fraction: f64) -> Self {
        let mut names: Vec<String> = Vec::new();
        let per_slice: Vec<BTreeMap<String, &Coefficient>> = slices
            .iter()
            .map(|(_, f)| {
                f.named_coefficients()
                    .into_iter()
                    .filter(|(n, _)| n != "beta0")
                    .inspect(|(n, _)| {
                        if !names.contains(n) {
                            names.push(n.clone());
                        }
                    })
                    .collect()
            })
            .collect();
        let aggregates = names
            .into_iter()
            .map(|n| {
                let coefs: Vec<Option<&Coefficient>> = per_slice.iter().map(|m| m.get(&n).copied()).collect();
                let a = aggregate(&coefs, alpha, robust_fraction);
                (n, a)
            })
            .collect();
        StudyResult { slices, aggregates, alpha, robust_fraction }
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn robust(&self, name: &str) -> bool {
        self.aggregates.get(name).is_some_and(|a| a.robust)
    }
}

#[derive(Serialize)]
struct WRow<'a> {
    slice: &'a str,
    feature_from: &'a str,
    feature_to: &'a str,
    estimate: f64,
    se: Option<f64>,
    p: f64,
    robust: bool,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
}

#[derive(Serialize)]
struct QRow<'a> {
    slice: &'a str,
    feature: &'a str,
    topic: &'a str,
    estimate: f64,
    se: Option<f64>,
    p: f64,
    robust: bool,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
}

#[derive(Serialize)]
struct DiagRow<'a> {
    slice: &'a str,
    axis: &'a str,
    kind: &'static str,
    feature_from: &'a str,
    feature_to: &'a str,
    estimate: f64,
    se: Option<f64>,
    p: f64,
    robust: bool,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
}

#[derive(Serialize)]
struct StudySummary<'a> {
    alpha: f64,
    robust_fraction: f64,
    slices: Vec<&'a str>,
    coefficients: &'a BTreeMap<String, Aggregate>,
}

fn ci(c: &Coefficient) -> (Option<f64>, Option<f64>) {
    (c.ci95.map(|x| x[0]), c.ci95.map(|x| x[1]))
}

/// Writes `w_matrix.csv`, `diag.csv`, `q_matrix.csv` (sdt fits only),
/// `study.json` and one `fits/<slice>.json` per slice into `out_dir`.
pub fn emit_tables(result: &StudyResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if result.is_empty() {
        return Err(Error::EmptyStudy);
    }
    let fits_dir = out_dir.join("fits");
    std::fs::create_dir_all(&fits_dir).map_err(|e| Error::io(&fits_dir, e))?;
    let mut written = Vec::new();

    let w_path = out_dir.join("w_matrix.csv");
    let mut w_out = csv::Writer::from_path(&w_path)?;
    let d_path = out_dir.join("diag.csv");
    let mut d_out = csv::Writer::from_path(&d_path)?;
    for (slice, f) in &result.slices {
        for (h, from) in f.feature_names.iter().enumerate() {
            for (k, to) in f.feature_names.iter().enumerate() {
                let c = &f.w[h][k];
                let (ci_low, ci_high) = ci(c);
                w_out.serialize(WRow {
                    slice,
                    feature_from: from,
                    feature_to: to,
                    estimate: c.estimate,
                    se: c.se,
                    p: c.p,
                    robust: result.robust(&format!("W[{from},{to}]")),
                    ci_low,
                    ci_high,
                })?;
            }
        }
        let n_axes = f.feature_names.len() / 2;
        for a in 0..n_axes {
            let axis = format!("{}/{}", f.feature_names[2 * a], f.feature_names[2 * a + 1]);
            for (h, k, kind) in [(0, 0, "within"), (1, 1, "within"), (0, 1, "cross"), (1, 0, "cross")] {
                let (h, k) = (2 * a + h, 2 * a + k);
                let c = &f.w[h][k];
                let (from, to) = (&f.feature_names[h], &f.feature_names[k]);
                let (ci_low, ci_high) = ci(c);
                d_out.serialize(DiagRow {
                    slice,
                    axis: &axis,
                    kind,
                    feature_from: from,
                    feature_to: to,
                    estimate: c.estimate,
                    se: c.se,
                    p: c.p,
                    robust: result.robust(&format!("W[{from},{to}]")),
                    ci_low,
                    ci_high,
                })?;
            }
        }
    }
    w_out.flush().map_err(|e| Error::io(&w_path, e))?;
    d_out.flush().map_err(|e| Error::io(&d_path, e))?;
    written.push(w_path);
    written.push(d_path);

    if result.slices.iter().any(|(_, f)| f.mode == Mode::Sdt) {
        let q_path = out_dir.join("q_matrix.csv");
        let mut q_out = csv::Writer::from_path(&q_path)?;
        for (slice, f) in &result.slices {
            for (h, feature) in f.feature_names.iter().enumerate() {
                for (t, topic) in f.topics.iter().enumerate() {
                    let c = &f.q[h][t];
                    let (ci_low, ci_high) = ci(c);
                    q_out.serialize(QRow {
                        slice,
                        feature,
                        topic,
                        estimate: c.estimate,
                        se: c.se,
                        p: c.p,
                        robust: result.robust(&format!("Q[{feature},{topic}]")),
                        ci_low,
                        ci_high,
                    })?;
                }
            }
        }
        q_out.flush().map_err(|e| Error::io(&q_path, e))?;
        written.push(q_path);
    }

    for (slice, f) in &result.slices {
        let p = fits_dir.join(format!("{slice}.json"));
        f.write(&p)?;
        written.push(p);
    }
    let summary = StudySummary {
        alpha: result.alpha,
        robust_fraction: result.robust_fraction,
        slices: result.slices.iter().map(|(s, _)| s.as_str()).collect(),
        coefficients: &result.aggregates,
    };
    let p = out_dir.join("study.json");
    std::fs::write(&p, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}

/// Rebuilds a study result from the `fits/*.json` written by [`emit_tables`],
/// in the slice order recorded in `study.json`.
pub fn reload(out_dir: &Path) -> Result<StudyResult> {
    #[derive(Deserialize)]
    struct Summary {
        alpha: f64,
        robust_fraction: f64,
        slices: Vec<String>,
    }
    let p = out_dir.join("study.json");
    let s = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let summary: Summary = serde_json::from_str(&s)?;
    let mut fits = Vec::new();
    for slice in summary.slices {
        let f = FitResult::read(&out_dir.join("fits").join(format!("{slice}.json")))?;
        fits.push((slice, f));
    }
    Ok(StudyResult::from_fits(fits, summary.alpha, summary.robust_fraction))
}
